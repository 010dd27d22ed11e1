//! Covariance-matrix calculus for zero-mean Gaussian states.
//!
//! Quadratures are ordered `(x_1, p_1, ..., x_m, p_m)` and normalized so the
//! vacuum covariance matrix is the identity; a thermal mode with mean photon
//! number `N` has covariance `(2N + 1) I`. Entropies are in bits.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

/// Symplectic eigenvalues in `[1 - PHYSICAL_TOL, 1)` are snapped to 1.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Symplectic eigenvalues below `1 - UNPHYSICAL_TOL` are rejected.
pub const UNPHYSICAL_TOL: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-12;
const G_ZERO_CUTOFF: f64 = 1e-15;

/// Entropy in bits of a thermal mode with mean photon number `x`:
/// `g(x) = (x+1) log2(x+1) - x log2(x)`.
///
/// Tiny negative inputs (down to `-PHYSICAL_TOL`) are treated as 0.
pub fn g(x: f64) -> Result<f64> {
    if x.is_nan() || x < -PHYSICAL_TOL {
        return Err(Error::InvalidArgument(format!(
            "g(x) needs x >= 0, got {x:e}"
        )));
    }
    if x < G_ZERO_CUTOFF {
        return Ok(0.0);
    }
    Ok(((x + 1.0) * x.ln_1p() - x * x.ln()) / std::f64::consts::LN_2)
}

/// Standard symplectic form `⊕ [[0, 1], [-1, 0]]` on `m` modes.
pub fn symplectic_form(m: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        omega[(2 * i, 2 * i + 1)] = 1.0;
        omega[(2 * i + 1, 2 * i)] = -1.0;
    }
    omega
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Real symmetric `2m x 2m` covariance matrix of an `m`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    mat: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps a matrix after checking shape and symmetry. The stored matrix is
    /// the symmetric part of the input.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || !mat.nrows().is_multiple_of(2) {
            return Err(Error::ShapeMismatch {
                expected: "square matrix of even size".into(),
                found: format!("{}x{}", mat.nrows(), mat.ncols()),
            });
        }
        let asym = max_abs(&(&mat - mat.transpose()));
        let scale = max_abs(&mat).max(1.0);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        Ok(Self { mat: sym })
    }

    /// Zero-mode state; its entropy is 0.
    pub fn empty() -> Self {
        Self {
            mat: DMatrix::zeros(0, 0),
        }
    }

    pub fn vacuum(m: usize) -> Self {
        Self {
            mat: DMatrix::identity(2 * m, 2 * m),
        }
    }

    /// Product of `m` thermal modes with mean photon number `n`.
    pub fn thermal(n: f64, m: usize) -> Result<Self> {
        if !(n >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "thermal photon number must be >= 0, got {n}"
            )));
        }
        Ok(Self {
            mat: DMatrix::identity(2 * m, 2 * m) * (2.0 * n + 1.0),
        })
    }

    /// Two-mode squeezed vacuum with `n` mean photons per mode, ordered
    /// (signal, idler).
    pub fn tmsv(n: f64) -> Result<Self> {
        if !(n >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "TMSV photon number must be >= 0, got {n}"
            )));
        }
        let a = 2.0 * n + 1.0;
        let c = 2.0 * (n * (n + 1.0)).sqrt();
        let mut mat = DMatrix::zeros(4, 4);
        for i in 0..4 {
            mat[(i, i)] = a;
        }
        mat[(0, 2)] = c;
        mat[(2, 0)] = c;
        mat[(1, 3)] = -c;
        mat[(3, 1)] = -c;
        Ok(Self { mat })
    }

    pub fn modes(&self) -> usize {
        self.mat.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Block-diagonal `self ⊕ other`.
    pub fn direct_sum(&self, other: &CovarianceMatrix) -> CovarianceMatrix {
        CovarianceMatrix {
            mat: block_diag(&self.mat, &other.mat),
        }
    }

    /// Principal submatrix over the listed modes, in the listed order.
    pub fn subsystem(&self, modes: &[usize]) -> Result<CovarianceMatrix> {
        let m = self.modes();
        if let Some(&bad) = modes.iter().find(|&&i| i >= m) {
            return Err(Error::ShapeMismatch {
                expected: format!("mode index < {m}"),
                found: bad.to_string(),
            });
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect();
        let n = idx.len();
        let mat = DMatrix::from_fn(n, n, |r, c| self.mat[(idx[r], idx[c])]);
        Ok(CovarianceMatrix { mat })
    }

    /// Mean photon number of one mode, `(V_xx + V_pp)/4 - 1/2`.
    pub fn mean_photon(&self, mode: usize) -> Result<f64> {
        if mode >= self.modes() {
            return Err(Error::ShapeMismatch {
                expected: format!("mode index < {}", self.modes()),
                found: mode.to_string(),
            });
        }
        let (x, p) = (2 * mode, 2 * mode + 1);
        Ok((self.mat[(x, x)] + self.mat[(p, p)]) / 4.0 - 0.5)
    }

    /// Symplectic spectrum, one value per mode, ascending.
    ///
    /// Computed as the singular values of `V^{1/2} Ω V^{1/2}`, which come in
    /// equal pairs.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        let m = self.modes();
        if m == 0 {
            return Ok(Vec::new());
        }
        let eig = SymmetricEigen::new(self.mat.clone());
        let scale = eig.eigenvalues.amax().max(1.0);
        let min_eval = eig.eigenvalues.min();
        if min_eval <= -1e-12 * scale {
            return Err(Error::UnphysicalState { nu: 0.0 });
        }
        let sqrt_evals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let q = &eig.eigenvectors;
        let root = q * DMatrix::from_diagonal(&sqrt_evals) * q.transpose();
        let a = &root * symplectic_form(m) * &root;
        let ata = a.transpose() * &a;
        let ata = (&ata + ata.transpose()) * 0.5;
        let mut sq: Vec<f64> = SymmetricEigen::new(ata).eigenvalues.iter().copied().collect();
        sq.sort_by(|x, y| x.total_cmp(y));
        let mut nus = Vec::with_capacity(m);
        for pair in sq.chunks(2) {
            let nu = (0.5 * (pair[0] + pair[1])).max(0.0).sqrt();
            if nu < 1.0 - UNPHYSICAL_TOL {
                return Err(Error::UnphysicalState { nu });
            }
            nus.push(nu.max(1.0));
        }
        Ok(nus)
    }

    /// Von Neumann entropy in bits, `Σ g((ν_i - 1)/2)`.
    pub fn entropy(&self) -> Result<f64> {
        self.symplectic_eigenvalues()?
            .into_iter()
            .try_fold(0.0, |acc, nu| Ok(acc + g((nu - 1.0) / 2.0)?))
    }

    /// True when every symplectic eigenvalue is at least `1 - PHYSICAL_TOL`.
    pub fn is_physical(&self) -> bool {
        match self.symplectic_eigenvalues() {
            Ok(nus) => nus.iter().all(|&nu| nu >= 1.0 - PHYSICAL_TOL),
            Err(_) => false,
        }
    }
}

pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Real matrix mapping `2m` input quadratures onto `2n` output quadratures.
///
/// When `n == m` and no modes are discarded this is a symplectic matrix; a
/// transform that discards modes is a row sub-block of one.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticTransform {
    mat: DMatrix<f64>,
}

impl SymplecticTransform {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.nrows().is_multiple_of(2) || !mat.ncols().is_multiple_of(2) {
            return Err(Error::ShapeMismatch {
                expected: "even row and column counts".into(),
                found: format!("{}x{}", mat.nrows(), mat.ncols()),
            });
        }
        Ok(Self { mat })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            mat: DMatrix::identity(2 * m, 2 * m),
        }
    }

    /// Phase rotation `exp(-iθ a†a)`: `a -> e^{-iθ} a`.
    pub fn phase_rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            mat: DMatrix::from_row_slice(2, 2, &[c, s, -s, c]),
        }
    }

    /// Single-mode squeezer `R(θ) S(r)` with `x -> e^{-r} x`, `p -> e^{r} p`
    /// applied before the rotation.
    pub fn squeezer(r: f64, theta: f64) -> Self {
        let sq = DMatrix::from_row_slice(2, 2, &[(-r).exp(), 0.0, 0.0, r.exp()]);
        Self {
            mat: Self::phase_rotation(theta).mat * sq,
        }
    }

    /// Passive linear optics described by a real orthogonal mode matrix.
    pub fn passive(modes: &DMatrix<f64>) -> Self {
        let (n, m) = modes.shape();
        let mut mat = DMatrix::zeros(2 * n, 2 * m);
        for i in 0..n {
            for j in 0..m {
                mat[(2 * i, 2 * j)] = modes[(i, j)];
                mat[(2 * i + 1, 2 * j + 1)] = modes[(i, j)];
            }
        }
        Self { mat }
    }

    /// Beamsplitter array that combines `s` modes into the single mixture
    /// mode `Σ_k a_k w_k`, discarding the remaining ports.
    pub fn beamsplitter_array(weights: &[f64]) -> Result<Self> {
        let norm: f64 = weights.iter().map(|w| w * w).sum();
        if weights.is_empty() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "beamsplitter weights must have unit norm, got {norm}"
            )));
        }
        let row = DMatrix::from_row_slice(1, weights.len(), weights);
        Ok(Self::passive(&row))
    }

    /// Two-mode beamsplitter between modes `i` and `j` of an `m`-mode system.
    pub fn two_mode_beamsplitter(m: usize, i: usize, j: usize, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut modes = DMatrix::identity(m, m);
        modes[(i, i)] = c;
        modes[(i, j)] = s;
        modes[(j, i)] = -s;
        modes[(j, j)] = c;
        Self::passive(&modes)
    }

    /// Acts with a single-mode transform on `mode` of an `m`-mode system.
    pub fn embed(&self, mode: usize, m: usize) -> Result<Self> {
        if self.mat.shape() != (2, 2) || mode >= m {
            return Err(Error::ShapeMismatch {
                expected: format!("2x2 transform on mode < {m}"),
                found: format!("{:?} on mode {mode}", self.mat.shape()),
            });
        }
        let mut mat = DMatrix::identity(2 * m, 2 * m);
        mat.view_mut((2 * mode, 2 * mode), (2, 2)).copy_from(&self.mat);
        Ok(Self { mat })
    }

    pub fn direct_sum(&self, other: &SymplecticTransform) -> Self {
        Self {
            mat: block_diag(&self.mat, &other.mat),
        }
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &SymplecticTransform) -> Result<Self> {
        if self.mat.ncols() != inner.mat.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", self.mat.ncols()),
                found: inner.mat.nrows().to_string(),
            });
        }
        Ok(Self {
            mat: &self.mat * &inner.mat,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn input_modes(&self) -> usize {
        self.mat.ncols() / 2
    }

    pub fn output_modes(&self) -> usize {
        self.mat.nrows() / 2
    }

    /// `max |T Ω T^T - Ω|` for a square transform.
    pub fn symplectic_defect(&self) -> Option<f64> {
        if self.mat.nrows() != self.mat.ncols() {
            return None;
        }
        let m = self.input_modes();
        let omega = symplectic_form(m);
        Some(max_abs(&(&self.mat * &omega * self.mat.transpose() - omega)))
    }
}

/// Computes `T (V ⊕ V_env) T^T`.
pub fn apply_transform(
    t: &SymplecticTransform,
    v: &CovarianceMatrix,
    env: &CovarianceMatrix,
) -> Result<CovarianceMatrix> {
    let total = v.modes() + env.modes();
    if t.input_modes() != total {
        return Err(Error::ShapeMismatch {
            expected: format!("transform over {total} input modes"),
            found: format!("{} input modes", t.input_modes()),
        });
    }
    let joint = v.direct_sum(env);
    let out = &t.mat * joint.mat * t.mat.transpose();
    let out = (&out + out.transpose()) * 0.5;
    Ok(CovarianceMatrix { mat: out })
}

/// Random full symplectic on `m` modes: layers of local squeezers and
/// rotations interleaved with two-mode beamsplitters.
pub fn random_symplectic<R: Rng + ?Sized>(m: usize, rng: &mut R, max_squeeze: f64) -> SymplecticTransform {
    let mut t = SymplecticTransform::identity(m);
    let layers = m.max(1) + 1;
    for _ in 0..layers {
        for k in 0..m {
            let r = rng.gen_range(-max_squeeze..=max_squeeze);
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let local = SymplecticTransform::squeezer(r, th)
                .embed(k, m)
                .expect("mode in range");
            t = local.compose(&t).expect("square");
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let bs = SymplecticTransform::two_mode_beamsplitter(m, i, j, angle);
                t = bs.compose(&t).expect("square");
            }
        }
    }
    t
}

/// Role of a mode inside a channel computation. Senders and outputs are
/// zero-indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeLabel {
    /// Signal mode `A_k` sent into the channel.
    Signal(usize),
    /// Entanglement-assistance mode `A'_k` kept by the receiver.
    Idler(usize),
    /// Channel output `B` (indexed for multi-output channels).
    Output(usize),
    /// Environment mode.
    Env(usize),
}

/// Ordered mode labels with a reverse index.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLayout {
    labels: Vec<ModeLabel>,
    index: HashMap<ModeLabel, usize>,
}

impl ModeLayout {
    pub fn new(labels: Vec<ModeLabel>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            if index.insert(l, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate mode label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    /// `[A_1, A'_1, ..., A_s, A'_s]`.
    pub fn bgmac_input(s: usize) -> Self {
        let labels = (0..s)
            .flat_map(|k| [ModeLabel::Signal(k), ModeLabel::Idler(k)])
            .collect();
        Self::new(labels).expect("unique labels")
    }

    /// `[B, A'_1, ..., A'_s]`.
    pub fn bgmac_output(s: usize) -> Self {
        let labels = std::iter::once(ModeLabel::Output(0))
            .chain((0..s).map(ModeLabel::Idler))
            .collect();
        Self::new(labels).expect("unique labels")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: ModeLabel) -> Option<usize> {
        self.index.get(&label).copied()
    }

    /// Positions of several labels, failing on the first unknown one.
    pub fn indices_of(&self, labels: &[ModeLabel]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&l| {
                self.index_of(l)
                    .ok_or_else(|| Error::InvalidArgument(format!("mode {l:?} not in layout")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Entropy of a geometric photon-number distribution, summed directly.
    fn thermal_entropy_by_series(x: f64) -> f64 {
        let q = x / (1.0 + x);
        let mut p = 1.0 / (1.0 + x);
        let mut s = 0.0;
        for _ in 0..10_000 {
            if p > 0.0 {
                s -= p * p.log2();
            }
            p *= q;
        }
        s
    }

    #[test]
    fn g_identities() {
        assert_eq!(g(0.0).unwrap(), 0.0);
        assert!((g(1.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(g(-5e-10).unwrap(), 0.0);
        assert!(g(-1e-6).is_err());
    }

    #[test]
    fn g_matches_series_oracle() {
        // frozen from the series oracle: 0.483447...
        assert!((thermal_entropy_by_series(0.1) - 0.48344).abs() < 1e-5);
        for &x in &[1e-6, 0.1, 0.5, 1.0, 3.7, 20.0] {
            assert_relative_eq!(g(x).unwrap(), thermal_entropy_by_series(x), max_relative = 1e-10);
        }
        assert!((g(0.1).unwrap() - 0.48344).abs() < 1e-5);
        assert!((g(0.5).unwrap() - 1.37744).abs() < 1e-5);
    }

    #[test]
    fn thermal_and_vacuum_spectra() {
        let v = CovarianceMatrix::thermal(0.5, 1).unwrap();
        assert_relative_eq!(v.symplectic_eigenvalues().unwrap()[0], 2.0, epsilon = 1e-12);
        let vac = CovarianceMatrix::vacuum(1);
        assert_relative_eq!(vac.symplectic_eigenvalues().unwrap()[0], 1.0, epsilon = 1e-12);
        assert!((v.entropy().unwrap() - 1.37744).abs() < 1e-5);
        let t = CovarianceMatrix::thermal(0.1, 3).unwrap();
        assert_relative_eq!(t.matrix()[(4, 4)], 1.2, epsilon = 1e-15);
        assert_relative_eq!(t.entropy().unwrap(), 3.0 * g(0.1).unwrap(), epsilon = 1e-12);
        assert!(CovarianceMatrix::thermal(-0.1, 1).is_err());
        assert_eq!(CovarianceMatrix::empty().entropy().unwrap(), 0.0);
    }

    #[test]
    fn tmsv_blocks_and_purity() {
        let v = CovarianceMatrix::tmsv(1.0).unwrap();
        let c = 2.0 * 2f64.sqrt();
        assert_relative_eq!(v.matrix()[(0, 0)], 3.0);
        assert_relative_eq!(v.matrix()[(0, 2)], c, epsilon = 1e-15);
        assert_relative_eq!(v.matrix()[(1, 3)], -c, epsilon = 1e-15);
        for nu in v.symplectic_eigenvalues().unwrap() {
            assert_relative_eq!(nu, 1.0, epsilon = 1e-9);
        }
        assert!(v.entropy().unwrap().abs() < 1e-9);
        let marginal = v.subsystem(&[0]).unwrap();
        assert_relative_eq!(marginal.entropy().unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(marginal.mean_photon(0).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(CovarianceMatrix::tmsv(0.0).unwrap(), CovarianceMatrix::vacuum(2));
        assert!(CovarianceMatrix::tmsv(-1.0).is_err());
    }

    #[test]
    fn rejects_asymmetric_and_unphysical() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.1;
        assert!(matches!(CovarianceMatrix::new(m), Err(Error::NotSymmetric(_))));
        let squeezed_too_far = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0]));
        let v = CovarianceMatrix::new(squeezed_too_far).unwrap();
        assert!(matches!(v.symplectic_eigenvalues(), Err(Error::UnphysicalState { .. })));
        assert!(!v.is_physical());
    }

    #[test]
    fn identity_transforms() {
        assert_eq!(SymplecticTransform::squeezer(0.0, 0.0), SymplecticTransform::identity(1));
        assert_eq!(SymplecticTransform::phase_rotation(0.0), SymplecticTransform::identity(1));
        let v = CovarianceMatrix::tmsv(0.7).unwrap();
        let out = apply_transform(&SymplecticTransform::identity(2), &v, &CovarianceMatrix::empty()).unwrap();
        assert_relative_eq!(out.matrix(), v.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn squeezed_signal_photon_number() {
        for &(n, r) in &[(0.3, 0.2), (1.0, -0.5), (2.0, 0.9)] {
            let v = CovarianceMatrix::tmsv(n).unwrap();
            let sq = SymplecticTransform::squeezer(r, 0.4).embed(0, 2).unwrap();
            let out = apply_transform(&sq, &v, &CovarianceMatrix::empty()).unwrap();
            let expected = (2.0 * r).cosh() * n + r.sinh().powi(2);
            assert_relative_eq!(out.mean_photon(0).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn discarding_idler_leaves_thermal() {
        let v = CovarianceMatrix::tmsv(0.8).unwrap();
        let mut keep = DMatrix::zeros(2, 4);
        keep[(0, 0)] = 1.0;
        keep[(1, 1)] = 1.0;
        let t = SymplecticTransform::new(keep).unwrap();
        let out = apply_transform(&t, &v, &CovarianceMatrix::empty()).unwrap();
        assert_relative_eq!(out.matrix(), CovarianceMatrix::thermal(0.8, 1).unwrap().matrix(), epsilon = 1e-14);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let v = CovarianceMatrix::vacuum(1);
        let t = SymplecticTransform::identity(2);
        assert!(matches!(
            apply_transform(&t, &v, &CovarianceMatrix::empty()),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(SymplecticTransform::beamsplitter_array(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn layout_indices() {
        let l = ModeLayout::bgmac_output(2);
        assert_eq!(l.index_of(ModeLabel::Output(0)), Some(0));
        assert_eq!(l.index_of(ModeLabel::Idler(1)), Some(2));
        assert!(l.indices_of(&[ModeLabel::Signal(0)]).is_err());
        assert!(ModeLayout::new(vec![ModeLabel::Env(0), ModeLabel::Env(0)]).is_err());
    }

    fn random_thermalish_cm(m: usize, seed: u64) -> CovarianceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = CovarianceMatrix::vacuum(0);
        for _ in 0..m {
            let n = rng.gen_range(0.0..2.0);
            v = v.direct_sum(&CovarianceMatrix::thermal(n, 1).unwrap());
        }
        let t = random_symplectic(m, &mut rng, 0.8);
        apply_transform(&t, &v, &CovarianceMatrix::empty()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn constructed_transforms_are_symplectic(r in -2.0f64..2.0, th in -4.0f64..4.0, seed in 0u64..1000) {
            prop_assert!(SymplecticTransform::squeezer(r, th).symplectic_defect().unwrap() <= 1e-10);
            prop_assert!(SymplecticTransform::phase_rotation(th).symplectic_defect().unwrap() <= 1e-10);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_symplectic(3, &mut rng, 1.0);
            prop_assert!(t.symplectic_defect().unwrap() <= 1e-10);
        }

        #[test]
        fn entropy_is_symplectic_invariant(seed in 0u64..1000) {
            let v = random_thermalish_cm(3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let t = random_symplectic(3, &mut rng, 0.7);
            let w = apply_transform(&t, &v, &CovarianceMatrix::empty()).unwrap();
            prop_assert!((v.entropy().unwrap() - w.entropy().unwrap()).abs() <= 1e-9);
        }

        #[test]
        fn entropy_is_additive(s1 in 0u64..500, s2 in 500u64..1000) {
            let a = random_thermalish_cm(2, s1);
            let b = random_thermalish_cm(1, s2);
            let joint = a.direct_sum(&b).entropy().unwrap();
            prop_assert!((joint - a.entropy().unwrap() - b.entropy().unwrap()).abs() <= 1e-10);
        }

        #[test]
        fn tmsv_is_pure(n in 0.0f64..100.0) {
            let v = CovarianceMatrix::tmsv(n).unwrap();
            for nu in v.symplectic_eigenvalues().unwrap() {
                prop_assert!((nu - 1.0).abs() <= 1e-9);
            }
            prop_assert!((v.subsystem(&[1]).unwrap().mean_photon(0).unwrap() - n).abs() <= 1e-9 * (1.0 + n));
        }
    }
}
