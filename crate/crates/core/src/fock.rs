//! Truncated Fock-space oracle for small single-sender instances.
//!
//! States are real density matrices over a product of truncated modes; all
//! states reached here (TMSVs through beamsplitters with thermal
//! environments) have real matrix elements in the Fock basis. Mixed indices
//! are row-major: the last mode varies fastest.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest probability mass that truncation may discard.
pub const TAIL_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    dims: Vec<usize>,
    rho: DMatrix<f64>,
    tail: f64,
}

impl FockState {
    pub fn new(dims: Vec<usize>, rho: DMatrix<f64>, tail: f64) -> Result<Self> {
        let size: usize = dims.iter().product();
        if rho.shape() != (size, size) {
            return Err(Error::ShapeMismatch {
                expected: format!("{size}x{size} density matrix"),
                found: format!("{:?}", rho.shape()),
            });
        }
        Ok(Self { dims, rho, tail })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    /// Upper bound on the probability mass lost to truncation.
    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }

    fn digits(&self, index: usize) -> Vec<usize> {
        self.strides().iter().zip(&self.dims).map(|(s, d)| (index / s) % d).collect()
    }

    pub fn mean_photon(&self, mode: usize) -> Result<f64> {
        self.check_mode(mode)?;
        let stride = self.strides()[mode];
        let d = self.dims[mode];
        Ok((0..self.rho.nrows()).map(|i| ((i / stride) % d) as f64 * self.rho[(i, i)]).sum())
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("mode index < {}", self.dims.len()),
                found: mode.to_string(),
            });
        }
        Ok(())
    }

    /// Reduced state on `keep` (in ascending mode order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<FockState> {
        for &m in keep {
            self.check_mode(m)?;
        }
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let kept_dims: Vec<usize> = keep.iter().map(|&m| self.dims[m]).collect();
        let size: usize = kept_dims.iter().product();
        let kept_index = |digits: &[usize]| keep.iter().fold(0, |acc, &m| acc * self.dims[m] + digits[m]);
        let traced: Vec<usize> = (0..self.dims.len()).filter(|m| !keep.contains(m)).collect();
        let mut out = DMatrix::zeros(size, size);
        let n = self.rho.nrows();
        let digits: Vec<Vec<usize>> = (0..n).map(|i| self.digits(i)).collect();
        for i in 0..n {
            for j in 0..n {
                let v = self.rho[(i, j)];
                if v == 0.0 {
                    continue;
                }
                if traced.iter().all(|&m| digits[i][m] == digits[j][m]) {
                    out[(kept_index(&digits[i]), kept_index(&digits[j]))] += v;
                }
            }
        }
        FockState::new(kept_dims, out, self.tail)
    }

    /// Von Neumann entropy in bits of the trace-normalized state.
    pub fn entropy(&self) -> Result<f64> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidArgument(format!("state has trace {tr}")));
        }
        let mut s = 0.0;
        for block in connected_blocks(&self.rho) {
            let sub = DMatrix::from_fn(block.len(), block.len(), |a, b| self.rho[(block[a], block[b])] / tr);
            let evals = if block.len() == 1 {
                vec![sub[(0, 0)]]
            } else {
                SymmetricEigen::new(sub).eigenvalues.iter().copied().collect()
            };
            s -= evals.iter().filter(|&&l| l > 1e-300).map(|&l| l * l.log2()).sum::<f64>();
        }
        Ok(s)
    }
}

/// Index groups of a block-diagonal (up to permutation) symmetric matrix.
fn connected_blocks(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)] != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        if m[(i, i)] != 0.0 || (0..n).any(|j| m[(i, j)] != 0.0) {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
    }
    groups.into_values().collect()
}

/// TMSV `Σ_n c_n |n⟩|n⟩` with `c_n ∝ (N/(N+1))^{n/2}`, truncated at `dim`
/// photons per mode and renormalized. Modes are `[A, A']`.
pub fn fock_tmsv(n: f64, dim: usize) -> Result<FockState> {
    if !(n >= 0.0) || dim == 0 {
        return Err(Error::InvalidArgument(format!("need N >= 0 and dim >= 1, got {n}, {dim}")));
    }
    let q = n / (n + 1.0);
    let tail = q.powi(dim as i32);
    let amps: Vec<f64> = (0..dim).map(|k| q.powf(k as f64 / 2.0)).collect();
    let norm: f64 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut psi = vec![0.0; dim * dim];
    for k in 0..dim {
        psi[k * dim + k] = amps[k] / norm;
    }
    let v = nalgebra::DVector::from_vec(psi);
    FockState::new(vec![dim, dim], &v * v.transpose(), tail)
}

/// Photon-number amplitudes `⟨k, m| U |n, j⟩` of the beamsplitter
/// `a† -> t a† + r e†`, `e† -> -r a† + t e†`, indexed `[k][m]`.
fn beamsplitter_amplitudes(n: usize, j: usize, t: f64, r: f64) -> Vec<Vec<f64>> {
    let total = n + j;
    let mut state = vec![vec![0.0; total + 1]; total + 1];
    state[0][0] = 1.0;
    // apply one creation operator at a time, dividing by √i as we go so the
    // result is normalized by √(n! j!) without forming factorials
    let apply = |ca: f64, ce: f64, i: usize, state: &mut Vec<Vec<f64>>| {
        let mut next = vec![vec![0.0; total + 1]; total + 1];
        let scale = 1.0 / (i as f64).sqrt();
        for k in 0..=total {
            for m in 0..=(total - k) {
                let v = state[k][m];
                if v == 0.0 {
                    continue;
                }
                if k < total && ca != 0.0 {
                    next[k + 1][m] += ca * ((k + 1) as f64).sqrt() * v * scale;
                }
                if m < total && ce != 0.0 {
                    next[k][m + 1] += ce * ((m + 1) as f64).sqrt() * v * scale;
                }
            }
        }
        *state = next;
    };
    for i in 1..=n {
        apply(t, r, i, &mut state);
    }
    for i in 1..=j {
        apply(-r, t, i, &mut state);
    }
    state
}

/// Thermal-loss channel of transmissivity `tau` on `mode`: a beamsplitter
/// with a thermal environment of `n_env` photons truncated at `dim_env`,
/// followed by tracing out the environment. The environment distribution is
/// not renormalized, so the output trace records the discarded mass.
pub fn fock_thermal_loss_apply(state: &FockState, mode: usize, tau: f64, n_env: f64, dim_env: usize) -> Result<FockState> {
    state.check_mode(mode)?;
    if !(0.0..=1.0).contains(&tau) || !(n_env >= 0.0) || dim_env == 0 {
        return Err(Error::InvalidArgument(format!(
            "need τ in [0, 1], N_env >= 0, dim_env >= 1; got {tau}, {n_env}, {dim_env}"
        )));
    }
    let q = n_env / (n_env + 1.0);
    let env_tail = q.powi(dim_env as i32);
    let tail = state.tail + env_tail;
    if tail > TAIL_LIMIT {
        return Err(Error::Truncation { tail, limit: TAIL_LIMIT });
    }
    let probs: Vec<f64> = (0..dim_env).map(|j| q.powi(j as i32) / (n_env + 1.0)).collect();
    let (t, r) = (tau.sqrt(), (1.0 - tau).sqrt());
    let d_in = state.dims[mode];
    let d_out = d_in + dim_env - 1;
    // amps[n][j][k][m]
    let amps: Vec<Vec<Vec<Vec<f64>>>> = (0..d_in)
        .map(|n| (0..dim_env).map(|j| beamsplitter_amplitudes(n, j, t, r)).collect())
        .collect();

    let mut out_dims = state.dims.clone();
    out_dims[mode] = d_out;
    let in_strides = state.strides();
    let mut out_strides = vec![1; out_dims.len()];
    for i in (0..out_dims.len().saturating_sub(1)).rev() {
        out_strides[i] = out_strides[i + 1] * out_dims[i + 1];
    }
    let size: usize = out_dims.iter().product();
    let remap = |idx: usize, photons: usize| -> usize {
        let digits = state.digits(idx);
        digits
            .iter()
            .enumerate()
            .map(|(mi, &dg)| out_strides[mi] * if mi == mode { photons } else { dg })
            .sum()
    };
    let signal = |idx: usize| (idx / in_strides[mode]) % d_in;

    let mut rho = DMatrix::zeros(size, size);
    let n_in = state.rho.nrows();
    for a in 0..n_in {
        for b in 0..n_in {
            let v = state.rho[(a, b)];
            if v == 0.0 {
                continue;
            }
            let (na, nb) = (signal(a), signal(b));
            for (j, &p) in probs.iter().enumerate() {
                let (amp_a, amp_b) = (&amps[na][j], &amps[nb][j]);
                // environment output m shared by both sides
                let m_max = (na + j).min(nb + j);
                for m in 0..=m_max {
                    let (ka, kb) = (na + j - m, nb + j - m);
                    let c = amp_a[ka][m] * amp_b[kb][m];
                    if c != 0.0 {
                        rho[(remap(a, ka), remap(b, kb))] += p * c * v;
                    }
                }
            }
        }
    }
    FockState::new(out_dims, rho, tail)
}

/// `I(X; Y) = S(X) + S(Y) - S(XY)` between two disjoint mode groups.
pub fn fock_mutual_information(state: &FockState, x: &[usize], y: &[usize]) -> Result<f64> {
    if x.iter().any(|m| y.contains(m)) {
        return Err(Error::InvalidArgument("mutual-information partition overlaps".into()));
    }
    let xy: Vec<usize> = x.iter().chain(y).copied().collect();
    let sx = state.partial_trace(x)?.entropy()?;
    let sy = state.partial_trace(y)?.entropy()?;
    let sxy = if xy.len() == state.dims.len() {
        state.entropy()?
    } else {
        state.partial_trace(&xy)?.entropy()?
    };
    Ok(sx + sy - sxy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{ea_bgc_capacity, EnergyBudget, SenderSet};
    use crate::channel::PointToPointBgc;
    use crate::gaussian::g;
    use crate::region::{rate_functional, GaussianEncoding};

    #[test]
    fn tmsv_basics() {
        let vac = fock_tmsv(0.0, 4).unwrap();
        assert_eq!(vac.rho()[(0, 0)], 1.0);
        assert_eq!(vac.tail_mass(), 0.0);

        let st = fock_tmsv(0.5, 20).unwrap();
        assert!(st.tail_mass() < 1e-8);
        assert!((st.trace() - 1.0).abs() < 1e-14);
        assert!((st.mean_photon(0).unwrap() - 0.5).abs() < 1e-8);
        let i = fock_mutual_information(&st, &[0], &[1]).unwrap();
        assert!((i - 2.0 * g(0.5).unwrap()).abs() < 1e-7);
        assert!(st.entropy().unwrap().abs() < 1e-10);
    }

    #[test]
    fn beamsplitter_amplitudes_are_unitary() {
        let (t, r) = (0.6f64.sqrt(), 0.4f64.sqrt());
        for n in 0..6 {
            for j in 0..6 {
                let a = beamsplitter_amplitudes(n, j, t, r);
                let norm: f64 = a.iter().flatten().map(|x| x * x).sum();
                assert!((norm - 1.0).abs() < 1e-12);
                for (k, row) in a.iter().enumerate() {
                    for (m, &v) in row.iter().enumerate() {
                        if k + m != n + j {
                            assert_eq!(v, 0.0);
                        }
                    }
                }
            }
        }
        // |1,0> -> t|1,0> + r|0,1>
        let a = beamsplitter_amplitudes(1, 0, t, r);
        assert!((a[1][0] - t).abs() < 1e-15 && (a[0][1] - r).abs() < 1e-15);
    }

    #[test]
    fn channel_limits() {
        let st = fock_tmsv(0.3, 16).unwrap();
        let same = fock_thermal_loss_apply(&st, 0, 1.0, 0.0, 1).unwrap();
        assert!((same.rho() - st.rho()).amax() < 1e-15);

        let gone = fock_thermal_loss_apply(&st, 0, 0.0, 0.0, 1).unwrap();
        assert!(gone.mean_photon(0).unwrap().abs() < 1e-15);
        assert!((gone.mean_photon(1).unwrap() - st.mean_photon(1).unwrap()).abs() < 1e-14);

        assert!(matches!(
            fock_thermal_loss_apply(&st, 0, 0.5, 1.0, 3),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn first_moment_bookkeeping() {
        let (tau, nb) = (0.7, 0.15);
        let n_env = nb / (1.0 - tau);
        let st = fock_tmsv(0.4, 16).unwrap();
        let out = fock_thermal_loss_apply(&st, 0, tau, n_env, 22).unwrap();
        let expected = tau * st.mean_photon(0).unwrap() + nb;
        assert!((out.mean_photon(0).unwrap() - expected).abs() < 1e-7);
        assert!((out.trace() - (1.0 - n_env.powi(22) / (n_env + 1.0).powi(22))).abs() < 1e-10);
    }

    #[test]
    fn product_state_has_no_information() {
        let v = nalgebra::DVector::from_vec(vec![0.6, 0.8]);
        let a = &v * v.transpose();
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.7, 0.3]));
        let rho = a.kronecker(&b);
        let st = FockState::new(vec![2, 2], rho, 0.0).unwrap();
        assert!(fock_mutual_information(&st, &[0], &[1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn agrees_with_gaussian_pipeline() {
        for &(tau, nb, ns) in &[(0.6, 0.2, 0.5), (0.3, 0.05, 0.2), (0.9, 0.1, 0.8)] {
            let n_env = nb / (1.0 - tau);
            let st = fock_tmsv(ns, 25).unwrap();
            let out = fock_thermal_loss_apply(&st, 0, tau, n_env, 30).unwrap();
            let fock = fock_mutual_information(&out, &[1], &[0]).unwrap();
            let ch = PointToPointBgc::new(false, tau, nb).unwrap().as_bgmac().unwrap();
            let budget = EnergyBudget::new(vec![ns]).unwrap();
            let gauss = rate_functional(&ch, &GaussianEncoding::tmsv(1), &budget, SenderSet::full(1)).unwrap();
            assert!((fock - gauss).abs() <= 1e-3, "τ={tau}: {fock} vs {gauss}");
            assert!((gauss - ea_bgc_capacity(false, ns, tau, nb).unwrap()).abs() < 1e-9);
        }
    }
}
