//! One-shot Gaussian rate regions.
//!
//! Each sender prepares a two-mode squeezed vacuum with its idler `A'_k`,
//! optionally squeezing the signal `A_k` by `(r_k, θ_k)` at fixed energy.
//! The receiver's region is bounded by the conditional mutual informations
//! `F_J = I(A'[J]; B | A'[J^c])` for every sender set `J`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::capacity::{coherent_bound, EnergyBudget, SenderSet};
use crate::channel::PhaseInsensitiveBgmac;
use crate::error::{Error, Result};
use crate::gaussian::{apply_transform, random_symplectic, CovarianceMatrix, SymplecticTransform};
use crate::optim::{nelder_mead, NelderMeadConfig};

/// Largest number of senders for which all `2^s` bounds are evaluated.
pub const MAX_REGION_SENDERS: usize = 16;

/// Largest squeezing compatible with mean photon number `n`:
/// `½ ln(1 + 2n + 2√(n(n+1)))`, at which the signal is squeezed vacuum.
pub fn r_star(n: f64) -> f64 {
    0.5 * (1.0 + 2.0 * n + 2.0 * (n * (n + 1.0)).sqrt()).ln()
}

/// Photon number of the TMSV that, once its signal is squeezed by `r`, has
/// signal energy `n`: `(n - sinh² r) / cosh 2r`.
pub fn pre_squeeze_photons(n: f64, r: f64) -> f64 {
    (n - r.sinh().powi(2)) / (2.0 * r).cosh()
}

/// Squeezing applied on top of each sender's TMSV.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEncoding {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
}

impl GaussianEncoding {
    pub fn new(r: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if r.len() != theta.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} squeezing phases", r.len()),
                found: theta.len().to_string(),
            });
        }
        Ok(Self { r, theta })
    }

    /// Unsqueezed product of TMSVs.
    pub fn tmsv(s: usize) -> Self {
        Self {
            r: vec![0.0; s],
            theta: vec![0.0; s],
        }
    }

    pub fn senders(&self) -> usize {
        self.r.len()
    }

    pub fn r_norm(&self) -> f64 {
        self.r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// CM over `[A_1, A'_1, ..., A_s, A'_s]` for a squeezed-TMSV encoding.
pub fn gaussian_input_cm(encoding: &GaussianEncoding, budget: &EnergyBudget) -> Result<CovarianceMatrix> {
    let s = encoding.senders();
    budget.check_senders(s)?;
    let mut cm = CovarianceMatrix::empty();
    for k in 0..s {
        let n = budget.as_slice()[k];
        let (r, theta) = (encoding.r[k], encoding.theta[k]);
        let limit = r_star(n);
        if r.abs() > limit * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::InvalidArgument(format!(
                "sender {k}: |r| = {} exceeds r★ = {limit} for N_S = {n}",
                r.abs()
            )));
        }
        let n_pre = pre_squeeze_photons(n, r).max(0.0);
        let pair = CovarianceMatrix::tmsv(n_pre)?;
        let sq = SymplecticTransform::squeezer(r, theta).direct_sum(&SymplecticTransform::identity(1));
        let m = sq.matrix() * pair.matrix() * sq.matrix().transpose();
        cm = cm.direct_sum(&CovarianceMatrix::new(m)?);
    }
    Ok(cm)
}

/// Entropic quantities of one channel output, shared across sender sets.
struct OutputState {
    s: usize,
    cm: CovarianceMatrix,
    s_idlers: f64,
    s_all: f64,
}

impl OutputState {
    fn new(channel: &PhaseInsensitiveBgmac, encoding: &GaussianEncoding, budget: &EnergyBudget) -> Result<Self> {
        let s = channel.senders();
        if encoding.senders() != s {
            return Err(Error::ShapeMismatch {
                expected: format!("encoding for {s} senders"),
                found: encoding.senders().to_string(),
            });
        }
        let input = gaussian_input_cm(encoding, budget)?;
        let cm = channel.apply_to_cm(&input)?;
        let idlers: Vec<usize> = (1..=s).collect();
        let s_idlers = cm.subsystem(&idlers)?.entropy()?;
        let s_all = cm.entropy()?;
        Ok(Self { s, cm, s_idlers, s_all })
    }

    /// `S(A') + S(B, A'[J^c]) - S(B, A') - S(A'[J^c])`, clamped at 0.
    fn f(&self, set: SenderSet) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let rest: Vec<usize> = set.complement(self.s).members(self.s).iter().map(|k| k + 1).collect();
        let with_b: Vec<usize> = std::iter::once(0).chain(rest.iter().copied()).collect();
        let s_b_rest = self.cm.subsystem(&with_b)?.entropy()?;
        let s_rest = if rest.is_empty() { 0.0 } else { self.cm.subsystem(&rest)?.entropy()? };
        Ok((self.s_idlers + s_b_rest - self.s_all - s_rest).max(0.0))
    }
}

/// `F_J = I(A'[J]; B | A'[J^c])` in bits.
pub fn rate_functional(
    channel: &PhaseInsensitiveBgmac,
    encoding: &GaussianEncoding,
    budget: &EnergyBudget,
    set: SenderSet,
) -> Result<f64> {
    OutputState::new(channel, encoding, budget)?.f(set)
}

/// Achievable rate tuple in bits per channel use.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint(pub Vec<f64>);

impl RatePoint {
    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sum_over(&self, set: SenderSet) -> f64 {
        set.members(self.0.len()).iter().map(|&k| self.0[k]).sum()
    }
}

/// The `2^s` half-space bounds `Σ_{k∈J} R_k <= F_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionConstraints {
    s: usize,
    bounds: Vec<f64>,
}

impl RegionConstraints {
    /// `bounds` is indexed by sender-set mask.
    pub fn new(s: usize, bounds: Vec<f64>) -> Result<Self> {
        if s > MAX_REGION_SENDERS {
            return Err(Error::TooManySenders(s, MAX_REGION_SENDERS));
        }
        if bounds.len() != 1 << s {
            return Err(Error::ShapeMismatch {
                expected: format!("{} bounds", 1usize << s),
                found: bounds.len().to_string(),
            });
        }
        if bounds[0] != 0.0 || bounds.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::InvalidArgument("bounds must be >= 0 with bound(∅) = 0".into()));
        }
        Ok(Self { s, bounds })
    }

    pub fn senders(&self) -> usize {
        self.s
    }

    pub fn bound(&self, set: SenderSet) -> f64 {
        self.bounds[set.mask() as usize]
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Smallest slack `bound(J) - Σ_{k∈J} R_k` over all `J`.
    pub fn min_slack(&self, point: &RatePoint) -> f64 {
        SenderSet::all(self.s)
            .map(|j| self.bound(j) - point.sum_over(j))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_feasible(&self, point: &RatePoint, tol: f64) -> bool {
        point.rates().len() == self.s && point.rates().iter().all(|&r| r >= -tol) && self.min_slack(point) >= -tol
    }

    /// Largest `t` with `t·d` feasible, `min_J bound(J) / Σ_{k∈J} d_k`.
    pub fn max_step(&self, direction: &[f64]) -> f64 {
        SenderSet::all(self.s)
            .filter_map(|j| {
                let d: f64 = j.members(self.s).iter().map(|&k| direction[k]).sum();
                (d > 0.0).then(|| self.bound(j) / d)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every bound of `self` is at most `(1 + rel)` times the
    /// corresponding bound of `outer` (polymatroid containment).
    pub fn is_contained_in(&self, outer: &RegionConstraints, rel: f64) -> bool {
        self.s == outer.s && self.bounds.iter().zip(&outer.bounds).all(|(a, b)| *a <= b * (1.0 + rel) + 1e-15)
    }
}

/// All `2^s` bounds of the one-shot region of an encoding.
pub fn one_shot_region(
    channel: &PhaseInsensitiveBgmac,
    encoding: &GaussianEncoding,
    budget: &EnergyBudget,
) -> Result<RegionConstraints> {
    let s = channel.senders();
    if s > MAX_REGION_SENDERS {
        return Err(Error::TooManySenders(s, MAX_REGION_SENDERS));
    }
    let out = OutputState::new(channel, encoding, budget)?;
    let bounds = SenderSet::all(s).map(|j| out.f(j)).collect::<Result<Vec<f64>>>()?;
    RegionConstraints::new(s, bounds)
}

/// Settings of the multi-start simplex search along a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Total starts: `r = 0` plus `starts - 1` random ones.
    pub starts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iter: 200,
            rel_tol: 1e-8,
            seed: 0,
        }
    }
}

/// Outcome of one simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub initial: GaussianEncoding,
    pub encoding: GaussianEncoding,
    pub step: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖r‖₂` of the best vertex after each iteration.
    pub trace: Vec<f64>,
}

/// Best encoding found along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayResult {
    pub direction: Vec<f64>,
    /// `R_2 / R_1` for two senders.
    pub slope: Option<f64>,
    pub encoding: GaussianEncoding,
    pub point: RatePoint,
    pub constraints: RegionConstraints,
    pub step: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub starts: Vec<StartOutcome>,
}

/// Maps optimizer coordinates `(v_1..v_s, θ_2..θ_s)` to an encoding with
/// `r_k = r★_k sin v_k`, which keeps every iterate physical.
fn decode(x: &[f64], limits: &[f64]) -> GaussianEncoding {
    let s = limits.len();
    let r = (0..s).map(|k| limits[k] * x[k].sin()).collect();
    let theta = std::iter::once(0.0).chain(x[s..].iter().copied()).collect();
    GaussianEncoding { r, theta }
}

fn step_length(
    channel: &PhaseInsensitiveBgmac,
    encoding: &GaussianEncoding,
    budget: &EnergyBudget,
    direction: &[f64],
) -> Result<(f64, RegionConstraints)> {
    let region = one_shot_region(channel, encoding, budget)?;
    let t = region.max_step(direction);
    Ok((t, region))
}

/// Maximizes the feasible step `t` with `t·direction` inside the one-shot
/// region, over squeezed-TMSV encodings with `θ_1 = 0`.
pub fn ray_maximize(
    channel: &PhaseInsensitiveBgmac,
    budget: &EnergyBudget,
    direction: &[f64],
    config: &OptimizerConfig,
) -> Result<RayResult> {
    let s = channel.senders();
    budget.check_senders(s)?;
    if direction.len() != s {
        return Err(Error::ShapeMismatch {
            expected: format!("{s}-component direction"),
            found: direction.len().to_string(),
        });
    }
    if direction.iter().any(|&d| !(d >= 0.0)) || direction.iter().all(|&d| d == 0.0) {
        return Err(Error::InvalidArgument(format!("direction must be non-negative and nonzero: {direction:?}")));
    }
    let limits: Vec<f64> = budget.as_slice().iter().map(|&n| r_star(n)).collect();
    let dim = 2 * s - 1;
    let mut steps = vec![0.25; s];
    steps.extend(std::iter::repeat_n(0.5, s - 1));
    let nm = NelderMeadConfig {
        max_iter: config.max_iter,
        rel_tol: config.rel_tol,
        ..NelderMeadConfig::default()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut outcomes = Vec::with_capacity(config.starts.max(1));
    for start in 0..config.starts.max(1) {
        let x0: Vec<f64> = if start == 0 {
            vec![0.0; dim]
        } else {
            (0..dim)
                .map(|i| {
                    if i < s {
                        rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2)
                    } else {
                        rng.gen_range(0.0..std::f64::consts::PI)
                    }
                })
                .collect()
        };
        let mut failure = None;
        let mut trace = Vec::new();
        let res = nelder_mead(
            |x| match step_length(channel, &decode(x, &limits), budget, direction) {
                Ok((t, _)) => -t,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            &x0,
            &steps,
            &nm,
            |_, x, _| trace.push(decode(x, &limits).r_norm()),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        outcomes.push(StartOutcome {
            initial: decode(&x0, &limits),
            encoding: decode(&res.x, &limits),
            step: -res.f,
            iterations: res.iterations,
            converged: res.converged,
            trace,
        });
    }

    // largest step wins; near-ties go to the least squeezed encoding
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        let b = &outcomes[best];
        let tie = (o.step - b.step).abs() <= 1e-9 * b.step.abs().max(o.step.abs());
        if (tie && o.encoding.r_norm() < b.encoding.r_norm()) || (!tie && o.step > b.step) {
            best = i;
        }
    }
    let chosen = outcomes[best].clone();
    let (t, constraints) = step_length(channel, &chosen.encoding, budget, direction)?;
    let t = if t.is_finite() { t } else { 0.0 };
    let point = RatePoint(direction.iter().map(|d| d * t).collect());
    let slope = (s == 2 && direction[0] > 0.0).then(|| direction[1] / direction[0]);
    Ok(RayResult {
        direction: direction.to_vec(),
        slope,
        encoding: chosen.encoding,
        point,
        constraints,
        step: t,
        iterations: chosen.iterations,
        converged: chosen.converged,
        trace: chosen.trace,
        starts: outcomes,
    })
}

/// Rays and convex hull of a two-sender Gaussian region.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionRegion {
    /// Polar angles `φ` in the coherent-normalized rate plane.
    pub angles: Vec<f64>,
    pub rays: Vec<RayResult>,
    /// Counter-clockwise hull of the ray points and the origin.
    pub hull: Vec<[f64; 2]>,
}

/// Optimizes `n_rays` rays with normalized polar angles `φ_i = i·(π/2)/n`
/// and returns their points and convex hull. Supports one or two senders.
pub fn union_region(
    channel: &PhaseInsensitiveBgmac,
    budget: &EnergyBudget,
    n_rays: usize,
    config: &OptimizerConfig,
) -> Result<UnionRegion> {
    let s = channel.senders();
    budget.check_senders(s)?;
    if s > 2 {
        return Err(Error::TooManySenders(s, 2));
    }
    if n_rays == 0 {
        return Err(Error::InvalidArgument("need at least one ray".into()));
    }
    let scale = |k: usize| -> Result<f64> {
        let c = coherent_bound(channel, budget, SenderSet::singleton(k))?;
        Ok(if c > 0.0 { c } else { 1.0 })
    };
    let (angles, directions): (Vec<f64>, Vec<Vec<f64>>) = if s == 1 {
        (vec![0.0], vec![vec![1.0]])
    } else {
        let (c1, c2) = (scale(0)?, scale(1)?);
        (0..n_rays)
            .map(|i| {
                let phi = i as f64 * std::f64::consts::FRAC_PI_2 / n_rays as f64;
                (phi, vec![c1 * phi.cos(), c2 * phi.sin()])
            })
            .unzip()
    };
    let rays = directions
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let cfg = OptimizerConfig {
                seed: config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)),
                ..config.clone()
            };
            ray_maximize(channel, budget, d, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<[f64; 2]> = rays
        .iter()
        .map(|r| [r.point.0[0], r.point.0.get(1).copied().unwrap_or(0.0)])
        .collect();
    Ok(UnionRegion {
        angles,
        hull: convex_hull(&pts),
        rays,
    })
}

/// Counter-clockwise convex hull (monotone chain) of `points` and the origin.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.push([0.0, 0.0]);
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Finite-difference gradient of `F_J` in the squeezing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Gradient {
    pub fn r_norm(&self) -> f64 {
        self.r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Central differences with step `h`; `r` steps that would leave
/// `[-r★, r★]` fall back to one-sided differences.
pub fn gradient_f_j(
    channel: &PhaseInsensitiveBgmac,
    encoding: &GaussianEncoding,
    budget: &EnergyBudget,
    set: SenderSet,
    h: f64,
) -> Result<Gradient> {
    let s = encoding.senders();
    budget.check_senders(s)?;
    let f = |e: &GaussianEncoding| rate_functional(channel, e, budget, set);
    let f0 = f(encoding)?;
    let mut r_grad = vec![0.0; s];
    let mut t_grad = vec![0.0; s];
    for k in 0..s {
        let limit = r_star(budget.as_slice()[k]);
        let r = encoding.r[k];
        let can_up = r + h <= limit;
        let can_down = r - h >= -limit;
        let shifted = |dr: f64| -> Result<f64> {
            let mut e = encoding.clone();
            e.r[k] += dr;
            f(&e)
        };
        r_grad[k] = match (can_up, can_down) {
            (true, true) => (shifted(h)? - shifted(-h)?) / (2.0 * h),
            (true, false) => (shifted(h)? - f0) / h,
            (false, true) => (f0 - shifted(-h)?) / h,
            (false, false) => 0.0,
        };
        let mut up = encoding.clone();
        up.theta[k] += h;
        let mut down = encoding.clone();
        down.theta[k] -= h;
        t_grad[k] = (f(&up)? - f(&down)?) / (2.0 * h);
    }
    Ok(Gradient { r: r_grad, theta: t_grad })
}

/// Two channel uses' worth of input over, per sender `k`, the modes
/// `[A_k^(1), A_k^(2), A'_k^(1), A'_k^(2)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoUseInput {
    s: usize,
    cm: CovarianceMatrix,
}

impl TwoUseInput {
    pub fn new(s: usize, cm: CovarianceMatrix) -> Result<Self> {
        if cm.modes() != 4 * s {
            return Err(Error::ShapeMismatch {
                expected: format!("{} modes", 4 * s),
                found: cm.modes().to_string(),
            });
        }
        if !cm.is_physical() {
            return Err(Error::UnphysicalState {
                nu: cm.symplectic_eigenvalues().ok().and_then(|v| v.first().copied()).unwrap_or(0.0),
            });
        }
        Ok(Self { s, cm })
    }

    /// Independent TMSVs per use: `n1[k]` photons in use 1, `n2[k]` in use 2.
    pub fn product(n1: &[f64], n2: &[f64]) -> Result<Self> {
        Self::correlated(n1, n2, &vec![SymplecticTransform::identity(2); n1.len()])
    }

    /// Per-sender TMSVs followed by a two-mode symplectic `mixers[k]` on
    /// `(A_k^(1), A_k^(2))`.
    pub fn correlated(n1: &[f64], n2: &[f64], mixers: &[SymplecticTransform]) -> Result<Self> {
        let s = n1.len();
        if n2.len() != s || mixers.len() != s {
            return Err(Error::ShapeMismatch {
                expected: format!("{s} entries per list"),
                found: format!("{} and {}", n2.len(), mixers.len()),
            });
        }
        let mut cm = CovarianceMatrix::empty();
        for k in 0..s {
            // [A1, A'1, A2, A'2] -> [A1, A2, A'1, A'2]
            let pairs = CovarianceMatrix::tmsv(n1[k])?.direct_sum(&CovarianceMatrix::tmsv(n2[k])?);
            let ordered = pairs.subsystem(&[0, 2, 1, 3])?;
            let t = mixers[k].direct_sum(&SymplecticTransform::identity(2));
            let m = t.matrix() * ordered.matrix() * t.matrix().transpose();
            cm = cm.direct_sum(&CovarianceMatrix::new(m)?);
        }
        Self::new(s, cm)
    }

    /// Random photon numbers in `[0, max_photons)` and random two-mode
    /// symplectic mixers with squeezing up to `max_squeeze`.
    pub fn random<R: Rng + ?Sized>(s: usize, rng: &mut R, max_photons: f64, max_squeeze: f64) -> Result<Self> {
        let n1: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..max_photons)).collect();
        let n2: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..max_photons)).collect();
        let mixers: Vec<_> = (0..s).map(|_| random_symplectic(2, rng, max_squeeze)).collect();
        Self::correlated(&n1, &n2, &mixers)
    }

    pub fn senders(&self) -> usize {
        self.s
    }

    pub fn cm(&self) -> &CovarianceMatrix {
        &self.cm
    }
}

/// Output modes `[B or A^(1) signals, B or A^(2) signals, A' idlers]` when
/// `channels[u]` (if any) acts on use `u`.
fn two_use_output(
    input: &TwoUseInput,
    channels: [Option<&PhaseInsensitiveBgmac>; 2],
) -> Result<(CovarianceMatrix, [Vec<usize>; 2], Vec<usize>)> {
    let s = input.s;
    let in_modes = 4 * s + 4;
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut next = 0;
    for (u, ch) in channels.iter().enumerate() {
        match ch {
            Some(ch) => {
                let dil = ch.dilation()?;
                let d = dil.matrix();
                let mut row = DMatrix::zeros(2, 2 * in_modes);
                for k in 0..s {
                    let col = 2 * (4 * k + u);
                    row.view_mut((0, col), (2, 2)).copy_from(&d.view((0, 4 * k), (2, 2)));
                }
                let env = 2 * (4 * s + 2 * u);
                row.view_mut((0, env), (2, 4)).copy_from(&d.view((0, 4 * s), (2, 4)));
                rows.push(row);
                groups[u].push(next);
                next += 1;
            }
            None => {
                for k in 0..s {
                    let mut row = DMatrix::zeros(2, 2 * in_modes);
                    let col = 2 * (4 * k + u);
                    row[(0, col)] = 1.0;
                    row[(1, col + 1)] = 1.0;
                    rows.push(row);
                    groups[u].push(next);
                    next += 1;
                }
            }
        }
    }
    let mut idlers = Vec::with_capacity(2 * s);
    for k in 0..s {
        for u in 0..2 {
            let mut row = DMatrix::zeros(2, 2 * in_modes);
            let col = 2 * (4 * k + 2 + u);
            row[(0, col)] = 1.0;
            row[(1, col + 1)] = 1.0;
            rows.push(row);
            idlers.push(next);
            next += 1;
        }
    }
    let mut t = DMatrix::zeros(2 * next, 2 * in_modes);
    for (i, row) in rows.iter().enumerate() {
        t.view_mut((2 * i, 0), (2, 2 * in_modes)).copy_from(row);
    }
    let out = apply_transform(&SymplecticTransform::new(t)?, &input.cm, &CovarianceMatrix::vacuum(4))?;
    Ok((out, groups, idlers))
}

fn mutual_information(cm: &CovarianceMatrix, x: &[usize], y: &[usize]) -> Result<f64> {
    let xy: Vec<usize> = x.iter().chain(y).copied().collect();
    Ok(cm.subsystem(x)?.entropy()? + cm.subsystem(y)?.entropy()? - cm.subsystem(&xy)?.entropy()?)
}

/// Joint two-use EA rate `I(A'; B_1 B_2)` against the sum of per-use EA
/// rates, each computed with the other use's signals as part of the
/// purifying reference. Returns `(lhs, rhs)`.
pub fn subadditivity_sample(
    channel_1: &PhaseInsensitiveBgmac,
    channel_2: &PhaseInsensitiveBgmac,
    input: &TwoUseInput,
) -> Result<(f64, f64)> {
    for ch in [channel_1, channel_2] {
        if ch.senders() != input.s {
            return Err(Error::ShapeMismatch {
                expected: format!("{}-sender channel", input.s),
                found: ch.senders().to_string(),
            });
        }
    }
    let (joint, groups, idlers) = two_use_output(input, [Some(channel_1), Some(channel_2)])?;
    let bs: Vec<usize> = groups.concat();
    let lhs = mutual_information(&joint, &idlers, &bs)?;

    let mut rhs = 0.0;
    for u in 0..2 {
        let chans = if u == 0 { [Some(channel_1), None] } else { [None, Some(channel_2)] };
        let (cm, groups, idlers) = two_use_output(input, chans)?;
        let reference: Vec<usize> = groups[1 - u].iter().chain(&idlers).copied().collect();
        rhs += mutual_information(&cm, &groups[u], &reference)?;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{ea_bgc_capacity, ea_total_rate_capacity};
    use crate::channel::{interference_bgmac, BgcClass, PointToPointBgc};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one_third_split(class: BgcClass, ns: [f64; 2]) -> (PhaseInsensitiveBgmac, EnergyBudget) {
        let (w2, nb) = match class {
            BgcClass::ThermalLoss => (0.1, 0.1),
            BgcClass::Amplifier => (1.1, 0.2),
            BgcClass::ConjugateAmplifier => (0.1, 0.2),
            BgcClass::Awgn => (1.0, 0.1),
        };
        let psi = PointToPointBgc::of_class(class, w2, nb).unwrap();
        let ch = interference_bgmac(&[1.0 / 3.0, 2.0 / 3.0], &psi).unwrap();
        (ch, EnergyBudget::new(ns.to_vec()).unwrap())
    }

    #[test]
    fn r_star_gives_squeezed_vacuum() {
        for &n in &[0.0, 1e-3, 0.5, 2.0, 10.0] {
            let r = r_star(n);
            assert!(pre_squeeze_photons(n, r).abs() < 1e-12);
            assert!((r.sinh().powi(2) - n).abs() < 1e-10 * (1.0 + n));
        }
        assert_eq!(pre_squeeze_photons(0.7, 0.0), 0.7);
    }

    #[test]
    fn input_cm_has_budgeted_energy() {
        let budget = EnergyBudget::new(vec![0.3, 2.0]).unwrap();
        let enc = GaussianEncoding::new(vec![0.2, -r_star(2.0)], vec![0.4, 1.3]).unwrap();
        let cm = gaussian_input_cm(&enc, &budget).unwrap();
        assert!((cm.mean_photon(0).unwrap() - 0.3).abs() < 1e-10);
        assert!((cm.mean_photon(2).unwrap() - 2.0).abs() < 1e-10);
        // squeezed vacuum signal carries no idler correlations
        assert!(cm.mean_photon(3).unwrap().abs() < 1e-10);
        assert!(cm.entropy().unwrap() < 1e-9);

        let tmsv = gaussian_input_cm(&GaussianEncoding::tmsv(2), &budget).unwrap();
        let expected = CovarianceMatrix::tmsv(0.3).unwrap().direct_sum(&CovarianceMatrix::tmsv(2.0).unwrap());
        assert!((tmsv.matrix() - expected.matrix()).amax() < 1e-12);

        let bad = GaussianEncoding::new(vec![1.0, 0.0], vec![0.0; 2]).unwrap();
        assert!(gaussian_input_cm(&bad, &budget).is_err());
    }

    #[test]
    fn single_sender_matches_closed_form() {
        let ch = PointToPointBgc::new(false, 0.6, 0.2).unwrap().as_bgmac().unwrap();
        let budget = EnergyBudget::new(vec![0.8]).unwrap();
        let f = rate_functional(&ch, &GaussianEncoding::tmsv(1), &budget, SenderSet::full(1)).unwrap();
        assert!((f - ea_bgc_capacity(false, 0.8, 0.6, 0.2).unwrap()).abs() < 1e-10);
        assert_eq!(rate_functional(&ch, &GaussianEncoding::tmsv(1), &budget, SenderSet::EMPTY).unwrap(), 0.0);
    }

    #[test]
    fn pentagon_total_edge_is_total_capacity() {
        let (ch, budget) = one_third_split(BgcClass::ThermalLoss, [1.0, 2.0]);
        let reg = one_shot_region(&ch, &GaussianEncoding::tmsv(2), &budget).unwrap();
        assert_eq!(reg.bound(SenderSet::full(2)), ea_total_rate_capacity(&ch, &budget).unwrap());
        assert!(reg.bound(SenderSet::singleton(0)) <= reg.bound(SenderSet::full(2)));
        assert!(reg.bound(SenderSet::singleton(0)) + reg.bound(SenderSet::singleton(1)) >= reg.bound(SenderSet::full(2)));

        let zero = one_shot_region(&ch, &GaussianEncoding::tmsv(2), &EnergyBudget::zeros(2)).unwrap();
        assert!(zero.bounds().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn squeezing_degeneracy() {
        let (ch, budget) = one_third_split(BgcClass::Amplifier, [0.5, 0.8]);
        let a = GaussianEncoding::new(vec![0.2, 0.3], vec![0.0, 0.4]).unwrap();
        let b = GaussianEncoding::new(vec![0.2, -0.3], vec![0.0, 0.4 + std::f64::consts::FRAC_PI_2]).unwrap();
        for j in SenderSet::all(2) {
            let fa = rate_functional(&ch, &a, &budget, j).unwrap();
            let fb = rate_functional(&ch, &b, &budget, j).unwrap();
            assert!((fa - fb).abs() < 1e-10);
        }
    }

    #[test]
    fn sender_permutation_equivariance() {
        let ch = PhaseInsensitiveBgmac::from_real(&[0.3, 0.5], &[false, true], 0.4).unwrap();
        let swapped = PhaseInsensitiveBgmac::from_real(&[0.5, 0.3], &[true, false], 0.4).unwrap();
        let budget = EnergyBudget::new(vec![0.4, 1.1]).unwrap();
        let budget_sw = EnergyBudget::new(vec![1.1, 0.4]).unwrap();
        let enc = GaussianEncoding::new(vec![0.1, -0.2], vec![0.3, 0.9]).unwrap();
        let enc_sw = GaussianEncoding::new(vec![-0.2, 0.1], vec![0.9, 0.3]).unwrap();
        let a = one_shot_region(&ch, &enc, &budget).unwrap();
        let b = one_shot_region(&swapped, &enc_sw, &budget_sw).unwrap();
        assert!((a.bound(SenderSet::singleton(0)) - b.bound(SenderSet::singleton(1))).abs() < 1e-10);
        assert!((a.bound(SenderSet::full(2)) - b.bound(SenderSet::full(2))).abs() < 1e-10);
    }

    #[test]
    fn max_step_and_feasibility() {
        let reg = RegionConstraints::new(2, vec![0.0, 1.0, 2.0, 2.5]).unwrap();
        assert_relative_eq!(reg.max_step(&[1.0, 0.0]), 1.0);
        assert_relative_eq!(reg.max_step(&[1.0, 1.0]), 1.0);
        assert_relative_eq!(reg.max_step(&[0.0, 1.0]), 2.0);
        assert!(reg.is_feasible(&RatePoint(vec![0.5, 2.0]), 1e-12));
        assert!(!reg.is_feasible(&RatePoint(vec![1.0, 2.0]), 1e-12));
        assert!(RegionConstraints::new(2, vec![0.1, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn hull_of_pentagon_corners() {
        let hull = convex_hull(&[[1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.0, 1.0]]);
        assert_eq!(hull, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.0, 1.0]]);
    }

    #[test]
    fn gradient_vanishes_at_tmsv() {
        for class in [BgcClass::ThermalLoss, BgcClass::ConjugateAmplifier] {
            let (ch, budget) = one_third_split(class, [1.0, 2.0]);
            for j in SenderSet::all(2) {
                let grad = gradient_f_j(&ch, &GaussianEncoding::tmsv(2), &budget, j, 1e-4).unwrap();
                assert!(grad.r_norm() <= 1e-5, "{class:?} {j:?}: {grad:?}");
            }
        }
    }

    #[test]
    fn gradient_symmetric_under_swap_and_phase_free_for_identity() {
        let ch = PhaseInsensitiveBgmac::from_real(&[0.5f64.sqrt(), 0.5f64.sqrt()], &[false, false], 0.2).unwrap();
        let budget = EnergyBudget::new(vec![0.7, 0.7]).unwrap();
        let enc = GaussianEncoding::new(vec![0.15, 0.15], vec![0.0, 0.0]).unwrap();
        let g = gradient_f_j(&ch, &enc, &budget, SenderSet::full(2), 1e-4).unwrap();
        assert!((g.r[0] - g.r[1]).abs() < 1e-8);

        let id = PointToPointBgc::new(false, 1.0, 0.0).unwrap().as_bgmac().unwrap();
        let b1 = EnergyBudget::new(vec![0.5]).unwrap();
        let enc = GaussianEncoding::new(vec![0.3], vec![0.8]).unwrap();
        let g = gradient_f_j(&id, &enc, &b1, SenderSet::full(1), 1e-4).unwrap();
        assert!(g.theta[0].abs() < 1e-9);
    }

    #[test]
    fn one_sided_difference_at_boundary() {
        let (ch, budget) = one_third_split(BgcClass::ThermalLoss, [0.2, 0.2]);
        let enc = GaussianEncoding::new(vec![r_star(0.2), 0.0], vec![0.0, 0.0]).unwrap();
        let g = gradient_f_j(&ch, &enc, &budget, SenderSet::singleton(0), 1e-4).unwrap();
        assert!(g.r[0].is_finite());
    }

    #[test]
    fn ray_recovers_tmsv_for_single_sender() {
        let ch = PointToPointBgc::new(false, 0.4, 0.3).unwrap().as_bgmac().unwrap();
        let budget = EnergyBudget::new(vec![0.5]).unwrap();
        let ray = ray_maximize(&ch, &budget, &[1.0], &OptimizerConfig::default()).unwrap();
        let c = ea_bgc_capacity(false, 0.5, 0.4, 0.3).unwrap();
        assert!((ray.point.0[0] - c).abs() <= 1e-8 * c, "{} vs {c}", ray.point.0[0]);
        assert!(ray.encoding.r_norm() <= 1e-3);
        assert!(ray.constraints.is_feasible(&ray.point, 1e-9));

        let zero = ray_maximize(&ch, &EnergyBudget::zeros(1), &[1.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(zero.step, 0.0);
        assert!(ray_maximize(&ch, &budget, &[0.0], &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn weak_illumination_ray_converges_to_tmsv() {
        let (ch, budget) = one_third_split(BgcClass::ThermalLoss, [1e-3, 2e-3]);
        let cfg = OptimizerConfig::default();
        let ray = ray_maximize(&ch, &budget, &[1.0, 1.0], &cfg).unwrap();
        assert!(ray.encoding.r_norm() <= 1e-3, "{:?}", ray.encoding);
        let reg0 = one_shot_region(&ch, &GaussianEncoding::tmsv(2), &budget).unwrap();
        let t0 = reg0.max_step(&[1.0, 1.0]);
        assert!((ray.step - t0).abs() <= 1e-3 * t0);
        assert_eq!(ray.trace.len(), ray.iterations + 1);
        // deterministic per seed
        assert_eq!(ray, ray_maximize(&ch, &budget, &[1.0, 1.0], &cfg).unwrap());
    }

    #[test]
    fn union_region_contains_coherent_region() {
        let (ch, budget) = one_third_split(BgcClass::ThermalLoss, [1.0, 2.0]);
        let cfg = OptimizerConfig { starts: 2, ..OptimizerConfig::default() };
        let region = union_region(&ch, &budget, 6, &cfg).unwrap();
        assert_eq!(region.rays.len(), 6);
        assert_eq!(region.rays[0].direction[1], 0.0);
        for ray in &region.rays {
            assert!(ray.constraints.is_feasible(&ray.point, 1e-9));
            let coh_region = RegionConstraints::new(
                2,
                SenderSet::all(2).map(|j| coherent_bound(&ch, &budget, j).unwrap()).collect(),
            )
            .unwrap();
            assert!(ray.step >= coh_region.max_step(&ray.direction) - 1e-12);
        }
        assert!(region.hull.contains(&[0.0, 0.0]));

        let single = PointToPointBgc::new(false, 0.4, 0.3).unwrap().as_bgmac().unwrap();
        let one = union_region(&single, &EnergyBudget::new(vec![0.5]).unwrap(), 1, &cfg).unwrap();
        assert_eq!(one.rays.len(), 1);
    }

    #[test]
    fn subadditivity_product_is_tight() {
        let (ch, _) = one_third_split(BgcClass::ThermalLoss, [1.0, 1.0]);
        let input = TwoUseInput::product(&[0.4, 0.9], &[1.2, 0.3]).unwrap();
        let (lhs, rhs) = subadditivity_sample(&ch, &ch, &input).unwrap();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} {rhs}");
        let b1 = EnergyBudget::new(vec![0.4, 0.9]).unwrap();
        let b2 = EnergyBudget::new(vec![1.2, 0.3]).unwrap();
        let expected = ea_total_rate_capacity(&ch, &b1).unwrap() + ea_total_rate_capacity(&ch, &b2).unwrap();
        assert!((rhs - expected).abs() < 1e-10);
    }

    #[test]
    fn subadditivity_strict_for_cross_use_squeezing() {
        let (ch, _) = one_third_split(BgcClass::ThermalLoss, [1.0, 1.0]);
        let mut t = DMatrix::identity(4, 4);
        let (c, sh) = (0.8f64.cosh(), 0.8f64.sinh());
        // two-mode squeezer on (A^(1), A^(2))
        t[(0, 2)] = sh;
        t[(2, 0)] = sh;
        t[(1, 3)] = -sh;
        t[(3, 1)] = -sh;
        for i in 0..4 {
            t[(i, i)] = c;
        }
        let mix = SymplecticTransform::new(t).unwrap();
        assert!(mix.symplectic_defect().unwrap() < 1e-12);
        let input = TwoUseInput::correlated(&[0.5, 0.5], &[0.5, 0.5], &[mix.clone(), mix]).unwrap();
        let (lhs, rhs) = subadditivity_sample(&ch, &ch, &input).unwrap();
        assert!(lhs < rhs - 1e-6, "{lhs} {rhs}");
    }

    #[test]
    fn subadditivity_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ch1, _) = one_third_split(BgcClass::Amplifier, [1.0, 1.0]);
        let (ch2, _) = one_third_split(BgcClass::ConjugateAmplifier, [1.0, 1.0]);
        for _ in 0..20 {
            let input = TwoUseInput::random(2, &mut rng, 1.5, 0.5).unwrap();
            let (lhs, rhs) = subadditivity_sample(&ch1, &ch2, &input).unwrap();
            assert!(lhs <= rhs + 1e-9, "{lhs} {rhs}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gauge_symmetry(
            r1 in -0.3f64..0.3, r2 in -0.3f64..0.3,
            t1 in 0.0f64..3.0, t2 in 0.0f64..3.0, phase in 0.0f64..6.0,
            d1: bool, d2: bool,
        ) {
            let w2 = 0.3 + 0.2;
            let nb: f64 = if d1 || d2 { 0.55 } else { 0.05 };
            let ch = PhaseInsensitiveBgmac::from_real(&[0.3f64.sqrt(), 0.2f64.sqrt()], &[d1, d2], nb.max(w2 - 1.0)).unwrap();
            let budget = EnergyBudget::new(vec![0.6, 0.9]).unwrap();
            let a = GaussianEncoding::new(vec![r1, r2], vec![t1, t2]).unwrap();
            let sign = |d: bool| if d { -1.0 } else { 1.0 };
            let b = GaussianEncoding::new(vec![r1, r2], vec![t1 + sign(d1) * phase, t2 + sign(d2) * phase]).unwrap();
            for j in SenderSet::all(2) {
                let fa = rate_functional(&ch, &a, &budget, j).unwrap();
                let fb = rate_functional(&ch, &b, &budget, j).unwrap();
                prop_assert!((fa - fb).abs() < 1e-10);
            }
        }

        #[test]
        fn squeezed_pentagon_nested_in_tmsv_pentagon(
            r1 in -1.0f64..1.0, r2 in -1.0f64..1.0, t2 in 0.0f64..3.2,
        ) {
            let (ch, budget) = one_third_split(BgcClass::ThermalLoss, [1.0, 2.0]);
            let enc = GaussianEncoding::new(vec![r1 * r_star(1.0), r2 * r_star(2.0)], vec![0.0, t2]).unwrap();
            let reg = one_shot_region(&ch, &enc, &budget).unwrap();
            let reg0 = one_shot_region(&ch, &GaussianEncoding::tmsv(2), &budget).unwrap();
            prop_assert!(reg.is_contained_in(&reg0, 1e-3));
        }
    }
}
