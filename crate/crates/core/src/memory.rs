//! Causal thermal-loss memory channels.
//!
//! Each of `N` channel uses couples the signal `a^(k)` and a fresh thermal
//! environment mode `e^(k)` to a memory mode `m` that persists between uses:
//!
//! ```text
//! m^(k+1) =  √(εγ) m^(k) + √(1-γ) a^(k) + √(γ(1-ε)) e^(k)
//! b^(k)   = -√(ε(1-γ)) m^(k) + √γ a^(k) - √((1-ε)(1-γ)) e^(k)
//! ```
//!
//! The memory starts in the same thermal state as the environment. A
//! singular value decomposition of the signal transfer matrix unravels the
//! `N` uses into independent thermal-loss channels, over which the senders
//! distribute their energy.

use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::capacity::{coherent_bound, ea_total_rate_capacity, EnergyBudget, SenderSet};
use crate::channel::{check_ratios, interference_bgmac, PhaseInsensitiveBgmac, PointToPointBgc};
use crate::error::{Error, Result};
use crate::gaussian::{apply_transform, CovarianceMatrix, SymplecticTransform};
use crate::optim::golden_section_max;

const TAU_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalMemoryParams {
    /// Noise–memory transmissivity.
    pub epsilon: f64,
    /// Signal–memory transmissivity.
    pub gamma: f64,
    /// Number of channel uses.
    pub n: usize,
    /// Thermal photon number of environment and memory.
    pub nb: f64,
}

impl CausalMemoryParams {
    pub fn new(epsilon: f64, gamma: f64, n: usize, nb: f64) -> Result<Self> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(epsilon) || !unit(gamma) {
            return Err(Error::InvalidArgument(format!(
                "ε and γ must lie in [0, 1], got ε = {epsilon}, γ = {gamma}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one channel use".into()));
        }
        if !(nb >= 0.0) || !nb.is_finite() {
            return Err(Error::InvalidArgument(format!("N_B must be finite and >= 0, got {nb}")));
        }
        Ok(Self { epsilon, gamma, n, nb })
    }
}

/// Unrolled transfer matrices: `b = W' a + K (e^(1), ..., e^(N), m^(1))`.
pub fn unroll(params: &CausalMemoryParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let CausalMemoryParams { epsilon: eps, gamma, n, .. } = *params;
    let mut w = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n + 1);
    // memory-mode expansion over [a^(1..N), e^(1..N), m^(1)]
    let mut mem_a = vec![0.0; n];
    let mut mem_e = vec![0.0; n];
    let mut mem_m = 1.0;
    let (c_mm, c_ma, c_me) = ((eps * gamma).sqrt(), (1.0 - gamma).sqrt(), (gamma * (1.0 - eps)).sqrt());
    let (c_bm, c_ba, c_be) = (-(eps * (1.0 - gamma)).sqrt(), gamma.sqrt(), -((1.0 - eps) * (1.0 - gamma)).sqrt());
    for step in 0..n {
        for l in 0..n {
            w[(step, l)] = c_bm * mem_a[l];
            k[(step, l)] = c_bm * mem_e[l];
        }
        k[(step, n)] = c_bm * mem_m;
        w[(step, step)] += c_ba;
        k[(step, step)] += c_be;

        for l in 0..n {
            mem_a[l] *= c_mm;
            mem_e[l] *= c_mm;
        }
        mem_m *= c_mm;
        mem_a[step] += c_ma;
        mem_e[step] += c_me;
    }
    (w, k)
}

/// `γ_k = γ + [1 - (εγ)^{k-1}] ε(1-γ)² / (1 - εγ)` for one-based `k`, with
/// the geometric sum written out when `εγ = 1`.
fn gamma_k(eps: f64, gamma: f64, k: usize) -> f64 {
    let q = eps * gamma;
    let geometric = if (1.0 - q).abs() < 1e-12 {
        (k - 1) as f64
    } else {
        (1.0 - q.powi(k as i32 - 1)) / (1.0 - q)
    };
    gamma + geometric * eps * (1.0 - gamma).powi(2)
}

/// Closed-form commutation matrix
/// `Ω_kk' = δ_kk' - (1 - γ_min(k,k')) √(εγ)^|k-k'|`, equal to `W' W'^T`.
pub fn commutation_matrix(params: &CausalMemoryParams) -> DMatrix<f64> {
    let CausalMemoryParams { epsilon: eps, gamma, n, .. } = *params;
    let root = (eps * gamma).sqrt();
    DMatrix::from_fn(n, n, |i, j| {
        let kmin = i.min(j) + 1;
        let diag = if i == j { 1.0 } else { 0.0 };
        diag - (1.0 - gamma_k(eps, gamma, kmin)) * root.powi((i as i32 - j as i32).abs())
    })
}

/// Independent thermal-loss channels `Ψ_d` with `U W' V^T = diag(√τ_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnravelledChannels {
    /// Transmissivities, descending.
    pub tau: Vec<f64>,
    /// Dark counts `(1 - τ_d) N_B`.
    pub nb: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl UnravelledChannels {
    pub fn channel(&self, d: usize) -> Result<PointToPointBgc> {
        PointToPointBgc::new(false, self.tau[d], self.nb[d])
    }

    /// Largest off-diagonal entry of `U (I - Ω) U^T`; zero when the rotated
    /// output noise is uncorrelated across sub-channels.
    pub fn noise_offdiagonal(&self, params: &CausalMemoryParams) -> f64 {
        let n = params.n;
        let rotated = &self.u * (DMatrix::identity(n, n) - commutation_matrix(params)) * self.u.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(rotated[(i, j)].abs());
                }
            }
        }
        worst
    }
}

/// SVD unravelling of the unrolled memory channel.
pub fn unravel(params: &CausalMemoryParams) -> Result<UnravelledChannels> {
    let n = params.n;
    let (w, _) = unroll(params);
    let svd = w.clone().svd(true, true);
    let (u_svd, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(Error::InvalidArgument("SVD of the transfer matrix failed".into())),
    };
    // rows of U are the output combinations β_d = Σ U_dk b_k
    let mut u = u_svd.transpose();
    let mut v = v_t;
    polish_svd(&w, &mut u, &mut v);
    let m = &u * &w * v.transpose();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[(b, b)].abs().total_cmp(&m[(a, a)].abs()));
    let tau: Vec<f64> = order.iter().map(|&i| m[(i, i)].powi(2).min(1.0)).collect();
    if let Some(&t) = tau.iter().find(|&&t| !(-TAU_TOL..=1.0 + TAU_TOL).contains(&t)) {
        return Err(Error::UnphysicalChannel(format!("transmissivity {t} outside [0, 1]")));
    }
    // flip signs so every retained singular value is non-negative
    let u = DMatrix::from_fn(n, n, |d, k| u[(order[d], k)] * m[(order[d], order[d])].signum());
    let v = DMatrix::from_fn(n, n, |d, k| v[(order[d], k)]);
    let nb = tau.iter().map(|t| (1.0 - t) * params.nb).collect();
    Ok(UnravelledChannels { tau, nb, u, v })
}

/// Two-sided Jacobi sweeps on the nearly diagonal `U W V^T`. The bidiagonal
/// SVD can leave off-diagonal residue around 1e-9 when a singular value is
/// close to zero; each 2×2 rotation pair removes it quadratically.
fn polish_svd(w: &DMatrix<f64>, u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = w.nrows();
    let mut m = &*u * w * v.transpose();
    for _ in 0..20 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[(p, q)].abs()).max(m[(q, p)].abs());
            }
        }
        if off <= f64::EPSILON * m.amax() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)] == 0.0 && m[(q, p)] == 0.0 {
                    continue;
                }
                let sub = Matrix2::new(m[(p, p)], m[(p, q)], m[(q, p)], m[(q, q)]);
                let svd = sub.svd(true, true);
                let (a, bt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
                // rows p, q of M, U ← A^T ·; columns p, q of M ← · B; rows of V ← B^T ·
                rotate_rows(&mut m, p, q, &a.transpose());
                rotate_rows(u, p, q, &a.transpose());
                rotate_cols(&mut m, p, q, &bt);
                rotate_rows(v, p, q, &bt);
            }
        }
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, r: &Matrix2<f64>) {
    for c in 0..m.ncols() {
        let (x, y) = (m[(p, c)], m[(q, c)]);
        m[(p, c)] = r[(0, 0)] * x + r[(0, 1)] * y;
        m[(q, c)] = r[(1, 0)] * x + r[(1, 1)] * y;
    }
}

/// Columns `p, q` of `m` ← `(m_p, m_q) · r^T`.
fn rotate_cols(m: &mut DMatrix<f64>, p: usize, q: usize, r: &Matrix2<f64>) {
    for row in 0..m.nrows() {
        let (x, y) = (m[(row, p)], m[(row, q)]);
        m[(row, p)] = r[(0, 0)] * x + r[(0, 1)] * y;
        m[(row, q)] = r[(1, 0)] * x + r[(1, 1)] * y;
    }
}

/// Applies the memory channel to the first `N` modes of `input` (the
/// signals of uses `1..N`), leaving any further modes untouched.
pub fn apply_memory_channel(params: &CausalMemoryParams, input: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    let n = params.n;
    let m = input.modes();
    if m < n {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {n} modes"),
            found: m.to_string(),
        });
    }
    let (w, k) = unroll(params);
    let mut t = DMatrix::zeros(2 * m, 2 * (m + n + 1));
    let mut put = |row: usize, col: usize, c: f64| {
        t[(2 * row, 2 * col)] = c;
        t[(2 * row + 1, 2 * col + 1)] = c;
    };
    for i in 0..n {
        for j in 0..n {
            put(i, j, w[(i, j)]);
        }
        for j in 0..=n {
            put(i, m + j, k[(i, j)]);
        }
    }
    for i in n..m {
        put(i, i, 1.0);
    }
    apply_transform(&SymplecticTransform::new(t)?, input, &CovarianceMatrix::thermal(params.nb, n + 1)?)
}

/// Per-sender energy split across the unravelled sub-channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAllocation {
    /// `s × N` photon numbers.
    pub photons: DMatrix<f64>,
}

impl EnergyAllocation {
    pub fn equal(budget: &EnergyBudget, n: usize) -> Self {
        let s = budget.len();
        Self {
            photons: DMatrix::from_fn(s, n, |k, _| budget.as_slice()[k] / n as f64),
        }
    }

    pub fn column(&self, d: usize) -> Result<EnergyBudget> {
        EnergyBudget::new(self.photons.column(d).iter().map(|x| x.max(0.0)).collect())
    }

    /// Whether rows respect the budget and entries are non-negative.
    pub fn is_feasible(&self, budget: &EnergyBudget, tol: f64) -> bool {
        self.photons.iter().all(|&x| x >= 0.0)
            && self
                .photons
                .row_iter()
                .zip(budget.as_slice())
                .all(|(row, &cap)| row.sum() <= cap * (1.0 + tol) + tol)
    }
}

/// Optimized total rate and the allocation achieving it.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRate {
    pub rate: f64,
    pub allocation: EnergyAllocation,
    pub sweeps: usize,
    pub converged: bool,
}

/// Rate functional on a single sub-channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubchannelRate {
    /// EA total rate with product-TMSV inputs.
    EntanglementAssisted,
    /// Coherent-state total rate.
    Coherent,
}

struct Subchannels {
    channels: Vec<PhaseInsensitiveBgmac>,
    kind: SubchannelRate,
}

impl Subchannels {
    fn new(params: &CausalMemoryParams, eta: &[f64], kind: SubchannelRate) -> Result<Self> {
        check_ratios(eta)?;
        let un = unravel(params)?;
        let channels = (0..params.n)
            .map(|d| interference_bgmac(eta, &un.channel(d)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels, kind })
    }

    fn rate(&self, d: usize, photons: &[f64]) -> Result<f64> {
        let budget = EnergyBudget::new(photons.iter().map(|x| x.max(0.0)).collect())?;
        let ch = &self.channels[d];
        match self.kind {
            SubchannelRate::EntanglementAssisted => ea_total_rate_capacity(ch, &budget),
            SubchannelRate::Coherent => coherent_bound(ch, &budget, SenderSet::full(ch.senders())),
        }
    }

    fn total(&self, alloc: &DMatrix<f64>) -> Result<f64> {
        (0..alloc.ncols()).try_fold(0.0, |acc, d| {
            let col: Vec<f64> = alloc.column(d).iter().copied().collect();
            Ok(acc + self.rate(d, &col)?)
        })
    }
}

/// Settings of the allocation search.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationConfig {
    /// Starts: the equal split plus `starts - 1` random splits.
    pub starts: usize,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            starts: 3,
            max_sweeps: 100,
            rel_tol: 1e-12,
            seed: 0,
        }
    }
}

/// Coordinate ascent over pairwise energy transfers between sub-channels,
/// each transfer optimized by golden-section search.
fn ascend(sub: &Subchannels, budget: &EnergyBudget, start: DMatrix<f64>, cfg: &AllocationConfig) -> Result<MemoryRate> {
    let (s, n) = start.shape();
    let mut alloc = start;
    let mut col_rates: Vec<f64> = (0..n)
        .map(|d| sub.rate(d, &alloc.column(d).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut total: f64 = col_rates.iter().sum();
    let mut failure = None;
    let mut sweeps = 0;
    let mut converged = n == 1 || budget.total() == 0.0;
    while !converged && sweeps < cfg.max_sweeps {
        sweeps += 1;
        let before = total;
        for k in 0..s {
            let cap = budget.as_slice()[k];
            if cap == 0.0 {
                continue;
            }
            for d1 in 0..n {
                for d2 in (d1 + 1)..n {
                    let pool = alloc[(k, d1)] + alloc[(k, d2)];
                    if pool <= 0.0 {
                        continue;
                    }
                    let mut c1: Vec<f64> = alloc.column(d1).iter().copied().collect();
                    let mut c2: Vec<f64> = alloc.column(d2).iter().copied().collect();
                    let mut pair = |x: f64| -> f64 {
                        c1[k] = x;
                        c2[k] = pool - x;
                        match (sub.rate(d1, &c1), sub.rate(d2, &c2)) {
                            (Ok(a), Ok(b)) => a + b,
                            (Err(e), _) | (_, Err(e)) => {
                                failure.get_or_insert(e);
                                f64::NEG_INFINITY
                            }
                        }
                    };
                    let current = col_rates[d1] + col_rates[d2];
                    let (x, best) = golden_section_max(&mut pair, 0.0, pool, 1e-10 * cap.max(1e-300));
                    if best > current {
                        alloc[(k, d1)] = x;
                        alloc[(k, d2)] = pool - x;
                        c1[k] = x;
                        c2[k] = pool - x;
                        col_rates[d1] = sub.rate(d1, &c1)?;
                        col_rates[d2] = sub.rate(d2, &c2)?;
                    }
                }
            }
        }
        if let Some(e) = failure.take() {
            return Err(e);
        }
        total = col_rates.iter().sum();
        if total - before <= cfg.rel_tol * total.abs().max(1e-300) {
            converged = true;
        }
    }
    Ok(MemoryRate {
        rate: total,
        allocation: EnergyAllocation { photons: alloc },
        sweeps,
        converged,
    })
}

fn optimize(
    params: &CausalMemoryParams,
    eta: &[f64],
    budget: &EnergyBudget,
    kind: SubchannelRate,
    cfg: &AllocationConfig,
) -> Result<MemoryRate> {
    budget.check_senders(eta.len())?;
    let sub = Subchannels::new(params, eta, kind)?;
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<MemoryRate> = None;
    for start in 0..cfg.starts.max(1) {
        let init = if start == 0 {
            EnergyAllocation::equal(budget, n).photons
        } else {
            let mut m = DMatrix::zeros(eta.len(), n);
            for k in 0..eta.len() {
                let weights: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
                let sum: f64 = weights.iter().sum();
                for d in 0..n {
                    m[(k, d)] = budget.as_slice()[k] * weights[d] / sum;
                }
            }
            m
        };
        let res = ascend(&sub, budget, init, cfg)?;
        let better = match &best {
            None => true,
            Some(b) => res.rate > b.rate + 1e-14 * b.rate.abs(),
        };
        if better {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Maximal EA total rate over all energy allocations across the unravelled
/// sub-channels.
pub fn memory_total_rate(
    params: &CausalMemoryParams,
    eta: &[f64],
    budget: &EnergyBudget,
    cfg: &AllocationConfig,
) -> Result<MemoryRate> {
    optimize(params, eta, budget, SubchannelRate::EntanglementAssisted, cfg)
}

/// Maximal coherent-state total rate over energy allocations.
pub fn memory_coherent_benchmark(
    params: &CausalMemoryParams,
    eta: &[f64],
    budget: &EnergyBudget,
    cfg: &AllocationConfig,
) -> Result<MemoryRate> {
    optimize(params, eta, budget, SubchannelRate::Coherent, cfg)
}

/// Exhaustive search over allocations on a grid of `steps` increments per
/// sender. Intended for small `N` and `s` as a cross-check.
pub fn grid_allocation(
    params: &CausalMemoryParams,
    eta: &[f64],
    budget: &EnergyBudget,
    kind: SubchannelRate,
    steps: usize,
) -> Result<MemoryRate> {
    budget.check_senders(eta.len())?;
    let (s, n) = (eta.len(), params.n);
    if n > 3 || s > 3 {
        return Err(Error::InvalidArgument(format!("grid search supports N, s <= 3, got N = {n}, s = {s}")));
    }
    let sub = Subchannels::new(params, eta, kind)?;
    // compositions of `steps` into `n` parts
    fn compositions(steps: usize, parts: usize) -> Vec<Vec<usize>> {
        if parts == 1 {
            return vec![vec![steps]];
        }
        (0..=steps)
            .flat_map(|first| {
                compositions(steps - first, parts - 1).into_iter().map(move |mut rest| {
                    rest.insert(0, first);
                    rest
                })
            })
            .collect()
    }
    let comps = compositions(steps, n);
    let mut best: Option<MemoryRate> = None;
    let mut idx = vec![0usize; s];
    loop {
        let alloc = DMatrix::from_fn(s, n, |k, d| budget.as_slice()[k] * comps[idx[k]][d] as f64 / steps as f64);
        let rate = sub.total(&alloc)?;
        if best.as_ref().is_none_or(|b| rate > b.rate) {
            best = Some(MemoryRate {
                rate,
                allocation: EnergyAllocation { photons: alloc },
                sweeps: 0,
                converged: true,
            });
        }
        // odometer over senders
        let mut k = 0;
        while k < s {
            idx[k] += 1;
            if idx[k] < comps.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == s {
            break;
        }
    }
    Ok(best.expect("non-empty grid"))
}
