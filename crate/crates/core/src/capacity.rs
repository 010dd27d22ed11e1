//! Closed-form capacities and outer bounds.
//!
//! Covers the coherent-state region, the unassisted and entanglement-assisted
//! (EA) outer bounds under the two noise conditions, the EA capacity of a
//! single-mode channel, and the EA total-rate capacity achieved by a product
//! of two-mode squeezed vacua.

use crate::channel::PhaseInsensitiveBgmac;
use crate::error::{Error, Result};
use crate::gaussian::g;
use crate::region::{rate_functional, GaussianEncoding};

const COND_TOL: f64 = 1e-12;

/// Per-sender mean photon number budgets `N_{S,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBudget(Vec<f64>);

impl EnergyBudget {
    pub fn new(ns: Vec<f64>) -> Result<Self> {
        if ns.iter().any(|&n| !(n >= 0.0) || !n.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "photon budgets must be finite and >= 0: {ns:?}"
            )));
        }
        Ok(Self(ns))
    }

    pub fn zeros(s: usize) -> Self {
        Self(vec![0.0; s])
    }

    /// `total * split_k` for each sender.
    pub fn split(total: f64, split: &[f64]) -> Result<Self> {
        Self::new(split.iter().map(|f| f * total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub(crate) fn check_senders(&self, s: usize) -> Result<()> {
        if self.0.len() != s {
            return Err(Error::ShapeMismatch {
                expected: format!("{s} photon budgets"),
                found: self.0.len().to_string(),
            });
        }
        Ok(())
    }
}

/// Subset `J` of the senders `{0, .., s-1}`, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SenderSet(u32);

impl SenderSet {
    pub const EMPTY: SenderSet = SenderSet(0);

    pub fn from_mask(mask: u32) -> Self {
        Self(mask)
    }

    pub fn full(s: usize) -> Self {
        Self(((1u64 << s) - 1) as u32)
    }

    pub fn singleton(k: usize) -> Self {
        Self(1 << k)
    }

    pub fn from_members(members: &[usize]) -> Self {
        Self(members.iter().fold(0, |m, &k| m | (1 << k)))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, k: usize) -> bool {
        self.0 & (1 << k) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn members(self, s: usize) -> Vec<usize> {
        (0..s).filter(|&k| self.contains(k)).collect()
    }

    pub fn complement(self, s: usize) -> Self {
        Self(!self.0 & Self::full(s).0)
    }

    pub fn is_subset_of(self, other: SenderSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// All `2^s` subsets in mask order.
    pub fn all(s: usize) -> impl Iterator<Item = SenderSet> {
        (0..(1u32 << s)).map(SenderSet)
    }
}

/// Noise condition under which an outer bound was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseCondition {
    /// `N_B >= max{|w|^2 - 1, 0} + Σ |w_k|^2 δ_k`
    A,
    /// `N_B >= |w|^2 + Σ |w_k|^2 (1 - δ_k)`
    B,
}

/// Individual and total-rate caps in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterBounds {
    pub individual: Vec<f64>,
    pub total: f64,
    pub condition_used: NoiseCondition,
    /// `N_B^k` under condition (a) or `N_B^{k,c}` under condition (b).
    pub per_sender_dark_counts: Vec<f64>,
    /// Dark count of the bottleneck channel used for the total-rate cap.
    pub bottleneck_dark_count: f64,
}

/// Outer bounds under every noise condition the channel satisfies.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterBoundSet {
    pub a: Option<OuterBounds>,
    pub b: Option<OuterBounds>,
    pub preferred: NoiseCondition,
}

impl OuterBoundSet {
    pub fn preferred(&self) -> &OuterBounds {
        match self.preferred {
            NoiseCondition::A => self.a.as_ref(),
            NoiseCondition::B => self.b.as_ref(),
        }
        .expect("preferred condition holds")
    }

    /// Smaller of the available total-rate caps.
    pub fn tightest_total(&self) -> f64 {
        [&self.a, &self.b]
            .iter()
            .filter_map(|o| o.as_ref().map(|b| b.total))
            .fold(f64::INFINITY, f64::min)
    }

    /// Elementwise smaller of the available individual caps.
    pub fn tightest_individual(&self) -> Vec<f64> {
        let p = self.preferred().individual.clone();
        [&self.a, &self.b]
            .iter()
            .filter_map(|o| o.as_ref())
            .fold(p, |acc, b| acc.iter().zip(&b.individual).map(|(x, y)| x.min(*y)).collect())
    }
}

fn check_channel(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget) -> Result<()> {
    budget.check_senders(channel.senders())?;
    let report = channel.validate();
    if !report.is_ok() {
        return Err(Error::UnphysicalChannel(report.to_string()));
    }
    Ok(())
}

/// Coherent-state bound `g(Σ_{k∈J} |w_k|^2 N_{S,k} + N_B) - g(N_B)`.
pub fn coherent_bound(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget, set: SenderSet) -> Result<f64> {
    check_channel(channel, budget)?;
    if set.is_empty() {
        return Ok(0.0);
    }
    let gains = channel.gains();
    let signal: f64 = set
        .members(channel.senders())
        .iter()
        .map(|&k| gains[k] * budget.as_slice()[k])
        .sum();
    Ok((g(signal + channel.nb())? - g(channel.nb())?).max(0.0))
}

/// Whether the channel satisfies a noise condition.
pub fn condition_holds(channel: &PhaseInsensitiveBgmac, cond: NoiseCondition) -> bool {
    let w2 = channel.total_gain();
    let required = match cond {
        NoiseCondition::A => (w2 - 1.0).max(0.0) + channel.contravariant_gain(),
        NoiseCondition::B => w2 + channel.covariant_gain(),
    };
    channel.nb() >= required - COND_TOL
}

/// Condition (a) is preferred when it holds and covariant weight dominates
/// (`Σ (1-2δ_k)|w_k|^2 >= 0`) or when (b) fails.
pub fn preferred_condition(channel: &PhaseInsensitiveBgmac) -> Option<NoiseCondition> {
    let a = condition_holds(channel, NoiseCondition::A);
    let b = condition_holds(channel, NoiseCondition::B);
    let covariant_dominant = channel.covariant_gain() - channel.contravariant_gain() >= 0.0;
    match (a, b) {
        (true, false) => Some(NoiseCondition::A),
        (false, true) => Some(NoiseCondition::B),
        (true, true) if covariant_dominant => Some(NoiseCondition::A),
        (true, true) => Some(NoiseCondition::B),
        (false, false) => None,
    }
}

/// Parameters of the channel decomposition behind the bounds: the
/// pre-conjugation flags `δ'_k` and the dark count `σ^2` of the bottleneck
/// channel.
struct Decomposition {
    pre_conjugated: Vec<bool>,
    sigma2: f64,
    per_sender_nb: Vec<f64>,
    bottleneck_contravariant: bool,
}

fn decomposition(channel: &PhaseInsensitiveBgmac, cond: NoiseCondition) -> Decomposition {
    let w2 = channel.total_gain();
    let nb = channel.nb();
    let delta = channel.delta();
    match cond {
        NoiseCondition::A => {
            let sigma2 = nb - channel.contravariant_gain();
            Decomposition {
                pre_conjugated: delta.to_vec(),
                sigma2,
                per_sender_nb: delta.iter().map(|&d| sigma2 + if d { w2 } else { 0.0 }).collect(),
                bottleneck_contravariant: false,
            }
        }
        NoiseCondition::B => {
            let sigma2 = nb - channel.covariant_gain();
            Decomposition {
                pre_conjugated: delta.iter().map(|&d| !d).collect(),
                sigma2,
                per_sender_nb: delta.iter().map(|&d| sigma2 + if d { 0.0 } else { w2 }).collect(),
                bottleneck_contravariant: true,
            }
        }
    }
}

/// Unassisted outer bound under a chosen noise condition.
pub fn unassisted_outer_with(
    channel: &PhaseInsensitiveBgmac,
    budget: &EnergyBudget,
    cond: NoiseCondition,
) -> Result<OuterBounds> {
    check_channel(channel, budget)?;
    if !condition_holds(channel, cond) {
        return Err(Error::NoBoundAvailable);
    }
    let w2 = channel.total_gain();
    let ns = budget.as_slice();
    let dec = decomposition(channel, cond);
    let individual = dec
        .per_sender_nb
        .iter()
        .zip(ns)
        .map(|(&nbk, &n)| Ok((g(w2 * n + nbk)? - g(nbk)?).max(0.0)))
        .collect::<Result<Vec<f64>>>()?;
    let signal: f64 = channel.gains().iter().zip(ns).map(|(gk, n)| gk * n).sum();
    let total = (g(signal + channel.nb())? - g(dec.sigma2)?).max(0.0);
    Ok(OuterBounds {
        individual,
        total,
        condition_used: cond,
        per_sender_dark_counts: dec.per_sender_nb,
        bottleneck_dark_count: dec.sigma2,
    })
}

fn collect_all<F>(channel: &PhaseInsensitiveBgmac, f: F) -> Result<OuterBoundSet>
where
    F: Fn(NoiseCondition) -> Result<OuterBounds>,
{
    let preferred = preferred_condition(channel).ok_or(Error::NoBoundAvailable)?;
    let a = if condition_holds(channel, NoiseCondition::A) {
        Some(f(NoiseCondition::A)?)
    } else {
        None
    };
    let b = if condition_holds(channel, NoiseCondition::B) {
        Some(f(NoiseCondition::B)?)
    } else {
        None
    };
    Ok(OuterBoundSet { a, b, preferred })
}

/// Unassisted outer bounds under all applicable conditions.
pub fn unassisted_outer_all(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget) -> Result<OuterBoundSet> {
    check_channel(channel, budget)?;
    collect_all(channel, |c| unassisted_outer_with(channel, budget, c))
}

/// Unassisted outer bound under the preferred condition.
pub fn unassisted_outer(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget) -> Result<OuterBounds> {
    check_channel(channel, budget)?;
    let cond = preferred_condition(channel).ok_or(Error::NoBoundAvailable)?;
    unassisted_outer_with(channel, budget, cond)
}

/// EA capacity of a single-mode phase-insensitive channel with input energy
/// `ns`, achieved by a two-mode squeezed vacuum.
pub fn ea_bgc_capacity(contravariant: bool, ns: f64, w2: f64, nb: f64) -> Result<f64> {
    if !(ns >= 0.0) || !(w2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("need N_S >= 0 and |w|^2 >= 0, got {ns}, {w2}")));
    }
    let required = if contravariant { w2 } else { (w2 - 1.0).max(0.0) };
    if nb < required - COND_TOL {
        return Err(Error::UnphysicalChannel(format!(
            "|w|^2 = {w2} (δ = {}) needs N_B >= {required}, got {nb}",
            u8::from(contravariant)
        )));
    }
    let nsp = w2 * ns + nb;
    let scale = (ns + nsp + 1.0).powi(2);
    let (a_plus, a_minus) = if contravariant {
        let rad = (nsp - ns).powi(2) + 4.0 * w2 * ns * (ns + 1.0);
        let d = checked_sqrt(rad, scale)?;
        ((d + nsp + ns) / 2.0, (-d + nsp + ns) / 2.0)
    } else {
        let rad = (ns + nsp + 1.0).powi(2) - 4.0 * w2 * ns * (ns + 1.0);
        let d = checked_sqrt(rad, scale)?;
        ((d - 1.0 + (nsp - ns)) / 2.0, (d - 1.0 - (nsp - ns)) / 2.0)
    };
    let clamp = |x: f64| if x < 0.0 && x > -1e-9 { 0.0 } else { x };
    Ok((g(ns)? + g(nsp)? - g(clamp(a_plus))? - g(clamp(a_minus))?).max(0.0))
}

fn checked_sqrt(rad: f64, scale: f64) -> Result<f64> {
    if rad < -1e-12 * scale.max(1.0) {
        return Err(Error::UnphysicalChannel(format!("negative radicand {rad:e}")));
    }
    Ok(rad.max(0.0).sqrt())
}

/// EA outer bound under a chosen noise condition.
pub fn ea_outer_with(
    channel: &PhaseInsensitiveBgmac,
    budget: &EnergyBudget,
    cond: NoiseCondition,
) -> Result<OuterBounds> {
    check_channel(channel, budget)?;
    if !condition_holds(channel, cond) {
        return Err(Error::NoBoundAvailable);
    }
    let w2 = channel.total_gain();
    let ns = budget.as_slice();
    let dec = decomposition(channel, cond);
    let individual = channel
        .delta()
        .iter()
        .zip(&dec.per_sender_nb)
        .zip(ns)
        .map(|((&d, &nbk), &n)| ea_bgc_capacity(d, n, w2, nbk))
        .collect::<Result<Vec<f64>>>()?;
    // photons entering the bottleneck: Σ η_k (N_{S,k} + δ'_k)
    let photons: f64 = if w2 > 0.0 {
        channel
            .gains()
            .iter()
            .zip(ns)
            .zip(&dec.pre_conjugated)
            .map(|((gk, n), &pc)| gk / w2 * (n + if pc { 1.0 } else { 0.0 }))
            .sum()
    } else {
        0.0
    };
    let total = ea_bgc_capacity(dec.bottleneck_contravariant, photons, w2, dec.sigma2)?;
    Ok(OuterBounds {
        individual,
        total,
        condition_used: cond,
        per_sender_dark_counts: dec.per_sender_nb,
        bottleneck_dark_count: dec.sigma2,
    })
}

pub fn ea_outer_all(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget) -> Result<OuterBoundSet> {
    check_channel(channel, budget)?;
    collect_all(channel, |c| ea_outer_with(channel, budget, c))
}

/// EA outer bound under the preferred condition.
pub fn ea_outer(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget) -> Result<OuterBounds> {
    check_channel(channel, budget)?;
    let cond = preferred_condition(channel).ok_or(Error::NoBoundAvailable)?;
    ea_outer_with(channel, budget, cond)
}

/// EA total-rate capacity: `I(A'; B)` for the product of two-mode squeezed
/// vacua that saturate each sender's budget.
pub fn ea_total_rate_capacity(channel: &PhaseInsensitiveBgmac, budget: &EnergyBudget) -> Result<f64> {
    check_channel(channel, budget)?;
    let s = channel.senders();
    rate_functional(channel, &GaussianEncoding::tmsv(s), budget, SenderSet::full(s))
}
