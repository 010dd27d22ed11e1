//! Phase-insensitive bosonic Gaussian multiple-access channels.
//!
//! The output mode is
//! `a_B = Σ_k w_k ((1-δ_k) a_k + δ_k a_k†) + u1 e_1 + u2 e_2†`
//! with two vacuum environment modes. A sender with `δ_k = 1` enters
//! contravariantly (phase conjugated).

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{apply_transform, CovarianceMatrix, SymplecticTransform};

const VALIDATION_TOL: f64 = 1e-12;

/// Which of the two bona fide lower bounds on `N_B` a channel violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseBound {
    /// `N_B >= -1 + Σ |w_k|^2 (1 - δ_k)`
    Covariant,
    /// `N_B >= Σ |w_k|^2 δ_k`
    Contravariant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub bound: NoiseBound,
    pub required_nb: f64,
    pub shortfall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Smallest dark count that would make the channel bona fide.
    pub fn required_nb(&self) -> Option<f64> {
        self.violations
            .iter()
            .map(|v| v.required_nb)
            .reduce(f64::max)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "bona fide");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(
                f,
                "{:?} bound needs N_B >= {:.6} (short by {:.3e})",
                v.bound, v.required_nb, v.shortfall
            )?;
        }
        Ok(())
    }
}

/// Single-mode phase-insensitive BGMAC with `s` senders.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseInsensitiveBgmac {
    w: Vec<Complex<f64>>,
    delta: Vec<bool>,
    nb: f64,
}

impl PhaseInsensitiveBgmac {
    /// Builds a channel and rejects it unless it is bona fide.
    pub fn new(w: Vec<Complex<f64>>, delta: Vec<bool>, nb: f64) -> Result<Self> {
        let ch = Self::new_unvalidated(w, delta, nb)?;
        let report = ch.validate();
        if !report.is_ok() {
            return Err(Error::UnphysicalChannel(report.to_string()));
        }
        Ok(ch)
    }

    /// Builds a channel without the bona fide check, for exploring boundary
    /// cases. Operations that need the dilation still fail on unphysical
    /// parameters.
    pub fn new_unvalidated(w: Vec<Complex<f64>>, delta: Vec<bool>, nb: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("channel needs at least one sender".into()));
        }
        if w.len() != delta.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} conjugation flags", w.len()),
                found: delta.len().to_string(),
            });
        }
        if !nb.is_finite() || w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("channel parameters must be finite".into()));
        }
        Ok(Self { w, delta, nb })
    }

    /// Channel with real weights.
    pub fn from_real(w: &[f64], delta: &[bool], nb: f64) -> Result<Self> {
        Self::new(w.iter().map(|&x| Complex::new(x, 0.0)).collect(), delta.to_vec(), nb)
    }

    pub fn senders(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[Complex<f64>] {
        &self.w
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn nb(&self) -> f64 {
        self.nb
    }

    /// `|w_k|^2` per sender.
    pub fn gains(&self) -> Vec<f64> {
        self.w.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `|w|^2 = Σ_k |w_k|^2`.
    pub fn total_gain(&self) -> f64 {
        self.gains().iter().sum()
    }

    fn delta_f(&self, k: usize) -> f64 {
        if self.delta[k] {
            1.0
        } else {
            0.0
        }
    }

    /// `Σ_k |w_k|^2 δ_k`
    pub fn contravariant_gain(&self) -> f64 {
        self.gains().iter().enumerate().map(|(k, g)| g * self.delta_f(k)).sum()
    }

    /// `Σ_k |w_k|^2 (1 - δ_k)`
    pub fn covariant_gain(&self) -> f64 {
        self.total_gain() - self.contravariant_gain()
    }

    pub fn is_global_covariant(&self) -> bool {
        self.delta.iter().all(|&d| !d)
    }

    pub fn is_global_contravariant(&self) -> bool {
        self.delta.iter().all(|&d| d)
    }

    /// Checks `N_B >= max{-1 + Σ|w_k|^2(1-δ_k), Σ|w_k|^2 δ_k}`.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (bound, required) in [
            (NoiseBound::Covariant, self.covariant_gain() - 1.0),
            (NoiseBound::Contravariant, self.contravariant_gain()),
        ] {
            if self.nb < required - VALIDATION_TOL {
                violations.push(Violation {
                    bound,
                    required_nb: required,
                    shortfall: required - self.nb,
                });
            }
        }
        ValidationReport { violations }
    }

    /// Environment amplitudes `(u1, u2)` from `u2^2 = N_B - Σ|w_k|^2 δ_k` and
    /// the commutation constraint `Σ(1-2δ_k)|w_k|^2 + u1^2 - u2^2 = 1`.
    pub fn noise_params(&self) -> Result<(f64, f64)> {
        let u2_sq = self.nb - self.contravariant_gain();
        let u1_sq = 1.0 + u2_sq - (self.covariant_gain() - self.contravariant_gain());
        if u1_sq < -VALIDATION_TOL || u2_sq < -VALIDATION_TOL {
            return Err(Error::UnphysicalChannel(format!(
                "environment amplitudes imaginary (u1^2 = {u1_sq:e}, u2^2 = {u2_sq:e})"
            )));
        }
        Ok((u1_sq.max(0.0).sqrt(), u2_sq.max(0.0).sqrt()))
    }

    /// Quadrature transform of the dilation, mapping
    /// `[A_1, A'_1, ..., A_s, A'_s, E_1, E_2]` to `[B, A'_1, ..., A'_s]`.
    pub fn dilation(&self) -> Result<SymplecticTransform> {
        let s = self.senders();
        let (u1, u2) = self.noise_params()?;
        let cols = 2 * (2 * s + 2);
        let mut t = DMatrix::zeros(2 * (s + 1), cols);
        for (k, z) in self.w.iter().enumerate() {
            let block = weight_block(*z, self.delta[k]);
            t.view_mut((0, 4 * k), (2, 2)).copy_from(&block);
            t[(2 * (k + 1), 4 * k + 2)] = 1.0;
            t[(2 * (k + 1) + 1, 4 * k + 3)] = 1.0;
        }
        let e1 = 4 * s;
        t[(0, e1)] = u1;
        t[(1, e1 + 1)] = u1;
        t[(0, e1 + 2)] = u2;
        t[(1, e1 + 3)] = -u2;
        SymplecticTransform::new(t)
    }

    /// Applies the channel to every signal mode of a CM over
    /// `[A_1, A'_1, ..., A_s, A'_s]`, returning the CM over
    /// `[B, A'_1, ..., A'_s]`.
    pub fn apply_to_cm(&self, input: &CovarianceMatrix) -> Result<CovarianceMatrix> {
        let s = self.senders();
        if input.modes() != 2 * s {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input modes (signal + idler per sender)", 2 * s),
                found: input.modes().to_string(),
            });
        }
        let t = self.dilation()?;
        apply_transform(&t, input, &CovarianceMatrix::vacuum(2))
    }
}

/// 2x2 quadrature block `|w| R(arg w) Z^δ` of one sender.
fn weight_block(w: Complex<f64>, contravariant: bool) -> DMatrix<f64> {
    let (s, c) = w.arg().sin_cos();
    let r = w.norm();
    let z = if contravariant { -1.0 } else { 1.0 };
    DMatrix::from_row_slice(2, 2, &[r * c, -r * s * z, r * s, r * c * z])
}

/// The four classes of single-mode phase-insensitive channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BgcClass {
    ThermalLoss,
    Awgn,
    Amplifier,
    ConjugateAmplifier,
}

impl BgcClass {
    pub fn is_contravariant(self) -> bool {
        matches!(self, BgcClass::ConjugateAmplifier)
    }
}

impl std::str::FromStr for BgcClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "thermal-loss" | "thermalloss" | "loss" => Ok(BgcClass::ThermalLoss),
            "awgn" => Ok(BgcClass::Awgn),
            "amplifier" => Ok(BgcClass::Amplifier),
            "conjugate-amplifier" | "conjugateamplifier" => Ok(BgcClass::ConjugateAmplifier),
            other => Err(Error::InvalidArgument(format!("unknown channel class '{other}'"))),
        }
    }
}

/// Single-sender phase-insensitive bosonic Gaussian channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointToPointBgc {
    pub delta: bool,
    pub w2: f64,
    pub nb: f64,
}

impl PointToPointBgc {
    /// Requires `N_B >= max{(|w|^2 - 1)(1 - δ), |w|^2 δ}`.
    pub fn new(delta: bool, w2: f64, nb: f64) -> Result<Self> {
        let ch = Self::new_unvalidated(delta, w2, nb)?;
        let required = ch.required_nb();
        if nb < required - VALIDATION_TOL {
            return Err(Error::UnphysicalChannel(format!(
                "{:?} with |w|^2 = {w2} needs N_B >= {required}, got {nb}",
                ch.class()
            )));
        }
        Ok(ch)
    }

    pub fn new_unvalidated(delta: bool, w2: f64, nb: f64) -> Result<Self> {
        if !(w2 >= 0.0) || !w2.is_finite() || !nb.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "channel needs finite |w|^2 >= 0, got |w|^2 = {w2}, N_B = {nb}"
            )));
        }
        Ok(Self { delta, w2, nb })
    }

    /// Builds a channel of the given class, checking the class agrees with
    /// `|w|^2`.
    pub fn of_class(class: BgcClass, w2: f64, nb: f64) -> Result<Self> {
        let ch = Self::new(class.is_contravariant(), w2, nb)?;
        if ch.class() != class {
            return Err(Error::InvalidArgument(format!(
                "|w|^2 = {w2} describes a {:?} channel, not {class:?}",
                ch.class()
            )));
        }
        Ok(ch)
    }

    pub fn required_nb(&self) -> f64 {
        if self.delta {
            self.w2
        } else {
            (self.w2 - 1.0).max(0.0)
        }
    }

    pub fn class(&self) -> BgcClass {
        classify(self)
    }

    /// Gain as conventionally quoted: `|w|^2`, or `|w|^2 + 1` for the
    /// conjugate amplifier.
    pub fn display_gain(&self) -> f64 {
        if self.delta {
            self.w2 + 1.0
        } else {
            self.w2
        }
    }

    /// Same channel as a one-sender BGMAC.
    pub fn as_bgmac(&self) -> Result<PhaseInsensitiveBgmac> {
        PhaseInsensitiveBgmac::from_real(&[self.w2.sqrt()], &[self.delta], self.nb)
    }

    /// Applies the channel to one mode of a multi-mode CM, leaving the other
    /// modes untouched.
    pub fn apply_to_mode(&self, cm: &CovarianceMatrix, mode: usize) -> Result<CovarianceMatrix> {
        let m = cm.modes();
        if mode >= m {
            return Err(Error::ShapeMismatch {
                expected: format!("mode index < {m}"),
                found: mode.to_string(),
            });
        }
        let (u1, u2) = self.as_bgmac()?.noise_params()?;
        let mut t = DMatrix::zeros(2 * m, 2 * m + 4);
        for i in 0..m {
            if i == mode {
                let block = weight_block(Complex::new(self.w2.sqrt(), 0.0), self.delta);
                t.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&block);
                t[(2 * i, 2 * m)] = u1;
                t[(2 * i + 1, 2 * m + 1)] = u1;
                t[(2 * i, 2 * m + 2)] = u2;
                t[(2 * i + 1, 2 * m + 3)] = -u2;
            } else {
                t[(2 * i, 2 * i)] = 1.0;
                t[(2 * i + 1, 2 * i + 1)] = 1.0;
            }
        }
        apply_transform(&SymplecticTransform::new(t)?, cm, &CovarianceMatrix::vacuum(2))
    }
}

/// Class of a single-mode channel: the conjugation flag decides first, then
/// `|w|^2` against 1.
pub fn classify(bgc: &PointToPointBgc) -> BgcClass {
    if bgc.delta {
        BgcClass::ConjugateAmplifier
    } else if (bgc.w2 - 1.0).abs() <= VALIDATION_TOL {
        BgcClass::Awgn
    } else if bgc.w2 < 1.0 {
        BgcClass::ThermalLoss
    } else {
        BgcClass::Amplifier
    }
}

/// Interference BGMAC: a beamsplitter with power ratios `eta` followed by
/// the single-mode channel `bgc`.
pub fn interference_bgmac(eta: &[f64], bgc: &PointToPointBgc) -> Result<PhaseInsensitiveBgmac> {
    check_ratios(eta)?;
    let w: Vec<Complex<f64>> = eta
        .iter()
        .map(|&e| Complex::new((e * bgc.w2).sqrt(), 0.0))
        .collect();
    let delta = vec![bgc.delta; eta.len()];
    PhaseInsensitiveBgmac::new_unvalidated(w, delta, bgc.nb).and_then(|ch| {
        let report = ch.validate();
        if report.is_ok() {
            Ok(ch)
        } else {
            Err(Error::UnphysicalChannel(report.to_string()))
        }
    })
}

pub(crate) fn check_ratios(eta: &[f64]) -> Result<()> {
    if eta.is_empty() {
        return Err(Error::InvalidArgument("interference ratios are empty".into()));
    }
    if eta.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::InvalidArgument(format!("interference ratios must be >= 0: {eta:?}")));
    }
    let total: f64 = eta.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "interference ratios must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// JSON description of a channel.
///
/// Either explicit weights
/// `{"s": 2, "w": [[re, im], ...], "delta": [0, 1], "nb": 0.1}` or an
/// interference channel
/// `{"interference": {"eta": [...], "bgc": {"class": "thermal-loss", "w2": 0.1, "nb": 0.1}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Interference { interference: InterferenceSpec },
    Explicit {
        s: usize,
        w: Vec<[f64; 2]>,
        delta: Vec<u8>,
        nb: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSpec {
    pub eta: Vec<f64>,
    pub bgc: BgcSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgcSpec {
    pub class: String,
    pub w2: f64,
    pub nb: f64,
}

impl BgcSpec {
    pub fn build(&self) -> Result<PointToPointBgc> {
        PointToPointBgc::of_class(self.class.parse()?, self.w2, self.nb)
    }
}

impl ChannelSpec {
    /// Builds the channel; with `strict` the bona fide check is enforced.
    pub fn build(&self, strict: bool) -> Result<PhaseInsensitiveBgmac> {
        match self {
            ChannelSpec::Interference { interference } => {
                let class: BgcClass = interference.bgc.class.parse()?;
                let bgc = if strict {
                    interference.bgc.build()?
                } else {
                    PointToPointBgc::new_unvalidated(
                        class.is_contravariant(),
                        interference.bgc.w2,
                        interference.bgc.nb,
                    )?
                };
                if strict {
                    interference_bgmac(&interference.eta, &bgc)
                } else {
                    check_ratios(&interference.eta)?;
                    let w = interference
                        .eta
                        .iter()
                        .map(|&e| Complex::new((e * bgc.w2).sqrt(), 0.0))
                        .collect();
                    PhaseInsensitiveBgmac::new_unvalidated(w, vec![bgc.delta; interference.eta.len()], bgc.nb)
                }
            }
            ChannelSpec::Explicit { s, w, delta, nb } => {
                if w.len() != *s || delta.len() != *s {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{s} weights and flags"),
                        found: format!("{} weights, {} flags", w.len(), delta.len()),
                    });
                }
                if delta.iter().any(|&d| d > 1) {
                    return Err(Error::InvalidArgument("delta entries must be 0 or 1".into()));
                }
                let w = w.iter().map(|p| Complex::new(p[0], p[1])).collect();
                let d = delta.iter().map(|&d| d == 1).collect();
                if strict {
                    PhaseInsensitiveBgmac::new(w, d, *nb)
                } else {
                    PhaseInsensitiveBgmac::new_unvalidated(w, d, *nb)
                }
            }
        }
    }
}
