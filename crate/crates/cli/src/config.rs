//! JSON run configurations.

use std::path::Path;

use anyhow::Context;
use bgmac::capacity::EnergyBudget;
use bgmac::channel::{ChannelSpec, PhaseInsensitiveBgmac};
use bgmac::memory::{AllocationConfig, CausalMemoryParams};
use bgmac::region::OptimizerConfig;
use serde::Deserialize;

/// Malformed or inconsistent configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Log-spaced total photon numbers, split between senders by fixed fractions.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub split: Vec<f64>,
}

impl Sweep {
    fn totals(&self) -> anyhow::Result<Vec<f64>> {
        if !(self.from > 0.0 && self.to > 0.0) || !self.from.is_finite() || !self.to.is_finite() {
            return Err(config_err("sweep endpoints must be finite and > 0"));
        }
        if self.points == 0 {
            return Err(config_err("sweep needs at least one point"));
        }
        if self.points == 1 {
            return Ok(vec![self.from]);
        }
        let (a, b) = (self.from.ln(), self.to.ln());
        let last = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| (a + (b - a) * i as f64 / last).exp())
            .collect())
    }
}

/// Either a fixed per-sender budget or a sweep.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct BudgetSpec {
    #[serde(default)]
    pub ns: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl BudgetSpec {
    pub fn budgets(&self, senders: usize) -> anyhow::Result<Vec<EnergyBudget>> {
        let budgets = match (&self.ns, &self.sweep) {
            (Some(ns), None) => vec![EnergyBudget::new(ns.clone()).map_err(|e| config_err(e.to_string()))?],
            (None, Some(sweep)) => sweep
                .totals()?
                .into_iter()
                .map(|t| EnergyBudget::split(t, &sweep.split).map_err(|e| config_err(e.to_string())))
                .collect::<anyhow::Result<_>>()?,
            (Some(_), Some(_)) => return Err(config_err("give either \"ns\" or \"sweep\", not both")),
            (None, None) => return Err(config_err("missing \"ns\" or \"sweep\"")),
        };
        if let Some(b) = budgets.iter().find(|b| b.len() != senders) {
            return Err(config_err(format!(
                "budget has {} entries but the channel has {senders} senders",
                b.len()
            )));
        }
        Ok(budgets)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_starts() -> usize {
    5
}

fn default_max_iter() -> usize {
    200
}

fn default_rel_tol() -> f64 {
    1e-8
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            max_iter: default_max_iter(),
            rel_tol: default_rel_tol(),
        }
    }
}

impl OptimizerSettings {
    pub fn to_config(&self, seed: u64) -> anyhow::Result<OptimizerConfig> {
        if self.starts == 0 || self.max_iter == 0 || !(self.rel_tol > 0.0) {
            return Err(config_err("optimizer needs starts >= 1, max_iter >= 1 and rel_tol > 0"));
        }
        Ok(OptimizerConfig {
            starts: self.starts,
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            seed,
        })
    }
}

/// Config for every command that takes a channel description.
#[derive(Debug, Clone, Deserialize)]
pub struct ChannelConfig {
    pub channel: ChannelSpec,
    #[serde(flatten)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl ChannelConfig {
    pub fn channel(&self) -> anyhow::Result<PhaseInsensitiveBgmac> {
        Ok(self.channel.build(true)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSettings {
    #[serde(default = "default_alloc_starts")]
    pub starts: usize,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_alloc_tol")]
    pub rel_tol: f64,
}

fn default_alloc_starts() -> usize {
    3
}

fn default_sweeps() -> usize {
    100
}

fn default_alloc_tol() -> f64 {
    1e-12
}

impl Default for AllocationSettings {
    fn default() -> Self {
        Self {
            starts: default_alloc_starts(),
            max_sweeps: default_sweeps(),
            rel_tol: default_alloc_tol(),
        }
    }
}

/// Config for the `memory` command.
#[derive(Debug, Clone, Deserialize)]
pub struct MemoryConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub n: usize,
    pub nb: f64,
    pub eta: Vec<f64>,
    #[serde(flatten)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub allocation: AllocationSettings,
}

impl MemoryConfig {
    pub fn params(&self) -> anyhow::Result<CausalMemoryParams> {
        CausalMemoryParams::new(self.epsilon, self.gamma, self.n, self.nb).map_err(|e| config_err(e.to_string()))
    }

    pub fn allocation(&self, seed: u64) -> anyhow::Result<AllocationConfig> {
        let a = &self.allocation;
        if a.starts == 0 || a.max_sweeps == 0 || !(a.rel_tol > 0.0) {
            return Err(config_err("allocation needs starts >= 1, max_sweeps >= 1 and rel_tol > 0"));
        }
        Ok(AllocationConfig {
            starts: a.starts,
            max_sweeps: a.max_sweeps,
            rel_tol: a.rel_tol,
            seed,
        })
    }
}

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))
        .context("parsing config")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_log_spaced_and_inclusive() {
        let s = Sweep { from: 1e-5, to: 1.0, points: 6, split: vec![0.9, 0.1] };
        let t = s.totals().unwrap();
        assert_eq!(t.len(), 6);
        for (i, x) in t.iter().enumerate() {
            let want = 10f64.powi(i as i32 - 5);
            assert!((x / want - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_needs_exactly_one_source() {
        let spec = BudgetSpec::default();
        assert!(spec.budgets(1).is_err());
        let spec = BudgetSpec {
            ns: Some(vec![1.0]),
            sweep: Some(Sweep { from: 1.0, to: 2.0, points: 2, split: vec![1.0] }),
        };
        assert!(spec.budgets(1).is_err());
    }

    #[test]
    fn sender_count_mismatch_is_rejected() {
        let spec = BudgetSpec { ns: Some(vec![1.0, 2.0]), sweep: None };
        let err = spec.budgets(3).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn channel_config_parses() {
        let c: ChannelConfig = serde_json::from_str(
            r#"{"channel": {"interference": {"eta": [0.9, 0.1], "bgc": {"class": "thermal-loss", "w2": 0.1, "nb": 0.1}}},
                "sweep": {"from": 1e-5, "to": 1, "points": 3, "split": [0.9, 0.1]}}"#,
        )
        .unwrap();
        assert_eq!(c.channel().unwrap().senders(), 2);
        assert_eq!(c.budget.budgets(2).unwrap().len(), 3);
        assert_eq!(c.optimizer.starts, 5);
    }
}
