//! One function per subcommand. Each computes its rows, runs a
//! self-consistency pass, then writes.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context};
use bgmac::capacity::{
    coherent_bound, ea_bgc_capacity, ea_outer_all, ea_total_rate_capacity, unassisted_outer_all, EnergyBudget,
    NoiseCondition, OuterBoundSet, SenderSet,
};
use bgmac::channel::PhaseInsensitiveBgmac;
use bgmac::fock::{fock_mutual_information, fock_thermal_loss_apply, fock_tmsv};
use bgmac::memory::{memory_coherent_benchmark, memory_total_rate};
use bgmac::region::{rate_functional, union_region, GaussianEncoding, UnionRegion};
use serde_json::{json, Value};

use crate::config::{self, ChannelConfig, ConfigError, MemoryConfig};
use crate::output::{emit, pretty, sibling, Cell, Format, Table};

/// Absolute slack allowed by the self-consistency pass, in bits.
const CHECK_TOL: f64 = 1e-9;
/// Largest acceptable gap between the Fock oracle and the Gaussian formula.
const ORACLE_TOL: f64 = 1e-3;

pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub rays: usize,
    pub seed: u64,
    pub oracle: bool,
}

/// Whether all optimizers converged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    NotConverged(String),
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn set_label(set: SenderSet, s: usize) -> String {
    set.members(s).iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join("+")
}

fn nonempty_sets(s: usize) -> impl Iterator<Item = SenderSet> {
    SenderSet::all(s).filter(|j| !j.is_empty())
}

fn numbered(prefix: &str, s: usize) -> impl Iterator<Item = String> + '_ {
    (1..=s).map(move |k| format!("{prefix}{k}"))
}

fn budget_cells(budget: &EnergyBudget) -> Vec<Cell> {
    std::iter::once(budget.total())
        .chain(budget.as_slice().iter().copied())
        .map(Cell::from)
        .collect()
}

fn budget_columns(s: usize) -> Vec<String> {
    std::iter::once("N_S".to_string()).chain(numbered("N_S", s)).collect()
}

fn within(value: f64, cap: f64) -> bool {
    value <= cap + CHECK_TOL * cap.abs().max(1.0)
}

fn write_table(args: &RunArgs, table: &Table) -> anyhow::Result<()> {
    emit(args.out.as_deref(), &table.render(args.format)).context("writing output")
}

fn require_single_sender(channel: &PhaseInsensitiveBgmac) -> anyhow::Result<()> {
    if channel.senders() != 1 {
        return Err(ConfigError(format!("this command needs a single-sender channel, got {}", channel.senders())).into());
    }
    Ok(())
}

/// Number of Fock levels keeping a thermal distribution of mean `n` below
/// `1e-10` tail mass.
fn truncation_dim(n: f64, floor: usize) -> usize {
    if n <= 0.0 {
        return floor;
    }
    let q = n / (n + 1.0);
    let d = ((1e-10f64).ln() / q.ln()).ceil() as usize + 1;
    d.max(floor)
}

/// Thermal-loss parameters `(τ, N_env)` for a single-sender covariant channel
/// with `|w|^2 <= 1`.
fn thermal_loss_params(channel: &PhaseInsensitiveBgmac) -> Option<(f64, f64)> {
    if channel.senders() != 1 || channel.delta()[0] {
        return None;
    }
    let tau = channel.gains()[0];
    if tau > 1.0 {
        return None;
    }
    let n_env = if tau < 1.0 { channel.nb() / (1.0 - tau) } else { 0.0 };
    Some((tau, n_env))
}

/// `I(A'; B)` of a TMSV through a thermal-loss channel, in truncated Fock
/// space. Returns the rate and the discarded probability mass.
fn fock_rate(tau: f64, n_env: f64, ns: f64) -> anyhow::Result<(f64, f64)> {
    let dim = truncation_dim(ns, 25);
    let dim_env = truncation_dim(n_env, 30);
    let input = fock_tmsv(ns, dim)?;
    let out = fock_thermal_loss_apply(&input, 0, tau, n_env, dim_env)?;
    Ok((fock_mutual_information(&out, &[1], &[0])?, out.tail_mass()))
}

pub fn point_capacity(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: ChannelConfig = config::load(&args.config)?;
    let channel = cfg.channel()?;
    require_single_sender(&channel)?;
    let budgets = cfg.budget.budgets(1)?;
    let oracle = if args.oracle {
        Some(thermal_loss_params(&channel).ok_or_else(|| {
            ConfigError("--oracle supports single-sender thermal-loss channels only".into())
        })?)
    } else {
        None
    };

    let mut columns: Vec<String> = ["N_S", "ea_capacity", "ea_rate_cm", "coherent_rate", "ratio"]
        .map(String::from)
        .into();
    if oracle.is_some() {
        columns.extend(["fock_rate".to_string(), "fock_tail".to_string()]);
    }
    let mut table = Table::new(columns);
    let (w2, contravariant) = (channel.gains()[0], channel.delta()[0]);
    for b in &budgets {
        let ns = b.total();
        let closed = ea_bgc_capacity(contravariant, ns, w2, channel.nb())?;
        let cm = ea_total_rate_capacity(&channel, b)?;
        let coh = coherent_bound(&channel, b, SenderSet::full(1))?;
        ensure!(
            (closed - cm).abs() <= 1e-6 * closed.max(1.0),
            "self-consistency: closed-form EA capacity {closed} disagrees with covariance-matrix rate {cm} at N_S = {ns}"
        );
        ensure!(within(coh, cm), "self-consistency: coherent rate {coh} exceeds EA rate {cm} at N_S = {ns}");
        let mut row: Vec<Cell> = vec![ns.into(), closed.into(), cm.into(), coh.into(), ratio(cm, coh).into()];
        if let Some((tau, n_env)) = oracle {
            let (f, tail) = fock_rate(tau, n_env, ns)?;
            row.extend([f.into(), tail.into()]);
        }
        table.push(row);
    }
    write_table(args, &table)?;
    Ok(Outcome::Complete)
}

pub fn coherent_region(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: ChannelConfig = config::load(&args.config)?;
    let channel = cfg.channel()?;
    let s = channel.senders();
    let budgets = cfg.budget.budgets(s)?;
    let mut columns = budget_columns(s);
    columns.extend(nonempty_sets(s).map(|j| format!("coh_{}", set_label(j, s))));
    let mut table = Table::new(columns);
    for b in &budgets {
        let caps: Vec<f64> = nonempty_sets(s)
            .map(|j| coherent_bound(&channel, b, j))
            .collect::<bgmac::Result<_>>()?;
        // caps are monotone and subadditive over sender sets
        let cap = |j: SenderSet| caps[j.mask() as usize - 1];
        for j in nonempty_sets(s) {
            let singles: f64 = j.members(s).iter().map(|&k| cap(SenderSet::singleton(k))).sum();
            ensure!(within(cap(j), singles), "self-consistency: coherent cap of {{{}}} is not subadditive", set_label(j, s));
            for k in j.members(s) {
                let sub = SenderSet::from_mask(j.mask() & !(1 << k));
                if !sub.is_empty() {
                    ensure!(within(cap(sub), cap(j)), "self-consistency: coherent caps are not monotone");
                }
            }
        }
        let mut row = budget_cells(b);
        row.extend(caps.into_iter().map(Cell::from));
        table.push(row);
    }
    write_table(args, &table)?;
    Ok(Outcome::Complete)
}

fn condition_name(c: NoiseCondition) -> &'static str {
    match c {
        NoiseCondition::A => "a",
        NoiseCondition::B => "b",
    }
}

pub fn outer_bounds(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: ChannelConfig = config::load(&args.config)?;
    let channel = cfg.channel()?;
    let s = channel.senders();
    let budgets = cfg.budget.budgets(s)?;
    let mut columns = budget_columns(s);
    columns.push("condition".into());
    columns.extend(numbered("unassisted_", s));
    columns.push("unassisted_total".into());
    columns.extend(numbered("ea_", s));
    columns.push("ea_total".into());
    columns.extend(numbered("coherent_", s));
    columns.push("coherent_total".into());
    let mut table = Table::new(columns);
    for b in &budgets {
        let un = unassisted_outer_all(&channel, b)?;
        let ea = ea_outer_all(&channel, b)?;
        let coh: Vec<f64> = (0..s)
            .map(|k| coherent_bound(&channel, b, SenderSet::singleton(k)))
            .collect::<bgmac::Result<_>>()?;
        let coh_total = coherent_bound(&channel, b, SenderSet::full(s))?;
        for (u, e) in [(&un.a, &ea.a), (&un.b, &ea.b)] {
            let (Some(u), Some(e)) = (u, e) else { continue };
            ensure!(
                within(coh_total, u.total) && coh.iter().zip(&u.individual).all(|(c, cap)| within(*c, *cap)),
                "self-consistency: coherent rates exceed the unassisted outer bound (condition {})",
                condition_name(u.condition_used)
            );
            let mut row = budget_cells(b);
            row.push(condition_name(u.condition_used).into());
            row.extend(u.individual.iter().copied().map(Cell::from));
            row.push(u.total.into());
            row.extend(e.individual.iter().copied().map(Cell::from));
            row.push(e.total.into());
            row.extend(coh.iter().copied().map(Cell::from));
            row.push(coh_total.into());
            table.push(row);
        }
    }
    write_table(args, &table)?;
    Ok(Outcome::Complete)
}

pub fn ea_total(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: ChannelConfig = config::load(&args.config)?;
    let channel = cfg.channel()?;
    let s = channel.senders();
    let budgets = cfg.budget.budgets(s)?;
    let columns = ["N_S", "ea_rate", "coherent_rate", "ratio", "ea_outer_total"].map(String::from).into();
    let mut table = Table::new(columns);
    for b in &budgets {
        let ea = ea_total_rate_capacity(&channel, b)?;
        let coh = coherent_bound(&channel, b, SenderSet::full(s))?;
        let outer = match ea_outer_all(&channel, b) {
            Ok(set) => Some(set.tightest_total()),
            Err(bgmac::Error::NoBoundAvailable) => None,
            Err(e) => return Err(e.into()),
        };
        ensure!(within(coh, ea), "self-consistency: coherent rate {coh} exceeds EA rate {ea} at N_S = {}", b.total());
        if let Some(o) = outer {
            ensure!(within(ea, o), "self-consistency: EA rate {ea} exceeds its outer bound {o} at N_S = {}", b.total());
        }
        table.push(vec![b.total().into(), ea.into(), coh.into(), ratio(ea, coh).into(), outer.into()]);
    }
    write_table(args, &table)?;
    Ok(Outcome::Complete)
}

fn region_json(region: &UnionRegion, s: usize) -> Value {
    let rays: Vec<Value> = region
        .angles
        .iter()
        .zip(&region.rays)
        .map(|(phi, ray)| {
            let constraints: serde_json::Map<String, Value> = nonempty_sets(s)
                .map(|j| (set_label(j, s), json!(ray.constraints.bound(j))))
                .collect();
            json!({
                "phi": phi,
                "direction": ray.direction,
                "rates": ray.point.rates(),
                "r": ray.encoding.r,
                "theta": ray.encoding.theta,
                "step": ray.step,
                "iterations": ray.iterations,
                "converged": ray.converged,
                "constraints": constraints,
            })
        })
        .collect();
    json!({ "rays": rays, "hull": region.hull })
}

fn check_region(region: &UnionRegion, ea: Option<&OuterBoundSet>, s: usize) -> anyhow::Result<()> {
    for (i, ray) in region.rays.iter().enumerate() {
        let rates = ray.point.rates();
        ensure!(rates.iter().all(|&r| r >= -CHECK_TOL), "self-consistency: ray {i} has a negative rate");
        let slack = ray.constraints.min_slack(&ray.point);
        ensure!(slack >= -CHECK_TOL, "self-consistency: ray {i} violates its one-shot region by {}", -slack);
        if let Some(ea) = ea {
            let ind = ea.tightest_individual();
            ensure!(
                rates.iter().zip(&ind).all(|(r, cap)| within(*r, *cap)) && within(ray.point.sum_over(SenderSet::full(s)), ea.tightest_total()),
                "self-consistency: ray {i} lies outside the EA outer bound"
            );
        }
    }
    Ok(())
}

pub fn gaussian_region(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: ChannelConfig = config::load(&args.config)?;
    let channel = cfg.channel()?;
    let s = channel.senders();
    let budgets = cfg.budget.budgets(s)?;
    let [budget] = budgets.as_slice() else {
        return Err(ConfigError("gaussian-region needs a single budget (\"ns\")".into()).into());
    };
    if args.rays == 0 {
        return Err(ConfigError("--rays must be at least 1".into()).into());
    }
    let opt = cfg.optimizer.to_config(args.seed)?;
    let region = union_region(&channel, budget, args.rays, &opt)?;
    let ea = match ea_outer_all(&channel, budget) {
        Ok(set) => Some(set),
        Err(bgmac::Error::NoBoundAvailable) => None,
        Err(e) => return Err(e.into()),
    };
    check_region(&region, ea.as_ref(), s)?;

    let hull = region_json(&region, s);
    match args.format {
        Format::Json => emit(args.out.as_deref(), &pretty(&hull)).context("writing output")?,
        Format::Csv => {
            let mut columns = vec!["phi".to_string()];
            columns.extend(numbered("R", s));
            columns.extend(numbered("r", s));
            columns.extend((2..=s).map(|k| format!("theta{k}")));
            columns.extend(["iterations".to_string(), "converged".to_string()]);
            let mut table = Table::new(columns);
            for (phi, ray) in region.angles.iter().zip(&region.rays) {
                let mut row: Vec<Cell> = vec![(*phi).into()];
                row.extend(ray.point.rates().iter().copied().map(Cell::from));
                row.extend(ray.encoding.r.iter().copied().map(Cell::from));
                row.extend(ray.encoding.theta[1..].iter().copied().map(Cell::from));
                row.extend([ray.iterations.into(), ray.converged.into()]);
                table.push(row);
            }
            write_table(args, &table)?;
            if let Some(out) = &args.out {
                let hull_path = sibling(out, "hull.json");
                emit(Some(&hull_path), &pretty(&hull)).with_context(|| format!("writing {}", hull_path.display()))?;
            }
        }
    }
    let stalled: Vec<String> = region
        .rays
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.converged)
        .map(|(i, _)| i.to_string())
        .collect();
    Ok(if stalled.is_empty() {
        Outcome::Complete
    } else {
        Outcome::NotConverged(format!("rays {} did not converge", stalled.join(", ")))
    })
}

pub fn memory(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: MemoryConfig = config::load(&args.config)?;
    let params = cfg.params()?;
    let s = cfg.eta.len();
    let budgets = cfg.budget.budgets(s)?;
    let alloc = cfg.allocation(args.seed)?;
    let columns = ["N_S", "ea_rate", "coherent_rate", "ratio", "sweeps", "converged"].map(String::from).into();
    let mut table = Table::new(columns);
    let mut stalled = Vec::new();
    for b in &budgets {
        let ea = memory_total_rate(&params, &cfg.eta, b, &alloc)?;
        let coh = memory_coherent_benchmark(&params, &cfg.eta, b, &alloc)?;
        ensure!(
            ea.allocation.is_feasible(b, 1e-9) && coh.allocation.is_feasible(b, 1e-9),
            "self-consistency: energy allocation exceeds the budget at N_S = {}",
            b.total()
        );
        ensure!(within(coh.rate, ea.rate), "self-consistency: coherent rate exceeds EA rate at N_S = {}", b.total());
        let converged = ea.converged && coh.converged;
        if !converged {
            stalled.push(format!("{:e}", b.total()));
        }
        table.push(vec![
            b.total().into(),
            ea.rate.into(),
            coh.rate.into(),
            ratio(ea.rate, coh.rate).into(),
            ea.sweeps.into(),
            converged.into(),
        ]);
    }
    write_table(args, &table)?;
    Ok(if stalled.is_empty() {
        Outcome::Complete
    } else {
        Outcome::NotConverged(format!("allocation search did not converge at N_S = {}", stalled.join(", ")))
    })
}

pub fn oracle_check(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg: ChannelConfig = config::load(&args.config)?;
    let channel = cfg.channel()?;
    require_single_sender(&channel)?;
    let (tau, n_env) = thermal_loss_params(&channel)
        .ok_or_else(|| ConfigError("oracle-check supports single-sender thermal-loss channels only".into()))?;
    let budgets = cfg.budget.budgets(1)?;
    let columns = ["N_S", "gaussian_rate", "fock_rate", "abs_diff", "fock_tail"].map(String::from).into();
    let mut table = Table::new(columns);
    let mut worst: f64 = 0.0;
    for b in &budgets {
        let gauss = rate_functional(&channel, &GaussianEncoding::tmsv(1), b, SenderSet::full(1))?;
        let (fock, tail) = fock_rate(tau, n_env, b.total())?;
        worst = worst.max((gauss - fock).abs());
        table.push(vec![b.total().into(), gauss.into(), fock.into(), (gauss - fock).abs().into(), tail.into()]);
    }
    write_table(args, &table)?;
    if worst > ORACLE_TOL {
        bail!("Fock oracle disagrees with the Gaussian rate by {worst:e} bits (tolerance {ORACLE_TOL:e})");
    }
    Ok(Outcome::Complete)
}
