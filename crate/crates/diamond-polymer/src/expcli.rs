//! Experiment orchestration.
//!
//! An [`ExperimentConfig`] (JSON) names one operation of the library, the
//! lattice, the disorder law, a β schedule, the replicate count and a master
//! seed. [`run`] validates it, executes the replicates on a worker pool and
//! returns a [`ResultRecord`]; [`write_outputs`] persists the per-row table as
//! CSV plus a JSON sidecar, and [`summarize`] compares sidecar estimates with
//! closed-form targets.
//!
//! Seeding: replicate `i` of a run with master seed `m` reads
//! `rng::replicate(m, i)`, or for disorder fields the derived seed
//! `rng::derive_seed(m, i)`. Rows are collected in replicate order and
//! aggregated sequentially, so the output does not depend on the worker count.

use crate::disorder::{DisorderField, DisorderSpec, Placement, WeightSampler};
use crate::error::{Error, Result};
use crate::fluctuation::{self, PoolPlan};
use crate::lattice::LatticeParams;
use crate::limitlaw::{self, LeafLaw, LeafVariance, LimitLawSampler, SamplingMethod};
use crate::polymer;
use crate::rgflow::{self, BeqVariant, FlowKind, FlowMap, Precision};
use crate::rng;
use crate::stats::{KsResult, Moments};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "DIAMOND_POLYMER_WORKERS";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative tolerance used when a deterministic value is compared with its
/// limit.
pub const DETERMINISTIC_TOLERANCE: f64 = 0.05;
/// Number of standard errors allowed for Monte Carlo estimates.
pub const MC_TOLERANCE_SE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub n: usize,
    pub beta: f64,
}

/// Inverse temperature as a function of the lattice depth `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaSchedule {
    Fixed { beta: f64 },
    /// `β̂ (b/s)^{n/2}`, for `b < s`.
    Geometric { beta_hat: f64 },
    /// `β̂/n`, for `b ≥ s`.
    OverN { beta_hat: f64 },
    /// `β̂/√n`, for the `b = s` edge model.
    OverSqrtN { beta_hat: f64 },
    /// `κ_b/n`, for `b = s`.
    Critical,
    Table { entries: Vec<TableEntry> },
}

fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config { field: field.into(), msg: msg.into() }
}

impl BetaSchedule {
    pub fn beta(&self, params: &LatticeParams, n: usize) -> Result<f64> {
        let nf = n as f64;
        match self {
            BetaSchedule::Fixed { beta } => Ok(*beta),
            BetaSchedule::Geometric { beta_hat } => Ok(rgflow::beta_bls(params, *beta_hat, n)),
            BetaSchedule::OverN { beta_hat } => Ok(beta_hat / nf),
            BetaSchedule::OverSqrtN { beta_hat } => Ok(beta_hat / nf.sqrt()),
            BetaSchedule::Critical => Ok(rgflow::kappa(params.b()) / nf),
            BetaSchedule::Table { entries } => entries
                .iter()
                .find(|e| e.n == n)
                .map(|e| e.beta)
                .ok_or_else(|| config_err("schedule.entries", format!("no entry for n = {n}"))),
        }
    }

    /// `β̂` of a rescaled schedule (`κ_b` for the critical one).
    pub fn beta_hat(&self, params: &LatticeParams) -> Option<f64> {
        match self {
            BetaSchedule::Geometric { beta_hat } | BetaSchedule::OverN { beta_hat } | BetaSchedule::OverSqrtN { beta_hat } => Some(*beta_hat),
            BetaSchedule::Critical => Some(rgflow::kappa(params.b())),
            _ => None,
        }
    }

    fn validate(&self, params: &LatticeParams) -> Result<()> {
        let (b, s) = (params.b(), params.s());
        let finite = |field: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(config_err(field, format!("{x} is not a finite nonnegative number")))
            }
        };
        match self {
            BetaSchedule::Fixed { beta } => finite("schedule.beta", *beta),
            BetaSchedule::Geometric { beta_hat } => {
                finite("schedule.beta_hat", *beta_hat)?;
                if b >= s {
                    return Err(config_err("schedule", format!("β̂(b/s)^(n/2) needs b < s, got b={b}, s={s}")));
                }
                Ok(())
            }
            BetaSchedule::OverN { beta_hat } => {
                finite("schedule.beta_hat", *beta_hat)?;
                if b < s {
                    return Err(config_err("schedule", format!("β̂/n needs b >= s, got b={b}, s={s}")));
                }
                Ok(())
            }
            BetaSchedule::OverSqrtN { beta_hat } => {
                finite("schedule.beta_hat", *beta_hat)?;
                if b != s {
                    return Err(config_err("schedule", format!("β̂/√n needs b = s, got b={b}, s={s}")));
                }
                Ok(())
            }
            BetaSchedule::Critical => {
                if b != s {
                    return Err(config_err("schedule", format!("the critical schedule needs b = s, got b={b}, s={s}")));
                }
                Ok(())
            }
            BetaSchedule::Table { entries } => {
                if entries.is_empty() {
                    return Err(config_err("schedule.entries", "empty table"));
                }
                for (i, e) in entries.iter().enumerate() {
                    finite(&format!("schedule.entries[{i}].beta"), e.beta)?;
                    if entries[..i].iter().any(|f| f.n == e.n) {
                        return Err(config_err(&format!("schedule.entries[{i}].n"), format!("duplicate n = {}", e.n)));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Parses `fixed:β`, `geometric:β̂`, `over-n:β̂`, `over-sqrt-n:β̂`, `critical`
/// or `table:n=β,n=β,...`.
impl std::str::FromStr for BetaSchedule {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| config_err("schedule", format!("`{x}`: {e}")));
        match kind.trim() {
            "fixed" => Ok(BetaSchedule::Fixed { beta: num(arg)? }),
            "geometric" => Ok(BetaSchedule::Geometric { beta_hat: num(arg)? }),
            "over-n" => Ok(BetaSchedule::OverN { beta_hat: num(arg)? }),
            "over-sqrt-n" => Ok(BetaSchedule::OverSqrtN { beta_hat: num(arg)? }),
            "critical" => Ok(BetaSchedule::Critical),
            "table" => arg
                .split(',')
                .map(|pair| {
                    let (n, beta) = pair.split_once('=').ok_or_else(|| config_err("schedule", format!("`{pair}` is not n=beta")))?;
                    let n = n.trim().parse().map_err(|e| config_err("schedule", format!("`{n}`: {e}")))?;
                    Ok(TableEntry { n, beta: num(beta)? })
                })
                .collect::<Result<Vec<_>>>()
                .map(|entries| BetaSchedule::Table { entries }),
            other => Err(config_err("schedule", format!("unknown schedule `{other}`"))),
        }
    }
}

fn default_placement() -> Placement {
    Placement::Vertices
}

fn default_alpha() -> f64 {
    0.01
}

fn default_batches() -> usize {
    5
}

/// The operation to run. `replicates` in the enclosing config is the number
/// of independent samples per run or batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// Exact `W_n` on independent disorder fields.
    SampleW {
        #[serde(default = "default_placement")]
        placement: Placement,
    },
    /// Deterministic variance flow selected by the schedule.
    Flow,
    /// Draws from a truncation of `L_r` (`b < s`).
    SampleL {
        r: f64,
        #[serde(default)]
        depth: Option<usize>,
        #[serde(default = "default_leaf")]
        leaf: LeafLaw,
        #[serde(default)]
        variance: LeafVariance,
    },
    /// Repeated two-sample KS tests of the fixed-point property of `L_r`.
    FixedPoint {
        r: f64,
        #[serde(default)]
        depth: Option<usize>,
        #[serde(default = "default_leaf")]
        leaf: LeafLaw,
        #[serde(default = "default_matched")]
        variance: LeafVariance,
        #[serde(default = "default_runs")]
        runs: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// `√n(W_n(β̂/n) − 1)` for `b = s` by population pools.
    Clt {
        #[serde(default = "default_batches")]
        batches: usize,
        #[serde(default = "default_ks_samples")]
        ks_samples: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// `√(log n)(W_n(κ_b/n) − 1)` over `n_grid`.
    Critical {
        #[serde(default = "default_batches")]
        batches: usize,
    },
    /// Averaged quadratic field on a grid of `r ∈ [0, 1]`.
    Process {
        grid: Vec<f64>,
        #[serde(default = "default_batches")]
        batches: usize,
    },
    /// `(W_n − 1)/β_n` coupled with the noise sum (`b > s`).
    BgsLimit,
}

fn default_leaf() -> LeafLaw {
    LeafLaw::ExpGaussian
}

fn default_matched() -> LeafVariance {
    LeafVariance::Matched
}

fn default_runs() -> usize {
    5
}

fn default_ks_samples() -> usize {
    10_000
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::SampleW { .. } => "sample-w",
            Experiment::Flow => "flow",
            Experiment::SampleL { .. } => "sample-l",
            Experiment::FixedPoint { .. } => "fixed-point",
            Experiment::Clt { .. } => "clt",
            Experiment::Critical { .. } => "critical",
            Experiment::Process { .. } => "process",
            Experiment::BgsLimit => "bgs-limit",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Per-row table.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// JSON sidecar holding the [`ResultRecord`].
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub b: u32,
    pub s: u32,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub disorder: DisorderSpec,
    #[serde(default)]
    pub schedule: Option<BetaSchedule>,
    #[serde(default)]
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
    /// Overrides [`WORKERS_ENV`].
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub depth_budget: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<LatticeParams> {
        LatticeParams::new(self.b, self.s).map_err(|e| config_err("b/s", e.to_string()))
    }

    fn n_required(&self) -> Result<usize> {
        match self.n {
            Some(n) if n > 0 => Ok(n),
            Some(_) => Err(config_err("n", "must be positive")),
            None => Err(config_err("n", format!("required by experiment `{}`", self.experiment.name()))),
        }
    }

    fn schedule_required(&self) -> Result<&BetaSchedule> {
        self.schedule.as_ref().ok_or_else(|| config_err("schedule", format!("required by experiment `{}`", self.experiment.name())))
    }

    fn budget(&self) -> usize {
        self.depth_budget.unwrap_or(polymer::DEFAULT_DEPTH_BUDGET)
    }

    /// Field-level validation of the schedule, regime and sizes.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        let (b, s) = (self.b, self.s);
        if let Some(sch) = &self.schedule {
            sch.validate(&params)?;
        }
        if self.workers == Some(0) {
            return Err(config_err("workers", "must be positive"));
        }
        let need_b_lt_s = || {
            if b >= s {
                Err(config_err("b", format!("experiment needs b < s, got b={b}, s={s}")))
            } else {
                Ok(())
            }
        };
        let need_b_eq_s = || {
            if b != s {
                Err(config_err("b", format!("experiment needs b = s, got b={b}, s={s}")))
            } else {
                Ok(())
            }
        };
        let positive_r = |r: f64| {
            if r.is_finite() && r > 0.0 {
                Ok(())
            } else {
                Err(config_err("experiment.r", format!("{r} is not a finite positive number")))
            }
        };
        let positive_batches = |k: usize| if k == 0 { Err(config_err("experiment.batches", "must be positive")) } else { Ok(()) };
        match &self.experiment {
            Experiment::SampleW { placement } => {
                let n = self.n_required()?;
                self.schedule_required()?;
                if n > self.budget() {
                    return Err(Error::DepthTooLarge { depth: n, budget: self.budget() });
                }
                if *placement == Placement::Edges {
                    if let Some(BetaSchedule::Critical) = self.schedule {
                        return Err(config_err("schedule", "the critical schedule belongs to the vertex model"));
                    }
                }
                Ok(())
            }
            Experiment::Flow => {
                self.n_required()?;
                self.schedule_required()?;
                Ok(())
            }
            Experiment::SampleL { r, .. } => {
                need_b_lt_s()?;
                positive_r(*r)
            }
            Experiment::FixedPoint { r, runs, alpha, .. } => {
                need_b_lt_s()?;
                positive_r(*r)?;
                if *runs == 0 {
                    return Err(config_err("experiment.runs", "must be positive"));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(config_err("experiment.alpha", "must lie in (0, 1)"));
                }
                Ok(())
            }
            Experiment::Clt { batches, alpha, .. } => {
                need_b_eq_s()?;
                self.n_required()?;
                positive_batches(*batches)?;
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(config_err("experiment.alpha", "must lie in (0, 1)"));
                }
                match self.schedule_required()? {
                    BetaSchedule::OverN { beta_hat } => {
                        let k = rgflow::kappa(b);
                        if *beta_hat >= k {
                            return Err(config_err("schedule.beta_hat", format!("{beta_hat} is not below κ_b = {k}")));
                        }
                        Ok(())
                    }
                    _ => Err(config_err("schedule", "the CLT experiment needs a β̂/n schedule")),
                }
            }
            Experiment::Critical { batches } => {
                need_b_eq_s()?;
                positive_batches(*batches)?;
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return Err(config_err("n_grid", "needs at least one positive n"));
                }
                match &self.schedule {
                    None | Some(BetaSchedule::Critical) => Ok(()),
                    _ => Err(config_err("schedule", "the critical experiment runs at κ_b/n")),
                }
            }
            Experiment::Process { grid, batches } => {
                need_b_eq_s()?;
                self.n_required()?;
                positive_batches(*batches)?;
                if grid.is_empty() || grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(config_err("experiment.grid", "values must lie in [0, 1]"));
                }
                match self.schedule_required()? {
                    BetaSchedule::OverN { .. } => Ok(()),
                    _ => Err(config_err("schedule", "the process experiment needs a β̂/n schedule")),
                }
            }
            Experiment::BgsLimit => {
                if b <= s {
                    return Err(config_err("b", format!("experiment needs b > s, got b={b}, s={s}")));
                }
                let n = self.n_required()?;
                let beta = self.schedule_required()?.beta(&params, n)?;
                if beta <= 0.0 {
                    return Err(config_err("schedule", "needs a positive β_n"));
                }
                Ok(())
            }
        }
    }

    /// Worker count: the config field, then [`WORKERS_ENV`], then the number
    /// of available cores.
    pub fn resolved_workers(&self) -> usize {
        self.workers
            .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&w: &usize| w > 0))
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

/// One CSV cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Bool(bool),
}

impl Cell {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Cell::Int(i) => i as f64,
            Cell::Real(x) => x,
            Cell::Bool(b) => b as u8 as f64,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x}"),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// Rows in replicate (or step) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample statistics; undefined entries are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: Option<f64>,
    pub se_mean: Option<f64>,
    pub variance: Option<f64>,
    pub se_variance: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Aggregate {
    pub fn from_values(xs: &[f64]) -> Self {
        let m = Moments::from_slice(xs);
        Self {
            count: m.count(),
            mean: finite(m.mean()),
            se_mean: finite(m.se_mean()),
            variance: finite(m.variance()),
            se_variance: finite(m.se_variance()),
            skewness: finite(m.skewness()),
            kurtosis: finite(m.kurtosis()),
        }
    }
}

/// A named scalar produced by a run, with its standard error when it is a
/// Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub r: Option<f64>,
    pub value: f64,
    #[serde(default)]
    pub se: Option<f64>,
}

impl Estimate {
    fn new(name: &str, value: f64, se: Option<f64>) -> Self {
        Self { name: name.into(), n: None, r: None, value, se }
    }

    fn at_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    fn at_r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngProvenance {
    pub generator: String,
    pub master_seed: u64,
    pub derivation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub workers: usize,
    pub rng: RngProvenance,
    /// Statistics of the primary column of [`ResultRecord::table`].
    pub aggregate: Option<Aggregate>,
    pub primary_column: Option<String>,
    pub estimates: Vec<Estimate>,
    pub ks: Vec<KsResult>,
    /// Module-level report, when the operation produces one.
    pub report: Option<serde_json::Value>,
    #[serde(skip)]
    pub table: Table,
}

struct Outcome {
    table: Table,
    primary: Option<&'static str>,
    estimates: Vec<Estimate>,
    ks: Vec<KsResult>,
    report: Option<serde_json::Value>,
}

impl Outcome {
    fn table(table: Table, primary: &'static str) -> Self {
        Self { table, primary: Some(primary), estimates: Vec::new(), ks: Vec::new(), report: None }
    }
}

fn to_json<T: Serialize>(x: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(x)?)
}

fn sample_w(cfg: &ExperimentConfig, params: LatticeParams, placement: Placement) -> Result<Outcome> {
    let n = cfg.n_required()?;
    let beta = cfg.schedule_required()?.beta(&params, n)?;
    cfg.disorder.lambda(beta)?;
    let rows = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(cfg.master_seed, i);
            let field = DisorderField::new(params, n, seed, placement, cfg.disorder.clone())?;
            let w = match placement {
                Placement::Vertices => polymer::w_recursive_with_budget(&field, beta, &crate::lattice::SubgraphAddress::root(n), cfg.budget())?,
                Placement::Edges => polymer::partition(&field, beta)?.w,
            };
            Ok(vec![Cell::Int(i), Cell::Int(seed), Cell::Real(beta), Cell::Real(w), Cell::Real(w.ln())])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["replicate", "seed", "beta", "w", "log_w"]);
    table.rows = rows;
    let mut out = Outcome::table(table, "w");
    let agg = Aggregate::from_values(&out.table.column("w").unwrap_or_default());
    if let (Some(m), Some(v)) = (agg.mean, agg.variance) {
        out.estimates.push(Estimate::new("mean", m, agg.se_mean).at_n(n));
        out.estimates.push(Estimate::new("variance", v, agg.se_variance).at_n(n));
    }
    Ok(out)
}

fn flow(cfg: &ExperimentConfig, params: LatticeParams) -> Result<Outcome> {
    let n = cfg.n_required()?;
    let sch = cfg.schedule_required()?;
    let spec = cfg.disorder.clone();
    let b = params.b();
    let (trace, scale, name) = match sch {
        BetaSchedule::Fixed { .. } | BetaSchedule::Table { .. } => {
            (rgflow::sigma_recursion(&params, &spec, sch.beta(&params, n)?, n)?, 1.0, "variance")
        }
        BetaSchedule::Geometric { beta_hat } => {
            (FlowMap::new(FlowKind::MnBls { beta_hat: *beta_hat, n }, params, spec)?.iterate(n, Precision::Double), 1.0, "variance")
        }
        BetaSchedule::OverN { beta_hat } if b == params.s() => {
            (rgflow::variance_flow_beq(&params, &spec, *beta_hat, n, BeqVariant::Exact, None, Precision::DoubleDouble)?, 1.0, "scaled-variance")
        }
        BetaSchedule::OverN { beta_hat } => {
            let beta = beta_hat / n as f64;
            (FlowMap::new(FlowKind::MnBgs { beta }, params, spec)?.iterate(n, Precision::Double), 1.0, "scaled-variance")
        }
        BetaSchedule::OverSqrtN { beta_hat } => {
            let beta = beta_hat / (n as f64).sqrt();
            (FlowMap::new(FlowKind::EdgeExact { beta }, params, spec)?.iterate(n, Precision::DoubleDouble), n as f64, "scaled-variance")
        }
        BetaSchedule::Critical => {
            let k = rgflow::kappa(b);
            let t = rgflow::variance_flow_beq(&params, &spec, k, n, BeqVariant::Exact, None, Precision::DoubleDouble)?;
            (t, (n as f64).ln() / n as f64, "critical-scaled-variance")
        }
    };
    let mut table = Table::new(&["k", "value"]);
    table.rows = trace.values.iter().enumerate().map(|(k, v)| vec![Cell::Int(k as u64), Cell::Real(scale * v)]).collect();
    let last = scale * trace.last();
    let mut out = Outcome::table(table, "value");
    out.primary = None;
    out.estimates.push(Estimate::new(name, last, None).at_n(n));
    out.report = Some(serde_json::json!({ "blow_up_index": trace.blow_up_index }));
    Ok(out)
}

fn sample_l(cfg: &ExperimentConfig, params: LatticeParams, r: f64, depth: Option<usize>, leaf: LeafLaw, variance: LeafVariance) -> Result<Outcome> {
    let depth = depth.unwrap_or_else(|| limitlaw::default_depth(&params, r));
    let sampler = LimitLawSampler::new(params, r, depth, leaf, variance)?;
    let values: Vec<f64> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| sampler.sample(&mut rng::replicate(cfg.master_seed, i)))
        .collect();
    let mut table = Table::new(&["replicate", "value"]);
    table.rows = values.iter().enumerate().map(|(i, &x)| vec![Cell::Int(i as u64), Cell::Real(x)]).collect();
    let agg = Aggregate::from_values(&values);
    let mut out = Outcome::table(table, "value");
    if let (Some(m), Some(v)) = (agg.mean, agg.variance) {
        out.estimates.push(Estimate::new("mean", m, agg.se_mean).at_r(r));
        out.estimates.push(Estimate::new("variance", v, agg.se_variance).at_r(r));
    }
    out.report = Some(serde_json::json!({ "depth": depth, "leaf_variance": sampler.leaf_variance() }));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn fixed_point(
    cfg: &ExperimentConfig,
    params: LatticeParams,
    r: f64,
    depth: Option<usize>,
    leaf: LeafLaw,
    variance: LeafVariance,
    runs: usize,
    alpha: f64,
) -> Result<Outcome> {
    let depth = depth.unwrap_or_else(|| limitlaw::default_depth(&params, r));
    let reports = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::replicate(cfg.master_seed, i);
            limitlaw::fixed_point_test(&params, r, depth, cfg.replicates, leaf, variance, SamplingMethod::Direct, alpha, 0, &mut g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["run", "statistic", "critical", "p_value", "passes"]);
    table.rows = reports
        .iter()
        .enumerate()
        .map(|(i, rep)| vec![Cell::Int(i as u64), Cell::Real(rep.ks.statistic), Cell::Real(rep.ks.critical), Cell::Real(rep.ks.p_value), Cell::Bool(rep.ks.passes())])
        .collect();
    let passed = reports.iter().filter(|rep| rep.ks.passes()).count();
    let mut out = Outcome::table(table, "statistic");
    out.ks = reports.iter().map(|rep| rep.ks).collect();
    out.estimates.push(Estimate::new("pass-fraction", passed as f64 / runs as f64, None).at_r(r));
    out.report = Some(serde_json::json!({ "depth": depth, "passed": passed, "runs": runs }));
    Ok(out)
}

fn clt(cfg: &ExperimentConfig, params: LatticeParams, batches: usize, ks_samples: usize, alpha: f64) -> Result<Outcome> {
    let n = cfg.n_required()?;
    let beta_hat = cfg.schedule_required()?.beta_hat(&params).ok_or_else(|| config_err("schedule", "needs β̂"))?;
    let plan = PoolPlan { pool_size: cfg.replicates, batches };
    let rep = fluctuation::clt_experiment_beq(&params, &cfg.disorder, beta_hat, n, plan, ks_samples, alpha, cfg.master_seed)?;
    let mut table = Table::new(&["batch", "ks_statistic", "ks_p_value", "ks_passes"]);
    table.rows = rep.ks.iter().enumerate().map(|(i, k)| vec![Cell::Int(i as u64), Cell::Real(k.statistic), Cell::Real(k.p_value), Cell::Bool(k.passes())]).collect();
    let mut out = Outcome::table(table, "ks_statistic");
    out.primary = None;
    out.estimates.push(Estimate::new("variance", rep.variance.value, Some(rep.variance.se)).at_n(n));
    out.estimates.push(Estimate::new("skewness", rep.skewness.value, Some(rep.skewness.se)).at_n(n));
    out.estimates.push(Estimate::new("kurtosis", rep.kurtosis.value, Some(rep.kurtosis.se)).at_n(n));
    out.ks = rep.ks.clone();
    out.report = Some(to_json(&rep)?);
    Ok(out)
}

fn critical(cfg: &ExperimentConfig, params: LatticeParams, batches: usize) -> Result<Outcome> {
    let plan = PoolPlan { pool_size: cfg.replicates, batches };
    let rep = fluctuation::critical_experiment(&params, &cfg.disorder, &cfg.n_grid, plan, cfg.master_seed)?;
    let mut table = Table::new(&["n", "reference", "variance", "se"]);
    table.rows = rep
        .rows
        .iter()
        .map(|r| vec![Cell::Int(r.n as u64), Cell::Real(r.reference), Cell::Real(r.variance.value), Cell::Real(r.variance.se)])
        .collect();
    let mut out = Outcome::table(table, "variance");
    out.primary = None;
    for r in &rep.rows {
        out.estimates.push(Estimate::new("critical-scaled-variance", r.variance.value, Some(r.variance.se)).at_n(r.n));
    }
    out.report = Some(to_json(&rep)?);
    Ok(out)
}

fn process(cfg: &ExperimentConfig, params: LatticeParams, grid: &[f64], batches: usize) -> Result<Outcome> {
    let n = cfg.n_required()?;
    let beta_hat = cfg.schedule_required()?.beta_hat(&params).ok_or_else(|| config_err("schedule", "needs β̂"))?;
    let plan = PoolPlan { pool_size: cfg.replicates, batches };
    let rep = fluctuation::process_experiment(&params, &cfg.disorder, beta_hat, n, grid, plan, cfg.master_seed)?;
    let mut table = Table::new(&["r", "level", "variance", "se", "flow_variance", "limit_variance"]);
    table.rows = rep
        .points
        .iter()
        .map(|p| {
            vec![
                Cell::Real(p.r),
                Cell::Int(p.level as u64),
                Cell::Real(p.variance.value),
                Cell::Real(p.variance.se),
                Cell::Real(p.flow_variance),
                Cell::Real(p.limit_variance),
            ]
        })
        .collect();
    let mut out = Outcome::table(table, "variance");
    out.primary = None;
    for p in &rep.points {
        out.estimates.push(Estimate::new("process-variance", p.variance.value, Some(p.variance.se)).at_n(n).at_r(p.r));
    }
    out.report = Some(serde_json::json!({ "points": to_json(&rep.points)?, "increments": to_json(&rep.increments)? }));
    Ok(out)
}

fn bgs_limit(cfg: &ExperimentConfig, params: LatticeParams) -> Result<Outcome> {
    let n = cfg.n_required()?;
    let beta = cfg.schedule_required()?.beta(&params, n)?;
    let sampler = WeightSampler::new(cfg.disorder.clone(), beta)?;
    let rows: Vec<Vec<Cell>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let (w, l) = fluctuation::coupled_w_and_noise_sum(&params, &sampler, n, &mut rng::replicate(cfg.master_seed, i));
            vec![Cell::Int(i), Cell::Real((w - 1.0) / beta), Cell::Real(l)]
        })
        .collect();
    let mut table = Table::new(&["replicate", "field", "noise_sum"]);
    table.rows = rows;
    let field = table.column("field").unwrap_or_default();
    let noise = table.column("noise_sum").unwrap_or_default();
    let diff: Vec<f64> = field.iter().zip(&noise).map(|(f, l)| (f - l).powi(2)).collect();
    let mut out = Outcome::table(table, "field");
    let (fa, na, da) = (Aggregate::from_values(&field), Aggregate::from_values(&noise), Aggregate::from_values(&diff));
    if let (Some(fv), Some(nv), Some(dm)) = (fa.variance, na.variance, da.mean) {
        out.estimates.push(Estimate::new("field-variance", fv, fa.se_variance).at_n(n));
        out.estimates.push(Estimate::new("noise-variance", nv, na.se_variance).at_n(n));
        out.estimates.push(Estimate::new("mean-square-difference", dm, da.se_mean).at_n(n));
    }
    out.report = Some(serde_json::json!({
        "beta": beta,
        "noise_variance_exact": rgflow::noise_sum_variance(&params, n),
        "limit_variance": rgflow::affine_fixed_point(&params),
    }));
    Ok(out)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome> {
    let params = cfg.params()?;
    match &cfg.experiment {
        Experiment::SampleW { placement } => sample_w(cfg, params, *placement),
        Experiment::Flow => flow(cfg, params),
        Experiment::SampleL { r, depth, leaf, variance } => sample_l(cfg, params, *r, *depth, *leaf, *variance),
        Experiment::FixedPoint { r, depth, leaf, variance, runs, alpha } => fixed_point(cfg, params, *r, *depth, *leaf, *variance, *runs, *alpha),
        Experiment::Clt { batches, ks_samples, alpha } => clt(cfg, params, *batches, *ks_samples, *alpha),
        Experiment::Critical { batches } => critical(cfg, params, *batches),
        Experiment::Process { grid, batches } => process(cfg, params, grid, *batches),
        Experiment::BgsLimit => bgs_limit(cfg, params),
    }
}

/// Validates and executes `config`. Sampling experiments with zero
/// replicates return an empty aggregate.
pub fn run(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    let workers = config.resolved_workers();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Io(e.to_string()))?;
    let start = Instant::now();
    let outcome = if config.replicates == 0 && config.experiment != Experiment::Flow {
        Outcome { table: Table::default(), primary: None, estimates: Vec::new(), ks: Vec::new(), report: None }
    } else {
        pool.install(|| dispatch(config))?
    };
    let aggregate = match outcome.primary {
        Some(col) => Some(Aggregate::from_values(&outcome.table.column(col).unwrap_or_default())),
        None if config.replicates == 0 && config.experiment != Experiment::Flow => Some(Aggregate::default()),
        None => None,
    };
    Ok(ResultRecord {
        config: config.clone(),
        version: VERSION.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        workers,
        rng: RngProvenance {
            generator: "ChaCha8 keyed by (master seed, domain tag, 128-bit counter)".into(),
            master_seed: config.master_seed,
            derivation: "replicate i: stream(master, REPLICATE, i); disorder field of replicate i: derive_seed(master, i); pool batch j: replicate(derive_seed(master, label), j)".into(),
        },
        aggregate,
        primary_column: outcome.primary.map(str::to_string),
        estimates: outcome.estimates,
        ks: outcome.ks,
        report: outcome.report,
        table: outcome.table,
    })
}

/// Writes the CSV table and the JSON sidecar to the configured paths.
pub fn write_outputs(record: &ResultRecord) -> Result<()> {
    if let Some(p) = &record.config.output.csv {
        record.table.write_csv(p)?;
    }
    if let Some(p) = &record.config.output.summary {
        std::fs::write(p, serde_json::to_string_pretty(record)?)?;
    }
    Ok(())
}

/// How a comparison is judged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Tolerance {
    StandardErrors(f64),
    Relative(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub b: u32,
    pub s: u32,
    pub n: Option<usize>,
    pub r: Option<f64>,
    pub statistic: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub target_name: String,
    pub target: f64,
    pub tolerance: Tolerance,
    pub within: bool,
}

struct Target {
    name: &'static str,
    value: f64,
    tolerance: Tolerance,
}

fn judge(estimate: &Estimate, t: &Target) -> bool {
    let gap = (estimate.value - t.value).abs();
    match t.tolerance {
        Tolerance::StandardErrors(k) => estimate.se.is_some_and(|se| gap <= k * se),
        Tolerance::Relative(eps) => gap <= eps * t.value.abs(),
    }
}

fn mc(name: &'static str, value: f64) -> Target {
    Target { name, value, tolerance: Tolerance::StandardErrors(MC_TOLERANCE_SE) }
}

fn limit(name: &'static str, value: f64) -> Target {
    Target { name, value, tolerance: Tolerance::Relative(DETERMINISTIC_TOLERANCE) }
}

/// Closed-form and finite-`n` targets for one estimate.
fn targets(cfg: &ExperimentConfig, e: &Estimate) -> Vec<Target> {
    let Ok(params) = cfg.params() else { return Vec::new() };
    let (b, s) = (params.b(), params.s());
    let spec = &cfg.disorder;
    let n = e.n.or(cfg.n);
    let beta_hat = cfg.schedule.as_ref().and_then(|sch| sch.beta_hat(&params));
    let mut out = Vec::new();
    match (&cfg.experiment, e.name.as_str()) {
        (Experiment::SampleW { .. }, "mean") => out.push(mc("one", 1.0)),
        (Experiment::SampleW { placement }, "variance") => {
            if let (Some(n), Some(sch)) = (n, &cfg.schedule) {
                if let Ok(beta) = sch.beta(&params, n) {
                    let v = match placement {
                        Placement::Vertices => rgflow::sigma_recursion(&params, spec, beta, n).map(|t| t.last()),
                        Placement::Edges => FlowMap::new(FlowKind::EdgeExact { beta }, params, spec.clone()).map(|m| m.final_value(m.initial(), n, Precision::Double).0),
                    };
                    if let Ok(v) = v {
                        out.push(mc("flow variance", v));
                    }
                }
            }
        }
        (Experiment::SampleL { .. }, "mean") => out.push(mc("one", 1.0)),
        (Experiment::SampleL { r, .. }, "variance") => {
            if let Ok(v) = rgflow::limiting_variance(&params, *r, 1e-13) {
                out.push(mc("limiting variance 𝔳(r)", v));
            }
        }
        (Experiment::Flow, "variance") => {
            if let (Some(BetaSchedule::Geometric { beta_hat }), true) = (&cfg.schedule, b < s) {
                if let Ok(v) = rgflow::variance_limit_bls_target(&params, *beta_hat, 1e-13) {
                    out.push(limit("𝔳(β̂²(s−1)/(s−b))", v));
                }
            }
        }
        (Experiment::Flow, "scaled-variance") => match (&cfg.schedule, beta_hat) {
            (Some(BetaSchedule::OverN { .. }), Some(bh)) if b == s => {
                if let Ok(v) = rgflow::upsilon(b, bh) {
                    out.push(limit("υ_b(β̂)", v));
                }
            }
            (Some(BetaSchedule::OverN { .. }), _) if b > s => out.push(limit("affine fixed point (s−1)/(b−s)", rgflow::affine_fixed_point(&params))),
            (Some(BetaSchedule::OverSqrtN { .. }), Some(bh)) => {
                if let Ok(v) = rgflow::upsilon_edge(b, bh) {
                    out.push(limit("υ_edge(β̂)", v));
                }
            }
            _ => {}
        },
        (Experiment::Flow | Experiment::Critical { .. }, "critical-scaled-variance") => {
            out.push(Target { name: "6/(b+1)", value: 6.0 / (b as f64 + 1.0), tolerance: Tolerance::Relative(0.2) });
            if matches!(cfg.experiment, Experiment::Critical { .. }) {
                if let Some(n) = n {
                    if let Ok(v) = fluctuation::critical_scaled_flow(&params, spec, n, BeqVariant::Exact) {
                        out.push(mc("finite-n flow", v));
                    }
                }
            }
        }
        (Experiment::Clt { .. }, "variance") => {
            if let Some(bh) = beta_hat {
                if let Ok(v) = rgflow::upsilon(b, bh) {
                    out.push(limit("υ_b(β̂)", v));
                }
                if let Some(n) = n {
                    if let Ok(v) = rgflow::beq_final(&params, spec, bh, n, BeqVariant::Exact, Precision::DoubleDouble) {
                        out.push(mc("finite-n flow", v));
                    }
                }
            }
        }
        (Experiment::Clt { .. }, "skewness") => out.push(mc("normal skewness", 0.0)),
        (Experiment::Clt { .. }, "kurtosis") => out.push(mc("normal kurtosis", 3.0)),
        (Experiment::Process { .. }, "process-variance") => {
            if let (Some(bh), Some(r)) = (beta_hat, e.r) {
                out.push(limit("τ_r", rgflow::tau(b, bh, r)));
            }
        }
        (Experiment::BgsLimit, "noise-variance") => out.push(limit("(s−1)/(b−s)", rgflow::affine_fixed_point(&params))),
        (Experiment::BgsLimit, "field-variance") => out.push(limit("affine fixed point (s−1)/(b−s)", rgflow::affine_fixed_point(&params))),
        _ => {}
    }
    out
}

/// Joins every estimate of every record with its targets.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for rec in records {
        for e in &rec.estimates {
            for t in targets(&rec.config, e) {
                rows.push(SummaryRow {
                    experiment: rec.config.experiment.name().to_string(),
                    b: rec.config.b,
                    s: rec.config.s,
                    n: e.n,
                    r: e.r,
                    statistic: e.name.clone(),
                    estimate: e.value,
                    se: e.se,
                    target_name: t.name.to_string(),
                    target: t.value,
                    tolerance: t.tolerance,
                    within: judge(e, &t),
                });
            }
        }
    }
    rows
}

/// Loads every JSON sidecar matching `pattern` (in path order). Documents
/// without the record keys, such as configs, are skipped.
pub fn load_records(pattern: &str) -> Result<Vec<ResultRecord>> {
    let paths = glob::glob(pattern).map_err(|e| config_err("glob", e.to_string()))?;
    let mut out = Vec::new();
    for p in paths {
        let p = p.map_err(|e| Error::Io(e.to_string()))?;
        let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
        if value.get("config").is_some() && value.get("rng").is_some() {
            out.push(serde_json::from_value(value)?);
        }
    }
    Ok(out)
}

/// Writes a summary table as CSV.
pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["experiment", "b", "s", "n", "r", "statistic", "estimate", "se", "target_name", "target", "tolerance", "within"])?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in rows {
        let tol = match r.tolerance {
            Tolerance::StandardErrors(k) => format!("{k} se"),
            Tolerance::Relative(e) => format!("{e} rel"),
        };
        w.write_record([
            r.experiment.clone(),
            r.b.to_string(),
            r.s.to_string(),
            opt(r.n.map(|n| n.to_string())),
            opt(r.r.map(|x| x.to_string())),
            r.statistic.clone(),
            r.estimate.to_string(),
            opt(r.se.map(|x| x.to_string())),
            r.target_name.clone(),
            r.target.to_string(),
            tol,
            r.within.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_w_config(replicates: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{"experiment": {{"kind": "sample-w"}}, "b": 2, "s": 2, "n": 3,
                "schedule": {{"kind": "fixed", "beta": 0.4}}, "replicates": {replicates}, "master_seed": 11}}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_replicates_give_an_empty_aggregate() {
        let rec = run(&sample_w_config(0)).unwrap();
        assert!(rec.table.rows.is_empty());
        assert_eq!(rec.aggregate, Some(Aggregate::default()));
    }

    #[test]
    fn serial_and_parallel_runs_agree() {
        let mut cfg = sample_w_config(40);
        cfg.workers = Some(1);
        let a = run(&cfg).unwrap();
        cfg.workers = Some(3);
        let b = run(&cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn schedules_match_closed_forms() {
        let p = LatticeParams::new(2, 2).unwrap();
        for n in [1usize, 2, 7, 100, 1000] {
            let nf = n as f64;
            assert_eq!(BetaSchedule::OverN { beta_hat: 2.0 }.beta(&p, n).unwrap(), 2.0 / nf);
            assert_eq!(BetaSchedule::OverSqrtN { beta_hat: 2.0 }.beta(&p, n).unwrap(), 2.0 / nf.sqrt());
            let k = std::f64::consts::PI * 2f64.sqrt() / std::f64::consts::SQRT_2;
            assert!((BetaSchedule::Critical.beta(&p, n).unwrap() - k / nf).abs() <= 1e-15);
        }
        let q = LatticeParams::new(2, 3).unwrap();
        for n in [1usize, 4, 9] {
            let want = 0.8 * (2.0f64 / 3.0).powf(n as f64 / 2.0);
            assert!((BetaSchedule::Geometric { beta_hat: 0.8 }.beta(&q, n).unwrap() - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn schedule_strings() {
        assert_eq!("over-n:2".parse::<BetaSchedule>().unwrap(), BetaSchedule::OverN { beta_hat: 2.0 });
        assert_eq!("critical".parse::<BetaSchedule>().unwrap(), BetaSchedule::Critical);
        assert_eq!(
            "table:4=0.1, 6=0.2".parse::<BetaSchedule>().unwrap(),
            BetaSchedule::Table { entries: vec![TableEntry { n: 4, beta: 0.1 }, TableEntry { n: 6, beta: 0.2 }] }
        );
        assert!("warm:1".parse::<BetaSchedule>().is_err());
    }

    #[test]
    fn regime_errors_name_the_field() {
        let bad = r#"{"experiment": {"kind": "sample-l", "r": 1.0}, "b": 3, "s": 2, "replicates": 5, "master_seed": 1}"#;
        match run(&ExperimentConfig::from_json(bad).unwrap()) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "b"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"experiment": {"kind": "flow"}, "b": 2, "s": 2, "n": 4,
                      "schedule": {"kind": "geometric", "beta_hat": 0.5}, "master_seed": 1}"#;
        assert!(matches!(run(&ExperimentConfig::from_json(bad).unwrap()), Err(Error::Config { field, .. }) if field == "schedule"));
        assert!(ExperimentConfig::from_json(r#"{"experiment": {"kind": "flow"}, "b": 2, "s": 2, "bogus": 1, "master_seed": 1}"#).is_err());
    }

    #[test]
    fn summary_targets() {
        assert!(summarize(&[]).is_empty());
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment": {"kind": "flow"}, "b": 2, "s": 2, "n": 64, "schedule": {"kind": "critical"}, "master_seed": 0}"#,
        )
        .unwrap();
        let rows = summarize(&[run(&cfg).unwrap()]);
        assert_eq!(rows[0].target, 2.0);
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment": {"kind": "flow"}, "b": 2, "s": 2, "n": 10000, "schedule": {"kind": "over-n", "beta_hat": 2.0}, "master_seed": 0}"#,
        )
        .unwrap();
        let rows = summarize(&[run(&cfg).unwrap()]);
        assert!((rows[0].target - 2.0 * 1f64.tan()).abs() < 1e-12);
        assert!(rows[0].within);
    }
}
