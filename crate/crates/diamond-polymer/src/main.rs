use clap::{Args, Parser, Subcommand, ValueEnum};
use diamond_polymer::disorder::{DisorderSpec, Placement};
use diamond_polymer::expcli::{self, BetaSchedule, Experiment, ExperimentConfig, OutputPaths, ResultRecord};
use diamond_polymer::limitlaw::{LeafLaw, LeafVariance};
use diamond_polymer::rgflow::{self, BeqVariant, FlowKind, FlowMap, Precision};
use diamond_polymer::{fluctuation, lattice, Error, LatticeParams, Result};
use serde::de::DeserializeOwned;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "diamond-polymer", version, about = "Directed polymers on diamond hierarchical lattices")]
struct Cli {
    /// Worker threads for replicate loops.
    #[arg(long, global = true, env = expcli::WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lattice counts.
    Lattice {
        #[command(subcommand)]
        cmd: LatticeCmd,
    },
    /// Monte Carlo partition functions.
    Mc {
        #[command(subcommand)]
        cmd: McCmd,
    },
    /// Deterministic variance flows.
    Moments {
        #[command(subcommand)]
        cmd: MomentsCmd,
    },
    /// Limit laws for b < s.
    Limits {
        #[command(subcommand)]
        cmd: LimitsCmd,
    },
    /// Fluctuation fields for b = s.
    Fluct {
        #[command(subcommand)]
        cmd: FluctCmd,
    },
    /// Config-driven experiments.
    Experiment {
        #[command(subcommand)]
        cmd: ExperimentCmd,
    },
}

#[derive(Args, Clone)]
struct Lat {
    #[arg(long, default_value_t = 2)]
    b: u32,
    #[arg(long, default_value_t = 2)]
    s: u32,
}

fn kebab<T: DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(text.to_string())).map_err(|e| e.to_string())
}

fn disorder(text: &str) -> std::result::Result<DisorderSpec, String> {
    if let Some(path) = text.strip_prefix('@') {
        let body = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        return DisorderSpec::discrete_from_json(&body).map_err(|e| e.to_string());
    }
    serde_json::from_value(serde_json::json!({ "family": text })).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Edge, vertex and path counts of D_n as JSON.
    Info {
        #[command(flatten)]
        lat: Lat,
        #[arg(long)]
        n: usize,
    },
}

#[derive(Subcommand)]
enum McCmd {
    /// One exact W_n per replicate: CSV columns replicate, seed, beta, w, log_w.
    SampleW {
        #[command(flatten)]
        lat: Lat,
        #[arg(long)]
        n: usize,
        /// fixed:β | geometric:β̂ | over-n:β̂ | over-sqrt-n:β̂ | critical | table:n=β,...
        #[arg(long)]
        beta_schedule: BetaSchedule,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// standard-gaussian | rademacher | uniform-scaled | @discrete.json
        #[arg(long, default_value = "standard-gaussian", value_parser = disorder)]
        disorder: DisorderSpec,
        /// vertices | edges
        #[arg(long, default_value = "vertices", value_parser = kebab::<Placement>)]
        placement: Placement,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Sigma,
    Mhat,
    MnBls,
    MnBeq,
    MhatnBeq,
    MtildenBeq,
    MnBgs,
    MhatnBgs,
    EdgeExact,
    EdgeSecondMoment,
}

#[derive(Subcommand)]
enum MomentsCmd {
    /// Iterates one map from its natural starting point: CSV columns k, value.
    Iterate {
        #[arg(long, value_enum)]
        map: MapArg,
        #[command(flatten)]
        lat: Lat,
        /// Rescaled inverse temperature.
        #[arg(long)]
        beta_hat: Option<f64>,
        /// Raw inverse temperature, for sigma and the edge maps.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        n: usize,
        /// Iteration count (defaults to n).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "double", value_parser = kebab::<Precision>)]
        precision: Precision,
        #[arg(long, default_value = "standard-gaussian", value_parser = disorder)]
        disorder: DisorderSpec,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// (log n / n)·M^n(0) at β̂ = κ_b for the exact, quadratic and cubic maps.
    Critical {
        #[arg(long, default_value_t = 2)]
        b: u32,
        #[arg(long, value_delimiter = ',', default_value = "10000,100000,1000000")]
        n_grid: Vec<usize>,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LimitsCmd {
    /// Samples of a truncation of L_r: CSV columns replicate, value.
    #[command(name = "sample-L", alias = "sample-l")]
    SampleL {
        #[arg(long, default_value_t = 2)]
        b: u32,
        #[arg(long, default_value_t = 3)]
        s: u32,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// gaussian | exp-gaussian | shifted-rademacher | gamma
        #[arg(long, default_value = "exp-gaussian", value_parser = kebab::<LeafLaw>)]
        leaf: LeafLaw,
        /// nominal | matched
        #[arg(long, default_value = "nominal", value_parser = kebab::<LeafVariance>)]
        variance: LeafVariance,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-sample KS test of the fixed-point property; prints JSON {ks, p_value, n}.
    FixedPoint {
        #[arg(long, default_value_t = 2)]
        b: u32,
        #[arg(long, default_value_t = 3)]
        s: u32,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "exp-gaussian", value_parser = kebab::<LeafLaw>)]
        leaf: LeafLaw,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct PoolArgs {
    #[command(flatten)]
    lat: Lat,
    #[arg(long)]
    beta_hat: f64,
    #[arg(long)]
    n: usize,
    /// Pool size per batch.
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    #[arg(long, default_value_t = 5)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "standard-gaussian", value_parser = disorder)]
    disorder: DisorderSpec,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FluctCmd {
    /// √n(W_n(β̂/n) − 1) against the Gaussian limit.
    Clt {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long, default_value_t = 10_000)]
        ks_samples: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Averaged quadratic field on a grid of r in [0, 1].
    Process {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
        grid: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Runs a JSON config, writing its CSV table and JSON sidecar.
    Run { config: PathBuf },
    /// Compares sidecars matching a glob with closed-form targets (CSV).
    Summarize {
        pattern: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base_config(experiment: Experiment, b: u32, s: u32, seed: u64, workers: Option<usize>) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        b,
        s,
        n: None,
        n_grid: Vec::new(),
        disorder: DisorderSpec::default(),
        schedule: None,
        replicates: 0,
        master_seed: seed,
        output: OutputPaths::default(),
        workers,
        depth_budget: None,
    }
}

/// Writes a line to stdout; a closed pipe ends output silently.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(x: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(x)?)
}

fn finish(record: &ResultRecord, report_out: Option<&PathBuf>) -> Result<()> {
    expcli::write_outputs(record)?;
    let text = serde_json::to_string_pretty(record)?;
    match report_out {
        Some(p) => std::fs::write(p, text)?,
        None => emit(&text)?,
    }
    Ok(())
}

fn flow_kind(map: MapArg, params: &LatticeParams, beta_hat: Option<f64>, beta: Option<f64>, n: usize) -> Result<FlowKind> {
    let need = |x: Option<f64>, name: &str| x.ok_or_else(|| Error::Config { field: name.into(), msg: "required by this map".into() });
    let nf = n as f64;
    Ok(match map {
        MapArg::Sigma => FlowKind::Sigma { beta: match beta {
            Some(b) => b,
            None => rgflow::beta_bls(params, need(beta_hat, "beta")?, n),
        } },
        MapArg::Mhat => FlowKind::Mhat,
        MapArg::MnBls => FlowKind::MnBls { beta_hat: need(beta_hat, "beta-hat")?, n },
        MapArg::MnBeq => FlowKind::MnBeq { beta_hat: need(beta_hat, "beta-hat")?, n },
        MapArg::MhatnBeq => FlowKind::MhatnBeq { beta_hat: need(beta_hat, "beta-hat")?, n },
        MapArg::MtildenBeq => FlowKind::MtildenBeq { beta_hat: need(beta_hat, "beta-hat")?, n },
        MapArg::MnBgs => FlowKind::MnBgs { beta: beta.map_or_else(|| need(beta_hat, "beta-hat").map(|bh| bh / nf), Ok)? },
        MapArg::MhatnBgs => FlowKind::MhatnBgs,
        MapArg::EdgeExact => FlowKind::EdgeExact { beta: beta.map_or_else(|| need(beta_hat, "beta-hat").map(|bh| bh / nf.sqrt()), Ok)? },
        MapArg::EdgeSecondMoment => FlowKind::EdgeSecondMoment { beta: need(beta, "beta")? },
    })
}

fn write_rows(path: Option<&PathBuf>, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let sink: Box<dyn std::io::Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    match cli.command {
        Command::Lattice { cmd: LatticeCmd::Info { lat, n } } => print_json(&lattice::info(&LatticeParams::new(lat.b, lat.s)?, n)),
        Command::Mc { cmd: McCmd::SampleW { lat, n, beta_schedule, replicates, seed, disorder, placement, out, summary } } => {
            let mut cfg = base_config(Experiment::SampleW { placement }, lat.b, lat.s, seed, workers);
            cfg.n = Some(n);
            cfg.schedule = Some(beta_schedule);
            cfg.replicates = replicates;
            cfg.disorder = disorder;
            cfg.output = OutputPaths { csv: Some(out), summary };
            let rec = expcli::run(&cfg)?;
            expcli::write_outputs(&rec)?;
            print_json(&rec.aggregate)
        }
        Command::Moments { cmd: MomentsCmd::Iterate { map, lat, beta_hat, beta, n, steps, precision, disorder, emit } } => {
            let params = LatticeParams::new(lat.b, lat.s)?;
            let m = FlowMap::new(flow_kind(map, &params, beta_hat, beta, n)?, params, disorder)?;
            let trace = m.iterate(steps.unwrap_or(n), precision);
            let rows = trace.values.iter().enumerate().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect();
            write_rows(emit.as_ref(), &["k", "value"], rows)?;
            if emit.is_some() {
                print_json(&serde_json::json!({ "final": trace.last(), "blow_up_index": trace.blow_up_index }))?;
            }
            Ok(())
        }
        Command::Moments { cmd: MomentsCmd::Critical { b, n_grid, emit } } => {
            let params = LatticeParams::new(b, b)?;
            let spec = DisorderSpec::default();
            let mut rows = Vec::new();
            for n in n_grid {
                let mut row = vec![n.to_string()];
                for v in [BeqVariant::Exact, BeqVariant::Quadratic, BeqVariant::Cubic] {
                    row.push(fluctuation::critical_scaled_flow(&params, &spec, n, v)?.to_string());
                }
                row.push((6.0 / (b as f64 + 1.0)).to_string());
                rows.push(row);
            }
            write_rows(emit.as_ref(), &["n", "exact", "quadratic", "cubic", "target"], rows)
        }
        Command::Limits { cmd: LimitsCmd::SampleL { b, s, r, depth, samples, seed, leaf, variance, out } } => {
            let mut cfg = base_config(Experiment::SampleL { r, depth, leaf, variance }, b, s, seed, workers);
            cfg.replicates = samples;
            cfg.output.csv = Some(out);
            let rec = expcli::run(&cfg)?;
            expcli::write_outputs(&rec)?;
            print_json(&rec.aggregate)
        }
        Command::Limits { cmd: LimitsCmd::FixedPoint { b, s, r, samples, depth, runs, alpha, seed, leaf, out } } => {
            let exp = Experiment::FixedPoint { r, depth, leaf, variance: LeafVariance::Matched, runs, alpha };
            let mut cfg = base_config(exp, b, s, seed, workers);
            cfg.replicates = samples;
            let rec = expcli::run(&cfg)?;
            let runs: Vec<_> = rec.ks.iter().map(|k| serde_json::json!({ "ks": k.statistic, "p_value": k.p_value, "passes": k.passes() })).collect();
            let first = rec.ks.first();
            let report = serde_json::json!({
                "ks": first.map(|k| k.statistic),
                "p_value": first.map(|k| k.p_value),
                "n": samples,
                "runs": runs,
            });
            match out {
                Some(p) => Ok(std::fs::write(p, serde_json::to_string_pretty(&report)?)?),
                None => print_json(&report),
            }
        }
        Command::Fluct { cmd: FluctCmd::Clt { pool, ks_samples, alpha } } => {
            let mut cfg = base_config(Experiment::Clt { batches: pool.batches, ks_samples, alpha }, pool.lat.b, pool.lat.s, pool.seed, workers);
            cfg.n = Some(pool.n);
            cfg.schedule = Some(BetaSchedule::OverN { beta_hat: pool.beta_hat });
            cfg.replicates = pool.replicates;
            cfg.disorder = pool.disorder;
            finish(&expcli::run(&cfg)?, pool.out.as_ref())
        }
        Command::Fluct { cmd: FluctCmd::Process { pool, grid } } => {
            let mut cfg = base_config(Experiment::Process { grid, batches: pool.batches }, pool.lat.b, pool.lat.s, pool.seed, workers);
            cfg.n = Some(pool.n);
            cfg.schedule = Some(BetaSchedule::OverN { beta_hat: pool.beta_hat });
            cfg.replicates = pool.replicates;
            cfg.disorder = pool.disorder;
            finish(&expcli::run(&cfg)?, pool.out.as_ref())
        }
        Command::Experiment { cmd: ExperimentCmd::Run { config } } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if cfg.workers.is_none() {
                cfg.workers = workers;
            }
            let rec = expcli::run(&cfg)?;
            expcli::write_outputs(&rec)?;
            print_json(&serde_json::json!({ "aggregate": rec.aggregate, "estimates": rec.estimates, "wall_time_s": rec.wall_time_s }))
        }
        Command::Experiment { cmd: ExperimentCmd::Summarize { pattern, out } } => {
            let rows = expcli::summarize(&expcli::load_records(&pattern)?);
            match out {
                Some(p) => expcli::write_summary_csv(&rows, std::fs::File::create(p)?),
                None => expcli::write_summary_csv(&rows, std::io::stdout()),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
