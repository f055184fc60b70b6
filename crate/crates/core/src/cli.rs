//! The `cpf` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags or input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::alloc_ds::{cpf_ds, df_ds, Allocation, TimePolicy};
use crate::error::Error;
use crate::model::{ChannelState, CoefficientVector, PowerBudget};
use crate::select::{
    default_top_n, evaluate, select_general, Method, NetworkMatrix, SelectionResult,
};
use crate::simulate::{
    rank_failure_experiment, throughput_experiment, ExperimentResult, ExperimentSpec, Scenario,
    Strategy, Topology, DEFAULT_DT_SAMPLES,
};

#[derive(Debug, Parser)]
#[command(
    name = "cpf",
    version,
    about = "Compute-and-forward relay network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank-failure probability of a coefficient-selection method versus SNR.
    RankFailure(RankFailureArgs),
    /// Mean common throughput versus SNR.
    Throughput(ThroughputArgs),
    /// Selection and allocation for one channel state read from JSON.
    Solve(SolveArgs),
    /// Runs an experiment described by a JSON config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Number of sources.
    #[arg(long)]
    m: usize,
    /// Number of relays.
    #[arg(long)]
    k: usize,
    /// Number of destinations.
    #[arg(long)]
    l: usize,
    #[arg(long, value_enum)]
    method: Method,
    /// SNR grid in dB as `start:stop:step`, or a single value.
    #[arg(long = "snr-db", value_parser = parse_snr_grid, allow_hyphen_values = true)]
    snr_db: SnrGrid,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Candidate list length per relay (default max(8, 2M)).
    #[arg(long)]
    top_n: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankFailureArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct ThroughputArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, value_enum)]
    strategy: Strategy,
    #[arg(long = "time", value_enum, default_value = "optimal")]
    time_policy: TimePolicy,
    /// Channel draws per SNR point for DT.
    #[arg(long, default_value_t = DEFAULT_DT_SAMPLES)]
    dt_samples: usize,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// JSON file with `srGains`, `rdGains` and optional fixed `coefficients`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, value_enum, default_value = "global")]
    method: Method,
    #[arg(long = "time", value_enum, default_value = "optimal")]
    time_policy: TimePolicy,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
struct SnrGrid(Vec<f64>);

fn parse_snr_grid(s: &str) -> std::result::Result<SnrGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{p}` is not a number"))
    };
    let grid = match parts.as_slice() {
        [one] => vec![num(one)?],
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                return Err("expected start <= stop and step > 0".into());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + step * i as f64).collect()
        }
        _ => return Err("expected `start:stop:step` or a single value".into()),
    };
    Ok(SnrGrid(grid))
}

/// What a config file runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Experiment {
    RankFailure,
    Throughput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Config file accepted by `cpf run --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub spec: ExperimentSpec,
    /// Output file; stdout when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Channel file read by `cpf solve`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolveInput {
    pub sr_gains: Vec<Vec<f64>>,
    pub rd_gains: Vec<Vec<f64>>,
    /// Fixed network matrix; row `i` is decoded by relay `i mod K`.
    #[serde(default)]
    pub coefficients: Option<Vec<Vec<i64>>>,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::RankFailure(a) => {
            let spec = spec_from(
                &a.common,
                Scenario::Ds,
                Strategy::Cpf,
                TimePolicy::Optimal,
                DEFAULT_DT_SAMPLES,
            );
            let res = rank_failure_experiment(&spec)?;
            emit(a.common.out.as_deref(), &rank_failure_csv(&res))
        }
        Command::Throughput(a) => {
            let spec = spec_from(
                &a.common,
                a.scenario,
                a.strategy,
                a.time_policy,
                a.dt_samples,
            );
            let res = throughput_experiment(&spec)?;
            emit(a.common.out.as_deref(), &throughput_csv(&res))
        }
        Command::Solve(a) => {
            let text = fs::read_to_string(&a.input)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", a.input.display())))?;
            let out = solve_json(&text, a.snr_db, a.method, a.time_policy, a.top_n)?;
            emit(a.out.as_deref(), &out)
        }
        Command::Run(a) => {
            let text = fs::read_to_string(&a.config)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", a.config.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
            let res = match cfg.experiment {
                Experiment::RankFailure => rank_failure_experiment(&cfg.spec)?,
                Experiment::Throughput => throughput_experiment(&cfg.spec)?,
            };
            let body = match (cfg.format, cfg.experiment) {
                (OutputFormat::Json, _) => {
                    let mut s = serde_json::to_string_pretty(&res).expect("serializable result");
                    s.push('\n');
                    s
                }
                (OutputFormat::Csv, Experiment::RankFailure) => rank_failure_csv(&res),
                (OutputFormat::Csv, Experiment::Throughput) => throughput_csv(&res),
            };
            emit(cfg.output.as_deref(), &body)
        }
    }
}

fn spec_from(
    c: &CommonArgs,
    scenario: Scenario,
    strategy: Strategy,
    time_policy: TimePolicy,
    dt_sample_size: usize,
) -> ExperimentSpec {
    ExperimentSpec {
        topology: Topology {
            m: c.m,
            k: c.k,
            l: c.l,
        },
        snr_grid_db: c.snr_db.0.clone(),
        trials: c.trials,
        scenario,
        strategy,
        method: c.method,
        time_policy,
        seed: c.seed,
        dt_sample_size,
        top_n: c.top_n,
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, body)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

/// Decimal with 12 significant digits, `.` separator, no exponent.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("valid float text");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

pub fn rank_failure_csv(res: &ExperimentResult) -> String {
    let mut s = String::from("snr_db,rank_failure_prob,stderr,trials,method,seed\n");
    for r in &res.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            format_number(r.snr_db),
            format_number(r.rank_failure_prob),
            format_number(r.stderr),
            r.trials,
            res.spec.method.as_str(),
            res.spec.seed
        );
    }
    s
}

pub fn throughput_csv(res: &ExperimentResult) -> String {
    let mut s = String::from(
        "snr_db,mean_throughput,stderr,rank_failure_prob,scenario,strategy,method,time_policy,seed,flags\n",
    );
    let sp = &res.spec;
    for r in &res.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            format_number(r.snr_db),
            format_number(r.mean_throughput),
            format_number(r.stderr),
            format_number(r.rank_failure_prob),
            sp.scenario.as_str(),
            sp.strategy.as_str(),
            sp.method.as_str(),
            sp.time_policy.as_str(),
            sp.seed,
            r.flags.join(";")
        );
    }
    s
}

fn allocation_json(a: &Allocation) -> serde_json::Value {
    let balance = if a.throughput > 0.0 {
        a.fractions
            .iter()
            .zip(&a.phase_rates)
            .map(|(f, r)| (f * r - a.throughput).abs())
            .fold(0.0, f64::max)
            / a.throughput
    } else {
        0.0
    };
    json!({
        "fractions": a.fractions,
        "phaseRates": a.phase_rates,
        "phasePowers": a.phase_powers,
        "throughput": a.throughput,
        "zeroRatePhase": a.zero_rate_phase,
        "residuals": {
            "fractionSum": (a.fractions.iter().sum::<f64>() - 1.0).abs(),
            "throughputBalance": balance,
        },
    })
}

/// Output document of `cpf solve` for the channel file contents `text`.
fn solve_json(
    text: &str,
    snr_db: f64,
    method: Method,
    policy: TimePolicy,
    top_n: Option<usize>,
) -> Result<String, Failure> {
    let input: SolveInput = serde_json::from_str(text)
        .map_err(|e| Failure::Usage(format!("malformed channel file: {e}")))?;
    let state = ChannelState::new(input.sr_gains, input.rd_gains)?;
    let p0 = PowerBudget::from_db(snr_db)?;
    let selection: SelectionResult = match input.coefficients {
        Some(rows) => {
            let k = state.k();
            let relays = (0..rows.len()).map(|i| i % k).collect();
            let vectors = rows
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    CoefficientVector::new(r)
                        .map_err(|e| Failure::Usage(format!("coefficients[{i}]: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vectors.len() != state.m() {
                return Err(Failure::Usage(format!(
                    "coefficients: expected {} rows, got {}",
                    state.m(),
                    vectors.len()
                )));
            }
            evaluate(state.sr_gains(), NetworkMatrix::new(vectors, relays)?, p0)?
        }
        None => select_general(
            state.sr_gains(),
            p0,
            top_n.unwrap_or_else(|| default_top_n(state.m())),
            method,
        )?,
    };
    let cpf = cpf_ds(&state, &selection, p0, policy);
    let df = df_ds(&state, p0, policy);
    let rows: Vec<&[i64]> = selection
        .matrix
        .rows()
        .iter()
        .map(|r| r.entries())
        .collect();
    let doc = json!({
        "snrDb": snr_db,
        "method": method.as_str(),
        "timePolicy": policy.as_str(),
        "selection": {
            "matrix": rows,
            "sourceRelay": selection.matrix.source_relay(),
            "rank": selection.matrix.rank(),
            "fullRank": selection.full_rank,
            "perRowRate": selection.per_row_rate,
            "commonRate": selection.common_rate,
        },
        "cpf": allocation_json(&cpf),
        "df": allocation_json(&df),
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    Ok(s)
}
