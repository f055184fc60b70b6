//! Seeded Monte-Carlo experiments: rank-failure probability and throughput
//! versus SNR.
//!
//! Trial `t` of a run with seed `s` draws its channel from ChaCha8 stream `t`
//! keyed by `s`, so every SNR point, strategy and method sees the same
//! channels (common random numbers) and results do not depend on the thread
//! schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc_ds::{cpf_ds, df_ds, TimePolicy};
use crate::alloc_dt::{solve_p2_with, solve_p4_df_with, DtOptions, DtSolution, SampleSet};
use crate::error::{Error, Result};
use crate::model::{ChannelState, PowerBudget};
use crate::select::{default_top_n, select_general, Method, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Ds,
    Dt,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Ds => "ds",
            Scenario::Dt => "dt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Cpf,
    Df,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cpf => "cpf",
            Strategy::Df => "df",
        }
    }
}

/// `m` sources, `k` relays, `l` destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub m: usize,
    pub k: usize,
    pub l: usize,
}

pub const DEFAULT_DT_SAMPLES: usize = 2000;
pub const BOOTSTRAP_REPLICATES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    pub topology: Topology,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub scenario: Scenario,
    pub strategy: Strategy,
    pub method: Method,
    pub time_policy: TimePolicy,
    pub seed: u64,
    #[serde(default = "default_dt_samples")]
    pub dt_sample_size: usize,
    /// Candidate list length per relay; `None` picks [`default_top_n`].
    #[serde(default)]
    pub top_n: Option<usize>,
}

fn default_dt_samples() -> usize {
    DEFAULT_DT_SAMPLES
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let Topology { m, k, l } = self.topology;
        if m == 0 || k == 0 || l == 0 {
            return Err(Error::InvalidArgument(format!(
                "topology needs M, K, L >= 1, got {m}, {k}, {l}"
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "SNR grid must be nonempty and finite".into(),
            ));
        }
        if self.scenario == Scenario::Dt && self.dt_sample_size == 0 {
            return Err(Error::InvalidArgument(
                "DT sample size must be at least 1".into(),
            ));
        }
        if self.top_n == Some(0) {
            return Err(Error::InvalidArgument("topN must be at least 1".into()));
        }
        Ok(())
    }

    fn top_n(&self) -> usize {
        self.top_n.unwrap_or_else(|| default_top_n(self.topology.m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultRow {
    pub snr_db: f64,
    /// NaN when the row is excluded (solver failure).
    pub mean_throughput: f64,
    pub rank_failure_prob: f64,
    pub stderr: f64,
    /// Trials (DS) or sample states (DT) behind the row.
    pub trials: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
    /// Rows excluded because the DT solver failed.
    pub excluded_rows: usize,
}

/// Independent generator for trial `index` of run `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Real standard-normal source-relay and relay-destination gains.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, topology: Topology) -> ChannelState {
    let Topology { m, k, l } = topology;
    let mut draw = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    };
    let sr = draw(k, m);
    let rd = draw(k, l);
    ChannelState::new(sr, rd).expect("finite gains of consistent shape")
}

/// Channel of trial `index`.
pub fn trial_channel(seed: u64, index: u64, topology: Topology) -> ChannelState {
    draw_channel(&mut trial_rng(seed, index), topology)
}

fn trial_channels(seed: u64, n: usize, topology: Topology) -> Vec<ChannelState> {
    (0..n as u64)
        .into_par_iter()
        .map(|t| trial_channel(seed, t, topology))
        .collect()
}

/// Sample mean and `sample stddev / sqrt(n)`.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn select(
    state: &ChannelState,
    p0: PowerBudget,
    top_n: usize,
    method: Method,
) -> Result<SelectionResult> {
    select_general(state.sr_gains(), p0, top_n, method)
}

/// Per SNR point, the fraction of trials whose network matrix is singular.
pub fn rank_failure_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    if spec.strategy != Strategy::Cpf {
        return Err(Error::InvalidArgument(
            "rank failure is defined for CPF only".into(),
        ));
    }
    let states = trial_channels(spec.seed, spec.trials, spec.topology);
    let top_n = spec.top_n();
    let rows = spec
        .snr_grid_db
        .iter()
        .map(|&snr| {
            let p0 = PowerBudget::from_db(snr)?;
            let failed = states
                .par_iter()
                .map(|s| {
                    select(s, p0, top_n, spec.method).map(|r| if r.full_rank { 0.0 } else { 1.0 })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (prob, stderr) = mean_stderr(&failed);
            Ok(ResultRow {
                snr_db: snr,
                mean_throughput: f64::NAN,
                rank_failure_prob: prob,
                stderr,
                trials: spec.trials,
                flags: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
        excluded_rows: 0,
    })
}

/// Per-trial DS throughputs (zero on rank failure) and rank-failure
/// indicators at one SNR point.
pub fn ds_trial_throughputs(spec: &ExperimentSpec, snr_db: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    spec.validate()?;
    let states = trial_channels(spec.seed, spec.trials, spec.topology);
    ds_point(spec, &states, snr_db)
}

fn ds_point(
    spec: &ExperimentSpec,
    states: &[ChannelState],
    snr_db: f64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let p0 = PowerBudget::from_db(snr_db)?;
    let top_n = spec.top_n();
    let out = states
        .par_iter()
        .map(|s| match spec.strategy {
            Strategy::Cpf => {
                let sel = select(s, p0, top_n, spec.method)?;
                let alloc = cpf_ds(s, &sel, p0, spec.time_policy);
                Ok((alloc.throughput, !sel.full_rank))
            }
            Strategy::Df => Ok((df_ds(s, p0, spec.time_policy).throughput, false)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().unzip())
}

/// Solves the DT problem at one SNR point on the first `dt_sample_size`
/// trial channels.
pub fn dt_solve_point(
    spec: &ExperimentSpec,
    snr_db: f64,
) -> Result<(DtSolution, Vec<SelectionResult>)> {
    spec.validate()?;
    let states = trial_channels(spec.seed, spec.dt_sample_size, spec.topology);
    let p0 = PowerBudget::from_db(snr_db)?;
    let sels = dt_selections(spec, &states, p0)?;
    let sol = dt_solve(spec, states, &sels, p0)?;
    Ok((sol, sels))
}

fn dt_selections(
    spec: &ExperimentSpec,
    states: &[ChannelState],
    p0: PowerBudget,
) -> Result<Vec<SelectionResult>> {
    if spec.strategy == Strategy::Df {
        return Ok(Vec::new());
    }
    let top_n = spec.top_n();
    states
        .par_iter()
        .map(|s| select(s, p0, top_n, spec.method))
        .collect()
}

fn dt_solve(
    spec: &ExperimentSpec,
    states: Vec<ChannelState>,
    sels: &[SelectionResult],
    p0: PowerBudget,
) -> Result<DtSolution> {
    let opts = DtOptions {
        time_policy: spec.time_policy,
        ..Default::default()
    };
    let samples = SampleSet::new(states, spec.seed)?;
    match spec.strategy {
        Strategy::Cpf => solve_p2_with(&samples, sels, p0, &opts),
        Strategy::Df => solve_p4_df_with(&samples, p0, &opts),
    }
}

fn dt_row(spec: &ExperimentSpec, states: &[ChannelState], snr_db: f64) -> Result<ResultRow> {
    let p0 = PowerBudget::from_db(snr_db)?;
    let sels = dt_selections(spec, states, p0)?;
    let failed = sels.iter().filter(|s| !s.full_rank).count();
    let n = states.len();
    let rank_failure_prob = failed as f64 / n as f64;
    let mut flags = Vec::new();
    let sol = match dt_solve(spec, states.to_vec(), &sels, p0) {
        Ok(sol) => sol,
        Err(Error::NonConvergence { .. }) => {
            return Ok(ResultRow {
                snr_db,
                mean_throughput: f64::NAN,
                rank_failure_prob,
                stderr: f64::NAN,
                trials: n,
                flags: vec!["dt_nonconvergence".into()],
            });
        }
        Err(e) => return Err(e),
    };
    if sol.diagnostics.kink_states > 0 {
        flags.push(format!("kink_states={}", sol.diagnostics.kink_states));
    }
    if !sol.diagnostics.slack_phases.is_empty() {
        flags.push("budget_slack".into());
    }

    // state-level bootstrap; replicate b resamples with its own stream
    let boot: Vec<Option<f64>> = (0..BOOTSTRAP_REPLICATES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = trial_rng(spec.seed ^ 0xB007_5742_u64, u64::MAX - b);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let st: Vec<ChannelState> = idx.iter().map(|&i| states[i].clone()).collect();
            let sl: Vec<SelectionResult> = if sels.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| sels[i].clone()).collect()
            };
            dt_solve(spec, st, &sl, p0).ok().map(|s| s.throughput)
        })
        .collect();
    let ok: Vec<f64> = boot.iter().flatten().copied().collect();
    if ok.len() < boot.len() {
        flags.push(format!("bootstrap_failures={}", boot.len() - ok.len()));
    }
    let stderr = if ok.len() >= 2 {
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ResultRow {
        snr_db,
        mean_throughput: sol.throughput,
        rank_failure_prob,
        stderr,
        trials: n,
        flags,
    })
}

/// Throughput versus SNR. DS averages per-trial optima; DT solves once per
/// SNR point over `dt_sample_size` states and reports a bootstrap stderr.
pub fn throughput_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let rows = match spec.scenario {
        Scenario::Ds => {
            let states = trial_channels(spec.seed, spec.trials, spec.topology);
            spec.snr_grid_db
                .iter()
                .map(|&snr| {
                    let (thr, fail) = ds_point(spec, &states, snr)?;
                    let (mean, stderr) = mean_stderr(&thr);
                    let failures = fail.iter().filter(|&&f| f).count();
                    Ok(ResultRow {
                        snr_db: snr,
                        mean_throughput: mean,
                        rank_failure_prob: failures as f64 / thr.len() as f64,
                        stderr,
                        trials: thr.len(),
                        flags: Vec::new(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Scenario::Dt => {
            let states = trial_channels(spec.seed, spec.dt_sample_size, spec.topology);
            spec.snr_grid_db
                .iter()
                .map(|&snr| dt_row(spec, &states, snr))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let excluded_rows = rows.iter().filter(|r| r.mean_throughput.is_nan()).count();
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
        excluded_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scenario: Scenario, strategy: Strategy, method: Method) -> ExperimentSpec {
        ExperimentSpec {
            topology: Topology { m: 2, k: 2, l: 2 },
            snr_grid_db: vec![0.0, 15.0, 30.0],
            trials: 200,
            scenario,
            strategy,
            method,
            time_policy: TimePolicy::Optimal,
            seed: 11,
            dt_sample_size: 60,
            top_n: None,
        }
    }

    #[test]
    fn draws_are_deterministic_and_standard_normal() {
        let t = Topology { m: 3, k: 2, l: 4 };
        assert_eq!(trial_channel(5, 17, t), trial_channel(5, 17, t));
        assert_ne!(trial_channel(5, 17, t), trial_channel(5, 18, t));
        assert_ne!(trial_channel(5, 17, t), trial_channel(6, 17, t));

        let mut rng = trial_rng(123, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() <= 0.01, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
    }

    #[test]
    fn channel_layout() {
        let s = trial_channel(1, 0, Topology { m: 3, k: 2, l: 4 });
        assert_eq!((s.m(), s.k(), s.l()), (3, 2, 4));
        for (i, g) in s.rd_min_gain().iter().enumerate() {
            let min = s.rd_gains()[i]
                .iter()
                .map(|x| x * x)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(*g, min);
        }
    }

    #[test]
    fn mean_stderr_matches_definition() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn rank_failure_global_zero_naive_positive() {
        let g =
            rank_failure_experiment(&spec(Scenario::Ds, Strategy::Cpf, Method::Global)).unwrap();
        assert!(g.rows.iter().all(|r| r.rank_failure_prob == 0.0));
        let n = rank_failure_experiment(&spec(Scenario::Ds, Strategy::Cpf, Method::Naive)).unwrap();
        // naive ignores power: identical at every SNR under common draws
        assert!(n.rows[0].rank_failure_prob > 0.0);
        assert!(n
            .rows
            .iter()
            .all(|r| r.rank_failure_prob == n.rows[0].rank_failure_prob));
        assert!(rank_failure_experiment(&spec(Scenario::Ds, Strategy::Df, Method::Naive)).is_err());
    }

    #[test]
    fn experiments_are_reproducible() {
        let s = spec(Scenario::Ds, Strategy::Cpf, Method::Local);
        assert_eq!(
            throughput_experiment(&s).unwrap(),
            throughput_experiment(&s).unwrap()
        );
        let d = spec(Scenario::Dt, Strategy::Df, Method::Global);
        assert_eq!(
            throughput_experiment(&d).unwrap(),
            throughput_experiment(&d).unwrap()
        );
    }

    #[test]
    fn ds_rows_consistent_with_trials() {
        let s = spec(Scenario::Ds, Strategy::Cpf, Method::Global);
        let r = throughput_experiment(&s).unwrap();
        let (thr, _) = ds_trial_throughputs(&s, 15.0).unwrap();
        let (mean, se) = mean_stderr(&thr);
        assert_eq!(r.rows[1].mean_throughput, mean);
        assert_eq!(r.rows[1].stderr, se);
        assert!(r
            .rows
            .windows(2)
            .all(|w| w[1].mean_throughput >= w[0].mean_throughput));
    }

    #[test]
    fn dt_not_below_ds() {
        let ds = throughput_experiment(&ExperimentSpec {
            trials: 60,
            ..spec(Scenario::Ds, Strategy::Cpf, Method::Global)
        })
        .unwrap();
        let dt = throughput_experiment(&spec(Scenario::Dt, Strategy::Cpf, Method::Global)).unwrap();
        for (a, b) in ds.rows.iter().zip(&dt.rows) {
            // same 60 channels in both runs
            assert!(
                b.mean_throughput >= a.mean_throughput - 1e-9,
                "{} < {}",
                b.mean_throughput,
                a.mean_throughput
            );
            assert!(b.stderr >= 0.0);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(Scenario::Ds, Strategy::Cpf, Method::Global);
        s.trials = 0;
        assert!(throughput_experiment(&s).is_err());
        let mut s = spec(Scenario::Ds, Strategy::Cpf, Method::Global);
        s.snr_grid_db.clear();
        assert!(throughput_experiment(&s).is_err());
        let json = r#"{"topology":{"m":2,"k":2,"l":2},"snrGridDb":[0],"trials":1,"scenario":"ds",
            "strategy":"cpf","method":"global","timePolicy":"optimal","seed":1,"bogus":3}"#;
        assert!(serde_json::from_str::<ExperimentSpec>(json).is_err());
    }
}
