//! Delay-tolerant allocation: time fractions are fixed across fading states
//! while rates and powers adapt per state under average power budgets.
//!
//! Expectations are sample averages over a [`SampleSet`]. Every phase `j`
//! carries a budget multiplier `beta_j` and a rate weight `w_j`
//! (`w_0 = f_0 (1 - sum gamma)` for the first phase, `w_j = f_j gamma_j` for
//! the others). Per state the Lagrangian separates into
//! `max_R w_j R - beta_j P_j(R)`, whose solution depends only on the ratio
//! `w_j / (2 ln2 beta_j)`:
//!
//! * point-to-point phases: waterfilling with water level `w/(2 ln2 beta)`;
//! * the computation phase: the feasible root of
//!   `kappa c^2 x^2 - (2ac kappa + d) x + a^2 kappa = 0` with `x = 2^{2R}`,
//!   `kappa = l / beta_0`, `l = w_0 / (2 ln2)`, for the bottleneck relay.
//!
//! Each ratio is found by bisection so that the average power meets `P0`.
//! The time fractions, `alpha` and `gamma` then follow from the equal
//! throughput constraints and the stationarity conditions in `f` and `R`.
//! Where the average power jumps across the budget (the computation rate
//! leaves zero with a strictly positive power), the two bracketing solutions
//! are mixed so the budget holds with equality.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::Serialize;

use crate::alloc_ds::TimePolicy;
use crate::error::{Error, Result};
use crate::model::{
    cpf_coefficients, required_power, ChannelState, CpfCoefficients, PowerBudget, Rate,
};
use crate::select::SelectionResult;

/// Lagrange multipliers of the averaged problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MultiplierState {
    /// Power multiplier of the first phase (the computation phase for CPF).
    pub beta0: f64,
    /// Power multipliers of the remaining phases.
    pub betas: Vec<f64>,
    /// Rate-coupling multipliers, `sum < 1`.
    pub gammas: Vec<f64>,
    /// Time-budget multiplier.
    pub alpha: f64,
    /// `f_0 (1 - sum gamma) / (2 ln2)`.
    pub l: f64,
}

/// Equally weighted channel draws standing in for the fading distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    states: Vec<ChannelState>,
    seed: u64,
}

impl SampleSet {
    pub fn new(states: Vec<ChannelState>, seed: u64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument(
                "sample set needs at least one state".into(),
            ));
        }
        let (m, k, l) = (states[0].m(), states[0].k(), states[0].l());
        if states.iter().any(|s| (s.m(), s.k(), s.l()) != (m, k, l)) {
            return Err(Error::InvalidArgument(
                "sample states differ in topology".into(),
            ));
        }
        Ok(Self { states, seed })
    }

    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DtDiagnostics {
    pub outer_iterations: usize,
    /// States whose computation-phase optimum sits where two relays need the
    /// same power (no single bottleneck relay passes the consistency test).
    pub kink_states: usize,
    /// Rank-deficient states contributing zero computation rate.
    pub rank_failed_states: usize,
    /// Phases whose power budget cannot be used up (multiplier zero).
    pub slack_phases: Vec<usize>,
    /// Weight of the upper bracket in the final mixture, per phase.
    pub mixture_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DtSolution {
    pub fractions: Vec<f64>,
    /// `[state][phase]`.
    pub state_rates: Vec<Vec<f64>>,
    pub state_powers: Vec<Vec<f64>>,
    pub avg_rates: Vec<f64>,
    pub avg_powers: Vec<f64>,
    pub throughput: f64,
    pub multipliers: MultiplierState,
    pub kkt_residuals: BTreeMap<String, f64>,
    pub diagnostics: DtDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub time_policy: TimePolicy,
}

impl Default for DtOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 200,
            time_policy: TimePolicy::Optimal,
        }
    }
}

/// Optimal rate and power of a point-to-point phase in one state:
/// waterfilling with level `f gamma / (2 beta ln2)`.
pub fn relay_rate_dt(fi: f64, gammai: f64, betai: f64, g_min: f64) -> Result<(Rate, f64)> {
    if !(fi > 0.0 && gammai > 0.0 && betai > 0.0) {
        return Err(Error::InvalidMultiplier(format!(
            "need f, gamma, beta > 0, got f={fi} gamma={gammai} beta={betai}"
        )));
    }
    Ok(waterfill(fi * gammai / (2.0 * betai * LN_2), g_min))
}

fn waterfill(level: f64, g: f64) -> (Rate, f64) {
    if !(g > 0.0) || level * g <= 1.0 {
        return (Rate::ZERO, 0.0);
    }
    (Rate::clamped(0.5 * (level * g).log2()), level - 1.0 / g)
}

/// Feasible root `x = 2^{2R}` of the computation-phase stationarity condition
/// `kappa = d x / (c x - a)^2`, in the cancellation-free form
/// `2 a^2 kappa / (2ac kappa + d + sqrt(d^2 + 4ac kappa d))`. Lies in `(0, a/c)`.
pub fn cpf_root_dt(kappa: f64, coeffs: &CpfCoefficients) -> f64 {
    let CpfCoefficients { a, c, d, .. } = *coeffs;
    let disc = (d * d + 4.0 * a * c * kappa * d).sqrt();
    2.0 * a * a * kappa / (2.0 * a * c * kappa + d + disc)
}

/// Optimal computation rate when relay `coeffs` is the bottleneck.
pub fn cpf_rate_dt(l: f64, beta0: f64, coeffs: &CpfCoefficients) -> Result<Rate> {
    if !(l > 0.0 && beta0 > 0.0) {
        return Err(Error::InvalidMultiplier(format!(
            "need l, beta0 > 0, got l={l} beta0={beta0}"
        )));
    }
    if !(coeffs.d > 0.0) {
        return Err(Error::DegeneratePair);
    }
    Ok(Rate::clamped(0.5 * cpf_root_dt(l / beta0, coeffs).log2()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Bottleneck {
    pub index: usize,
    pub common_rate: Rate,
    pub common_power: f64,
    /// False when no relay passed the consistency test; `index` is then the
    /// relay whose assumed solution needs the largest common power.
    pub consistent: bool,
}

/// Source power needed by every relay at common rate `rate`, with a zero rate
/// evaluated at its right limit (the power at which the rate leaves zero).
fn powers_at(relay_coeffs: &[CpfCoefficients], rate: f64) -> Vec<f64> {
    relay_coeffs
        .iter()
        .map(|c| required_power(c, rate.max(0.0)))
        .collect()
}

/// Determines the relay whose computation rate binds the common rate. Relay
/// `m` is accepted when, at the rate it would pick as the bottleneck, it also
/// needs the largest source power of all relays.
pub fn bottleneck_relay(
    l: f64,
    beta0: f64,
    relay_coeffs: &[CpfCoefficients],
) -> Result<Bottleneck> {
    if relay_coeffs.is_empty() {
        return Err(Error::InvalidArgument("no relays".into()));
    }
    if !(l > 0.0 && beta0 > 0.0) {
        return Err(Error::InvalidMultiplier(format!(
            "need l, beta0 > 0, got l={l} beta0={beta0}"
        )));
    }
    bottleneck_at(l / beta0, relay_coeffs)
}

fn bottleneck_at(kappa: f64, relay_coeffs: &[CpfCoefficients]) -> Result<Bottleneck> {
    if let Some(i) = relay_coeffs.iter().position(|c| !(c.d > 0.0)) {
        // a relay orthogonal to its vector never decodes
        return Ok(Bottleneck {
            index: i,
            common_rate: Rate::ZERO,
            common_power: 0.0,
            consistent: true,
        });
    }
    let mut fallback: Option<(usize, f64, f64)> = None;
    for (m, coeffs) in relay_coeffs.iter().enumerate() {
        let rate = 0.5 * cpf_root_dt(kappa, coeffs).log2();
        let powers = powers_at(relay_coeffs, rate);
        let own = powers[m];
        let max = powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if own >= max * (1.0 - 1e-12) {
            let common_rate = Rate::clamped(rate);
            let common_power = if common_rate.value() > 0.0 { max } else { 0.0 };
            return Ok(Bottleneck {
                index: m,
                common_rate,
                common_power,
                consistent: true,
            });
        }
        if fallback.is_none_or(|(_, _, p)| max > p) {
            fallback = Some((m, rate, max));
        }
    }
    let (index, rate, power) = fallback.expect("nonempty");
    let common_rate = Rate::clamped(rate);
    Ok(Bottleneck {
        index,
        common_rate,
        common_power: if common_rate.value() > 0.0 {
            power
        } else {
            0.0
        },
        consistent: false,
    })
}

/// Maximizes the concave `2 ln2 kappa R - max_m P_m(R)` over `R` in
/// `[0, min_m upper_m)` by golden-section search.
fn kink_optimum(kappa: f64, relay_coeffs: &[CpfCoefficients]) -> (f64, f64) {
    let upper = relay_coeffs
        .iter()
        .map(|c| {
            if c.c > 0.0 {
                0.5 * (c.a / c.c).log2()
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min);
    let value = |r: f64| {
        let p = powers_at(relay_coeffs, r).into_iter().fold(0.0, f64::max);
        2.0 * LN_2 * kappa * r - p
    };
    // every relay's own optimum bounds the joint optimum from above
    let hi_guess = relay_coeffs
        .iter()
        .map(|c| 0.5 * cpf_root_dt(kappa, c).log2())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut lo = 0.0;
    let mut hi = hi_guess.min(upper * (1.0 - 1e-15)).max(0.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = value(x1);
    let mut f2 = value(x2);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = value(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = value(x1);
        }
    }
    let r = 0.5 * (lo + hi);
    if r <= 0.0 {
        return (0.0, 0.0);
    }
    let p = powers_at(relay_coeffs, r).into_iter().fold(0.0, f64::max);
    (r, p)
}

/// One state's part of a phase.
#[derive(Debug, Clone)]
enum StatePhase {
    /// Computation phase; `None` for a rank-deficient (failed) state.
    Cpf(Option<Vec<CpfCoefficients>>),
    /// Point-to-point link with power gain `g`.
    Link(f64),
}

#[derive(Debug, Clone, Copy, Default)]
struct Response {
    rate: f64,
    power: f64,
    /// Bottleneck relay when the stationarity formula applies directly.
    bottleneck: Option<usize>,
    kink: bool,
}

impl StatePhase {
    /// Per-state optimum at ratio `level` (`kappa` or the water level).
    fn respond(&self, level: f64) -> Response {
        match self {
            StatePhase::Link(g) => {
                let (r, p) = waterfill(level, *g);
                Response {
                    rate: r.value(),
                    power: p,
                    ..Default::default()
                }
            }
            StatePhase::Cpf(None) => Response::default(),
            StatePhase::Cpf(Some(coeffs)) => {
                let b = bottleneck_at(level, coeffs).expect("nonempty coefficient set");
                if b.consistent {
                    Response {
                        rate: b.common_rate.value(),
                        power: b.common_power,
                        bottleneck: Some(b.index),
                        kink: false,
                    }
                } else {
                    let (rate, power) = kink_optimum(level, coeffs);
                    Response {
                        rate,
                        power,
                        bottleneck: None,
                        kink: true,
                    }
                }
            }
        }
    }
}

struct PhaseSolution {
    level: f64,
    rates: Vec<f64>,
    powers: Vec<f64>,
    bottlenecks: Vec<Option<usize>>,
    kinks: usize,
    avg_rate: f64,
    avg_power: f64,
    slack: bool,
    mixture: f64,
}

fn evaluate(states: &[StatePhase], level: f64) -> (Vec<Response>, f64) {
    let resp: Vec<Response> = states.iter().map(|s| s.respond(level)).collect();
    let avg = resp.iter().map(|r| r.power).sum::<f64>() / states.len() as f64;
    (resp, avg)
}

/// Finds the ratio at which the phase's average power equals `p0`.
fn solve_phase(states: &[StatePhase], p0: f64, max_iter: usize) -> Result<PhaseSolution> {
    let n = states.len() as f64;
    let mut hi = 1.0;
    let (mut resp_hi, mut p_hi) = evaluate(states, hi);
    let mut slack = false;
    let mut doublings = 0;
    while p_hi < p0 {
        if doublings > 400 || hi > 1e200 {
            slack = true;
            break;
        }
        hi *= 4.0;
        doublings += 1;
        (resp_hi, p_hi) = evaluate(states, hi);
    }
    let finish = |level: f64, resp: &[Response], mixture: f64, slack: bool| {
        let rates: Vec<f64> = resp.iter().map(|r| r.rate).collect();
        let powers: Vec<f64> = resp.iter().map(|r| r.power).collect();
        PhaseSolution {
            level,
            avg_rate: rates.iter().sum::<f64>() / n,
            avg_power: powers.iter().sum::<f64>() / n,
            bottlenecks: resp.iter().map(|r| r.bottleneck).collect(),
            kinks: resp.iter().filter(|r| r.kink).count(),
            rates,
            powers,
            slack,
            mixture,
        }
    };
    if slack {
        return Ok(finish(hi, &resp_hi, 1.0, true));
    }
    let mut lo = hi / 4.0;
    let (mut resp_lo, mut p_lo) = evaluate(states, lo);
    let mut halvings = 0;
    while p_lo > p0 {
        if halvings > 400 {
            return Err(Error::NonConvergence {
                iterations: halvings,
                residuals: vec![("power_budget".into(), p_lo - p0)],
            });
        }
        hi = lo;
        resp_hi = resp_lo;
        p_hi = p_lo;
        lo /= 4.0;
        halvings += 1;
        (resp_lo, p_lo) = evaluate(states, lo);
    }
    let mut iter = 0;
    while hi / lo - 1.0 > 1e-15 && iter < max_iter.max(200) {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let (resp_mid, p_mid) = evaluate(states, mid);
        if p_mid > p0 {
            hi = mid;
            resp_hi = resp_mid;
            p_hi = p_mid;
        } else {
            lo = mid;
            resp_lo = resp_mid;
            p_lo = p_mid;
        }
        iter += 1;
    }
    // mix the bracketing solutions so the budget is met with equality
    let theta = if p_hi > p_lo {
        ((p0 - p_lo) / (p_hi - p_lo)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let mixed: Vec<Response> = resp_lo
        .iter()
        .zip(&resp_hi)
        .map(|(l, h)| Response {
            rate: theta * h.rate + (1.0 - theta) * l.rate,
            power: theta * h.power + (1.0 - theta) * l.power,
            bottleneck: h.bottleneck,
            kink: h.kink,
        })
        .collect();
    Ok(finish(hi, &mixed, theta, false))
}

/// Per-state coefficient sets of a CPF selection; `None` for rank failure.
fn cpf_state_phase(state: &ChannelState, selection: &SelectionResult) -> Result<StatePhase> {
    if !selection.full_rank {
        return Ok(StatePhase::Cpf(None));
    }
    let coeffs = selection
        .matrix
        .rows()
        .iter()
        .zip(selection.matrix.source_relay())
        .map(|(row, &relay)| {
            if relay >= state.k() {
                return Err(Error::InvalidArgument(format!(
                    "selection refers to relay {relay} but the state has {} relays",
                    state.k()
                )));
            }
            cpf_coefficients(state.relay_channel(relay), row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StatePhase::Cpf(Some(coeffs)))
}

/// Shared solver over phases `[state][phase]`; phase 0 is the head phase.
fn solve_phases(
    phases: Vec<Vec<StatePhase>>,
    p0: PowerBudget,
    opts: &DtOptions,
    rank_failed_states: usize,
) -> Result<DtSolution> {
    let n_phases = phases.len();
    let n_states = phases[0].len();
    let p0v = p0.value();

    let sols = phases
        .iter()
        .map(|states| solve_phase(states, p0v, opts.max_iter))
        .collect::<Result<Vec<_>>>()?;
    let avg_rates: Vec<f64> = sols.iter().map(|s| s.avg_rate).collect();
    let avg_powers: Vec<f64> = sols.iter().map(|s| s.avg_power).collect();

    // Outer loop over (f, gamma, alpha) with the budget multipliers re-derived
    // from the bisected ratios.
    let uniform = 1.0 / n_phases as f64;
    let mut fractions = vec![uniform; n_phases];
    let mut gammas = vec![uniform; n_phases - 1];
    let mut alpha = 0.0;
    let mut outer = 0;
    let zero_phase = avg_rates.iter().any(|&r| r <= 0.0);
    loop {
        outer += 1;
        let (new_f, new_alpha) = match opts.time_policy {
            TimePolicy::Optimal if !zero_phase => {
                let t = 1.0 / avg_rates.iter().map(|r| 1.0 / r).sum::<f64>();
                (avg_rates.iter().map(|r| t / r).collect::<Vec<_>>(), t)
            }
            _ => {
                let t = avg_rates.iter().copied().fold(f64::INFINITY, f64::min) * uniform;
                (vec![uniform; n_phases], t)
            }
        };
        // gamma_i R_i = alpha
        let new_gammas: Vec<f64> = avg_rates[1..]
            .iter()
            .map(|&r| if r > 0.0 { new_alpha / r } else { 0.0 })
            .collect();
        let change = new_f
            .iter()
            .zip(&fractions)
            .chain(new_gammas.iter().zip(&gammas))
            .map(|(a, b)| (a - b).abs())
            .fold((new_alpha - alpha).abs(), f64::max);
        fractions = new_f;
        gammas = new_gammas;
        alpha = new_alpha;
        if change < opts.tol {
            break;
        }
        if outer >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: outer,
                residuals: vec![("multiplier_change".into(), change)],
            });
        }
    }

    let gamma_sum: f64 = gammas.iter().sum();
    let head_weight = fractions[0] * (1.0 - gamma_sum);
    let weights: Vec<f64> = std::iter::once(head_weight)
        .chain(fractions[1..].iter().zip(&gammas).map(|(f, g)| f * g))
        .collect();
    let betas_all: Vec<f64> = sols
        .iter()
        .zip(&weights)
        .map(|(s, w)| {
            if s.slack || *w <= 0.0 {
                0.0
            } else {
                w / (2.0 * LN_2 * s.level)
            }
        })
        .collect();
    let multipliers = MultiplierState {
        beta0: betas_all[0],
        betas: betas_all[1..].to_vec(),
        gammas: gammas.clone(),
        alpha,
        l: head_weight / (2.0 * LN_2),
    };

    let throughput = match opts.time_policy {
        TimePolicy::Optimal if !zero_phase => fractions[0] * avg_rates[0],
        _ => fractions
            .iter()
            .zip(&avg_rates)
            .map(|(f, r)| f * r)
            .fold(f64::INFINITY, f64::min)
            .max(0.0),
    };

    let mut res = BTreeMap::new();
    res.insert(
        "fraction_sum".to_string(),
        (fractions.iter().sum::<f64>() - 1.0).abs(),
    );
    let budget = sols
        .iter()
        .filter(|s| !s.slack)
        .map(|s| (s.avg_power - p0v).abs() / p0v)
        .fold(0.0, f64::max);
    res.insert("power_budget".to_string(), budget);
    if matches!(opts.time_policy, TimePolicy::Optimal) && !zero_phase {
        let balance = fractions
            .iter()
            .zip(&avg_rates)
            .map(|(f, r)| (f * r - throughput).abs())
            .fold(0.0, f64::max)
            / throughput;
        res.insert("throughput_balance".to_string(), balance);
        // R_0 (1 - sum gamma) - alpha and gamma_i R_i - alpha
        res.insert(
            "rate_stationarity_head".to_string(),
            (avg_rates[0] * (1.0 - gamma_sum) - alpha).abs(),
        );
        let coupling = gammas
            .iter()
            .zip(&avg_rates[1..])
            .map(|(g, r)| (g * r - alpha).abs())
            .fold(0.0, f64::max);
        res.insert("rate_stationarity_coupling".to_string(), coupling);
    }
    let (cpf_res, link_res) = stationarity(&phases, &sols, &betas_all, &weights);
    res.insert("stationarity_cpf".to_string(), cpf_res);
    res.insert("stationarity_link".to_string(), link_res);

    let state_rates = (0..n_states)
        .map(|s| sols.iter().map(|p| p.rates[s]).collect())
        .collect();
    let state_powers = (0..n_states)
        .map(|s| sols.iter().map(|p| p.powers[s]).collect())
        .collect();
    Ok(DtSolution {
        fractions,
        state_rates,
        state_powers,
        avg_rates,
        avg_powers,
        throughput,
        multipliers,
        kkt_residuals: res,
        diagnostics: DtDiagnostics {
            outer_iterations: outer,
            kink_states: sols.iter().map(|s| s.kinks).sum(),
            rank_failed_states,
            slack_phases: sols
                .iter()
                .enumerate()
                .filter(|(_, s)| s.slack)
                .map(|(i, _)| i)
                .collect(),
            mixture_weights: sols.iter().map(|s| s.mixture).collect(),
        },
    })
}

/// Largest relative per-state stationarity residuals over states with a
/// positive rate: the computation phase's `l/beta0 = d x/(cx - a)^2` at the
/// bottleneck relay, and `2 beta ln2 2^{2R}/g = w` for the links.
fn stationarity(
    phases: &[Vec<StatePhase>],
    sols: &[PhaseSolution],
    betas: &[f64],
    weights: &[f64],
) -> (f64, f64) {
    let mut cpf = 0.0f64;
    let mut link = 0.0f64;
    for (j, (states, sol)) in phases.iter().zip(sols).enumerate() {
        if sol.slack || betas[j] <= 0.0 {
            continue;
        }
        for (s, st) in states.iter().enumerate() {
            let rate = sol.rates[s];
            if rate <= 1e-9 {
                continue;
            }
            let x = (2.0 * rate).exp2();
            match st {
                StatePhase::Cpf(Some(coeffs)) => {
                    let Some(m) = sol.bottlenecks[s] else {
                        continue;
                    };
                    let c = &coeffs[m];
                    let kappa = weights[j] / (2.0 * LN_2) / betas[j];
                    let rhs = c.d * x / (c.c * x - c.a).powi(2);
                    cpf = cpf.max((kappa - rhs).abs() / kappa);
                }
                StatePhase::Link(g) => {
                    let lhs = 2.0 * betas[j] * LN_2 * x / g;
                    link = link.max((lhs - weights[j]).abs() / weights[j]);
                }
                StatePhase::Cpf(None) => {}
            }
        }
    }
    (cpf, link)
}

/// CPF over the sample set: the computation phase followed by `M` relaying
/// phases. `selections[s]` is the coefficient selection of state `s`.
pub fn solve_p2(
    samples: &SampleSet,
    selections: &[SelectionResult],
    p0: PowerBudget,
    tol: f64,
) -> Result<DtSolution> {
    solve_p2_with(
        samples,
        selections,
        p0,
        &DtOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn solve_p2_with(
    samples: &SampleSet,
    selections: &[SelectionResult],
    p0: PowerBudget,
    opts: &DtOptions,
) -> Result<DtSolution> {
    if selections.len() != samples.len() {
        return Err(Error::InvalidArgument(format!(
            "{} selections for {} states",
            selections.len(),
            samples.len()
        )));
    }
    let m = samples.states()[0].m();
    if let Some(s) = selections.iter().position(|s| s.matrix.rows().len() != m) {
        return Err(Error::InvalidArgument(format!(
            "selection {s} has {} rows, expected {m}",
            selections[s].matrix.rows().len()
        )));
    }
    let mut phases: Vec<Vec<StatePhase>> = vec![Vec::with_capacity(samples.len()); m + 1];
    let mut failed = 0;
    for (state, sel) in samples.states().iter().zip(selections) {
        let cpf = cpf_state_phase(state, sel)?;
        if matches!(cpf, StatePhase::Cpf(None)) {
            failed += 1;
        }
        phases[0].push(cpf);
        for (i, &relay) in sel.matrix.source_relay().iter().enumerate() {
            phases[i + 1].push(StatePhase::Link(state.rd_min_gain()[relay]));
        }
    }
    solve_phases(phases, p0, opts, failed)
}

/// DF over the sample set: `M` source-to-relay phases followed by `M` relay
/// broadcasts, every one waterfilled over the states.
pub fn solve_p4_df(samples: &SampleSet, p0: PowerBudget, tol: f64) -> Result<DtSolution> {
    solve_p4_df_with(
        samples,
        p0,
        &DtOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn solve_p4_df_with(
    samples: &SampleSet,
    p0: PowerBudget,
    opts: &DtOptions,
) -> Result<DtSolution> {
    let m = samples.states()[0].m();
    let k = samples.states()[0].k();
    let mut phases: Vec<Vec<StatePhase>> = vec![Vec::with_capacity(samples.len()); 2 * m];
    for state in samples.states() {
        for i in 0..m {
            let relay = crate::alloc_ds::df_relay_for(i, k);
            let h = state.sr_gains()[relay][i];
            phases[i].push(StatePhase::Link(h * h));
            phases[m + i].push(StatePhase::Link(state.rd_min_gain()[relay]));
        }
    }
    solve_phases(phases, p0, opts, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cpf_power, cpf_rate, CoefficientVector};
    use crate::select::{select_general, Method};

    fn coeffs(h: &[f64], a: &[i64]) -> CpfCoefficients {
        cpf_coefficients(h, &CoefficientVector::new(a.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn relay_rate_waterfilling() {
        let (fi, gi, bi) = (0.5, 0.4, 0.1);
        let cutoff = 2.0 * bi * LN_2 / (fi * gi);
        assert_eq!(
            relay_rate_dt(fi, gi, bi, 0.9 * cutoff).unwrap(),
            (Rate::ZERO, 0.0)
        );
        let (r, _) = relay_rate_dt(fi, gi, bi, 4.0 * cutoff).unwrap();
        assert!((r.value() - 1.0).abs() < 1e-12);

        let (r, p) = relay_rate_dt(fi, gi, bi, 2.0).unwrap();
        let level = fi * gi / (2.0 * bi * LN_2);
        assert!((r.value() - 0.5 * (level * 2.0).log2()).abs() < 1e-12);
        assert!((p - (level - 0.5)).abs() < 1e-12);
        // scalar stationarity in R
        let x = (2.0 * r.value()).exp2();
        assert!((-2.0 * bi * LN_2 * x / 2.0 + gi * fi).abs() < 1e-12);
        // power is the Shannon inverse of the rate
        assert!((p - (x - 1.0) / 2.0).abs() < 1e-12);

        assert!(matches!(
            relay_rate_dt(0.5, 0.0, 0.1, 1.0),
            Err(Error::InvalidMultiplier(_))
        ));
        assert!(matches!(
            relay_rate_dt(0.5, 0.4, -1.0, 1.0),
            Err(Error::InvalidMultiplier(_))
        ));
    }

    #[test]
    fn cpf_root_examples() {
        let c = CpfCoefficients {
            a: 1.8,
            b: 2.0,
            c: 0.36,
            d: 3.24,
        };
        let (l, beta0) = (0.1, 0.05);
        let r = cpf_rate_dt(l, beta0, &c).unwrap();
        // quadratic l c^2 x^2 - (2acl + beta0 d) x + a^2 l = 0 by the textbook formula
        let qa = l * c.c * c.c;
        let qb = -(2.0 * c.a * c.c * l + beta0 * c.d);
        let qc = c.a * c.a * l;
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        let roots = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
        assert!(roots[1] > c.a / c.c);
        assert!(roots[0] < c.a / c.c && roots[0] > 0.0);
        let x = (2.0 * r.value()).exp2();
        assert!((x - roots[0]).abs() < 1e-9 * roots[0]);
        // stationarity residual
        let rhs = c.d * x / (c.c * x - c.a).powi(2);
        assert!((l / beta0 - rhs).abs() < 1e-9 * (l / beta0));

        // beta0 -> 0 pushes x to a/c
        let x_small = cpf_root_dt(1e12, &c);
        assert!((x_small - c.a / c.c).abs() < 1e-5 * c.a / c.c);
        assert!(x_small < c.a / c.c);

        // c = 0: x = a^2 kappa / d
        let aligned = coeffs(&[1.2, 0.6], &[2, 1]);
        assert_eq!(aligned.c, 0.0);
        let x = cpf_root_dt(0.7, &aligned);
        assert!((x - aligned.a * aligned.a * 0.7 / aligned.d).abs() < 1e-12);

        assert!(matches!(
            cpf_rate_dt(0.0, 1.0, &c),
            Err(Error::InvalidMultiplier(_))
        ));
        let ortho = coeffs(&[1.0, 0.0], &[0, 1]);
        assert_eq!(cpf_rate_dt(1.0, 1.0, &ortho), Err(Error::DegeneratePair));
    }

    #[test]
    fn bottleneck_symmetric_and_single() {
        let c = coeffs(&[1.1, 0.7], &[1, 1]);
        let b = bottleneck_relay(0.3, 0.01, &[c, c, c]).unwrap();
        assert_eq!(b.index, 0);
        assert!(b.consistent);
        let b1 = bottleneck_relay(0.3, 0.01, &[c]).unwrap();
        assert_eq!(b1.index, 0);
        assert_eq!(b.common_rate, b1.common_rate);
        assert!((b.common_power - b1.common_power).abs() < 1e-12);
    }

    #[test]
    fn bottleneck_picks_tighter_relay() {
        let loose = coeffs(&[1.5, 1.4], &[1, 1]);
        let tight = coeffs(&[1.0, 0.3], &[1, 1]);
        let ub = |c: &CpfCoefficients| 0.5 * (c.a / c.c).log2();
        assert!(ub(&tight) < ub(&loose));
        let kappa = 5.0;
        let b = bottleneck_at(kappa, &[loose, tight]).unwrap();
        assert_eq!(b.index, 1);
        assert!(b.consistent);

        // grid oracle on 2 ln2 kappa R - max_m P_m(R)
        let hi = ub(&tight);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 1..200_000 {
            let r = hi * i as f64 / 200_000.0;
            let p = required_power(&loose, r).max(required_power(&tight, r));
            let v = 2.0 * LN_2 * kappa * r - p;
            if v > best.0 {
                best = (v, r);
            }
        }
        assert!((b.common_rate.value() - best.1).abs() < 1e-4);
        let pl = required_power(&loose, best.1);
        let pt = required_power(&tight, best.1);
        assert!(pt > pl);
        assert!(
            (b.common_power - cpf_power(&tight, b.common_rate).unwrap()).abs()
                < 1e-9 * b.common_power
        );
    }

    #[test]
    fn kink_optimum_beats_every_grid_point() {
        // two relays whose power curves cross inside the feasible range
        let c1 = coeffs(&[1.0, 0.9], &[1, 1]);
        let c2 = coeffs(&[0.7, 0.7], &[1, 1]);
        let mut kink_seen = false;
        for kappa in [0.5, 2.0, 16.0, 64.0, 256.0, 1024.0] {
            let b = bottleneck_at(kappa, &[c1, c2]).unwrap();
            let (r, p) = if b.consistent {
                (b.common_rate.value(), b.common_power)
            } else {
                kink_seen = true;
                kink_optimum(kappa, &[c1, c2])
            };
            let obj = |r: f64| {
                if r <= 0.0 {
                    return 0.0;
                }
                2.0 * LN_2 * kappa * r - required_power(&c1, r).max(required_power(&c2, r))
            };
            let found = if r > 0.0 {
                2.0 * LN_2 * kappa * r - p
            } else {
                obj(0.0)
            };
            let ub = [c1, c2]
                .iter()
                .map(|c| {
                    if c.c > 0.0 {
                        0.5 * (c.a / c.c).log2()
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(f64::INFINITY, f64::min)
                .min(6.0);
            for i in 1..20_000 {
                let rr = ub * i as f64 / 20_000.0;
                assert!(
                    obj(rr) <= found + 1e-6,
                    "kappa {kappa}: grid {rr} beats {r}"
                );
            }
        }
        assert!(kink_seen, "test instance should exercise the kink path");
    }

    fn state(sr: Vec<Vec<f64>>, rd: Vec<Vec<f64>>) -> ChannelState {
        ChannelState::new(sr, rd).unwrap()
    }

    #[test]
    fn single_state_reduces_to_p1() {
        let s = state(
            vec![vec![1.3, -0.4], vec![0.6, 1.7]],
            vec![vec![0.8, 1.2], vec![-1.5, 0.9]],
        );
        let p0 = PowerBudget::new(31.6).unwrap();
        let sel = select_general(s.sr_gains(), p0, 8, Method::Global).unwrap();
        let ds = crate::alloc_ds::cpf_ds(&s, &sel, p0, TimePolicy::Optimal);
        let samples = SampleSet::new(vec![s], 1).unwrap();
        let dt = solve_p2(&samples, &[sel], p0, 1e-8).unwrap();
        assert!(
            (dt.throughput - ds.throughput).abs() < 1e-6,
            "{} vs {}",
            dt.throughput,
            ds.throughput
        );
        assert!((dt.avg_powers[0] - p0.value()).abs() < 1e-6 * p0.value());
    }

    #[test]
    fn single_state_df_reduces_to_p3() {
        let s = state(
            vec![vec![0.9, 0.1], vec![0.3, -1.2]],
            vec![vec![0.7], vec![1.1]],
        );
        let p0 = PowerBudget::new(10.0).unwrap();
        let ds = crate::alloc_ds::df_ds(&s, p0, TimePolicy::Optimal);
        let dt = solve_p4_df(&SampleSet::new(vec![s], 1).unwrap(), p0, 1e-8).unwrap();
        assert!((dt.throughput - ds.throughput).abs() < 1e-8);
    }

    #[test]
    fn symmetric_relays_get_equal_shares() {
        let s1 = state(
            vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            vec![vec![0.9], vec![0.9]],
        );
        let s2 = state(
            vec![vec![0.2, 1.4], vec![1.4, 0.2]],
            vec![vec![1.3], vec![1.3]],
        );
        let p0 = PowerBudget::new(10.0).unwrap();
        let samples = SampleSet::new(vec![s1, s2], 3).unwrap();
        let sels: Vec<_> = samples
            .states()
            .iter()
            .map(|s| select_general(s.sr_gains(), p0, 8, Method::Global).unwrap())
            .collect();
        let dt = solve_p2(&samples, &sels, p0, 1e-8).unwrap();
        assert!((dt.fractions[1] - dt.fractions[2]).abs() < 1e-8);
        assert!(
            (dt.multipliers.betas[0] - dt.multipliers.betas[1]).abs()
                < 1e-8 * dt.multipliers.betas[0]
        );
    }

    #[test]
    fn rank_failed_states_contribute_nothing() {
        let s = state(
            vec![vec![1.1, 0.9], vec![0.8, 1.2]],
            vec![vec![1.0], vec![1.0]],
        );
        let p0 = PowerBudget::new(10.0).unwrap();
        let sel = select_general(s.sr_gains(), p0, 8, Method::Naive).unwrap();
        assert!(!sel.full_rank);
        let dt = solve_p2(&SampleSet::new(vec![s], 0).unwrap(), &[sel], p0, 1e-6).unwrap();
        assert_eq!(dt.throughput, 0.0);
        assert_eq!(dt.diagnostics.rank_failed_states, 1);
        assert_eq!(dt.diagnostics.slack_phases, vec![0]);
    }

    #[test]
    fn cpf_response_is_lenient_at_zero() {
        // b > 1 rows: the rate leaves zero with a positive power
        let c = coeffs(&[0.5, 0.45], &[1, 1]);
        let z = StatePhase::Cpf(Some(vec![c])).respond(1e-6);
        assert_eq!((z.rate, z.power), (0.0, 0.0));
        let big = StatePhase::Cpf(Some(vec![c])).respond(1e3);
        assert!(big.rate > 0.0 && big.power > (c.b - 1.0) / (c.a - c.c));
        assert!(
            (cpf_rate(&c, PowerBudget::new(big.power).unwrap()).value() - big.rate).abs() < 1e-9
        );
    }
}
