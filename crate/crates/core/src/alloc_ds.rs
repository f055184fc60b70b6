//! Delay-stringent allocation: every message is delivered within one slot, so
//! time fractions are chosen per channel realization with every node
//! transmitting at full power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cpf_coefficients, ChannelState, PowerBudget, Rate};
use crate::select::SelectionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "camelCase")]
pub enum TimePolicy {
    /// Max-min optimal time fractions.
    Optimal,
    /// Every phase gets the same share of the slot.
    #[value(name = "equal", alias = "equal-split")]
    #[serde(alias = "equal")]
    EqualSplit,
}

impl TimePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TimePolicy::Optimal => "optimal",
            TimePolicy::EqualSplit => "equal",
        }
    }
}

/// Time/rate/power plan of one slot. For CPF the phases are the computation
/// phase followed by the `M` relaying phases; for DF the `M` source phases
/// followed by the `M` relay broadcasts.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Allocation {
    pub fractions: Vec<f64>,
    pub phase_rates: Vec<f64>,
    pub phase_powers: Vec<f64>,
    pub throughput: f64,
    /// First phase with zero rate, if any. The slot is then wasted.
    pub zero_rate_phase: Option<usize>,
}

/// Max-min time sharing over phases with fixed rates:
/// `L = 1 / sum(1/R_j)`, `f_j = L / R_j`.
fn max_min_split(rates: &[f64], p0: f64) -> Allocation {
    let n = rates.len();
    let phase_powers = vec![p0; n];
    if let Some(zero) = rates.iter().position(|&r| r <= 0.0) {
        return Allocation {
            fractions: vec![1.0 / n as f64; n],
            phase_rates: rates.to_vec(),
            phase_powers,
            throughput: 0.0,
            zero_rate_phase: Some(zero),
        };
    }
    let throughput = 1.0 / rates.iter().map(|r| 1.0 / r).sum::<f64>();
    Allocation {
        fractions: rates.iter().map(|r| throughput / r).collect(),
        phase_rates: rates.to_vec(),
        phase_powers,
        throughput,
        zero_rate_phase: None,
    }
}

fn equal_split(rates: &[f64], p0: f64) -> Allocation {
    let n = rates.len();
    let f = 1.0 / n as f64;
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Allocation {
        fractions: vec![f; n],
        phase_rates: rates.to_vec(),
        phase_powers: vec![p0; n],
        throughput: f * min.max(0.0),
        zero_rate_phase: rates.iter().position(|&r| r <= 0.0),
    }
}

fn check(rates: &[Rate]) -> Vec<f64> {
    rates.iter().map(|r| r.value()).collect()
}

/// CPF in one slot: computation phase at rate `r_cpf`, then one broadcast
/// phase per relay rate, all at power `P0`.
pub fn solve_p1(r_cpf: Rate, relay_rates: &[Rate], p0: PowerBudget) -> Allocation {
    let mut rates = vec![r_cpf.value()];
    rates.extend(check(relay_rates));
    max_min_split(&rates, p0.value())
}

/// CPF with fixed fractions `1/(M+1)`.
pub fn solve_p1_equal_split(r_cpf: Rate, relay_rates: &[Rate], p0: PowerBudget) -> Allocation {
    let mut rates = vec![r_cpf.value()];
    rates.extend(check(relay_rates));
    equal_split(&rates, p0.value())
}

/// Two-hop DF in one slot with `2M` phases. Each message must clear both of
/// its hops at the common per-message throughput
/// `T = 1 / sum_i (1/R_i + 1/R_{M+i})`.
pub fn solve_p3_df(
    source_rates: &[Rate],
    broadcast_rates: &[Rate],
    p0: PowerBudget,
) -> Result<Allocation> {
    if source_rates.len() != broadcast_rates.len() || source_rates.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need M source and M broadcast rates, got {} and {}",
            source_rates.len(),
            broadcast_rates.len()
        )));
    }
    let mut rates = check(source_rates);
    rates.extend(check(broadcast_rates));
    Ok(max_min_split(&rates, p0.value()))
}

pub fn solve_p3_df_equal_split(
    source_rates: &[Rate],
    broadcast_rates: &[Rate],
    p0: PowerBudget,
) -> Result<Allocation> {
    if source_rates.len() != broadcast_rates.len() || source_rates.is_empty() {
        return Err(Error::InvalidArgument(
            "need M source and M broadcast rates".into(),
        ));
    }
    let mut rates = check(source_rates);
    rates.extend(check(broadcast_rates));
    Ok(equal_split(&rates, p0.value()))
}

/// `1/2 log2(1 + p g)`, zero for a dead link.
pub fn link_rate(p: f64, gain: f64) -> f64 {
    if gain > 0.0 && p > 0.0 {
        0.5 * (p * gain).ln_1p() / std::f64::consts::LN_2
    } else {
        0.0
    }
}

/// Relay serving source `i` in the DF baseline (relays are reused
/// round-robin when `K < M`).
pub fn df_relay_for(source: usize, k: usize) -> usize {
    source % k
}

/// Per-phase rates of the DF baseline at power `p`: the `M` source-to-relay
/// hops followed by the `M` relay broadcasts.
pub fn df_phase_rates(state: &ChannelState, p: f64) -> (Vec<Rate>, Vec<Rate>) {
    let m = state.m();
    let k = state.k();
    let mut sources = Vec::with_capacity(m);
    let mut broadcasts = Vec::with_capacity(m);
    for i in 0..m {
        let relay = df_relay_for(i, k);
        let h = state.sr_gains()[relay][i];
        sources.push(Rate::clamped(link_rate(p, h * h)));
        broadcasts.push(Rate::clamped(link_rate(p, state.rd_min_gain()[relay])));
    }
    (sources, broadcasts)
}

/// Broadcast rates of the relaying phases of a CPF selection at power `p`.
pub fn cpf_relay_rates(state: &ChannelState, selection: &SelectionResult, p: f64) -> Vec<Rate> {
    selection
        .matrix
        .source_relay()
        .iter()
        .map(|&r| Rate::clamped(link_rate(p, state.rd_min_gain()[r])))
        .collect()
}

/// Computation rate of the selection recomputed at power `p`; zero when the
/// network matrix is rank deficient.
pub fn cpf_common_rate(state: &ChannelState, selection: &SelectionResult, p: PowerBudget) -> Rate {
    if !selection.full_rank {
        return Rate::ZERO;
    }
    selection
        .matrix
        .rows()
        .iter()
        .zip(selection.matrix.source_relay())
        .map(|(row, &relay)| {
            let coeffs = cpf_coefficients(state.relay_channel(relay), row)
                .expect("row sized to the channel");
            crate::model::cpf_rate(&coeffs, p)
        })
        .fold(None, |acc: Option<Rate>, r| {
            Some(acc.map_or(r, |a| if r < a { r } else { a }))
        })
        .unwrap_or(Rate::ZERO)
}

/// Delay-stringent CPF allocation of one realization.
pub fn cpf_ds(
    state: &ChannelState,
    selection: &SelectionResult,
    p0: PowerBudget,
    policy: TimePolicy,
) -> Allocation {
    let r_cpf = cpf_common_rate(state, selection, p0);
    let relays = cpf_relay_rates(state, selection, p0.value());
    match policy {
        TimePolicy::Optimal => solve_p1(r_cpf, &relays, p0),
        TimePolicy::EqualSplit => solve_p1_equal_split(r_cpf, &relays, p0),
    }
}

/// Delay-stringent DF allocation of one realization.
pub fn df_ds(state: &ChannelState, p0: PowerBudget, policy: TimePolicy) -> Allocation {
    let (s, b) = df_phase_rates(state, p0.value());
    match policy {
        TimePolicy::Optimal => solve_p3_df(&s, &b, p0),
        TimePolicy::EqualSplit => solve_p3_df_equal_split(&s, &b, p0),
    }
    .expect("M source and M broadcast phases")
}
