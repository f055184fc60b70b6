//! Channel and coefficient data model plus the closed-form computation and
//! broadcast rate/power relations.
//!
//! Noise variance is normalized to one, so a power value is directly an SNR.
//! All rates are in bits per real channel use and already include the leading
//! one-half of the real-valued capacity formulas.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{BoundSide, Error, Result};

/// Converts an SNR in dB to linear power.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One fading realization of the two-hop network.
///
/// `sr_gains` has one row per relay (row `m` is the vector of source-to-relay
/// coefficients seen by relay `m`), `rd_gains` one row per relay with one entry
/// per destination.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChannelState {
    sr_gains: Vec<Vec<f64>>,
    rd_gains: Vec<Vec<f64>>,
    rd_min_gain: Vec<f64>,
}

impl ChannelState {
    pub fn new(sr_gains: Vec<Vec<f64>>, rd_gains: Vec<Vec<f64>>) -> Result<Self> {
        let k = sr_gains.len();
        if k == 0 {
            return Err(Error::InvalidChannel("no relays".into()));
        }
        let m = sr_gains[0].len();
        if m == 0 {
            return Err(Error::InvalidChannel("no sources".into()));
        }
        if let Some(row) = sr_gains.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidChannel(format!(
                "srGains row {row} has {} entries, expected {m}",
                sr_gains[row].len()
            )));
        }
        if rd_gains.len() != k {
            return Err(Error::InvalidChannel(format!(
                "rdGains has {} rows, expected one per relay ({k})",
                rd_gains.len()
            )));
        }
        let l = rd_gains[0].len();
        if l == 0 {
            return Err(Error::InvalidChannel("no destinations".into()));
        }
        if let Some(row) = rd_gains.iter().position(|r| r.len() != l) {
            return Err(Error::InvalidChannel(format!(
                "rdGains row {row} has {} entries, expected {l}",
                rd_gains[row].len()
            )));
        }
        if sr_gains
            .iter()
            .chain(&rd_gains)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidChannel(
                "non-finite channel coefficient".into(),
            ));
        }
        let rd_min_gain = rd_gains
            .iter()
            .map(|row| row.iter().map(|g| g * g).fold(f64::INFINITY, f64::min))
            .collect();
        Ok(Self {
            sr_gains,
            rd_gains,
            rd_min_gain,
        })
    }

    /// Number of sources.
    pub fn m(&self) -> usize {
        self.sr_gains[0].len()
    }

    /// Number of relays.
    pub fn k(&self) -> usize {
        self.sr_gains.len()
    }

    /// Number of destinations.
    pub fn l(&self) -> usize {
        self.rd_gains[0].len()
    }

    pub fn sr_gains(&self) -> &[Vec<f64>] {
        &self.sr_gains
    }

    /// Channel vector from all sources to relay `relay`.
    pub fn relay_channel(&self, relay: usize) -> &[f64] {
        &self.sr_gains[relay]
    }

    pub fn rd_gains(&self) -> &[Vec<f64>] {
        &self.rd_gains
    }

    /// `min_i |g_{mi}|^2` for every relay `m`.
    pub fn rd_min_gain(&self) -> &[f64] {
        &self.rd_min_gain
    }
}

/// Integer combining vector of a relay. Never the zero vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct CoefficientVector(Vec<i64>);

impl CoefficientVector {
    pub fn new(entries: Vec<i64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidCoefficient("empty vector".into()));
        }
        if entries.iter().all(|&e| e == 0) {
            return Err(Error::InvalidCoefficient("zero vector".into()));
        }
        Ok(Self(entries))
    }

    /// Signed unit vector `sign * e_index` of length `len`.
    pub fn unit(len: usize, index: usize, negative: bool) -> Self {
        let mut v = vec![0; len];
        v[index] = if negative { -1 } else { 1 };
        Self(v)
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|e| e * e).sum()
    }

    /// The representative of `{a, -a}` whose first nonzero entry is positive.
    pub fn canonical(&self) -> Self {
        match self.0.iter().find(|&&e| e != 0) {
            Some(&first) if first < 0 => Self(self.0.iter().map(|e| -e).collect()),
            _ => self.clone(),
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.0.iter().find(|&&e| e != 0).is_some_and(|&e| e > 0)
    }
}

impl TryFrom<Vec<i64>> for CoefficientVector {
    type Error = Error;

    fn try_from(v: Vec<i64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CoefficientVector> for Vec<i64> {
    fn from(v: CoefficientVector) -> Self {
        v.0
    }
}

/// Scalars `(a, b, c, d)` of a (channel, coefficient vector) pair:
/// `a = |h|^2`, `b = |a|^2`, `d = (h.a)^2` and `c = ab - d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpfCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Nonnegative rate in bits per real channel use.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize)]
#[serde(transparent)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rate must be >= 0, got {value}"
            )));
        }
        Ok(Self(value))
    }

    /// Clamps negative values to zero (the `log+` convention).
    pub fn clamped(value: f64) -> Self {
        Self(value.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-node power constraint `P0` (linear, equal to the SNR).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct PowerBudget(f64);

impl PowerBudget {
    pub fn new(p0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power budget must be > 0, got {p0}"
            )));
        }
        Ok(Self(p0))
    }

    pub fn from_db(db: f64) -> Result<Self> {
        Self::new(db_to_linear(db))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn cpf_coefficients(h: &[f64], a: &CoefficientVector) -> Result<CpfCoefficients> {
    if h.len() != a.len() {
        return Err(Error::InvalidArgument(format!(
            "channel has {} entries but coefficient vector has {}",
            h.len(),
            a.len()
        )));
    }
    let a_int = a.entries();
    if a_int.iter().all(|&e| e == 0) {
        return Err(Error::InvalidCoefficient("zero vector".into()));
    }
    let af: Vec<f64> = a_int.iter().map(|&e| e as f64).collect();
    let h_norm = h.iter().map(|x| x * x).sum::<f64>();
    let a_norm = a.norm_sq() as f64;
    let dot = h.iter().zip(&af).map(|(x, y)| x * y).sum::<f64>();
    // Lagrange identity keeps c accurate and nonnegative when h is nearly parallel to a.
    let mut c = 0.0;
    for i in 0..h.len() {
        for j in (i + 1)..h.len() {
            let cross = h[i] * af[j] - h[j] * af[i];
            c += cross * cross;
        }
    }
    Ok(CpfCoefficients {
        a: h_norm,
        b: a_norm,
        c,
        d: dot * dot,
    })
}

/// Unclamped computation rate `1/2 log2((1 + P a)/(b + P c))`.
pub fn cpf_rate_raw(coeffs: &CpfCoefficients, p: f64) -> f64 {
    let CpfCoefficients { a, b, c, d } = *coeffs;
    // ratio - 1 without cancellation near a zero rate
    let excess = ((1.0 - b) * (1.0 + p * a) + p * d) / (b + p * c);
    0.5 * excess.ln_1p() / LN_2
}

/// Numerator `x b - 1` and denominator `a - x c` of the power at rate `r`,
/// both accurate near `x = 1`.
fn power_terms(coeffs: &CpfCoefficients, rate: f64) -> (f64, f64) {
    let CpfCoefficients { a, b, c, d } = *coeffs;
    let xm1 = (2.0 * LN_2 * rate).exp_m1();
    (b * xm1 + (b - 1.0), d - a * (b - 1.0) - c * xm1)
}

/// Computation rate of one relay at source power `p`, clamped at zero.
pub fn cpf_rate(coeffs: &CpfCoefficients, p: PowerBudget) -> Rate {
    Rate::clamped(cpf_rate_raw(coeffs, p.value()))
}

/// Interval `(1/2 log2(1/b), 1/2 log2(a/c))` of rates reachable with
/// positive source power. The upper end is infinite when `c = 0`.
pub fn rate_bounds(coeffs: &CpfCoefficients) -> Result<(f64, f64)> {
    if !(coeffs.d > 0.0) {
        return Err(Error::DegeneratePair);
    }
    let lower = -0.5 * coeffs.b.log2();
    let upper = if coeffs.c > 0.0 {
        0.5 * (coeffs.a / coeffs.c).log2()
    } else {
        f64::INFINITY
    };
    Ok((lower, upper))
}

/// Source power needed for one relay to decode at rate `r`.
pub fn cpf_power(coeffs: &CpfCoefficients, r: Rate) -> Result<f64> {
    let (lower, upper) = rate_bounds(coeffs)?;
    let (num, den) = power_terms(coeffs, r.value());
    if num <= 0.0 {
        return Err(Error::InfeasibleRate {
            rate: r.value(),
            bound: lower,
            side: BoundSide::Lower,
            relay: None,
        });
    }
    if den <= 0.0 {
        return Err(Error::InfeasibleRate {
            rate: r.value(),
            bound: upper,
            side: BoundSide::Upper,
            relay: None,
        });
    }
    Ok(num / den)
}

/// Lenient form of [`cpf_power`]: zero when the rate is reachable without
/// power, infinite when it is not reachable at all.
pub fn required_power(coeffs: &CpfCoefficients, rate: f64) -> f64 {
    let (num, den) = power_terms(coeffs, rate);
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Common computation rate of a set of relays and the index of the (lowest
/// indexed) relay attaining it.
pub fn common_cpf_rate(relay_coeffs: &[CpfCoefficients], p: PowerBudget) -> Result<(Rate, usize)> {
    if relay_coeffs.is_empty() {
        return Err(Error::InvalidArgument("no relays".into()));
    }
    let mut best = (cpf_rate(&relay_coeffs[0], p), 0);
    for (i, c) in relay_coeffs.iter().enumerate().skip(1) {
        let r = cpf_rate(c, p);
        if r < best.0 {
            best = (r, i);
        }
    }
    Ok(best)
}

/// Source power at which every relay decodes at the common rate `r`.
pub fn common_cpf_power(relay_coeffs: &[CpfCoefficients], r: Rate) -> Result<f64> {
    if relay_coeffs.is_empty() {
        return Err(Error::InvalidArgument("no relays".into()));
    }
    let mut max = f64::NEG_INFINITY;
    for (i, c) in relay_coeffs.iter().enumerate() {
        let p = cpf_power(c, r).map_err(|e| match e {
            Error::InfeasibleRate {
                rate, bound, side, ..
            } => Error::InfeasibleRate {
                rate,
                bound,
                side,
                relay: Some(i),
            },
            other => other,
        })?;
        max = max.max(p);
    }
    Ok(max)
}

/// Relay-to-destinations rate `1/2 log2(1 + p g_min)`.
pub fn broadcast_rate(p: f64, g_min: f64) -> Result<Rate> {
    if !(g_min > 0.0) {
        return Err(Error::InvalidChannel(format!(
            "minimum gain must be > 0, got {g_min}"
        )));
    }
    if !(p >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power must be >= 0, got {p}"
        )));
    }
    Ok(Rate::clamped(
        0.5 * (p * g_min).ln_1p() / std::f64::consts::LN_2,
    ))
}

pub fn broadcast_power(r: Rate, g_min: f64) -> Result<f64> {
    if !(g_min > 0.0) {
        return Err(Error::InvalidChannel(format!(
            "minimum gain must be > 0, got {g_min}"
        )));
    }
    Ok((2.0 * r.value() * std::f64::consts::LN_2).exp_m1() / g_min)
}
