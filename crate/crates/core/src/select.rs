//! Integer coefficient-vector selection.
//!
//! Three methods are provided: per-relay rounding (`Naive`), the per-relay
//! rate-maximizing vector (`Local`) and a joint search that maximizes the
//! common rate subject to the stacked matrix being full rank (`Global`).
//!
//! The per-relay search is exact. The computation rate of `a` is positive iff
//! `a^T Q a < 1` with `Q = I - P/(1 + P|h|^2) h h^T`, so every positive-rate
//! vector lies inside a small ellipsoid that is enumerated with a
//! Fincke-Pohst style sphere search instead of scanning the whole box
//! `|a_j| <= sqrt(1 + P|h|^2)`. Zero-rate vectors (still inside the norm bound
//! `|a|^2 <= 1 + P|h|^2`) are appended in order of increasing norm when a
//! caller asks for more candidates than have positive rate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cpf_coefficients, cpf_rate, CoefficientVector, PowerBudget, Rate};
use crate::rank::integer_rank;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Local,
    Global,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Local => "local",
            Method::Global => "global",
        }
    }
}

/// Default per-relay candidate list length for the joint search.
pub fn default_top_n(m: usize) -> usize {
    (2 * m).max(8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub vector: CoefficientVector,
    pub rate: Rate,
}

/// Stacked coefficient vectors together with the relay that decodes and
/// forwards each row.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkMatrix {
    rows: Vec<CoefficientVector>,
    source_relay: Vec<usize>,
}

impl NetworkMatrix {
    pub fn new(rows: Vec<CoefficientVector>, source_relay: Vec<usize>) -> Result<Self> {
        if rows.len() != source_relay.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} relay assignments",
                rows.len(),
                source_relay.len()
            )));
        }
        if let Some(w) = rows.windows(2).find(|w| w[0].len() != w[1].len()) {
            return Err(Error::InvalidArgument(format!(
                "rows of different lengths {} and {}",
                w[0].len(),
                w[1].len()
            )));
        }
        Ok(Self { rows, source_relay })
    }

    pub fn rows(&self) -> &[CoefficientVector] {
        &self.rows
    }

    pub fn source_relay(&self) -> &[usize] {
        &self.source_relay
    }

    pub fn rank(&self) -> usize {
        let rows: Vec<&[i64]> = self.rows.iter().map(|r| r.entries()).collect();
        integer_rank(&rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionResult {
    pub matrix: NetworkMatrix,
    pub per_row_rate: Vec<Rate>,
    pub common_rate: Rate,
    pub full_rank: bool,
}

impl SelectionResult {
    fn from_rows(rows: Vec<(usize, Candidate)>, m: usize) -> Result<Self> {
        let (source_relay, cands): (Vec<usize>, Vec<Candidate>) = rows.into_iter().unzip();
        let per_row_rate: Vec<Rate> = cands.iter().map(|c| c.rate).collect();
        let matrix =
            NetworkMatrix::new(cands.into_iter().map(|c| c.vector).collect(), source_relay)?;
        let common_rate = per_row_rate
            .iter()
            .copied()
            .fold(None, |acc: Option<Rate>, r| {
                Some(acc.map_or(r, |a| if r < a { r } else { a }))
            })
            .unwrap_or(Rate::ZERO);
        let full_rank = matrix.rows().len() == m && matrix.rank() == m;
        Ok(Self {
            matrix,
            per_row_rate,
            common_rate,
            full_rank,
        })
    }
}

/// Scores a given network matrix on the relay channels `h_all`.
pub fn evaluate(
    h_all: &[Vec<f64>],
    matrix: NetworkMatrix,
    p: PowerBudget,
) -> Result<SelectionResult> {
    let m = dims(h_all)?;
    let mut rows = Vec::with_capacity(matrix.rows.len());
    for (v, &relay) in matrix.rows.iter().zip(&matrix.source_relay) {
        let h = h_all.get(relay).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "row assigned to relay {relay}, but there are {} relays",
                h_all.len()
            ))
        })?;
        if v.len() != m {
            return Err(Error::InvalidCoefficient(format!(
                "vector of length {} for {m} sources",
                v.len()
            )));
        }
        rows.push((relay, candidate(h, v.clone(), p)));
    }
    SelectionResult::from_rows(rows, m)
}

/// Naive selection: entrywise rounding, falling back to the signed unit vector on the
/// strongest channel entry when everything rounds to zero.
pub fn select_naive(h: &[f64]) -> CoefficientVector {
    let rounded: Vec<i64> = h.iter().map(|x| x.round() as i64).collect();
    CoefficientVector::new(rounded).unwrap_or_else(|_| {
        let mut best = 0;
        for (j, x) in h.iter().enumerate() {
            if x.abs() > h[best].abs() {
                best = j;
            }
        }
        CoefficientVector::unit(h.len(), best, h[best] < 0.0)
    })
}

fn candidate(h: &[f64], v: CoefficientVector, p: PowerBudget) -> Candidate {
    let coeffs = cpf_coefficients(h, &v).expect("candidate vectors are nonzero and sized to h");
    Candidate {
        rate: cpf_rate(&coeffs, p),
        vector: v,
    }
}

fn rank_order(x: &Candidate, y: &Candidate) -> std::cmp::Ordering {
    y.rate
        .value()
        .total_cmp(&x.rate.value())
        .then_with(|| x.vector.norm_sq().cmp(&y.vector.norm_sq()))
        .then_with(|| x.vector.cmp(&y.vector))
}

/// Upper-triangular `R` with `R^T R = gram`.
fn cholesky_upper(gram: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = gram.len();
    let mut r = vec![vec![0.0; n]; n];
    for i in 0..n {
        let diag = gram[i][i] - (0..i).map(|k| r[k][i] * r[k][i]).sum::<f64>();
        r[i][i] = diag.max(f64::MIN_POSITIVE).sqrt();
        for j in (i + 1)..n {
            let s = gram[i][j] - (0..i).map(|k| r[k][i] * r[k][j]).sum::<f64>();
            r[i][j] = s / r[i][i];
        }
    }
    r
}

/// All nonzero integer vectors with `|R a|^2 <= radius_sq`.
fn ellipsoid_points(r: &[Vec<f64>], radius_sq: f64) -> Vec<Vec<i64>> {
    fn descend(
        r: &[Vec<f64>],
        level: usize,
        partial: f64,
        radius_sq: f64,
        a: &mut [i64],
        out: &mut Vec<Vec<i64>>,
    ) {
        let n = a.len();
        let rii = r[level][level];
        let offset: f64 = ((level + 1)..n).map(|j| r[level][j] * a[j] as f64).sum();
        let center = -offset / rii;
        let room = (radius_sq - partial).max(0.0).sqrt() / rii;
        let lo = (center - room).ceil() as i64;
        let hi = (center + room).floor() as i64;
        for v in lo..=hi {
            a[level] = v;
            let t = rii * v as f64 + offset;
            let next = partial + t * t;
            if next > radius_sq {
                continue;
            }
            if level == 0 {
                if a.iter().any(|&x| x != 0) {
                    out.push(a.to_vec());
                }
            } else {
                descend(r, level - 1, next, radius_sq, a, out);
            }
        }
        a[level] = 0;
    }

    let n = r.len();
    let mut out = Vec::new();
    let mut a = vec![0i64; n];
    descend(r, n - 1, 0.0, radius_sq, &mut a, &mut out);
    out
}

/// Canonical vectors (first nonzero entry positive) with `|a|^2 <= bound`,
/// ordered by increasing squared norm, restricted to squared norm `<= limit`.
fn small_canonical_vectors(m: usize, limit: i64) -> Vec<CoefficientVector> {
    let radius = (limit as f64).sqrt().floor() as i64;
    let mut out = Vec::new();
    let mut a = vec![-radius; m];
    loop {
        let norm: i64 = a.iter().map(|x| x * x).sum();
        if norm > 0 && norm <= limit {
            if let Ok(v) = CoefficientVector::new(a.clone()) {
                if v.is_canonical() {
                    out.push(v);
                }
            }
        }
        // odometer increment over the box
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if a[i] < radius {
                a[i] += 1;
                break;
            }
            a[i] = -radius;
        }
    }
}

/// The `top_n` best coefficient vectors for channel `h` at power `p`, by
/// descending computation rate, ties broken by smaller norm then
/// lexicographic order. Only canonical-sign vectors are reported.
pub fn enumerate_candidates(h: &[f64], p: PowerBudget, top_n: usize) -> Vec<Candidate> {
    let m = h.len();
    if m == 0 || top_n == 0 {
        return Vec::new();
    }
    let h_norm: f64 = h.iter().map(|x| x * x).sum();
    let norm_bound = 1.0 + p.value() * h_norm;
    let kappa = p.value() / norm_bound;
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| f64::from(u8::from(i == j)) - kappa * h[i] * h[j])
                .collect()
        })
        .collect();
    let r = cholesky_upper(&gram);

    let mut positive: Vec<Candidate> = ellipsoid_points(&r, 1.0 + 1e-9)
        .into_iter()
        .filter_map(|v| CoefficientVector::new(v).ok())
        .filter(CoefficientVector::is_canonical)
        .map(|v| candidate(h, v, p))
        .filter(|c| c.rate.value() > 0.0)
        .collect();
    positive.sort_by(rank_order);
    if positive.len() >= top_n {
        positive.truncate(top_n);
        return positive;
    }

    // Pad with zero-rate vectors of increasing norm, up to the norm bound.
    let cap = norm_bound.floor() as i64;
    let needed = top_n - positive.len();
    let mut limit = 1i64;
    loop {
        let limit_now = limit.min(cap.max(1));
        let mut zero: Vec<Candidate> = small_canonical_vectors(m, limit_now)
            .into_iter()
            .map(|v| candidate(h, v, p))
            .filter(|c| c.rate.value() == 0.0)
            .collect();
        if zero.len() >= needed || limit_now >= cap {
            zero.sort_by(rank_order);
            zero.truncate(needed);
            positive.extend(zero);
            return positive;
        }
        limit = limit_now * 2 + 1;
    }
}

/// Local selection: the per-relay rate-maximizing coefficient vector.
pub fn select_local(h: &[f64], p: PowerBudget) -> Candidate {
    enumerate_candidates(h, p, 1)
        .pop()
        .expect("a nonempty channel always has a candidate")
}

fn candidate_lists(
    h_all: &[Vec<f64>],
    p: PowerBudget,
    top_n: usize,
) -> Result<Vec<Vec<Candidate>>> {
    if top_n == 0 {
        return Err(Error::InvalidArgument("top_n must be >= 1".into()));
    }
    let lists: Vec<Vec<Candidate>> = h_all
        .iter()
        .map(|h| enumerate_candidates(h, p, top_n))
        .collect();
    if let Some(i) = lists.iter().position(Vec::is_empty) {
        return Err(Error::SelectionFailure(format!(
            "relay {i} has no candidate vectors"
        )));
    }
    Ok(lists)
}

struct BranchAndBound<'a> {
    lists: &'a [Vec<Candidate>],
    order: Vec<usize>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl BranchAndBound<'_> {
    fn search(&mut self, depth: usize, partial_min: f64, rows: &mut Vec<Vec<i64>>) {
        if depth == self.order.len() {
            if self.best.as_ref().is_none_or(|(b, _)| partial_min > *b) {
                self.best = Some((partial_min, self.chosen.clone()));
            }
            return;
        }
        let relay = self.order[depth];
        for (idx, cand) in self.lists[relay].iter().enumerate() {
            let bound = partial_min.min(cand.rate.value());
            if self.best.as_ref().is_some_and(|(b, _)| bound <= *b) {
                // lists are sorted by descending rate
                break;
            }
            rows.push(cand.vector.entries().to_vec());
            if integer_rank(rows) == rows.len() {
                self.chosen[relay] = idx;
                self.search(depth + 1, bound, rows);
            }
            rows.pop();
        }
    }
}

/// Joint selection over per-relay candidate lists: one vector per relay,
/// maximizing the common rate subject to full rank. Requires `K = M`.
pub fn select_global(h_all: &[Vec<f64>], p: PowerBudget, top_n: usize) -> Result<SelectionResult> {
    let m = dims(h_all)?;
    if h_all.len() != m {
        return Err(Error::InvalidArgument(format!(
            "joint search needs one relay per source, got K={} M={m}",
            h_all.len()
        )));
    }
    let relays: Vec<usize> = (0..m).collect();
    widening(h_all, p, top_n, |lists| {
        global_from_lists(lists, &relays, m)
    })
}

/// Runs `search` on candidate lists of length `top_n`, doubling the length
/// while no full-rank matrix is found and some list can still grow. Complete
/// lists contain every unit vector, so the loop ends full rank.
fn widening<F>(
    h_all: &[Vec<f64>],
    p: PowerBudget,
    top_n: usize,
    search: F,
) -> Result<SelectionResult>
where
    F: Fn(&[Vec<Candidate>]) -> SelectionResult,
{
    let mut n = top_n;
    loop {
        let lists = candidate_lists(h_all, p, n)?;
        let res = search(&lists);
        if res.full_rank || lists.iter().all(|l| l.len() < n) {
            return Ok(res);
        }
        n *= 2;
    }
}

/// Branch-and-bound over the candidate lists of the given relays.
fn global_from_lists(lists: &[Vec<Candidate>], relays: &[usize], m: usize) -> SelectionResult {
    let mut order: Vec<usize> = relays.to_vec();
    order.sort_by(|&x, &y| {
        lists[y][0]
            .rate
            .value()
            .total_cmp(&lists[x][0].rate.value())
            .then(x.cmp(&y))
    });
    let mut bb = BranchAndBound {
        lists,
        order,
        chosen: vec![0; lists.len()],
        best: None,
    };
    bb.search(0, f64::INFINITY, &mut Vec::with_capacity(m));
    let chosen = bb
        .best
        .map(|(_, c)| c)
        .unwrap_or_else(|| vec![0; lists.len()]);
    let rows = relays
        .iter()
        .map(|&r| (r, lists[r][chosen[r]].clone()))
        .collect();
    SelectionResult::from_rows(rows, m).expect("rows share the source dimension")
}

fn dims(h_all: &[Vec<f64>]) -> Result<usize> {
    let m = h_all.first().map(Vec::len).unwrap_or(0);
    if m == 0 {
        return Err(Error::InvalidArgument(
            "need at least one relay and one source".into(),
        ));
    }
    if h_all.iter().any(|h| h.len() != m) {
        return Err(Error::InvalidArgument(
            "relay channel vectors differ in length".into(),
        ));
    }
    Ok(m)
}

fn per_relay_choice(h: &[f64], p: PowerBudget, method: Method) -> Candidate {
    match method {
        Method::Naive => candidate(h, select_naive(h), p),
        Method::Local | Method::Global => select_local(h, p),
    }
}

/// Selection for an arbitrary number of relays `K`, always producing exactly
/// `M` rows (one per relaying phase).
///
/// * `K = M`: one row per relay, by the chosen method.
/// * `K > M`: naive/local keep the `M` relays with the highest own rate;
///   global runs the joint search over every `M`-subset of relays.
/// * `K < M`: relays decode several function messages. The pooled
///   (relay, candidate) pairs are taken by descending rate, skipping pairs
///   that do not raise the rank for global, unconstrained otherwise.
pub fn select_general(
    h_all: &[Vec<f64>],
    p: PowerBudget,
    top_n: usize,
    method: Method,
) -> Result<SelectionResult> {
    let m = dims(h_all)?;
    let k = h_all.len();
    if top_n == 0 {
        return Err(Error::InvalidArgument("top_n must be >= 1".into()));
    }
    if k == m {
        return match method {
            Method::Global => select_global(h_all, p, top_n),
            _ => {
                let rows = h_all
                    .iter()
                    .enumerate()
                    .map(|(i, h)| (i, per_relay_choice(h, p, method)))
                    .collect();
                SelectionResult::from_rows(rows, m)
            }
        };
    }
    if k > m {
        return match method {
            Method::Global => widening(h_all, p, top_n, |lists| {
                let mut best: Option<SelectionResult> = None;
                for subset in combinations(k, m) {
                    let res = global_from_lists(lists, &subset, m);
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            (res.full_rank && !b.full_rank)
                                || (res.full_rank == b.full_rank && res.common_rate > b.common_rate)
                        }
                    };
                    if better {
                        best = Some(res);
                    }
                }
                best.expect("at least one subset")
            }),
            _ => {
                let mut picks: Vec<(usize, Candidate)> = h_all
                    .iter()
                    .enumerate()
                    .map(|(i, h)| (i, per_relay_choice(h, p, method)))
                    .collect();
                picks.sort_by(|x, y| {
                    y.1.rate
                        .value()
                        .total_cmp(&x.1.rate.value())
                        .then(x.0.cmp(&y.0))
                });
                picks.truncate(m);
                picks.sort_by_key(|(i, _)| *i);
                SelectionResult::from_rows(picks, m)
            }
        };
    }

    // K < M: pool candidates across relays.
    match method {
        Method::Global => widening(h_all, p, top_n.max(m), |lists| pooled(lists, method, m)),
        _ => Ok(pooled(&candidate_lists(h_all, p, top_n.max(m))?, method, m)),
    }
}

fn pooled(lists: &[Vec<Candidate>], method: Method, m: usize) -> SelectionResult {
    let mut pool: Vec<(usize, Candidate)> = lists
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.iter().map(move |c| (i, c.clone())))
        .collect();
    pool.sort_by(|x, y| {
        y.1.rate
            .value()
            .total_cmp(&x.1.rate.value())
            .then(x.0.cmp(&y.0))
            .then_with(|| rank_order(&x.1, &y.1))
    });
    let mut picked: Vec<(usize, Candidate)> = Vec::with_capacity(m);
    match method {
        Method::Global => {
            // Greedy on a linear matroid maximizes the minimum weight of a basis.
            let mut rows: Vec<Vec<i64>> = Vec::with_capacity(m);
            let mut used = vec![false; pool.len()];
            for (idx, (relay, cand)) in pool.iter().enumerate() {
                if picked.len() == m {
                    break;
                }
                rows.push(cand.vector.entries().to_vec());
                if integer_rank(&rows) == rows.len() {
                    picked.push((*relay, cand.clone()));
                    used[idx] = true;
                } else {
                    rows.pop();
                }
            }
            // not enough independent vectors: fill by rate and report failure
            for (idx, item) in pool.iter().enumerate() {
                if picked.len() == m {
                    break;
                }
                if !used[idx] {
                    picked.push(item.clone());
                }
            }
        }
        _ => picked.extend(pool.into_iter().take(m)),
    }
    picked.sort_by_key(|(i, _)| *i);
    SelectionResult::from_rows(picked, m).expect("rows share the source dimension")
}

/// All `r`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - r + i {
                idx[i] += 1;
                for j in (i + 1)..r {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
