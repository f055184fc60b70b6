use cpf_relay::alloc_ds::{cpf_ds, solve_p1, solve_p1_equal_split, TimePolicy};
use cpf_relay::alloc_dt::{cpf_root_dt, solve_p2, SampleSet};
use cpf_relay::model::{
    broadcast_power, broadcast_rate, cpf_coefficients, cpf_power, cpf_rate, cpf_rate_raw,
    rate_bounds, ChannelState, CoefficientVector, CpfCoefficients, PowerBudget, Rate,
};
use cpf_relay::rank::integer_rank;
use cpf_relay::select::{enumerate_candidates, select_general, select_local, select_naive, Method};
use proptest::prelude::*;

fn channel(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<i64>)> {
    (2usize..=4).prop_flat_map(|n| (channel(n), prop::collection::vec(-4i64..=4, n)))
}

fn coeffs(h: &[f64], a: &[i64]) -> Option<CpfCoefficients> {
    let v = CoefficientVector::new(a.to_vec()).ok()?;
    let c = cpf_coefficients(h, &v).ok()?;
    (c.d > 1e-9).then_some(c)
}

fn power_db() -> impl Strategy<Value = PowerBudget> {
    (-10.0f64..35.0).prop_map(|db| PowerBudget::from_db(db).unwrap())
}

/// Rank by partial-pivot Gaussian elimination in floating point.
fn float_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect();
    let (n, cols) = (m.len(), m[0].len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(rank, p);
        for i in rank + 1..n {
            let f = m[i][c] / m[rank][c];
            let pivot = m[rank].clone();
            for (x, y) in m[i][c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * y;
            }
        }
        rank += 1;
    }
    rank
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rate_inside_reachable_interval((h, a) in pair(), p in power_db()) {
        let Some(c) = coeffs(&h, &a) else { return Ok(()) };
        let (lo, hi) = rate_bounds(&c).unwrap();
        let r = cpf_rate_raw(&c, p.value());
        prop_assert!(r > lo && r < hi, "{r} not in ({lo}, {hi})");
    }

    #[test]
    fn rate_power_round_trip((h, a) in pair(), p in power_db()) {
        let Some(c) = coeffs(&h, &a) else { return Ok(()) };
        let r = cpf_rate(&c, p);
        if r.value() > 0.0 {
            let back = cpf_power(&c, r).unwrap();
            prop_assert!((back - p.value()).abs() <= 1e-9 * p.value(), "{back} vs {}", p.value());
        }
    }

    #[test]
    fn both_rate_forms_agree((h, a) in pair(), p in power_db()) {
        let Some(c) = coeffs(&h, &a) else { return Ok(()) };
        let pv = p.value();
        let hn: f64 = h.iter().map(|x| x * x).sum();
        let ha: f64 = h.iter().zip(&a).map(|(x, &y)| x * y as f64).sum();
        let an: f64 = a.iter().map(|&y| (y * y) as f64).sum();
        let original = (0.5 * (1.0 / (an - pv * ha * ha / (1.0 + pv * hn))).log2()).max(0.0);
        prop_assert!((original - cpf_rate(&c, p).value()).abs() <= 1e-11);
    }

    #[test]
    fn rate_increasing_in_power((h, a) in pair(), p in power_db(), scale in 1.01f64..10.0) {
        let Some(c) = coeffs(&h, &a) else { return Ok(()) };
        prop_assert!(cpf_rate_raw(&c, p.value() * scale) > cpf_rate_raw(&c, p.value()));
    }

    #[test]
    fn power_convex_in_rate((h, a) in pair(), t in 0.1f64..0.9, s in 0.05f64..0.45) {
        let Some(c) = coeffs(&h, &a) else { return Ok(()) };
        let (lo, hi) = rate_bounds(&c).unwrap();
        let lo = lo.max(0.0);
        if hi <= lo { return Ok(()) }
        let top = hi.min(lo + 8.0);
        let (r1, r2) = (lo + (top - lo) * t * s, lo + (top - lo) * (t * s + (1.0 - t * s) * 0.9));
        let mid = 0.5 * (r1 + r2);
        let pw = |r: f64| cpf_power(&c, Rate::new(r).unwrap()).unwrap();
        prop_assert!(pw(mid) <= 0.5 * (pw(r1) + pw(r2)) * (1.0 + 1e-12));
    }

    #[test]
    fn feasible_root_below_asymptote((h, a) in pair(), log_kappa in -6.0f64..8.0) {
        let Some(c) = coeffs(&h, &a) else { return Ok(()) };
        let x = cpf_root_dt(10f64.powf(log_kappa), &c);
        prop_assert!(x > 0.0);
        if c.c > 0.0 {
            prop_assert!(x < c.a / c.c);
        }
    }

    #[test]
    fn broadcast_round_trip(p in power_db(), g in 0.01f64..10.0) {
        let r = broadcast_rate(p.value(), g).unwrap();
        prop_assert!((broadcast_power(r, g).unwrap() - p.value()).abs() <= 1e-9 * p.value());
    }

    #[test]
    fn exact_rank_matches_float_rank_on_small_entries(
        rows in (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-3i64..=3, c), r))
    ) {
        prop_assert_eq!(integer_rank(&rows), float_rank(&rows));
    }

    #[test]
    fn rank_invariant_under_row_operations(
        rows in prop::collection::vec(prop::collection::vec(-5i64..=5, 3), 3),
        k in -3i64..=3,
    ) {
        let mut moved = rows.clone();
        let r0 = moved[0].clone();
        for (x, y) in moved[1].iter_mut().zip(&r0) {
            *x += k * y;
        }
        moved.swap(0, 2);
        prop_assert_eq!(integer_rank(&rows), integer_rank(&moved));
    }

    #[test]
    fn local_at_least_naive(h in (2usize..=4).prop_flat_map(channel), p in power_db()) {
        let local = select_local(&h, p);
        let naive = cpf_rate(&cpf_coefficients(&h, &select_naive(&h)).unwrap(), p);
        prop_assert!(local.rate >= naive);
    }

    #[test]
    fn candidates_canonical_sorted_and_sign_invariant(h in (2usize..=3).prop_flat_map(channel), p in power_db()) {
        let list = enumerate_candidates(&h, p, 6);
        prop_assert!(!list.is_empty());
        prop_assert!(list.windows(2).all(|w| w[0].rate >= w[1].rate));
        for c in &list {
            prop_assert!(c.vector.is_canonical());
            let neg: Vec<i64> = c.vector.entries().iter().map(|x| -x).collect();
            let r = cpf_rate(&cpf_coefficients(&h, &CoefficientVector::new(neg).unwrap()).unwrap(), p);
            prop_assert_eq!(r, c.rate);
        }
    }

    #[test]
    fn global_full_rank_and_dominates_full_rank_local(
        hs in (2usize..=3).prop_flat_map(|m| prop::collection::vec(channel(m), m)),
        p in power_db(),
    ) {
        let g = select_general(&hs, p, 8, Method::Global).unwrap();
        prop_assert!(g.full_rank);
        for method in [Method::Local, Method::Naive] {
            let other = select_general(&hs, p, 8, method).unwrap();
            if other.full_rank {
                prop_assert!(g.common_rate >= other.common_rate);
            }
        }
    }

    #[test]
    fn p1_balanced_and_beats_equal_split(rates in prop::collection::vec(0.01f64..5.0, 2..=5), p in power_db()) {
        let r: Vec<Rate> = rates.iter().map(|&x| Rate::new(x).unwrap()).collect();
        let a = solve_p1(r[0], &r[1..], p);
        let e = solve_p1_equal_split(r[0], &r[1..], p);
        prop_assert!((a.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (f, x) in a.fractions.iter().zip(&rates) {
            prop_assert!((f * x - a.throughput).abs() <= 1e-12 * a.throughput.max(1.0));
        }
        prop_assert!(a.throughput >= e.throughput - 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dt_not_below_average_ds(
        gains in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 8), 1..=6),
        db in 0.0f64..30.0,
    ) {
        let p0 = PowerBudget::from_db(db).unwrap();
        let states: Vec<ChannelState> = gains
            .iter()
            .map(|g| ChannelState::new(vec![g[0..2].to_vec(), g[2..4].to_vec()], vec![g[4..6].to_vec(), g[6..8].to_vec()]).unwrap())
            .collect();
        let sels: Vec<_> = states.iter().map(|s| select_general(s.sr_gains(), p0, 8, Method::Global).unwrap()).collect();
        let ds = states.iter().zip(&sels).map(|(s, l)| cpf_ds(s, l, p0, TimePolicy::Optimal).throughput).sum::<f64>()
            / states.len() as f64;
        let dt = solve_p2(&SampleSet::new(states, 0).unwrap(), &sels, p0, 1e-8).unwrap();
        prop_assert!(dt.throughput >= ds - 1e-9 * ds.max(1.0), "{} < {ds}", dt.throughput);
        let budget = dt.kkt_residuals["power_budget"];
        prop_assert!(budget < 1e-9);
    }
}
