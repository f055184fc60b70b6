//! Rank-failure probability of the three selection methods versus SNR.
//!
//! `cargo run --release --example rank_failure -- [M] [TRIALS] [SEED]`

use cpf_relay::alloc_ds::TimePolicy;
use cpf_relay::select::Method;
use cpf_relay::simulate::{rank_failure_experiment, ExperimentSpec, Scenario, Strategy, Topology};

fn main() -> cpf_relay::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let m: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(2);
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);

    let grid: Vec<f64> = (0..=6).map(|i| 5.0 * f64::from(i)).collect();
    println!("M = K = L = {m}, {trials} trials");
    print!("{:>8}", "SNR dB");
    for s in &grid {
        print!("{s:>8.0}");
    }
    println!();
    for method in [Method::Naive, Method::Local, Method::Global] {
        let spec = ExperimentSpec {
            topology: Topology { m, k: m, l: m },
            snr_grid_db: grid.clone(),
            trials,
            scenario: Scenario::Ds,
            strategy: Strategy::Cpf,
            method,
            time_policy: TimePolicy::Optimal,
            seed,
            dt_sample_size: 1,
            top_n: None,
        };
        let res = rank_failure_experiment(&spec)?;
        print!("{:>8}", method.as_str());
        for r in &res.rows {
            print!("{:>8.4}", r.rank_failure_prob);
        }
        println!();
    }
    Ok(())
}
