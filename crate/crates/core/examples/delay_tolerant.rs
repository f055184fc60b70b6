//! Average-power allocation over a set of fading states: time fractions,
//! average rates and powers, multipliers and KKT residuals for CPF and DF.
//!
//! `cargo run --release --example delay_tolerant -- [SNR_DB] [STATES] [SEED]`

use cpf_relay::alloc_dt::{solve_p2, solve_p4_df, SampleSet};
use cpf_relay::model::PowerBudget;
use cpf_relay::select::{select_general, Method};
use cpf_relay::simulate::{trial_channel, Topology};

fn main() -> cpf_relay::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let snr: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let n: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);

    let t = Topology { m: 2, k: 2, l: 2 };
    let p0 = PowerBudget::from_db(snr)?;
    let states: Vec<_> = (0..n).map(|i| trial_channel(seed, i, t)).collect();
    let sels = states
        .iter()
        .map(|s| select_general(s.sr_gains(), p0, 8, Method::Global))
        .collect::<cpf_relay::Result<Vec<_>>>()?;
    let samples = SampleSet::new(states, seed)?;

    let cpf = solve_p2(&samples, &sels, p0, 1e-8)?;
    println!(
        "CPF over {n} states at {snr} dB: throughput {:.4}",
        cpf.throughput
    );
    println!("  fractions {:.4?}", cpf.fractions);
    println!(
        "  average rates {:.4?}, powers {:.4?}",
        cpf.avg_rates, cpf.avg_powers
    );
    let mu = &cpf.multipliers;
    println!(
        "  beta0 {:.4e}, betas {:.4?}, gammas {:.4?}, alpha {:.4}",
        mu.beta0, mu.betas, mu.gammas, mu.alpha
    );
    println!("  residuals {:?}", cpf.kkt_residuals);
    println!(
        "  kink states {}, rank failures {}",
        cpf.diagnostics.kink_states, cpf.diagnostics.rank_failed_states
    );

    let df = solve_p4_df(&samples, p0, 1e-8)?;
    println!(
        "DF: throughput {:.4}, fractions {:.4?}",
        df.throughput, df.fractions
    );
    println!("CPF/DF ratio {:.3}", cpf.throughput / df.throughput);
    Ok(())
}
