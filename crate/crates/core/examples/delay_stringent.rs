//! Per-realization time allocation for CPF and for the DF baseline, with
//! optimal and equal time fractions.
//!
//! `cargo run --example delay_stringent -- [SNR_DB] [SEED]`

use cpf_relay::alloc_ds::{cpf_ds, df_ds, TimePolicy};
use cpf_relay::model::PowerBudget;
use cpf_relay::select::{select_general, Method};
use cpf_relay::simulate::{trial_channel, Topology};

fn main() -> cpf_relay::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let snr: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(30.0);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);

    let state = trial_channel(seed, 0, Topology { m: 2, k: 2, l: 2 });
    let p0 = PowerBudget::from_db(snr)?;
    let sel = select_general(state.sr_gains(), p0, 8, Method::Global)?;
    println!(
        "global selection {:?}",
        sel.matrix
            .rows()
            .iter()
            .map(|r| r.entries())
            .collect::<Vec<_>>()
    );

    for policy in [TimePolicy::Optimal, TimePolicy::EqualSplit] {
        let cpf = cpf_ds(&state, &sel, p0, policy);
        let df = df_ds(&state, p0, policy);
        println!("{} time fractions:", policy.as_str());
        println!(
            "  CPF f = {:.4?} R = {:.4?} throughput {:.4}",
            cpf.fractions, cpf.phase_rates, cpf.throughput
        );
        println!(
            "  DF  f = {:.4?} R = {:.4?} throughput {:.4}",
            df.fractions, df.phase_rates, df.throughput
        );
    }
    Ok(())
}
