//! Naive, local and global integer coefficient selection on one random
//! channel, with the resulting network matrix and its rank.
//!
//! `cargo run --example coefficient_selection -- [M] [SNR_DB] [SEED]`

use cpf_relay::model::PowerBudget;
use cpf_relay::select::{default_top_n, enumerate_candidates, select_general, Method};
use cpf_relay::simulate::{trial_channel, Topology};

fn main() -> cpf_relay::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let m: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(3);
    let snr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let state = trial_channel(seed, 0, Topology { m, k: m, l: m });
    let p = PowerBudget::from_db(snr)?;
    for (i, h) in state.sr_gains().iter().enumerate() {
        let top: Vec<String> = enumerate_candidates(h, p, 3)
            .iter()
            .map(|c| format!("{:?}:{:.3}", c.vector.entries(), c.rate.value()))
            .collect();
        println!("relay {i}: h = {h:.3?}; best {}", top.join(", "));
    }
    for method in [Method::Naive, Method::Local, Method::Global] {
        let sel = select_general(state.sr_gains(), p, default_top_n(m), method)?;
        let rows: Vec<&[i64]> = sel.matrix.rows().iter().map(|r| r.entries()).collect();
        println!(
            "{:>6}: A = {rows:?}, rank {}, common rate {:.4}{}",
            method.as_str(),
            sel.matrix.rank(),
            sel.common_rate.value(),
            if sel.full_rank { "" } else { " (rank failure)" }
        );
    }
    Ok(())
}
