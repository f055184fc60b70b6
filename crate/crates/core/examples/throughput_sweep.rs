//! Mean common throughput versus SNR for CPF (global selection) and DF, in
//! the delay-stringent and delay-tolerant settings, printed as CSV.
//!
//! `cargo run --release --example throughput_sweep -- [TRIALS] [DT_STATES] [SEED]`

use cpf_relay::alloc_ds::TimePolicy;
use cpf_relay::cli::throughput_csv;
use cpf_relay::select::Method;
use cpf_relay::simulate::{throughput_experiment, ExperimentSpec, Scenario, Strategy, Topology};

fn main() -> cpf_relay::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let trials: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(500);
    let states: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(11);

    let mut header = true;
    for scenario in [Scenario::Ds, Scenario::Dt] {
        for strategy in [Strategy::Cpf, Strategy::Df] {
            let spec = ExperimentSpec {
                topology: Topology { m: 2, k: 2, l: 2 },
                snr_grid_db: (0..=6).map(|i| 5.0 * f64::from(i)).collect(),
                trials,
                scenario,
                strategy,
                method: Method::Global,
                time_policy: TimePolicy::Optimal,
                seed,
                dt_sample_size: states,
                top_n: None,
            };
            let csv = throughput_csv(&throughput_experiment(&spec)?);
            let body = if header {
                csv.as_str()
            } else {
                csv.split_once('\n').map_or("", |x| x.1)
            };
            print!("{body}");
            header = false;
        }
    }
    Ok(())
}
