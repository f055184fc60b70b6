//! Computation rate, reachable-rate interval and power inversion for one
//! relay, plus the broadcast link.
//!
//! `cargo run --example rate_formulas`

use cpf_relay::model::{
    broadcast_power, broadcast_rate, cpf_coefficients, cpf_power, cpf_rate, rate_bounds,
    CoefficientVector, PowerBudget,
};

fn main() -> cpf_relay::Result<()> {
    let h = [1.2, 0.6, -0.3];
    let a = CoefficientVector::new(vec![2, 1, 0])?;
    let c = cpf_coefficients(&h, &a)?;
    println!("h = {h:?}, a = {:?}", a.entries());
    println!(
        "a = |h|^2 = {:.4}, b = |a|^2 = {}, c = {:.4}, d = (h.a)^2 = {:.4}",
        c.a, c.b, c.c, c.d
    );

    let (lo, hi) = rate_bounds(&c)?;
    println!("rates reachable with P > 0 lie in ({lo:.4}, {hi:.4})");

    println!("{:>8} {:>10} {:>12}", "P (dB)", "rate", "P from rate");
    for db in [0.0, 10.0, 20.0, 30.0] {
        let p = PowerBudget::from_db(db)?;
        let r = cpf_rate(&c, p);
        let back = if r.value() > 0.0 {
            format!("{:.6}", cpf_power(&c, r)?)
        } else {
            "-".to_string()
        };
        println!("{db:>8.1} {:>10.6} {back:>12}", r.value());
    }

    let g = 0.7;
    let r = broadcast_rate(100.0, g)?;
    println!(
        "broadcast at P = 100, g = {g}: rate {:.6}, inverse power {:.6}",
        r.value(),
        broadcast_power(r, g)?
    );
    Ok(())
}
