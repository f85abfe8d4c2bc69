//! Stabilizes the Lorenz system at one of its unstable equilibria and
//! compares against the uncontrolled trajectory.
//!
//! cargo run --release --example lorenz_closed_loop

use cert_nmpc::sim::{run_closed_loop, SimConfig, SimOptions};
use nalgebra::DVector;

fn main() -> cert_nmpc::Result<()> {
    let cfg = SimConfig::from_json_str(include_str!("../configs/lorenz.json"))?;
    let scenario = cfg.validate()?;
    let target = scenario.x_ref.at(0);

    let closed = run_closed_loop(&scenario, SimOptions::default())?;
    let open = run_closed_loop(&scenario, SimOptions { open_loop: true, ..SimOptions::default() })?;

    println!("{:>5} {:>12} {:>12}", "t", "closed", "open");
    for (c, o) in closed.rows.iter().zip(&open.rows).step_by(25) {
        let dist = |x: &[f64]| (DVector::from_column_slice(x) - &target).norm();
        println!("{:>5.2} {:>12.5} {:>12.5}", c.t, dist(&c.x), dist(&o.x));
    }
    match closed.settling_time(&target, 0.1) {
        Some(t) => println!("within 0.1 of the equilibrium from t = {t:.2} s"),
        None => println!("did not settle"),
    }
    let worst = closed.rows.iter().map(|r| r.fb_wall_s).fold(0.0, f64::max);
    let cert = scenario.certificate();
    println!(
        "worst feedback time {:.3} ms, certified {:.3} ms at {:.0e} flop/s",
        worst * 1e3,
        cert.feedback_flops as f64 / scenario.flops_per_sec * 1e3,
        scenario.flops_per_sec
    );
    Ok(())
}
