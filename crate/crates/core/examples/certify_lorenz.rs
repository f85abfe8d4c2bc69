//! Prints the per-step flop breakdown of both phases for the Lorenz setup
//! and how it grows with the horizon.
//!
//! cargo run --example certify_lorenz

use cert_nmpc::certify::{certify, flops_condensing, three_significant, ProblemDims};
use cert_nmpc::model::{Dynamics, Lorenz, LorenzParams};

fn main() {
    let dims = ProblemDims {
        horizon: 20,
        nx: 3,
        nu: 3,
        integration_steps: 2,
        model_flops: Lorenz::new(LorenzParams::default()).flops(),
        eps: 1e-6,
    };
    let c = certify(&dims, 1e9);
    println!("IPM iterations: {}", c.iterations);
    let prep = ["shift", "sensitivities", "scaling, S, g1"];
    for (name, f) in prep.iter().zip(c.prep_steps) {
        println!("  prep  {name:<22} {f:>9}");
    }
    let fb = ["g2, h", "zero test", "initialization", "IPM loop", "dx0", "recovery", "full step"];
    for (name, f) in fb.iter().zip(c.feedback_steps) {
        println!("  fb    {name:<22} {f:>9}");
    }
    println!(
        "prep {} (~{:.3e}), feedback {} (~{:.3e}), {:.3} ms at 1 Gflop/s",
        c.prep_flops,
        three_significant(c.prep_flops),
        c.feedback_flops,
        three_significant(c.feedback_flops),
        c.estimated_time_s * 1e3
    );
    println!(
        "forming H explicitly would add {} flops",
        flops_condensing(&dims).hessian
    );

    println!("\n{:>4} {:>6} {:>14}", "N", "iters", "feedback");
    for n in [5, 10, 20, 40, 80] {
        let c = certify(&ProblemDims { horizon: n, ..dims }, 1e9);
        println!("{n:>4} {:>6} {:>14}", c.iterations, c.feedback_flops);
    }
}
