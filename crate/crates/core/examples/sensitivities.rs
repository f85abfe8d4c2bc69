//! Discrete-time sensitivities of the RK4 map, checked against central
//! differences.
//!
//! cargo run --example sensitivities

use cert_nmpc::model::{Lorenz, LorenzParams};
use cert_nmpc::sensitivity::{rk4_map, stage_sensitivities, IntegratorSpec};
use nalgebra::{DMatrix, DVector};

fn main() -> cert_nmpc::Result<()> {
    let model = Lorenz::new(LorenzParams::default());
    let spec = IntegratorSpec::new(0.01, 2)?;
    let x = DVector::from_vec(vec![1.0, -2.0, 20.0]);
    let u = DVector::from_vec(vec![0.5, 0.0, -1.0]);
    let stage = stage_sensitivities(&model, &x, &u, &x, &spec)?;

    let h = 1e-6;
    let mut fd = DMatrix::zeros(3, 3);
    for j in 0..3 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (rk4_map(&model, &xp, &u, &spec)? - rk4_map(&model, &xm, &u, &spec)?) / (2.0 * h);
        fd.set_column(j, &col);
    }
    println!("A = {:.6}", stage.a);
    println!("B = {:.6}", stage.b);
    println!("defect r = {:.6}", stage.r.transpose());
    println!("max |A - A_fd| = {:.2e}", (&stage.a - fd).amax());
    Ok(())
}
