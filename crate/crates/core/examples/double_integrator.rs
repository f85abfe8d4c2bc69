//! Drives a double integrator to the origin under |u| <= 1 using the
//! controller API directly.
//!
//! cargo run --example double_integrator

use cert_nmpc::condense::{InputBounds, Weights};
use cert_nmpc::model::LinearModel;
use cert_nmpc::rti::{BackendKind, References, RtiController, RtiSettings};
use cert_nmpc::sensitivity::{rk4_map, IntegratorSpec};
use nalgebra::DVector;

fn main() -> cert_nmpc::Result<()> {
    let horizon = 20;
    let spec = IntegratorSpec::new(0.1, 1)?;
    let settings = RtiSettings {
        horizon,
        spec,
        bounds: InputBounds::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0))?,
        weights: Weights::identity(2, 1, 0.1),
        eps: 1e-6,
        backend: BackendKind::Riccati,
    };
    let model = LinearModel::double_integrator();
    let mut controller = RtiController::new(Box::new(model.clone()), settings)?;
    println!(
        "certified feedback flops per sample: {}",
        controller.certificate(1e9).feedback_flops
    );

    let refs = References::constant(DVector::zeros(2), DVector::zeros(1), horizon);
    let mut x = DVector::from_vec(vec![3.0, 0.0]);
    controller.cold_start(&x, &refs)?;
    for step in 0..100 {
        controller.prepare(refs.clone())?;
        let u = controller.feedback(&x)?.first_input().clone();
        if step % 10 == 0 {
            println!("t = {:>4.1}  x = ({:>7.4}, {:>7.4})  u = {:>7.4}", step as f64 * 0.1, x[0], x[1], u[0]);
        }
        x = rk4_map(&model, &x, &u, &spec)?;
    }
    println!("final state ({:.2e}, {:.2e})", x[0], x[1]);
    Ok(())
}
