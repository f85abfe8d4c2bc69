//! Solves one Newton system of the condensed QP with the factorized Riccati
//! recursion and with a dense Cholesky factorization of the explicit Hessian.
//!
//! cargo run --release --example riccati_newton_step

use std::time::Instant;

use cert_nmpc::condense::{build_hessian_oracle, build_s, InputScaling, ScaledStage, Weights};
use cert_nmpc::ipm::{DenseBackend, NewtonBackend};
use cert_nmpc::riccati::RiccatiBackend;
use nalgebra::{DMatrix, DVector};

fn main() -> cert_nmpc::Result<()> {
    let (nx, nu) = (3, 3);
    for horizon in [10, 20, 40, 80] {
        let stages: Vec<_> = (0..horizon)
            .map(|k| ScaledStage {
                a: DMatrix::from_fn(nx, nx, |i, j| if i == j { 0.9 } else { 0.02 * ((i + 2 * j + k) % 5) as f64 }),
                b_bar: DMatrix::from_fn(nx, nu, |i, j| if i == j { 0.1 } else { 0.0 }),
                r_bar: DVector::zeros(nx),
            })
            .collect();
        let weights = Weights::identity(nx, nu, 0.1);
        let scaling = InputScaling {
            diag: DVector::from_element(nu, 3.0),
            offsets: vec![DVector::zeros(nu); horizon],
        };
        let n = horizon * nu;
        let diag = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64);
        let rhs = DVector::from_fn(n, |i, _| ((i * 37) % 11) as f64 - 5.0);

        let mut riccati = RiccatiBackend::new(&stages, &weights.state, &weights.terminal, &weights.scaled_input(&scaling))?;
        riccati.set_hessian_scale(0.5);
        let mut dz_r = DVector::zeros(n);
        let t = Instant::now();
        riccati.solve(&diag, &rhs, &mut dz_r)?;
        let t_r = t.elapsed();

        let hessian = build_hessian_oracle(&build_s(&stages), &weights, &scaling);
        let mut dense = DenseBackend::new(hessian)?;
        dense.set_hessian_scale(0.5);
        let mut dz_d = DVector::zeros(n);
        let t = Instant::now();
        dense.solve(&diag, &rhs, &mut dz_d)?;
        let t_d = t.elapsed();

        println!(
            "N = {horizon:>3}: riccati {:>8.1?}  dense {:>8.1?}  |diff| = {:.1e}",
            t_r,
            t_d,
            (&dz_r - &dz_d).amax()
        );
    }
    Ok(())
}
