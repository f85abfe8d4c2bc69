//! Solves a small box-constrained QP and shows that the iteration count is
//! fixed in advance while the duality gap shrinks geometrically.
//!
//! cargo run --example box_qp

use cert_nmpc::ipm::{iteration_count, proximity, solve_box_qp_observed, DenseBackend};
use nalgebra::{dmatrix, dvector};

fn main() -> cert_nmpc::Result<()> {
    let h = dmatrix![4.0, 1.0, 0.0;
                     1.0, 3.0, 0.5;
                     0.0, 0.5, 2.0];
    let g = dvector![-8.0, 1.0, 0.5];
    let eps = 1e-8;
    println!("certified iterations for n = 3: {}", iteration_count(3, eps));

    let sol = solve_box_qp_observed(&g, eps, DenseBackend::new(h)?, |rec| {
        if rec.iteration % 10 == 1 {
            println!(
                "iter {:>3}  gap {:.3e}  proximity {:.3}",
                rec.iteration,
                rec.iterate.gap(),
                proximity(rec.iterate)
            );
        }
    })?;
    println!("z = {:.6}", sol.z.transpose());
    println!("{} iterations, final gap {:.2e}", sol.iterations, sol.gap);
    Ok(())
}
