mod common;

use cert_nmpc::ipm::{solve_box_qp, solve_box_qp_observed, DenseBackend, NewtonBackend};
use cert_nmpc::riccati::RiccatiBackend;
use common::{dense_newton_step, random_structured, relative_error, uniform_vector};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn backend(inst: &common::StructuredInstance) -> RiccatiBackend {
    RiccatiBackend::new(
        &inst.stages,
        &inst.weights.state,
        &inst.weights.terminal,
        &inst.weights.scaled_input(&inst.scaling),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn single_solve_matches_dense(seed in any::<u64>(), horizon in 1usize..=8, nx in 1usize..=4, nu in 1usize..=3,
                                  scale in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_structured(&mut rng, horizon, nx, nu);
        let n = inst.dim();
        let weights = uniform_vector(&mut rng, n, 1.0).map(|v| v.abs() * 100.0 + 0.01);
        let rhs = uniform_vector(&mut rng, n, 1.0);
        let mut rb = backend(&inst);
        rb.set_hessian_scale(scale);
        let mut dz = DVector::zeros(n);
        rb.solve(&weights, &rhs, &mut dz).unwrap();
        let dense = dense_newton_step(&inst.hessian, scale, &weights, &rhs);
        prop_assert!(relative_error(&dz, &dense) <= 1e-9, "{}", relative_error(&dz, &dense));
        // Residual of the structured solve against the explicit matrix.
        let resid = (&inst.hessian * &dz) * scale + weights.component_mul(&dz) - &rhs;
        prop_assert!(resid.norm() <= 1e-9 * (1.0 + rhs.norm()));
    }

    #[test]
    fn every_ipm_direction_matches_dense(seed in any::<u64>(), horizon in 1usize..=8, nx in 1usize..=4, nu in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_structured(&mut rng, horizon, nx, nu);
        let h_inf = inst.h.amax();
        let mut worst: f64 = 0.0;
        let sol = solve_box_qp_observed(&inst.h, 1e-6, backend(&inst), |rec| {
            let c = rec.iterate.objective_scale(h_inf);
            let dense = dense_newton_step(&inst.hessian, c, rec.weights, rec.rhs);
            worst = worst.max(relative_error(rec.dz, &dense));
        }).unwrap();
        prop_assert!(worst <= 1e-8, "worst relative error {worst:e}");
        let dense_sol = solve_box_qp(&inst.h, 1e-6, DenseBackend::new(inst.hessian.clone()).unwrap()).unwrap();
        prop_assert!((&sol.z - &dense_sol.z).amax() <= 1e-7);
    }
}

#[test]
fn states_follow_the_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = random_structured(&mut rng, 6, 3, 2);
    let n = inst.dim();
    let mut rb = backend(&inst);
    rb.set_hessian_scale(0.7);
    let mut dz = DVector::zeros(n);
    rb.solve(&DVector::from_element(n, 2.0), &uniform_vector(&mut rng, n, 1.0), &mut dz)
        .unwrap();
    let ws = rb.workspace();
    assert_eq!(ws.states()[0], DVector::zeros(3));
    for (k, st) in inst.stages.iter().enumerate() {
        let next = &st.a * &ws.states()[k] + &st.b_bar * &ws.inputs()[k];
        assert!((&next - &ws.states()[k + 1]).amax() < 1e-12);
        assert_eq!(ws.inputs()[k], dz.rows(k * 2, 2).into_owned());
    }
    // Δx̂ stacked equals S Δz.
    let sx = &inst.s * &dz;
    for k in 0..6 {
        assert!((sx.rows(k * 3, 3) - &ws.states()[k + 1]).amax() < 1e-10);
    }
}

#[test]
fn cost_to_go_factors_are_lower_triangular_with_positive_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_structured(&mut rng, 5, 4, 3);
    let n = inst.dim();
    let mut rb = backend(&inst);
    rb.set_hessian_scale(1.0);
    let mut dz = DVector::zeros(n);
    rb.solve(&DVector::from_element(n, 1.0), &DVector::from_element(n, 1.0), &mut dz)
        .unwrap();
    let ws = rb.workspace();
    for k in 0..=5 {
        let l = ws.cost_to_go_factor(k);
        for i in 0..4 {
            assert!(l[(i, i)] > 0.0);
            for j in i + 1..4 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }
    for k in 0..5 {
        assert!(ws.input_factor(k).diagonal().min() > 0.0);
    }
}
