mod common;

use cert_nmpc::condense::{build_hessian_oracle, InputBounds, Weights};
use cert_nmpc::model::{Dynamics, Lorenz, LorenzParams};
use cert_nmpc::rti::{prepare, GuessTrajectory, References};
use cert_nmpc::sensitivity::{horizon_sensitivities, IntegratorSpec};
use common::{random_spd, uniform_vector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Setup {
    model: Lorenz,
    spec: IntegratorSpec,
    guess: GuessTrajectory,
    refs: References,
    bounds: InputBounds,
    weights: Weights,
    x_hat: DVector<f64>,
}

fn setup(seed: u64, horizon: usize) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Lorenz::new(LorenzParams::default());
    let c = DVector::from_vec(vec![8.0, 8.0, 27.0]);
    let x: Vec<_> = (0..=horizon).map(|_| &c + uniform_vector(&mut rng, 3, 2.0)).collect();
    let u: Vec<_> = (0..horizon).map(|_| uniform_vector(&mut rng, 3, 2.5)).collect();
    let refs = References {
        x: (0..=horizon).map(|_| &c + uniform_vector(&mut rng, 3, 0.5)).collect(),
        u: (0..horizon).map(|_| uniform_vector(&mut rng, 3, 0.5)).collect(),
    };
    let bounds = InputBounds::new(
        DVector::from_vec(vec![-3.0, -2.0, -4.0]),
        DVector::from_vec(vec![3.0, 2.5, 1.0]),
    )
    .unwrap();
    let weights = Weights::new(
        random_spd(&mut rng, 3, 0.5),
        random_spd(&mut rng, 3, 0.5),
        random_spd(&mut rng, 3, 0.1),
    )
    .unwrap();
    Setup {
        model,
        spec: IntegratorSpec::new(0.01, 2).unwrap(),
        x_hat: &x[0] + uniform_vector(&mut rng, 3, 0.3),
        guess: GuessTrajectory::new(x, u).unwrap(),
        refs,
        bounds,
        weights,
    }
}

/// Cost of the linearized problem evaluated by simulating the affine model
/// forward in the original input coordinates.
fn linearized_cost(s: &Setup, z: &DVector<f64>) -> f64 {
    let triples =
        horizon_sensitivities(&s.model, &s.guess.x, &s.guess.u, &s.spec).unwrap();
    let n = triples.len();
    let center = s.bounds.center();
    let half = (&s.bounds.hi - &s.bounds.lo) / 2.0;
    let mut dx = &s.x_hat - &s.guess.x[0];
    let mut cost = 0.0;
    for (k, t) in triples.iter().enumerate() {
        let u = &center + half.component_mul(&z.rows(k * 3, 3));
        let du = &u - &s.guess.u[k];
        dx = &t.a * &dx + &t.b * &du + &t.r;
        let x_next = &s.guess.x[k + 1] + &dx;
        let w = if k + 1 == n { &s.weights.terminal } else { &s.weights.state };
        let ex = &x_next - &s.refs.x[k + 1];
        let eu = &u - &s.refs.u[k];
        cost += 0.5 * ex.dot(&(w * &ex)) + 0.5 * eu.dot(&(&s.weights.input * &eu));
    }
    cost
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn condensed_qp_reproduces_linearized_cost(seed in any::<u64>(), horizon in 1usize..=8) {
        let s = setup(seed, horizon);
        let p = prepare(&s.model, s.guess.clone(), s.refs.clone(), &s.bounds, &s.weights, &s.spec).unwrap();
        let cp = p.condense(&s.x_hat);
        let hess = build_hessian_oracle(&cp.s, &cp.weights, &cp.scaling);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let base = linearized_cost(&s, &DVector::zeros(3 * horizon));
        for _ in 0..4 {
            let z = uniform_vector(&mut rng, 3 * horizon, 1.0);
            let qp = 0.5 * z.dot(&(&hess * &z)) + cp.h.dot(&z);
            let direct = linearized_cost(&s, &z) - base;
            prop_assert!((qp - direct).abs() <= 1e-9 * (1.0 + direct.abs()), "{qp} vs {direct}");
        }
    }

    #[test]
    fn hessian_is_symmetric_positive_definite(seed in any::<u64>(), horizon in 1usize..=8) {
        let s = setup(seed, horizon);
        let p = prepare(&s.model, s.guess.clone(), s.refs.clone(), &s.bounds, &s.weights, &s.spec).unwrap();
        let cp = p.condense(&s.x_hat);
        let hess = build_hessian_oracle(&cp.s, &cp.weights, &cp.scaling);
        prop_assert_eq!(&hess, &hess.transpose());
        let min_eig = hess.clone().symmetric_eigen().eigenvalues.min();
        let rbar = cp.weights.scaled_input(&cp.scaling);
        let floor = rbar.symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= floor * (1.0 - 1e-9), "{min_eig} < {floor}");
    }
}

#[test]
fn gradient_splits_into_offline_and_feedback_parts() {
    let s = setup(17, 5);
    let p = prepare(&s.model, s.guess.clone(), s.refs.clone(), &s.bounds, &s.weights, &s.spec).unwrap();
    let at_guess = p.condense(&s.guess.x[0]);
    assert_eq!(at_guess.g2, DVector::zeros(15));
    let cp = p.condense(&s.x_hat);
    assert_eq!(cp.g1, at_guess.g1);
    // h is affine in x̂: h(x̂) − h(x_guess_0) = SᵀQ̄ g₂.
    let mut q_bar = DMatrix::zeros(15, 15);
    for k in 0..5 {
        q_bar
            .view_mut((3 * k, 3 * k), (3, 3))
            .copy_from(cp.weights.stage_state(k, 5));
    }
    let expected = cp.s.transpose() * q_bar * &cp.g2;
    assert!((&cp.h - &at_guess.h - expected).amax() < 1e-10);
    assert_eq!(s.model.state_dim(), 3);
}
