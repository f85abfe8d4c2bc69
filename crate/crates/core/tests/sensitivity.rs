mod common;

use cert_nmpc::model::{Dynamics, LinearModel, Lorenz, LorenzParams};
use cert_nmpc::sensitivity::{rk4_map, stage_sensitivities, IntegratorSpec};
use common::{relative_error_mat, uniform_vector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Central differences of the integrator map, step `h`.
fn finite_differences(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    spec: &IntegratorSpec,
    h: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu) = (x.len(), u.len());
    let phi = |x: &DVector<f64>, u: &DVector<f64>| rk4_map(model, x, u, spec).unwrap();
    let mut a = DMatrix::zeros(nx, nx);
    for j in 0..nx {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        a.set_column(j, &((phi(&xp, u) - phi(&xm, u)) / (2.0 * h)));
    }
    let mut b = DMatrix::zeros(nx, nu);
    for j in 0..nu {
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        b.set_column(j, &((phi(x, &up) - phi(x, &um)) / (2.0 * h)));
    }
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorenz_matches_finite_differences(seed in any::<u64>(), steps in 1usize..=4, dt in 0.001f64..0.05) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Lorenz::new(LorenzParams::default());
        let spec = IntegratorSpec::new(dt, steps).unwrap();
        let x = uniform_vector(&mut rng, 3, 20.0) + DVector::from_vec(vec![0.0, 0.0, 25.0]);
        let u = uniform_vector(&mut rng, 3, 3.0);
        let next = uniform_vector(&mut rng, 3, 1.0);
        let t = stage_sensitivities(&model, &x, &u, &next, &spec).unwrap();
        let (a, b) = finite_differences(&model, &x, &u, &spec, 1e-6);
        prop_assert!(relative_error_mat(&t.a, &a) <= 1e-5);
        prop_assert!(relative_error_mat(&t.b, &b) <= 1e-5);
        let expected_r = rk4_map(&model, &x, &u, &spec).unwrap() - &next;
        prop_assert!((&t.r - expected_r).amax() <= 1e-12);
    }

    #[test]
    fn double_integrator_is_exact(seed in any::<u64>(), steps in 1usize..=4, dt in 0.001f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = LinearModel::double_integrator();
        let spec = IntegratorSpec::new(dt, steps).unwrap();
        let x = uniform_vector(&mut rng, 2, 5.0);
        let u = uniform_vector(&mut rng, 1, 5.0);
        let t = stage_sensitivities(&model, &x, &u, &x, &spec).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[dt * dt / 2.0, dt]);
        prop_assert!((&t.a - &a).amax() <= 1e-12);
        prop_assert!((&t.b - &b).amax() <= 1e-12);
        let (fa, fb) = finite_differences(&model, &x, &u, &spec, 1e-6);
        prop_assert!(relative_error_mat(&t.a, &fa) <= 1e-5);
        prop_assert!(relative_error_mat(&t.b, &fb) <= 1e-5);
        // Exact discretization of x'' = u under zero-order hold.
        let next = rk4_map(&model, &x, &u, &spec).unwrap();
        prop_assert!((next[0] - (x[0] + dt * x[1] + dt * dt / 2.0 * u[0])).abs() <= 1e-12 * (1.0 + x.amax() + u.amax()));
    }
}

#[test]
fn linear_models_reproduce_their_map() {
    // For a linear model, φ(x, u) = A x + B u exactly, so the triple's
    // linearization predicts the map anywhere.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = DMatrix::from_fn(3, 3, |i, j| if i == j { -0.5 } else { 0.2 * (i as f64 - j as f64) });
    let b = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64 * 0.3);
    let model = LinearModel::new("lin", a, b).unwrap();
    let spec = IntegratorSpec::new(0.1, 3).unwrap();
    let x = uniform_vector(&mut rng, 3, 1.0);
    let u = uniform_vector(&mut rng, 2, 1.0);
    let t = stage_sensitivities(&model, &x, &u, &DVector::zeros(3), &spec).unwrap();
    let x2 = uniform_vector(&mut rng, 3, 1.0);
    let u2 = uniform_vector(&mut rng, 2, 1.0);
    let predicted = &t.a * &x2 + &t.b * &u2;
    let actual = rk4_map(&model, &x2, &u2, &spec).unwrap();
    assert!((predicted - actual).amax() < 1e-13);
}
