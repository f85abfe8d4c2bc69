//! RK4 integration of the state together with its first-order sensitivities.
//!
//! For each stage `k` the discrete map `F` (N_s RK4 steps with the input held
//! constant) is linearized at the guess, giving `A_k = ∂F/∂x`, `B_k = ∂F/∂u`
//! and the defect `r_k = F(x_k, u_k) − x_{k+1}`. The Jacobians are carried
//! through every RK4 stage by the chain rule on the stacked matrix `[A, B]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, all_finite_mat};
use crate::model::Dynamics;

/// Sampling interval split into `steps` equal RK4 sub-steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    dt: f64,
    steps: usize,
}

impl IntegratorSpec {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config("dt", format!("sampling time must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::config("n_s", "integration steps must be positive"));
        }
        Ok(Self { dt, steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Sub-step length `dt / N_s`.
    pub fn sub_step(&self) -> f64 {
        self.dt / self.steps as f64
    }
}

/// Linearization of one shooting interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTriple {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DVector<f64>,
}

/// One classical RK4 step with zero-order-hold input.
pub fn rk4_step(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    t_i: f64,
) -> Result<DVector<f64>> {
    let k1 = model.flux(x, u);
    let k2 = model.flux(&(x + &k1 * (0.5 * t_i)), u);
    let k3 = model.flux(&(x + &k2 * (0.5 * t_i)), u);
    let k4 = model.flux(&(x + &k3 * t_i), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (t_i / 6.0);
    if all_finite(&next) {
        Ok(next)
    } else {
        Err(Error::IntegrationDiverged { stage: None })
    }
}

/// The discrete map `F`: `spec.steps()` RK4 steps over one sampling interval.
pub fn rk4_map(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    spec: &IntegratorSpec,
) -> Result<DVector<f64>> {
    let t_i = spec.sub_step();
    let mut x = x.clone();
    for _ in 0..spec.steps() {
        x = rk4_step(model, &x, u, t_i)?;
    }
    Ok(x)
}

// [κ_x, κ_u] = f_x(x, u)·[A, B] + [0, f_u(x, u)]
fn stacked_slope(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    ab: &DMatrix<f64>,
    nx: usize,
) -> DMatrix<f64> {
    let mut k = model.state_jacobian(x, u) * ab;
    let fu = model.input_jacobian(x, u);
    let mut tail = k.columns_mut(nx, ab.ncols() - nx);
    tail += fu;
    k
}

/// Sensitivities of stage `k` from the guess `(x_k, u_k)` and the next guess state.
pub fn stage_sensitivities(
    model: &dyn Dynamics,
    x_guess: &DVector<f64>,
    u_guess: &DVector<f64>,
    x_guess_next: &DVector<f64>,
    spec: &IntegratorSpec,
) -> Result<StageTriple> {
    let (nx, nu) = (model.state_dim(), model.input_dim());
    if x_guess.len() != nx || x_guess_next.len() != nx || u_guess.len() != nu {
        return Err(Error::Dimension(format!(
            "stage guess has sizes x={}, u={}, x_next={}; model expects n_x={nx}, n_u={nu}",
            x_guess.len(),
            u_guess.len(),
            x_guess_next.len()
        )));
    }
    let t_i = spec.sub_step();
    let u = u_guess;
    let mut x = x_guess.clone();
    let mut ab = DMatrix::zeros(nx, nx + nu);
    ab.view_mut((0, 0), (nx, nx)).fill_with_identity();

    for _ in 0..spec.steps() {
        let k1 = model.flux(&x, u);
        let kx1 = stacked_slope(model, &x, u, &ab, nx);

        let x2 = &x + &k1 * (0.5 * t_i);
        let k2 = model.flux(&x2, u);
        let kx2 = stacked_slope(model, &x2, u, &(&ab + &kx1 * (0.5 * t_i)), nx);

        let x3 = &x + &k2 * (0.5 * t_i);
        let k3 = model.flux(&x3, u);
        let kx3 = stacked_slope(model, &x3, u, &(&ab + &kx2 * (0.5 * t_i)), nx);

        let x4 = &x + &k3 * t_i;
        let k4 = model.flux(&x4, u);
        let kx4 = stacked_slope(model, &x4, u, &(&ab + &kx3 * t_i), nx);

        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (t_i / 6.0);
        ab += (kx1 + kx2 * 2.0 + kx3 * 2.0 + kx4) * (t_i / 6.0);

        if !all_finite(&x) || !all_finite_mat(&ab) {
            return Err(Error::IntegrationDiverged { stage: None });
        }
    }

    Ok(StageTriple {
        a: ab.columns(0, nx).into_owned(),
        b: ab.columns(nx, nu).into_owned(),
        r: x - x_guess_next,
    })
}

/// Runs [`stage_sensitivities`] for every stage of the horizon.
///
/// `x_guess` has `N + 1` entries and `u_guess` has `N`.
pub fn horizon_sensitivities(
    model: &dyn Dynamics,
    x_guess: &[DVector<f64>],
    u_guess: &[DVector<f64>],
    spec: &IntegratorSpec,
) -> Result<Vec<StageTriple>> {
    if u_guess.is_empty() || x_guess.len() != u_guess.len() + 1 {
        return Err(Error::Dimension(format!(
            "guess trajectory needs N+1 states and N >= 1 inputs, got {} and {}",
            x_guess.len(),
            u_guess.len()
        )));
    }
    u_guess
        .iter()
        .enumerate()
        .map(|(k, u)| {
            stage_sensitivities(model, &x_guess[k], u, &x_guess[k + 1], spec).map_err(|e| match e {
                Error::IntegrationDiverged { .. } => Error::IntegrationDiverged { stage: Some(k) },
                other => other,
            })
        })
        .collect()
}

/// Rolls the discrete map forward from `x0` under the input sequence.
pub fn rollout(
    model: &dyn Dynamics,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    spec: &IntegratorSpec,
) -> Result<Vec<DVector<f64>>> {
    let mut xs = Vec::with_capacity(inputs.len() + 1);
    xs.push(x0.clone());
    for (k, u) in inputs.iter().enumerate() {
        let next = rk4_map(model, &xs[k], u, spec)
            .map_err(|_| Error::IntegrationDiverged { stage: Some(k) })?;
        xs.push(next);
    }
    Ok(xs)
}
