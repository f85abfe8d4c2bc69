//! Feasible full-Newton path-following IPM for unit-box QPs
//!
//! ```text
//! min ½ zᵀHz + zᵀh   s.t.  −e ≤ z ≤ e
//! ```
//!
//! The objective is scaled by `2λ/‖h‖∞` so a fixed, data-independent starting
//! point sits inside the `ξ ≤ 1/√2` neighbourhood of the central path. From
//! there every full Newton step stays strictly feasible and the path parameter
//! shrinks by the constant factor `1 − η`, so the number of iterations needed
//! for `vᵀs ≤ ε` depends only on `n` and `ε`. The solver always runs exactly
//! that many iterations.
//!
//! The Newton system `(2λH̃ + diag(γ/φ + θ/ψ)) Δz = rhs` is delegated to a
//! [`NewtonBackend`]; the Riccati backend lives in [`crate::riccati`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, cholesky_in_place, cholesky_solve_in_place, inf_norm};

/// Exact number of iterations for a problem of dimension `n` and gap tolerance `eps`.
///
/// `⌈log(2n/ε) / (−2 log(√(2n)/(√(2n)+√2−1)))⌉ + 1`, with the ceiling term
/// clamped at zero so the count is at least one.
pub fn iteration_count(n: usize, eps: f64) -> usize {
    assert!(n >= 1, "problem dimension must be positive");
    assert!(eps > 0.0, "tolerance must be positive");
    let two_n = 2.0 * n as f64;
    let root = two_n.sqrt();
    let rate = -2.0 * (root / (root + std::f64::consts::SQRT_2 - 1.0)).ln();
    let ratio = (two_n / eps).ln() / rate;
    ratio.ceil().max(0.0) as usize + 1
}

/// `η = (√2 − 1)/(√(2n) + √2 − 1)`.
pub fn path_step(n: usize) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    (s2 - 1.0) / ((2.0 * n as f64).sqrt() + s2 - 1.0)
}

/// Strictly feasible IPM state for the scaled problem.
///
/// `phi` and `psi` are the slacks of the upper and lower bounds, so
/// `z + φ = e` and `z − ψ = −e`; `gamma` and `theta` are their multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmIterate {
    pub z: DVector<f64>,
    pub gamma: DVector<f64>,
    pub theta: DVector<f64>,
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
    pub tau: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl IpmIterate {
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Duality gap `vᵀs = γᵀφ + θᵀψ`.
    pub fn gap(&self) -> f64 {
        self.gamma.dot(&self.phi) + self.theta.dot(&self.psi)
    }

    /// Smallest entry among `γ, θ, φ, ψ`.
    pub fn min_positive(&self) -> f64 {
        [&self.gamma, &self.theta, &self.phi, &self.psi]
            .iter()
            .map(|v| v.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Factor `2λ/‖h‖∞` applied to the objective.
    pub fn objective_scale(&self, h_inf: f64) -> f64 {
        2.0 * self.lambda / h_inf
    }
}

/// Cost-free starting point. Returns `None` when `‖h‖∞ = 0`, in which case
/// `z* = 0` and no iteration is needed.
pub fn initialize(h: &DVector<f64>, h_inf: f64) -> Option<IpmIterate> {
    if h_inf == 0.0 {
        return None;
    }
    let n = h.len();
    let lambda = 1.0 / ((n + 1) as f64).sqrt();
    let eta = path_step(n);
    let lh = h * (lambda / h_inf);
    Some(IpmIterate {
        z: DVector::zeros(n),
        gamma: lh.map(|x| 1.0 - x),
        theta: lh.map(|x| 1.0 + x),
        phi: DVector::from_element(n, 1.0),
        psi: DVector::from_element(n, 1.0),
        tau: 1.0 / (1.0 - eta),
        lambda,
        eta,
    })
}

/// Diagonal added to the scaled Hessian, `γ/φ + θ/ψ`.
pub fn newton_weights(it: &IpmIterate) -> DVector<f64> {
    it.gamma.component_div(&it.phi) + it.theta.component_div(&it.psi)
}

/// Right-hand side `2(√(θ/ψ)τ − √(γ/φ)τ + γ − θ)`.
pub fn newton_rhs(it: &IpmIterate) -> DVector<f64> {
    let mut rhs = DVector::zeros(it.dim());
    newton_rhs_into(it, &mut rhs);
    rhs
}

fn newton_rhs_into(it: &IpmIterate, rhs: &mut DVector<f64>) {
    for i in 0..it.dim() {
        let up = (it.gamma[i] / it.phi[i]).sqrt();
        let lo = (it.theta[i] / it.psi[i]).sqrt();
        rhs[i] = 2.0 * (lo * it.tau - up * it.tau + it.gamma[i] - it.theta[i]);
    }
}

fn newton_weights_into(it: &IpmIterate, w: &mut DVector<f64>) {
    for i in 0..it.dim() {
        w[i] = it.gamma[i] / it.phi[i] + it.theta[i] / it.psi[i];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualStep {
    pub gamma: DVector<f64>,
    pub theta: DVector<f64>,
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
}

/// Recovers `(Δγ, Δθ, Δφ, Δψ)` from `Δz`.
pub fn dual_updates(it: &IpmIterate, dz: &DVector<f64>) -> DualStep {
    let n = it.dim();
    let mut step = DualStep {
        gamma: DVector::zeros(n),
        theta: DVector::zeros(n),
        phi: -dz,
        psi: dz.clone(),
    };
    for i in 0..n {
        let gp = it.gamma[i] / it.phi[i];
        let tp = it.theta[i] / it.psi[i];
        step.gamma[i] = gp * dz[i] + 2.0 * (gp.sqrt() * it.tau - it.gamma[i]);
        step.theta[i] = -tp * dz[i] + 2.0 * (tp.sqrt() * it.tau - it.theta[i]);
    }
    step
}

/// Distance to the central path, `‖τe − √(vs)‖/τ`.
pub fn proximity(it: &IpmIterate) -> f64 {
    let tau = it.tau;
    let sq = |v: f64, s: f64| {
        let d = tau - (v * s).sqrt();
        d * d
    };
    let total: f64 = (0..it.dim())
        .map(|i| sq(it.gamma[i], it.phi[i]) + sq(it.theta[i], it.psi[i]))
        .sum();
    total.sqrt() / tau
}

/// Solves the Newton system `(scale·H + diag(weights)) Δz = rhs`.
///
/// The problem matrices are fixed at construction; only the scale (once per
/// solve) and the diagonal/right-hand side (every iteration) change.
pub trait NewtonBackend {
    fn dim(&self) -> usize;

    /// Sets the objective scale `2λ/‖h‖∞` before the first iteration.
    fn set_hessian_scale(&mut self, scale: f64);

    fn solve(&mut self, weights: &DVector<f64>, rhs: &DVector<f64>, dz: &mut DVector<f64>)
        -> Result<()>;
}

impl<B: NewtonBackend + ?Sized> NewtonBackend for &mut B {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn set_hessian_scale(&mut self, scale: f64) {
        (**self).set_hessian_scale(scale)
    }
    fn solve(
        &mut self,
        weights: &DVector<f64>,
        rhs: &DVector<f64>,
        dz: &mut DVector<f64>,
    ) -> Result<()> {
        (**self).solve(weights, rhs, dz)
    }
}

/// Dense Cholesky backend on an explicit Hessian.
#[derive(Debug, Clone)]
pub struct DenseBackend {
    hessian: DMatrix<f64>,
    scale: f64,
    work: DMatrix<f64>,
}

impl DenseBackend {
    pub fn new(hessian: DMatrix<f64>) -> Result<Self> {
        if hessian.nrows() != hessian.ncols() {
            return Err(Error::Dimension(format!(
                "Hessian must be square, got {}x{}",
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        let n = hessian.nrows();
        Ok(Self {
            hessian,
            scale: 1.0,
            work: DMatrix::zeros(n, n),
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }
}

impl NewtonBackend for DenseBackend {
    fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    fn set_hessian_scale(&mut self, scale: f64) {
        self.scale = scale;
    }

    fn solve(
        &mut self,
        weights: &DVector<f64>,
        rhs: &DVector<f64>,
        dz: &mut DVector<f64>,
    ) -> Result<()> {
        self.work.copy_from(&self.hessian);
        self.work *= self.scale;
        for i in 0..weights.len() {
            self.work[(i, i)] += weights[i];
        }
        cholesky_in_place(&mut self.work).map_err(|pivot| Error::SingularNewtonSystem { pivot })?;
        dz.copy_from(rhs);
        cholesky_solve_in_place(&self.work, dz);
        Ok(())
    }
}

/// State handed to an observer after each full step.
#[derive(Debug)]
pub struct IterationRecord<'a> {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Proximity right after the `τ` update, before the step.
    pub proximity_before_step: f64,
    pub weights: &'a DVector<f64>,
    pub rhs: &'a DVector<f64>,
    pub dz: &'a DVector<f64>,
    /// Iterate after the full step.
    pub iterate: &'a IpmIterate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpSolution {
    pub z: DVector<f64>,
    pub iterations: usize,
    /// Final `vᵀs` of the scaled problem; zero on the `h = 0` shortcut.
    pub gap: f64,
    pub h_inf: f64,
}

/// Runs the certified IPM on `min ½zᵀHz + zᵀh, −e ≤ z ≤ e`, with `H` held by the backend.
pub fn solve_box_qp<B: NewtonBackend>(
    h: &DVector<f64>,
    eps: f64,
    backend: B,
) -> Result<BoxQpSolution> {
    solve_box_qp_observed(h, eps, backend, |_| {})
}

/// [`solve_box_qp`] with a callback after every iteration.
pub fn solve_box_qp_observed<B, F>(
    h: &DVector<f64>,
    eps: f64,
    mut backend: B,
    mut observe: F,
) -> Result<BoxQpSolution>
where
    B: NewtonBackend,
    F: FnMut(&IterationRecord<'_>),
{
    let n = h.len();
    if backend.dim() != n {
        return Err(Error::Dimension(format!(
            "backend dimension {} does not match h of length {n}",
            backend.dim()
        )));
    }
    if !all_finite(h) {
        return Err(Error::Dimension("h has non-finite entries".into()));
    }
    let h_inf = inf_norm(h);
    let Some(mut it) = initialize(h, h_inf) else {
        return Ok(BoxQpSolution {
            z: DVector::zeros(n),
            iterations: 0,
            gap: 0.0,
            h_inf,
        });
    };
    backend.set_hessian_scale(it.objective_scale(h_inf));

    let total = iteration_count(n, eps);
    let mut weights = DVector::zeros(n);
    let mut rhs = DVector::zeros(n);
    let mut dz = DVector::zeros(n);
    let mut done = 0;
    for iteration in 1..=total {
        it.tau *= 1.0 - it.eta;
        let prox = proximity(&it);
        newton_weights_into(&it, &mut weights);
        newton_rhs_into(&it, &mut rhs);
        backend
            .solve(&weights, &rhs, &mut dz)
            .map_err(|e| Error::SolverFailure {
                iteration,
                source: Box::new(e),
            })?;
        if !all_finite(&dz) {
            return Err(Error::SolverFailure {
                iteration,
                source: Box::new(Error::NonFiniteDirection),
            });
        }
        for i in 0..n {
            let gp = it.gamma[i] / it.phi[i];
            let tp = it.theta[i] / it.psi[i];
            let dg = gp * dz[i] + 2.0 * (gp.sqrt() * it.tau - it.gamma[i]);
            let dt = -tp * dz[i] + 2.0 * (tp.sqrt() * it.tau - it.theta[i]);
            it.z[i] += dz[i];
            it.gamma[i] += dg;
            it.theta[i] += dt;
            it.phi[i] -= dz[i];
            it.psi[i] += dz[i];
        }
        let min = it.min_positive();
        if !(min > 0.0) {
            return Err(Error::InvariantViolation {
                iteration,
                what: format!("strict positivity lost (min entry {min:e})"),
            });
        }
        done += 1;
        observe(&IterationRecord {
            iteration,
            proximity_before_step: prox,
            weights: &weights,
            rhs: &rhs,
            dz: &dz,
            iterate: &it,
        });
    }
    debug_assert_eq!(done, total);
    let gap = it.gap();
    Ok(BoxQpSolution {
        z: it.z,
        iterations: done,
        gap,
        h_inf,
    })
}
