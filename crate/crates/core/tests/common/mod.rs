//! Instance generators and independent reference solvers shared by the
//! integration tests.
#![allow(dead_code)]

use cert_nmpc::condense::{build_hessian_oracle, build_s, InputScaling, ScaledStage, Weights};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

pub fn uniform_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..=scale))
}

/// `GᵀG/n + shift·I` with `G` uniform in `[−1, 1]`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> DMatrix<f64> {
    let g = uniform_matrix(rng, n, n, 1.0);
    let mut h = g.tr_mul(&g) / n as f64;
    for i in 0..n {
        h[(i, i)] += shift;
    }
    // Exact symmetry.
    let t = h.transpose();
    (h + t) * 0.5
}

/// Minimizer of `½zᵀHz + hᵀz` over `[−1, 1]ⁿ` by projected gradient, run until
/// the fixed-point residual is below `tol`.
pub fn projected_gradient(h_mat: &DMatrix<f64>, h: &DVector<f64>, tol: f64) -> DVector<f64> {
    let eig = h_mat.clone().symmetric_eigen();
    let l = eig.eigenvalues.max();
    let step = 1.0 / l;
    let mut z = DVector::zeros(h.len());
    for _ in 0..2_000_000 {
        let grad = h_mat * &z + h;
        let next = (&z - grad * step).map(|v| v.clamp(-1.0, 1.0));
        let res = (&next - &z).amax();
        z = next;
        if res <= tol * step {
            break;
        }
    }
    z
}

/// A structured QP: stages, weights, scaling and the dense oracle Hessian.
pub struct StructuredInstance {
    pub stages: Vec<ScaledStage>,
    pub weights: Weights,
    pub scaling: InputScaling,
    pub s: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl StructuredInstance {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }
}

pub fn random_structured<R: Rng>(
    rng: &mut R,
    horizon: usize,
    nx: usize,
    nu: usize,
) -> StructuredInstance {
    let stages: Vec<_> = (0..horizon)
        .map(|_| ScaledStage {
            a: DMatrix::identity(nx, nx) + uniform_matrix(rng, nx, nx, 0.3),
            b_bar: uniform_matrix(rng, nx, nu, 1.0),
            r_bar: uniform_vector(rng, nx, 0.1),
        })
        .collect();
    let weights = Weights::new(
        random_spd(rng, nx, 0.1),
        random_spd(rng, nx, 0.1),
        random_spd(rng, nu, 0.05),
    )
    .expect("generated weights are SPD");
    let scaling = InputScaling {
        diag: DVector::from_fn(nu, |_, _| rng.random_range(0.5..2.0)),
        offsets: vec![DVector::zeros(nu); horizon],
    };
    let s = build_s(&stages);
    let hessian = build_hessian_oracle(&s, &weights, &scaling);
    let h = uniform_vector(rng, horizon * nu, 5.0);
    StructuredInstance {
        stages,
        weights,
        scaling,
        s,
        hessian,
        h,
    }
}

/// Dense solve of `(cH + diag(w)) Δz = rhs` with nalgebra's Cholesky.
pub fn dense_newton_step(
    hessian: &DMatrix<f64>,
    scale: f64,
    weights: &DVector<f64>,
    rhs: &DVector<f64>,
) -> DVector<f64> {
    let m = hessian * scale + DMatrix::from_diagonal(weights);
    m.cholesky().expect("Newton matrix is SPD").solve(rhs)
}

pub fn relative_error(a: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (a - reference).norm() / reference.norm().max(f64::MIN_POSITIVE)
}

pub fn relative_error_mat(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).amax() / reference.amax().max(1.0)
}
