//! Condensing of the linearized tracking problem into a unit-box QP.
//!
//! Inputs are rescaled so that `Δu_k = D z_k + d_k` with `z_k ∈ [−1, 1]`,
//! the states are eliminated through the block lower-triangular matrix `S`,
//! and the QP gradient `h` is assembled from the offline part `g₁` and the
//! feedback part `g₂`. The Hessian `H = R̄ + SᵀQ̄S` is only ever built by
//! [`build_hessian_oracle`]; the controller path never needs it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, inf_norm};
use crate::sensitivity::StageTriple;

/// Box scaling `Δu_k = D z_k + d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    /// Diagonal of `D`, `(ū − u̲)/2`.
    pub diag: DVector<f64>,
    /// `d_k = (ū + u̲)/2 − u_guess_k`.
    pub offsets: Vec<DVector<f64>>,
}

impl InputScaling {
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }

    /// Input increment for stage `k` given the scaled variable `z_k`.
    pub fn increment(&self, k: usize, z_k: &DVector<f64>) -> DVector<f64> {
        self.diag.component_mul(z_k) + &self.offsets[k]
    }
}

/// Lower and upper input bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBounds {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl InputBounds {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&l, &h)) in lo.iter().zip(hi.iter()).enumerate() {
            if !(h > l) || !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBounds { index: i, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.hi + &self.lo) * 0.5
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.lo[i], self.hi[i]))
    }

    pub fn contains(&self, u: &DVector<f64>, slack: f64) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(&x, (&l, &h))| x >= l - slack && x <= h + slack)
    }
}

pub fn build_scaling(
    u_lo: &DVector<f64>,
    u_hi: &DVector<f64>,
    u_guess: &[DVector<f64>],
) -> Result<InputScaling> {
    let bounds = InputBounds::new(u_lo.clone(), u_hi.clone())?;
    let center = bounds.center();
    if let Some(bad) = u_guess.iter().find(|u| u.len() != center.len()) {
        return Err(Error::Dimension(format!(
            "guess input of length {} against bounds of length {}",
            bad.len(),
            center.len()
        )));
    }
    Ok(InputScaling {
        diag: (u_hi - u_lo) * 0.5,
        offsets: u_guess.iter().map(|u| &center - u).collect(),
    })
}

/// Linearized dynamics after input scaling: `Δx_{k+1} = A_k Δx_k + B̄_k z_k + r̄_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledStage {
    pub a: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub r_bar: DVector<f64>,
}

pub fn scale_dynamics(stages: &[StageTriple], scaling: &InputScaling) -> Vec<ScaledStage> {
    stages
        .iter()
        .zip(&scaling.offsets)
        .map(|(s, d)| {
            let mut b_bar = s.b.clone();
            for (j, mut col) in b_bar.column_iter_mut().enumerate() {
                col *= scaling.diag[j];
            }
            ScaledStage {
                a: s.a.clone(),
                b_bar,
                r_bar: &s.r + &s.b * d,
            }
        })
        .collect()
}

/// Tracking weights. All three must be symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub state: DMatrix<f64>,
    pub terminal: DMatrix<f64>,
    pub input: DMatrix<f64>,
}

impl Weights {
    pub fn new(state: DMatrix<f64>, terminal: DMatrix<f64>, input: DMatrix<f64>) -> Result<Self> {
        check_spd(&state, "weights.w_x")?;
        check_spd(&terminal, "weights.w_n")?;
        check_spd(&input, "weights.w_u")?;
        if state.nrows() != terminal.nrows() {
            return Err(Error::config("weights.w_n", "must match the size of w_x"));
        }
        Ok(Self {
            state,
            terminal,
            input,
        })
    }

    pub fn identity(nx: usize, nu: usize, input_scale: f64) -> Self {
        Self {
            state: DMatrix::identity(nx, nx),
            terminal: DMatrix::identity(nx, nx),
            input: DMatrix::identity(nu, nu) * input_scale,
        }
    }

    /// Block `k` of `Q̄ = blkdiag(W_x, …, W_x, W_N)` for a horizon of length `n`.
    pub fn stage_state(&self, k: usize, horizon: usize) -> &DMatrix<f64> {
        if k + 1 == horizon {
            &self.terminal
        } else {
            &self.state
        }
    }

    /// `D W_u D`.
    pub fn scaled_input(&self, scaling: &InputScaling) -> DMatrix<f64> {
        let mut r = self.input.clone();
        for i in 0..r.nrows() {
            for j in 0..r.ncols() {
                r[(i, j)] *= scaling.diag[i] * scaling.diag[j];
            }
        }
        r
    }
}

fn check_spd(m: &DMatrix<f64>, path: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::config(path, "must be a non-empty square matrix"));
    }
    if m != &m.transpose() {
        return Err(Error::config(path, "must be symmetric"));
    }
    let mut l = m.clone();
    cholesky_in_place(&mut l).map_err(|_| Error::config(path, "must be positive definite"))
}

fn dims(stages: &[ScaledStage]) -> (usize, usize, usize) {
    let first = &stages[0];
    (stages.len(), first.a.nrows(), first.b_bar.ncols())
}

/// Block lower-triangular `S` mapping the stacked scaled inputs to the stacked
/// state deviations `Δx_1 … Δx_N` (with `Δx_0 = 0`, `r̄ = 0`).
///
/// Block row `i` is `A_i` times block row `i − 1`, plus `B̄_i` on the diagonal.
pub fn build_s(stages: &[ScaledStage]) -> DMatrix<f64> {
    assert!(!stages.is_empty(), "horizon must have at least one stage");
    let (n, nx, nu) = dims(stages);
    let mut s = DMatrix::zeros(n * nx, n * nu);
    for (i, st) in stages.iter().enumerate() {
        if i > 0 {
            let prev = s.view((nx * (i - 1), 0), (nx, nu * i)).into_owned();
            s.view_mut((nx * i, 0), (nx, nu * i))
                .gemm(1.0, &st.a, &prev, 0.0);
        }
        s.view_mut((nx * i, nu * i), (nx, nu)).copy_from(&st.b_bar);
    }
    s
}

/// Offline gradient part: `x_guess_{k+1} − x_ref_{k+1}` plus the defect chain
/// `e_{k+1} = A_k e_k + r̄_k`, `e_0 = 0`.
pub fn build_g1(
    stages: &[ScaledStage],
    x_guess: &[DVector<f64>],
    x_ref: &[DVector<f64>],
) -> DVector<f64> {
    let (n, nx, _) = dims(stages);
    assert_eq!(x_guess.len(), n + 1);
    assert_eq!(x_ref.len(), n + 1);
    let mut g1 = DVector::zeros(n * nx);
    let mut e = DVector::zeros(nx);
    for (k, st) in stages.iter().enumerate() {
        e = &st.a * &e + &st.r_bar;
        let block = &x_guess[k + 1] - &x_ref[k + 1] + &e;
        g1.rows_mut(k * nx, nx).copy_from(&block);
    }
    g1
}

/// Feedback gradient part: block `k` is `A_k ⋯ A_0 (x̂ − x_guess_0)`.
pub fn build_g2(
    stages: &[ScaledStage],
    x_hat: &DVector<f64>,
    x_guess_0: &DVector<f64>,
) -> DVector<f64> {
    let (n, nx, _) = dims(stages);
    let mut g2 = DVector::zeros(n * nx);
    let mut w = x_hat - x_guess_0;
    for (k, st) in stages.iter().enumerate() {
        w = &st.a * &w;
        g2.rows_mut(k * nx, nx).copy_from(&w);
    }
    g2
}

/// `h = SᵀQ̄(g₁ + g₂) + col(D W_u((ū + u̲)/2 − u_ref_k))`; returns `(h, ‖h‖∞)`.
#[allow(clippy::too_many_arguments)]
pub fn build_h(
    s: &DMatrix<f64>,
    g1: &DVector<f64>,
    g2: &DVector<f64>,
    weights: &Weights,
    scaling: &InputScaling,
    u_ref: &[DVector<f64>],
    bounds: &InputBounds,
) -> (DVector<f64>, f64) {
    let nx = weights.state.nrows();
    let nu = scaling.diag.len();
    let n = u_ref.len();
    let g = g1 + g2;
    let mut qg = DVector::zeros(n * nx);
    for k in 0..n {
        let q = weights.stage_state(k, n);
        qg.rows_mut(k * nx, nx)
            .copy_from(&(q * g.rows(k * nx, nx)));
    }
    let mut h = s.tr_mul(&qg);
    let center = bounds.center();
    for (k, u_ref_k) in u_ref.iter().enumerate() {
        let lin = scaling
            .diag
            .component_mul(&(&weights.input * (&center - u_ref_k)));
        let mut block = h.rows_mut(k * nu, nu);
        block += lin;
    }
    let h_inf = inf_norm(&h);
    (h, h_inf)
}

/// Dense `H = R̄ + SᵀQ̄S`. Test and cross-check use only.
///
/// Only the lower triangle is computed; the result is mirrored so it is
/// exactly symmetric.
pub fn build_hessian_oracle(
    s: &DMatrix<f64>,
    weights: &Weights,
    scaling: &InputScaling,
) -> DMatrix<f64> {
    let nx = weights.state.nrows();
    let nu = scaling.diag.len();
    let horizon = s.nrows() / nx;
    let mut qs = DMatrix::zeros(s.nrows(), s.ncols());
    for k in 0..horizon {
        let q = weights.stage_state(k, horizon);
        qs.view_mut((k * nx, 0), (nx, s.ncols()))
            .copy_from(&(q * s.view((k * nx, 0), (nx, s.ncols()))));
    }
    let rbar = weights.scaled_input(scaling);
    let n = s.ncols();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut v = s.column(i).dot(&qs.column(j));
            if i / nu == j / nu {
                v += rbar[(i % nu, j % nu)];
            }
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Everything needed to pose the unit-box QP for one sampling instant.
#[derive(Debug, Clone)]
pub struct CondensedProblem {
    pub stages: Vec<ScaledStage>,
    pub scaling: InputScaling,
    pub weights: Weights,
    pub s: DMatrix<f64>,
    pub g1: DVector<f64>,
    pub g2: DVector<f64>,
    pub h: DVector<f64>,
    pub h_inf: f64,
}

impl CondensedProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn state_dim(&self) -> usize {
        self.stages[0].a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.scaling.diag.len()
    }

    /// QP dimension `n = N n_u`.
    pub fn dim(&self) -> usize {
        self.horizon() * self.input_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn scalar_stage(a: f64, b: f64, r: f64) -> ScaledStage {
        ScaledStage {
            a: m1(a),
            b_bar: m1(b),
            r_bar: v(&[r]),
        }
    }

    #[test]
    fn scaling_examples() {
        let sc = build_scaling(&v(&[-3.0; 3]), &v(&[3.0; 3]), &[DVector::zeros(3)]).unwrap();
        assert_eq!(sc.diag, v(&[3.0; 3]));
        assert_eq!(sc.offsets[0], DVector::zeros(3));

        let sc = build_scaling(&v(&[0.0]), &v(&[2.0]), &[v(&[1.0])]).unwrap();
        assert_eq!((sc.diag[0], sc.offsets[0][0]), (1.0, 0.0));

        let sc = build_scaling(&v(&[0.0]), &v(&[2.0]), &[v(&[0.0])]).unwrap();
        assert_eq!((sc.diag[0], sc.offsets[0][0]), (1.0, 1.0));
    }

    #[test]
    fn scaling_rejects_inverted_bounds() {
        let err = build_scaling(&v(&[0.0, 1.0]), &v(&[1.0, 1.0]), &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidBounds { index: 1, .. }));
    }

    #[test]
    fn box_corners_map_onto_bounds() {
        let lo = v(&[-1.0, 0.5]);
        let hi = v(&[2.0, 4.0]);
        let guess = v(&[0.3, 3.9]);
        let sc = build_scaling(&lo, &hi, std::slice::from_ref(&guess)).unwrap();
        let at = |z: f64| &guess + sc.increment(0, &v(&[z, z]));
        assert!(((at(-1.0)) - &lo).amax() < 1e-15);
        assert!(((at(1.0)) - &hi).amax() < 1e-15);
        let mid = at(0.0);
        assert!(mid.iter().zip(lo.iter().zip(hi.iter())).all(|(x, (l, h))| l <= x && x <= h));
    }

    #[test]
    fn scale_dynamics_examples() {
        let triple = StageTriple {
            a: DMatrix::identity(2, 2),
            b: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            r: v(&[0.5, -0.5]),
        };
        let sc = InputScaling {
            diag: v(&[3.0]),
            offsets: vec![v(&[2.0])],
        };
        let out = scale_dynamics(std::slice::from_ref(&triple), &sc);
        assert_eq!(out[0].b_bar, DMatrix::from_column_slice(2, 1, &[3.0, 0.0]));
        assert_eq!(out[0].r_bar, v(&[2.5, -0.5]));

        let ident = InputScaling {
            diag: v(&[1.0]),
            offsets: vec![v(&[0.0])],
        };
        let out = scale_dynamics(std::slice::from_ref(&triple), &ident);
        assert_eq!(out[0].b_bar, triple.b);
        assert_eq!(out[0].r_bar, triple.r);
    }

    #[test]
    fn s_small_cases() {
        let s = build_s(&[scalar_stage(5.0, 1.5, 0.0)]);
        assert_eq!(s, m1(1.5));
        let s = build_s(&[scalar_stage(7.0, 1.0, 0.0), scalar_stage(2.0, 1.0, 0.0)]);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 1.0]));
    }

    #[test]
    fn g1_and_g2_small_cases() {
        let stages = [scalar_stage(2.0, 1.0, 1.0), scalar_stage(2.0, 1.0, 0.0)];
        let xs = vec![v(&[0.0]); 3];
        assert_eq!(build_g1(&stages, &xs, &xs), v(&[1.0, 2.0]));
        assert_eq!(build_g2(&stages, &v(&[1.0]), &v(&[0.0])), v(&[2.0, 4.0]));
        assert_eq!(build_g2(&stages, &v(&[0.7]), &v(&[0.7])), v(&[0.0, 0.0]));

        let quiet = [scalar_stage(2.0, 1.0, 0.0), scalar_stage(2.0, 1.0, 0.0)];
        assert_eq!(build_g1(&quiet, &xs, &xs), v(&[0.0, 0.0]));
    }

    #[test]
    fn h_small_cases() {
        let w = Weights::identity(1, 1, 1.0);
        let bounds = InputBounds::new(v(&[-1.0]), v(&[1.0])).unwrap();
        let sc = build_scaling(&bounds.lo, &bounds.hi, &[v(&[0.0])]).unwrap();
        let (h, h_inf) = build_h(&m1(1.0), &v(&[2.0]), &v(&[0.0]), &w, &sc, &[v(&[0.0])], &bounds);
        assert_eq!(h, v(&[2.0]));
        assert_eq!(h_inf, 2.0);

        let (h, h_inf) = build_h(&m1(1.0), &v(&[0.0]), &v(&[0.0]), &w, &sc, &[v(&[0.0])], &bounds);
        assert_eq!(h, v(&[0.0]));
        assert_eq!(h_inf, 0.0);
    }

    #[test]
    fn hessian_oracle_small_cases() {
        let w = Weights::identity(1, 1, 1.0);
        let sc = InputScaling {
            diag: v(&[1.0]),
            offsets: vec![v(&[0.0])],
        };
        assert_eq!(build_hessian_oracle(&m1(1.0), &w, &sc), m1(2.0));

        let w = Weights::identity(2, 2, 0.1);
        let sc = InputScaling {
            diag: v(&[3.0, 2.0]),
            offsets: vec![DVector::zeros(2); 2],
        };
        let h = build_hessian_oracle(&DMatrix::zeros(4, 4), &w, &sc);
        let rbar = w.scaled_input(&sc);
        assert_eq!(h.view((0, 0), (2, 2)), rbar);
        assert_eq!(h.view((2, 2), (2, 2)), rbar);
        assert_eq!(h.view((0, 2), (2, 2)), DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn weights_reject_indefinite() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = Weights::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), bad).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "weights.w_u"));
    }
}
