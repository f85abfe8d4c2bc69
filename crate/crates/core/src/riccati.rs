//! Factorized Riccati recursion for the structured Newton system.
//!
//! The Newton system of the condensed QP is the optimality condition of an
//! unconstrained LQR over the horizon,
//!
//! ```text
//! min Σ ½‖Δû_k‖²_{R̂_k} + ĝ_kᵀΔû_k + ½‖Δx̂_{k+1}‖²_{Q̂_{k+1}}
//! s.t. Δx̂_0 = 0,  Δx̂_{k+1} = A_k Δx̂_k + B̄_k Δû_k
//! ```
//!
//! which is solved in `O(N)` by propagating the Cholesky factor `L_k` of the
//! cost-to-go instead of the cost-to-go itself. Per stage one
//! `(n_u + n_x)`-square Gram block is formed and factored as
//! `[[Λ_k, 0], [M_k, L_k]]`, inputs first.

use nalgebra::{DMatrix, DVector};

use crate::condense::{CondensedProblem, ScaledStage};
use crate::error::{Error, Result};
use crate::ipm::{IpmIterate, NewtonBackend};
use crate::linalg::cholesky_in_place;

/// Data of one LQR stage. `q_hat` weights `Δx̂_k`, the state entering the stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrStage {
    pub a: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
    pub r_hat: DMatrix<f64>,
    pub g_hat: DVector<f64>,
}

/// Stages plus the terminal weight `Q̂_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    pub stages: Vec<LqrStage>,
    pub terminal: DMatrix<f64>,
}

/// Preallocated factors and scratch for one horizon; reused across IPM iterations.
#[derive(Debug, Clone)]
pub struct RiccatiWorkspace {
    nx: usize,
    nu: usize,
    factors: Vec<DMatrix<f64>>,
    terminal_factor: DMatrix<f64>,
    w: DMatrix<f64>,
    q: Vec<DVector<f64>>,
    p: DVector<f64>,
    p_next: DVector<f64>,
    tmp_u: DVector<f64>,
    du: Vec<DVector<f64>>,
    dx: Vec<DVector<f64>>,
}

impl RiccatiWorkspace {
    pub fn new(horizon: usize, nx: usize, nu: usize) -> Self {
        assert!(horizon >= 1, "horizon must have at least one stage");
        let m = nx + nu;
        Self {
            nx,
            nu,
            factors: vec![DMatrix::zeros(m, m); horizon],
            terminal_factor: DMatrix::zeros(nx, nx),
            w: DMatrix::zeros(nx, m),
            q: vec![DVector::zeros(nu); horizon],
            p: DVector::zeros(nx),
            p_next: DVector::zeros(nx),
            tmp_u: DVector::zeros(nu),
            du: vec![DVector::zeros(nu); horizon],
            dx: vec![DVector::zeros(nx); horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.factors.len()
    }

    /// Input steps `Δû_0 … Δû_{N−1}` of the last solve.
    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.du
    }

    /// States `Δx̂_0 … Δx̂_N` of the last solve.
    pub fn states(&self) -> &[DVector<f64>] {
        &self.dx
    }

    /// `Λ_k`, the input block of the stage-`k` factor.
    pub fn input_factor(&self, k: usize) -> DMatrix<f64> {
        self.factors[k].view((0, 0), (self.nu, self.nu)).into_owned()
    }

    /// `L_k`, the factor of the cost-to-go at stage `k`.
    pub fn cost_to_go_factor(&self, k: usize) -> DMatrix<f64> {
        if k == self.horizon() {
            self.terminal_factor.clone()
        } else {
            self.factors[k]
                .view((self.nu, self.nu), (self.nx, self.nx))
                .into_owned()
        }
    }

    /// Backward factorization and forward substitution.
    pub fn solve(&mut self, stages: &[LqrStage], terminal: &DMatrix<f64>) -> Result<()> {
        let (nx, nu) = (self.nx, self.nu);
        let horizon = self.horizon();
        if stages.len() != horizon {
            return Err(Error::Dimension(format!(
                "workspace sized for {horizon} stages, got {}",
                stages.len()
            )));
        }

        self.terminal_factor.copy_from(terminal);
        cholesky_in_place(&mut self.terminal_factor)
            .map_err(|_| Error::NotPositiveDefinite { stage: horizon })?;
        self.p_next.fill(0.0);

        for k in (0..horizon).rev() {
            let st = &stages[k];
            let (head, tail) = self.factors.split_at_mut(k + 1);
            let gram = &mut head[k];
            let l_next = match tail.first() {
                Some(next) => next.view((nu, nu), (nx, nx)),
                None => self.terminal_factor.view((0, 0), (nx, nx)),
            };

            // W = L_{k+1}ᵀ [B̄_k, A_k]
            self.w
                .columns_mut(0, nu)
                .gemm_tr(1.0, &l_next, &st.b_bar, 0.0);
            self.w
                .columns_mut(nu, nx)
                .gemm_tr(1.0, &l_next, &st.a, 0.0);

            gram.gemm_tr(1.0, &self.w, &self.w, 0.0);
            {
                let mut top = gram.view_mut((0, 0), (nu, nu));
                top += &st.r_hat;
            }
            {
                let mut bottom = gram.view_mut((nu, nu), (nx, nx));
                bottom += &st.q_hat;
            }
            cholesky_in_place(gram).map_err(|_| Error::NotPositiveDefinite { stage: k })?;

            let lambda = gram.view((0, 0), (nu, nu));
            let m = gram.view((nu, 0), (nx, nu));

            // y = Λ⁻¹(B̄ᵀp_{k+1} + ĝ), q = Λ⁻ᵀy, p_k = Aᵀp_{k+1} − M y
            self.tmp_u.copy_from(&st.g_hat);
            self.tmp_u.gemv_tr(1.0, &st.b_bar, &self.p_next, 1.0);
            lambda.solve_lower_triangular_mut(&mut self.tmp_u);
            self.p.gemv_tr(1.0, &st.a, &self.p_next, 0.0);
            self.p.gemv(-1.0, &m, &self.tmp_u, 1.0);
            let q = &mut self.q[k];
            q.copy_from(&self.tmp_u);
            lambda.tr_solve_lower_triangular_mut(q);
            std::mem::swap(&mut self.p, &mut self.p_next);
        }

        self.dx[0].fill(0.0);
        for (k, st) in stages.iter().enumerate() {
            let gram = &self.factors[k];
            let lambda = gram.view((0, 0), (nu, nu));
            let m = gram.view((nu, 0), (nx, nu));
            let (before, after) = self.dx.split_at_mut(k + 1);
            let x = &before[k];

            // Δû_k = −Λ⁻ᵀMᵀΔx̂_k − q_k
            self.tmp_u.gemv_tr(1.0, &m, x, 0.0);
            lambda.tr_solve_lower_triangular_mut(&mut self.tmp_u);
            let u = &mut self.du[k];
            u.copy_from(&self.q[k]);
            *u += &self.tmp_u;
            u.neg_mut();

            let x_next = &mut after[0];
            x_next.gemv(1.0, &st.a, x, 0.0);
            x_next.gemv(1.0, &st.b_bar, u, 1.0);
        }
        Ok(())
    }
}

/// Solution of an LQR: `Δû_0..Δû_{N−1}` and `Δx̂_0..Δx̂_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
}

impl RiccatiSolution {
    /// Stacked inputs, i.e. `Δz`.
    pub fn stacked_inputs(&self) -> DVector<f64> {
        let nu = self.inputs.first().map_or(0, |u| u.len());
        let mut out = DVector::zeros(nu * self.inputs.len());
        for (k, u) in self.inputs.iter().enumerate() {
            out.rows_mut(k * nu, nu).copy_from(u);
        }
        out
    }
}

/// One-shot solve with a fresh workspace.
pub fn riccati_solve(problem: &LqrProblem) -> Result<RiccatiSolution> {
    let first = problem
        .stages
        .first()
        .ok_or_else(|| Error::Dimension("LQR needs at least one stage".into()))?;
    let mut ws = RiccatiWorkspace::new(problem.stages.len(), first.a.nrows(), first.b_bar.ncols());
    ws.solve(&problem.stages, &problem.terminal)?;
    Ok(RiccatiSolution {
        inputs: ws.du,
        states: ws.dx,
    })
}

/// Builds the LQR equivalent of the Newton system at `iterate`.
///
/// `Q̂_0` does not appear in the QP; it is set to the scaled `W_x` so the
/// first Gram block stays positive definite. It has no effect on `Δû`
/// because `Δx̂_0 = 0`.
pub fn assemble_stages(
    condensed: &CondensedProblem,
    iterate: &IpmIterate,
    rhs: &DVector<f64>,
) -> LqrProblem {
    let c = iterate.objective_scale(condensed.h_inf);
    let nu = condensed.input_dim();
    let weights = crate::ipm::newton_weights(iterate);
    let dwud = condensed.weights.scaled_input(&condensed.scaling) * c;
    let q = &condensed.weights.state * c;
    let stages = condensed
        .stages
        .iter()
        .enumerate()
        .map(|(k, st)| LqrStage {
            a: st.a.clone(),
            b_bar: st.b_bar.clone(),
            q_hat: q.clone(),
            r_hat: &dwud + DMatrix::from_diagonal(&weights.rows(k * nu, nu).into_owned()),
            g_hat: -rhs.rows(k * nu, nu).into_owned(),
        })
        .collect();
    LqrProblem {
        stages,
        terminal: &condensed.weights.terminal * c,
    }
}

/// Structured [`NewtonBackend`] that never forms the condensed Hessian.
#[derive(Debug, Clone)]
pub struct RiccatiBackend {
    stages: Vec<LqrStage>,
    terminal: DMatrix<f64>,
    state_weight: DMatrix<f64>,
    terminal_weight: DMatrix<f64>,
    input_weight: DMatrix<f64>,
    scaled_input_weight: DMatrix<f64>,
    workspace: RiccatiWorkspace,
}

impl RiccatiBackend {
    /// `input_weight` is `D W_u D`.
    pub fn new(
        stages: &[ScaledStage],
        state_weight: &DMatrix<f64>,
        terminal_weight: &DMatrix<f64>,
        input_weight: &DMatrix<f64>,
    ) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| Error::Dimension("Riccati backend needs at least one stage".into()))?;
        let (nx, nu) = (first.a.nrows(), first.b_bar.ncols());
        if state_weight.shape() != (nx, nx)
            || terminal_weight.shape() != (nx, nx)
            || input_weight.shape() != (nu, nu)
        {
            return Err(Error::Dimension(
                "weight sizes do not match the stage dimensions".into(),
            ));
        }
        let lqr = stages
            .iter()
            .map(|st| LqrStage {
                a: st.a.clone(),
                b_bar: st.b_bar.clone(),
                q_hat: state_weight.clone(),
                r_hat: input_weight.clone(),
                g_hat: DVector::zeros(nu),
            })
            .collect();
        Ok(Self {
            stages: lqr,
            terminal: terminal_weight.clone(),
            state_weight: state_weight.clone(),
            terminal_weight: terminal_weight.clone(),
            input_weight: input_weight.clone(),
            scaled_input_weight: input_weight.clone(),
            workspace: RiccatiWorkspace::new(stages.len(), nx, nu),
        })
    }

    pub fn from_condensed(problem: &CondensedProblem) -> Result<Self> {
        Self::new(
            &problem.stages,
            &problem.weights.state,
            &problem.weights.terminal,
            &problem.weights.scaled_input(&problem.scaling),
        )
    }

    pub fn workspace(&self) -> &RiccatiWorkspace {
        &self.workspace
    }
}

impl NewtonBackend for RiccatiBackend {
    fn dim(&self) -> usize {
        self.stages.len() * self.input_weight.nrows()
    }

    fn set_hessian_scale(&mut self, scale: f64) {
        for st in &mut self.stages {
            st.q_hat.copy_from(&self.state_weight);
            st.q_hat *= scale;
        }
        self.terminal.copy_from(&self.terminal_weight);
        self.terminal *= scale;
        self.scaled_input_weight.copy_from(&self.input_weight);
        self.scaled_input_weight *= scale;
    }

    fn solve(
        &mut self,
        weights: &DVector<f64>,
        rhs: &DVector<f64>,
        dz: &mut DVector<f64>,
    ) -> Result<()> {
        let nu = self.input_weight.nrows();
        for (k, st) in self.stages.iter_mut().enumerate() {
            st.r_hat.copy_from(&self.scaled_input_weight);
            for i in 0..nu {
                st.r_hat[(i, i)] += weights[k * nu + i];
                st.g_hat[i] = -rhs[k * nu + i];
            }
        }
        self.workspace.solve(&self.stages, &self.terminal)?;
        for (k, u) in self.workspace.inputs().iter().enumerate() {
            dz.rows_mut(k * nu, nu).copy_from(u);
        }
        Ok(())
    }
}
