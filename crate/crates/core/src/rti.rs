//! Real-time-iteration controller: one certified QP solve per sampling instant.
//!
//! Each sampling instant is split in two. [`prepare`] linearizes the model
//! along the shifted previous solution and precomputes everything that does
//! not depend on the measured state. [`feedback`] receives the measurement,
//! finishes the QP gradient, runs the IPM for its fixed iteration count and
//! applies the full Newton step to the guess.

use nalgebra::{DMatrix, DVector};

use crate::certify::{certify, Certificate, ProblemDims};
use crate::condense::{
    build_g1, build_g2, build_h, build_hessian_oracle, build_s, build_scaling, scale_dynamics,
    CondensedProblem, InputBounds, InputScaling, ScaledStage, Weights,
};
use crate::error::{Error, Result};
use crate::ipm::{solve_box_qp, DenseBackend};
use crate::model::{Dynamics, ModelFlops};
use crate::riccati::RiccatiBackend;
use crate::sensitivity::{horizon_sensitivities, rk4_map, rollout, IntegratorSpec};

/// Linearization point: `N + 1` states and `N` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessTrajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl GuessTrajectory {
    pub fn new(x: Vec<DVector<f64>>, u: Vec<DVector<f64>>) -> Result<Self> {
        if u.is_empty() || x.len() != u.len() + 1 {
            return Err(Error::Dimension(format!(
                "trajectory needs N+1 states and N >= 1 inputs, got {} and {}",
                x.len(),
                u.len()
            )));
        }
        Ok(Self { x, u })
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }
}

/// Reference trajectories over one horizon: `N + 1` states, `N` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl References {
    pub fn constant(x: DVector<f64>, u: DVector<f64>, horizon: usize) -> Self {
        Self {
            x: vec![x; horizon + 1],
            u: vec![u; horizon],
        }
    }
}

/// Which Newton-system solver the IPM uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    /// Factorized Riccati recursion, `O(N)`; never forms `H`.
    #[default]
    Riccati,
    /// Dense Cholesky on the explicit condensed Hessian. For cross-checks.
    Dense,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "riccati" => Ok(Self::Riccati),
            "dense" => Ok(Self::Dense),
            other => Err(format!("unknown backend `{other}` (expected riccati or dense)")),
        }
    }
}

/// Output of the preparation phase.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub guess: GuessTrajectory,
    pub refs: References,
    pub bounds: InputBounds,
    pub weights: Weights,
    pub scaling: InputScaling,
    pub stages: Vec<ScaledStage>,
    pub s: DMatrix<f64>,
    pub g1: DVector<f64>,
    pub model_flops: ModelFlops,
    pub integration_steps: usize,
}

impl PreparedData {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn dims(&self, eps: f64) -> ProblemDims {
        ProblemDims {
            horizon: self.horizon(),
            nx: self.stages[0].a.nrows(),
            nu: self.scaling.diag.len(),
            integration_steps: self.integration_steps,
            model_flops: self.model_flops,
            eps,
        }
    }

    /// Finishes the condensed QP for a measured state.
    pub fn condense(&self, x_hat: &DVector<f64>) -> CondensedProblem {
        let g2 = build_g2(&self.stages, x_hat, &self.guess.x[0]);
        let (h, h_inf) = build_h(
            &self.s,
            &self.g1,
            &g2,
            &self.weights,
            &self.scaling,
            &self.refs.u,
            &self.bounds,
        );
        CondensedProblem {
            stages: self.stages.clone(),
            scaling: self.scaling.clone(),
            weights: self.weights.clone(),
            s: self.s.clone(),
            g1: self.g1.clone(),
            g2,
            h,
            h_inf,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// IPM iterations actually run; zero on the `h = 0` shortcut.
    pub iterations: usize,
    /// Final duality gap of the scaled QP.
    pub gap: f64,
    pub h_inf: f64,
    pub prep_flops: u64,
    pub feedback_flops: u64,
}

/// Full-step trajectory returned by the feedback phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub diagnostics: Diagnostics,
}

impl ControlSolution {
    /// The input to apply now, `u_{t,0}`.
    pub fn first_input(&self) -> &DVector<f64> {
        &self.u[0]
    }
}

/// Shifts the previous solution one sample forward and extends it with one
/// integration of the last input.
pub fn shift(
    previous: &ControlSolution,
    model: &dyn Dynamics,
    spec: &IntegratorSpec,
) -> Result<GuessTrajectory> {
    let n = previous.u.len();
    if n == 0 || previous.x.len() != n + 1 {
        return Err(Error::Dimension("previous solution is malformed".into()));
    }
    let mut x: Vec<_> = previous.x[1..].to_vec();
    let mut u: Vec<_> = previous.u[1..].to_vec();
    u.push(previous.u[n - 1].clone());
    let tail = rk4_map(model, &x[n - 1], &u[n - 1], spec)
        .map_err(|_| Error::IntegrationDiverged { stage: Some(n - 1) })?;
    x.push(tail);
    Ok(GuessTrajectory { x, u })
}

/// First-ever guess: roll the model forward from `x0` under the clamped reference inputs.
pub fn cold_start(
    model: &dyn Dynamics,
    x0: &DVector<f64>,
    refs: &References,
    bounds: &InputBounds,
    spec: &IntegratorSpec,
) -> Result<GuessTrajectory> {
    let u: Vec<_> = refs.u.iter().map(|u| bounds.clamp(u)).collect();
    let x = rollout(model, x0, &u, spec)?;
    GuessTrajectory::new(x, u)
}

/// Preparation phase. Does not see the measured state.
pub fn prepare(
    model: &dyn Dynamics,
    guess: GuessTrajectory,
    refs: References,
    bounds: &InputBounds,
    weights: &Weights,
    spec: &IntegratorSpec,
) -> Result<PreparedData> {
    let n = guess.horizon();
    if refs.x.len() != n + 1 || refs.u.len() != n {
        return Err(Error::Dimension(format!(
            "references need {} states and {n} inputs, got {} and {}",
            n + 1,
            refs.x.len(),
            refs.u.len()
        )));
    }
    let triples = horizon_sensitivities(model, &guess.x, &guess.u, spec)?;
    let scaling = build_scaling(&bounds.lo, &bounds.hi, &guess.u)?;
    let stages = scale_dynamics(&triples, &scaling);
    let s = build_s(&stages);
    let g1 = build_g1(&stages, &guess.x, &refs.x);
    Ok(PreparedData {
        guess,
        refs,
        bounds: bounds.clone(),
        weights: weights.clone(),
        scaling,
        stages,
        s,
        g1,
        model_flops: model.flops(),
        integration_steps: spec.steps(),
    })
}

/// Feedback phase: solve the QP for `x_hat` and apply the full Newton step.
pub fn feedback(
    prepared: &PreparedData,
    x_hat: &DVector<f64>,
    eps: f64,
    backend: BackendKind,
) -> Result<ControlSolution> {
    let n = prepared.horizon();
    let nx = prepared.stages[0].a.nrows();
    if x_hat.len() != nx {
        return Err(Error::Dimension(format!(
            "measured state has length {}, expected {nx}",
            x_hat.len()
        )));
    }
    let g2 = build_g2(&prepared.stages, x_hat, &prepared.guess.x[0]);
    let (h, _) = build_h(
        &prepared.s,
        &prepared.g1,
        &g2,
        &prepared.weights,
        &prepared.scaling,
        &prepared.refs.u,
        &prepared.bounds,
    );
    let solution = match backend {
        BackendKind::Riccati => {
            let rb = RiccatiBackend::new(
                &prepared.stages,
                &prepared.weights.state,
                &prepared.weights.terminal,
                &prepared.weights.scaled_input(&prepared.scaling),
            )?;
            solve_box_qp(&h, eps, rb)?
        }
        BackendKind::Dense => {
            let hess =
                build_hessian_oracle(&prepared.s, &prepared.weights, &prepared.scaling);
            solve_box_qp(&h, eps, DenseBackend::new(hess)?)?
        }
    };

    let nu = prepared.scaling.diag.len();
    let guess = &prepared.guess;
    let mut x = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    let mut dx = x_hat - &guess.x[0];
    x.push(x_hat.clone());
    for (k, st) in prepared.stages.iter().enumerate() {
        let z_k = solution.z.rows(k * nu, nu).into_owned();
        let du = prepared.scaling.increment(k, &z_k);
        dx = &st.a * &dx + &st.b_bar * &z_k + &st.r_bar;
        u.push(&guess.u[k] + du);
        x.push(&guess.x[k + 1] + &dx);
    }

    if let Some(k) = u.iter().position(|uk| !prepared.bounds.contains(uk, 1e-9)) {
        return Err(Error::InvariantViolation {
            iteration: solution.iterations,
            what: format!("input at stage {k} leaves the bounds: {}", u[k].transpose()),
        });
    }

    let cert = certify(&prepared.dims(eps), 1.0);
    Ok(ControlSolution {
        x,
        u,
        diagnostics: Diagnostics {
            iterations: solution.iterations,
            gap: solution.gap,
            h_inf: solution.h_inf,
            prep_flops: cert.prep_flops,
            feedback_flops: cert.feedback_flops,
        },
    })
}

/// Fixed settings of a controller.
#[derive(Debug, Clone)]
pub struct RtiSettings {
    pub horizon: usize,
    pub spec: IntegratorSpec,
    pub bounds: InputBounds,
    pub weights: Weights,
    pub eps: f64,
    pub backend: BackendKind,
}

/// Stateful controller that carries the previous solution between samples.
pub struct RtiController {
    model: Box<dyn Dynamics>,
    settings: RtiSettings,
    previous: Option<ControlSolution>,
    pending_guess: Option<GuessTrajectory>,
    prepared: Option<PreparedData>,
}

impl RtiController {
    pub fn new(model: Box<dyn Dynamics>, settings: RtiSettings) -> Result<Self> {
        if settings.horizon == 0 {
            return Err(Error::config("t_p", "prediction horizon must contain at least one sample"));
        }
        if !(settings.eps > 0.0) {
            return Err(Error::config("eps", "tolerance must be positive"));
        }
        let (nx, nu) = (model.state_dim(), model.input_dim());
        if settings.bounds.lo.len() != nu {
            return Err(Error::config("u_lo", format!("expected {nu} entries")));
        }
        if settings.weights.state.nrows() != nx {
            return Err(Error::config("weights.w_x", format!("expected {nx}x{nx}")));
        }
        if settings.weights.input.nrows() != nu {
            return Err(Error::config("weights.w_u", format!("expected {nu}x{nu}")));
        }
        Ok(Self {
            model,
            settings,
            previous: None,
            pending_guess: None,
            prepared: None,
        })
    }

    pub fn model(&self) -> &dyn Dynamics {
        self.model.as_ref()
    }

    pub fn settings(&self) -> &RtiSettings {
        &self.settings
    }

    pub fn certificate(&self, flops_per_sec: f64) -> Certificate {
        let dims = ProblemDims {
            horizon: self.settings.horizon,
            nx: self.model.state_dim(),
            nu: self.model.input_dim(),
            integration_steps: self.settings.spec.steps(),
            model_flops: self.model.flops(),
            eps: self.settings.eps,
        };
        certify(&dims, flops_per_sec)
    }

    /// Seeds the first guess with a feasible rollout from `x0`.
    pub fn cold_start(&mut self, x0: &DVector<f64>, refs: &References) -> Result<()> {
        let guess = cold_start(
            self.model.as_ref(),
            x0,
            refs,
            &self.settings.bounds,
            &self.settings.spec,
        )?;
        self.previous = None;
        self.pending_guess = Some(guess);
        Ok(())
    }

    /// Preparation phase for the next sample.
    pub fn prepare(&mut self, refs: References) -> Result<()> {
        let guess = match (&self.previous, self.pending_guess.take()) {
            (_, Some(g)) => g,
            (Some(prev), None) => shift(prev, self.model.as_ref(), &self.settings.spec)?,
            (None, None) => {
                return Err(Error::Dimension(
                    "no previous solution; call cold_start first".into(),
                ))
            }
        };
        self.prepared = Some(prepare(
            self.model.as_ref(),
            guess,
            refs,
            &self.settings.bounds,
            &self.settings.weights,
            &self.settings.spec,
        )?);
        Ok(())
    }

    /// Feedback phase for the measured state; consumes the prepared data.
    pub fn feedback(&mut self, x_hat: &DVector<f64>) -> Result<&ControlSolution> {
        let prepared = self
            .prepared
            .take()
            .ok_or_else(|| Error::Dimension("feedback called before prepare".into()))?;
        let sol = feedback(&prepared, x_hat, self.settings.eps, self.settings.backend)?;
        Ok(self.previous.insert(sol))
    }
}
