//! JSON experiment configs, the closed-loop simulator and its CSV trace.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::condense::{InputBounds, Weights};
use crate::error::{Error, Result};
use crate::model::{Dynamics, ModelConfig};
use crate::rti::{BackendKind, References, RtiController, RtiSettings};
use crate::sensitivity::{rk4_map, IntegratorSpec};

/// A weight matrix: either the diagonal or full row-major rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_matrix(&self, size: usize, path: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Diagonal(d) => {
                if d.len() != size {
                    return Err(Error::config(path, format!("expected {size} diagonal entries, got {}", d.len())));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != size || rows.iter().any(|r| r.len() != size) {
                    return Err(Error::config(path, format!("expected a {size}x{size} matrix")));
                }
                Ok(DMatrix::from_fn(size, size, |i, j| rows[i][j]))
            }
        }
    }
}

/// A reference: one constant vector or one vector per sampling step.
///
/// Sequences are indexed by absolute sample and hold their last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    Constant(Vec<f64>),
    Sequence(Vec<Vec<f64>>),
}

impl ReferenceSpec {
    fn check(&self, size: usize, path: &str) -> Result<()> {
        let ok = match self {
            ReferenceSpec::Constant(v) => v.len() == size,
            ReferenceSpec::Sequence(s) => !s.is_empty() && s.iter().all(|v| v.len() == size),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(path, format!("every reference vector must have {size} entries")))
        }
    }

    pub fn at(&self, sample: usize) -> DVector<f64> {
        match self {
            ReferenceSpec::Constant(v) => DVector::from_column_slice(v),
            ReferenceSpec::Sequence(s) => DVector::from_column_slice(&s[sample.min(s.len() - 1)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub w_x: MatrixSpec,
    pub w_n: MatrixSpec,
    pub w_u: MatrixSpec,
}

fn default_flops_per_sec() -> f64 {
    1e9
}

fn default_perturbation() -> f64 {
    1.0
}

/// Closed-loop experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelConfig,
    /// Sampling time in seconds.
    pub dt: f64,
    /// Prediction horizon in seconds; `t_p / dt` must be a positive integer.
    pub t_p: f64,
    /// RK4 steps per sampling interval.
    pub n_s: usize,
    pub sim_duration: f64,
    /// Initial plant state. When absent, it is drawn uniformly within
    /// `x0_perturbation` of the first state reference using `seed`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_perturbation")]
    pub x0_perturbation: f64,
    pub x_ref: ReferenceSpec,
    pub u_ref: ReferenceSpec,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    pub weights: WeightsConfig,
    pub eps: f64,
    #[serde(default = "default_flops_per_sec")]
    pub flops_per_sec: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_json_str(&text)
    }

    /// Checks every field and builds the runnable scenario.
    pub fn validate(&self) -> Result<Scenario> {
        let model = self.model.build()?;
        let (nx, nu) = (model.state_dim(), model.input_dim());
        let spec = IntegratorSpec::new(self.dt, self.n_s)?;
        if !(self.t_p > 0.0) {
            return Err(Error::config("t_p", "prediction horizon must be positive"));
        }
        let horizon = whole_ratio(self.t_p, self.dt)
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::config("t_p", format!("t_p / dt = {} is not a positive integer", self.t_p / self.dt)))?;
        if !(self.sim_duration >= 0.0) {
            return Err(Error::config("sim_duration", "must be nonnegative"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        if !(self.flops_per_sec > 0.0) {
            return Err(Error::config("flops_per_sec", "must be positive"));
        }
        self.x_ref.check(nx, "x_ref")?;
        self.u_ref.check(nu, "u_ref")?;
        if self.u_lo.len() != nu {
            return Err(Error::config("u_lo", format!("expected {nu} entries")));
        }
        if self.u_hi.len() != nu {
            return Err(Error::config("u_hi", format!("expected {nu} entries")));
        }
        let bounds = InputBounds::new(
            DVector::from_column_slice(&self.u_lo),
            DVector::from_column_slice(&self.u_hi),
        )
        .map_err(|e| Error::config("u_hi", e.to_string()))?;
        let weights = Weights::new(
            self.weights.w_x.to_matrix(nx, "weights.w_x")?,
            self.weights.w_n.to_matrix(nx, "weights.w_n")?,
            self.weights.w_u.to_matrix(nu, "weights.w_u")?,
        )?;
        let x0 = match &self.x0 {
            Some(x0) if x0.len() != nx => {
                return Err(Error::config("x0", format!("expected {nx} entries")));
            }
            Some(x0) => DVector::from_column_slice(x0),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let r = self.x0_perturbation.abs();
                let base = self.x_ref.at(0);
                DVector::from_fn(nx, |i, _| base[i] + if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 })
            }
        };
        let steps = whole_steps(self.sim_duration, self.dt);
        Ok(Scenario {
            model,
            model_config: self.model.clone(),
            spec,
            horizon,
            steps,
            x0,
            x_ref: self.x_ref.clone(),
            u_ref: self.u_ref.clone(),
            bounds,
            weights,
            eps: self.eps,
            flops_per_sec: self.flops_per_sec,
        })
    }
}

fn whole_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * n.max(1.0) && n.is_finite()).then_some(n as usize)
}

// ⌊duration/dt⌋, tolerant of representation error such as 3.0/0.01.
fn whole_steps(duration: f64, dt: f64) -> usize {
    let r = duration / dt;
    (r + 1e-9 * r.max(1.0)).floor() as usize
}

/// A validated experiment.
pub struct Scenario {
    pub model: Box<dyn Dynamics>,
    pub model_config: ModelConfig,
    pub spec: IntegratorSpec,
    pub horizon: usize,
    /// Number of sampling steps to simulate.
    pub steps: usize,
    pub x0: DVector<f64>,
    pub x_ref: ReferenceSpec,
    pub u_ref: ReferenceSpec,
    pub bounds: InputBounds,
    pub weights: Weights,
    pub eps: f64,
    pub flops_per_sec: f64,
}

impl Scenario {
    pub fn references_at(&self, sample: usize) -> References {
        References {
            x: (0..=self.horizon).map(|k| self.x_ref.at(sample + k)).collect(),
            u: (0..self.horizon).map(|k| self.u_ref.at(sample + k)).collect(),
        }
    }

    pub fn settings(&self, backend: BackendKind) -> RtiSettings {
        RtiSettings {
            horizon: self.horizon,
            spec: self.spec,
            bounds: self.bounds.clone(),
            weights: self.weights.clone(),
            eps: self.eps,
            backend,
        }
    }

    pub fn certificate(&self) -> Certificate {
        let dims = crate::certify::ProblemDims {
            horizon: self.horizon,
            nx: self.model.state_dim(),
            nu: self.model.input_dim(),
            integration_steps: self.spec.steps(),
            model_flops: self.model.flops(),
            eps: self.eps,
        };
        crate::certify::certify(&dims, self.flops_per_sec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Apply zero input and skip the controller.
    pub open_loop: bool,
    pub backend: BackendKind,
    /// When false the wall-time columns are written as zero so traces are
    /// byte-for-byte reproducible.
    pub record_wall_times: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            open_loop: false,
            backend: BackendKind::Riccati,
            record_wall_times: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub iters: usize,
    pub gap: f64,
    pub prep_flops: u64,
    pub fb_flops: u64,
    pub prep_wall_s: f64,
    pub fb_wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    /// Plant state after the last step.
    pub final_state: DVector<f64>,
    pub dt: f64,
}

impl SimTrace {
    /// First time from which `‖x − target‖ < tol` holds for every later row
    /// and the final state.
    pub fn settling_time(&self, target: &DVector<f64>, tol: f64) -> Option<f64> {
        if (&self.final_state - target).norm() >= tol {
            return None;
        }
        let mut first = self.rows.len();
        for (i, row) in self.rows.iter().enumerate().rev() {
            if (DVector::from_column_slice(&row.x) - target).norm() < tol {
                first = i;
            } else {
                break;
            }
        }
        Some(first as f64 * self.dt)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let nx = self.final_state.len();
        let nu = self.rows.first().map_or(0, |r| r.u.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=nx).map(|i| format!("x{i}")));
        header.extend((1..=nu).map(|i| format!("u{i}")));
        header.extend(
            ["iters", "gap", "prep_flops", "fb_flops", "prep_wall_s", "fb_wall_s"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string()];
            rec.extend(r.x.iter().map(|v| v.to_string()));
            rec.extend(r.u.iter().map(|v| v.to_string()));
            rec.push(r.iters.to_string());
            rec.push(r.gap.to_string());
            rec.push(r.prep_flops.to_string());
            rec.push(r.fb_flops.to_string());
            rec.push(r.prep_wall_s.to_string());
            rec.push(r.fb_wall_s.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the plant and the controller in closed loop.
///
/// Each step measures the plant, runs the preparation and feedback phases,
/// applies `u_{t,0}` and advances the plant with the controller's own
/// integrator.
pub fn run_closed_loop(scenario: &Scenario, opts: SimOptions) -> Result<SimTrace> {
    let nu = scenario.model.input_dim();
    let plant = scenario.model.as_ref();
    let mut controller = if opts.open_loop {
        None
    } else {
        // The controller owns its own instance of the model.
        let model = scenario.model_config.build()?;
        Some(RtiController::new(model, scenario.settings(opts.backend))?)
    };
    let wrap = |step: usize| move |e: Error| Error::Simulation { step, source: Box::new(e) };

    let mut x = scenario.x0.clone();
    let mut rows = Vec::with_capacity(scenario.steps);
    for step in 0..scenario.steps {
        let mut row = TraceRow {
            t: step as f64 * scenario.spec.dt(),
            x: x.iter().copied().collect(),
            u: vec![0.0; nu],
            iters: 0,
            gap: 0.0,
            prep_flops: 0,
            fb_flops: 0,
            prep_wall_s: 0.0,
            fb_wall_s: 0.0,
        };
        let u = match controller.as_mut() {
            None => DVector::zeros(nu),
            Some(c) => {
                let refs = scenario.references_at(step);
                if step == 0 {
                    c.cold_start(&x, &refs).map_err(wrap(step))?;
                }
                let t0 = Instant::now();
                c.prepare(refs).map_err(wrap(step))?;
                let t1 = Instant::now();
                let sol = c.feedback(&x).map_err(wrap(step))?;
                let t2 = Instant::now();
                let d = &sol.diagnostics;
                row.iters = d.iterations;
                row.gap = d.gap;
                row.prep_flops = d.prep_flops;
                row.fb_flops = d.feedback_flops;
                if opts.record_wall_times {
                    row.prep_wall_s = (t1 - t0).as_secs_f64();
                    row.fb_wall_s = (t2 - t1).as_secs_f64();
                }
                log::debug!(
                    "step {step}: iters={} gap={:e} fb_wall={:.3e}s",
                    d.iterations,
                    d.gap,
                    row.fb_wall_s
                );
                sol.first_input().clone()
            }
        };
        row.u = u.iter().copied().collect();
        rows.push(row);
        x = rk4_map(plant, &x, &u, &scenario.spec).map_err(wrap(step))?;
    }
    Ok(SimTrace {
        rows,
        final_state: x,
        dt: scenario.spec.dt(),
    })
}

/// Summary printed after a simulation.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub model: String,
    pub backend: String,
    pub open_loop: bool,
    pub steps: usize,
    pub horizon: usize,
    pub final_state: Vec<f64>,
    pub final_distance_to_ref: f64,
    pub iterations_min: usize,
    pub iterations_max: usize,
    pub max_gap: f64,
    pub max_abs_input: f64,
    pub certified_prep_flops: u64,
    pub certified_feedback_flops: u64,
    pub certified_time_s: f64,
    pub max_prep_wall_s: f64,
    pub max_feedback_wall_s: f64,
    /// Measured feedback time × rate / certified feedback flops, worst step.
    pub measured_over_certified: f64,
}

impl SimSummary {
    pub fn new(scenario: &Scenario, trace: &SimTrace, opts: SimOptions) -> Self {
        let cert = scenario.certificate();
        let target = scenario.x_ref.at(scenario.steps);
        let rows = &trace.rows;
        let max_f = |f: fn(&TraceRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        let max_fb = max_f(|r| r.fb_wall_s);
        let ratio = if opts.open_loop || cert.feedback_flops == 0 {
            0.0
        } else {
            max_fb * scenario.flops_per_sec / cert.feedback_flops as f64
        };
        if !opts.open_loop && opts.record_wall_times {
            log::info!(
                "worst feedback wall time {max_fb:.3e}s; certified {:.3e}s at {:.2e} flops/s (factor {ratio:.2})",
                cert.feedback_flops as f64 / scenario.flops_per_sec,
                scenario.flops_per_sec
            );
        }
        Self {
            model: scenario.model.name().to_string(),
            backend: format!("{:?}", opts.backend).to_lowercase(),
            open_loop: opts.open_loop,
            steps: rows.len(),
            horizon: scenario.horizon,
            final_state: trace.final_state.iter().copied().collect(),
            final_distance_to_ref: (&trace.final_state - target).norm(),
            iterations_min: rows.iter().map(|r| r.iters).min().unwrap_or(0),
            iterations_max: rows.iter().map(|r| r.iters).max().unwrap_or(0),
            max_gap: max_f(|r| r.gap),
            max_abs_input: rows
                .iter()
                .flat_map(|r| r.u.iter())
                .fold(0.0, |m, u| m.max(u.abs())),
            certified_prep_flops: cert.prep_flops,
            certified_feedback_flops: cert.feedback_flops,
            certified_time_s: cert.estimated_time_s,
            max_prep_wall_s: max_f(|r| r.prep_wall_s),
            max_feedback_wall_s: max_fb,
            measured_over_certified: ratio,
        }
    }
}
