//! Analytic flop certificate for one sampling instant.
//!
//! Every count is a closed-form polynomial in the problem dimensions, so the
//! certificate is available before the controller ever runs. The fractional
//! coefficients of the Riccati count are carried as exact thirds and only the
//! final value is rounded to the nearest integer.

use serde::Serialize;

use crate::ipm::iteration_count;
use crate::model::ModelFlops;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemDims {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub integration_steps: usize,
    pub model_flops: ModelFlops,
    pub eps: f64,
}

impl ProblemDims {
    /// QP dimension `N n_u`.
    pub fn n(&self) -> usize {
        self.horizon * self.nu
    }

    pub fn iterations(&self) -> usize {
        iteration_count(self.n(), self.eps)
    }

    fn ints(&self) -> Ints {
        Ints {
            n: self.horizon as u128,
            x: self.nx as u128,
            u: self.nu as u128,
            s: self.integration_steps as u128,
            mf: self.model_flops.f as u128,
            mfx: self.model_flops.f_x as u128,
            mfu: self.model_flops.f_u as u128,
        }
    }
}

struct Ints {
    n: u128,
    x: u128,
    u: u128,
    s: u128,
    mf: u128,
    mfx: u128,
    mfu: u128,
}

fn to_u64(v: u128) -> u64 {
    u64::try_from(v).expect("flop count overflows u64")
}

fn round_thirds(thirds: u128) -> u128 {
    (thirds + 1) / 3
}

/// Sensitivity propagation over the whole horizon (RK4 with chain rule).
pub fn flops_sensitivities(d: &ProblemDims) -> u64 {
    let Ints { n, x, u, s, mf, mfx, mfu } = d.ints();
    let per_step = 4 * mf + 4 * mfx + 4 * mfu + 8 * x * x * x + 8 * x * x * u + 10 * x * x
        + 10 * x * u
        + 16 * x;
    to_u64(n * (x + u + s * per_step + x * x + x * u + x))
}

// Three times the per-solve Riccati count.
fn riccati_thirds(d: &ProblemDims) -> u128 {
    let Ints { n, x, u, .. } = d.ints();
    n * (7 * x * x * x + 12 * x * x * u + 6 * x * u * u + u * u * u)
        + 3 * n * (8 * x * x + 8 * x * u + 2 * u * u)
}

/// One factorized Riccati solve, rounded to the nearest integer.
pub fn flops_riccati(d: &ProblemDims) -> u64 {
    to_u64(round_thirds(riccati_thirds(d)))
}

/// Costs of the condensing quantities. `hessian` is what forming `H` would
/// cost; the controller never pays it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CondensingFlops {
    pub scaled_dynamics: u64,
    pub s: u64,
    pub hessian: u64,
    pub g1: u64,
    pub g2: u64,
    pub h: u64,
}

pub fn flops_condensing(d: &ProblemDims) -> CondensingFlops {
    let Ints { n, x, u, .. } = d.ints();
    CondensingFlops {
        scaled_dynamics: to_u64(n * (3 * x * u + x)),
        s: to_u64((n * n - n) * x * u * u),
        hessian: to_u64((2 * n * n * n + n * n + n) * x * x * u + n * u * u),
        g1: to_u64(2 * n * x + 2 * (n - 1) * x * x),
        g2: to_u64(x + 2 * n * x * x),
        h: to_u64(2 * n * x * x + (n * n + n) * x * u + (n * n - n) * x + u + n * (2 * u + u * u)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub dims: ProblemDims,
    pub iterations: usize,
    /// Preparation steps 1–3: shift, sensitivities, scaling/`S`/`g₁`.
    pub prep_steps: [u64; 3],
    /// Feedback steps 1–7: `g₂`/`h`, zero test, initialization, IPM loop,
    /// `Δx_0`, recovery, full step.
    pub feedback_steps: [u64; 7],
    pub prep_flops: u64,
    pub feedback_flops: u64,
    pub flops_per_sec: f64,
    pub estimated_time_s: f64,
}

impl Certificate {
    pub fn total_flops(&self) -> u64 {
        self.prep_flops + self.feedback_flops
    }
}

/// Evaluates the per-step counts of both phases and converts to time.
pub fn certify(d: &ProblemDims, flops_per_sec: f64) -> Certificate {
    assert!(flops_per_sec > 0.0, "processing rate must be positive");
    let Ints { n, x, u, mf, .. } = d.ints();
    let iterations = d.iterations();

    let prep_steps = [
        to_u64(n * x + n * u + mf),
        flops_sensitivities(d),
        to_u64(
            u + n * u + n * (2 * x * u + x) + (n * n - n) * x * u * u + 2 * n * x
                + 2 * (n - 1) * x * x,
        ),
    ];

    let loop_thirds = iterations as u128
        * (3 + riccati_thirds(d) + 3 * (15 * n * u + 5 * x));
    let feedback_steps = [
        to_u64(x + 4 * n * x * x + (n * n + n) * x * u + (n * n - n) * x + u + n * (2 * u + u * u)),
        to_u64(n * u),
        to_u64(5 * n * u + 3),
        to_u64(round_thirds(loop_thirds)),
        to_u64(x),
        to_u64(n * (2 * u + x * x + x * u + 2 * x)),
        to_u64((n + 1) * x + n * u),
    ];

    let prep_flops = prep_steps.iter().sum();
    let feedback_flops = feedback_steps.iter().sum();
    Certificate {
        dims: *d,
        iterations,
        prep_steps,
        feedback_steps,
        prep_flops,
        feedback_flops,
        flops_per_sec,
        estimated_time_s: (prep_flops + feedback_flops) as f64 / flops_per_sec,
    }
}

/// Rounds to three significant figures, e.g. `40515 → 40500`.
pub fn three_significant(v: u64) -> f64 {
    if v == 0 {
        return 0.0;
    }
    let mag = (v as f64).log10().floor() as i32 - 2;
    let unit = 10f64.powi(mag);
    (v as f64 / unit).round() * unit
}
