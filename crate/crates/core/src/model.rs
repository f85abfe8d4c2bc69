//! Continuous-time dynamics `ẋ = f(x, u)` and the built-in models.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flops charged per evaluation of `f`, `f_x` and `f_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlops {
    pub f: u64,
    pub f_x: u64,
    pub f_u: u64,
}

/// A continuous-time model with analytic Jacobians.
///
/// Implementations must be pure: the same arguments always yield the same
/// result, and the declared flop counts do not depend on the evaluation point.
pub trait Dynamics: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn flux(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `∂f/∂x`, `n_x`×`n_x`.
    fn state_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    /// `∂f/∂u`, `n_x`×`n_u`.
    fn input_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    fn flops(&self) -> ModelFlops;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzParams {
    #[serde(default = "LorenzParams::default_sigma")]
    pub sigma: f64,
    #[serde(default = "LorenzParams::default_rho")]
    pub rho: f64,
    #[serde(default = "LorenzParams::default_beta")]
    pub beta: f64,
}

impl LorenzParams {
    fn default_sigma() -> f64 {
        10.0
    }
    fn default_rho() -> f64 {
        28.0
    }
    fn default_beta() -> f64 {
        8.0 / 3.0
    }

    /// The non-trivial equilibria `(±√(β(ρ−1)), ±√(β(ρ−1)), ρ−1)`.
    pub fn equilibria(&self) -> [Vector3<f64>; 2] {
        let c = (self.beta * (self.rho - 1.0)).sqrt();
        [
            Vector3::new(c, c, self.rho - 1.0),
            Vector3::new(-c, -c, self.rho - 1.0),
        ]
    }
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: Self::default_sigma(),
            rho: Self::default_rho(),
            beta: Self::default_beta(),
        }
    }
}

/// Lorenz flux with affine forcing on each coordinate.
pub fn lorenz_f(state: &Vector3<f64>, input: &Vector3<f64>, p: &LorenzParams) -> Vector3<f64> {
    let (x, y, z) = (state[0], state[1], state[2]);
    Vector3::new(
        p.sigma * (y - x) + input[0],
        x * (p.rho - z) - y + input[1],
        x * y - p.beta * z + input[2],
    )
}

/// Returns `(f_x, f_u)`; `f_u` is the identity.
pub fn lorenz_jacobians(
    state: &Vector3<f64>,
    p: &LorenzParams,
) -> (nalgebra::Matrix3<f64>, nalgebra::Matrix3<f64>) {
    let (x, y, z) = (state[0], state[1], state[2]);
    #[rustfmt::skip]
    let fx = nalgebra::Matrix3::new(
        -p.sigma, p.sigma, 0.0,
        p.rho - z, -1.0, -x,
        y, x, -p.beta,
    );
    (fx, nalgebra::Matrix3::identity())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Lorenz {
    pub params: LorenzParams,
}

impl Lorenz {
    pub fn new(params: LorenzParams) -> Self {
        Self { params }
    }
}

fn as_vec3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

impl Dynamics for Lorenz {
    fn name(&self) -> &str {
        "lorenz"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        3
    }

    fn flux(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let f = lorenz_f(&as_vec3(x), &as_vec3(u), &self.params);
        DVector::from_column_slice(f.as_slice())
    }

    fn state_jacobian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let (fx, _) = lorenz_jacobians(&as_vec3(x), &self.params);
        DMatrix::from_column_slice(3, 3, fx.as_slice())
    }

    fn input_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }

    // Only the four state-dependent entries of f_x cost anything.
    fn flops(&self) -> ModelFlops {
        ModelFlops {
            f: 10,
            f_x: 4,
            f_u: 0,
        }
    }
}

/// Linear time-invariant dynamics `ẋ = A x + B u`.
///
/// RK4 discretizations of these have closed forms, which the tests use as
/// oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    name: String,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "linear model needs square A and matching B, got A {}x{}, B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self {
            name: name.into(),
            a,
            b,
        })
    }

    /// Position/velocity with a force input: `ṗ = v`, `v̇ = u`.
    pub fn double_integrator() -> Self {
        Self {
            name: "double_integrator".into(),
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl Dynamics for LinearModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn flux(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    fn state_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn input_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }

    fn flops(&self) -> ModelFlops {
        let (nx, nu) = (self.state_dim() as u64, self.input_dim() as u64);
        ModelFlops {
            f: 2 * nx * nx + 2 * nx * nu - nx,
            f_x: 0,
            f_u: 0,
        }
    }
}

/// `model` section of a config file: a registered model name plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<Box<dyn Dynamics>> {
        match self.name.as_str() {
            "lorenz" => {
                let params = match &self.params {
                    None => LorenzParams::default(),
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|e| Error::config("model.params", e.to_string()))?,
                };
                Ok(Box::new(Lorenz::new(params)))
            }
            "double_integrator" => {
                if let Some(v) = &self.params {
                    if !(v.is_null() || v.as_object().is_some_and(|o| o.is_empty())) {
                        return Err(Error::config(
                            "model.params",
                            "double_integrator takes no parameters",
                        ));
                    }
                }
                Ok(Box::new(LinearModel::double_integrator()))
            }
            other => Err(Error::config(
                "model.name",
                format!("unknown model `{other}` (expected `lorenz` or `double_integrator`)"),
            )),
        }
    }
}
