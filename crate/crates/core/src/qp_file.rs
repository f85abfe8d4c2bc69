//! JSON box-QP instances for the `solve-qp` subcommand.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::{solve_box_qp, DenseBackend};

/// `min ½zᵀHz + hᵀz` subject to `−1 ≤ z ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxQpInstance {
    #[serde(rename = "H")]
    pub hessian: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    pub gradient: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxQpReport {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub objective: f64,
}

impl BoxQpInstance {
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

    /// Checks shape, finiteness and symmetry; returns `(H, h)`.
    pub fn matrices(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.gradient.len();
        if n == 0 {
            return Err(Error::config("h", "must not be empty"));
        }
        if self.hessian.len() != n {
            return Err(Error::config("H", format!("expected {n} rows, got {}", self.hessian.len())));
        }
        for (i, row) in self.hessian.iter().enumerate() {
            if row.len() != n {
                return Err(Error::config(format!("H[{i}]"), format!("expected {n} entries")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        let h = DMatrix::from_fn(n, n, |i, j| self.hessian[i][j]);
        let g = DVector::from_column_slice(&self.gradient);
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::config("H", "entries must be finite"));
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::config("h", "entries must be finite"));
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::config("H", "must be symmetric"));
        }
        Ok((h, g))
    }

    pub fn solve(&self) -> Result<BoxQpReport> {
        let (h, g) = self.matrices()?;
        let sol = solve_box_qp(&g, self.eps, DenseBackend::new(h.clone())?)?;
        let objective = 0.5 * sol.z.dot(&(&h * &sol.z)) + g.dot(&sol.z);
        Ok(BoxQpReport {
            z: sol.z.iter().copied().collect(),
            iterations: sol.iterations,
            gap: sol.gap,
            objective,
        })
    }
}
