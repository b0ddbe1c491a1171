//! Positive-definite covariance kernels.
//!
//! Only the squared-exponential family ships:
//!
//! ```text
//! κ(x, x′) = s · exp(−‖x − x′‖² / (2θ²))
//! ```
//!
//! with lengthscale θ and output scale s (default 1, which keeps κ ≤ 1).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "squared_exponential" | "squared-exponential" | "rbf" => {
                Ok(KernelFamily::SquaredExponential)
            }
            other => Err(format!("unknown kernel family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub output_scale: f64,
}

impl KernelSpec {
    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        let spec = KernelSpec {
            family: KernelFamily::SquaredExponential,
            lengthscale,
            output_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_output_scale(mut self, output_scale: f64) -> Result<Self> {
        self.output_scale = output_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            issues.push(crate::error::ConfigIssue {
                key: "kernel.lengthscale".into(),
                message: format!("must be a positive finite number, got {}", self.lengthscale),
            });
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            issues.push(crate::error::ConfigIssue {
                key: "kernel.output_scale".into(),
                message: format!("must be a positive finite number, got {}", self.output_scale),
            });
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    /// Prior variance κ(x, x), identical for every x.
    pub fn prior_variance(&self) -> f64 {
        self.output_scale
    }

    /// Kernel value without the dimension check; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                self.output_scale * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }
}

fn check_dims(x: &[f64], x2: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != x2.len() {
        return Err(Error::Input(format!(
            "kernel arguments must share a positive dimension, got {} and {}",
            x.len(),
            x2.len()
        )));
    }
    Ok(())
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dims(x, x2)?;
    Ok(spec.eval_unchecked(x, x2))
}

/// Empirical kernel map k_D(x): one entry per dictionary point.
pub fn kernel_vector<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P], x: &[f64]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|p| kernel_eval(spec, p.as_ref(), x))
        .collect()
}

/// Gram matrix over `points`. Filled from the lower triangle so it is exactly symmetric.
pub fn kernel_matrix<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P]) -> Result<DMatrix<f64>> {
    let m = points.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = kernel_eval(spec, points[i].as_ref(), points[j].as_ref())?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}
