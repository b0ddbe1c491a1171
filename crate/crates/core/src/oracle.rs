//! Brute-force reference computations for cross-checking the incremental
//! posterior. These paths rebuild every matrix from scratch and share nothing
//! with `gp` beyond kernel evaluation. They are slow on purpose.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandit::{Policy, RunRecord};
use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::kernel::{kernel_matrix, kernel_vector, KernelSpec};

/// Largest dictionary the oracles accept.
pub const MAX_ORACLE_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleReport {
    pub max_abs_mean_error: f64,
    pub max_abs_var_error: f64,
    pub info_gain_error: f64,
    pub bound_satisfied: bool,
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "max_abs_mean_error={:e}", self.max_abs_mean_error)?;
        writeln!(f, "max_abs_var_error={:e}", self.max_abs_var_error)?;
        writeln!(f, "info_gain_error={:e}", self.info_gain_error)?;
        write!(f, "bound_satisfied={}", self.bound_satisfied)
    }
}

fn check_scale(m: usize) -> Result<()> {
    if m > MAX_ORACLE_POINTS {
        return Err(Error::Input(format!(
            "oracle limited to {MAX_ORACLE_POINTS} points, got {m}"
        )));
    }
    Ok(())
}

/// Mean and variance by explicitly inverting `K + σ²I`.
pub fn dense_posterior<P: AsRef<[f64]>>(
    spec: &KernelSpec,
    noise_variance: f64,
    points: &[P],
    targets: &[f64],
    x: &[f64],
) -> Result<(f64, f64)> {
    check_scale(points.len())?;
    let prior = crate::kernel::kernel_eval(spec, x, x)?;
    if points.is_empty() {
        return Ok((0.0, prior));
    }
    let m = points.len();
    let a = kernel_matrix(spec, points)? + DMatrix::identity(m, m) * noise_variance;
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Numerical("K + σ²I is singular".into()))?;
    let k = DVector::from_vec(kernel_vector(spec, points, x)?);
    let y = DVector::from_column_slice(targets);
    let mean = k.dot(&(&inv * &y));
    let variance = prior - k.dot(&(&inv * &k));
    Ok((mean, variance))
}

/// ½ ln det(I + σ⁻²K) from the eigenvalues of K.
pub fn logdet_information_gain<P: AsRef<[f64]>>(
    spec: &KernelSpec,
    noise_variance: f64,
    points: &[P],
) -> Result<f64> {
    check_scale(points.len())?;
    if points.is_empty() {
        return Ok(0.0);
    }
    let eig = kernel_matrix(spec, points)?.symmetric_eigenvalues();
    Ok(0.5 * eig.iter().map(|l| (l / noise_variance).ln_1p()).sum::<f64>())
}

/// Smallest index of the maximum score, by exhaustive scan.
pub fn exhaustive_argmax(scores: &[f64]) -> Option<usize> {
    let best = scores.iter().copied().filter(|s| !s.is_nan()).reduce(f64::max)?;
    scores.iter().position(|&s| s == best)
}

/// Empirical model-order bound: loop-admitted points ≤ min{⌈Ĥ/ε⌉ + 1, T}.
pub fn check_model_order_bound(record: &RunRecord, epsilon: f64) -> Result<bool> {
    if !(epsilon > 0.0) {
        return Err(Error::Input(format!("the bound needs ε > 0, got {epsilon}")));
    }
    if !matches!(record.policy, Policy::Compressed { .. }) {
        return Err(Error::Input(format!(
            "the bound applies to compressed runs, not {}",
            record.policy.kind_name()
        )));
    }
    let order = record.model_order_excluding_warm_start() as f64;
    let capacity = (record.admitted_entropy_sum / epsilon).ceil() + 1.0;
    Ok(order <= capacity.min(record.horizon() as f64))
}

/// Σ σ²_before(x) over every appended point ≤ 2G / ln(1 + σ⁻²), G the final information gain.
pub fn variance_info_gain_bound(record: &RunRecord) -> bool {
    let noise = record.snapshot.noise_variance;
    let variance_sum: f64 = record.warm_start_variances.iter().sum::<f64>()
        + record
            .steps
            .iter()
            .filter(|s| s.admitted)
            .map(|s| s.posterior_variance)
            .sum::<f64>();
    variance_sum <= 2.0 * record.information_gain / (1.0 / noise).ln_1p() + 1e-12
}

/// Cross-checks incremental predictions and information gain against the
/// dense formulas on random dictionaries.
pub fn verify_posterior(
    spec: &KernelSpec,
    noise_variance: f64,
    dim: usize,
    dictionary_size: usize,
    probes: usize,
    trials: usize,
    seed: u64,
) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        bound_satisfied: true,
        ..Default::default()
    };
    for _ in 0..trials {
        let points: Vec<Vec<f64>> = (0..dictionary_size)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..dictionary_size).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut gp = GpPosterior::new(*spec, noise_variance)?;
        for (p, y) in points.iter().zip(&targets) {
            gp.append_point(p, *y)?;
        }
        for _ in 0..probes {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..10.0)).collect();
            let (mean, var) = dense_posterior(spec, noise_variance, &points, &targets, &x)?;
            let p = gp.predict(&x)?;
            report.max_abs_mean_error = report.max_abs_mean_error.max((p.mean - mean).abs());
            report.max_abs_var_error = report.max_abs_var_error.max((p.variance - var).abs());
        }
        let logdet = logdet_information_gain(spec, noise_variance, &points)?;
        report.info_gain_error = report.info_gain_error.max((gp.information_gain() - logdet).abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn unit() -> KernelSpec {
        KernelSpec::squared_exponential(1.0).unwrap()
    }

    #[test]
    fn prior_and_single_point() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(dense_posterior(&unit(), 0.001, &empty, &[], &[1.0]).unwrap(), (0.0, 1.0));
        let (m, v) = dense_posterior(&unit(), 0.001, &[vec![0.0]], &[2.0], &[0.0]).unwrap();
        assert!((m - 1.998_002).abs() < 1e-6);
        assert!((v - 0.000_999_001).abs() < 1e-9);
    }

    #[test]
    fn logdet_cases() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(logdet_information_gain(&unit(), 0.001, &empty).unwrap(), 0.0);
        let g = logdet_information_gain(&unit(), 0.001, &[vec![0.0]]).unwrap();
        assert!((g - 0.5 * 1001f64.ln()).abs() < 1e-10);
        // Two far-apart points are independent: twice the single-point gain.
        let g2 = logdet_information_gain(&unit(), 1.0, &[vec![0.0], vec![100.0]]).unwrap();
        assert!((g2 - LN_2).abs() < 1e-12);
    }

    #[test]
    fn oversized_dictionary_is_refused() {
        let pts: Vec<Vec<f64>> = (0..201).map(|i| vec![i as f64]).collect();
        assert!(logdet_information_gain(&unit(), 0.1, &pts).is_err());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(exhaustive_argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(exhaustive_argmax(&[]), None);
    }

    #[test]
    fn incremental_matches_dense() {
        let r = verify_posterior(&unit(), 0.001, 1, 50, 100, 3, 1).unwrap();
        assert!(r.max_abs_mean_error <= 1e-8, "{r}");
        assert!(r.max_abs_var_error <= 1e-8, "{r}");
        assert!(r.info_gain_error <= 1e-6, "{r}");
    }

    #[test]
    fn single_step_variance_bound_algebra() {
        // v ≤ ln(1 + v/σ²) / ln(1 + 1/σ²) holds on (0, 1] by concavity.
        for noise in [1e-3, 0.1, 1.0] {
            for i in 1..=100 {
                let v = i as f64 / 100.0;
                assert!(v <= (v / noise).ln_1p() / (1.0 / noise).ln_1p() + 1e-15);
            }
        }
    }
}
