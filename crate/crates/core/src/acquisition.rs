//! Acquisition scores, exploration schedules and argmax selection.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{ConfigIssue, Error, Result};
use crate::gp::{GpPosterior, Prediction};
use crate::objectives::CandidateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AcquisitionKind {
    Ucb,
    Ei,
    Mpi,
}

impl AcquisitionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AcquisitionKind::Ucb => "ucb",
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Mpi => "mpi",
        }
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AcquisitionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ucb" => Ok(AcquisitionKind::Ucb),
            "ei" => Ok(AcquisitionKind::Ei),
            "mpi" => Ok(AcquisitionKind::Mpi),
            other => Err(format!("unknown acquisition `{other}` (expected ucb, ei or mpi)")),
        }
    }
}

/// Exploration schedule β_t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    /// `2 ln(X t² π² / (6δ))` for a decision set of `cardinality` X.
    FiniteSet { cardinality: usize, delta: f64 },
    /// `2 ln(4π_t/δ) + 4d ln(d t b r sqrt(ln(4da/δ)))` with `π_t = π²t²/6`.
    ContinuousSet {
        delta: f64,
        dim: f64,
        a: f64,
        b: f64,
        r: f64,
    },
    Constant(f64),
}

fn positive(key: &str, v: f64, issues: &mut Vec<ConfigIssue>) {
    if !(v.is_finite() && v > 0.0) {
        issues.push(ConfigIssue {
            key: key.into(),
            message: format!("must be a positive finite number, got {v}"),
        });
    }
}

fn failure_probability(delta: f64, issues: &mut Vec<ConfigIssue>) {
    if !(delta > 0.0 && delta < 1.0) {
        issues.push(ConfigIssue {
            key: "beta.delta".into(),
            message: format!("failure probability must lie in (0, 1), got {delta}"),
        });
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        match *self {
            BetaSchedule::FiniteSet { cardinality, delta } => {
                failure_probability(delta, &mut issues);
                if cardinality == 0 {
                    issues.push(ConfigIssue {
                        key: "beta.cardinality".into(),
                        message: "decision set must be non-empty".into(),
                    });
                }
            }
            BetaSchedule::ContinuousSet { delta, dim, a, b, r } => {
                failure_probability(delta, &mut issues);
                positive("beta.d", dim, &mut issues);
                positive("beta.a", a, &mut issues);
                positive("beta.b", b, &mut issues);
                positive("beta.r", r, &mut issues);
                if issues.is_empty() && (4.0 * dim * a / delta).ln() <= 0.0 {
                    issues.push(ConfigIssue {
                        key: "beta.a".into(),
                        message: "ln(4·d·a/δ) must be positive".into(),
                    });
                }
            }
            BetaSchedule::Constant(v) => positive("beta.value", v, &mut issues),
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::Input("β_t is defined for t ≥ 1".into()));
        }
        self.validate()?;
        let tf = t as f64;
        let value = match *self {
            BetaSchedule::FiniteSet { cardinality, delta } => {
                2.0 * (cardinality as f64 * tf * tf * PI * PI / (6.0 * delta)).ln()
            }
            BetaSchedule::ContinuousSet { delta, dim, a, b, r } => {
                let pi_t = PI * PI * tf * tf / 6.0;
                let inner = (4.0 * dim * a / delta).ln().sqrt();
                2.0 * (4.0 * pi_t / delta).ln() + 4.0 * dim * (dim * tf * b * r * inner).ln()
            }
            BetaSchedule::Constant(v) => v,
        };
        if !(value > 0.0) {
            return Err(Error::Config(vec![ConfigIssue {
                key: "beta".into(),
                message: format!("schedule yields non-positive β_{t} = {value}"),
            }]));
        }
        Ok(value)
    }
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Φ(z) through the complementary error function, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// τ(z) = zΦ(z) + φ(z).
pub fn tau(z: f64) -> f64 {
    z * std_normal_cdf(z) + std_normal_pdf(z)
}

pub fn ucb_value(p: Prediction, beta: f64) -> f64 {
    p.mean + beta.sqrt() * p.std_dev()
}

/// Closed-form `σφ(z) + (μ − ref)Φ(z)`, zero when σ = 0. Shared by EI and MPI.
pub fn improvement_value(p: Prediction, reference: f64) -> f64 {
    if p.variance <= 0.0 {
        return 0.0;
    }
    let sd = p.std_dev();
    let gap = p.mean - reference;
    let z = gap / sd;
    sd * std_normal_pdf(z) + gap * std_normal_cdf(z)
}

pub fn ucb_score(gp: &GpPosterior, x: &[f64], beta: f64) -> Result<f64> {
    Ok(ucb_value(gp.predict(x)?, beta))
}

pub fn ei_score(gp: &GpPosterior, x: &[f64], y_max: f64) -> Result<f64> {
    Ok(improvement_value(gp.predict(x)?, y_max))
}

pub fn mpi_score(gp: &GpPosterior, x: &[f64], xi: f64) -> Result<f64> {
    Ok(improvement_value(gp.predict(x)?, xi))
}

pub fn score(p: Prediction, kind: AcquisitionKind, beta: f64, incumbent: f64) -> f64 {
    match kind {
        AcquisitionKind::Ucb => ucb_value(p, beta),
        AcquisitionKind::Ei | AcquisitionKind::Mpi => improvement_value(p, incumbent),
    }
}

/// Index of the first maximum; NaN scores never win.
pub fn first_argmax(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            None if !s.is_nan() => best = Some((i, s)),
            Some((_, b)) if s > b => best = Some((i, s)),
            _ => {}
        }
    }
    best
}

/// Scores every prediction and returns `(index, score)` of the smallest-index maximum.
pub fn select_from_predictions(
    predictions: &[Prediction],
    kind: AcquisitionKind,
    beta: f64,
    incumbent: f64,
) -> Result<(usize, f64)> {
    if predictions.is_empty() {
        return Err(Error::Input("candidate set is empty".into()));
    }
    let scores: Vec<f64> = predictions
        .iter()
        .map(|&p| score(p, kind, beta, incumbent))
        .collect();
    first_argmax(&scores).ok_or_else(|| Error::Numerical("every acquisition score is NaN".into()))
}

/// `incumbent` is y_max for EI and ξ for MPI; `beta` is used by UCB only.
pub fn select_action(
    gp: &GpPosterior,
    candidates: &CandidateSet,
    kind: AcquisitionKind,
    beta: f64,
    incumbent: f64,
) -> Result<usize> {
    let predictions = candidates
        .points()
        .iter()
        .map(|x| gp.predict(x))
        .collect::<Result<Vec<_>>>()?;
    select_from_predictions(&predictions, kind, beta, incumbent).map(|(i, _)| i)
}

/// ξ for MPI: the largest posterior mean over the candidate set.
pub fn max_mean(predictions: &[Prediction]) -> f64 {
    predictions
        .iter()
        .map(|p| p.mean)
        .fold(f64::NEG_INFINITY, f64::max)
}
