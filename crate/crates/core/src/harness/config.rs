//! Experiment configuration: flat `key = value` lines with section-prefixed keys.
//!
//! ```text
//! # Example1D, compressed against dense, UCB
//! objective = example1d
//! bandit.horizon = 300
//! bandit.seeds = 1,2,3,4,5
//! policies = compressed:ucb, dense:ucb, bkb:ucb
//! compressed.epsilon = 1e-4
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Every unknown key,
//! malformed value and range violation is reported in one error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::acquisition::AcquisitionKind;
use crate::bandit::Policy;
use crate::error::{ConfigIssue, Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};

pub const DEFAULT_LENGTHSCALE: f64 = 1.0;
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.001;
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Failure probability; the bounds hold with confidence 0.9.
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_BKB_SCALE: f64 = 1.0;
pub const DEFAULT_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

const KNOWN_KEYS: &[&str] = &[
    "objective",
    "objective.path",
    "objective.a",
    "objective.b",
    "objective.noise_variance",
    "candidates.kind",
    "candidates.points_per_dim",
    "candidates.count",
    "candidates.lower",
    "candidates.upper",
    "candidates.seed",
    "kernel.family",
    "kernel.lengthscale",
    "kernel.output_scale",
    "gp.noise_variance",
    "bandit.horizon",
    "bandit.init_count",
    "bandit.acquisition",
    "bandit.seeds",
    "beta.kind",
    "beta.delta",
    "beta.value",
    "beta.a",
    "beta.b",
    "beta.r",
    "compressed.epsilon",
    "bkb.scale",
    "bkb.inverse",
    "policies",
    "output.dir",
    "run.workers",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Example1D,
    Rosenbrock { a: f64, b: f64 },
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    Grid,
    Random,
}

/// Candidate descriptor before objective-specific defaults are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDescriptor {
    pub kind: CandidateKind,
    pub points_per_dim: usize,
    pub count: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    FiniteSet { delta: f64 },
    ContinuousSet { delta: f64, a: f64, b: f64, r: f64 },
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub label: String,
    pub policy: Policy,
    pub acquisition: AcquisitionKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub objective: ObjectiveSpec,
    /// Observation noise of the simulator, independent of the GP's noise model.
    pub objective_noise_variance: f64,
    /// Ignored for tabulated objectives.
    pub candidates: CandidateDescriptor,
    pub policies: Vec<PolicySpec>,
    pub horizon: usize,
    pub noise_variance: f64,
    pub kernel: KernelSpec,
    pub beta: BetaSpec,
    /// `None` means `2^d`.
    pub init_count: Option<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentSpec {
    /// Keeps only the policies whose label appears in `labels`.
    pub fn filter_policies(&mut self, labels: &[String]) -> Result<()> {
        let unknown: Vec<ConfigIssue> = labels
            .iter()
            .filter(|l| !self.policies.iter().any(|p| &p.label == *l))
            .map(|l| ConfigIssue {
                key: "policies".into(),
                message: format!("filter names unknown policy `{l}`"),
            })
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(unknown));
        }
        self.policies.retain(|p| labels.contains(&p.label));
        Ok(())
    }
}

struct Reader<'a> {
    values: &'a BTreeMap<String, (usize, String)>,
    issues: Vec<ConfigIssue>,
}

impl Reader<'_> {
    fn issue(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => default,
            Some(s) => match s.parse::<T>() {
                Ok(v) => v,
                Err(e) => {
                    let s = s.to_string();
                    self.issue(key, format!("cannot parse `{s}`: {e}"));
                    default
                }
            },
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key)?.to_string();
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part.parse::<T>() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.issue(key, format!("cannot parse `{part}`: {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.issue(key, format!("must be a positive finite number, got {v}"));
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentSpec> {
    let mut values = BTreeMap::new();
    let mut issues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ConfigIssue {
                key: format!("line {}", i + 1),
                message: format!("expected `key = value`, found `{line}`"),
            });
            continue;
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            issues.push(ConfigIssue {
                key: key.clone(),
                message: format!("unknown key (line {})", i + 1),
            });
            continue;
        }
        if let Some((first, _)) = values.insert(key.clone(), (i + 1, value.trim().to_string())) {
            issues.push(ConfigIssue {
                key,
                message: format!("set twice (lines {first} and {})", i + 1),
            });
        }
    }

    let mut r = Reader {
        values: &values,
        issues,
    };

    let objective = match r.raw("objective").map(str::to_ascii_lowercase).as_deref() {
        Some("example1d") => ObjectiveSpec::Example1D,
        Some("rosenbrock") => ObjectiveSpec::Rosenbrock {
            a: r.parse("objective.a", 1.0),
            b: r.parse("objective.b", 10.0),
        },
        Some("tabulated") => match r.raw("objective.path") {
            Some(p) => ObjectiveSpec::Tabulated {
                path: base_dir.join(p),
            },
            None => {
                r.issue("objective.path", "required for tabulated objectives");
                ObjectiveSpec::Example1D
            }
        },
        Some(other) => {
            let other = other.to_string();
            r.issue("objective", format!("unknown objective `{other}` (example1d, rosenbrock, tabulated)"));
            ObjectiveSpec::Example1D
        }
        None => {
            r.issue("objective", "required key is missing");
            ObjectiveSpec::Example1D
        }
    };
    if let ObjectiveSpec::Rosenbrock { a, b } = objective {
        if !a.is_finite() {
            r.issue("objective.a", "must be finite");
        }
        if !b.is_finite() {
            r.issue("objective.b", "must be finite");
        }
    }

    let (default_bounds, default_ppd): (Vec<(f64, f64)>, usize) = match objective {
        ObjectiveSpec::Rosenbrock { .. } => (vec![(-2.0, 2.0); 2], 41),
        _ => (vec![(0.0, 10.0)], 101),
    };
    let kind = match r.raw("candidates.kind").map(str::to_ascii_lowercase).as_deref() {
        None | Some("grid") => CandidateKind::Grid,
        Some("random") => CandidateKind::Random,
        Some(other) => {
            let other = other.to_string();
            r.issue("candidates.kind", format!("unknown kind `{other}` (grid, random)"));
            CandidateKind::Grid
        }
    };
    let lower = r.list::<f64>("candidates.lower");
    let upper = r.list::<f64>("candidates.upper");
    let bounds = match (lower, upper) {
        (None, None) => default_bounds,
        (Some(lo), Some(hi)) if lo.len() == hi.len() => lo.into_iter().zip(hi).collect(),
        (Some(_), Some(_)) => {
            r.issue("candidates.upper", "must have as many entries as candidates.lower");
            default_bounds
        }
        _ => {
            r.issue("candidates.lower", "candidates.lower and candidates.upper go together");
            default_bounds
        }
    };
    let expected_dim = match objective {
        ObjectiveSpec::Example1D => Some(1),
        ObjectiveSpec::Rosenbrock { .. } => Some(2),
        ObjectiveSpec::Tabulated { .. } => None,
    };
    if let Some(d) = expected_dim {
        if bounds.len() != d {
            r.issue("candidates.lower", format!("objective has dimension {d}, bounds have {}", bounds.len()));
        }
    }
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            r.issue("candidates.lower", format!("dimension {d}: need lo < hi, got [{lo}, {hi}]"));
        }
    }
    let candidates = CandidateDescriptor {
        kind,
        points_per_dim: r.parse("candidates.points_per_dim", default_ppd),
        count: r.parse("candidates.count", 100),
        bounds,
        seed: r.parse("candidates.seed", 0),
    };
    if candidates.points_per_dim == 0 {
        r.issue("candidates.points_per_dim", "must be at least 1");
    }
    if candidates.count == 0 {
        r.issue("candidates.count", "must be at least 1");
    }

    let family: KernelFamily = match r.raw("kernel.family") {
        None => KernelFamily::SquaredExponential,
        Some(s) => s.parse().unwrap_or_else(|e: String| {
            r.issue("kernel.family", e);
            KernelFamily::SquaredExponential
        }),
    };
    let lengthscale = r.parse("kernel.lengthscale", DEFAULT_LENGTHSCALE);
    let output_scale = r.parse("kernel.output_scale", 1.0);
    r.positive("kernel.lengthscale", lengthscale);
    r.positive("kernel.output_scale", output_scale);
    let kernel = KernelSpec {
        family,
        lengthscale,
        output_scale,
    };

    let noise_variance = r.parse("gp.noise_variance", DEFAULT_NOISE_VARIANCE);
    r.positive("gp.noise_variance", noise_variance);
    let objective_noise_variance = r.parse("objective.noise_variance", noise_variance);
    if !(objective_noise_variance.is_finite() && objective_noise_variance >= 0.0) {
        r.issue("objective.noise_variance", format!("must be non-negative, got {objective_noise_variance}"));
    }

    let horizon = r.parse("bandit.horizon", DEFAULT_HORIZON);
    if horizon == 0 {
        r.issue("bandit.horizon", "must be at least 1");
    }
    let init_count = if r.raw("bandit.init_count").is_some() {
        Some(r.parse("bandit.init_count", 0usize))
    } else {
        None
    };
    let default_acq: AcquisitionKind = match r.raw("bandit.acquisition") {
        None => AcquisitionKind::Ucb,
        Some(s) => s.parse().unwrap_or_else(|e: String| {
            r.issue("bandit.acquisition", e);
            AcquisitionKind::Ucb
        }),
    };
    let seeds = r.list::<u64>("bandit.seeds").unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    if seeds.is_empty() {
        r.issue("bandit.seeds", "at least one seed is required");
    }

    let delta = r.parse("beta.delta", DEFAULT_DELTA);
    if !(delta > 0.0 && delta < 1.0) {
        r.issue("beta.delta", format!("failure probability δ must lie in (0, 1), got {delta}"));
    }
    let beta = match r.raw("beta.kind").map(str::to_ascii_lowercase).as_deref() {
        None | Some("finite") => BetaSpec::FiniteSet { delta },
        Some("continuous") => {
            let (a, b, rr) = (r.parse("beta.a", 1.0), r.parse("beta.b", 1.0), r.parse("beta.r", 1.0));
            for (k, v) in [("beta.a", a), ("beta.b", b), ("beta.r", rr)] {
                r.positive(k, v);
            }
            BetaSpec::ContinuousSet { delta, a, b, r: rr }
        }
        Some("constant") => {
            let v = r.parse("beta.value", 4.0);
            r.positive("beta.value", v);
            BetaSpec::Constant(v)
        }
        Some(other) => {
            let other = other.to_string();
            r.issue("beta.kind", format!("unknown schedule `{other}` (finite, continuous, constant)"));
            BetaSpec::FiniteSet { delta }
        }
    };

    let epsilon = r.parse("compressed.epsilon", DEFAULT_EPSILON);
    if epsilon.is_nan() || epsilon == f64::INFINITY {
        r.issue("compressed.epsilon", "must be finite or -inf");
    }
    let bkb_scale = r.parse("bkb.scale", DEFAULT_BKB_SCALE);
    r.positive("bkb.scale", bkb_scale);
    let bkb_inverse = r.parse("bkb.inverse", false);

    let policy_list = r.raw("policies").unwrap_or("compressed, dense").to_string();
    let mut policies: Vec<PolicySpec> = Vec::new();
    for entry in policy_list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = entry.split(':').map(str::trim).collect();
        if parts.len() > 3 {
            r.issue("policies", format!("`{entry}`: expected kind[:acquisition[:parameter]]"));
            continue;
        }
        let acquisition = match parts.get(1) {
            None => default_acq,
            Some(s) => match s.parse() {
                Ok(a) => a,
                Err(e) => {
                    r.issue("policies", format!("`{entry}`: {e}"));
                    continue;
                }
            },
        };
        let param = match parts.get(2).map(|s| s.parse::<f64>()) {
            None => None,
            Some(Ok(v)) => Some(v),
            Some(Err(_)) => {
                r.issue("policies", format!("`{entry}`: parameter is not a number"));
                continue;
            }
        };
        let policy = match parts[0].to_ascii_lowercase().as_str() {
            "compressed" => {
                let epsilon = param.unwrap_or(epsilon);
                if epsilon.is_nan() || epsilon == f64::INFINITY {
                    r.issue("policies", format!("`{entry}`: ε must be finite or -inf"));
                }
                Policy::Compressed { epsilon }
            }
            "dense" => {
                if param.is_some() {
                    r.issue("policies", format!("`{entry}`: dense takes no parameter"));
                }
                Policy::DenseAdmitAlways
            }
            "bkb" => {
                let scale = param.unwrap_or(bkb_scale);
                if !(scale.is_finite() && scale > 0.0) {
                    r.issue("policies", format!("`{entry}`: BKB scale must be positive"));
                }
                Policy::BkbStochastic {
                    scale,
                    inverse: bkb_inverse,
                }
            }
            other => {
                r.issue("policies", format!("unknown policy `{other}` (compressed, dense, bkb)"));
                continue;
            }
        };
        let base = format!("{}-{}", policy.kind_name(), acquisition);
        let mut label = base.clone();
        let mut n = 2;
        while policies.iter().any(|p| p.label == label) {
            label = format!("{base}-{n}");
            n += 1;
        }
        policies.push(PolicySpec {
            label,
            policy,
            acquisition,
        });
    }
    if policies.is_empty() {
        r.issue("policies", "at least one policy is required");
    }

    let output_dir = base_dir.join(r.raw("output.dir").unwrap_or("out"));
    let workers = r.parse("run.workers", 1usize);
    if workers == 0 {
        r.issue("run.workers", "must be at least 1");
    }

    if !r.issues.is_empty() {
        return Err(Error::Config(r.issues));
    }
    Ok(ExperimentSpec {
        objective,
        objective_noise_variance,
        candidates,
        policies,
        horizon,
        noise_variance,
        kernel,
        beta,
        init_count,
        seeds,
        output_dir,
        workers,
    })
}
