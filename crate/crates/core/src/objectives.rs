//! Benchmark objectives, noisy observation, candidate sets and the
//! tabulated-objective CSV adapter.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ConfigIssue, Error, Result};

/// `sin x + cos x + x/10`
pub fn example_function(x: f64) -> f64 {
    x.sin() + x.cos() + 0.1 * x
}

/// `(a − x)² + b (y − x²)²`
pub fn rosenbrock(x: f64, y: f64, a: f64, b: f64) -> f64 {
    (a - x).powi(2) + b * (y - x * x).powi(2)
}

/// Exact-match lookup table over distinct points.
#[derive(Debug, Clone)]
pub struct Table {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

fn point_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and −0.0 compare equal; normalize before hashing bits.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl Table {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("table has no rows".into()));
        }
        if points.len() != values.len() {
            return Err(Error::Input("table points and values differ in length".into()));
        }
        let dim = points[0].len();
        let mut index = HashMap::with_capacity(points.len());
        for (i, (p, v)) in points.iter().zip(&values).enumerate() {
            if p.len() != dim || dim == 0 {
                return Err(Error::Input(format!("table row {i} has dimension {}", p.len())));
            }
            if p.iter().chain(std::iter::once(v)).any(|c| !c.is_finite()) {
                return Err(Error::Input(format!("table row {i} has non-finite entries")));
            }
            if index.insert(point_key(p), i).is_some() {
                return Err(Error::Input(format!("duplicate table point {p:?}")));
            }
        }
        Ok(Table {
            points,
            values,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lookup(&self, x: &[f64]) -> Option<f64> {
        self.index.get(&point_key(x)).map(|&i| self.values[i])
    }
}

#[derive(Debug, Clone)]
pub enum ObjectiveFunction {
    Example1D,
    Rosenbrock2D { a: f64, b: f64 },
    Tabulated(Table),
}

/// Whether the raw function is maximized directly or negated first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub function: ObjectiveFunction,
    /// Observation noise variance; zero gives noiseless access.
    pub noise_variance: f64,
    pub sense: Sense,
}

impl Objective {
    pub fn example_1d(noise_variance: f64) -> Self {
        Objective {
            function: ObjectiveFunction::Example1D,
            noise_variance,
            sense: Sense::Maximize,
        }
    }

    /// Rosenbrock is a minimization benchmark, so the engine sees `−f`.
    pub fn rosenbrock_2d(a: f64, b: f64, noise_variance: f64) -> Self {
        Objective {
            function: ObjectiveFunction::Rosenbrock2D { a, b },
            noise_variance,
            sense: Sense::Minimize,
        }
    }

    pub fn tabulated(table: Table, noise_variance: f64) -> Self {
        Objective {
            function: ObjectiveFunction::Tabulated(table),
            noise_variance,
            sense: Sense::Maximize,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.function {
            ObjectiveFunction::Example1D => "example1d",
            ObjectiveFunction::Rosenbrock2D { .. } => "rosenbrock",
            ObjectiveFunction::Tabulated(_) => "tabulated",
        }
    }

    pub fn dim(&self) -> usize {
        match &self.function {
            ObjectiveFunction::Example1D => 1,
            ObjectiveFunction::Rosenbrock2D { .. } => 2,
            ObjectiveFunction::Tabulated(t) => t.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            issues.push(ConfigIssue {
                key: "objective.noise_variance".into(),
                message: format!("must be a non-negative finite number, got {}", self.noise_variance),
            });
        }
        if let ObjectiveFunction::Rosenbrock2D { a, b } = self.function {
            for (key, v) in [("objective.a", a), ("objective.b", b)] {
                if !v.is_finite() {
                    issues.push(ConfigIssue {
                        key: key.into(),
                        message: format!("must be finite, got {v}"),
                    });
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    /// The raw function value, before any negation.
    pub fn raw_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Input(format!(
                "{} expects dimension {}, got {}",
                self.name(),
                self.dim(),
                x.len()
            )));
        }
        match &self.function {
            ObjectiveFunction::Example1D => Ok(example_function(x[0])),
            ObjectiveFunction::Rosenbrock2D { a, b } => Ok(rosenbrock(x[0], x[1], *a, *b)),
            ObjectiveFunction::Tabulated(t) => t
                .lookup(x)
                .ok_or_else(|| Error::Input(format!("point {x:?} is not in the table"))),
        }
    }

    /// Noiseless value in the maximization orientation.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let v = self.raw_value(x)?;
        Ok(match self.sense {
            Sense::Maximize => v,
            Sense::Minimize => -v,
        })
    }

    /// `value(x) + η` with `η ~ N(0, noise_variance)`.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        let v = self.value(x)?;
        if self.noise_variance == 0.0 {
            return Ok(v);
        }
        let noise = Normal::new(0.0, self.noise_variance.sqrt())
            .map_err(|e| Error::Input(format!("bad noise variance: {e}")))?;
        Ok(v + noise.sample(rng))
    }

    /// Candidate set carried by a tabulated objective, in file order.
    pub fn table_candidates(&self) -> Option<CandidateSet> {
        match &self.function {
            ObjectiveFunction::Tabulated(t) => Some(CandidateSet {
                bounds: bounds_of(t.points()),
                points: t.points().to_vec(),
                provenance: Provenance::FromTable,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    UniformGrid,
    RandomUniform,
    FromTable,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    points: Vec<Vec<f64>>,
    provenance: Provenance,
    bounds: Vec<(f64, f64)>,
}

fn bounds_of(points: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let dim = points.first().map_or(0, Vec::len);
    (0..dim)
        .map(|d| {
            points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[d]), hi.max(p[d]))
            })
        })
        .collect()
}

impl CandidateSet {
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::Input("candidate set must be non-empty".into()));
        }
        if points.iter().any(|p| p.len() != dim || p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Input("candidate points must be finite and share a dimension".into()));
        }
        Ok(CandidateSet {
            bounds: bounds_of(&points),
            points,
            provenance: Provenance::Explicit,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSpec {
    /// `points_per_dim` evenly spaced values per axis, endpoints included.
    Grid {
        bounds: Vec<(f64, f64)>,
        points_per_dim: usize,
    },
    RandomUniform {
        bounds: Vec<(f64, f64)>,
        count: usize,
    },
}

fn validate_bounds(bounds: &[(f64, f64)], issues: &mut Vec<ConfigIssue>) {
    if bounds.is_empty() {
        issues.push(ConfigIssue {
            key: "candidates.lower".into(),
            message: "at least one dimension is required".into(),
        });
    }
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            issues.push(ConfigIssue {
                key: "candidates.lower".into(),
                message: format!("dimension {d}: need finite lo < hi, got [{lo}, {hi}]"),
            });
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / last })
        .collect()
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub fn build_candidates<R: Rng + ?Sized>(spec: &CandidateSpec, rng: &mut R) -> Result<CandidateSet> {
    let mut issues = Vec::new();
    match spec {
        CandidateSpec::Grid {
            bounds,
            points_per_dim,
        } => {
            validate_bounds(bounds, &mut issues);
            if *points_per_dim == 0 {
                issues.push(ConfigIssue {
                    key: "candidates.points_per_dim".into(),
                    message: "must be at least 1".into(),
                });
            }
            if !issues.is_empty() {
                return Err(Error::Config(issues));
            }
            let axes: Vec<Vec<f64>> = bounds
                .iter()
                .map(|&(lo, hi)| axis(lo, hi, *points_per_dim))
                .collect();
            let mut points: Vec<Vec<f64>> = vec![Vec::new()];
            for ax in &axes {
                points = points
                    .into_iter()
                    .flat_map(|prefix| {
                        ax.iter().map(move |&v| {
                            let mut p = prefix.clone();
                            p.push(v);
                            p
                        })
                    })
                    .collect();
            }
            Ok(CandidateSet {
                points,
                provenance: Provenance::UniformGrid,
                bounds: bounds.clone(),
            })
        }
        CandidateSpec::RandomUniform { bounds, count } => {
            validate_bounds(bounds, &mut issues);
            if *count == 0 {
                issues.push(ConfigIssue {
                    key: "candidates.count".into(),
                    message: "must be at least 1".into(),
                });
            }
            if !issues.is_empty() {
                return Err(Error::Config(issues));
            }
            let mut points: Vec<Vec<f64>> = (0..*count)
                .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
                .collect();
            points.sort_by(|a, b| lexicographic(a, b));
            Ok(CandidateSet {
                points,
                provenance: Provenance::RandomUniform,
                bounds: bounds.clone(),
            })
        }
    }
}

/// Reads a `x1,...,xd,value` CSV into a tabulated objective (noiseless).
pub fn load_tabulated(path: &Path) -> Result<Objective> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, format!("unreadable header: {e}")))?
        .clone();
    let ncols = headers.len();
    if ncols < 2 {
        return Err(parse_err(1, "header must be `x1,...,xd,value`".into()));
    }
    for (i, h) in headers.iter().take(ncols - 1).enumerate() {
        if h != format!("x{}", i + 1) {
            return Err(parse_err(1, format!("column {} should be named `x{}`, found `{h}`", i + 1, i + 1)));
        }
    }
    if &headers[ncols - 1] != "value" {
        return Err(parse_err(1, format!("last column should be `value`, found `{}`", &headers[ncols - 1])));
    }

    let mut points = Vec::new();
    let mut values = Vec::new();
    let mut seen: HashMap<Vec<u64>, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(ncols);
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: `{field}` is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: value {v} is not finite", c + 1)));
            }
            row.push(v);
        }
        let value = row.pop().expect("record has at least two fields");
        if let Some(first) = seen.insert(point_key(&row), line) {
            return Err(parse_err(line, format!("duplicate point {row:?} (first seen on line {first})")));
        }
        points.push(row);
        values.push(value);
    }
    if points.is_empty() {
        return Err(parse_err(1, "table has no data rows".into()));
    }
    Ok(Objective::tabulated(Table::new(points, values)?, 0.0))
}

/// Writes a table in the format [`load_tabulated`] reads. Uses shortest round-trip formatting.
pub fn write_tabulated(path: &Path, points: &[Vec<f64>], values: &[f64]) -> Result<()> {
    let dim = points.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(e.to_string()))?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for (p, v) in points.iter().zip(values) {
        let row: Vec<String> = p.iter().chain(std::iter::once(v)).map(|x| format!("{x:?}")).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::io::Write;

    #[test]
    fn example_function_values() {
        assert_eq!(example_function(0.0), 1.0);
        assert!((example_function(PI) - (-1.0 + 0.1 * PI)).abs() < 1e-15);
        assert!((example_function(PI) - (-0.685_84)).abs() < 1e-5);
        assert!((example_function(PI / 4.0) - (2f64.sqrt() + 0.025 * PI)).abs() < 1e-15);
    }

    #[test]
    fn rosenbrock_values() {
        assert_eq!(rosenbrock(1.0, 1.0, 1.0, 10.0), 0.0);
        assert_eq!(rosenbrock(0.0, 0.0, 1.0, 10.0), 1.0);
        assert_eq!(rosenbrock(-1.0, 1.0, 1.0, 10.0), 4.0);
    }

    #[test]
    fn noiseless_observe_is_exact() {
        let obj = Objective::example_1d(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(obj.observe(&[0.0], &mut rng).unwrap(), 1.0);
        let r = Objective::rosenbrock_2d(1.0, 10.0, 0.0);
        assert_eq!(r.observe(&[0.0, 0.0], &mut rng).unwrap(), -1.0);
    }

    #[test]
    fn observation_noise_moments() {
        let noise = 0.25;
        let obj = Objective::example_1d(noise);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| obj.observe(&[1.0], &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - example_function(1.0)).abs() < 3.0 * noise.sqrt() / 100.0);
        assert!((var - noise).abs() < 0.1 * noise);
    }

    #[test]
    fn grid_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = build_candidates(
            &CandidateSpec::Grid {
                bounds: vec![(0.0, 1.0)],
                points_per_dim: 3,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.points(), &[vec![0.0], vec![0.5], vec![1.0]]);

        let g = build_candidates(
            &CandidateSpec::Grid {
                bounds: vec![(0.0, 10.0)],
                points_per_dim: 101,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g.points()[0], vec![0.0]);
        assert_eq!(g.points()[100], vec![10.0]);
        for w in g.points().windows(2) {
            assert!((w[1][0] - w[0][0] - 0.1).abs() < 1e-12);
        }

        let g = build_candidates(
            &CandidateSpec::Grid {
                bounds: vec![(0.0, 1.0), (0.0, 1.0)],
                points_per_dim: 3,
            },
            &mut rng,
        )
        .unwrap();
        let mut expected = Vec::new();
        for a in [0.0, 0.5, 1.0] {
            for b in [0.0, 0.5, 1.0] {
                expected.push(vec![a, b]);
            }
        }
        assert_eq!(g.points(), expected.as_slice());
        assert_eq!(g.provenance(), Provenance::UniformGrid);
    }

    #[test]
    fn invalid_candidate_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = CandidateSpec::Grid {
            bounds: vec![(1.0, 0.0)],
            points_per_dim: 0,
        };
        match build_candidates(&bad, &mut rng) {
            Err(Error::Config(issues)) => assert_eq!(issues.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad = CandidateSpec::RandomUniform {
            bounds: vec![(0.0, 1.0)],
            count: 0,
        };
        assert!(build_candidates(&bad, &mut rng).is_err());
    }

    #[test]
    fn random_candidates_are_deterministic_and_sorted() {
        let spec = CandidateSpec::RandomUniform {
            bounds: vec![(-1.0, 1.0), (0.0, 5.0)],
            count: 50,
        };
        let a = build_candidates(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_candidates(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        for w in a.points().windows(2) {
            assert!(lexicographic(&w[0], &w[1]).is_le());
        }
        for p in a.points() {
            assert!((-1.0..1.0).contains(&p[0]) && (0.0..5.0).contains(&p[1]));
        }
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn tabulated_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.csv", "x1,x2,value\n0.5,1.0,3.0\n-1,2,4.5\n");
        let obj = load_tabulated(&path).unwrap();
        let cands = obj.table_candidates().unwrap();
        assert_eq!(cands.points(), &[vec![0.5, 1.0], vec![-1.0, 2.0]]);
        assert_eq!(cands.provenance(), Provenance::FromTable);
        assert_eq!(obj.value(&[-1.0, 2.0]).unwrap(), 4.5);
        assert!(obj.value(&[-1.0, 2.000001]).is_err());
    }

    #[test]
    fn tabulated_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write_file(&dir, "dup.csv", "x1,value\n1.0,2\n2.0,3\n1.0,4\n");
        let msg = load_tabulated(&dup).unwrap_err().to_string();
        assert!(msg.contains("duplicate point [1.0]"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");

        let nan = write_file(&dir, "nan.csv", "x1,value\n1.0,NaN\n");
        assert!(load_tabulated(&nan).unwrap_err().to_string().contains("line 2"));

        let text = write_file(&dir, "text.csv", "x1,value\n1.0,2\nabc,3\n");
        let msg = load_tabulated(&text).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("abc"), "{msg}");

        let header = write_file(&dir, "hdr.csv", "a,b\n1,2\n");
        assert!(load_tabulated(&header).is_err());

        let empty = write_file(&dir, "empty.csv", "x1,value\n");
        assert!(load_tabulated(&empty).is_err());

        assert!(matches!(load_tabulated(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn tabulated_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = build_candidates(
            &CandidateSpec::Grid {
                bounds: vec![(0.0, 10.0)],
                points_per_dim: 101,
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let values: Vec<f64> = grid.points().iter().map(|p| example_function(p[0])).collect();
        let path = dir.path().join("example.csv");
        write_tabulated(&path, grid.points(), &values).unwrap();
        let obj = load_tabulated(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in grid.points() {
            let got = obj.observe(p, &mut rng).unwrap();
            assert!((got - example_function(p[0])).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rosenbrock_nonnegative(x in -5.0f64..5.0, y in -5.0f64..5.0, a in -2.0f64..2.0, b in 0.1f64..100.0) {
            let v = rosenbrock(x, y, a, b);
            prop_assert!(v >= 0.0);
            prop_assert_eq!(rosenbrock(a, a * a, a, b), 0.0);
        }
    }
}
