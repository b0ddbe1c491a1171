//! Experiment orchestration: paired multi-seed batches, aggregation across
//! seeds, and the CSV/summary files describing a batch.
//!
//! "Mean average regret" at iteration t is the cumulative regret up to t
//! divided by t, averaged across seeds. Wall-clock covers selection,
//! admission and posterior update only; objective evaluation is excluded.

pub mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{parse_config, parse_config_str, BetaSpec, ExperimentSpec, ObjectiveSpec, PolicySpec};

use crate::acquisition::BetaSchedule;
use crate::bandit::{self, BanditConfig, Policy, RunRecord};
use crate::error::{Error, Result};
use crate::numfmt::sig12;
use crate::objectives::{build_candidates, load_tabulated, CandidateSet, CandidateSpec, Objective};
use crate::oracle;

/// One (policy, seed) cell of a batch.
#[derive(Debug, Clone)]
pub struct RunCell {
    pub seed: u64,
    pub outcome: std::result::Result<RunRecord, String>,
}

#[derive(Debug, Clone)]
pub struct PolicyAggregate {
    pub spec: PolicySpec,
    pub init_count: usize,
    pub runs: Vec<RunCell>,
    pub mar_mean: Vec<f64>,
    pub mar_sd: Vec<f64>,
    pub model_order_mean: Vec<f64>,
    pub model_order_sd: Vec<f64>,
    /// Mean cumulative algorithmic seconds at each iteration.
    pub wallclock_mean: Vec<f64>,
    pub mean_regret: f64,
    pub mean_compressed_regret: f64,
    pub mean_model_order: f64,
    pub mean_total_seconds: f64,
}

impl PolicyAggregate {
    pub fn successes(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|c| c.outcome.is_err()).count()
    }
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub objective: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyAggregate>,
}

impl AggregateReport {
    pub fn failed_cells(&self) -> usize {
        self.policies.iter().map(PolicyAggregate::failures).sum()
    }

    pub fn policy(&self, label: &str) -> Option<&PolicyAggregate> {
        self.policies.iter().find(|p| p.spec.label == label)
    }
}

/// Objective and candidate set shared by every run of a spec.
pub fn build_problem(spec: &ExperimentSpec) -> Result<(Objective, CandidateSet)> {
    let noise = spec.objective_noise_variance;
    let objective = match &spec.objective {
        ObjectiveSpec::Example1D => Objective::example_1d(noise),
        ObjectiveSpec::Rosenbrock { a, b } => Objective::rosenbrock_2d(*a, *b, noise),
        ObjectiveSpec::Tabulated { path } => {
            let mut o = load_tabulated(path)?;
            o.noise_variance = noise;
            o
        }
    };
    objective.validate()?;
    let candidates = match objective.table_candidates() {
        Some(c) => c,
        None => {
            let d = &spec.candidates;
            let descriptor = match d.kind {
                config::CandidateKind::Grid => CandidateSpec::Grid {
                    bounds: d.bounds.clone(),
                    points_per_dim: d.points_per_dim,
                },
                config::CandidateKind::Random => CandidateSpec::RandomUniform {
                    bounds: d.bounds.clone(),
                    count: d.count,
                },
            };
            build_candidates(&descriptor, &mut ChaCha8Rng::seed_from_u64(d.seed))?
        }
    };
    Ok((objective, candidates))
}

fn beta_schedule(spec: &BetaSpec, candidates: &CandidateSet) -> BetaSchedule {
    match *spec {
        BetaSpec::FiniteSet { delta } => BetaSchedule::FiniteSet {
            cardinality: candidates.len(),
            delta,
        },
        BetaSpec::ContinuousSet { delta, a, b, r } => BetaSchedule::ContinuousSet {
            delta,
            dim: candidates.dim() as f64,
            a,
            b,
            r,
        },
        BetaSpec::Constant(v) => BetaSchedule::Constant(v),
    }
}

/// Bandit configs for every (policy, seed) cell, in (policy, seed) order.
pub fn run_configs(spec: &ExperimentSpec, candidates: &CandidateSet) -> Vec<Vec<BanditConfig>> {
    let beta = beta_schedule(&spec.beta, candidates);
    spec.policies
        .iter()
        .map(|p| {
            spec.seeds
                .iter()
                .map(|&seed| {
                    let mut c = BanditConfig::new(
                        p.policy,
                        spec.horizon,
                        p.acquisition,
                        beta,
                        spec.noise_variance,
                        spec.kernel,
                        candidates.clone(),
                        seed,
                    );
                    if let Some(n) = spec.init_count {
                        c.init_count = n;
                    }
                    c
                })
                .collect()
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn series(records: &[&RunRecord], horizon: usize, f: impl Fn(&RunRecord) -> Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let per_run: Vec<Vec<f64>> = records.iter().map(|r| f(r)).collect();
    (0..horizon)
        .map(|t| mean_sd(&per_run.iter().map(|s| s[t]).collect::<Vec<_>>()))
        .unzip()
}

/// Folds per-seed results (ordered by seed index) into a policy aggregate.
pub fn aggregate(spec: PolicySpec, init_count: usize, horizon: usize, runs: Vec<RunCell>) -> PolicyAggregate {
    let ok: Vec<&RunRecord> = runs.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
    let (mar_mean, mar_sd) = series(&ok, horizon, |r| bandit::regret_summary(r).mean_average);
    let (model_order_mean, model_order_sd) =
        series(&ok, horizon, |r| r.steps.iter().map(|s| s.model_order as f64).collect());
    let (wallclock_mean, _) = series(&ok, horizon, |r| {
        r.steps
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.step_seconds;
                Some(*acc)
            })
            .collect()
    });
    let summaries: Vec<_> = ok.iter().map(|r| bandit::regret_summary(r)).collect();
    let mean_regret = mean_sd(&summaries.iter().map(|s| s.cumulative).collect::<Vec<_>>()).0;
    let mean_compressed_regret = mean_sd(&summaries.iter().map(|s| s.compressed).collect::<Vec<_>>()).0;
    let mean_model_order = mean_sd(&ok.iter().map(|r| r.final_model_order() as f64).collect::<Vec<_>>()).0;
    let mean_total_seconds = mean_sd(&ok.iter().map(|r| r.total_seconds).collect::<Vec<_>>()).0;
    drop(ok);
    PolicyAggregate {
        spec,
        init_count,
        runs,
        mar_mean,
        mar_sd,
        model_order_mean,
        model_order_sd,
        wallclock_mean,
        mean_regret,
        mean_compressed_regret,
        mean_model_order,
        mean_total_seconds,
    }
}

/// Executes every (policy, seed) cell without writing anything.
///
/// Runs go to `spec.workers` threads; results are folded in (policy, seed)
/// order regardless of completion order.
pub fn execute(spec: &ExperimentSpec) -> Result<AggregateReport> {
    let (objective, candidates) = build_problem(spec)?;
    let configs = run_configs(spec, &candidates);
    let flat: Vec<&BanditConfig> = configs.iter().flatten().collect();
    let slots: Vec<Mutex<Option<std::result::Result<RunRecord, String>>>> =
        flat.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = spec.workers.clamp(1, flat.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = flat.get(i) else { break };
                let outcome = bandit::run(config, &objective).map_err(|f| f.to_string());
                *slots[i].lock().expect("result slot poisoned") = Some(outcome);
            });
        }
    });
    let mut results = slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every cell ran"));

    let policies = spec
        .policies
        .iter()
        .zip(&configs)
        .map(|(p, cfgs)| {
            let runs = cfgs
                .iter()
                .map(|c| RunCell {
                    seed: c.seed,
                    outcome: results.next().expect("one result per cell"),
                })
                .collect();
            let init = cfgs.first().map_or(0, |c| c.init_count);
            aggregate(p.clone(), init, spec.horizon, runs)
        })
        .collect();
    Ok(AggregateReport {
        objective: objective.name().to_string(),
        horizon: spec.horizon,
        seeds: spec.seeds.clone(),
        policies,
    })
}

/// Executes the batch and writes traces, aggregates and `summary.txt` under `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<AggregateReport> {
    let report = execute(spec)?;
    write_run_files(&report, &spec.output_dir)?;
    emit_plot_data(&report, &spec.output_dir)?;
    write_text(&spec.output_dir.join("summary.txt"), &summary_table(&report))?;
    Ok(report)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_with(path, |w| w.write_all(text.as_bytes()))
}

/// Per-run trace, posterior snapshot and summary files.
pub fn write_run_files(report: &AggregateReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for p in &report.policies {
        let dir = out_dir.join(&p.spec.label).join("runs");
        create_dir(&dir)?;
        for cell in &p.runs {
            let stem = format!("seed{}", cell.seed);
            match &cell.outcome {
                Ok(record) => {
                    let trace = dir.join(format!("{stem}_trace.csv"));
                    write_with(&trace, |w| record.write_trace_csv(w))?;
                    let posterior = dir.join(format!("{stem}_posterior.csv"));
                    write_with(&posterior, |w| record.snapshot.write_csv(w))?;
                    let summary = dir.join(format!("{stem}_summary.txt"));
                    write_with(&summary, |w| record.write_summary(w))?;
                    written.extend([trace, posterior, summary]);
                }
                Err(msg) => {
                    let path = dir.join(format!("{stem}_FAILED.txt"));
                    write_text(&path, &format!("{msg}\n"))?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Writes `mar_vs_iteration.csv`, `mar_vs_wallclock.csv` and
/// `model_order_vs_iteration.csv` for each policy under `out_dir/<label>/`.
pub fn emit_plot_data(report: &AggregateReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for p in &report.policies {
        let dir = out_dir.join(&p.spec.label);
        create_dir(&dir)?;

        let path = dir.join("mar_vs_iteration.csv");
        write_with(&path, |w| {
            writeln!(w, "t,mean,sd")?;
            for (t, (m, s)) in p.mar_mean.iter().zip(&p.mar_sd).enumerate() {
                writeln!(w, "{},{},{}", t + 1, sig12(*m), sig12(*s))?;
            }
            Ok(())
        })?;
        written.push(path);

        let path = dir.join("mar_vs_wallclock.csv");
        write_with(&path, |w| {
            writeln!(w, "cumulative_seconds,mean")?;
            for (c, m) in p.wallclock_mean.iter().zip(&p.mar_mean) {
                writeln!(w, "{},{}", sig12(*c), sig12(*m))?;
            }
            Ok(())
        })?;
        written.push(path);

        let path = dir.join("model_order_vs_iteration.csv");
        write_with(&path, |w| {
            writeln!(w, "t,mean,sd")?;
            for (t, (m, s)) in p.model_order_mean.iter().zip(&p.model_order_sd).enumerate() {
                writeln!(w, "{},{},{}", t + 1, sig12(*m), sig12(*s))?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    Ok(written)
}

fn column_name(policy: &Policy) -> &'static str {
    match policy {
        Policy::DenseAdmitAlways => "Uncompressed",
        Policy::Compressed { .. } => "Compressed",
        Policy::BkbStochastic { .. } => "BKB",
    }
}

/// Mean total algorithmic seconds: one row per acquisition, one column per
/// policy kind, columns in configured order.
pub fn clock_time_table(report: &AggregateReport) -> String {
    let mut columns: Vec<&'static str> = Vec::new();
    let mut rows: Vec<crate::acquisition::AcquisitionKind> = Vec::new();
    for p in &report.policies {
        let c = column_name(&p.spec.policy);
        if !columns.contains(&c) {
            columns.push(c);
        }
        if !rows.contains(&p.spec.acquisition) {
            rows.push(p.spec.acquisition);
        }
    }
    let width = 14;
    let mut out = format!("Clock times (seconds), {}\n", report.objective);
    out.push_str(&format!("{:<8}", "acq"));
    for c in &columns {
        out.push_str(&format!("{c:>width$}"));
    }
    out.push('\n');
    for acq in rows {
        out.push_str(&format!("{:<8}", acq.as_str().to_uppercase()));
        for c in &columns {
            let cell = report
                .policies
                .iter()
                .find(|p| p.spec.acquisition == acq && column_name(&p.spec.policy) == *c)
                .map_or_else(|| "-".to_string(), |p| format!("{:.3}", p.mean_total_seconds));
            out.push_str(&format!("{cell:>width$}"));
        }
        out.push('\n');
    }
    out
}

/// Final-summary table plus the clock-time table.
pub fn summary_table(report: &AggregateReport) -> String {
    let mut out = format!(
        "objective={} T={} seeds={}\n\n",
        report.objective,
        report.horizon,
        report
            .seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    out.push_str(&format!(
        "{:<20}{:>16}{:>16}{:>12}{:>14}{:>10}\n",
        "policy", "mean Reg_T", "mean Reg~_T", "mean M_T", "mean seconds", "failed"
    ));
    for p in &report.policies {
        out.push_str(&format!(
            "{:<20}{:>16.6}{:>16.6}{:>12.2}{:>14.4}{:>10}\n",
            p.spec.label,
            p.mean_regret,
            p.mean_compressed_regret,
            p.mean_model_order,
            p.mean_total_seconds,
            p.failures()
        ));
    }
    out.push('\n');
    out.push_str(&clock_time_table(report));
    out
}

/// Oracle suite for `--verify`: posterior cross-checks at the experiment's kernel
/// and noise, plus the model-order and variance/information-gain bounds on
/// every successful run.
pub fn verify(spec: &ExperimentSpec, report: &AggregateReport) -> Result<oracle::OracleReport> {
    let (_, candidates) = build_problem(spec)?;
    let mut result = oracle::verify_posterior(&spec.kernel, spec.noise_variance, candidates.dim(), 50, 100, 5, 0)?;
    for p in &report.policies {
        for r in p.successes() {
            let mut ok = oracle::variance_info_gain_bound(r);
            if let Policy::Compressed { epsilon } = r.policy {
                if epsilon > 0.0 {
                    ok &= oracle::check_model_order_bound(r, epsilon)?;
                }
            }
            result.bound_satisfied &= ok;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_cases() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_sd(&[]).0.is_nan());
    }

    #[test]
    fn clock_table_layout() {
        let spec = parse_config_str(
            "objective = example1d\nbandit.horizon = 5\nbandit.seeds = 1\npolicies = dense:ucb, compressed:ucb, bkb:ucb, dense:ei\n",
            Path::new("."),
        )
        .unwrap();
        let report = execute(&spec).unwrap();
        let table = clock_time_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        let header: Vec<&str> = lines[1].split_whitespace().collect();
        assert_eq!(header, ["acq", "Uncompressed", "Compressed", "BKB"]);
        assert!(lines[2].starts_with("UCB"));
        assert!(lines[3].starts_with("EI") && lines[3].contains('-'));

        let single = parse_config_str(
            "objective = example1d\nbandit.horizon = 3\nbandit.seeds = 1\npolicies = compressed\n",
            Path::new("."),
        )
        .unwrap();
        let table = clock_time_table(&execute(&single).unwrap());
        let header: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(header, ["acq", "Compressed"]);
    }
}
