//! Online loops: compressed GP bandits, the dense baseline and a BKB-style
//! stochastic baseline, with per-step regret accounting.
//!
//! Each step selects `x_t` by maximizing the acquisition over the candidate
//! set, decides whether to admit it, and only then draws `y_t = f(x_t) + η`.
//! Skipped steps draw nothing and leave the posterior untouched.

use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{self, AcquisitionKind, BetaSchedule};
use crate::error::{ConfigIssue, Error, Result};
use crate::gp::{CandidatePosterior, GpPosterior, ADMIT_ALWAYS, JITTER};
use crate::kernel::KernelSpec;
use crate::numfmt::sig12;
use crate::objectives::{CandidateSet, Objective, Sense};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Admit iff the conditional entropy exceeds `epsilon` (nats).
    Compressed { epsilon: f64 },
    DenseAdmitAlways,
    /// Admit with probability `min{1, scale·σ²}`, or `min{1, scale/σ²}` when `inverse`.
    BkbStochastic { scale: f64, inverse: bool },
}

impl Policy {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Policy::Compressed { .. } => "compressed",
            Policy::DenseAdmitAlways => "dense",
            Policy::BkbStochastic { .. } => "bkb",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BanditConfig {
    pub policy: Policy,
    pub horizon: usize,
    pub acquisition: AcquisitionKind,
    pub beta_schedule: BetaSchedule,
    pub noise_variance: f64,
    pub kernel: KernelSpec,
    pub candidates: CandidateSet,
    pub init_count: usize,
    pub seed: u64,
}

impl BanditConfig {
    /// Config with the default warm start of `2^d` points.
    pub fn new(
        policy: Policy,
        horizon: usize,
        acquisition: AcquisitionKind,
        beta_schedule: BetaSchedule,
        noise_variance: f64,
        kernel: KernelSpec,
        candidates: CandidateSet,
        seed: u64,
    ) -> Self {
        let init_count = 1usize << candidates.dim().min(20);
        BanditConfig {
            policy,
            horizon,
            acquisition,
            beta_schedule,
            noise_variance,
            kernel,
            candidates,
            init_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        let mut push = |key: &str, message: String| {
            issues.push(ConfigIssue {
                key: key.into(),
                message,
            })
        };
        if self.horizon == 0 {
            push("bandit.horizon", "must be at least 1".into());
        }
        if self.init_count > self.candidates.len() {
            push(
                "bandit.init_count",
                format!("{} exceeds the {} candidates", self.init_count, self.candidates.len()),
            );
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            push("gp.noise_variance", format!("must be positive, got {}", self.noise_variance));
        }
        match self.policy {
            Policy::Compressed { epsilon } if epsilon.is_nan() || epsilon == f64::INFINITY => {
                push("compressed.epsilon", format!("must be finite or -inf, got {epsilon}"));
            }
            Policy::BkbStochastic { scale, .. } if !(scale.is_finite() && scale > 0.0) => {
                push("bkb.scale", format!("must be positive, got {scale}"));
            }
            _ => {}
        }
        for check in [self.kernel.validate(), self.beta_schedule.validate()] {
            if let Err(Error::Config(more)) = check {
                issues.extend(more);
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }
}

/// Independent generators derived from one master seed.
///
/// Policies sharing a seed see the same warm start and the same noise
/// sequence, which makes their traces directly comparable.
pub struct RngStreams {
    pub warm_start: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub inclusion: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |n| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n);
            rng
        };
        RngStreams {
            warm_start: stream(1),
            noise: stream(2),
            inclusion: stream(3),
        }
    }
}

pub fn bkb_inclusion_probability(scale: f64, variance: f64, inverse: bool) -> f64 {
    let p = if inverse {
        if variance <= 0.0 {
            1.0
        } else {
            scale / variance
        }
    } else {
        scale * variance
    };
    p.clamp(0.0, 1.0)
}

/// One Bernoulli draw; always consumes exactly one uniform from `rng`.
pub fn bkb_include<R: Rng + ?Sized>(probability: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < probability
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub chosen_index: usize,
    pub score: f64,
    pub admitted: bool,
    pub sampled_y: Option<f64>,
    pub model_order: usize,
    pub conditional_entropy: f64,
    /// Posterior variance at `x_t` before any update.
    pub posterior_variance: f64,
    pub info_gain: f64,
    pub regret: f64,
    pub step_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSnapshot {
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub noise_variance: f64,
    pub lengthscale: f64,
}

impl PosteriorSnapshot {
    fn of(gp: &GpPosterior) -> Self {
        PosteriorSnapshot {
            points: gp.dictionary().to_vec(),
            targets: gp.targets().to_vec(),
            noise_variance: gp.noise_variance(),
            lengthscale: gp.kernel().lengthscale,
        }
    }

    pub fn model_order(&self) -> usize {
        self.points.len()
    }

    /// Header `m,x1,...,xd,y,noise_variance,lengthscale,model_order`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut header = vec!["m".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        header.extend(["y", "noise_variance", "lengthscale", "model_order"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for (m, (p, y)) in self.points.iter().zip(&self.targets).enumerate() {
            let mut row = vec![m.to_string()];
            row.extend(p.iter().map(|&v| sig12(v)));
            row.push(sig12(*y));
            row.push(sig12(self.noise_variance));
            row.push(sig12(self.lengthscale));
            row.push(self.model_order().to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: Policy,
    pub acquisition: AcquisitionKind,
    pub seed: u64,
    pub sense: Sense,
    pub warm_start: Vec<usize>,
    /// Pre-append posterior variance of each warm-start point.
    pub warm_start_variances: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub f_star: f64,
    /// Σ conditional entropy over loop steps that were admitted (Ĥ).
    pub admitted_entropy_sum: f64,
    pub information_gain: f64,
    /// Running supremum of |μ − y_max| / σ at the chosen actions.
    pub z_score_sup: f64,
    pub total_seconds: f64,
    pub snapshot: PosteriorSnapshot,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretSummary {
    pub cumulative: f64,
    /// Sum restricted to admitted steps.
    pub compressed: f64,
    pub mean_average: Vec<f64>,
}

impl RunRecord {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn final_model_order(&self) -> usize {
        self.snapshot.model_order()
    }

    pub fn model_order_excluding_warm_start(&self) -> usize {
        self.final_model_order() - self.warm_start.len()
    }

    pub fn admitted_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.admitted).count()
    }

    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    /// Column order of [`RunRecord::write_trace_csv`].
    pub const TRACE_HEADER: &'static str =
        "t,chosen_index,score,admitted,y,M_t,cond_entropy,info_gain,regret,step_seconds";

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::TRACE_HEADER)?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.chosen_index,
                sig12(s.score),
                s.admitted,
                s.sampled_y.map(sig12).unwrap_or_default(),
                s.model_order,
                sig12(s.conditional_entropy),
                sig12(s.info_gain),
                sig12(s.regret),
                sig12(s.step_seconds),
            )?;
        }
        Ok(())
    }

    /// Flat `key=value` summary.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let regret = regret_summary(self);
        let policy_param = match self.policy {
            Policy::Compressed { epsilon } => format!("epsilon={}", sig12(epsilon)),
            Policy::DenseAdmitAlways => "epsilon=-inf".into(),
            Policy::BkbStochastic { scale, inverse } => {
                format!("bkb_scale={}\nbkb_inverse={inverse}", sig12(scale))
            }
        };
        writeln!(w, "policy={}", self.policy.kind_name())?;
        writeln!(w, "{policy_param}")?;
        writeln!(w, "acquisition={}", self.acquisition)?;
        writeln!(w, "seed={}", self.seed)?;
        let sense = match self.sense {
            Sense::Maximize => "maximize",
            Sense::Minimize => "maximize_negated",
        };
        writeln!(w, "objective_sense={sense}")?;
        writeln!(w, "T={}", self.horizon())?;
        writeln!(w, "Reg_T={}", sig12(regret.cumulative))?;
        writeln!(w, "Reg_tilde_T={}", sig12(regret.compressed))?;
        writeln!(w, "M_T={}", self.final_model_order())?;
        writeln!(w, "M_T_excluding_warm_start={}", self.model_order_excluding_warm_start())?;
        writeln!(w, "entropy_sum={}", sig12(self.admitted_entropy_sum))?;
        writeln!(w, "information_gain={}", sig12(self.information_gain))?;
        writeln!(w, "wallclock={}", sig12(self.total_seconds))?;
        writeln!(w, "R_diagnostic={}", sig12(self.z_score_sup))?;
        writeln!(w, "valid={}", self.is_valid())?;
        Ok(())
    }
}

pub fn regret_summary(record: &RunRecord) -> RegretSummary {
    let mut cumulative = 0.0;
    let mut compressed = 0.0;
    let mut mean_average = Vec::with_capacity(record.steps.len());
    for (i, s) in record.steps.iter().enumerate() {
        cumulative += s.regret;
        if s.admitted {
            compressed += s.regret;
        }
        mean_average.push(cumulative / (i + 1) as f64);
    }
    RegretSummary {
        cumulative,
        compressed,
        mean_average,
    }
}

/// A run that stopped early; `partial` holds every step completed before the error.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<RunRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted after {} steps: {}",
            self.partial.steps.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct Loop<'a> {
    config: &'a BanditConfig,
    objective: &'a Objective,
    gp: GpPosterior,
    cache: CandidatePosterior,
    streams: RngStreams,
    record: RunRecord,
}

impl Loop<'_> {
    fn fail(mut self, error: Error) -> RunFailure {
        self.record.failure = Some(error.to_string());
        self.record.snapshot = PosteriorSnapshot::of(&self.gp);
        self.record.information_gain = self.gp.information_gain();
        RunFailure {
            error,
            partial: Box::new(self.record),
        }
    }

    fn warm_start(&mut self) -> Result<()> {
        let n = self.config.candidates.len();
        let chosen = sample(&mut self.streams.warm_start, n, self.config.init_count).into_vec();
        for &idx in &chosen {
            let x = &self.config.candidates.points()[idx];
            let y = self.objective.observe(x, &mut self.streams.noise)?;
            let report = self.gp.append_point(x, y)?;
            self.record.warm_start.push(idx);
            self.record.warm_start_variances.push(report.variance_before);
        }
        self.cache.sync(&self.gp)
    }

    fn step(&mut self, t: usize, f_values: &[f64]) -> Result<()> {
        let config = self.config;
        let timer = Instant::now();
        let beta = config.beta_schedule.beta(t)?;
        let predictions = self.cache.predictions()?;
        let incumbent = match config.acquisition {
            AcquisitionKind::Ucb => 0.0,
            // With nothing retained yet the prior mean stands in for y_max.
            AcquisitionKind::Ei => self.gp.max_target().unwrap_or(0.0),
            AcquisitionKind::Mpi => acquisition::max_mean(&predictions),
        };
        let (index, score) =
            acquisition::select_from_predictions(&predictions, config.acquisition, beta, incumbent)?;
        let x = &config.candidates.points()[index];

        let decision = match config.policy {
            Policy::Compressed { epsilon } => self.gp.admission_test(x, epsilon)?,
            Policy::DenseAdmitAlways => self.gp.admission_test(x, ADMIT_ALWAYS)?,
            Policy::BkbStochastic { scale, inverse } => {
                let mut d = self.gp.admission_test(x, ADMIT_ALWAYS)?;
                let p = bkb_inclusion_probability(scale, d.posterior_variance_at_x, inverse);
                d.admitted = bkb_include(p, &mut self.streams.inclusion);
                d
            }
        };

        if let Some(y_max) = self.gp.max_target() {
            let p = predictions[index];
            let sd = p.std_dev().max(JITTER.sqrt());
            self.record.z_score_sup = self.record.z_score_sup.max((p.mean - y_max).abs() / sd);
        }
        let mut seconds = timer.elapsed().as_secs_f64();

        let mut sampled_y = None;
        if decision.admitted {
            let y = self.objective.observe(x, &mut self.streams.noise)?;
            let timer = Instant::now();
            self.gp.append_point(x, y)?;
            self.cache.sync(&self.gp)?;
            seconds += timer.elapsed().as_secs_f64();
            self.record.admitted_entropy_sum += decision.conditional_entropy;
            sampled_y = Some(y);
        }

        self.record.total_seconds += seconds;
        self.record.steps.push(StepRecord {
            t,
            chosen_index: index,
            score,
            admitted: decision.admitted,
            sampled_y,
            model_order: self.gp.model_order(),
            conditional_entropy: decision.conditional_entropy,
            posterior_variance: decision.posterior_variance_at_x,
            info_gain: self.gp.information_gain(),
            regret: self.record.f_star - f_values[index],
            step_seconds: seconds,
        });
        Ok(())
    }
}

fn blank_record(config: &BanditConfig, sense: Sense, f_star: f64) -> RunRecord {
    RunRecord {
        policy: config.policy,
        acquisition: config.acquisition,
        seed: config.seed,
        sense,
        warm_start: Vec::new(),
        warm_start_variances: Vec::new(),
        steps: Vec::with_capacity(config.horizon),
        f_star,
        admitted_entropy_sum: 0.0,
        information_gain: 0.0,
        z_score_sup: 0.0,
        total_seconds: 0.0,
        snapshot: PosteriorSnapshot {
            points: Vec::new(),
            targets: Vec::new(),
            noise_variance: config.noise_variance,
            lengthscale: config.kernel.lengthscale,
        },
        failure: None,
    }
}

/// Runs the configured policy for `config.horizon` steps.
///
/// Regret is measured against the best candidate under noiseless access.
pub fn run(config: &BanditConfig, objective: &Objective) -> std::result::Result<RunRecord, RunFailure> {
    let empty_record = |f_star| blank_record(config, objective.sense, f_star);
    let early = |error: Error| {
        let mut partial = empty_record(f64::NAN);
        partial.failure = Some(error.to_string());
        RunFailure {
            error,
            partial: Box::new(partial),
        }
    };

    if let Err(e) = config.validate() {
        return Err(early(e));
    }
    let f_values = match config
        .candidates
        .points()
        .iter()
        .map(|x| objective.value(x))
        .collect::<Result<Vec<f64>>>()
    {
        Ok(v) => v,
        Err(e) => return Err(early(e)),
    };
    let f_star = f_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gp = match GpPosterior::new(config.kernel, config.noise_variance) {
        Ok(gp) => gp,
        Err(e) => return Err(early(e)),
    };

    let mut state = Loop {
        config,
        objective,
        cache: CandidatePosterior::new(config.kernel, config.candidates.points().to_vec()),
        gp,
        streams: RngStreams::new(config.seed),
        record: empty_record(f_star),
    };
    if let Err(e) = state.warm_start() {
        return Err(state.fail(e));
    }
    for t in 1..=config.horizon {
        if let Err(e) = state.step(t, &f_values) {
            return Err(state.fail(e));
        }
    }
    state.record.snapshot = PosteriorSnapshot::of(&state.gp);
    state.record.information_gain = state.gp.information_gain();
    Ok(state.record)
}

/// The uncompressed baseline: every step samples and appends.
pub fn run_dense(config: &BanditConfig, objective: &Objective) -> std::result::Result<RunRecord, RunFailure> {
    let mut dense = config.clone();
    dense.policy = Policy::DenseAdmitAlways;
    run(&dense, objective)
}

pub fn run_bkb(config: &BanditConfig, objective: &Objective) -> std::result::Result<RunRecord, RunFailure> {
    match config.policy {
        Policy::BkbStochastic { .. } => run(config, objective),
        other => {
            let mut partial = blank_record(config, objective.sense, f64::NAN);
            partial.failure = Some("wrong policy".into());
            Err(RunFailure {
                error: Error::Input(format!("run_bkb needs a BKB policy, got {}", other.kind_name())),
                partial: Box::new(partial),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{build_candidates, CandidateSpec};

    fn example_config(policy: Policy, horizon: usize, seed: u64) -> (BanditConfig, Objective) {
        let cands = build_candidates(
            &CandidateSpec::Grid {
                bounds: vec![(0.0, 10.0)],
                points_per_dim: 101,
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let beta = BetaSchedule::FiniteSet {
            cardinality: cands.len(),
            delta: 0.1,
        };
        let config = BanditConfig::new(
            policy,
            horizon,
            AcquisitionKind::Ucb,
            beta,
            0.001,
            KernelSpec::squared_exponential(1.0).unwrap(),
            cands,
            seed,
        );
        (config, Objective::example_1d(0.001))
    }

    fn strip_wallclock(mut r: RunRecord) -> RunRecord {
        r.total_seconds = 0.0;
        for s in &mut r.steps {
            s.step_seconds = 0.0;
        }
        r
    }

    #[test]
    fn single_candidate_has_zero_regret() {
        let cands = CandidateSet::from_points(vec![vec![1.0]]).unwrap();
        let mut config = BanditConfig::new(
            Policy::Compressed { epsilon: 1e-4 },
            1,
            AcquisitionKind::Ucb,
            BetaSchedule::FiniteSet {
                cardinality: 1,
                delta: 0.1,
            },
            0.001,
            KernelSpec::squared_exponential(1.0).unwrap(),
            cands,
            3,
        );
        config.init_count = 0;
        let r = run(&config, &Objective::example_1d(0.001)).unwrap();
        assert_eq!(r.steps[0].chosen_index, 0);
        assert_eq!(r.steps[0].regret, 0.0);
    }

    #[test]
    fn regret_summary_hand_example() {
        let (config, obj) = example_config(Policy::DenseAdmitAlways, 3, 0);
        let mut r = run(&config, &obj).unwrap();
        for (s, (reg, adm)) in r.steps.iter_mut().zip([(1.0, true), (0.0, false), (1.0, true)]) {
            s.regret = reg;
            s.admitted = adm;
        }
        let sum = regret_summary(&r);
        assert_eq!(sum.cumulative, 2.0);
        assert_eq!(sum.compressed, 2.0);
        assert_eq!(sum.mean_average, vec![1.0, 0.5, 2.0 / 3.0]);

        for s in &mut r.steps {
            s.regret = 0.0;
        }
        let sum = regret_summary(&r);
        assert_eq!((sum.cumulative, sum.compressed), (0.0, 0.0));
        assert!(sum.mean_average.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn dense_model_order_grows_linearly() {
        let (config, obj) = example_config(Policy::DenseAdmitAlways, 40, 5);
        let r = run_dense(&config, &obj).unwrap();
        for s in &r.steps {
            assert_eq!(s.model_order, s.t + config.init_count);
            assert!(s.admitted);
        }
        let sum = regret_summary(&r);
        assert_eq!(sum.cumulative, sum.compressed);
    }

    #[test]
    fn sentinel_and_low_budget_match_dense() {
        let (dense_cfg, obj) = example_config(Policy::DenseAdmitAlways, 60, 8);
        let dense = strip_wallclock(run(&dense_cfg, &obj).unwrap());
        for epsilon in [ADMIT_ALWAYS, -10.0] {
            let (cfg, _) = example_config(Policy::Compressed { epsilon }, 60, 8);
            let mut r = strip_wallclock(run(&cfg, &obj).unwrap());
            r.policy = Policy::DenseAdmitAlways;
            assert_eq!(r, dense);
        }
    }

    #[test]
    fn compressed_run_invariants() {
        let (config, obj) = example_config(Policy::Compressed { epsilon: 1e-4 }, 200, 17);
        let r = run(&config, &obj).unwrap();
        let mut prev_order = 0;
        let mut prev_gain = 0.0;
        for s in &r.steps {
            assert!(s.model_order >= prev_order);
            assert!(s.model_order <= s.t + config.init_count);
            assert!(s.info_gain >= prev_gain);
            assert_eq!(s.sampled_y.is_some(), s.admitted);
            assert_eq!(s.admitted, s.conditional_entropy > 1e-4);
            assert!(s.regret >= 0.0);
            prev_order = s.model_order;
            prev_gain = s.info_gain;
        }
        assert!(r.final_model_order() < 200);
        let sum = regret_summary(&r);
        assert!(sum.compressed <= sum.cumulative);
        assert!(r.z_score_sup.is_finite());
    }

    #[test]
    fn admitted_flags_replay_from_dictionary_prefix() {
        let (config, obj) = example_config(Policy::Compressed { epsilon: 1e-4 }, 150, 23);
        let r = run(&config, &obj).unwrap();
        let mut gp = GpPosterior::new(config.kernel, config.noise_variance).unwrap();
        let mut next = 0;
        for _ in &r.warm_start {
            gp.append_point(&r.snapshot.points[next], r.snapshot.targets[next]).unwrap();
            next += 1;
        }
        for s in &r.steps {
            let x = &config.candidates.points()[s.chosen_index];
            let d = gp.admission_test(x, 1e-4).unwrap();
            assert_eq!(d.admitted, s.admitted);
            if s.admitted {
                assert_eq!(&r.snapshot.points[next], x);
                gp.append_point(x, r.snapshot.targets[next]).unwrap();
                next += 1;
            }
        }
        assert_eq!(next, r.final_model_order());
    }

    #[test]
    fn seed_determinism() {
        let (config, obj) = example_config(Policy::Compressed { epsilon: 1e-4 }, 80, 99);
        let a = strip_wallclock(run(&config, &obj).unwrap());
        let b = strip_wallclock(run(&config, &obj).unwrap());
        assert_eq!(a, b);
        let (other, _) = example_config(Policy::Compressed { epsilon: 1e-4 }, 80, 100);
        assert_ne!(a.warm_start, run(&other, &obj).unwrap().warm_start);
    }

    #[test]
    fn paired_seeds_share_warm_start() {
        let (c, obj) = example_config(Policy::Compressed { epsilon: 1e-4 }, 10, 4);
        let (d, _) = example_config(Policy::DenseAdmitAlways, 10, 4);
        let (b, _) = example_config(
            Policy::BkbStochastic {
                scale: 1.0,
                inverse: false,
            },
            10,
            4,
        );
        let wc = run(&c, &obj).unwrap();
        let wd = run(&d, &obj).unwrap();
        let wb = run(&b, &obj).unwrap();
        assert_eq!(wc.warm_start, wd.warm_start);
        assert_eq!(wc.warm_start, wb.warm_start);
        assert_eq!(wc.snapshot.targets[..2], wd.snapshot.targets[..2]);
    }

    #[test]
    fn bkb_with_huge_scale_is_dense() {
        let (d, obj) = example_config(Policy::DenseAdmitAlways, 50, 12);
        let (b, _) = example_config(
            Policy::BkbStochastic {
                scale: 1e6,
                inverse: false,
            },
            50,
            12,
        );
        let mut rb = strip_wallclock(run_bkb(&b, &obj).unwrap());
        let rd = strip_wallclock(run_dense(&d, &obj).unwrap());
        rb.policy = rd.policy;
        assert_eq!(rb, rd);
    }

    #[test]
    fn bkb_with_vanishing_scale_never_admits() {
        let (mut b, obj) = example_config(
            Policy::BkbStochastic {
                scale: 1e-300,
                inverse: false,
            },
            50,
            12,
        );
        b.init_count = 0;
        let r = run_bkb(&b, &obj).unwrap();
        assert_eq!(r.final_model_order(), 0);
        assert!(r.steps.iter().all(|s| !s.admitted && s.posterior_variance == 1.0));
    }

    #[test]
    fn bkb_inclusion_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for (scale, variance) in [(2.0, 0.2), (0.5, 0.6), (10.0, 0.05)] {
            let p = bkb_inclusion_probability(scale, variance, false);
            let n = 10_000;
            let hits = (0..n).filter(|_| bkb_include(p, &mut rng)).count();
            let freq = hits as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "p={p} freq={freq}");
        }
        assert_eq!(bkb_inclusion_probability(1e6, 0.3, false), 1.0);
        assert_eq!(bkb_inclusion_probability(0.1, 0.0, true), 1.0);
        assert_eq!(bkb_inclusion_probability(0.1, 0.5, true), 0.2);
    }

    #[test]
    fn run_bkb_requires_bkb_policy() {
        let (c, obj) = example_config(Policy::DenseAdmitAlways, 5, 0);
        assert!(run_bkb(&c, &obj).is_err());
    }

    #[test]
    fn objective_failure_aborts_with_partial_record() {
        let (mut c, _) = example_config(Policy::DenseAdmitAlways, 5, 0);
        c.candidates = CandidateSet::from_points(vec![vec![0.0], vec![9.0]]).unwrap();
        c.init_count = 1;
        let table = crate::objectives::Table::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let err = run(&c, &Objective::tabulated(table, 0.0)).unwrap_err();
        assert!(!err.partial.is_valid());
        assert!(matches!(err.error, Error::Input(_)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (mut c, obj) = example_config(Policy::Compressed { epsilon: f64::NAN }, 0, 0);
        c.init_count = 1000;
        match run(&c, &obj).unwrap_err().error {
            Error::Config(issues) => assert_eq!(issues.len(), 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn trace_csv_layout() {
        let (config, obj) = example_config(Policy::Compressed { epsilon: 1e-4 }, 5, 1);
        let r = run(&config, &obj).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RunRecord::TRACE_HEADER);
        assert_eq!(lines.len(), 6);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 10));

        let mut buf = Vec::new();
        r.write_summary(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Reg_T=") && text.contains("R_diagnostic="));
    }
}
