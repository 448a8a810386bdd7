//! Episode orchestration, Monte Carlo competitive-ratio estimates and CSV
//! output.
//!
//! Every episode draws one realization of the environment and plays each
//! configured policy against it, so payoffs are paired across policies and
//! with the prophet value of the same realization.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environments::{Environment, FeatureSampler, StageSample};
use crate::error::{Error, Result};
use crate::policies::{
    build_policy, draw_offline_samples, prophet_value, Decision, PolicyConfig, PolicyKind, StoppingPolicy,
};
use crate::rng::{SeedSpec, Stream};
use crate::thresholds::ThresholdSpec;

pub const DEFAULT_RUNS: usize = 200;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub const EPISODE_HEADER: [&str; 9] = [
    "algorithm", "n", "d", "sigma", "ell_n", "seed", "tau", "payoff", "prophet_max",
];
pub const AGGREGATE_HEADER: [&str; 8] = ["algorithm", "n", "d", "sigma", "ratio", "ci_lo", "ci_hi", "runs"];

// Seed path labels below the experiment key.
const ENVIRONMENT_LABEL: u64 = 0;
const EPISODE_LABEL: u64 = 1;
const BOOTSTRAP_LABEL: u64 = 2;
const REALIZATION_LABEL: u64 = 0;
const OFFLINE_LABEL: u64 = 1;
const POLICY_LABEL: u64 = 2;

/// Environment family and its family-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    IidUniform {},
    NoniidRangebox {},
    BernoulliHard { c: f64 },
    BasisHard { theta: Vec<f64> },
    WindowHard { epsilon: f64 },
}

impl EnvSpec {
    pub fn build(&self, horizon: usize, dim: usize, sigma: f64, seed: &SeedSpec) -> Result<Environment> {
        match self {
            EnvSpec::IidUniform {} => Environment::iid_uniform(dim, horizon, sigma, seed),
            EnvSpec::NoniidRangebox {} => Environment::noniid_rangebox(dim, horizon, sigma, seed),
            EnvSpec::BernoulliHard { c } => Environment::bernoulli_hard(*c, horizon, sigma),
            EnvSpec::BasisHard { theta } => Environment::basis_hard(theta.clone(), horizon, sigma),
            EnvSpec::WindowHard { epsilon } => Environment::window_hard(*epsilon, horizon, sigma),
        }
    }

    /// Dimension forced by the family, if any.
    fn fixed_dim(&self) -> Option<usize> {
        match self {
            EnvSpec::BernoulliHard { .. } | EnvSpec::WindowHard { .. } => Some(1),
            EnvSpec::BasisHard { theta } => Some(theta.len()),
            _ => None,
        }
    }

    fn is_stationary(&self) -> bool {
        matches!(self, EnvSpec::IidUniform {} | EnvSpec::BernoulliHard { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    #[default]
    RatioOfMeans,
    MeanOfRatios,
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_seed() -> u64 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// File stem for outputs.
    #[serde(default)]
    pub name: Option<String>,
    /// Numeric experiment key in the seed path.
    #[serde(default)]
    pub experiment: u64,
    pub env: EnvSpec,
    pub n: usize,
    #[serde(default)]
    pub d: Option<usize>,
    pub sigma: f64,
    pub policies: Vec<PolicyConfig>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub ratio_mode: RatioMode,
    /// Draw a fresh theta (and range boxes) for every episode instead of
    /// once per experiment.
    #[serde(default)]
    pub redraw_environment: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    /// Feature dimension: forced by the environment family, else `d`, else 2.
    pub fn dim(&self) -> usize {
        self.env.fixed_dim().or(self.d).unwrap_or(2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.runs < 1 {
            return fail("runs must be at least 1".into());
        }
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if let (Some(fixed), Some(d)) = (self.env.fixed_dim(), self.d) {
            if fixed != d {
                return fail(format!("this environment has d = {fixed}, config says d = {d}"));
            }
        }
        if self.dim() == 0 {
            return fail("d must be positive".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if self.policies.is_empty() {
            return fail("no policies configured".into());
        }
        self.threshold.validate(self.n)?;
        let mut labels = Vec::new();
        for p in &self.policies {
            p.validate(self.n)?;
            if p.kind.requires_stationary() && !self.env.is_stationary() {
                return fail(format!("{} needs an i.i.d. environment", p.label()));
            }
            let label = p.label();
            if labels.contains(&label) {
                return fail(format!("duplicate policy label {label}"));
            }
            labels.push(label);
        }
        // Catches family-specific parameter errors.
        self.env.build(self.n, self.dim(), self.sigma, &self.seed_spec())?;
        Ok(())
    }

    fn seed_spec(&self) -> SeedSpec {
        SeedSpec::with_path(self.seed, &[self.experiment])
    }

    /// Seed path of one policy's randomness in one episode.
    pub fn policy_seed(&self, episode: usize, policy: usize) -> SeedSpec {
        self.episode_seed(episode).child(POLICY_LABEL).child(policy as u64)
    }

    fn episode_seed(&self, episode: usize) -> SeedSpec {
        self.seed_spec().child(EPISODE_LABEL).child(episode as u64)
    }

    fn environment_seed(&self, episode: usize) -> SeedSpec {
        if self.redraw_environment {
            self.episode_seed(episode).child(ENVIRONMENT_LABEL)
        } else {
            self.seed_spec().child(ENVIRONMENT_LABEL)
        }
    }
}

/// A list of experiments run as one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Expand every experiment once per noise level.
    #[serde(default)]
    pub sigmas: Vec<f64>,
    pub experiments: Vec<ExperimentConfig>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("sweep")
    }

    /// The concrete experiments, with `sigmas` expanded.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        if self.sigmas.is_empty() {
            return self.experiments.clone();
        }
        let mut out = Vec::new();
        for e in &self.experiments {
            for &sigma in &self.sigmas {
                let mut c = e.clone();
                c.sigma = sigma;
                c.name = Some(format!("{}_sigma{sigma}", e.name()));
                out.push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub algorithm: String,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    /// Exploration length; 0 for policies without one.
    pub ell_n: usize,
    pub seed: SeedSpec,
    /// `n + 1` when the policy never stopped.
    pub tau: usize,
    pub payoff: f64,
    pub prophet_max: f64,
    pub wall_time: Duration,
}

impl EpisodeResult {
    pub fn stopped(&self) -> bool {
        self.tau <= self.n
    }
}

/// Per-algorithm summary of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmReport {
    pub algorithm: String,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub mean_payoff: f64,
    pub mean_prophet: f64,
    pub ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub runs: usize,
    /// Episodes left out of a mean-of-ratios estimate for a zero prophet value.
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub algorithms: Vec<AlgorithmReport>,
    /// Grouped by policy in config order, then by episode.
    pub episodes: Vec<EpisodeResult>,
}

impl ExperimentReport {
    pub fn algorithm(&self, label: &str) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.algorithm == label)
    }

    pub fn episodes_of(&self, label: &str) -> Vec<&EpisodeResult> {
        self.episodes.iter().filter(|e| e.algorithm == label).collect()
    }

    /// Writes `<name>_episodes.csv` and `<name>_aggregate.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        create_dir(dir)?;
        let episodes = dir.join(format!("{}_episodes.csv", self.config.name()));
        let aggregate = dir.join(format!("{}_aggregate.csv", self.config.name()));
        write_episode_csv(&self.episodes, &episodes)?;
        write_aggregate_csv(&self.algorithms, &aggregate)?;
        Ok((episodes, aggregate))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for episodes; 0 or 1 runs inline.
    pub parallelism: usize,
    /// Directory for per-episode policy traces.
    pub trace_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn with_parallelism(parallelism: usize) -> Self {
        Self {
            parallelism,
            trace_dir: None,
        }
    }
}

/// Feeds `episode` to `policy` until it stops. Returns `(tau, payoff)` with
/// `tau = n + 1` and payoff 0 when it never stops.
pub fn play_episode(policy: &mut dyn StoppingPolicy, episode: &[StageSample]) -> Result<(usize, f64)> {
    for sample in episode {
        if let Decision::Stop(k) = policy.step(sample)? {
            if k == 0 || k > sample.stage {
                return Err(Error::InvalidParameter(format!(
                    "policy selected stage {k} at stage {}",
                    sample.stage
                )));
            }
            return Ok((k, episode[k - 1].reward));
        }
    }
    Ok((episode.len() + 1, 0.0))
}

/// One episode of one policy on a fresh realization drawn from `seed`.
pub fn run_episode(
    policy: &PolicyConfig,
    env: &Environment,
    threshold: &ThresholdSpec,
    seed: &SeedSpec,
) -> Result<EpisodeResult> {
    let started = Instant::now();
    let n = env.horizon();
    let realization = env.episode(&mut seed.child(REALIZATION_LABEL).stream());
    let offline = offline_for(policy, env, &mut seed.child(OFFLINE_LABEL).stream());
    let mut p = build_policy(policy, env, threshold, &offline, seed.child(POLICY_LABEL).stream())?;
    let (tau, payoff) = play_episode(p.as_mut(), &realization)?;
    Ok(EpisodeResult {
        algorithm: policy.label(),
        n,
        d: env.dim(),
        sigma: env.truth().sigma,
        ell_n: ell_of(policy, n),
        seed: seed.clone(),
        tau,
        payoff,
        prophet_max: prophet_value(&realization),
        wall_time: started.elapsed(),
    })
}

fn ell_of(policy: &PolicyConfig, n: usize) -> usize {
    match policy.kind {
        PolicyKind::GuseinZade => 0,
        _ => policy.exploration_length(n),
    }
}

fn offline_for(policy: &PolicyConfig, env: &Environment, rng: &mut Stream) -> Vec<StageSample> {
    if policy.kind == PolicyKind::DosOffline {
        draw_offline_samples(env, &policy.offline_set(env.horizon()), rng)
    } else {
        Vec::new()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// All policies of `config` on episode `index`, sharing its realization.
fn run_shared_episode(
    config: &ExperimentConfig,
    shared_env: Option<&Environment>,
    index: usize,
    trace_dir: Option<&Path>,
) -> Result<Vec<EpisodeResult>> {
    let n = config.n;
    let owned;
    let env = match shared_env {
        Some(e) => e,
        None => {
            owned = config
                .env
                .build(n, config.dim(), config.sigma, &config.environment_seed(index))?;
            &owned
        }
    };
    let seed = config.episode_seed(index);
    let realization = env.episode(&mut seed.child(REALIZATION_LABEL).stream());
    let prophet = prophet_value(&realization);
    let mut offline_rng = seed.child(OFFLINE_LABEL).stream();

    let mut out = Vec::with_capacity(config.policies.len());
    for (k, policy) in config.policies.iter().enumerate() {
        let started = Instant::now();
        let wrap = |e: Error| Error::Episode {
            algorithm: policy.label(),
            episode: index,
            source: Box::new(e),
        };
        let offline = offline_for(policy, env, &mut offline_rng);
        let policy_seed = config.policy_seed(index, k);
        let mut p = build_policy(policy, env, &config.threshold, &offline, policy_seed.stream()).map_err(wrap)?;
        if trace_dir.is_some() {
            p.enable_trace();
        }
        let (tau, payoff) = play_episode(p.as_mut(), &realization).map_err(wrap)?;
        if let Some(dir) = trace_dir {
            let path = dir.join(format!(
                "{}_{}_episode{index}.trace",
                config.name(),
                sanitize(&policy.label())
            ));
            let file = fs::File::create(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            p.trace()
                .write_to(std::io::BufWriter::new(file))
                .map_err(|source| Error::Io { path, source })?;
        }
        out.push(EpisodeResult {
            algorithm: policy.label(),
            n,
            d: env.dim(),
            sigma: config.sigma,
            ell_n: ell_of(policy, n),
            seed: policy_seed,
            tau,
            payoff,
            prophet_max: prophet,
            wall_time: started.elapsed(),
        });
    }
    Ok(out)
}

pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let shared_env = if config.redraw_environment {
        None
    } else {
        Some(config.env.build(config.n, config.dim(), config.sigma, &config.environment_seed(0))?)
    };
    if let Some(dir) = &options.trace_dir {
        create_dir(dir)?;
    }
    let trace_dir = options.trace_dir.as_deref();
    let job = |i: usize| run_shared_episode(config, shared_env.as_ref(), i, trace_dir);

    let per_episode: Vec<Vec<EpisodeResult>> = if options.parallelism <= 1 {
        (0..config.runs).map(job).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.parallelism)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.runs).into_par_iter().map(job).collect::<Result<_>>())?
    };

    let mut episodes = Vec::with_capacity(config.runs * config.policies.len());
    for k in 0..config.policies.len() {
        episodes.extend(per_episode.iter().map(|row| row[k].clone()));
    }
    let algorithms = config
        .policies
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let rows = &episodes[k * config.runs..(k + 1) * config.runs];
            let mut rng = config.seed_spec().child(BOOTSTRAP_LABEL).child(k as u64).stream();
            summarize(&p.label(), config, rows, &mut rng)
        })
        .collect();
    Ok(ExperimentReport {
        config: config.clone(),
        algorithms,
        episodes,
    })
}

/// Runs each experiment in order. One failure does not stop the batch.
pub fn sweep(configs: &[ExperimentConfig], options: &RunOptions) -> Vec<Result<ExperimentReport>> {
    configs.iter().map(|c| run_experiment(c, options)).collect()
}

fn summarize(label: &str, config: &ExperimentConfig, rows: &[EpisodeResult], rng: &mut Stream) -> AlgorithmReport {
    let payoffs: Vec<f64> = rows.iter().map(|r| r.payoff).collect();
    let prophets: Vec<f64> = rows.iter().map(|r| r.prophet_max).collect();
    let (ratio, (ci_lo, ci_hi), dropped) = match config.ratio_mode {
        RatioMode::RatioOfMeans => (
            ratio_of_means(&payoffs, &prophets),
            bootstrap_ratio_interval(&payoffs, &prophets, BOOTSTRAP_RESAMPLES, rng),
            0,
        ),
        RatioMode::MeanOfRatios => {
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.prophet_max != 0.0)
                .map(|r| r.payoff / r.prophet_max)
                .collect();
            (
                mean(&ratios),
                bootstrap_mean_interval(&ratios, BOOTSTRAP_RESAMPLES, rng),
                rows.len() - ratios.len(),
            )
        }
    };
    AlgorithmReport {
        algorithm: label.to_string(),
        n: config.n,
        d: config.dim(),
        sigma: config.sigma,
        mean_payoff: mean(&payoffs),
        mean_prophet: mean(&prophets),
        ratio,
        ci_lo,
        ci_hi,
        runs: rows.len(),
        dropped,
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// `sum(payoff) / sum(prophet)`; NaN when the denominator is zero.
pub fn ratio_of_means(payoffs: &[f64], prophets: &[f64]) -> f64 {
    let den: f64 = prophets.iter().sum();
    if den == 0.0 {
        return f64::NAN;
    }
    payoffs.iter().sum::<f64>() / den
}

/// Percentile interval at 2.5% / 97.5% of sorted bootstrap replicates.
fn percentile_interval(mut reps: Vec<f64>) -> (f64, f64) {
    reps.retain(|v| !v.is_nan());
    if reps.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    reps.sort_by(f64::total_cmp);
    let b = reps.len();
    let lo = ((0.025 * b as f64).floor() as usize).min(b - 1);
    let hi = ((0.975 * b as f64).ceil() as usize).saturating_sub(1).min(b - 1);
    (reps[lo], reps[hi])
}

/// Bootstrap interval of the ratio of means, resampling episode pairs.
pub fn bootstrap_ratio_interval(payoffs: &[f64], prophets: &[f64], resamples: usize, rng: &mut Stream) -> (f64, f64) {
    assert_eq!(payoffs.len(), prophets.len());
    let r = payoffs.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let reps = (0..resamples)
        .map(|_| {
            let (mut num, mut den) = (0.0, 0.0);
            for _ in 0..r {
                let j = rng.index(r);
                num += payoffs[j];
                den += prophets[j];
            }
            if den == 0.0 {
                f64::NAN
            } else {
                num / den
            }
        })
        .collect();
    percentile_interval(reps)
}

pub fn bootstrap_mean_interval(values: &[f64], resamples: usize, rng: &mut Stream) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let reps = (0..resamples)
        .map(|_| (0..r).map(|_| values[rng.index(r)]).sum::<f64>() / r as f64)
        .collect();
    percentile_interval(reps)
}

/// Paired bootstrap of `ratio(a) - ratio(b)` over episodes that share a
/// realization. Returns `(point, lo, hi)`.
pub fn bootstrap_ratio_gap(
    a: &[&EpisodeResult],
    b: &[&EpisodeResult],
    resamples: usize,
    rng: &mut Stream,
) -> (f64, f64, f64) {
    assert_eq!(a.len(), b.len());
    let gap = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut pa, mut pb, mut den) = (0.0, 0.0, 0.0);
        for j in idx {
            pa += a[j].payoff;
            pb += b[j].payoff;
            den += a[j].prophet_max;
        }
        if den == 0.0 {
            f64::NAN
        } else {
            (pa - pb) / den
        }
    };
    let r = a.len();
    let point = gap(&mut (0..r));
    let reps = (0..resamples)
        .map(|_| {
            let draws: Vec<usize> = (0..r).map(|_| rng.index(r)).collect();
            gap(&mut draws.into_iter())
        })
        .collect();
    let (lo, hi) = percentile_interval(reps);
    (point, lo, hi)
}

/// `%.17g`-style formatting: 17 significant digits, trailing zeros trimmed.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{x:.*}", (16 - exp) as usize);
        trim_fraction(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn seed_label(seed: &SeedSpec) -> String {
    let mut s = seed.root_seed.to_string();
    for p in &seed.stream_path {
        s.push('/');
        s.push_str(&p.to_string());
    }
    s
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_episode_csv(results: &[EpisodeResult], path: &Path) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(EPISODE_HEADER).map_err(err)?;
    for r in results {
        w.write_record([
            r.algorithm.clone(),
            r.n.to_string(),
            r.d.to_string(),
            format_float(r.sigma),
            r.ell_n.to_string(),
            seed_label(&r.seed),
            r.tau.to_string(),
            format_float(r.payoff),
            format_float(r.prophet_max),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_aggregate_csv(rows: &[AlgorithmReport], path: &Path) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(AGGREGATE_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.n.to_string(),
            r.d.to_string(),
            format_float(r.sigma),
            format_float(r.ratio),
            format_float(r.ci_lo),
            format_float(r.ci_hi),
            r.runs.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One parsed row of an aggregate CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub runs: usize,
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let header = r.headers().map_err(err)?.clone();
    if let Some(missing) = AGGREGATE_HEADER.iter().find(|h| !header.iter().any(|c| c == **h)) {
        return Err(Error::Config(format!("{}: missing column {missing}", path.display())));
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(err)
}
