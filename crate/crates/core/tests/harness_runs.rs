mod common;

use std::path::PathBuf;

use prophet_lcb::environments::{Environment, StageSample};
use prophet_lcb::harness::{
    play_episode, read_aggregate_csv, run_episode, run_experiment, sweep, write_aggregate_csv, write_episode_csv,
    EnvSpec, EpisodeResult, ExperimentConfig, RatioMode, RunOptions, AGGREGATE_HEADER,
};
use prophet_lcb::policies::{Decision, PolicyConfig, PolicyKind, PolicyTrace, StoppingPolicy};
use prophet_lcb::rng::{SeedSpec, Stream};
use prophet_lcb::thresholds::ThresholdSpec;
use prophet_lcb::Result;

use common::mean;

/// Stops at a fixed stage, or never.
struct StopAt {
    stage: Option<usize>,
    trace: PolicyTrace,
}

/// Stops at a stage drawn uniformly from `1..=n`.
struct StopUniform {
    target: usize,
    trace: PolicyTrace,
}

impl StopUniform {
    fn new(n: usize, rng: &mut Stream) -> Self {
        Self {
            target: rng.index(n) + 1,
            trace: PolicyTrace::default(),
        }
    }
}

impl StoppingPolicy for StopAt {
    fn name(&self) -> &str {
        "stop-at"
    }
    fn step(&mut self, s: &StageSample) -> Result<Decision> {
        Ok(if Some(s.stage) == self.stage { Decision::Stop(s.stage) } else { Decision::Continue })
    }
    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }
}

impl StoppingPolicy for StopUniform {
    fn name(&self) -> &str {
        "uniform"
    }
    fn step(&mut self, s: &StageSample) -> Result<Decision> {
        Ok(if s.stage == self.target { Decision::Stop(s.stage) } else { Decision::Continue })
    }
    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }
}

fn config(env: EnvSpec, n: usize, sigma: f64, runs: usize, kinds: &[PolicyKind]) -> ExperimentConfig {
    ExperimentConfig {
        name: Some("t".into()),
        experiment: 0,
        env,
        n,
        d: None,
        sigma,
        policies: kinds.iter().map(|&k| PolicyConfig::new(k)).collect(),
        runs,
        seed: 4,
        output: PathBuf::from("unused"),
        threshold: ThresholdSpec {
            expectation_replicates: 200,
            ..ThresholdSpec::default()
        },
        ratio_mode: RatioMode::RatioOfMeans,
        redraw_environment: false,
    }
}

#[test]
fn fixed_test_policies() {
    let env = Environment::iid_uniform(2, 20, 0.1, &SeedSpec::new(1)).unwrap();
    let episode = env.episode(&mut SeedSpec::new(2).stream());
    let mut first = StopAt { stage: Some(1), trace: PolicyTrace::default() };
    assert_eq!(play_episode(&mut first, &episode).unwrap(), (1, episode[0].reward));
    let mut never = StopAt { stage: None, trace: PolicyTrace::default() };
    assert_eq!(play_episode(&mut never, &episode).unwrap(), (21, 0.0));
}

#[test]
fn run_episode_replays() {
    let env = Environment::noniid_rangebox(2, 200, 0.2, &SeedSpec::new(1)).unwrap();
    let cfg = PolicyConfig::new(PolicyKind::EtdWindow);
    let spec = ThresholdSpec::default();
    let seed = SeedSpec::with_path(5, &[1, 2]);
    let a = run_episode(&cfg, &env, &spec, &seed).unwrap();
    let b = run_episode(&cfg, &env, &spec, &seed).unwrap();
    assert_eq!((a.tau, a.payoff, a.prophet_max), (b.tau, b.payoff, b.prophet_max));
    assert_eq!(a.ell_n, 35);
    assert!(a.payoff <= a.prophet_max);
}

#[test]
fn deterministic_environment_gives_exact_ratio() {
    let cfg = config(EnvSpec::BasisHard { theta: vec![0.3, 0.9, 0.5] }, 10, 0.0, 25, &[PolicyKind::GuseinZade]);
    let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let a = &report.algorithms[0];
    // The prefix {1, 2, 3} holds the max, so Gusein-Zade never stops.
    assert_eq!(a.ratio, 0.0);
    assert_eq!((a.ci_lo, a.ci_hi), (0.0, 0.0));

    let mut cfg = config(EnvSpec::BasisHard { theta: vec![0.3, 0.1, 0.2, 0.4, 0.9] }, 12, 0.0, 25, &[PolicyKind::GuseinZade]);
    cfg.ratio_mode = RatioMode::MeanOfRatios;
    let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let a = &report.algorithms[0];
    assert_eq!(a.ratio, 1.0);
    assert_eq!((a.ci_lo, a.ci_hi, a.dropped), (1.0, 1.0, 0));
}

#[test]
fn uniform_stopping_ratio_matches_closed_form() {
    let (n, c, runs) = (50usize, 2.0, 10_000u64);
    let env = Environment::bernoulli_hard(c, n, 0.0).unwrap();
    let (mut payoffs, mut prophets) = (Vec::new(), Vec::new());
    for s in 0..runs {
        let seed = SeedSpec::with_path(8, &[s]);
        let episode = env.episode(&mut seed.child(0).stream());
        let mut p = StopUniform::new(n, &mut seed.child(1).stream());
        payoffs.push(play_episode(&mut p, &episode).unwrap().1);
        prophets.push(prophet_value(&episode));
    }
    let p = c / n as f64;
    let want = p / (1.0 - (1.0 - p).powi(n as i32));
    let r = mean(&payoffs) / mean(&prophets);
    // Delta-method standard error of a ratio of means.
    let resid: Vec<f64> = payoffs.iter().zip(&prophets).map(|(a, b)| a - r * b).collect();
    let se = common::std_error(&resid) / mean(&prophets);
    assert!((r - want).abs() <= 3.0 * se, "{r} vs {want} (se {se})");
}

fn prophet_value(episode: &[StageSample]) -> f64 {
    prophet_lcb::policies::prophet_value(episode)
}

#[test]
fn harness_prophet_mean_matches_closed_form() {
    let cfg = config(EnvSpec::WindowHard { epsilon: 0.25 }, 40, 0.3, 4000, &[PolicyKind::GuseinZade]);
    let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let values: Vec<f64> = report.episodes.iter().map(|e| e.prophet_max).collect();
    let (m, se) = (mean(&values), common::std_error(&values));
    assert!((m - 1.75).abs() <= 3.0 * se, "{m}");
}

fn episode_row(tau: usize) -> EpisodeResult {
    EpisodeResult {
        algorithm: "ETD-LCBT(iid)".into(),
        n: 10,
        d: 2,
        sigma: 0.1,
        ell_n: 5,
        seed: SeedSpec::with_path(1, &[0, 1, 3]),
        tau,
        payoff: 0.1 + 0.2,
        prophet_max: 2.0 / 3.0,
        wall_time: Default::default(),
    }
}

#[test]
fn csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    write_episode_csv(&[], &empty).unwrap();
    assert_eq!(
        std::fs::read_to_string(&empty).unwrap(),
        "algorithm,n,d,sigma,ell_n,seed,tau,payoff,prophet_max\n"
    );
    let agg = dir.path().join("agg.csv");
    write_aggregate_csv(&[], &agg).unwrap();
    assert_eq!(std::fs::read_to_string(&agg).unwrap(), format!("{}\n", AGGREGATE_HEADER.join(",")));

    let one = dir.path().join("one.csv");
    write_episode_csv(&[episode_row(4)], &one).unwrap();
    let text = std::fs::read_to_string(&one).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "ETD-LCBT(iid),10,2,0.10000000000000001,5,1/0/1/3,4,0.30000000000000004,0.66666666666666663"
    );
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(EnvSpec::IidUniform {}, 100, 0.3, 20, &[PolicyKind::EtdIid, PolicyKind::GuseinZade]);
    let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let (episodes, aggregate) = report.write_to_dir(dir.path()).unwrap();
    let rows = read_aggregate_csv(&aggregate).unwrap();
    assert_eq!(rows.len(), 2);
    for (row, a) in rows.iter().zip(&report.algorithms) {
        assert_eq!(row.algorithm, a.algorithm);
        assert_eq!((row.ratio, row.ci_lo, row.ci_hi, row.sigma), (a.ratio, a.ci_lo, a.ci_hi, a.sigma));
        assert_eq!((row.n, row.d, row.runs), (100, 2, 20));
    }
    let mut reader = csv::Reader::from_path(&episodes).unwrap();
    let parsed: Vec<(String, f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[7].parse().unwrap(), r[8].parse().unwrap())
        })
        .collect();
    assert_eq!(parsed.len(), 40);
    for (p, e) in parsed.iter().zip(&report.episodes) {
        assert_eq!(p, &(e.algorithm.clone(), e.payoff, e.prophet_max));
    }
}

#[test]
fn aggregate_reader_names_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "algorithm,n,d,sigma,ratio,ci_lo,runs\nx,1,1,0,0.5,0.4,3\n").unwrap();
    let err = read_aggregate_csv(&path).unwrap_err().to_string();
    assert!(err.contains("ci_hi"), "{err}");
}

#[test]
fn sweep_grid_gives_one_row_per_algorithm_and_sigma() {
    let kinds = [PolicyKind::EtdIid, PolicyKind::EpsGreedy, PolicyKind::GuseinZade];
    let configs: Vec<_> = [0.1, 0.5, 0.8]
        .iter()
        .map(|&s| config(EnvSpec::IidUniform {}, 80, s, 6, &kinds))
        .collect();
    let serial = sweep(&configs, &RunOptions::with_parallelism(1));
    let parallel = sweep(&configs, &RunOptions::with_parallelism(8));
    let rows: Vec<_> = serial.iter().flat_map(|r| r.as_ref().unwrap().algorithms.clone()).collect();
    assert_eq!(rows.len(), 9);
    let rows8: Vec<_> = parallel.iter().flat_map(|r| r.as_ref().unwrap().algorithms.clone()).collect();
    assert_eq!(rows, rows8);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    write_aggregate_csv(&rows, &path).unwrap();
    assert_eq!(read_aggregate_csv(&path).unwrap().len(), 9);

    let single = run_experiment(&configs[0], &RunOptions::default()).unwrap();
    assert_eq!(single.algorithms, serial[0].as_ref().unwrap().algorithms);
}

#[test]
fn traces_are_written_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(EnvSpec::IidUniform {}, 50, 0.3, 3, &[PolicyKind::EtdIid, PolicyKind::GuseinZade]);
    let options = RunOptions {
        parallelism: 2,
        trace_dir: Some(dir.path().join("traces")),
    };
    run_experiment(&cfg, &options).unwrap();
    let files = std::fs::read_dir(dir.path().join("traces")).unwrap().count();
    assert_eq!(files, 6);
    let text = std::fs::read_to_string(dir.path().join("traces/t_ETD_LCBT_iid__episode0.trace")).unwrap();
    assert!(text.starts_with("stage lcb alpha decision\n1 - - explore\n"));
}

#[test]
fn episode_errors_carry_context() {
    // The quantile threshold needs a stationary law; validation catches it first.
    let cfg = config(EnvSpec::NoniidRangebox {}, 50, 0.1, 2, &[PolicyKind::EtdIid]);
    assert!(run_experiment(&cfg, &RunOptions::default()).unwrap_err().is_config());
}

#[test]
fn redrawing_the_environment_changes_theta_per_episode() {
    let mut cfg = config(EnvSpec::IidUniform {}, 30, 0.0, 8, &[PolicyKind::GuseinZade]);
    let fixed = run_experiment(&cfg, &RunOptions::default()).unwrap();
    cfg.redraw_environment = true;
    let redrawn = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let a: Vec<f64> = fixed.episodes.iter().map(|e| e.prophet_max).collect();
    let b: Vec<f64> = redrawn.episodes.iter().map(|e| e.prophet_max).collect();
    assert_ne!(a, b);
}
