//! Sequential stopping policies.
//!
//! Each policy sees stages in order and answers [`Decision::Continue`] or
//! [`Decision::Stop`]. The LCB policies learn the latent parameter from
//! noisy observations and compare each stage's lower confidence bound with
//! a Monte Carlo threshold; the Gusein-Zade rule is the distribution-free
//! baseline.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environments::{Environment, FeatureSampler, StageSample};
use crate::error::{Error, Result};
use crate::estimator::{ConfidenceParams, LcbSnapshot, RidgeState};
use crate::rng::Stream;
use crate::thresholds::{
    expected_max_threshold, quantile_threshold, window_threshold, LazyQuantileThreshold,
    ThresholdKind, ThresholdSpec,
};

const THRESHOLD_LABEL: u64 = 1;
const COIN_LABEL: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    /// Accept the stage with this 1-based index.
    Stop(usize),
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Continue => write!(f, "continue"),
            Decision::Stop(i) => write!(f, "stop({i})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    EtdIid,
    EtdNonIid,
    EpsGreedy,
    EtdWindow,
    DosOffline,
    GuseinZade,
}

impl PolicyKind {
    pub fn tag(&self) -> &'static str {
        match self {
            PolicyKind::EtdIid => "ETD-LCBT(iid)",
            PolicyKind::EtdNonIid => "ETD-LCBT(non-iid)",
            PolicyKind::EpsGreedy => "eps-Greedy-LCBT",
            PolicyKind::EtdWindow => "ETD-LCBT-WA",
            PolicyKind::DosOffline => "DOS-LCBT",
            PolicyKind::GuseinZade => "Gusein-Zade",
        }
    }

    /// Policies whose threshold is a quantile of the stationary feature law.
    pub fn requires_stationary(&self) -> bool {
        matches!(self, PolicyKind::EtdIid | PolicyKind::EpsGreedy)
    }

    pub fn threshold_kind(&self) -> Option<ThresholdKind> {
        match self {
            PolicyKind::EtdIid => Some(ThresholdKind::QuantileIid),
            PolicyKind::EpsGreedy => Some(ThresholdKind::QuantileDynamic),
            PolicyKind::EtdNonIid => Some(ThresholdKind::ExpectedMaxFuture),
            PolicyKind::EtdWindow => Some(ThresholdKind::ExpectedMaxWindow),
            PolicyKind::DosOffline => Some(ThresholdKind::ExpectedMaxAll),
            PolicyKind::GuseinZade => None,
        }
    }

    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::EtdIid,
        PolicyKind::EtdNonIid,
        PolicyKind::EpsGreedy,
        PolicyKind::EtdWindow,
        PolicyKind::DosOffline,
        PolicyKind::GuseinZade,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthFormula {
    #[serde(rename = "n^{2/3}")]
    TwoThirdsPower,
}

/// Exploration length: a stage count or a formula in the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExplorationLength {
    Stages(usize),
    Formula(LengthFormula),
}

impl Default for ExplorationLength {
    fn default() -> Self {
        ExplorationLength::Formula(LengthFormula::TwoThirdsPower)
    }
}

impl ExplorationLength {
    pub fn resolve(&self, horizon: usize) -> usize {
        match self {
            ExplorationLength::Stages(l) => *l,
            ExplorationLength::Formula(LengthFormula::TwoThirdsPower) => ceil_two_thirds_power(horizon),
        }
    }
}

/// Smallest `l` with `l^3 >= n^2`, i.e. `ceil(n^(2/3))`.
fn ceil_two_thirds_power(n: usize) -> usize {
    let target = (n as u128) * (n as u128);
    let mut l = (n as f64).powf(2.0 / 3.0).ceil() as u128;
    while l > 0 && (l - 1).pow(3) >= target {
        l -= 1;
    }
    while l.pow(3) < target {
        l += 1;
    }
    l as usize
}

fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Report label; defaults to the kind's tag.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub ell_n: ExplorationLength,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Window size for the window-access policy; defaults to `ell_n + 1`.
    #[serde(default)]
    pub window: Option<usize>,
    /// Offline stage set for the offline-sample policy; defaults to `1..=ell_n`.
    #[serde(default)]
    pub offline_stages: Option<Vec<usize>>,
    /// Run the Gusein-Zade rule on latent rewards instead of observations.
    #[serde(default)]
    pub baseline_on_latent: bool,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            name: None,
            ell_n: ExplorationLength::default(),
            beta: 1.0,
            window: None,
            offline_stages: None,
            baseline_on_latent: false,
        }
    }

    pub fn with_ell(mut self, ell: usize) -> Self {
        self.ell_n = ExplorationLength::Stages(ell);
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.tag().to_string())
    }

    pub fn exploration_length(&self, horizon: usize) -> usize {
        self.ell_n.resolve(horizon)
    }

    pub fn window_size(&self, horizon: usize) -> usize {
        self.window
            .unwrap_or_else(|| self.exploration_length(horizon) + 1)
    }

    pub fn offline_set(&self, horizon: usize) -> Vec<usize> {
        self.offline_stages
            .clone()
            .unwrap_or_else(|| (1..=self.exploration_length(horizon)).collect())
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.kind == PolicyKind::GuseinZade {
            return Ok(());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "{}: beta must be positive, got {}",
                self.label(),
                self.beta
            )));
        }
        let ell = self.exploration_length(horizon);
        if ell < 1 || ell >= horizon {
            return Err(Error::Config(format!(
                "{}: exploration length must satisfy 1 <= ell_n < n, got ell_n = {ell}, n = {horizon}",
                self.label()
            )));
        }
        if self.kind == PolicyKind::EtdWindow {
            let w = self.window_size(horizon);
            if w <= ell {
                return Err(Error::Config(format!(
                    "{}: window size {w} must exceed ell_n = {ell}",
                    self.label()
                )));
            }
        }
        if self.kind == PolicyKind::DosOffline {
            let set = self.offline_set(horizon);
            if set.is_empty() {
                return Err(Error::EmptyOfflineSet);
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() || sorted[0] == 0 || *sorted.last().unwrap() > horizon {
                return Err(Error::Config(format!(
                    "{}: offline stages must be distinct and within 1..={horizon}",
                    self.label()
                )));
            }
        }
        Ok(())
    }
}

/// One line of a policy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub stage: usize,
    /// The stage was used for learning only.
    pub explored: bool,
    pub lcb: Option<f64>,
    pub alpha: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyTrace {
    pub enabled: bool,
    pub records: Vec<TraceRecord>,
    pub tau: Option<usize>,
}

impl PolicyTrace {
    fn push(&mut self, stage: usize, explored: bool, lcb: Option<f64>, alpha: Option<f64>, decision: Decision) {
        if let Decision::Stop(_) = decision {
            if self.tau.is_none() {
                self.tau = Some(stage);
            }
        }
        if self.enabled {
            self.records.push(TraceRecord {
                stage,
                explored,
                lcb,
                alpha,
                decision,
            });
        }
    }

    /// Writes one line per record: `stage lcb alpha decision`.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        fn num(v: Option<f64>) -> String {
            v.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into())
        }
        writeln!(out, "stage lcb alpha decision")?;
        for r in &self.records {
            let decision = if r.explored {
                "explore".to_string()
            } else {
                r.decision.to_string()
            };
            writeln!(out, "{} {} {} {}", r.stage, num(r.lcb), num(r.alpha), decision)?;
        }
        Ok(())
    }
}

pub trait StoppingPolicy {
    fn name(&self) -> &str;

    /// Processes stage `sample.stage`. Stages must arrive as 1, 2, 3, ...
    fn step(&mut self, sample: &StageSample) -> Result<Decision>;

    fn trace(&self) -> &PolicyTrace;

    /// Record every decision for later inspection.
    fn enable_trace(&mut self) {}

    /// Test hook: add a constant to every LCB the policy compares.
    #[doc(hidden)]
    fn set_lcb_offset(&mut self, _offset: f64) {}
}

#[derive(Debug, Clone)]
struct StageCursor {
    next: usize,
}

impl StageCursor {
    fn new() -> Self {
        Self { next: 1 }
    }

    fn advance(&mut self, stage: usize) -> Result<()> {
        if stage != self.next {
            return Err(Error::OutOfOrderStage {
                expected: self.next,
                got: stage,
            });
        }
        self.next += 1;
        Ok(())
    }
}

fn confidence_params(env_truth_sigma: f64, s_bound: f64, l_bound: f64, horizon: usize, dim: usize, beta: f64) -> ConfidenceParams {
    ConfidenceParams {
        sigma: env_truth_sigma,
        s_bound,
        l_bound,
        horizon,
        dim,
        beta,
    }
}

/// Which threshold an explore-then-decide policy fixes after exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtdThreshold {
    /// Upper `(1 - 1/n)` quantile of the LCB law.
    Quantile,
    /// Half the expected future maximum of estimated rewards.
    ExpectedMaxFuture,
}

/// Explore for `ell` stages, fix the threshold, then stop at the first
/// stage whose LCB reaches it.
pub struct EtdLcbt<'a, S: FeatureSampler + ?Sized> {
    sampler: &'a S,
    params: ConfidenceParams,
    threshold: EtdThreshold,
    spec: ThresholdSpec,
    ell: usize,
    ridge: RidgeState,
    snapshot: Option<LcbSnapshot>,
    alpha: Option<f64>,
    fixed_alpha: Option<f64>,
    rng: Stream,
    cursor: StageCursor,
    trace: PolicyTrace,
    lcb_offset: f64,
}

impl<'a, S: FeatureSampler + ?Sized> EtdLcbt<'a, S> {
    pub fn new(
        sampler: &'a S,
        params: ConfidenceParams,
        threshold: EtdThreshold,
        spec: ThresholdSpec,
        ell: usize,
        rng: Stream,
    ) -> Result<Self> {
        params.validate()?;
        if ell == 0 || ell >= params.horizon {
            return Err(Error::InvalidParameter(format!(
                "exploration length must satisfy 1 <= ell < n, got {ell}"
            )));
        }
        if threshold == EtdThreshold::Quantile && !sampler.is_stationary() {
            return Err(Error::NonStationarySampler);
        }
        Ok(Self {
            sampler,
            ridge: RidgeState::new(params.dim, params.beta)?,
            params,
            threshold,
            spec,
            ell,
            snapshot: None,
            alpha: None,
            fixed_alpha: None,
            rng,
            cursor: StageCursor::new(),
            trace: PolicyTrace::default(),
            lcb_offset: 0.0,
        })
    }

    /// Use `alpha` instead of computing the threshold after exploration.
    pub fn with_fixed_threshold(mut self, alpha: f64) -> Self {
        self.fixed_alpha = Some(alpha);
        self
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn threshold(&self) -> Option<f64> {
        self.alpha
    }

    fn compute_threshold(&mut self) -> Result<f64> {
        if let Some(a) = self.fixed_alpha {
            return Ok(a);
        }
        let mut rng = self.rng.split(THRESHOLD_LABEL);
        match self.threshold {
            EtdThreshold::Quantile => quantile_threshold(
                &self.ridge,
                &self.params,
                self.sampler,
                self.ell,
                self.spec.quantile_samples(self.params.horizon),
                &mut rng,
            ),
            EtdThreshold::ExpectedMaxFuture => expected_max_threshold(
                &self.ridge.estimate(),
                self.sampler,
                self.ell + 1..=self.params.horizon,
                self.spec.expectation_replicates,
                &mut rng,
            ),
        }
    }
}

impl<S: FeatureSampler + ?Sized> StoppingPolicy for EtdLcbt<'_, S> {
    fn name(&self) -> &str {
        match self.threshold {
            EtdThreshold::Quantile => PolicyKind::EtdIid.tag(),
            EtdThreshold::ExpectedMaxFuture => PolicyKind::EtdNonIid.tag(),
        }
    }

    fn step(&mut self, sample: &StageSample) -> Result<Decision> {
        let i = sample.stage;
        self.cursor.advance(i)?;
        if i <= self.ell {
            self.ridge.absorb(&sample.x, sample.observation);
            if i == self.ell {
                self.snapshot = Some(self.ridge.snapshot(&self.params, self.ell));
                self.alpha = Some(self.compute_threshold()?);
            }
            self.trace.push(i, true, None, None, Decision::Continue);
            return Ok(Decision::Continue);
        }
        let snap = self.snapshot.as_ref().expect("threshold fixed after exploration");
        let alpha = self.alpha.expect("threshold fixed after exploration");
        let lcb = snap.lcb(&sample.x) + self.lcb_offset;
        let decision = if lcb >= alpha {
            Decision::Stop(i)
        } else {
            Decision::Continue
        };
        self.trace.push(i, false, Some(lcb), Some(alpha), decision);
        Ok(decision)
    }

    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }

    fn enable_trace(&mut self) {
        self.trace.enabled = true;
    }

    fn set_lcb_offset(&mut self, offset: f64) {
        self.lcb_offset = offset;
    }
}

/// Explores each stage independently with probability `epsilon` and
/// otherwise stops iff the stage's LCB reaches the current quantile
/// threshold of the LCB law.
pub struct EpsGreedyLcbt<'a, S: FeatureSampler + ?Sized> {
    sampler: &'a S,
    params: ConfidenceParams,
    epsilon: f64,
    samples: usize,
    recompute_always: bool,
    ridge: RidgeState,
    coins: Stream,
    threshold_root: Stream,
    refreshes: u64,
    current: Option<LazyQuantileThreshold>,
    cursor: StageCursor,
    trace: PolicyTrace,
    lcb_offset: f64,
}

impl<'a, S: FeatureSampler + ?Sized> EpsGreedyLcbt<'a, S> {
    /// `epsilon = sqrt(ell / n)`.
    pub fn new(
        sampler: &'a S,
        params: ConfidenceParams,
        spec: &ThresholdSpec,
        ell: usize,
        rng: Stream,
    ) -> Result<Self> {
        if ell == 0 || ell > params.horizon {
            return Err(Error::InvalidParameter(format!(
                "exploration length must satisfy 1 <= ell <= n, got {ell}"
            )));
        }
        let epsilon = (ell as f64 / params.horizon as f64).sqrt();
        Self::with_epsilon(sampler, params, spec, epsilon, rng)
    }

    pub fn with_epsilon(
        sampler: &'a S,
        params: ConfidenceParams,
        spec: &ThresholdSpec,
        epsilon: f64,
        rng: Stream,
    ) -> Result<Self> {
        params.validate()?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "exploration probability must be in [0, 1], got {epsilon}"
            )));
        }
        if !sampler.is_stationary() {
            return Err(Error::NonStationarySampler);
        }
        Ok(Self {
            sampler,
            ridge: RidgeState::new(params.dim, params.beta)?,
            params,
            epsilon,
            samples: spec.quantile_samples(params.horizon),
            recompute_always: spec.recompute_always,
            coins: rng.split(COIN_LABEL),
            threshold_root: rng.split(THRESHOLD_LABEL),
            refreshes: 0,
            current: None,
            cursor: StageCursor::new(),
            trace: PolicyTrace::default(),
            lcb_offset: 0.0,
        })
    }

    /// Starts from an already trained estimator.
    pub fn with_state(mut self, ridge: RidgeState) -> Self {
        assert_eq!(ridge.dim(), self.params.dim);
        self.ridge = ridge;
        self.current = None;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Size of the exploration set so far.
    pub fn exploration_count(&self) -> usize {
        self.ridge.count()
    }

    /// Number of threshold computations started so far.
    pub fn threshold_refreshes(&self) -> u64 {
        self.refreshes
    }
}

impl<S: FeatureSampler + ?Sized> StoppingPolicy for EpsGreedyLcbt<'_, S> {
    fn name(&self) -> &str {
        PolicyKind::EpsGreedy.tag()
    }

    fn step(&mut self, sample: &StageSample) -> Result<Decision> {
        let i = sample.stage;
        self.cursor.advance(i)?;
        if self.coins.bernoulli(self.epsilon) {
            self.ridge.absorb(&sample.x, sample.observation);
            self.current = None;
            self.trace.push(i, true, None, None, Decision::Continue);
            return Ok(Decision::Continue);
        }
        // Without data every unit-norm feature has the same LCB, so the
        // quantile collapses onto it; wait for the first observation.
        if self.ridge.count() == 0 {
            self.trace.push(i, false, None, None, Decision::Continue);
            return Ok(Decision::Continue);
        }
        if self.current.is_none() || self.recompute_always {
            let rng = self.threshold_root.split(self.refreshes);
            self.refreshes += 1;
            self.current = Some(LazyQuantileThreshold::new(
                &self.ridge,
                &self.params,
                self.sampler,
                self.ridge.count(),
                self.samples,
                rng,
            )?);
        }
        let threshold = self.current.as_mut().expect("threshold initialized above");
        let lcb = threshold.snapshot().lcb(&sample.x) + self.lcb_offset;
        let met = threshold.is_met(self.sampler, lcb);
        let alpha = if self.trace.enabled {
            Some(threshold.resolve(self.sampler))
        } else {
            threshold.value()
        };
        let decision = if met { Decision::Stop(i) } else { Decision::Continue };
        self.trace.push(i, false, Some(lcb), alpha, decision);
        Ok(decision)
    }

    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }

    fn enable_trace(&mut self) {
        self.trace.enabled = true;
    }

    fn set_lcb_offset(&mut self, offset: f64) {
        self.lcb_offset = offset;
    }
}

/// Index of the largest LCB among stages `first..first + lcbs.len()` if it
/// reaches `alpha`. Ties go to the smallest index.
pub fn window_select(lcbs: &[f64], first: usize, alpha: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (offset, &v) in lcbs.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((first + offset, v));
        }
    }
    best.filter(|&(_, v)| v >= alpha).map(|(k, _)| k)
}

/// Explore-then-decide with a single look back over the window at stage
/// `ell + 1`.
pub struct EtdWindowLcbt<'a, S: FeatureSampler + ?Sized> {
    sampler: &'a S,
    params: ConfidenceParams,
    spec: ThresholdSpec,
    ell: usize,
    window: usize,
    ridge: RidgeState,
    observed: Vec<Vec<f64>>,
    snapshot: Option<LcbSnapshot>,
    alpha: Option<f64>,
    fixed_alpha: Option<f64>,
    backward_stops: usize,
    rng: Stream,
    cursor: StageCursor,
    trace: PolicyTrace,
    lcb_offset: f64,
}

impl<'a, S: FeatureSampler + ?Sized> EtdWindowLcbt<'a, S> {
    pub fn new(
        sampler: &'a S,
        params: ConfidenceParams,
        spec: ThresholdSpec,
        ell: usize,
        window: usize,
        rng: Stream,
    ) -> Result<Self> {
        params.validate()?;
        if ell == 0 || ell >= params.horizon {
            return Err(Error::InvalidParameter(format!(
                "exploration length must satisfy 1 <= ell < n, got {ell}"
            )));
        }
        if window <= ell {
            return Err(Error::InvalidParameter(format!(
                "window size {window} must exceed the exploration length {ell}"
            )));
        }
        Ok(Self {
            sampler,
            ridge: RidgeState::new(params.dim, params.beta)?,
            params,
            spec,
            ell,
            window,
            observed: Vec::with_capacity(ell),
            snapshot: None,
            alpha: None,
            fixed_alpha: None,
            backward_stops: 0,
            rng,
            cursor: StageCursor::new(),
            trace: PolicyTrace::default(),
            lcb_offset: 0.0,
        })
    }

    pub fn with_fixed_threshold(mut self, alpha: f64) -> Self {
        self.fixed_alpha = Some(alpha);
        self
    }

    pub fn threshold(&self) -> Option<f64> {
        self.alpha
    }

    /// Stops that selected an earlier stage than the current one.
    pub fn backward_stops(&self) -> usize {
        self.backward_stops
    }
}

impl<S: FeatureSampler + ?Sized> StoppingPolicy for EtdWindowLcbt<'_, S> {
    fn name(&self) -> &str {
        PolicyKind::EtdWindow.tag()
    }

    fn step(&mut self, sample: &StageSample) -> Result<Decision> {
        let i = sample.stage;
        self.cursor.advance(i)?;
        if i <= self.ell {
            self.ridge.absorb(&sample.x, sample.observation);
            self.observed.push(sample.x.clone());
            self.trace.push(i, true, None, None, Decision::Continue);
            return Ok(Decision::Continue);
        }
        if i == self.ell + 1 {
            let theta_hat = self.ridge.estimate();
            let alpha = match self.fixed_alpha {
                Some(a) => a,
                None => window_threshold(
                    &theta_hat,
                    &self.observed,
                    self.sampler,
                    self.ell + 1..=self.params.horizon,
                    self.spec.expectation_replicates,
                    &mut self.rng.split(THRESHOLD_LABEL),
                )?,
            };
            let snap = self.ridge.snapshot(&self.params, self.ell);
            let first = (i + 1).saturating_sub(self.window).max(1);
            let lcbs: Vec<f64> = self.observed[first - 1..]
                .iter()
                .chain(std::iter::once(&sample.x))
                .map(|x| snap.lcb(x) + self.lcb_offset)
                .collect();
            let chosen = window_select(&lcbs, first, alpha);
            self.alpha = Some(alpha);
            self.snapshot = Some(snap);
            self.observed = Vec::new();
            let best = lcbs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let decision = match chosen {
                Some(k) => {
                    if k < i {
                        self.backward_stops += 1;
                    }
                    Decision::Stop(k)
                }
                None => Decision::Continue,
            };
            self.trace.push(i, false, Some(best), Some(alpha), decision);
            return Ok(decision);
        }
        let snap = self.snapshot.as_ref().expect("threshold fixed at ell + 1");
        let alpha = self.alpha.expect("threshold fixed at ell + 1");
        let lcb = snap.lcb(&sample.x) + self.lcb_offset;
        let decision = if lcb >= alpha {
            Decision::Stop(i)
        } else {
            Decision::Continue
        };
        self.trace.push(i, false, Some(lcb), Some(alpha), decision);
        Ok(decision)
    }

    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }

    fn enable_trace(&mut self) {
        self.trace.enabled = true;
    }

    fn set_lcb_offset(&mut self, offset: f64) {
        self.lcb_offset = offset;
    }
}

/// Learns from offline samples only and thresholds from stage 1 onward.
pub struct DosLcbt<'a, S: FeatureSampler + ?Sized> {
    sampler: &'a S,
    params: ConfidenceParams,
    spec: ThresholdSpec,
    ridge: RidgeState,
    offline_count: usize,
    snapshot: LcbSnapshot,
    alpha: Option<f64>,
    rng: Stream,
    cursor: StageCursor,
    trace: PolicyTrace,
    lcb_offset: f64,
}

impl<'a, S: FeatureSampler + ?Sized> DosLcbt<'a, S> {
    /// `offline` holds the `(x, y)` pairs drawn from the offline stage set.
    pub fn new(
        sampler: &'a S,
        params: ConfidenceParams,
        spec: ThresholdSpec,
        offline: &[StageSample],
        rng: Stream,
    ) -> Result<Self> {
        params.validate()?;
        if offline.is_empty() {
            return Err(Error::EmptyOfflineSet);
        }
        let mut ridge = RidgeState::new(params.dim, params.beta)?;
        for s in offline {
            ridge.absorb(&s.x, s.observation);
        }
        let snapshot = ridge.snapshot(&params, offline.len());
        Ok(Self {
            sampler,
            params,
            spec,
            ridge,
            offline_count: offline.len(),
            snapshot,
            alpha: None,
            rng,
            cursor: StageCursor::new(),
            trace: PolicyTrace::default(),
            lcb_offset: 0.0,
        })
    }

    pub fn with_fixed_threshold(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn offline_count(&self) -> usize {
        self.offline_count
    }

    pub fn threshold(&mut self) -> Result<f64> {
        if let Some(a) = self.alpha {
            return Ok(a);
        }
        let a = expected_max_threshold(
            &self.snapshot.theta_hat,
            self.sampler,
            1..=self.params.horizon,
            self.spec.expectation_replicates,
            &mut self.rng.split(THRESHOLD_LABEL),
        )?;
        self.alpha = Some(a);
        Ok(a)
    }
}

impl<S: FeatureSampler + ?Sized> StoppingPolicy for DosLcbt<'_, S> {
    fn name(&self) -> &str {
        PolicyKind::DosOffline.tag()
    }

    fn step(&mut self, sample: &StageSample) -> Result<Decision> {
        let i = sample.stage;
        self.cursor.advance(i)?;
        let alpha = self.threshold()?;
        let lcb = self.snapshot.lcb(&sample.x) + self.lcb_offset;
        let decision = if lcb >= alpha {
            Decision::Stop(i)
        } else {
            Decision::Continue
        };
        self.trace.push(i, false, Some(lcb), Some(alpha), decision);
        Ok(decision)
    }

    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }

    fn enable_trace(&mut self) {
        self.trace.enabled = true;
    }

    fn set_lcb_offset(&mut self, offset: f64) {
        self.lcb_offset = offset;
    }
}

/// Skip the first `floor(n/e)` stages, then accept the first value that
/// strictly beats everything seen in the skipped prefix.
pub struct GuseinZade {
    prefix: usize,
    prefix_max: f64,
    on_latent: bool,
    cursor: StageCursor,
    trace: PolicyTrace,
}

impl GuseinZade {
    pub fn new(horizon: usize) -> Self {
        Self {
            prefix: (horizon as f64 / std::f64::consts::E).floor() as usize,
            prefix_max: f64::NEG_INFINITY,
            on_latent: false,
            cursor: StageCursor::new(),
            trace: PolicyTrace::default(),
        }
    }

    /// Judge stages by latent rewards instead of noisy observations.
    pub fn on_latent(mut self, yes: bool) -> Self {
        self.on_latent = yes;
        self
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix
    }
}

impl StoppingPolicy for GuseinZade {
    fn name(&self) -> &str {
        PolicyKind::GuseinZade.tag()
    }

    fn step(&mut self, sample: &StageSample) -> Result<Decision> {
        let i = sample.stage;
        self.cursor.advance(i)?;
        let value = if self.on_latent {
            sample.reward
        } else {
            sample.observation
        };
        let decision = if i <= self.prefix {
            self.prefix_max = self.prefix_max.max(value);
            Decision::Continue
        } else if value > self.prefix_max {
            Decision::Stop(i)
        } else {
            Decision::Continue
        };
        self.trace
            .push(i, i <= self.prefix, Some(value), Some(self.prefix_max), decision);
        Ok(decision)
    }

    fn trace(&self) -> &PolicyTrace {
        &self.trace
    }

    fn enable_trace(&mut self) {
        self.trace.enabled = true;
    }
}

/// Offline pairs `(x_t, y_t)` for each stage in `stages`, independent of
/// the online realization.
pub fn draw_offline_samples(env: &Environment, stages: &[usize], rng: &mut Stream) -> Vec<StageSample> {
    stages.iter().map(|&t| env.run_stage(t, rng)).collect()
}

/// Instantiates `config` against `env` for one episode. `rng` supplies all
/// of the policy's own randomness.
pub fn build_policy<'a>(
    config: &PolicyConfig,
    env: &'a Environment,
    spec: &ThresholdSpec,
    offline: &[StageSample],
    rng: Stream,
) -> Result<Box<dyn StoppingPolicy + 'a>> {
    let n = env.horizon();
    config.validate(n)?;
    let truth = env.truth();
    let params = confidence_params(truth.sigma, truth.s_bound, truth.l_bound, n, env.dim(), config.beta);
    let ell = config.exploration_length(n);
    Ok(match config.kind {
        PolicyKind::EtdIid => Box::new(EtdLcbt::new(env, params, EtdThreshold::Quantile, spec.clone(), ell, rng)?),
        PolicyKind::EtdNonIid => Box::new(EtdLcbt::new(
            env,
            params,
            EtdThreshold::ExpectedMaxFuture,
            spec.clone(),
            ell,
            rng,
        )?),
        PolicyKind::EpsGreedy => Box::new(EpsGreedyLcbt::new(env, params, spec, ell, rng)?),
        PolicyKind::EtdWindow => Box::new(EtdWindowLcbt::new(
            env,
            params,
            spec.clone(),
            ell,
            config.window_size(n),
            rng,
        )?),
        PolicyKind::DosOffline => Box::new(DosLcbt::new(env, params, spec.clone(), offline, rng)?),
        PolicyKind::GuseinZade => Box::new(GuseinZade::new(n).on_latent(config.baseline_on_latent)),
    })
}

/// `max_i X_i` over latent rewards of a complete episode; 0 for an empty one.
pub fn prophet_value(episode: &[StageSample]) -> f64 {
    if episode.is_empty() {
        return 0.0;
    }
    episode.iter().map(|s| s.reward).fold(f64::NEG_INFINITY, f64::max)
}
