//! Monte Carlo threshold rules.
//!
//! Two families: the upper `(1 - 1/n)` quantile of the LCB law under the
//! stationary feature distribution, and half the expected maximum of the
//! estimated mean reward over a range of stages (optionally combined with
//! already observed features).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::environments::FeatureSampler;
use crate::error::{Error, Result};
use crate::estimator::{dot, ConfidenceParams, LcbSnapshot, RidgeState};
use crate::rng::Stream;

pub const DEFAULT_QUANTILE_SAMPLES_PER_STAGE: usize = 50;
pub const DEFAULT_EXPECTATION_REPLICATES: usize = 2000;
pub const MIN_QUANTILE_SAMPLES_PER_STAGE: usize = 10;
pub const MIN_EXPECTATION_REPLICATES: usize = 100;

/// Largest `k` for which the bounded heap is used instead of selection.
const HEAP_SELECTION_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    QuantileIid,
    QuantileDynamic,
    ExpectedMaxFuture,
    ExpectedMaxWindow,
    ExpectedMaxAll,
}

/// Monte Carlo budgets for threshold computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSpec {
    /// Absolute quantile sample count; overrides `quantile_samples_per_stage`.
    pub quantile_samples: Option<usize>,
    /// Quantile sample count as a multiple of the horizon.
    pub quantile_samples_per_stage: usize,
    pub expectation_replicates: usize,
    /// Recompute the dynamic threshold at every decision round, even when
    /// the estimator did not change.
    pub recompute_always: bool,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            quantile_samples: None,
            quantile_samples_per_stage: DEFAULT_QUANTILE_SAMPLES_PER_STAGE,
            expectation_replicates: DEFAULT_EXPECTATION_REPLICATES,
            recompute_always: false,
        }
    }
}

impl ThresholdSpec {
    pub fn quantile_samples(&self, horizon: usize) -> usize {
        self.quantile_samples
            .unwrap_or(self.quantile_samples_per_stage * horizon)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let m_q = self.quantile_samples(horizon);
        if m_q < MIN_QUANTILE_SAMPLES_PER_STAGE * horizon {
            return Err(Error::Config(format!(
                "quantile sample count {m_q} is below {} x n = {}",
                MIN_QUANTILE_SAMPLES_PER_STAGE,
                MIN_QUANTILE_SAMPLES_PER_STAGE * horizon
            )));
        }
        if self.expectation_replicates < MIN_EXPECTATION_REPLICATES {
            return Err(Error::Config(format!(
                "expectation_replicates must be at least {MIN_EXPECTATION_REPLICATES}, got {}",
                self.expectation_replicates
            )));
        }
        Ok(())
    }
}

/// 1-based rank `ceil(m (1 - 1/n))` of the order statistic used as threshold.
pub fn quantile_rank(samples: usize, horizon: usize) -> usize {
    let (m, n) = (samples as u128, horizon as u128);
    let r = (m * (n - 1)).div_ceil(n);
    r.clamp(1, m) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming k-th largest value.
enum UpperSelector {
    Heap { k: usize, heap: BinaryHeap<Reverse<Key>> },
    Buffer { k: usize, values: Vec<f64> },
}

impl UpperSelector {
    fn new(k: usize, total: usize) -> Self {
        if k <= HEAP_SELECTION_LIMIT {
            Self::Heap {
                k,
                heap: BinaryHeap::with_capacity(k + 1),
            }
        } else {
            Self::Buffer {
                k,
                values: Vec::with_capacity(total),
            }
        }
    }

    /// A value that cannot change the result if a candidate is `<=` it.
    fn floor(&self) -> Option<f64> {
        match self {
            Self::Heap { k, heap } if heap.len() == *k => heap.peek().map(|r| r.0 .0),
            _ => None,
        }
    }

    fn push(&mut self, v: f64) {
        match self {
            Self::Heap { k, heap } => {
                if heap.len() < *k {
                    heap.push(Reverse(Key(v)));
                } else if let Some(mut top) = heap.peek_mut() {
                    if Key(v) > top.0 {
                        *top = Reverse(Key(v));
                    }
                }
            }
            Self::Buffer { values, .. } => values.push(v),
        }
    }

    fn finish(self) -> f64 {
        match self {
            Self::Heap { heap, .. } => heap.peek().expect("at least one sample").0 .0,
            Self::Buffer { k, mut values } => upper_order_statistic(&mut values, k),
        }
    }
}

/// The `k`-th largest entry (1-based). Reorders `values`.
pub fn upper_order_statistic(values: &mut [f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= values.len());
    let idx = values.len() - k;
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

fn quantile_of_snapshot<S: FeatureSampler + ?Sized>(
    snap: &LcbSnapshot,
    sampler: &S,
    samples: usize,
    horizon: usize,
    rng: &mut Stream,
) -> f64 {
    let k = samples - quantile_rank(samples, horizon) + 1;
    let mut sel = UpperSelector::new(k, samples);
    let mut z = vec![0.0; sampler.dim()];
    for _ in 0..samples {
        sampler.sample_into(1, rng, &mut z);
        let mean = snap.mean(&z);
        // lcb <= mean, so a mean at or below the current floor cannot matter.
        if let Some(floor) = sel.floor() {
            if mean <= floor {
                continue;
            }
        }
        sel.push(mean - snap.radius(&z));
    }
    sel.finish()
}

/// The `(1 - 1/n)` upper empirical quantile of `Z^LCB = z^T theta_hat - xi(z)`
/// over `samples` draws `z ~ D_x`.
pub fn quantile_threshold<S: FeatureSampler + ?Sized>(
    state: &RidgeState,
    params: &ConfidenceParams,
    sampler: &S,
    count_for_log: usize,
    samples: usize,
    rng: &mut Stream,
) -> Result<f64> {
    if !sampler.is_stationary() {
        return Err(Error::NonStationarySampler);
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("quantile sample count must be positive".into()));
    }
    let snap = state.snapshot(params, count_for_log);
    Ok(quantile_of_snapshot(&snap, sampler, samples, params.horizon, rng))
}

/// Quantile threshold evaluated on demand.
///
/// Makes the same draws an eager [`quantile_threshold`] call would make with
/// the same stream, but only as many as needed to decide `lcb >= alpha`.
/// With `k = m - r + 1`, that holds iff fewer than `k` draws exceed `lcb`,
/// i.e. iff the `k`-th largest draw so far is not above `lcb` once all `m`
/// draws are in. The `k` largest draws are kept in a min-heap.
#[derive(Debug, Clone)]
pub struct LazyQuantileThreshold {
    snap: LcbSnapshot,
    rng: Stream,
    samples: usize,
    k: usize,
    drawn: usize,
    top: BinaryHeap<Reverse<Key>>,
    resolved: Option<f64>,
}

impl LazyQuantileThreshold {
    pub fn new<S: FeatureSampler + ?Sized>(
        state: &RidgeState,
        params: &ConfidenceParams,
        sampler: &S,
        count_for_log: usize,
        samples: usize,
        rng: Stream,
    ) -> Result<Self> {
        if !sampler.is_stationary() {
            return Err(Error::NonStationarySampler);
        }
        if samples == 0 {
            return Err(Error::InvalidParameter("quantile sample count must be positive".into()));
        }
        let k = samples - quantile_rank(samples, params.horizon) + 1;
        Ok(Self {
            snap: state.snapshot(params, count_for_log),
            rng,
            samples,
            k,
            drawn: 0,
            top: BinaryHeap::with_capacity(k + 1),
            resolved: None,
        })
    }

    pub fn snapshot(&self) -> &LcbSnapshot {
        &self.snap
    }

    /// `Some(alpha)` once every draw has been made.
    pub fn value(&self) -> Option<f64> {
        self.resolved
    }

    /// Number of draws generated so far.
    pub fn draws(&self) -> usize {
        self.drawn
    }

    /// Current `k`-th largest draw, once `k` draws exist.
    fn floor(&self) -> Option<f64> {
        if self.top.len() == self.k {
            self.top.peek().map(|r| r.0 .0)
        } else {
            None
        }
    }

    fn draw<S: FeatureSampler + ?Sized>(&mut self, sampler: &S, z: &mut [f64]) {
        sampler.sample_into(1, &mut self.rng, z);
        self.drawn += 1;
        let mean = self.snap.mean(z);
        match self.floor() {
            Some(floor) if mean <= floor => {}
            Some(_) => {
                let v = mean - self.snap.radius(z);
                let mut min = self.top.peek_mut().expect("heap is full");
                if Key(v) > min.0 {
                    *min = Reverse(Key(v));
                }
            }
            None => self.top.push(Reverse(Key(mean - self.snap.radius(z)))),
        }
        if self.drawn == self.samples {
            self.resolved = self.floor();
        }
    }

    /// Whether `lcb >= alpha`.
    pub fn is_met<S: FeatureSampler + ?Sized>(&mut self, sampler: &S, lcb: f64) -> bool {
        let mut z = vec![0.0; sampler.dim()];
        loop {
            if let Some(alpha) = self.resolved {
                return lcb >= alpha;
            }
            if let Some(floor) = self.floor() {
                if floor > lcb {
                    return false;
                }
            }
            self.draw(sampler, &mut z);
        }
    }

    /// Draws everything and returns `alpha`.
    pub fn resolve<S: FeatureSampler + ?Sized>(&mut self, sampler: &S) -> f64 {
        let mut z = vec![0.0; sampler.dim()];
        while self.resolved.is_none() {
            self.draw(sampler, &mut z);
        }
        self.resolved.expect("resolved after all draws")
    }
}

fn check_stage_range<S: FeatureSampler + ?Sized>(
    sampler: &S,
    stages: &RangeInclusive<usize>,
) -> Result<()> {
    if *stages.start() == 0 || stages.start() > stages.end() || *stages.end() > sampler.horizon() {
        return Err(Error::InvalidParameter(format!(
            "stage range {}..={} is not within 1..={}",
            stages.start(),
            stages.end(),
            sampler.horizon()
        )));
    }
    Ok(())
}

/// One replicate: max over `stages` of `z_s^T theta_hat`, one draw per stage.
fn sampled_max<S: FeatureSampler + ?Sized>(
    theta_hat: &[f64],
    sampler: &S,
    stages: &RangeInclusive<usize>,
    rng: &mut Stream,
    z: &mut [f64],
) -> f64 {
    if let Some(v) = sampler.sample_max_projection(stages, theta_hat, rng) {
        return v;
    }
    let mut best = f64::NEG_INFINITY;
    for s in stages.clone() {
        sampler.sample_into(s, rng, z);
        best = best.max(dot(z, theta_hat));
    }
    best
}

/// `1/2 E[max_{s in stages} z_s^T theta_hat]` over `replicates` Monte Carlo draws.
pub fn expected_max_threshold<S: FeatureSampler + ?Sized>(
    theta_hat: &[f64],
    sampler: &S,
    stages: RangeInclusive<usize>,
    replicates: usize,
    rng: &mut Stream,
) -> Result<f64> {
    check_stage_range(sampler, &stages)?;
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicate count must be positive".into()));
    }
    let mut z = vec![0.0; sampler.dim()];
    let total: f64 = (0..replicates)
        .map(|_| sampled_max(theta_hat, sampler, &stages, rng, &mut z))
        .sum();
    Ok(0.5 * total / replicates as f64)
}

/// `1/2 E[max(max_i x_i^T theta_hat, max_{s in future} z_s^T theta_hat)]`
/// with the `observed` features fixed. An empty `future` range (start past
/// end) leaves only the observed part.
pub fn window_threshold<S: FeatureSampler + ?Sized>(
    theta_hat: &[f64],
    observed: &[Vec<f64>],
    sampler: &S,
    future: RangeInclusive<usize>,
    replicates: usize,
    rng: &mut Stream,
) -> Result<f64> {
    let observed_max = observed
        .iter()
        .map(|x| dot(x, theta_hat))
        .fold(f64::NEG_INFINITY, f64::max);
    if future.is_empty() {
        if observed.is_empty() {
            return Err(Error::InvalidParameter(
                "window threshold needs observed features or future stages".into(),
            ));
        }
        return Ok(0.5 * observed_max);
    }
    check_stage_range(sampler, &future)?;
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicate count must be positive".into()));
    }
    let mut z = vec![0.0; sampler.dim()];
    let total: f64 = (0..replicates)
        .map(|_| observed_max.max(sampled_max(theta_hat, sampler, &future, rng, &mut z)))
        .sum();
    Ok(0.5 * total / replicates as f64)
}
