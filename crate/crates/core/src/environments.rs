//! Synthetic environments: feature laws per stage, the hidden linear reward
//! model, and Gaussian observation noise.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::estimator::dot;
use crate::rng::{SeedSpec, Stream};

const THETA_LABEL: u64 = 0x7468_6574_61;
const RANGES_LABEL: u64 = 0x7261_6e67_6573;

/// The hidden reward model. Only environments and benchmarks see it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub theta: Vec<f64>,
    pub sigma: f64,
    /// Bound on `|theta|^2`.
    pub s_bound: f64,
    /// Bound on `|x|^2` for every emitted feature.
    pub l_bound: f64,
}

/// One revealed stage: feature, latent reward and its noisy observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSample {
    /// 1-based.
    pub stage: usize,
    pub x: Vec<f64>,
    /// Latent reward `x . theta`.
    pub reward: f64,
    /// `reward + noise`.
    pub observation: f64,
}

/// Sampling access to the per-stage feature distributions.
pub trait FeatureSampler: Sync {
    fn dim(&self) -> usize;

    fn horizon(&self) -> usize;

    /// True iff every stage has the same feature law.
    fn is_stationary(&self) -> bool;

    /// Writes one draw from stage `stage` (1-based) into `out`.
    fn sample_into(&self, stage: usize, rng: &mut Stream, out: &mut [f64]);

    /// One exact draw of `max_{s in stages} z_s . theta` for laws where that
    /// does not require sampling every stage; `None` otherwise.
    fn sample_max_projection(
        &self,
        _stages: &RangeInclusive<usize>,
        _theta: &[f64],
        _rng: &mut Stream,
    ) -> Option<f64> {
        None
    }

    fn sample(&self, stage: usize, rng: &mut Stream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(stage, rng, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FeatureLaw {
    /// Coordinates Uniform(0,1), then scaled to unit Euclidean norm.
    UnitUniform { dim: usize },
    /// Stage-specific coordinate boxes, row-major `(lo, hi)` per stage and coordinate.
    RangeBox { dim: usize, boxes: Vec<(f64, f64)> },
    /// `x = 1` with probability `p`, else `0`.
    Bernoulli { p: f64 },
    /// `e_1, ..., e_d`, then zeros.
    Basis { dim: usize },
    /// `1` at stage 1, `1/eps` with probability `eps` at stage n, zeros elsewhere.
    Window { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvironmentKind {
    IidUniform,
    NoniidRangeBox,
    BernoulliHard,
    BasisHard,
    WindowHard,
}

impl EnvironmentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::IidUniform => "iid_uniform",
            Self::NoniidRangeBox => "noniid_rangebox",
            Self::BernoulliHard => "bernoulli_hard",
            Self::BasisHard => "basis_hard",
            Self::WindowHard => "window_hard",
        }
    }
}

/// A feature law together with the hidden reward model over a fixed horizon.
/// Immutable once built; sampling only needs a caller-owned stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    law: FeatureLaw,
    truth: GroundTruth,
    horizon: usize,
}

fn unit_uniform(dim: usize, rng: &mut Stream, out: &mut [f64]) {
    let mut norm_sq = 0.0;
    for v in out.iter_mut().take(dim) {
        let u = rng.uniform();
        *v = u;
        norm_sq += u * u;
    }
    if norm_sq > 0.0 {
        let inv = 1.0 / norm_sq.sqrt();
        for v in out.iter_mut() {
            *v *= inv;
        }
    }
}

fn check_dim_horizon(dim: usize, horizon: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sigma must be nonnegative, got {sigma}"
        )))
    }
}

/// Unit-norm theta with Uniform(0,1) coordinates, drawn from `seed`'s theta sub-stream.
fn draw_theta(dim: usize, seed: &SeedSpec) -> Vec<f64> {
    let mut rng = seed.child(THETA_LABEL).stream();
    let mut theta = vec![0.0; dim];
    unit_uniform(dim, &mut rng, &mut theta);
    theta
}

impl Environment {
    /// I.i.d. features: coordinates Uniform(0,1), normalized to unit norm.
    /// Theta is drawn the same way. `S = L = 1`.
    pub fn iid_uniform(dim: usize, horizon: usize, sigma: f64, seed: &SeedSpec) -> Result<Self> {
        check_dim_horizon(dim, horizon)?;
        check_sigma(sigma)?;
        Ok(Self {
            law: FeatureLaw::UnitUniform { dim },
            truth: GroundTruth {
                theta: draw_theta(dim, seed),
                sigma,
                s_bound: 1.0,
                l_bound: 1.0,
            },
            horizon,
        })
    }

    /// Independent, non-identical features: each stage gets its own box
    /// `[a_k, b_k]` per coordinate (sorted Uniform(0,1) endpoints) and draws
    /// uniformly inside it. Boxes are fixed by `seed`.
    pub fn noniid_rangebox(
        dim: usize,
        horizon: usize,
        sigma: f64,
        seed: &SeedSpec,
    ) -> Result<Self> {
        check_dim_horizon(dim, horizon)?;
        check_sigma(sigma)?;
        let mut rng = seed.child(RANGES_LABEL).stream();
        let boxes = (0..horizon * dim)
            .map(|_| {
                let a = rng.uniform();
                let b = rng.uniform();
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        Ok(Self {
            law: FeatureLaw::RangeBox { dim, boxes },
            truth: GroundTruth {
                theta: draw_theta(dim, seed),
                sigma,
                s_bound: 1.0,
                // Features live in the unit box.
                l_bound: dim as f64,
            },
            horizon,
        })
    }

    /// One-dimensional Bernoulli rewards with success probability `c / n`.
    pub fn bernoulli_hard(c: f64, horizon: usize, sigma: f64) -> Result<Self> {
        check_dim_horizon(1, horizon)?;
        check_sigma(sigma)?;
        if !(c > 0.0 && c <= horizon as f64) {
            return Err(Error::InvalidParameter(format!(
                "bernoulli_hard needs 0 < c <= n, got c = {c}, n = {horizon}"
            )));
        }
        Ok(Self {
            law: FeatureLaw::Bernoulli {
                p: c / horizon as f64,
            },
            truth: GroundTruth {
                theta: vec![1.0],
                sigma,
                s_bound: 1.0,
                l_bound: 1.0,
            },
            horizon,
        })
    }

    /// Deterministic features `e_1, ..., e_d` followed by zero vectors.
    pub fn basis_hard(theta: Vec<f64>, horizon: usize, sigma: f64) -> Result<Self> {
        let dim = theta.len();
        check_dim_horizon(dim, horizon)?;
        check_sigma(sigma)?;
        if horizon <= dim {
            return Err(Error::InvalidParameter(format!(
                "basis_hard needs n > d, got n = {horizon}, d = {dim}"
            )));
        }
        let norm_sq = dot(&theta, &theta);
        Ok(Self {
            law: FeatureLaw::Basis { dim },
            truth: GroundTruth {
                theta,
                sigma,
                s_bound: if norm_sq > 0.0 { norm_sq } else { 1.0 },
                l_bound: 1.0,
            },
            horizon,
        })
    }

    /// `X_1 = 1`, zeros in between, and `X_n = 1/eps` with probability `eps`.
    pub fn window_hard(epsilon: f64, horizon: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "window_hard needs 0 < epsilon < 1, got {epsilon}"
            )));
        }
        if horizon < 3 {
            return Err(Error::InvalidParameter(format!(
                "window_hard needs n >= 3, got {horizon}"
            )));
        }
        Ok(Self {
            law: FeatureLaw::Window { epsilon },
            truth: GroundTruth {
                theta: vec![1.0],
                sigma,
                s_bound: 1.0,
                l_bound: 1.0 / (epsilon * epsilon),
            },
            horizon,
        })
    }

    pub fn kind(&self) -> EnvironmentKind {
        match self.law {
            FeatureLaw::UnitUniform { .. } => EnvironmentKind::IidUniform,
            FeatureLaw::RangeBox { .. } => EnvironmentKind::NoniidRangeBox,
            FeatureLaw::Bernoulli { .. } => EnvironmentKind::BernoulliHard,
            FeatureLaw::Basis { .. } => EnvironmentKind::BasisHard,
            FeatureLaw::Window { .. } => EnvironmentKind::WindowHard,
        }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Coordinate box `(lo, hi)` of `stage` for range-box environments.
    pub fn stage_box(&self, stage: usize) -> Option<&[(f64, f64)]> {
        match &self.law {
            FeatureLaw::RangeBox { dim, boxes } => {
                let start = (stage - 1) * dim;
                Some(&boxes[start..start + dim])
            }
            _ => None,
        }
    }

    /// Closed-form `E[max_i X_i]` where one exists.
    pub fn analytic_prophet_value(&self) -> Option<f64> {
        match self.law {
            FeatureLaw::Bernoulli { p } => Some(1.0 - (1.0 - p).powi(self.horizon as i32)),
            FeatureLaw::Basis { .. } => Some(
                self.truth
                    .theta
                    .iter()
                    .copied()
                    .fold(0.0f64, f64::max),
            ),
            FeatureLaw::Window { epsilon } => Some(2.0 - epsilon),
            _ => None,
        }
    }

    /// Draws the feature of `stage`, its latent reward, and a noisy observation.
    pub fn run_stage(&self, stage: usize, rng: &mut Stream) -> StageSample {
        debug_assert!((1..=self.horizon).contains(&stage));
        let x = self.sample(stage, rng);
        let reward = dot(&x, &self.truth.theta);
        let noise = rng.standard_normal();
        StageSample {
            stage,
            x,
            reward,
            observation: reward + self.truth.sigma * noise,
        }
    }

    /// A full realization of stages `1..=n`.
    pub fn episode(&self, rng: &mut Stream) -> Vec<StageSample> {
        (1..=self.horizon).map(|i| self.run_stage(i, rng)).collect()
    }
}

impl FeatureSampler for Environment {
    fn dim(&self) -> usize {
        self.truth.theta.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn is_stationary(&self) -> bool {
        matches!(
            self.law,
            FeatureLaw::UnitUniform { .. } | FeatureLaw::Bernoulli { .. }
        )
    }

    fn sample_max_projection(
        &self,
        stages: &RangeInclusive<usize>,
        theta: &[f64],
        rng: &mut Stream,
    ) -> Option<f64> {
        let (lo, hi) = (*stages.start(), *stages.end());
        if lo > hi {
            return None;
        }
        match self.law {
            FeatureLaw::Bernoulli { p } => {
                let t = theta[0];
                let count = (hi - lo + 1) as f64;
                // Largest value is t if any stage hits (t > 0) or if all do (t < 0).
                let q = if t >= 0.0 {
                    -(count * (-p).ln_1p()).exp_m1()
                } else {
                    (count * p.ln()).exp()
                };
                Some(if rng.bernoulli(q) { t } else { 0.0 })
            }
            FeatureLaw::Basis { dim } => {
                let mut best = f64::NEG_INFINITY;
                for s in lo..=hi.min(dim) {
                    best = best.max(theta[s - 1]);
                }
                if hi > dim {
                    best = best.max(0.0);
                }
                Some(best)
            }
            FeatureLaw::Window { epsilon } => {
                let n = self.horizon;
                let t = theta[0];
                let mut best = f64::NEG_INFINITY;
                if lo == 1 {
                    best = t;
                }
                if lo.max(2) <= hi.min(n - 1) {
                    best = best.max(0.0);
                }
                if hi == n && n > 1 {
                    let last = if rng.bernoulli(epsilon) { t / epsilon } else { 0.0 };
                    best = best.max(last);
                }
                Some(best)
            }
            FeatureLaw::UnitUniform { .. } | FeatureLaw::RangeBox { .. } => None,
        }
    }

    fn sample_into(&self, stage: usize, rng: &mut Stream, out: &mut [f64]) {
        match &self.law {
            FeatureLaw::UnitUniform { dim } => unit_uniform(*dim, rng, out),
            FeatureLaw::RangeBox { dim, boxes } => {
                let start = (stage - 1) * dim;
                for (v, &(lo, hi)) in out.iter_mut().zip(&boxes[start..start + dim]) {
                    *v = rng.uniform_range(lo, hi);
                }
            }
            FeatureLaw::Bernoulli { p } => {
                out[0] = if rng.bernoulli(*p) { 1.0 } else { 0.0 };
            }
            FeatureLaw::Basis { .. } => {
                out.fill(0.0);
                if stage <= out.len() {
                    out[stage - 1] = 1.0;
                }
            }
            FeatureLaw::Window { epsilon } => {
                out[0] = if stage == 1 {
                    1.0
                } else if stage == self.horizon {
                    if rng.bernoulli(*epsilon) {
                        1.0 / epsilon
                    } else {
                        0.0
                    }
                } else {
                    0.0
                };
            }
        }
    }
}

pub fn iid_uniform_env(dim: usize, horizon: usize, sigma: f64, seed: &SeedSpec) -> Result<Environment> {
    Environment::iid_uniform(dim, horizon, sigma, seed)
}

pub fn noniid_rangebox_env(
    dim: usize,
    horizon: usize,
    sigma: f64,
    seed: &SeedSpec,
) -> Result<Environment> {
    Environment::noniid_rangebox(dim, horizon, sigma, seed)
}

pub fn bernoulli_hard_env(c: f64, horizon: usize, sigma: f64) -> Result<Environment> {
    Environment::bernoulli_hard(c, horizon, sigma)
}

pub fn basis_hard_env(theta: Vec<f64>, horizon: usize, sigma: f64) -> Result<Environment> {
    Environment::basis_hard(theta, horizon, sigma)
}

pub fn window_hard_env(epsilon: f64, horizon: usize, sigma: f64) -> Result<Environment> {
    Environment::window_hard(epsilon, horizon, sigma)
}

pub fn run_stage(env: &Environment, stage: usize, rng: &mut Stream) -> StageSample {
    env.run_stage(stage, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> SeedSpec {
        SeedSpec::with_path(1, &[0])
    }

    #[test]
    fn iid_theta_and_features_on_unit_sphere() {
        for root in 0..20 {
            let env = Environment::iid_uniform(3, 10, 0.1, &SeedSpec::new(root)).unwrap();
            let t = &env.truth().theta;
            assert!((dot(t, t).sqrt() - 1.0).abs() < 1e-12);
            assert!(t.iter().all(|&v| v >= 0.0));
            let mut rng = SeedSpec::new(root).child(5).stream();
            for _ in 0..100 {
                let s = env.run_stage(1, &mut rng);
                assert!(s.x.iter().all(|&v| v >= 0.0));
                assert!(dot(&s.x, &s.x) <= 1.0 + 1e-12);
                assert!(s.reward >= 0.0);
            }
        }
        assert!(Environment::iid_uniform(2, 1, 0.0, &seed()).unwrap().is_stationary());
    }

    #[test]
    fn rangebox_stage_law_is_fixed() {
        let env = Environment::noniid_rangebox(2, 10, 0.0, &seed()).unwrap();
        assert!(!env.is_stationary());
        let bx = env.stage_box(5).unwrap().to_vec();
        let a = env.sample(5, &mut seed().child(1).stream());
        let b = env.sample(5, &mut seed().child(2).stream());
        assert_ne!(a, b);
        for (v, (lo, hi)) in a.iter().chain(&b).zip(bx.iter().chain(&bx)) {
            assert!(*v >= *lo && *v <= *hi);
        }
        let again = Environment::noniid_rangebox(2, 10, 0.0, &seed()).unwrap();
        assert_eq!(again.stage_box(5).unwrap(), &bx[..]);
        // Same theta as the i.i.d. environment with the same seed.
        let iid = Environment::iid_uniform(2, 10, 0.0, &seed()).unwrap();
        assert_eq!(iid.truth().theta, env.truth().theta);
    }

    #[test]
    fn bernoulli_closed_forms() {
        let env = Environment::bernoulli_hard(1.0, 1_000_000, 1.0).unwrap();
        let v = env.analytic_prophet_value().unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
        let env = Environment::bernoulli_hard(50.0, 50, 0.0).unwrap();
        assert_eq!(env.analytic_prophet_value(), Some(1.0));
        let mut rng = seed().stream();
        assert!(env.episode(&mut rng).iter().all(|s| s.reward == 1.0));
        assert!(Environment::bernoulli_hard(0.0, 10, 1.0).is_err());
        assert!(Environment::bernoulli_hard(11.0, 10, 1.0).is_err());
    }

    #[test]
    fn basis_features() {
        let env = Environment::basis_hard(vec![0.2, 0.9, 0.4], 6, 0.0).unwrap();
        let mut rng = seed().stream();
        let ep = env.episode(&mut rng);
        assert_eq!(ep[0].x, vec![1.0, 0.0, 0.0]);
        assert_eq!(ep[1].x, vec![0.0, 1.0, 0.0]);
        assert_eq!(ep[2].x, vec![0.0, 0.0, 1.0]);
        assert_eq!(ep[3].x, vec![0.0, 0.0, 0.0]);
        assert_eq!(ep[3].reward, 0.0);
        assert_eq!(env.analytic_prophet_value(), Some(0.9));
        assert!(!env.is_stationary());
        assert!(Environment::basis_hard(vec![1.0, 1.0], 2, 0.0).is_err());
    }

    #[test]
    fn window_instance() {
        let env = Environment::window_hard(0.25, 5, 0.0).unwrap();
        assert_eq!(env.analytic_prophet_value(), Some(1.75));
        assert_eq!(env.truth().l_bound, 16.0);
        let mut rng = seed().stream();
        for _ in 0..50 {
            let ep = env.episode(&mut rng);
            assert_eq!(ep[0].reward, 1.0);
            assert!(ep[1..4].iter().all(|s| s.reward == 0.0));
            assert!(ep[4].reward == 0.0 || ep[4].reward == 4.0);
        }
        assert!(Environment::window_hard(1.0, 5, 0.0).is_err());
        assert!(Environment::window_hard(0.5, 2, 0.0).is_err());
    }

    #[test]
    fn noise_free_observation_is_exact() {
        let env = Environment::iid_uniform(2, 5, 0.0, &seed()).unwrap();
        let mut rng = seed().child(3).stream();
        for s in env.episode(&mut rng) {
            assert_eq!(s.observation, s.reward);
        }
    }

    #[test]
    fn replay_is_identical() {
        let env = Environment::iid_uniform(2, 5, 0.3, &seed()).unwrap();
        let a = env.run_stage(2, &mut seed().child(9).stream());
        let b = env.run_stage(2, &mut seed().child(9).stream());
        assert_eq!(a, b);
    }

    #[test]
    fn noise_is_centered() {
        let sigma = 0.5;
        let env = Environment::iid_uniform(2, 1, sigma, &seed()).unwrap();
        let mut rng = seed().child(4).stream();
        let n = 100_000;
        let mean = (0..n)
            .map(|_| {
                let s = env.run_stage(1, &mut rng);
                s.observation - s.reward
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    fn brute_max(env: &Environment, stages: RangeInclusive<usize>, theta: &[f64], rng: &mut Stream) -> f64 {
        stages
            .map(|st| dot(&env.sample(st, rng), theta))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn max_projection_matches_stagewise_sampling() {
        let cases = [
            (Environment::bernoulli_hard(2.0, 50, 0.0).unwrap(), 1..=50, 0.7),
            (Environment::bernoulli_hard(2.0, 50, 0.0).unwrap(), 10..=12, -0.4),
            (Environment::bernoulli_hard(40.0, 50, 0.0).unwrap(), 48..=50, -0.4),
            (Environment::window_hard(0.25, 6, 0.0).unwrap(), 1..=6, 0.8),
            (Environment::window_hard(0.25, 6, 0.0).unwrap(), 6..=6, 0.8),
            (Environment::window_hard(0.25, 6, 0.0).unwrap(), 1..=1, -0.3),
            (Environment::window_hard(0.25, 6, 0.0).unwrap(), 2..=6, -0.3),
        ];
        let reps = 40_000;
        for (k, (env, range, t)) in cases.into_iter().enumerate() {
            let mut rng = seed().child(100 + k as u64).stream();
            let fast: Vec<f64> = (0..reps)
                .map(|_| env.sample_max_projection(&range, &[t], &mut rng).unwrap())
                .collect();
            let slow: Vec<f64> = (0..reps).map(|_| brute_max(&env, range.clone(), &[t], &mut rng)).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
            };
            let se = ((var(&fast) + var(&slow)) / reps as f64).sqrt();
            assert!(
                (mean(&fast) - mean(&slow)).abs() <= 4.0 * se + 1e-12,
                "case {k}: {} vs {}",
                mean(&fast),
                mean(&slow)
            );
        }
    }

    #[test]
    fn basis_max_projection_is_exact() {
        let env = Environment::basis_hard(vec![0.3, -0.9, 0.5], 10, 0.0).unwrap();
        let mut rng = seed().stream();
        assert_eq!(env.sample_max_projection(&(1..=3), &[0.3, -0.9, 0.5], &mut rng), Some(0.5));
        assert_eq!(env.sample_max_projection(&(2..=2), &[0.3, -0.9, 0.5], &mut rng), Some(-0.9));
        assert_eq!(env.sample_max_projection(&(2..=4), &[0.3, -0.9, 0.5], &mut rng), Some(0.5));
        assert_eq!(env.sample_max_projection(&(4..=10), &[0.3, -0.9, 0.5], &mut rng), Some(0.0));
        let iid = Environment::iid_uniform(2, 10, 0.0, &seed()).unwrap();
        assert_eq!(iid.sample_max_projection(&(1..=3), &[1.0, 0.0], &mut rng), None);
    }
}
