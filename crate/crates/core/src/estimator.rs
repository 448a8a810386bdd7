//! Regularized least squares with rank-one inverse maintenance, and the
//! self-normalized confidence radius that turns the estimate into a lower
//! confidence bound.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absorbs between full refactorizations of `V_inv` from `V`.
pub const REFRESH_INTERVAL: usize = 4096;

/// Sufficient statistics for the ridge estimate `V^{-1} b` with
/// `V = beta I + sum x x^T` and `b = sum y x`.
#[derive(Debug, Clone)]
pub struct RidgeState {
    dim: usize,
    beta: f64,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    b: DVector<f64>,
    count: usize,
    since_refresh: usize,
}

impl RidgeState {
    pub fn new(dim: usize, beta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularizer beta must be positive, got {beta}"
            )));
        }
        Ok(Self {
            dim,
            beta,
            v: DMatrix::identity(dim, dim) * beta,
            v_inv: DMatrix::identity(dim, dim) / beta,
            b: DVector::zeros(dim),
            count: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of absorbed observations.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.b
    }

    /// Adds one observation `(x, y)`.
    pub fn absorb(&mut self, x: &[f64], y: f64) {
        assert_eq!(x.len(), self.dim, "feature dimension mismatch");
        let xv = DVector::from_column_slice(x);
        self.v.ger(1.0, &xv, &xv, 1.0);
        self.b.axpy(y, &xv, 1.0);
        self.count += 1;
        self.since_refresh += 1;

        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh_inverse();
        } else {
            // Sherman-Morrison; V_inv stays symmetric.
            let u = &self.v_inv * &xv;
            let denom = 1.0 + xv.dot(&u);
            self.v_inv.ger(-1.0 / denom, &u, &u, 1.0);
        }
    }

    /// Recomputes `V_inv` from `V` by Cholesky factorization.
    pub fn refresh_inverse(&mut self) {
        let chol = self
            .v
            .clone()
            .cholesky()
            .expect("gram matrix is positive definite by construction");
        self.v_inv = chol.inverse();
        self.since_refresh = 0;
    }

    pub fn estimate(&self) -> Vec<f64> {
        (&self.v_inv * &self.b).as_slice().to_vec()
    }

    /// `x^T V^{-1} x`, clamped at zero.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        quad_form(self.v_inv.as_slice(), x)
    }

    /// Frozen view of the current estimate for repeated LCB evaluation.
    pub fn snapshot(&self, params: &ConfidenceParams, count_for_log: usize) -> LcbSnapshot {
        LcbSnapshot {
            theta_hat: self.estimate(),
            v_inv: self.v_inv.as_slice().to_vec(),
            radius_scale: params.radius_scale(count_for_log),
        }
    }
}

fn quad_form(v_inv: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        let col = &v_inv[j * d..(j + 1) * d];
        let mut s = 0.0;
        for (vij, xi) in col.iter().zip(x) {
            s += vij * xi;
        }
        acc += s * xj;
    }
    acc.max(0.0)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inputs of the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    /// Noise scale.
    pub sigma: f64,
    /// Bound on the squared norm of the latent parameter.
    pub s_bound: f64,
    /// Bound on the squared norm of any feature.
    pub l_bound: f64,
    pub horizon: usize,
    pub dim: usize,
    pub beta: f64,
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be nonnegative");
        }
        if !(self.s_bound > 0.0) {
            return bad("S must be positive");
        }
        if !(self.l_bound > 0.0) {
            return bad("L must be positive");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        Ok(())
    }

    /// The factor multiplying `sqrt(x^T V^{-1} x)`:
    /// `sigma * sqrt(d ln(n + n m L / (d beta))) + sqrt(S beta)` with `m = count_for_log`.
    pub fn radius_scale(&self, count_for_log: usize) -> f64 {
        let n = self.horizon as f64;
        let d = self.dim as f64;
        let m = count_for_log as f64;
        let log_term = (n + n * m * self.l_bound / (d * self.beta)).ln();
        self.sigma * (d * log_term).sqrt() + (self.s_bound * self.beta).sqrt()
    }
}

pub fn new_ridge(dim: usize, beta: f64) -> Result<RidgeState> {
    RidgeState::new(dim, beta)
}

pub fn confidence_radius(
    state: &RidgeState,
    x: &[f64],
    params: &ConfidenceParams,
    count_for_log: usize,
) -> f64 {
    state.quad_form(x).sqrt() * params.radius_scale(count_for_log)
}

/// `x^T theta_hat - confidence_radius(x)`.
pub fn lcb(state: &RidgeState, x: &[f64], params: &ConfidenceParams, count_for_log: usize) -> f64 {
    dot(x, &state.estimate()) - confidence_radius(state, x, params, count_for_log)
}

/// Estimate, inverse Gram matrix and radius scale frozen at one moment.
#[derive(Debug, Clone)]
pub struct LcbSnapshot {
    pub theta_hat: Vec<f64>,
    v_inv: Vec<f64>,
    pub radius_scale: f64,
}

impl LcbSnapshot {
    pub fn mean(&self, x: &[f64]) -> f64 {
        dot(x, &self.theta_hat)
    }

    pub fn radius(&self, x: &[f64]) -> f64 {
        quad_form(&self.v_inv, x).sqrt() * self.radius_scale
    }

    pub fn lcb(&self, x: &[f64]) -> f64 {
        self.mean(x) - self.radius(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn params(sigma: f64, n: usize) -> ConfidenceParams {
        ConfidenceParams {
            sigma,
            s_bound: 1.0,
            l_bound: 1.0,
            horizon: n,
            dim: 2,
            beta: 1.0,
        }
    }

    #[test]
    fn fresh_state() {
        let s = RidgeState::new(2, 1.0).unwrap();
        assert_eq!(s.estimate(), vec![0.0, 0.0]);
        let s = RidgeState::new(3, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert_eq!(s.gram_inverse()[(i, j)], want);
            }
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(RidgeState::new(2, 0.0).is_err());
        assert!(RidgeState::new(2, -1.0).is_err());
        assert!(RidgeState::new(0, 1.0).is_err());
    }

    #[test]
    fn two_observation_estimate() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.absorb(&[1.0, 0.0], 1.0);
        s.absorb(&[0.0, 1.0], 2.0);
        let t = s.estimate();
        assert_close(t[0], 0.5, 1e-15);
        assert_close(t[1], 1.0, 1e-15);
    }

    #[test]
    fn zero_feature_leaves_estimate() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.absorb(&[1.0, 0.5], 0.7);
        let before = s.estimate();
        s.absorb(&[0.0, 0.0], 123.0);
        assert_eq!(before, s.estimate());
        assert_eq!(s.count(), 2);
    }

    #[test]
    fn noise_free_recovers_theta() {
        let theta = [0.3, -0.8, 0.5];
        let mut s = RidgeState::new(3, 1e-9).unwrap();
        let xs = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 1.0],
        ];
        for x in &xs {
            s.absorb(x, dot(x, &theta));
        }
        for (a, b) in s.estimate().iter().zip(&theta) {
            assert_close(*a, *b, 1e-5);
        }
    }

    #[test]
    fn radius_without_noise() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.absorb(&[1.0, 0.0], 1.0);
        s.absorb(&[0.0, 1.0], 2.0);
        let r = confidence_radius(&s, &[1.0, 0.0], &params(0.0, 100), 10);
        assert_close(r, 0.5f64.sqrt(), 1e-15);
        assert_close(lcb(&s, &[1.0, 0.0], &params(0.0, 100), 10), 0.5 - 0.5f64.sqrt(), 1e-15);
    }

    #[test]
    fn radius_with_noise() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.absorb(&[1.0, 0.0], 1.0);
        s.absorb(&[0.0, 1.0], 2.0);
        let r = confidence_radius(&s, &[1.0, 0.0], &params(1.0, 100), 10);
        // sqrt(0.5) * (sqrt(2 ln 600) + 1)
        assert_close(r, 3.2363220063534657, 1e-12);
    }

    #[test]
    fn zero_vector_radius_and_lcb() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.absorb(&[0.4, 0.2], 3.0);
        assert_eq!(confidence_radius(&s, &[0.0, 0.0], &params(1.0, 10), 1), 0.0);
        assert_eq!(lcb(&s, &[0.0, 0.0], &params(1.0, 10), 1), 0.0);
    }

    #[test]
    fn snapshot_agrees_with_free_functions() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.absorb(&[0.6, 0.8], 0.9);
        s.absorb(&[1.0, 0.0], 0.2);
        let p = params(0.5, 1000);
        let snap = s.snapshot(&p, 2);
        let x = [0.3, 0.95];
        assert_close(snap.lcb(&x), lcb(&s, &x, &p, 2), 1e-14);
    }

    #[test]
    fn refresh_keeps_inverse() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        for k in 0..(REFRESH_INTERVAL + 10) {
            let t = k as f64 * 0.37;
            s.absorb(&[t.cos().abs(), t.sin().abs()], 0.1);
        }
        let prod = s.gram() * s.gram_inverse();
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((prod - id).amax() < 1e-10);
    }
}
