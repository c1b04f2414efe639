//! Target declarations. A sampling target is a potential `V` with
//! `density ∝ exp(-V)`, carried together with the metadata the samplers and
//! bound calculators consume: a smoothness constant `L` (Lipschitz constant
//! of the gradient), a second-moment bound `M`, the value at the origin, and
//! a lower bound on `min V`. Every value or gradient evaluation goes through
//! a shared atomic [`QueryCounter`], so oracle complexity is measured, not
//! estimated.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::linalg::{self, SpdMatrix};
use crate::{Error, Result};

/// Atomic tally of oracle calls. Chains running in parallel share one
/// counter through `Arc`, so totals stay exact under concurrency.
#[derive(Debug, Default)]
pub struct QueryCounter {
    value: AtomicU64,
    gradient: AtomicU64,
}

/// Snapshot of a [`QueryCounter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct QueryCounts {
    pub value: u64,
    pub gradient: u64,
}

impl QueryCounts {
    pub fn total(&self) -> u64 {
        self.value + self.gradient
    }
}

impl QueryCounter {
    fn record_value(&self) {
        self.value.fetch_add(1, Ordering::Relaxed);
    }

    fn record_gradient(&self) {
        self.gradient.fetch_add(1, Ordering::Relaxed);
    }

    pub fn counts(&self) -> QueryCounts {
        QueryCounts {
            value: self.value.load(Ordering::Relaxed),
            gradient: self.gradient.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.value.store(0, Ordering::Relaxed);
        self.gradient.store(0, Ordering::Relaxed);
    }
}

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A smooth potential with sampler metadata. Cloning is cheap and clones
/// share the underlying query counter.
#[derive(Clone)]
pub struct Potential {
    dim: usize,
    eval_fn: EvalFn,
    grad_fn: GradFn,
    smoothness: f64,
    second_moment_bound: f64,
    value_at_origin: f64,
    min_value_lower_bound: Option<f64>,
    counter: Arc<QueryCounter>,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potential")
            .field("dim", &self.dim)
            .field("smoothness", &self.smoothness)
            .field("second_moment_bound", &self.second_moment_bound)
            .field("value_at_origin", &self.value_at_origin)
            .field("min_value_lower_bound", &self.min_value_lower_bound)
            .finish()
    }
}

impl Potential {
    /// Wraps raw value/gradient closures. `min_value_lower_bound` may be
    /// omitted, but iteration-count formulas that need it will then refuse to
    /// run.
    pub fn new(
        dim: usize,
        eval_fn: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad_fn: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        smoothness: f64,
        second_moment_bound: f64,
        min_value_lower_bound: Option<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension", "must be at least 1"));
        }
        if !(smoothness >= 0.0 && smoothness.is_finite()) {
            return Err(Error::invalid("smoothness", "must be finite and nonnegative"));
        }
        if !(second_moment_bound >= 0.0 && second_moment_bound.is_finite()) {
            return Err(Error::invalid(
                "second moment bound",
                "must be finite and nonnegative",
            ));
        }
        let value_at_origin = eval_fn(&vec![0.0; dim]);
        if !value_at_origin.is_finite() {
            return Err(Error::invalid("potential", "non-finite value at origin"));
        }
        Ok(Self {
            dim,
            eval_fn: Arc::new(eval_fn),
            grad_fn: Arc::new(grad_fn),
            smoothness,
            second_moment_bound,
            value_at_origin,
            min_value_lower_bound,
            counter: Arc::new(QueryCounter::default()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lipschitz constant of the gradient.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Upper bound on the target's second moment `E ||X||^2`.
    pub fn second_moment_bound(&self) -> f64 {
        self.second_moment_bound
    }

    pub fn value_at_origin(&self) -> f64 {
        self.value_at_origin
    }

    pub fn min_value_lower_bound(&self) -> Option<f64> {
        self.min_value_lower_bound
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `V(x)`; counts one value query.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.counter.record_value();
        let v = (self.eval_fn)(x);
        debug_assert!(v.is_finite(), "potential produced non-finite value");
        Ok(v)
    }

    /// `∇V(x)`; counts one gradient query.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.counter.record_gradient();
        let g = (self.grad_fn)(x);
        debug_assert_eq!(g.len(), self.dim);
        debug_assert!(g.iter().all(|v| v.is_finite()), "gradient produced non-finite value");
        Ok(g)
    }

    pub fn queries(&self) -> QueryCounts {
        self.counter.counts()
    }

    pub fn reset_queries(&self) {
        self.counter.reset()
    }

    /// Clone that stops sharing the query counter; used by batch drivers so
    /// each run's accounting (and budget) is independent of its siblings.
    pub fn with_fresh_counter(&self) -> Potential {
        let mut fresh = self.clone();
        fresh.counter = std::sync::Arc::new(QueryCounter::default());
        fresh
    }
}

/// `V(x) = ||x||^2 / 2`, the potential of the standard Gaussian.
/// Metadata: `L = 1`, `M = d`, `V(0) = 0 = min V`.
pub fn standard_gaussian_potential(dim: usize) -> Result<Potential> {
    Potential::new(
        dim,
        |x| 0.5 * linalg::norm_sq(x),
        |x| x.to_vec(),
        1.0,
        dim as f64,
        Some(0.0),
    )
}

/// Axis-aligned quadratic `V(x) = sum_i q_i (x_i - a_i)^2 / 2` with positive
/// curvatures `q`. Metadata is exact: `L = max q_i`, `min V = 0`, and the
/// second moment of the induced Gaussian is `sum_i (a_i^2 + 1/q_i)`.
pub fn quadratic_potential(center: Vec<f64>, curvature: Vec<f64>) -> Result<Potential> {
    let dim = center.len();
    if curvature.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: curvature.len(),
        });
    }
    if dim == 0 {
        return Err(Error::invalid("dimension", "must be at least 1"));
    }
    if curvature.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
        return Err(Error::invalid("curvature", "entries must be positive and finite"));
    }
    let smoothness = curvature.iter().cloned().fold(0.0, f64::max);
    let second_moment = center
        .iter()
        .zip(&curvature)
        .map(|(a, q)| a * a + 1.0 / q)
        .sum();
    let (c_eval, q_eval) = (center.clone(), curvature.clone());
    let (c_grad, q_grad) = (center, curvature);
    Potential::new(
        dim,
        move |x| {
            0.5 * x
                .iter()
                .zip(&c_eval)
                .zip(&q_eval)
                .map(|((xi, ai), qi)| qi * (xi - ai) * (xi - ai))
                .sum::<f64>()
        },
        move |x| {
            x.iter()
                .zip(&c_grad)
                .zip(&q_grad)
                .map(|((xi, ai), qi)| qi * (xi - ai))
                .collect()
        },
        smoothness,
        second_moment,
        Some(0.0),
    )
}

/// Smoothness constant of the negative log-density of a Gaussian mixture
/// whose centers lie in a ball of radius `radius` and whose shared
/// covariance has minimum eigenvalue `lambda_min(covariance)`.
///
/// For identity covariance the constant is `max(1, radius^2 - 1)`; a general
/// covariance is handled by whitening, which rescales both the radius and
/// the resulting constant by `lambda_min`.
pub fn mixture_smoothness(radius: f64, covariance: &SpdMatrix) -> Result<f64> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius", "must be finite and nonnegative"));
    }
    let lam = covariance.lambda_min();
    Ok(1.0_f64.max(radius * radius / lam - 1.0) / lam)
}

/// Finite Gaussian mixture `sum_i w_i N(c_i, covariance)` with a covariance
/// shared across components. The radius is the largest center norm.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    centers: Vec<Vec<f64>>,
    covariance: SpdMatrix,
    radius: f64,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, centers: Vec<Vec<f64>>, covariance: SpdMatrix) -> Result<Self> {
        if weights.is_empty() || weights.len() != centers.len() {
            return Err(Error::invalid(
                "mixture",
                "weights and centers must be nonempty and of equal length",
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights", "must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(
                "mixture weights",
                format!("must sum to 1, got {total}"),
            ));
        }
        let dim = covariance.dim();
        for c in &centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("mixture centers", "non-finite entry"));
            }
        }
        // Renormalize exactly so downstream log-sum-exp sees weights summing
        // to one.
        let weights = weights.iter().map(|w| w / total).collect::<Vec<_>>();
        let radius = centers.iter().map(|c| linalg::norm(c)).fold(0.0, f64::max);
        Ok(Self {
            weights,
            centers,
            covariance,
            radius,
        })
    }

    /// Equal-covariance shorthand: identity covariance in `dim` dimensions.
    pub fn isotropic(weights: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centers.first().map(|c| c.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::invalid("mixture", "centers must be nonempty"));
        }
        Self::new(weights, centers, SpdMatrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }

    /// Largest center norm; all centers lie in the closed ball of this
    /// radius.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Normalized log-density via log-sum-exp over components.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.centers)
            .map(|(w, c)| w.ln() + self.covariance.log_gaussian_density(c, x))
            .collect();
        log_sum_exp(&logs)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Gradient of `log density`: the responsibility-weighted sum of the
    /// component scores `-covariance^{-1} (x - c_i)`.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.centers)
            .map(|(w, c)| w.ln() + self.covariance.log_gaussian_density(c, x))
            .collect();
        let lse = log_sum_exp(&logs);
        let mut out = vec![0.0; x.len()];
        for (log_i, c) in logs.iter().zip(&self.centers) {
            let resp = (log_i - lse).exp();
            let pull = self.covariance.apply_inv(&linalg::sub(x, c));
            for (o, p) in out.iter_mut().zip(&pull) {
                *o -= resp * p;
            }
        }
        out
    }

    /// Exact second moment `sum_i w_i (||c_i||^2 + tr covariance)`.
    pub fn second_moment(&self) -> f64 {
        let tr = self.covariance.trace();
        self.weights
            .iter()
            .zip(&self.centers)
            .map(|(w, c)| w * (linalg::norm_sq(c) + tr))
            .sum()
    }

    /// Smoothness constant of `-log density` from the center radius and the
    /// covariance spectrum.
    pub fn smoothness(&self) -> f64 {
        mixture_smoothness(self.radius, &self.covariance)
            .expect("radius of a valid mixture is finite")
    }
}

/// Potential `V = -log density` of a Gaussian mixture, with metadata filled
/// in analytically: smoothness from [`mixture_smoothness`], the exact second
/// moment, and `min V >= (d/2) log 2\pi + (1/2) log det covariance` (the
/// density can never exceed a single component's peak).
pub fn mixture_potential(mixture: &GaussianMixture) -> Result<Potential> {
    let dim = mixture.dim();
    let smoothness = mixture.smoothness();
    let second_moment = mixture.second_moment();
    let min_lb = 0.5 * (dim as f64) * (2.0 * std::f64::consts::PI).ln()
        + 0.5 * mixture.covariance().log_det();
    let m_eval = mixture.clone();
    let m_grad = mixture.clone();
    Potential::new(
        dim,
        move |x| -m_eval.log_density(x),
        move |x| linalg::scale(-1.0, &m_grad.score(x)),
        smoothness,
        second_moment,
        Some(min_lb),
    )
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn two_point_mixture() -> GaussianMixture {
        GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn standard_gaussian_metadata() {
        let p = standard_gaussian_potential(3).unwrap();
        assert_eq!(p.dim(), 3);
        assert_relative_eq!(p.smoothness(), 1.0);
        assert_relative_eq!(p.second_moment_bound(), 3.0);
        assert_relative_eq!(p.value_at_origin(), 0.0);
        assert_eq!(p.min_value_lower_bound(), Some(0.0));
        assert_relative_eq!(p.eval(&[1.0, 2.0, 2.0]).unwrap(), 4.5);
        assert_eq!(p.grad(&[1.0, 2.0, 2.0]).unwrap(), vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn query_counter_tallies_each_call() {
        let p = standard_gaussian_potential(1).unwrap();
        let clone = p.clone();
        p.eval(&[0.3]).unwrap();
        clone.eval(&[0.4]).unwrap();
        p.grad(&[0.5]).unwrap();
        let counts = p.queries();
        assert_eq!(counts.value, 2);
        assert_eq!(counts.gradient, 1);
        assert_eq!(counts.total(), 3);
        p.reset_queries();
        assert_eq!(p.queries().total(), 0);
    }

    #[test]
    fn dimension_mismatch_is_hard_error_and_not_counted() {
        let p = standard_gaussian_potential(2).unwrap();
        assert!(matches!(
            p.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(p.grad(&[1.0, 2.0, 3.0]).is_err());
        assert_eq!(p.queries().total(), 0);
    }

    #[test]
    fn smoothness_constant_identity_covariance() {
        let id = SpdMatrix::identity(2);
        assert_relative_eq!(mixture_smoothness(2.0, &id).unwrap(), 3.0);
        assert_relative_eq!(mixture_smoothness(1.0, &id).unwrap(), 1.0);
        assert_relative_eq!(mixture_smoothness(0.0, &id).unwrap(), 1.0);
    }

    #[test]
    fn smoothness_constant_general_covariance() {
        let cov = SpdMatrix::new(&[vec![0.5, 0.0], vec![0.0, 2.0]]).unwrap();
        // Whitened radius^2 is 4 / 0.5 = 8, so the constant is 7 / 0.5.
        assert_relative_eq!(mixture_smoothness(2.0, &cov).unwrap(), 14.0);
    }

    #[test]
    fn mixture_density_is_normalized() {
        let m = two_point_mixture();
        let p = mixture_potential(&m).unwrap();
        let mass = crate::quadrature::integrate(
            |x| (-p.eval(&[x]).unwrap()).exp(),
            -10.0,
            10.0,
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn single_component_mixture_is_gaussian_plus_constant() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0, 0.0]]).unwrap();
        let p = mixture_potential(&m).unwrap();
        let g = standard_gaussian_potential(2).unwrap();
        let constant = (2.0 * PI).ln();
        for x in [[0.0, 0.0], [1.0, -0.5], [2.0, 2.0]] {
            assert_relative_eq!(
                p.eval(&x).unwrap() - g.eval(&x).unwrap(),
                constant,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mixture_gradient_matches_central_differences() {
        let m = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![vec![-1.0, 0.5], vec![1.0, -0.25]],
            SpdMatrix::new(&[vec![1.5, 0.25], vec![0.25, 0.75]]).unwrap(),
        )
        .unwrap();
        let p = mixture_potential(&m).unwrap();
        let h = 1e-5;
        for x in [[0.2, -0.3], [1.1, 0.9], [-2.0, 0.1]] {
            let g = p.grad(&x).unwrap();
            for i in 0..2 {
                let mut lo = x.to_vec();
                let mut hi = x.to_vec();
                lo[i] -= h;
                hi[i] += h;
                let fd = (p.eval(&hi).unwrap() - p.eval(&lo).unwrap()) / (2.0 * h);
                assert_relative_eq!(g[i], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn two_point_mixture_curvature_stays_within_declared_smoothness() {
        let m = two_point_mixture();
        let p = mixture_potential(&m).unwrap();
        let l = p.smoothness();
        assert_relative_eq!(l, 1.0);
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        let mut x = -4.0;
        while x <= 4.0 {
            let second = (p.eval(&[x + h]).unwrap() - 2.0 * p.eval(&[x]).unwrap()
                + p.eval(&[x - h]).unwrap())
                / (h * h);
            worst = worst.max(second.abs());
            x += 0.05;
        }
        assert!(worst <= l + 1e-3, "max |V''| = {worst} exceeds L = {l}");
    }

    #[test]
    fn mixture_metadata_values() {
        let m = two_point_mixture();
        assert_relative_eq!(m.second_moment(), 2.0);
        assert_relative_eq!(m.radius(), 1.0);
        let p = mixture_potential(&m).unwrap();
        // V(0) = 1/2 + (1/2) log 2 pi for centers at +-1 with unit variance.
        assert_relative_eq!(p.value_at_origin(), 0.5 + 0.5 * (2.0 * PI).ln(), epsilon = 1e-12);
        let lb = p.min_value_lower_bound().unwrap();
        let mut x = -3.0;
        while x <= 3.0 {
            assert!(p.eval(&[x]).unwrap() >= lb);
            x += 0.1;
        }
    }

    #[test]
    fn mixture_validation_errors() {
        assert!(GaussianMixture::isotropic(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(GaussianMixture::isotropic(vec![1.0, -0.0], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![0.0], vec![1.0, 2.0]]).is_err());
        assert!(GaussianMixture::isotropic(vec![], vec![]).is_err());
    }

    #[test]
    fn quadratic_potential_metadata() {
        let p = quadratic_potential(vec![1.0, -1.0], vec![2.0, 0.5]).unwrap();
        assert_relative_eq!(p.smoothness(), 2.0);
        assert_relative_eq!(p.second_moment_bound(), 1.0 + 0.5 + 1.0 + 2.0);
        assert_relative_eq!(p.value_at_origin(), 0.5 * (2.0 + 0.5));
        assert_relative_eq!(p.eval(&[1.0, -1.0]).unwrap(), 0.0);
        let g = p.grad(&[2.0, 0.0]).unwrap();
        assert_relative_eq!(g[0], 2.0);
        assert_relative_eq!(g[1], 0.5);
        assert!(quadratic_potential(vec![0.0], vec![0.0]).is_err());
    }
}
