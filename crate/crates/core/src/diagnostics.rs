//! Statistical distances, closed-form divergences between Gaussians, and the
//! goodness-of-fit utilities used by the acceptance suite and the `verify`
//! subcommand. Every closed form here has a quadrature or summation oracle
//! next to it; the identity battery at the bottom runs the full set and
//! emits one record per check.

use serde::Serialize;
use statrs::function::erf::erf;

use crate::linalg;
use crate::potential::Potential;
use crate::processes::{ou_kl_decay_check, verify_hessian_identity, verify_tweedie, SlTime};
use crate::potential::GaussianMixture;
use crate::quadrature;
use crate::{Error, Result};

/// CDF of `N(mean, var)` at `x`.
pub fn gaussian_cdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * (1.0 + erf((x - mean) / (2.0 * var).sqrt()))
}

/// Kolmogorov-Smirnov statistic `sup |F_n - F|` against an analytic CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "empty"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples must not contain NaN"));
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        worst = worst.max((f - i as f64 / n).abs());
        worst = worst.max((f - (i + 1) as f64 / n).abs());
    }
    Ok(worst)
}

/// Chi-square divergence between `N(x, sigma2 I)` and `N(y, sigma2 I)`:
/// `exp(||x - y||^2 / sigma2) - 1`.
pub fn chi2_gaussians(x: &[f64], y: &[f64], sigma2: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("sigma2", "must be positive and finite"));
    }
    Ok((linalg::norm_sq(&linalg::sub(x, y)) / sigma2).exp_m1())
}

/// Order-2 Renyi divergence for the same pair: `log(1 + chi2)`.
pub fn renyi2_gaussians(x: &[f64], y: &[f64], sigma2: f64) -> Result<f64> {
    Ok(chi2_gaussians(x, y, sigma2)?.ln_1p())
}

/// Quadrature oracle for [`chi2_gaussians`] in one dimension:
/// `int p^2/q - 1` integrated adaptively.
pub fn chi2_gaussians_quadrature(x: f64, y: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("sigma2", "must be positive and finite"));
    }
    let sd = sigma2.sqrt();
    // p^2/q is a Gaussian-shaped bump centered at 2x - y.
    let center = 2.0 * x - y;
    let lo = center.min(x).min(y) - 12.0 * sd;
    let hi = center.max(x).max(y) + 12.0 * sd;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let integral = quadrature::integrate(
        |t| {
            let e = -(2.0 * (t - x) * (t - x) - (t - y) * (t - y)) / (2.0 * sigma2);
            norm * e.exp()
        },
        lo,
        hi,
        1e-10,
    )?;
    Ok(integral - 1.0)
}

/// KL divergence between axis-aligned Gaussians `N(mean1, diag(var1))` and
/// `N(mean2, diag(var2))`.
pub fn kl_gaussians(mean1: &[f64], var1: &[f64], mean2: &[f64], var2: &[f64]) -> Result<f64> {
    let d = mean1.len();
    if mean2.len() != d || var1.len() != d || var2.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mean2.len().min(var1.len()).min(var2.len()),
        });
    }
    if var1.iter().chain(var2).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("variances", "must be positive and finite"));
    }
    let mut kl = 0.0;
    for i in 0..d {
        let ratio = var1[i] / var2[i];
        let shift = mean1[i] - mean2[i];
        kl += 0.5 * (ratio - 1.0 - ratio.ln() + shift * shift / var2[i]);
    }
    Ok(kl)
}

/// Histogram total-variation estimate.
#[derive(Debug, Clone, Serialize)]
pub struct TvEstimate {
    pub tv: f64,
    pub empirical_outside: f64,
    pub analytic_outside: f64,
}

/// Bin edges covering `[mean - 5 sd, mean + 5 sd]` of the samples with the
/// conventional 100 bins.
pub fn default_edges(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least two points"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::invalid("samples", "zero variance"));
    }
    let lo = mean - 5.0 * sd;
    let hi = mean + 5.0 * sd;
    let bins = 100;
    Ok((0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect())
}

/// Total-variation distance between an empirical sample and an analytic
/// density, estimated on a fixed binning: half the summed absolute bin-mass
/// differences plus half the mass outside the window on either side.
///
/// Requires at least `10^4` samples (below that the estimate is dominated by
/// noise) and a window capturing at least `99.99%` of the analytic mass.
pub fn tv_histogram(
    samples: &[f64],
    density: impl Fn(f64) -> f64,
    edges: &[f64],
) -> Result<TvEstimate> {
    if samples.len() < 10_000 {
        return Err(Error::invalid(
            "samples",
            format!("need at least 10000, got {}", samples.len()),
        ));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("edges", "must be strictly increasing"));
    }
    let bins = edges.len() - 1;
    let mut analytic = Vec::with_capacity(bins);
    for w in edges.windows(2) {
        analytic.push(quadrature::integrate(&density, w[0], w[1], 1e-9)?);
    }
    let analytic_inside: f64 = analytic.iter().sum();
    if analytic_inside < 0.9999 {
        return Err(Error::invalid(
            "edges",
            format!("window covers only {analytic_inside:.6} of the analytic mass"),
        ));
    }
    let n = samples.len() as f64;
    let lo = edges[0];
    let hi = edges[bins];
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut outside = 0u64;
    for &x in samples {
        if x < lo || x >= hi {
            outside += 1;
        } else {
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
    }
    let mut acc = 0.0;
    for (c, a) in counts.iter().zip(&analytic) {
        acc += (*c as f64 / n - a).abs();
    }
    let empirical_outside = outside as f64 / n;
    let analytic_outside = (1.0 - analytic_inside).max(0.0);
    Ok(TvEstimate {
        tv: 0.5 * acc + 0.5 * (empirical_outside + analytic_outside),
        empirical_outside,
        analytic_outside,
    })
}

/// Exact-vs-bound comparison of a Poisson upper tail.
#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub lambda: f64,
    pub s: f64,
    pub exact: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `P[X >= lambda + s] <= exp(-s^2 / (2 (lambda + s)))` for
/// `X ~ Poisson(lambda)`; the exact tail comes from direct summation of the
/// probability mass function.
pub fn poisson_tail_check(lambda: f64, s: f64) -> Result<TailCheck> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite and nonnegative"));
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("s", "must be positive and finite"));
    }
    let threshold = (lambda + s).ceil() as u64;
    // Accumulate pmf from 0 with the multiplicative recurrence, keeping only
    // the head below the threshold; the tail is 1 - head, summed in the
    // stable direction for small lambda.
    let mut pmf = (-lambda).exp();
    let mut head = 0.0;
    for k in 0..threshold {
        head += pmf;
        pmf *= lambda / (k + 1) as f64;
    }
    let exact = (1.0 - head).max(0.0);
    let bound = (-s * s / (2.0 * (lambda + s))).exp();
    Ok(TailCheck {
        lambda,
        s,
        exact,
        bound,
        pass: exact <= bound + 1e-12,
    })
}

/// Constancy check for the two equivalent one-step kernels.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceCheck {
    pub difference_variance: f64,
    pub pass: bool,
}

/// The late-initialized chain conditions the original target at time
/// `t + s0` on the summed observation, while the shifted chain conditions
/// the tilted target at time `t` on its own observation. The two
/// unnormalized log-densities must differ by an `x`-independent constant;
/// the check evaluates both along a grid and reports the variance of the
/// difference (pass at `<= 1e-10`). One-dimensional targets only.
pub fn verify_rgo_equivalence(
    potential: &Potential,
    s0: f64,
    t: f64,
    x_s0: f64,
    x_t: f64,
    grid: &[f64],
) -> Result<EquivalenceCheck> {
    if potential.dim() != 1 {
        return Err(Error::UnsupportedDimension(potential.dim()));
    }
    if !(s0 > 0.0 && t > 0.0) {
        return Err(Error::invalid("times", "s0 and t must be positive"));
    }
    if grid.len() < 2 {
        return Err(Error::invalid("grid", "need at least two points"));
    }
    let mut diffs = Vec::with_capacity(grid.len());
    for &x in grid {
        let v = potential.eval(&[x])?;
        let merged = {
            let r = (t + s0) * x - (x_t + x_s0);
            -v - r * r / (2.0 * (t + s0))
        };
        let tilted = {
            let r0 = s0 * x - x_s0;
            let rt = t * x - x_t;
            -v - r0 * r0 / (2.0 * s0) - rt * rt / (2.0 * t)
        };
        let diff = merged - tilted;
        if !diff.is_finite() {
            return Err(Error::invalid("grid", format!("non-finite difference at {x}")));
        }
        diffs.push(diff);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let variance = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(EquivalenceCheck {
        difference_variance: variance,
        pass: variance <= 1e-10,
    })
}

/// One record of the identity battery, shaped for JSON reporting.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub inputs: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRecord {
    fn identity(check: &str, inputs: serde_json::Value, diff: f64, tol: f64) -> Self {
        Self {
            check: check.to_string(),
            inputs,
            lhs: diff,
            rhs: 0.0,
            tol,
            pass: diff.abs() <= tol,
        }
    }

    fn bound(check: &str, inputs: serde_json::Value, value: f64, bound: f64) -> Self {
        Self {
            check: check.to_string(),
            inputs,
            lhs: value,
            rhs: bound,
            tol: 0.0,
            pass: value <= bound + 1e-12,
        }
    }
}

/// Runs the full identity battery on canonical targets and returns one
/// record per check. Deterministic: every check is quadrature or summation
/// based, no sampling involved.
pub fn run_identity_battery() -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    let mixture =
        GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]])?;

    for &(s, y) in &[(0.5, 0.7), (1.0, 0.0), (2.0, -1.3)] {
        let check = verify_tweedie(&mixture, SlTime::new(s)?, &[y])?;
        records.push(CheckRecord::identity(
            "tweedie_score_identity",
            serde_json::json!({ "target": "two_point_mixture", "s": s, "y": [y] }),
            check.max_abs_diff,
            1e-5,
        ));
    }
    let mixture2 = GaussianMixture::isotropic(
        vec![0.5, 0.5],
        vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
    )?;
    let check2 = verify_tweedie(&mixture2, SlTime::new(1.0)?, &[0.4, -0.3])?;
    records.push(CheckRecord::identity(
        "tweedie_score_identity",
        serde_json::json!({ "target": "two_point_mixture_2d", "s": 1.0, "y": [0.4, -0.3] }),
        check2.max_abs_diff,
        1e-5,
    ));

    for &(s, y) in &[(0.8, 0.4), (1.5, -0.6)] {
        let check = verify_hessian_identity(&mixture, SlTime::new(s)?, &[y])?;
        records.push(CheckRecord::identity(
            "hessian_covariance_identity",
            serde_json::json!({ "target": "two_point_mixture", "s": s, "y": [y] }),
            check.max_abs_diff,
            1e-5,
        ));
    }
    let hess2 = verify_hessian_identity(&mixture2, SlTime::new(1.0)?, &[0.3, -0.6])?;
    records.push(CheckRecord::identity(
        "hessian_covariance_identity",
        serde_json::json!({ "target": "two_point_mixture_2d", "s": 1.0, "y": [0.3, -0.6] }),
        hess2.max_abs_diff,
        1e-5,
    ));

    let grid: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
    for (name, potential) in [
        (
            "standard_gaussian",
            crate::potential::standard_gaussian_potential(1)?,
        ),
        ("two_point_mixture", crate::potential::mixture_potential(&mixture)?),
    ] {
        let eq = verify_rgo_equivalence(&potential, 0.05, 2.0, 0.12, 1.7, &grid)?;
        records.push(CheckRecord::identity(
            "shifted_kernel_equivalence",
            serde_json::json!({ "target": name, "s0": 0.05, "t": 2.0 }),
            eq.difference_variance,
            1e-10,
        ));
    }

    for &(x, y, sigma2) in &[(0.0, 1.0, 1.0), (0.3, -0.4, 0.5), (2.0, 2.0, 0.25)] {
        let closed = chi2_gaussians(&[x], &[y], sigma2)?;
        let quad = chi2_gaussians_quadrature(x, y, sigma2)?;
        records.push(CheckRecord::identity(
            "chi2_closed_form_vs_quadrature",
            serde_json::json!({ "x": x, "y": y, "sigma2": sigma2 }),
            closed - quad,
            1e-6,
        ));
    }

    for &lambda in &[0.5, 1.0, 5.0, 20.0, 100.0] {
        for &s in &[1.0, 3.0, 10.0] {
            let tail = poisson_tail_check(lambda, s)?;
            records.push(CheckRecord::bound(
                "poisson_tail_bound",
                serde_json::json!({ "lambda": lambda, "s": s }),
                tail.exact,
                tail.bound,
            ));
        }
    }

    let times = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];
    for p in ou_kl_decay_check(&[3.0], 1.0, &times)? {
        records.push(CheckRecord::bound(
            "relaxation_kl_decay",
            serde_json::json!({ "mean0": [3.0], "var0": 1.0, "t": p.t }),
            p.kl,
            p.bound,
        ));
    }
    for p in ou_kl_decay_check(&[0.5, -1.5], 0.5, &times)? {
        records.push(CheckRecord::bound(
            "relaxation_kl_decay",
            serde_json::json!({ "mean0": [0.5, -1.5], "var0": 0.5, "t": p.t }),
            p.kl,
            p.bound,
        ));
    }

    Ok(records)
}
