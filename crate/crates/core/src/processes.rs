//! The two continuous-time pictures behind the sampler and the identities
//! connecting them.
//!
//! The observation process is `X(s) = s X + B(s)` for `X ~ exp(-V)` and a
//! Brownian motion `B`; its time-`s` marginal is written `xi_s` and the
//! conditional law of `X` given `X(s) = y` has unnormalized log-density
//! `-V(x) - ||s x - y||^2 / (2 s)`. The Ornstein-Uhlenbeck flow
//! `dX = -X dt + sqrt(2) dB` is the same object on a different clock:
//! `s = exp(-2t) / (1 - exp(-2t))`, with the state rescaled by
//! `sqrt(s (1 + s))`. Everything here either converts between the two
//! clocks, evaluates marginals in closed form for Gaussian-mixture targets,
//! or checks a closed-form identity against a quadrature oracle.

use std::sync::Arc;

use rand::Rng;

use crate::linalg;
use crate::potential::{mixture_potential, GaussianMixture, Potential};
use crate::quadrature;
use crate::{Error, Result};

/// Time on the observation-process clock; strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlTime(f64);

/// Time on the Ornstein-Uhlenbeck clock; strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuTime(f64);

impl SlTime {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(
                "observation time",
                format!("{s} is not strictly positive and finite"),
            ));
        }
        Ok(Self(s))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `t = log sqrt((s + 1) / s)`; strictly decreasing in `s`.
    pub fn to_ou(self) -> OuTime {
        OuTime(((self.0 + 1.0) / self.0).sqrt().ln())
    }
}

impl OuTime {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(
                "relaxation time",
                format!("{t} is not strictly positive and finite"),
            ));
        }
        Ok(Self(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `s = exp(-2t) / (1 - exp(-2t))`, inverse of [`SlTime::to_ou`].
    pub fn to_sl(self) -> SlTime {
        let e = (-2.0 * self.0).exp();
        SlTime(e / (1.0 - e))
    }
}

/// One forward draw `s x + B(s)`; at `s = 0` the process has not moved and
/// the result is exactly zero.
pub fn sl_forward_sample<R: Rng + ?Sized>(x: &[f64], s: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::invalid("observation time", "must be finite and nonnegative"));
    }
    if s == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let noise = linalg::standard_normal_vec(x.len(), rng);
    Ok(x.iter()
        .zip(&noise)
        .map(|(xi, z)| s * xi + s.sqrt() * z)
        .collect())
}

/// Unnormalized conditional log-density of the target given `X(s) = y`:
/// `-V(x) - ||s x - y||^2 / (2 s)`. Counts one value query.
pub fn posterior_unnorm_logdensity(
    potential: &Potential,
    s: SlTime,
    y: &[f64],
    x: &[f64],
) -> Result<f64> {
    let s = s.get();
    let v = potential.eval(x)?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let shift: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = s * xi - yi;
            r * r
        })
        .sum();
    Ok(-v - shift / (2.0 * s))
}

/// Marginal of the observation process at time `s` for a mixture target:
/// again a mixture, with centers `s c_i` and covariance `s^2 Sigma + s I`.
pub fn sl_marginal(mixture: &GaussianMixture, s: SlTime) -> Result<GaussianMixture> {
    let s = s.get();
    let centers = mixture
        .centers()
        .iter()
        .map(|c| linalg::scale(s, c))
        .collect();
    let cov = mixture.covariance().scale_add_identity(s * s, s)?;
    GaussianMixture::new(mixture.weights().to_vec(), centers, cov)
}

/// Density of the observation-process marginal at `y`.
pub fn marginal_density_mixture(mixture: &GaussianMixture, s: SlTime, y: &[f64]) -> Result<f64> {
    Ok(sl_marginal(mixture, s)?.density(y))
}

/// Ornstein-Uhlenbeck marginal at time `t` for a mixture start: centers
/// shrink by `exp(-t)` and the covariance relaxes toward identity.
pub fn ou_marginal(mixture: &GaussianMixture, t: OuTime) -> Result<GaussianMixture> {
    let decay = (-t.get()).exp();
    let centers = mixture
        .centers()
        .iter()
        .map(|c| linalg::scale(decay, c))
        .collect();
    let cov = mixture
        .covariance()
        .scale_add_identity(decay * decay, 1.0 - decay * decay)?;
    GaussianMixture::new(mixture.weights().to_vec(), centers, cov)
}

/// Smoothness of the tilted potential as a function of observation time.
///
/// `Constant` profiles admit closed-form integrals; `Varying` profiles are
/// integrated adaptively.
#[derive(Clone)]
pub enum SmoothnessProfile {
    Constant(f64),
    Varying(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for SmoothnessProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "SmoothnessProfile::Constant({c})"),
            Self::Varying(_) => write!(f, "SmoothnessProfile::Varying(..)"),
        }
    }
}

impl SmoothnessProfile {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::invalid("smoothness", "must be finite and nonnegative"));
        }
        Ok(Self::Constant(c))
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Varying(Arc::new(f))
    }

    pub fn at(&self, s: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Varying(f) => f(s),
        }
    }

    /// `int_lo^hi L_s / (s (1 + s)) ds`, the exponent appearing in the
    /// conservation-style bounds. Constant profiles use
    /// `c log(hi (1 + lo) / (lo (1 + hi)))` exactly.
    pub fn integral_weighted(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo > 0.0 && hi >= lo) || !hi.is_finite() {
            return Err(Error::invalid(
                "integration limits",
                format!("need 0 < lo <= hi finite, got [{lo}, {hi}]"),
            ));
        }
        if lo == hi {
            return Ok(0.0);
        }
        match self {
            Self::Constant(c) => Ok(c * ((hi * (1.0 + lo)) / (lo * (1.0 + hi))).ln()),
            Self::Varying(f) => {
                quadrature::integrate(|s| f(s) / (s * (1.0 + s)), lo, hi, 1e-10)
            }
        }
    }

    /// Plain `∫ profile(s) ds` over `[lo, hi]`, no weight. Unlike
    /// [`Self::integral_weighted`] the lower limit may be 0; a profile that
    /// is not integrable there surfaces as a quadrature error.
    pub fn integral_plain(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 0.0 && hi >= lo) || !hi.is_finite() {
            return Err(Error::invalid(
                "integration limits",
                format!("need 0 <= lo <= hi finite, got [{lo}, {hi}]"),
            ));
        }
        if lo == hi {
            return Ok(0.0);
        }
        match self {
            Self::Constant(c) => Ok(c * (hi - lo)),
            Self::Varying(f) => quadrature::integrate(|s| f(s), lo, hi, 1e-10),
        }
    }
}

/// Analytic smoothness profile of a mixture target along the flow: the
/// time-`s` marginal, rescaled to the Ornstein-Uhlenbeck picture, is again a
/// mixture, and its smoothness constant is available in closed form.
pub fn mixture_profile(mixture: &GaussianMixture) -> SmoothnessProfile {
    let m = mixture.clone();
    SmoothnessProfile::from_fn(move |s| {
        let shrink = (s / (1.0 + s)).sqrt();
        let radius = shrink * m.radius();
        let cov = m
            .covariance()
            .scale_add_identity(shrink * shrink, 1.0 - shrink * shrink)
            .expect("relaxed covariance stays positive definite");
        crate::potential::mixture_smoothness(radius, &cov).expect("finite radius")
    })
}

/// Posterior mean and covariance computed by adaptive quadrature of the
/// unnormalized conditional density. Supports dimension 1 and 2 only.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// Integration window for the conditional law of a mixture target: the
/// intersection of a box around the mixture components with the window of
/// the Gaussian observation factor. The conditional density is a product of
/// the two, so its mass lives inside both.
fn mixture_posterior_window(
    mixture: &GaussianMixture,
    s: f64,
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = mixture.dim();
    let precision = mixture.covariance().inverse();
    let post_prec = precision.scale_add_identity(1.0, s)?;
    let post_cov = post_prec.inverse();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for c in mixture.centers() {
        let pulled = linalg::add_scaled(&precision.apply(c), 1.0, y);
        let mean = post_cov.apply(&pulled);
        for i in 0..dim {
            let spread = 12.0 * post_cov.entry(i, i).sqrt();
            lo[i] = lo[i].min(mean[i] - spread);
            hi[i] = hi[i].max(mean[i] + spread);
        }
    }
    Ok((lo, hi))
}

/// Quadrature moments of the conditional law `propto exp(-V(x) - ||s x -
/// y||^2 / (2 s))` over an explicit box window.
pub fn posterior_moments(
    potential: &Potential,
    s: SlTime,
    y: &[f64],
    window: (&[f64], &[f64]),
) -> Result<PosteriorMoments> {
    let dim = potential.dim();
    if dim > 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let (lo, hi) = window;
    if lo.len() != dim || hi.len() != dim || y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: lo.len().min(hi.len()).min(y.len()),
        });
    }
    // Shift the exponent so the integrand peaks near 1; candidates cover the
    // observation pull and the origin.
    let sv = s.get();
    let mut shift = f64::NEG_INFINITY;
    let candidates = [linalg::scale(1.0 / sv, y), vec![0.0; dim]];
    for c in &candidates {
        if c.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h) {
            shift = shift.max(posterior_unnorm_logdensity(potential, s, y, c)?);
        }
    }
    let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    shift = shift.max(posterior_unnorm_logdensity(potential, s, y, &center)?);

    let weight = |x: &[f64]| -> f64 {
        let lp = posterior_unnorm_logdensity(potential, s, y, x)
            .expect("dimensions checked above");
        (lp - shift).exp()
    };
    let tol = quadrature::DEFAULT_TOL;
    match dim {
        1 => {
            let mass = quadrature::integrate(|x| weight(&[x]), lo[0], hi[0], tol)?;
            let mean = quadrature::integrate(|x| x * weight(&[x]), lo[0], hi[0], tol)? / mass;
            let var = quadrature::integrate(
                |x| (x - mean) * (x - mean) * weight(&[x]),
                lo[0],
                hi[0],
                tol,
            )? / mass;
            Ok(PosteriorMoments {
                mean: vec![mean],
                covariance: vec![vec![var]],
            })
        }
        2 => {
            let xr = (lo[0], hi[0]);
            let yr = (lo[1], hi[1]);
            let mass = quadrature::integrate_2d(|a, b| weight(&[a, b]), xr, yr, tol)?;
            let m0 = quadrature::integrate_2d(|a, b| a * weight(&[a, b]), xr, yr, tol)? / mass;
            let m1 = quadrature::integrate_2d(|a, b| b * weight(&[a, b]), xr, yr, tol)? / mass;
            let c00 = quadrature::integrate_2d(
                |a, b| (a - m0) * (a - m0) * weight(&[a, b]),
                xr,
                yr,
                tol,
            )? / mass;
            let c11 = quadrature::integrate_2d(
                |a, b| (b - m1) * (b - m1) * weight(&[a, b]),
                xr,
                yr,
                tol,
            )? / mass;
            let c01 = quadrature::integrate_2d(
                |a, b| (a - m0) * (b - m1) * weight(&[a, b]),
                xr,
                yr,
                tol,
            )? / mass;
            Ok(PosteriorMoments {
                mean: vec![m0, m1],
                covariance: vec![vec![c00, c01], vec![c01, c11]],
            })
        }
        _ => unreachable!(),
    }
}

/// [`posterior_moments`] with the window derived from the mixture structure.
pub fn mixture_posterior_moments(
    mixture: &GaussianMixture,
    s: SlTime,
    y: &[f64],
) -> Result<PosteriorMoments> {
    let potential = mixture_potential(mixture)?;
    let (lo, hi) = mixture_posterior_window(mixture, s.get(), y)?;
    posterior_moments(&potential, s, y, (&lo, &hi))
}

/// Result of checking one identity: both routes and their largest absolute
/// disagreement.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IdentityCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub max_abs_diff: f64,
}

/// Score identity for the observation marginal: the gradient of
/// `log xi_s(y)` equals the conditional expectation of `X - y/s`.
///
/// Left side: closed-form mixture score. Right side: quadrature of the
/// potential-based conditional density. Dimension 1 or 2.
pub fn verify_tweedie(mixture: &GaussianMixture, s: SlTime, y: &[f64]) -> Result<IdentityCheck> {
    if mixture.dim() > 2 {
        return Err(Error::UnsupportedDimension(mixture.dim()));
    }
    let lhs = sl_marginal(mixture, s)?.score(y);
    let moments = mixture_posterior_moments(mixture, s, y)?;
    let rhs: Vec<f64> = moments
        .mean
        .iter()
        .zip(y)
        .map(|(m, yi)| m - yi / s.get())
        .collect();
    let max_abs_diff = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(IdentityCheck { lhs, rhs, max_abs_diff })
}

/// Curvature identity for the observation marginal: the Hessian of
/// `log xi_s(y)` equals `cov(conditional) - I/s`.
///
/// Left side: central second differences of the closed-form log-marginal
/// (step `1e-3`). Right side: quadrature covariance. Matrices are returned
/// row-major. Dimension 1 or 2.
pub fn verify_hessian_identity(
    mixture: &GaussianMixture,
    s: SlTime,
    y: &[f64],
) -> Result<IdentityCheck> {
    let dim = mixture.dim();
    if dim > 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let marginal = sl_marginal(mixture, s)?;
    let f = |p: &[f64]| marginal.log_density(p);
    let h = 1e-3;
    let mut lhs = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let e = |di: f64, dj: f64| {
                let mut p = y.to_vec();
                p[i] += di;
                p[j] += dj;
                f(&p)
            };
            lhs[i * dim + j] = if i == j {
                (e(h, 0.0) - 2.0 * f(y) + e(-h, 0.0)) / (h * h)
            } else {
                (e(h, h) - e(h, -h) - e(-h, h) + e(-h, -h)) / (4.0 * h * h)
            };
        }
    }
    let moments = mixture_posterior_moments(mixture, s, y)?;
    let mut rhs = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            rhs[i * dim + j] = moments.covariance[i][j]
                - if i == j { 1.0 / s.get() } else { 0.0 };
        }
    }
    let max_abs_diff = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(IdentityCheck { lhs, rhs, max_abs_diff })
}

/// Eigenvalues of a symmetric 1x1 or 2x2 matrix given as nested rows.
fn small_symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    match m.len() {
        1 => vec![m[0][0]],
        2 => {
            let half_tr = 0.5 * (m[0][0] + m[1][1]);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (half_tr * half_tr - det).max(0.0).sqrt();
            vec![half_tr - disc, half_tr + disc]
        }
        _ => unreachable!("checked by callers"),
    }
}

/// Outcome of the conditional-covariance sandwich check at one `(s, y)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SandwichCheck {
    pub lower: f64,
    pub upper: f64,
    pub eigenvalues: Vec<f64>,
    pub pass: bool,
}

/// Checks that every eigenvalue of the quadrature conditional covariance
/// lies in `[(1 + s - L_s) / (s (1 + s)), (1 + s + L_s) / (s (1 + s))]`,
/// where `L_s` comes from the supplied profile.
pub fn covariance_sandwich_check(
    mixture: &GaussianMixture,
    s: SlTime,
    y: &[f64],
    profile: &SmoothnessProfile,
) -> Result<SandwichCheck> {
    if mixture.dim() > 2 {
        return Err(Error::UnsupportedDimension(mixture.dim()));
    }
    let sv = s.get();
    let l_s = profile.at(sv);
    let lower = (1.0 + sv - l_s) / (sv * (1.0 + sv));
    let upper = (1.0 + sv + l_s) / (sv * (1.0 + sv));
    let moments = mixture_posterior_moments(mixture, s, y)?;
    let eigenvalues = small_symmetric_eigenvalues(&moments.covariance);
    let slack = 1e-7;
    let pass = eigenvalues
        .iter()
        .all(|&l| l >= lower - slack && l <= upper + slack);
    Ok(SandwichCheck {
        lower,
        upper,
        eigenvalues,
        pass,
    })
}

/// One point of the relaxation-rate check for a Gaussian start.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OuKlPoint {
    pub t: f64,
    pub kl: f64,
    pub bound: f64,
    pub pass: bool,
}

/// For a start `N(mean0, var0 I)`, the flow marginal stays Gaussian and its
/// divergence from `N(0, I)` is available in closed form; the check compares
/// it against `exp(-2t) (L d + M)` with `L = 1/var0` and
/// `M = ||mean0||^2 + d var0`.
pub fn ou_kl_decay_check(mean0: &[f64], var0: f64, times: &[f64]) -> Result<Vec<OuKlPoint>> {
    if !(var0 > 0.0) || !var0.is_finite() {
        return Err(Error::invalid("variance", "must be positive and finite"));
    }
    let d = mean0.len() as f64;
    let m = linalg::norm_sq(mean0) + d * var0;
    let l = 1.0 / var0;
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(Error::invalid("time grid", "entries must be nonnegative"));
            }
            let decay = (-2.0 * t).exp();
            let vt = decay * var0 + 1.0 - decay;
            let mean_sq = decay * linalg::norm_sq(mean0);
            let kl = 0.5 * (d * (vt - 1.0 - vt.ln()) + mean_sq);
            let bound = decay * (l * d + m);
            Ok(OuKlPoint {
                t,
                kl,
                bound,
                pass: kl <= bound + 1e-12,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::potential::standard_gaussian_potential;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn two_point_mixture() -> GaussianMixture {
        GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn clock_conversion_known_value() {
        let t = SlTime::new(1.0).unwrap().to_ou();
        assert_relative_eq!(t.get(), 2.0_f64.sqrt().ln(), epsilon = 1e-15);
        let s = OuTime::new(2.0_f64.sqrt().ln()).unwrap().to_sl();
        assert_relative_eq!(s.get(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clock_rejects_nonpositive_times() {
        assert!(SlTime::new(0.0).is_err());
        assert!(SlTime::new(-1.0).is_err());
        assert!(OuTime::new(0.0).is_err());
        assert!(OuTime::new(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn clock_round_trip(log_s in -13.0f64..13.0) {
            let s = log_s.exp();
            let back = SlTime::new(s).unwrap().to_ou().to_sl().get();
            prop_assert!((back - s).abs() <= 1e-9 * s.max(1.0));
        }
    }

    #[test]
    fn forward_sample_at_zero_is_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = sl_forward_sample(&[3.0, -2.0], 0.0, &mut rng).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let v = sl_forward_sample(&[2.0], 1.0, &mut rng).unwrap()[0];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // X(1) = 2 + Z: mean 2, variance 1; allow 4 standard errors.
        assert!((mean - 2.0).abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn single_component_marginal_value() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0]]).unwrap();
        let d = marginal_density_mixture(&m, SlTime::new(1.0).unwrap(), &[0.0]).unwrap();
        // xi_1 = N(0, 2), density at 0 is 1/sqrt(4 pi).
        assert_relative_eq!(d, 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rescaled_marginal_matches_relaxation_marginal() {
        let m = two_point_mixture();
        for &s in &[0.5, 1.0, 3.0] {
            let sl = SlTime::new(s).unwrap();
            let scale = (s * (1.0 + s)).sqrt();
            let ou = ou_marginal(&m, sl.to_ou()).unwrap();
            let slm = sl_marginal(&m, sl).unwrap();
            for &z in &[-2.0, -0.3, 0.0, 1.4] {
                // If Z = X(s) / scale then p_Z(z) = p_{X(s)}(scale z) * scale.
                let lhs = slm.density(&[scale * z]) * scale;
                let rhs = ou.density(&[z]);
                assert_relative_eq!(lhs, rhs, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn gaussian_posterior_moments_are_exact() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0]]).unwrap();
        let s = SlTime::new(1.5).unwrap();
        let y = [1.2];
        let moments = mixture_posterior_moments(&m, s, &y).unwrap();
        // Conditional of N(0,1) given s X + B(s) = y is N(y/(1+s), 1/(1+s)).
        assert_relative_eq!(moments.mean[0], 1.2 / 2.5, epsilon = 1e-8);
        assert_relative_eq!(moments.covariance[0][0], 1.0 / 2.5, epsilon = 1e-8);
    }

    #[test]
    fn tweedie_single_gaussian_closed_form() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0]]).unwrap();
        let check = verify_tweedie(&m, SlTime::new(1.0).unwrap(), &[2.0]).unwrap();
        assert_relative_eq!(check.lhs[0], -1.0, epsilon = 1e-10);
        assert_relative_eq!(check.rhs[0], -1.0, epsilon = 1e-6);
        assert!(check.max_abs_diff <= 1e-5);
    }

    #[test]
    fn tweedie_two_point_mixture() {
        let m = two_point_mixture();
        for &(s, y) in &[(0.5, 0.7), (2.0, -1.3), (1.0, 0.0)] {
            let check = verify_tweedie(&m, SlTime::new(s).unwrap(), &[y]).unwrap();
            assert!(
                check.max_abs_diff <= 1e-5,
                "s={s} y={y} diff={}",
                check.max_abs_diff
            );
        }
    }

    #[test]
    fn tweedie_two_dimensional() {
        let m = GaussianMixture::new(
            vec![0.4, 0.6],
            vec![vec![-0.8, 0.3], vec![0.9, -0.4]],
            SpdMatrix::new(&[vec![1.2, 0.2], vec![0.2, 0.8]]).unwrap(),
        )
        .unwrap();
        let check = verify_tweedie(&m, SlTime::new(1.3).unwrap(), &[0.5, -0.2]).unwrap();
        assert!(check.max_abs_diff <= 1e-5, "diff={}", check.max_abs_diff);
    }

    #[test]
    fn hessian_identity_single_gaussian() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0]]).unwrap();
        let check = verify_hessian_identity(&m, SlTime::new(1.0).unwrap(), &[0.7]).unwrap();
        // log xi_1 = log N(0, 2): second derivative -1/2; covariance 1/2
        // minus 1/s = -1/2.
        assert_relative_eq!(check.lhs[0], -0.5, epsilon = 1e-6);
        assert_relative_eq!(check.rhs[0], -0.5, epsilon = 1e-6);
        assert!(check.max_abs_diff <= 1e-5);
    }

    #[test]
    fn hessian_identity_mixture_both_dimensions() {
        let m1 = two_point_mixture();
        let c1 = verify_hessian_identity(&m1, SlTime::new(0.8).unwrap(), &[0.4]).unwrap();
        assert!(c1.max_abs_diff <= 1e-5, "1d diff={}", c1.max_abs_diff);

        let m2 = GaussianMixture::isotropic(
            vec![0.5, 0.5],
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let c2 = verify_hessian_identity(&m2, SlTime::new(1.0).unwrap(), &[0.3, -0.6]).unwrap();
        assert!(c2.max_abs_diff <= 1e-5, "2d diff={}", c2.max_abs_diff);
    }

    #[test]
    fn unsupported_dimension_is_rejected() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let err = verify_tweedie(&m, SlTime::new(1.0).unwrap(), &[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDimension(3)));
    }

    #[test]
    fn sandwich_single_gaussian_lower_edge_tight() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0]]).unwrap();
        let profile = SmoothnessProfile::constant(1.0).unwrap();
        let check =
            covariance_sandwich_check(&m, SlTime::new(1.0).unwrap(), &[0.9], &profile).unwrap();
        assert_relative_eq!(check.lower, 0.5);
        assert_relative_eq!(check.upper, 1.5);
        // Conditional variance is exactly 1/(1+s) = 1/2: the lower edge.
        assert_relative_eq!(check.eigenvalues[0], 0.5, epsilon = 1e-7);
        assert!(check.pass);
    }

    #[test]
    fn sandwich_holds_for_mixture_profile() {
        let m = two_point_mixture();
        let profile = mixture_profile(&m);
        for &(s, y) in &[(0.4, 0.2), (1.0, -0.9), (5.0, 4.0)] {
            let check =
                covariance_sandwich_check(&m, SlTime::new(s).unwrap(), &[y], &profile).unwrap();
            assert!(check.pass, "s={s} y={y}: {check:?}");
        }
    }

    #[test]
    fn mixture_profile_single_gaussian_is_one() {
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0]]).unwrap();
        let profile = mixture_profile(&m);
        for &s in &[0.01, 1.0, 100.0] {
            assert_relative_eq!(profile.at(s), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_integral_closed_form_matches_quadrature() {
        let constant = SmoothnessProfile::constant(2.0).unwrap();
        let varying = SmoothnessProfile::from_fn(|_| 2.0);
        let a = constant.integral_weighted(0.01, 2.01).unwrap();
        let b = varying.integral_weighted(0.01, 2.01).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-9);
        // Explicit value: 2 log((2.01 * 1.01) / (0.01 * 3.01)).
        assert_relative_eq!(
            a,
            2.0 * ((2.01_f64 * 1.01) / (0.01 * 3.01)).ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(constant.integral_weighted(0.5, 0.5).unwrap(), 0.0);
        assert!(constant.integral_weighted(0.0, 1.0).is_err());
    }

    #[test]
    fn kl_decay_known_value_and_bound() {
        let points = ou_kl_decay_check(&[3.0], 1.0, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        for p in &points {
            let decay = (-2.0 * p.t).exp();
            assert_relative_eq!(p.kl, 4.5 * decay, epsilon = 1e-12);
            assert_relative_eq!(p.bound, 11.0 * decay, epsilon = 1e-12);
            assert!(p.pass);
        }
        let narrow = ou_kl_decay_check(&[0.5, -0.5], 0.25, &[0.1, 1.0, 3.0]).unwrap();
        assert!(narrow.iter().all(|p| p.pass));
        assert!(ou_kl_decay_check(&[0.0], 0.0, &[1.0]).is_err());
    }

    #[test]
    fn posterior_logdensity_formula() {
        let p = standard_gaussian_potential(1).unwrap();
        let s = SlTime::new(2.0).unwrap();
        let v = posterior_unnorm_logdensity(&p, s, &[1.0], &[0.5]).unwrap();
        assert_relative_eq!(v, -0.125 - 0.0, epsilon = 1e-12);
    }
}
