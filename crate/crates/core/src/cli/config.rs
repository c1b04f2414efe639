//! Experiment configuration: a small TOML schema with strict validation.
//!
//! Unknown keys are rejected everywhere, every constraint violation names
//! the offending key, and parse → serialize → parse is the identity (the
//! round trip is property-tested).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::RunConfig;
use crate::linalg::SpdMatrix;
use crate::potential::{
    mixture_potential, quadratic_potential, standard_gaussian_potential, GaussianMixture,
    Potential,
};
use crate::processes::{mixture_profile, SmoothnessProfile};
use crate::rgo::RgoOptions;
use crate::{Error, Result};

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Target description. One `kind` plus the fields that kind needs; the
/// per-kind field check happens in [`ExperimentConfig::validate`] so the
/// error can name the stray key (tagged enums cannot reject unknown keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// `gaussian`, `mixture`, or `custom-quadratic`.
    pub kind: String,
    /// gaussian: dimension of the standard Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// mixture: component weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// mixture: component centers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    /// mixture: shared covariance rows; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    /// custom-quadratic: minimizer of the potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// custom-quadratic: per-coordinate curvatures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Total-variation accuracy target, in (0, 1).
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "one_u32")]
    pub chains: u32,
    #[serde(default = "one_u32")]
    pub runs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0_override: Option<f64>,
    #[serde(default = "default_k_cap")]
    pub k_cap: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total_queries: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory for samples.csv / report.json; created if missing.
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn one_u32() -> u32 {
    1
}

fn default_k_cap() -> u64 {
    64
}

fn default_dir() -> String {
    ".".to_string()
}

/// Everything the runner needs, resolved from a validated config.
pub struct ResolvedTarget {
    pub potential: Potential,
    pub profile: SmoothnessProfile,
    /// Analytic density of the first coordinate, for marginal diagnostics.
    pub marginal_density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub label: String,
}

/// Parses and validates a config from TOML text. Syntax errors keep the
/// toml crate's line/column messages; constraint violations name the key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn reject(key: &str, present: bool, kind: &str) -> Result<()> {
    if present {
        return Err(Error::Config(format!(
            "target.{key}: not a field of the {kind} target"
        )));
    }
    Ok(())
}

fn require<'a, T>(field: &'a Option<T>, key: &str, kind: &str) -> Result<&'a T> {
    field
        .as_ref()
        .ok_or_else(|| Error::Config(format!("target.{key}: required for the {kind} target")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.target;
        match t.kind.as_str() {
            "gaussian" => {
                require(&t.dim, "dim", "gaussian")?;
                reject("weights", t.weights.is_some(), "gaussian")?;
                reject("centers", t.centers.is_some(), "gaussian")?;
                reject("covariance", t.covariance.is_some(), "gaussian")?;
                reject("center", t.center.is_some(), "gaussian")?;
                reject("curvature", t.curvature.is_some(), "gaussian")?;
            }
            "mixture" => {
                require(&t.weights, "weights", "mixture")?;
                require(&t.centers, "centers", "mixture")?;
                reject("dim", t.dim.is_some(), "mixture")?;
                reject("center", t.center.is_some(), "mixture")?;
                reject("curvature", t.curvature.is_some(), "mixture")?;
            }
            "custom-quadratic" => {
                require(&t.center, "center", "custom-quadratic")?;
                require(&t.curvature, "curvature", "custom-quadratic")?;
                reject("dim", t.dim.is_some(), "custom-quadratic")?;
                reject("weights", t.weights.is_some(), "custom-quadratic")?;
                reject("centers", t.centers.is_some(), "custom-quadratic")?;
                reject("covariance", t.covariance.is_some(), "custom-quadratic")?;
            }
            other => {
                return Err(Error::Config(format!(
                    "target.kind: unknown kind {other:?}, expected gaussian, mixture, or custom-quadratic"
                )))
            }
        }
        let r = &self.run;
        if !(r.epsilon > 0.0 && r.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "run.epsilon: must lie in (0, 1), got {}",
                r.epsilon
            )));
        }
        if r.chains == 0 || r.runs == 0 {
            return Err(Error::Config(
                "run.chains / run.runs: must be positive".to_string(),
            ));
        }
        if r.k_cap < 6 {
            return Err(Error::Config(format!(
                "run.k_cap: the convergence statement needs at least 6, got {}",
                r.k_cap
            )));
        }
        if let Some(t_o) = r.t_override {
            if !(t_o > 0.0) || !t_o.is_finite() {
                return Err(Error::Config(
                    "run.t_override: must be positive and finite".to_string(),
                ));
            }
        }
        if let Some(s0) = r.s0_override {
            if !(s0 > 0.0) || !s0.is_finite() {
                return Err(Error::Config(
                    "run.s0_override: must be positive and finite".to_string(),
                ));
            }
        }
        // Resolving the target re-checks the numeric constraints (weights,
        // SPD covariance, curvatures); surface those errors here too.
        self.resolve_target().map(|_| ())
    }

    /// Builds the potential, its smoothness profile along the observation
    /// flow, and the analytic first-coordinate marginal.
    pub fn resolve_target(&self) -> Result<ResolvedTarget> {
        let t = &self.target;
        let remap = |e: Error| match e {
            Error::Invalid { what, why } => Error::Config(format!("target.{what}: {why}")),
            other => other,
        };
        match t.kind.as_str() {
            "gaussian" => {
                let dim = *require(&t.dim, "dim", "gaussian")?;
                let potential = standard_gaussian_potential(dim).map_err(remap)?;
                let single =
                    GaussianMixture::isotropic(vec![1.0], vec![vec![0.0; dim]]).map_err(remap)?;
                let profile = mixture_profile(&single);
                let marginal: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|x: f64| {
                    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
                });
                Ok(ResolvedTarget {
                    potential,
                    profile,
                    marginal_density: marginal,
                    label: format!("gaussian(dim={dim})"),
                })
            }
            "mixture" => {
                let weights = require(&t.weights, "weights", "mixture")?.clone();
                let centers = require(&t.centers, "centers", "mixture")?.clone();
                let mixture = match &t.covariance {
                    Some(rows) => {
                        let cov = SpdMatrix::new(rows).map_err(remap)?;
                        GaussianMixture::new(weights, centers, cov).map_err(remap)?
                    }
                    None => GaussianMixture::isotropic(weights, centers).map_err(remap)?,
                };
                let potential = mixture_potential(&mixture).map_err(remap)?;
                let profile = mixture_profile(&mixture);
                let m1 = marginal_mixture(&mixture);
                Ok(ResolvedTarget {
                    potential,
                    profile,
                    marginal_density: m1,
                    label: format!("mixture({} components)", mixture.len()),
                })
            }
            "custom-quadratic" => {
                let center = require(&t.center, "center", "custom-quadratic")?.clone();
                let curvature = require(&t.curvature, "curvature", "custom-quadratic")?.clone();
                let potential =
                    quadratic_potential(center.clone(), curvature.clone()).map_err(remap)?;
                let l_max = curvature.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let profile = SmoothnessProfile::constant(l_max).map_err(remap)?;
                let (m0, v0) = (center[0], 1.0 / curvature[0]);
                let marginal: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |x: f64| {
                    (-0.5 * (x - m0) * (x - m0) / v0).exp()
                        / (2.0 * std::f64::consts::PI * v0).sqrt()
                });
                Ok(ResolvedTarget {
                    potential,
                    profile,
                    marginal_density: marginal,
                    label: format!("custom-quadratic(dim={})", curvature.len()),
                })
            }
            other => Err(Error::Config(format!("target.kind: unknown kind {other:?}"))),
        }
    }

    /// Per-run dynamics configuration from the run section.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut rc = RunConfig::new(self.run.epsilon)
            .map_err(|_| Error::Config(format!("run.epsilon: must lie in (0, 1), got {}", self.run.epsilon)))?;
        rc.t_override = self.run.t_override;
        rc.s0_override = self.run.s0_override;
        rc.k_cap = self.run.k_cap;
        rc.max_total_queries = self.run.max_total_queries;
        rc.rgo = RgoOptions::default();
        Ok(rc)
    }
}

// First-coordinate marginal of a mixture: itself a 1D mixture with the
// projected centers and the (0,0) covariance entry.
fn marginal_mixture(mixture: &GaussianMixture) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
    let weights = mixture.weights().to_vec();
    let centers: Vec<f64> = mixture.centers().iter().map(|c| c[0]).collect();
    let var = mixture.covariance().entry(0, 0);
    Arc::new(move |x: f64| {
        let norm = (2.0 * std::f64::consts::PI * var).sqrt();
        weights
            .iter()
            .zip(&centers)
            .map(|(w, c)| w * (-0.5 * (x - c) * (x - c) / var).exp() / norm)
            .sum()
    })
}
