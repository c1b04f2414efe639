//! Python bindings for the sampler, the bound calculators, and the
//! verification battery.
//!
//! The module mirrors the Rust API at smoke-test granularity: a `Potential`
//! class built from the same three target constructors, seeded sampling
//! entry points, and the closed-form bound calculators with constant
//! smoothness profiles (profile-as-function does not cross the FFI line;
//! the Rust API has the general form).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use locsamp::diagnostics::{poisson_tail_check, run_identity_battery};
use locsamp::dynamics::{self, run_batch, ChainRun, RunConfig};
use locsamp::linalg::SpdMatrix;
use locsamp::poincare::{
    self, conservation_bound, pi_concatenation, pi_initial_subgaussian, pi_mixture_general,
    pi_mixture_identity, pi_rgd_bound, pi_subgaussian_final, BoundValue, PiBound,
};
use locsamp::potential::{
    mixture_potential, quadratic_potential, standard_gaussian_potential, GaussianMixture,
};
use locsamp::processes::{mixture_profile, SmoothnessProfile};
use locsamp::rgo::{self, RgoOptions, RgoQuery};

fn to_py_err(e: locsamp::Error) -> PyErr {
    match e {
        locsamp::Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A target `exp(-V)` together with its smoothness profile along the
/// observation flow.
#[pyclass(name = "Potential")]
struct PyPotential {
    inner: locsamp::potential::Potential,
    profile: SmoothnessProfile,
}

#[pymethods]
impl PyPotential {
    /// Standard Gaussian in `dim` dimensions.
    #[staticmethod]
    fn gaussian(dim: usize) -> PyResult<Self> {
        let inner = standard_gaussian_potential(dim).map_err(to_py_err)?;
        let single = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0; dim]])
            .map_err(to_py_err)?;
        Ok(Self {
            inner,
            profile: mixture_profile(&single),
        })
    }

    /// Axis-aligned quadratic `sum_i q_i (x_i - c_i)^2 / 2`.
    #[staticmethod]
    fn quadratic(center: Vec<f64>, curvature: Vec<f64>) -> PyResult<Self> {
        let l_max = curvature.iter().cloned().fold(0.0_f64, f64::max);
        let inner = quadratic_potential(center, curvature).map_err(to_py_err)?;
        let profile = SmoothnessProfile::constant(l_max).map_err(to_py_err)?;
        Ok(Self { inner, profile })
    }

    /// Gaussian mixture with shared covariance (identity when omitted).
    #[staticmethod]
    #[pyo3(signature = (weights, centers, covariance=None))]
    fn mixture(
        weights: Vec<f64>,
        centers: Vec<Vec<f64>>,
        covariance: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Self> {
        let mixture = match covariance {
            Some(rows) => {
                let cov = SpdMatrix::new(&rows).map_err(to_py_err)?;
                GaussianMixture::new(weights, centers, cov).map_err(to_py_err)?
            }
            None => GaussianMixture::isotropic(weights, centers).map_err(to_py_err)?,
        };
        let inner = mixture_potential(&mixture).map_err(to_py_err)?;
        let profile = mixture_profile(&mixture);
        Ok(Self { inner, profile })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }

    #[getter]
    fn second_moment_bound(&self) -> f64 {
        self.inner.second_moment_bound()
    }

    /// `V(x)` (counts one value query).
    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&x).map_err(to_py_err)
    }

    /// `grad V(x)` (counts one gradient query).
    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad(&x).map_err(to_py_err)
    }

    /// `(value_queries, gradient_queries)` so far.
    fn queries(&self) -> (u64, u64) {
        let q = self.inner.queries();
        (q.value, q.gradient)
    }

    fn reset_queries(&self) {
        self.inner.reset_queries()
    }
}

fn chain_run_dict<'py>(py: Python<'py>, run: &ChainRun) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("sample", run.sample.clone())?;
    d.set_item("observation", run.observation.clone())?;
    d.set_item("formula_iterations", run.formula_iterations)?;
    d.set_item("planned_iterations", run.planned_iterations)?;
    d.set_item("poisson_draw", run.poisson_draw)?;
    d.set_item("executed_iterations", run.executed_iterations)?;
    d.set_item("k_truncated", run.k_truncated)?;
    d.set_item("budget_truncated", run.budget_truncated)?;
    d.set_item("rejection_rounds", run.rejection_rounds)?;
    d.set_item("agm_iterations", run.agm_iterations)?;
    d.set_item("efficiency_warning", run.efficiency_warning)?;
    d.set_item("value_queries", run.queries.value)?;
    d.set_item("gradient_queries", run.queries.gradient)?;
    Ok(d)
}

/// One restricted-Gaussian-oracle draw from
/// `exp(-V(x) - ||x - center||^2 / (2 sigma2))`.
#[pyfunction]
fn rgo_sample<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    center: Vec<f64>,
    sigma2: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let query = RgoQuery::new(center, sigma2).map_err(to_py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = rgo::rgo_sample(&potential.inner, &query, &RgoOptions::default(), &mut rng)
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("sample", draw.sample)?;
    d.set_item("stationary_point", draw.stationary_point)?;
    d.set_item("rejection_rounds", draw.rejection_rounds)?;
    d.set_item("agm_iterations", draw.agm_iterations)?;
    d.set_item("efficiency_warning", draw.efficiency_warning)?;
    Ok(d)
}

/// One late-initialized chain; returns the full run accounting.
#[pyfunction]
#[pyo3(signature = (potential, epsilon, seed, k_cap=64, t_override=None, s0_override=None, max_total_queries=None))]
#[allow(clippy::too_many_arguments)]
fn run_late_init<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    epsilon: f64,
    seed: u64,
    k_cap: u64,
    t_override: Option<f64>,
    s0_override: Option<f64>,
    max_total_queries: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = RunConfig::new(epsilon).map_err(to_py_err)?;
    config.k_cap = k_cap;
    config.t_override = t_override;
    config.s0_override = s0_override;
    config.max_total_queries = max_total_queries;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = dynamics::run_late_init_rgd(&potential.inner, &potential.profile, &config, &mut rng)
        .map_err(to_py_err)?;
    chain_run_dict(py, &run)
}

/// `chains * runs` independent chains with the documented deterministic
/// seed-splitting rule; returns a list of run dicts ordered by
/// `(chain_index, run_index)`.
#[pyfunction]
#[pyo3(signature = (potential, epsilon, chains, runs, seed, k_cap=64, max_total_queries=None))]
fn sample_batch<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    epsilon: f64,
    chains: u32,
    runs: u32,
    seed: u64,
    k_cap: u64,
    max_total_queries: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = RunConfig::new(epsilon).map_err(to_py_err)?;
    config.k_cap = k_cap;
    config.max_total_queries = max_total_queries;
    let batch = run_batch(&potential.inner, &potential.profile, &config, chains, runs, seed)
        .map_err(to_py_err)?;
    batch.iter().map(|r| chain_run_dict(py, r)).collect()
}

/// Observation time keeping the Gaussian initialization within
/// `epsilon / 2` total variation.
#[pyfunction]
fn derive_s0(epsilon: f64, smoothness: f64, dim: usize, second_moment: f64) -> PyResult<f64> {
    dynamics::derive_s0(epsilon, smoothness, dim, second_moment).map_err(to_py_err)
}

fn bound_dict<'py>(py: Python<'py>, bound: &PiBound) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("formula", bound.formula.as_str())?;
    match &bound.value {
        BoundValue::Finite { value } => {
            d.set_item("value", *value)?;
            d.set_item("reason", py.None())?;
        }
        BoundValue::Infinite { reason } => {
            d.set_item("value", py.None())?;
            d.set_item("reason", reason)?;
        }
    }
    d.set_item("inputs", bound.inputs.to_string())?;
    Ok(d)
}

/// Closed-form bound table for constant smoothness profiles; keys match
/// the `bounds` CLI formula identifiers.
#[pyfunction]
#[pyo3(signature = (kind, **kwargs))]
fn pi_bound<'py>(
    py: Python<'py>,
    kind: &str,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let get = |key: &str| -> PyResult<f64> {
        kwargs
            .and_then(|k| k.get_item(key).ok().flatten())
            .map(|v| v.extract::<f64>())
            .transpose()?
            .ok_or_else(|| PyValueError::new_err(format!("{kind} needs {key}=<float>")))
    };
    let get_or = |key: &str, default: f64| -> PyResult<f64> {
        match kwargs.and_then(|k| k.get_item(key).ok().flatten()) {
            Some(v) => v.extract::<f64>(),
            None => Ok(default),
        }
    };
    let bound = match kind {
        "conservation" => {
            let profile = SmoothnessProfile::constant(get("theta")?).map_err(to_py_err)?;
            conservation_bound(&profile, get("t")?).map_err(to_py_err)?
        }
        "rgd_walk" => {
            let profile = SmoothnessProfile::constant(get_or("l_bar", 0.0)?).map_err(to_py_err)?;
            pi_rgd_bound(get("s0")?, get("t")?, &profile).map_err(to_py_err)?
        }
        "subgaussian_initial" => {
            pi_initial_subgaussian(get("s")?, get("lambda")?).map_err(to_py_err)?
        }
        "concatenation" => {
            let profile = SmoothnessProfile::constant(get_or("l_bar", 0.0)?).map_err(to_py_err)?;
            let init = pi_initial_subgaussian(get("s0")?, get("lambda")?).map_err(to_py_err)?;
            pi_concatenation(get("smoothness")?, get("s0")?, &init, &profile).map_err(to_py_err)?
        }
        "subgaussian_final" => {
            let profile = SmoothnessProfile::constant(get_or("l_bar", 0.0)?).map_err(to_py_err)?;
            let grid = get_or("grid", 200.0)? as usize;
            pi_subgaussian_final(get("lambda")?, get("smoothness")?, &profile, grid)
                .map_err(to_py_err)?
        }
        "mixture_identity" => pi_mixture_identity(get("radius")?).map_err(to_py_err)?,
        "mixture_general" => {
            let dim = get_or("dim", 1.0)? as usize;
            let sigma = SpdMatrix::scaled_identity(dim, get("sigma_scale")?).map_err(to_py_err)?;
            pi_mixture_general(get("radius")?, &sigma).map_err(to_py_err)?
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown bound kind {other:?}; see the bounds CLI table for identifiers"
            )))
        }
    };
    bound_dict(py, &bound)
}

/// Best Rayleigh quotient of the two-point mixture family target; a lower
/// bound on its Poincare constant.
#[pyfunction]
fn rayleigh_lower_bound_two_point(radius: f64) -> PyResult<f64> {
    let mixture = GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![-radius], vec![radius]])
        .map_err(to_py_err)?;
    let window = (-(radius.abs() + 13.0), radius.abs() + 13.0);
    let lb = poincare::rayleigh_quotient_lb(
        &move |x| mixture.density(&[x]),
        poincare::TestFamily::Full,
        window,
    )
    .map_err(to_py_err)?;
    Ok(lb.value)
}

/// Full analytic identity battery; a list of check dicts.
#[pyfunction]
fn identity_battery<'py>(py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let records = run_identity_battery().map_err(to_py_err)?;
    records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("check", &r.check)?;
            d.set_item("inputs", r.inputs.to_string())?;
            d.set_item("lhs", r.lhs)?;
            d.set_item("rhs", r.rhs)?;
            d.set_item("tol", r.tol)?;
            d.set_item("pass", r.pass)?;
            Ok(d)
        })
        .collect()
}

/// Exact Poisson upper-tail mass vs its concentration bound.
#[pyfunction]
fn poisson_tail<'py>(py: Python<'py>, lambda: f64, s: f64) -> PyResult<Bound<'py, PyDict>> {
    let check = poisson_tail_check(lambda, s).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("exact", check.exact)?;
    d.set_item("bound", check.bound)?;
    d.set_item("pass", check.pass)?;
    Ok(d)
}

#[pymodule]
fn locsamp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_function(wrap_pyfunction!(rgo_sample, m)?)?;
    m.add_function(wrap_pyfunction!(run_late_init, m)?)?;
    m.add_function(wrap_pyfunction!(sample_batch, m)?)?;
    m.add_function(wrap_pyfunction!(derive_s0, m)?)?;
    m.add_function(wrap_pyfunction!(pi_bound, m)?)?;
    m.add_function(wrap_pyfunction!(rayleigh_lower_bound_two_point, m)?)?;
    m.add_function(wrap_pyfunction!(identity_battery, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_tail, m)?)?;
    Ok(())
}
