//! The discrete walk and its late initialization.
//!
//! One step of the walk targeting `exp(-V)` draws a noisy observation
//! `N(T y, T I)` of the current state and resamples through the restricted
//! Gaussian oracle. The late-initialized variant never touches the cold
//! start problem: it draws a synthetic observation of the *target* at a tiny
//! time `s0`, starts from a Gaussian matched to the tilted potential, and
//! runs the same walk with the observation folded into every oracle call.
//! Stopping is Poissonized: the executed length is `min(K, K')` with
//! `K' ~ Poisson(K/2)`, which is what the convergence statement needs.
//!
//! Poisson draws are exact (sequential-search inversion for small rates, a
//! transformed-rejection scheme above), never a normal approximation.

use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::linalg::{self, standard_normal_vec};
use crate::potential::{Potential, QueryCounts};
use crate::processes::SmoothnessProfile;
use crate::rgo::{rgo_sample, RgoOptions, RgoQuery};
use crate::{Error, Result};

/// Exact Poisson draw. Sequential-search inversion for `lambda <= 30`;
/// transformed rejection with squeeze for larger rates. Both methods accept
/// or reject against the exact mass function.
pub fn poisson_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite and nonnegative"));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    if lambda <= 30.0 {
        return Ok(poisson_sequential(lambda, rng));
    }
    Ok(poisson_transformed_rejection(lambda, rng))
}

fn poisson_sequential<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    // Float guard: the summed CDF can saturate just below 1, so cap the walk
    // far beyond any mass the rate can reach.
    let cap = (lambda + 40.0 * lambda.sqrt() + 60.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

fn poisson_transformed_rejection<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let b = 0.931 + 2.53 * lambda.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let log_lambda = lambda.ln();
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        // Exact acceptance test against the mass function.
        if (v * inv_alpha / (a / (us * us) + b)).ln()
            <= k * log_lambda - lambda - ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}

/// Observation time for the Gaussian initialization: with
/// `ratio = epsilon^2 / (2 (L d + M))` the time is
/// `ratio^4 / (1 - ratio^4)`, which keeps the initialization within
/// `epsilon / 2` total variation of the true observation marginal.
pub fn derive_s0(epsilon: f64, smoothness: f64, dim: usize, second_moment: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
    }
    let ld_m = smoothness * dim as f64 + second_moment;
    if !(ld_m > 0.0) || !ld_m.is_finite() {
        return Err(Error::invalid(
            "target metadata",
            "L d + M must be positive and finite",
        ));
    }
    let ratio = epsilon * epsilon / (2.0 * ld_m);
    if ratio >= 1.0 {
        return Err(Error::invalid(
            "epsilon",
            format!("epsilon^2 / (2 (L d + M)) = {ratio} must be below 1"),
        ));
    }
    let r4 = ratio.powi(4);
    Ok(r4 / (1.0 - r4))
}

/// Iteration budget produced by the worst-case formula.
#[derive(Debug, Clone, Serialize)]
pub struct IterationPlan {
    /// Ceiling of `raw`, saturating.
    pub iterations: u64,
    pub raw: f64,
    /// `8 log(8/epsilon)`: the floor that dominates for easy targets.
    pub floor_branch: f64,
    /// The relaxation-driven branch with the smoothness integral.
    pub main_branch: f64,
}

/// Worst-case iteration count for accuracy `epsilon` given the realized
/// observation `x_s0`:
///
/// `max{ 8 log(8/eps), ((s0+T)/(2 s0)) exp(int_{s0}^{T+s0} L_s/(s(1+s)) ds)
///   [ log(2e) + V(0) - min V + (d/2) log((L+s0) 16 e^2 M)
///     + (2d+1) ||x_s0||^2 / (2 s0) + log(4/eps^2) ] }`
///
/// The signed log term is kept as is (it can pull the bracket negative; the
/// floor branch then dominates). Requires the potential's
/// `min_value_lower_bound` and a strictly positive second-moment bound.
pub fn compute_iterations(
    potential: &Potential,
    profile: &SmoothnessProfile,
    epsilon: f64,
    s0: f64,
    t: f64,
    x_s0: &[f64],
) -> Result<IterationPlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
    }
    if !(s0 > 0.0) || !s0.is_finite() || !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("times", "s0 and t must be positive and finite"));
    }
    if x_s0.len() != potential.dim() {
        return Err(Error::DimensionMismatch {
            expected: potential.dim(),
            got: x_s0.len(),
        });
    }
    let min_v = potential.min_value_lower_bound().ok_or_else(|| {
        Error::invalid(
            "potential",
            "min_value_lower_bound is required for the iteration formula",
        )
    })?;
    let m = potential.second_moment_bound();
    if !(m > 0.0) {
        return Err(Error::invalid(
            "second moment bound",
            "must be strictly positive for the iteration formula",
        ));
    }
    let d = potential.dim() as f64;
    let l = potential.smoothness();
    let floor_branch = 8.0 * (8.0 / epsilon).ln();
    let growth = profile.integral_weighted(s0, t + s0)?;
    let e = std::f64::consts::E;
    let bracket = (2.0 * e).ln() + potential.value_at_origin() - min_v
        + 0.5 * d * ((l + s0) * 16.0 * e * e * m).ln()
        + (2.0 * d + 1.0) * linalg::norm_sq(x_s0) / (2.0 * s0)
        + (4.0 / (epsilon * epsilon)).ln();
    let main_branch = (s0 + t) / (2.0 * s0) * growth.exp() * bracket;
    let raw = floor_branch.max(main_branch);
    let iterations = if raw >= u64::MAX as f64 {
        u64::MAX
    } else {
        raw.ceil() as u64
    };
    Ok(IterationPlan {
        iterations,
        raw,
        floor_branch,
        main_branch,
    })
}

/// Synthetic observation and matched Gaussian start.
#[derive(Debug, Clone)]
pub struct LateInitStart {
    /// Draw from `N(0, s0 (1 + s0) I)` standing in for the time-`s0`
    /// observation of the target.
    pub observation: Vec<f64>,
    /// Start `N(-grad U(0) / (2(L+s0)), I / (2(L+s0)))` for the tilted
    /// potential `U(x) = V(x) + ||obs - s0 x||^2 / (2 s0)`.
    pub start: Vec<f64>,
}

/// Draws the late initialization; costs exactly one gradient query.
pub fn late_init_start<R: Rng + ?Sized>(
    potential: &Potential,
    s0: f64,
    rng: &mut R,
) -> Result<LateInitStart> {
    if !(s0 > 0.0) || !s0.is_finite() {
        return Err(Error::invalid("s0", "must be positive and finite"));
    }
    let dim = potential.dim();
    let obs_sd = (s0 * (1.0 + s0)).sqrt();
    let observation = linalg::scale(obs_sd, &standard_normal_vec(dim, rng));
    let grad_origin = potential.grad(&vec![0.0; dim])?;
    // grad of the tilted potential at the origin: grad V(0) - observation.
    let tilted_grad = linalg::sub(&grad_origin, &observation);
    let scale = 2.0 * (potential.smoothness() + s0);
    let start_sd = (1.0 / scale).sqrt();
    let noise = standard_normal_vec(dim, rng);
    let start = tilted_grad
        .iter()
        .zip(&noise)
        .map(|(g, z)| -g / scale + start_sd * z)
        .collect();
    Ok(LateInitStart { observation, start })
}

/// One walk step: noisy observation of the state, then an oracle draw with
/// the late-initialization shift folded in. The plain walk is the special
/// case `shift = 0`, `s0 = 0`.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub rejection_rounds: u64,
    pub agm_iterations: u64,
    pub efficiency_warning: bool,
}

pub fn rgd_step<R: Rng + ?Sized>(
    potential: &Potential,
    t: f64,
    s0: f64,
    shift: &[f64],
    state: &[f64],
    options: &RgoOptions,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", "must be positive and finite"));
    }
    if !(s0 >= 0.0) || !s0.is_finite() {
        return Err(Error::invalid("s0", "must be nonnegative and finite"));
    }
    let dim = potential.dim();
    if shift.len() != dim || state.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: shift.len().min(state.len()),
        });
    }
    let noise = standard_normal_vec(dim, rng);
    let total = t + s0;
    let center: Vec<f64> = state
        .iter()
        .zip(noise.iter().zip(shift))
        .map(|(y, (z, sh))| (t * y + t.sqrt() * z + sh) / total)
        .collect();
    let query = RgoQuery::new(center, 1.0 / total)?;
    let draw = rgo_sample(potential, &query, options, rng)?;
    Ok(StepOutcome {
        state: draw.sample,
        rejection_rounds: draw.rejection_rounds,
        agm_iterations: draw.agm_iterations,
        efficiency_warning: draw.efficiency_warning,
    })
}

/// Initial state of a plain walk.
#[derive(Debug, Clone)]
pub enum ChainStart {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, variance: f64 },
}

impl ChainStart {
    fn draw<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Self::Point(p) => {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: p.len(),
                    });
                }
                Ok(p.clone())
            }
            Self::Gaussian { mean, variance } => {
                if mean.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: mean.len(),
                    });
                }
                if !(*variance > 0.0) || !variance.is_finite() {
                    return Err(Error::invalid("variance", "must be positive and finite"));
                }
                let z = standard_normal_vec(dim, rng);
                Ok(linalg::add_scaled(mean, variance.sqrt(), &z))
            }
        }
    }
}

/// Completed chain with its accounting.
#[derive(Debug, Clone, Serialize)]
pub struct ChainRun {
    pub sample: Vec<f64>,
    /// Synthetic observation of the late-initialized variant, if any.
    pub observation: Option<Vec<f64>>,
    /// Raw worst-case formula value before any cap.
    pub formula_iterations: f64,
    /// Planned length `K` after the configured cap.
    pub planned_iterations: u64,
    /// Poissonized draw `K' ~ Poisson(K/2)`.
    pub poisson_draw: u64,
    /// Steps actually executed: `min(K, K')` unless the budget intervened.
    pub executed_iterations: u64,
    pub k_truncated: bool,
    pub budget_truncated: bool,
    pub rejection_rounds: u64,
    pub agm_iterations: u64,
    pub efficiency_warning: bool,
    pub queries: QueryCounts,
}

/// Plain walk for `iterations >= 6`, Poissonized stopping included.
pub fn run_rgd<R: Rng + ?Sized>(
    potential: &Potential,
    t: f64,
    iterations: u64,
    start: &ChainStart,
    options: &RgoOptions,
    rng: &mut R,
) -> Result<ChainRun> {
    if iterations < 6 {
        return Err(Error::invalid(
            "iterations",
            "the convergence statement needs at least 6",
        ));
    }
    let dim = potential.dim();
    let mut state = start.draw(dim, rng)?;
    let poisson_draw = poisson_sample(iterations as f64 / 2.0, rng)?;
    let executed = poisson_draw.min(iterations);
    let zeros = vec![0.0; dim];
    let (mut rounds, mut agm) = (0u64, 0u64);
    let mut warned = false;
    for _ in 0..executed {
        let step = rgd_step(potential, t, 0.0, &zeros, &state, options, rng)?;
        state = step.state;
        rounds += step.rejection_rounds;
        agm += step.agm_iterations;
        warned |= step.efficiency_warning;
    }
    Ok(ChainRun {
        sample: state,
        observation: None,
        formula_iterations: iterations as f64,
        planned_iterations: iterations,
        poisson_draw,
        executed_iterations: executed,
        k_truncated: false,
        budget_truncated: false,
        rejection_rounds: rounds,
        agm_iterations: agm,
        efficiency_warning: warned,
        queries: potential.queries(),
    })
}

/// Per-run configuration of the late-initialized walk.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Total-variation accuracy target, split evenly between initialization
    /// and chain convergence.
    pub epsilon: f64,
    /// Observation noise scale; defaults to `2 L d`.
    pub t_override: Option<f64>,
    /// Initialization time; defaults to [`derive_s0`].
    pub s0_override: Option<f64>,
    /// Hard cap on the planned iteration count. The worst-case formula is
    /// astronomically conservative, so desk-scale runs rely on this cap; a
    /// capped plan is flagged in the report, never hidden.
    pub k_cap: u64,
    /// Stop once this potential's query counter reaches the budget; the run
    /// is returned truncated and flagged rather than failed.
    pub max_total_queries: Option<u64>,
    pub rgo: RgoOptions,
}

impl RunConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
        }
        Ok(Self {
            epsilon,
            t_override: None,
            s0_override: None,
            k_cap: 64,
            max_total_queries: None,
            rgo: RgoOptions::default(),
        })
    }
}

/// Late-initialized walk: synthetic observation, matched Gaussian start,
/// worst-case plan (capped by `k_cap`), Poissonized stopping, shifted steps.
pub fn run_late_init_rgd<R: Rng + ?Sized>(
    potential: &Potential,
    profile: &SmoothnessProfile,
    config: &RunConfig,
    rng: &mut R,
) -> Result<ChainRun> {
    if config.k_cap < 6 {
        return Err(Error::invalid(
            "k_cap",
            "the convergence statement needs at least 6",
        ));
    }
    let l = potential.smoothness();
    let d = potential.dim();
    let t = match config.t_override {
        Some(t) => t,
        None => 2.0 * l * d as f64,
    };
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(
            "t",
            "must be positive; a smoothness-free target needs an explicit override",
        ));
    }
    let s0 = match config.s0_override {
        Some(s0) => s0,
        None => derive_s0(config.epsilon, l, d, potential.second_moment_bound())?,
    };
    if !(s0 > 0.0) || !s0.is_finite() {
        return Err(Error::invalid("s0", "must be positive and finite"));
    }

    let init = late_init_start(potential, s0, rng)?;
    let plan = compute_iterations(potential, profile, config.epsilon, s0, t, &init.observation)?;
    let planned = plan.iterations.min(config.k_cap);
    let k_truncated = plan.iterations > config.k_cap;
    let poisson_draw = poisson_sample(planned as f64 / 2.0, rng)?;
    let target_steps = poisson_draw.min(planned);

    let over_budget =
        |p: &Potential| config.max_total_queries.is_some_and(|b| p.queries().total() >= b);
    let mut state = init.start.clone();
    let (mut rounds, mut agm) = (0u64, 0u64);
    let mut warned = false;
    let mut executed = 0u64;
    let mut budget_truncated = false;
    for _ in 0..target_steps {
        if over_budget(potential) {
            budget_truncated = true;
            break;
        }
        let step = rgd_step(potential, t, s0, &init.observation, &state, &config.rgo, rng)?;
        state = step.state;
        rounds += step.rejection_rounds;
        agm += step.agm_iterations;
        warned |= step.efficiency_warning;
        executed += 1;
    }
    Ok(ChainRun {
        sample: state,
        observation: Some(init.observation),
        formula_iterations: plan.raw,
        planned_iterations: planned,
        poisson_draw,
        executed_iterations: executed,
        k_truncated,
        budget_truncated,
        rejection_rounds: rounds,
        agm_iterations: agm,
        efficiency_warning: warned,
        queries: potential.queries(),
    })
}

/// RNG stream for `(seed, chain_index, run_index)`: the stream identifier is
/// `chain_index * 2^32 + run_index`, so adding chains or runs never perturbs
/// existing streams.
pub fn chain_rng(seed: u64, chain_index: u32, run_index: u32) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((chain_index as u64) << 32) | run_index as u64);
    rng
}

/// Deterministic multi-run driver: `chains * runs` independent
/// late-initialized walks, parallelized over the current thread pool.
///
/// Each run gets its own query counter (so the per-run budget share
/// `max_total_queries / (chains * runs)` is enforced deterministically) and
/// its own RNG stream from [`chain_rng`]. Results are ordered by
/// `(chain_index, run_index)` regardless of scheduling.
pub fn run_batch(
    potential: &Potential,
    profile: &SmoothnessProfile,
    config: &RunConfig,
    chains: u32,
    runs: u32,
    seed: u64,
) -> Result<Vec<ChainRun>> {
    use rayon::prelude::*;
    if chains == 0 || runs == 0 {
        return Err(Error::invalid("batch", "chains and runs must both be positive"));
    }
    let total = chains as u64 * runs as u64;
    let share = config.max_total_queries.map(|b| (b / total).max(1));
    let indices: Vec<(u32, u32)> = (0..chains)
        .flat_map(|c| (0..runs).map(move |r| (c, r)))
        .collect();
    indices
        .par_iter()
        .map(|&(chain, run)| {
            let local = potential.with_fresh_counter();
            let mut cfg = config.clone();
            cfg.max_total_queries = share;
            let mut rng = chain_rng(seed, chain, run);
            run_late_init_rgd(&local, profile, &cfg, &mut rng)
        })
        .collect()
}
