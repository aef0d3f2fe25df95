//! The learning loop and its convergence/stability diagnostics.
//!
//! Each period the agent picks an action from the current posterior (myopic
//! argmax with uniform tie-breaking, logit sampling, or the scenario's
//! override policy), draws an outcome from the true kernel, and accumulates
//! log-likelihoods. Paths are fully deterministic given (scenario, prior,
//! horizon, seed, policy): one master ChaCha8 stream per path, with draws
//! consumed in a fixed order each period (tie/choice draw first, then the
//! outcome draw), so outcome draws stay aligned across policies. Replication
//! suites derive independent generators as (master seed, replication index)
//! via the generator's stream mechanism, so aggregation is order-independent.
//!
//! Beliefs are accumulated as raw log-weights and never renormalized inside
//! a path; probabilities are normalized on read. A replay that applies the
//! same per-period log-likelihood vectors to the same prior therefore
//! reproduces the recorded belief path bit for bit.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::decision::{best_reply_set, logit_choice};
use crate::equilibrium::{check_equilibrium, CheckKind, EquilibriumResult};
use crate::inference::{
    default_min_set_tol, kl_min_set, q_moment, weighted_kl, InferenceError,
};
use crate::model::{
    Belief, KernelFamily, MixedAction, Observation, OutcomeSpace, Scenario, TrueKernel,
};
use crate::Real;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("posterior mass on the index set underflowed to exact zero")]
    DegenerateMass,
    #[error("window too long: {0}")]
    WindowTooLong(String),
    #[error("the index set intersects the KL-minimizer set of the limiting frequency")]
    SetNotSeparated,
    #[error("scenario has no policy override")]
    NoOverride,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("io error: {0}")]
    Io(String),
    #[error("corrupt path record: {0}")]
    Corrupt(String),
}

pub type DynamicsResult<T> = Result<T, DynamicsError>;

/// How actions are chosen from beliefs.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy<S> {
    /// Argmax of posterior expected utility, uniform among ties.
    Myopic { tol: S },
    /// Random-utility sampling at temperature `tau`.
    Logit { tau: S },
    /// The scenario's injected policy override.
    Override,
}

impl<S: Real> Policy<S> {
    pub fn descriptor(&self) -> String {
        match self {
            Policy::Myopic { tol } => format!("myopic(tol={})", tol.to_f64_lossy()),
            Policy::Logit { tau } => format!("logit(tau={})", tau.to_f64_lossy()),
            Policy::Override => "override".to_string(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        match self {
            Policy::Myopic { tol } => json!({"type": "myopic", "tol": tol.to_f64_lossy()}),
            Policy::Logit { tau } => json!({"type": "logit", "tau": tau.to_f64_lossy()}),
            Policy::Override => json!({"type": "override"}),
        }
    }

    pub fn from_json_value(v: &serde_json::Value) -> DynamicsResult<Self> {
        let kind = v
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| DynamicsError::Corrupt("policy missing type".into()))?;
        match kind {
            "myopic" => Ok(Policy::Myopic {
                tol: S::from_f64_lossy(v.get("tol").and_then(|x| x.as_f64()).unwrap_or(1.0e-9)),
            }),
            "logit" => Ok(Policy::Logit {
                tau: S::from_f64_lossy(v.get("tau").and_then(|x| x.as_f64()).unwrap_or(1.0)),
            }),
            "override" => Ok(Policy::Override),
            other => Err(DynamicsError::Corrupt(format!("unknown policy `{other}`"))),
        }
    }
}

impl<S: Real> fmt::Display for Policy<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor())
    }
}

/// Recorded outcomes: indices for finite outcome spaces, values for the line.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes<S> {
    Indices(Vec<u32>),
    Values(Vec<S>),
}

impl<S: Real> Outcomes<S> {
    pub fn len(&self) -> usize {
        match self {
            Outcomes::Indices(v) => v.len(),
            Outcomes::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observation(&self, t: usize) -> Observation<S> {
        match self {
            Outcomes::Indices(v) => Observation::Finite(v[t] as usize),
            Outcomes::Values(v) => Observation::Real(v[t]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    /// Number of completed periods.
    pub t: usize,
    /// Raw (unnormalized) posterior log-weights after period `t`.
    pub logw: Vec<S>,
    /// Count-based empirical action frequency of the first `t` actions.
    pub sigma: Vec<S>,
}

/// One seeded trajectory of the learning loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<S> {
    pub scenario_id: String,
    pub seed: u64,
    pub horizon: usize,
    pub policy: Policy<S>,
    pub prior_logw: Vec<S>,
    pub actions: Vec<u32>,
    pub outcomes: Outcomes<S>,
    pub checkpoints: Vec<Checkpoint<S>>,
    pub checkpoint_every: usize,
}

impl<S: Real> PathRecord<S> {
    pub fn final_belief(&self) -> Belief<S> {
        let logw = self
            .checkpoints
            .last()
            .expect("paths have at least the final checkpoint")
            .logw
            .clone();
        Belief::from_log_weights(logw).expect("recorded beliefs are valid")
    }
}

/// Exact count-based frequency of the first `t` recorded actions.
pub fn empirical_frequency<S: Real>(
    path: &PathRecord<S>,
    t: usize,
    n_actions: usize,
) -> DynamicsResult<MixedAction<S>> {
    if t == 0 || t > path.actions.len() {
        return Err(DynamicsError::OutOfRange(format!(
            "t = {t} outside 1..={}",
            path.actions.len()
        )));
    }
    let mut counts = vec![0usize; n_actions];
    for &a in &path.actions[..t] {
        counts[a as usize] += 1;
    }
    let tt = S::from_usize(t).unwrap();
    MixedAction::new(
        counts
            .iter()
            .map(|&c| S::from_usize(c).unwrap() / tt)
            .collect(),
    )
    .map_err(|e| DynamicsError::Corrupt(e.to_string()))
}

fn sample_index<S: Real>(u: f64, probs: &[S]) -> usize {
    let mut acc = 0.0f64;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn draw_outcome<S: Real>(
    scenario: &Scenario<S>,
    action: usize,
    rng: &mut ChaCha8Rng,
) -> Observation<S> {
    match scenario.true_kernel() {
        TrueKernel::Categorical { prob } => {
            let u: f64 = rng.random();
            Observation::Finite(sample_index(u, &prob[action]))
        }
        TrueKernel::GaussianMean { mean } => {
            // Box-Muller with a fixed two-draw budget per outcome.
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let r = (-2.0 * (1.0 - u1).max(f64::MIN_POSITIVE).ln()).sqrt();
            let z = r * (core::f64::consts::TAU * u2).cos();
            Observation::Real(mean[action] + S::from_f64_lossy(z))
        }
    }
}

/// Runs the learning loop for `horizon` periods.
///
/// Per period, in order: one tie/choice draw (always consumed), the action
/// choice, the outcome draw(s), and the Bayes accumulation. Checkpoints are
/// taken every `ceil(horizon / 200)` periods and at the final period.
pub fn simulate_path<S: Real>(
    scenario: &Scenario<S>,
    prior: &Belief<S>,
    horizon: usize,
    seed: u64,
    policy: &Policy<S>,
) -> DynamicsResult<PathRecord<S>> {
    simulate_path_stream(scenario, prior, horizon, seed, 0, policy)
}

/// As [`simulate_path`], on the given stream of the seeded generator.
/// Replication suites use streams `1..=reps` of a shared master seed.
pub fn simulate_path_stream<S: Real>(
    scenario: &Scenario<S>,
    prior: &Belief<S>,
    horizon: usize,
    seed: u64,
    stream: u64,
    policy: &Policy<S>,
) -> DynamicsResult<PathRecord<S>> {
    if horizon == 0 {
        return Err(DynamicsError::OutOfRange("horizon must be >= 1".into()));
    }
    if prior.len() != scenario.n_params() {
        return Err(DynamicsError::OutOfRange(
            "prior length differs from the parameter grid".into(),
        ));
    }
    if matches!(policy, Policy::Override) && scenario.policy_override().is_none() {
        return Err(DynamicsError::NoOverride);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let n_actions = scenario.n_actions();
    let every = horizon.div_ceil(200);
    let mut belief = prior.clone();
    let mut counts = vec![0usize; n_actions];
    let mut actions: Vec<u32> = Vec::with_capacity(horizon);
    let mut outcomes = match scenario.outcomes() {
        OutcomeSpace::Finite { .. } => Outcomes::Indices(Vec::with_capacity(horizon)),
        OutcomeSpace::GaussianLine => Outcomes::Values(Vec::with_capacity(horizon)),
    };
    let mut checkpoints = Vec::with_capacity(202);

    for t in 1..=horizon {
        let tie_draw: f64 = rng.random();
        let action = match policy {
            Policy::Override => scenario
                .override_action(&belief)
                .expect("override presence checked above"),
            Policy::Myopic { tol } => {
                let br = best_reply_set(scenario, &belief, *tol);
                if br.optimal.len() == 1 {
                    br.optimal[0]
                } else {
                    let pick =
                        ((tie_draw * br.optimal.len() as f64) as usize).min(br.optimal.len() - 1);
                    br.optimal[pick]
                }
            }
            Policy::Logit { tau } => {
                let probs = logit_choice(scenario, &belief, *tau);
                sample_index(tie_draw, probs.probs())
            }
        };
        let y = draw_outcome(scenario, action, &mut rng);
        belief.accumulate(&scenario.log_likelihood_all(action, &y));
        counts[action] += 1;
        actions.push(action as u32);
        match (&mut outcomes, y) {
            (Outcomes::Indices(v), Observation::Finite(idx)) => v.push(idx as u32),
            (Outcomes::Values(v), Observation::Real(val)) => v.push(val),
            _ => unreachable!("outcome container matches the outcome space"),
        }
        if t % every == 0 || t == horizon {
            let tt = S::from_usize(t).unwrap();
            checkpoints.push(Checkpoint {
                t,
                logw: belief.log_weights().to_vec(),
                sigma: counts
                    .iter()
                    .map(|&c| S::from_usize(c).unwrap() / tt)
                    .collect(),
            });
        }
    }

    Ok(PathRecord {
        scenario_id: scenario.id().to_string(),
        seed,
        horizon,
        policy: policy.clone(),
        prior_logw: prior.log_weights().to_vec(),
        actions,
        outcomes,
        checkpoints,
        checkpoint_every: every,
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport<S> {
    /// Set when the last `window` actions are identical.
    pub action_limit: Option<usize>,
    /// Set when the frequency moved less than `freq_tol` over the window.
    pub frequency_limit: Option<MixedAction<S>>,
    pub freq_tol: S,
    pub window: usize,
    /// Equilibrium check at the detected limit, when one exists.
    pub equilibrium: Option<EquilibriumResult<S>>,
}

/// Convergence diagnostics over the trailing `window` periods, with an
/// equilibrium check of the detected limit.
pub fn diagnose_convergence<S: Real>(
    scenario: &Scenario<S>,
    path: &PathRecord<S>,
    window: usize,
    freq_tol: S,
) -> DynamicsResult<ConvergenceReport<S>> {
    let t_final = path.actions.len();
    if window == 0 || window >= t_final {
        return Err(DynamicsError::OutOfRange(format!(
            "window {window} must lie in 1..{t_final}"
        )));
    }
    let last = path.actions[t_final - 1];
    let action_limit = path.actions[t_final - window..]
        .iter()
        .all(|&a| a == last)
        .then_some(last as usize);
    let sigma_final = empirical_frequency(path, t_final, scenario.n_actions())?;
    let sigma_before = empirical_frequency(path, t_final - window, scenario.n_actions())?;
    let frequency_limit =
        (sigma_final.linf_distance(&sigma_before) < freq_tol).then_some(sigma_final.clone());

    let equilibrium = if let Some(a) = action_limit {
        Some(check_equilibrium(
            scenario,
            &MixedAction::point_mass(scenario.n_actions(), a),
            CheckKind::Standard,
            crate::decision::default_opt_tol(),
        )?)
    } else if frequency_limit.is_some() {
        Some(check_equilibrium(
            scenario,
            &sigma_final,
            CheckKind::Generalized,
            crate::decision::default_opt_tol(),
        )?)
    } else {
        None
    };

    Ok(ConvergenceReport {
        action_limit,
        frequency_limit,
        freq_tol,
        window,
        equilibrium,
    })
}

#[derive(Debug, Clone)]
pub struct ConcentrationReport<S> {
    /// Least-squares slope of log posterior mass on the set against t.
    pub slope: S,
    pub stderr: S,
    /// Closed-form decay rate: the KL gap between the set and the minimizer,
    /// weighted by the path's final empirical frequency.
    pub rho_closed_form: S,
    pub points_used: usize,
}

/// Fits the posterior decay rate on a parameter index set over the second
/// half of the checkpoint schedule and reports the closed-form gap rate for
/// comparison. The set must be disjoint from the KL-minimizer set of the
/// final empirical frequency.
pub fn concentration_rate<S: Real>(
    scenario: &Scenario<S>,
    path: &PathRecord<S>,
    set: &[usize],
) -> DynamicsResult<ConcentrationReport<S>> {
    if set.is_empty() || set.iter().any(|&i| i >= scenario.n_params()) {
        return Err(DynamicsError::OutOfRange("bad parameter index set".into()));
    }
    let sigma = empirical_frequency(path, path.actions.len(), scenario.n_actions())?;
    let report = kl_min_set(scenario, &sigma, default_min_set_tol())?;
    if set.iter().any(|i| report.min_set.contains(i)) {
        return Err(DynamicsError::SetNotSeparated);
    }
    let rho = {
        let min_on_set = set
            .iter()
            .map(|&i| weighted_kl(scenario, i, &sigma))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(S::infinity(), |a, b| if b < a { b } else { a });
        min_on_set - report.min_value
    };

    let half = path.checkpoints.len() / 2;
    let mut xs: Vec<S> = Vec::new();
    let mut ys: Vec<S> = Vec::new();
    for cp in &path.checkpoints[half..] {
        let belief = Belief::from_log_weights(cp.logw.clone())
            .map_err(|e| DynamicsError::Corrupt(e.to_string()))?;
        let log_mass = belief.log_mass_on(set);
        if log_mass == S::neg_infinity() {
            return Err(DynamicsError::DegenerateMass);
        }
        xs.push(S::from_usize(cp.t).unwrap());
        ys.push(log_mass);
    }
    let n = xs.len();
    if n < 3 {
        return Err(DynamicsError::OutOfRange(
            "too few checkpoints for a slope fit".into(),
        ));
    }
    let nf = S::from_usize(n).unwrap();
    let mean_x: S = xs.iter().copied().sum::<S>() / nf;
    let mean_y: S = ys.iter().copied().sum::<S>() / nf;
    let sxx: S = xs.iter().map(|&x| (x - mean_x) * (x - mean_x)).sum();
    let sxy: S = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let ss_res: S = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let fit = mean_y + slope * (x - mean_x);
            (y - fit) * (y - fit)
        })
        .sum();
    let dof = S::from_usize(n - 2).unwrap();
    let stderr = (ss_res / dof / sxx).sqrt();

    Ok(ConcentrationReport {
        slope,
        stderr,
        rho_closed_form: rho,
        points_used: n,
    })
}

#[derive(Debug, Clone)]
pub struct OscillationStats<S> {
    /// Times the pairwise log-odds hit or crossed zero.
    pub crossings: usize,
    pub max_abs_log_odds: S,
    /// Extremes of the posterior mass on the first parameter: exact from the
    /// dense replay for two-point grids, checkpoint-based otherwise.
    pub min_mass: S,
    pub max_mass: S,
    pub final_log_odds: S,
}

/// Oscillation statistics for the posterior odds between two grid points,
/// reconstructed from the recorded outcome sequence with the simulator's
/// accumulation order, so the dense series is exact.
pub fn oscillation_stats<S: Real>(
    scenario: &Scenario<S>,
    path: &PathRecord<S>,
    theta: usize,
    theta_other: usize,
) -> DynamicsResult<OscillationStats<S>> {
    if theta == theta_other || theta >= scenario.n_params() || theta_other >= scenario.n_params()
    {
        return Err(DynamicsError::OutOfRange(
            "need two distinct grid points".into(),
        ));
    }
    let two_point = scenario.n_params() == 2;
    let mut w_i = path.prior_logw[theta];
    let mut w_j = path.prior_logw[theta_other];
    let mut ell = w_i - w_j;
    let mut crossings = 0usize;
    let mut max_abs = ell.abs();
    let mut min_mass = S::infinity();
    let mut max_mass = S::neg_infinity();
    let mass_from_ell = |e: S| S::one() / (S::one() + (-e).exp());
    if two_point {
        let m = mass_from_ell(ell);
        min_mass = min_mass.min(m);
        max_mass = max_mass.max(m);
    }
    // Equal odds within an absolute band: per-step log-ratios are order one,
    // so accumulated rounding stays far below this.
    let zero_band = S::from_f64_lossy(1.0e-9);
    for t in 0..path.actions.len() {
        let a = path.actions[t] as usize;
        let y = path.outcomes.observation(t);
        let prev = ell;
        w_i = w_i + scenario.log_likelihood(theta, a, &y);
        w_j = w_j + scenario.log_likelihood(theta_other, a, &y);
        ell = w_i - w_j;
        let hit_zero = ell.abs() <= zero_band && prev.abs() > zero_band;
        let sign_flip = prev.abs() > zero_band
            && ell.abs() > zero_band
            && (prev > S::zero()) != (ell > S::zero());
        if hit_zero || sign_flip {
            crossings += 1;
        }
        max_abs = max_abs.max(ell.abs());
        if two_point {
            let m = mass_from_ell(ell);
            min_mass = min_mass.min(m);
            max_mass = max_mass.max(m);
        }
    }
    if !two_point {
        for cp in &path.checkpoints {
            let belief = Belief::from_log_weights(cp.logw.clone())
                .map_err(|e| DynamicsError::Corrupt(e.to_string()))?;
            let m = belief.probs()[theta];
            min_mass = min_mass.min(m);
            max_mass = max_mass.max(m);
        }
    }
    Ok(OscillationStats {
        crossings,
        max_abs_log_odds: max_abs,
        min_mass,
        max_mass,
        final_log_odds: ell,
    })
}

/// True when the subjective kernels ignore the action entirely for every
/// parameter.
pub fn is_subjectively_exogenous<S: Real>(scenario: &Scenario<S>) -> bool {
    let tol = S::from_f64_lossy(1.0e-12);
    match scenario.family() {
        KernelFamily::Categorical { prob } => prob.iter().all(|per_action| {
            per_action
                .windows(2)
                .all(|w| w[0].iter().zip(&w[1]).all(|(&a, &b)| (a - b).abs() <= tol))
        }),
        KernelFamily::GaussianMean { mean } => mean
            .iter()
            .all(|row| row.windows(2).all(|w| (w[0] - w[1]).abs() <= tol)),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ProbeMode<S> {
    /// Priors drawn in the ball: mass above `1 - epsilon` on parameters whose
    /// outcome distribution at the target action is within `epsilon` (total
    /// variation) of some KL minimizer's.
    UniformStability { epsilon: S },
    /// Replications all start from the scenario's own full-support prior.
    PositiveAttraction,
}

#[derive(Debug, Clone)]
pub struct AttractionEstimate<S> {
    pub successes: usize,
    pub reps: usize,
    pub estimate: S,
    pub wilson_low: S,
    pub wilson_high: S,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval<S: Real>(successes: usize, reps: usize) -> (S, S) {
    let z = 1.959963984540054f64;
    let n = reps as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (
        S::from_f64_lossy((center - half).max(0.0)),
        S::from_f64_lossy((center + half).min(1.0)),
    )
}

/// Abramowitz-Stegun style erf approximation (absolute error below 1.5e-7),
/// enough for total-variation radii in the probes.
fn erf_approx(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// Total variation between the outcome distributions of two grid parameters
/// at one action.
fn outcome_tv<S: Real>(scenario: &Scenario<S>, t1: usize, t2: usize, action: usize) -> S {
    match scenario.family() {
        KernelFamily::Categorical { prob } => {
            let half = S::from_f64_lossy(0.5);
            half * prob[t1][action]
                .iter()
                .zip(&prob[t2][action])
                .map(|(&a, &b)| (a - b).abs())
                .sum()
        }
        KernelFamily::GaussianMean { mean } => {
            // TV between unit-variance Gaussians: erf(|dm| / (2 sqrt 2)).
            let dm = (mean[t1][action] - mean[t2][action]).to_f64_lossy().abs();
            S::from_f64_lossy(erf_approx(dm / (2.0 * core::f64::consts::SQRT_2)))
        }
    }
}

/// Monte Carlo probe of uniform stability / positive attraction: the
/// fraction of seeded replications whose action path settles on the target.
/// Replications run on independent streams of the master seed.
#[allow(clippy::too_many_arguments)]
pub fn probe_attraction<S: Real>(
    scenario: &Scenario<S>,
    target_action: usize,
    mode: ProbeMode<S>,
    reps: usize,
    horizon: usize,
    seed: u64,
    policy: &Policy<S>,
    window: usize,
) -> DynamicsResult<AttractionEstimate<S>> {
    if reps == 0 {
        return Err(DynamicsError::OutOfRange("reps must be >= 1".into()));
    }
    let ball: Option<Vec<usize>> = match mode {
        ProbeMode::PositiveAttraction => None,
        ProbeMode::UniformStability { epsilon } => {
            let point = MixedAction::point_mass(scenario.n_actions(), target_action);
            let report = kl_min_set(scenario, &point, default_min_set_tol())?;
            let mut ball = Vec::new();
            for t in 0..scenario.n_params() {
                let near = report
                    .min_set
                    .iter()
                    .any(|&m| outcome_tv(scenario, t, m, target_action) <= epsilon);
                if near {
                    ball.push(t);
                }
            }
            Some(ball)
        }
    };

    let mut successes = 0usize;
    for rep in 0..reps {
        let mut prior_rng = ChaCha8Rng::seed_from_u64(seed);
        prior_rng.set_stream(1 + rep as u64);
        let prior = match (&mode, &ball) {
            (ProbeMode::PositiveAttraction, _) => scenario.prior().clone(),
            (ProbeMode::UniformStability { epsilon }, Some(ball)) => {
                random_ball_prior(scenario, ball, epsilon.to_f64_lossy(), &mut prior_rng)?
            }
            _ => unreachable!("ball computed for the stability mode"),
        };
        let path = simulate_path_stream(scenario, &prior, horizon, seed, 1 + rep as u64, policy)?;
        let report = diagnose_convergence(scenario, &path, window, S::from_f64_lossy(0.02))?;
        if report.action_limit == Some(target_action) {
            successes += 1;
        }
    }
    let (lo, hi) = wilson_interval(successes, reps);
    Ok(AttractionEstimate {
        successes,
        reps,
        estimate: S::from_usize(successes).unwrap() / S::from_usize(reps).unwrap(),
        wilson_low: lo,
        wilson_high: hi,
    })
}

/// Random full-support prior with mass above `1 - eps` on the ball indices:
/// exponential weights inside, a uniform draw below `eps` spread outside.
fn random_ball_prior<S: Real>(
    scenario: &Scenario<S>,
    ball: &[usize],
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> DynamicsResult<Belief<S>> {
    if ball.is_empty() {
        return Err(DynamicsError::OutOfRange(
            "the stability ball is empty at this radius".into(),
        ));
    }
    let n = scenario.n_params();
    let exp_draw = |rng: &mut ChaCha8Rng| -> f64 {
        -(1.0 - rng.random::<f64>()).max(f64::MIN_POSITIVE).ln()
    };
    let mut weights = vec![0.0f64; n];
    let mut in_mass = 0.0;
    for &i in ball {
        let w = exp_draw(rng);
        weights[i] = w;
        in_mass += w;
    }
    let outside: Vec<usize> = (0..n).filter(|i| !ball.contains(i)).collect();
    let out_total = if outside.is_empty() {
        0.0
    } else {
        rng.random::<f64>() * eps * 0.999
    };
    if !outside.is_empty() {
        let mut s = 0.0;
        let mut out_weights = vec![0.0f64; outside.len()];
        for w in out_weights.iter_mut() {
            *w = exp_draw(rng);
            s += *w;
        }
        for (k, &i) in outside.iter().enumerate() {
            weights[i] = out_weights[k] / s * out_total;
        }
    }
    let scale = (1.0 - out_total) / in_mass;
    for &i in ball {
        weights[i] *= scale;
    }
    // Keep full support so Bayes updates stay defined.
    let floor = 1.0e-300;
    let ws: Vec<S> = weights
        .iter()
        .map(|&w| S::from_f64_lossy(w.max(floor)))
        .collect();
    Belief::from_weights(&ws).map_err(|e| DynamicsError::Corrupt(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVerdict {
    LocallyStable,
    Unstable,
    Inconclusive,
}

impl fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StabilityVerdict::LocallyStable => write!(f, "locally_stable"),
            StabilityVerdict::Unstable => write!(f, "unstable"),
            StabilityVerdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport<S> {
    pub verdict: StabilityVerdict,
    /// The (q, rival-theta) pair witnessing the verdict, when decisive.
    pub witness: Option<(S, usize)>,
    /// Whether the point belief supports a Berk-Nash equilibrium: the
    /// parameter minimizes the KL divergence at its own prescribed action.
    pub equilibrium_belief: bool,
    pub sampled_beliefs: usize,
    pub notes: Vec<String>,
}

/// Default q-dominance exponent grid: powers of two from 2^-7 to 2^3.
pub fn default_q_grid<S: Real>() -> Vec<S> {
    (-7..=3).map(|k| S::from_f64_lossy(2.0f64.powi(k))).collect()
}

/// Classifies local stability of the point belief at `theta` by searching
/// for a q-dominance exponent that orders it against every rival at every
/// sampled nearby belief. Beliefs are sampled on `shells` shells of the
/// given L1 radius, along single-rival and uniform directions. Enlarging
/// the grid or the mesh can only resolve `Inconclusive`, never flip a
/// decisive verdict, because both decisive cases quantify over all samples.
pub fn classify_stability<S: Real>(
    scenario: &Scenario<S>,
    theta: usize,
    q_grid: &[S],
    radius: S,
    shells: usize,
) -> DynamicsResult<StabilityReport<S>> {
    let n = scenario.n_params();
    if theta >= n {
        return Err(DynamicsError::OutOfRange("theta index".into()));
    }
    let mut notes = Vec::new();

    let point = Belief::point_mass(n, theta);
    let a_point = action_at(scenario, &point, &mut notes)?;
    let report_at_point = kl_min_set(
        scenario,
        &MixedAction::point_mass(scenario.n_actions(), a_point),
        default_min_set_tol(),
    )?;
    let equilibrium_belief = report_at_point.min_set.contains(&theta);
    if !equilibrium_belief {
        notes.push("point belief is not a Berk-Nash equilibrium belief, so it is unstable".into());
    }

    let mut samples: Vec<(Belief<S>, usize)> = Vec::new();
    for shell in 1..=shells {
        let r = radius * S::from_usize(shell).unwrap() / S::from_usize(shells).unwrap();
        // ||mu - delta_theta||_1 = 2 * (mass moved off theta).
        let moved = r / S::from_f64_lossy(2.0);
        let mut directions: Vec<Vec<S>> = Vec::new();
        for other in 0..n {
            if other != theta {
                let mut dir = vec![S::zero(); n];
                dir[other] = S::one();
                directions.push(dir);
            }
        }
        if n > 2 {
            let w = S::one() / S::from_usize(n - 1).unwrap();
            let mut dir = vec![w; n];
            dir[theta] = S::zero();
            directions.push(dir);
        }
        for dir in directions {
            let mut weights = vec![S::zero(); n];
            weights[theta] = S::one() - moved;
            for (i, &d) in dir.iter().enumerate() {
                weights[i] = weights[i] + moved * d;
            }
            let belief = Belief::from_weights(&weights)
                .map_err(|e| DynamicsError::Corrupt(e.to_string()))?;
            let a = action_at(scenario, &belief, &mut notes)?;
            samples.push((belief, a));
        }
    }
    let sampled = samples.len();

    let strict = S::one() - S::from_f64_lossy(1.0e-13);
    for &q in q_grid {
        let mut all = true;
        'outer: for (_, a) in &samples {
            for other in 0..n {
                if other == theta {
                    continue;
                }
                if q_moment(scenario, theta, other, *a, q)? >= strict {
                    all = false;
                    break 'outer;
                }
            }
        }
        if all {
            return Ok(StabilityReport {
                verdict: StabilityVerdict::LocallyStable,
                witness: Some((q, theta)),
                equilibrium_belief,
                sampled_beliefs: sampled,
                notes,
            });
        }
    }
    for &q in q_grid {
        for other in 0..n {
            if other == theta {
                continue;
            }
            let mut all = true;
            for (_, a) in &samples {
                if q_moment(scenario, other, theta, *a, q)? >= strict {
                    all = false;
                    break;
                }
            }
            if all {
                return Ok(StabilityReport {
                    verdict: StabilityVerdict::Unstable,
                    witness: Some((q, other)),
                    equilibrium_belief,
                    sampled_beliefs: sampled,
                    notes,
                });
            }
        }
    }
    Ok(StabilityReport {
        verdict: StabilityVerdict::Inconclusive,
        witness: None,
        equilibrium_belief,
        sampled_beliefs: sampled,
        notes,
    })
}

/// The action the scenario's policy prescribes at a belief: the override
/// when present, otherwise a unique myopic argmax (non-uniqueness is noted).
fn action_at<S: Real>(
    scenario: &Scenario<S>,
    belief: &Belief<S>,
    notes: &mut Vec<String>,
) -> DynamicsResult<usize> {
    if scenario.policy_override().is_some() {
        return Ok(scenario.override_action(belief).expect("override present"));
    }
    let br = best_reply_set(scenario, belief, crate::decision::default_opt_tol());
    if br.optimal.len() > 1 && !notes.iter().any(|n| n.contains("argmax")) {
        notes.push("myopic argmax is not unique near the point belief".into());
    }
    Ok(br.optimal[0])
}

// --- path record persistence -------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Persists a path record as a self-describing directory: `steps.csv`,
/// `checkpoints.csv`, and `manifest.json` (written last, as the commit
/// point, with a checksum of the data files).
pub fn save_path_record<S: Real>(path: &PathRecord<S>, dir: &Path) -> DynamicsResult<()> {
    fs::create_dir_all(dir).map_err(|e| DynamicsError::Io(e.to_string()))?;
    let mut steps = String::from("t,action,outcome\n");
    for t in 0..path.actions.len() {
        let y = match &path.outcomes {
            Outcomes::Indices(v) => v[t].to_string(),
            Outcomes::Values(v) => fmt_g17(v[t].to_f64_lossy()),
        };
        steps.push_str(&format!("{},{},{}\n", t + 1, path.actions[t], y));
    }
    let mut checkpoints = String::from("t");
    let k = path.prior_logw.len();
    let n_sigma = path
        .checkpoints
        .first()
        .map(|c| c.sigma.len())
        .unwrap_or(0);
    for i in 0..k {
        checkpoints.push_str(&format!(",logw_{i}"));
    }
    for i in 0..n_sigma {
        checkpoints.push_str(&format!(",sigma_{i}"));
    }
    checkpoints.push('\n');
    for cp in &path.checkpoints {
        checkpoints.push_str(&cp.t.to_string());
        for w in &cp.logw {
            checkpoints.push_str(&format!(",{}", fmt_g17(w.to_f64_lossy())));
        }
        for s in &cp.sigma {
            checkpoints.push_str(&format!(",{}", fmt_g17(s.to_f64_lossy())));
        }
        checkpoints.push('\n');
    }
    fs::write(dir.join("steps.csv"), &steps).map_err(|e| DynamicsError::Io(e.to_string()))?;
    fs::write(dir.join("checkpoints.csv"), &checkpoints)
        .map_err(|e| DynamicsError::Io(e.to_string()))?;
    let checksum = fnv1a(steps.as_bytes()) ^ fnv1a(checkpoints.as_bytes()).rotate_left(1);
    let manifest = json!({
        "scenario_id": path.scenario_id,
        "seed": path.seed,
        "horizon": path.horizon,
        "policy": path.policy.to_json_value(),
        "prior_logw": path.prior_logw.iter().map(|w| w.to_f64_lossy()).collect::<Vec<_>>(),
        "checkpoint_every": path.checkpoint_every,
        "outcome_kind": match &path.outcomes {
            Outcomes::Indices(_) => "indices",
            Outcomes::Values(_) => "values",
        },
        "checksum": format!("{checksum:016x}"),
    });
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| DynamicsError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text).map_err(|e| DynamicsError::Io(e.to_string()))?;
    Ok(())
}

/// Reloads a path record bit-exactly, verifying the manifest checksum.
pub fn load_path_record<S: Real>(dir: &Path) -> DynamicsResult<PathRecord<S>> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| DynamicsError::Io(e.to_string()))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&manifest_text).map_err(|e| DynamicsError::Corrupt(e.to_string()))?;
    let steps =
        fs::read_to_string(dir.join("steps.csv")).map_err(|e| DynamicsError::Io(e.to_string()))?;
    let checkpoints_text = fs::read_to_string(dir.join("checkpoints.csv"))
        .map_err(|e| DynamicsError::Io(e.to_string()))?;
    let checksum = fnv1a(steps.as_bytes()) ^ fnv1a(checkpoints_text.as_bytes()).rotate_left(1);
    let recorded = manifest
        .get("checksum")
        .and_then(|c| c.as_str())
        .ok_or_else(|| DynamicsError::Corrupt("manifest missing checksum".into()))?;
    if recorded != format!("{checksum:016x}") {
        return Err(DynamicsError::Corrupt("checksum mismatch".into()));
    }

    let get = |key: &str| {
        manifest
            .get(key)
            .cloned()
            .ok_or_else(|| DynamicsError::Corrupt(format!("manifest missing {key}")))
    };
    let outcome_kind = get("outcome_kind")?;
    let outcome_kind = outcome_kind.as_str().unwrap_or("indices").to_string();
    let mut actions = Vec::new();
    let mut idxs = Vec::new();
    let mut vals = Vec::new();
    for line in steps.lines().skip(1) {
        let mut parts = line.split(',');
        let _t = parts.next();
        let a: u32 = parts
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| DynamicsError::Corrupt("bad steps row".into()))?;
        actions.push(a);
        let y = parts
            .next()
            .ok_or_else(|| DynamicsError::Corrupt("bad steps row".into()))?;
        if outcome_kind == "indices" {
            idxs.push(
                y.parse::<u32>()
                    .map_err(|e| DynamicsError::Corrupt(e.to_string()))?,
            );
        } else {
            vals.push(S::from_f64_lossy(
                y.parse::<f64>()
                    .map_err(|e| DynamicsError::Corrupt(e.to_string()))?,
            ));
        }
    }
    let prior_logw: Vec<S> = get("prior_logw")?
        .as_array()
        .ok_or_else(|| DynamicsError::Corrupt("bad prior".into()))?
        .iter()
        .map(|v| S::from_f64_lossy(v.as_f64().unwrap_or(f64::NAN)))
        .collect();
    let k = prior_logw.len();
    let mut checkpoints = Vec::new();
    for line in checkpoints_text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 1 + k {
            return Err(DynamicsError::Corrupt("short checkpoint row".into()));
        }
        let t: usize = cells[0]
            .parse()
            .map_err(|_| DynamicsError::Corrupt("bad checkpoint t".into()))?;
        let logw = cells[1..=k]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map(S::from_f64_lossy)
                    .map_err(|e| DynamicsError::Corrupt(e.to_string()))
            })
            .collect::<DynamicsResult<Vec<S>>>()?;
        let sigma = cells[k + 1..]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map(S::from_f64_lossy)
                    .map_err(|e| DynamicsError::Corrupt(e.to_string()))
            })
            .collect::<DynamicsResult<Vec<S>>>()?;
        checkpoints.push(Checkpoint { t, logw, sigma });
    }
    Ok(PathRecord {
        scenario_id: get("scenario_id")?.as_str().unwrap_or_default().to_string(),
        seed: get("seed")?.as_u64().unwrap_or(0),
        horizon: get("horizon")?.as_u64().unwrap_or(0) as usize,
        policy: Policy::from_json_value(&get("policy")?)?,
        prior_logw,
        actions,
        outcomes: if outcome_kind == "indices" {
            Outcomes::Indices(idxs)
        } else {
            Outcomes::Values(vals)
        },
        checkpoints,
        checkpoint_every: get("checkpoint_every")?.as_u64().unwrap_or(1) as usize,
    })
}
