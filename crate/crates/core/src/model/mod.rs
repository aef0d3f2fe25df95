//! Domain types shared by every other module, plus scenario validation.
//!
//! A [`Scenario`] bundles the primitives of one learning problem: a finite
//! parameter grid, a finite action set, an outcome space, the true outcome
//! kernel, the agent's subjective kernel family, a payoff, and a full-support
//! prior. Construction validates every standing assumption (normalization,
//! support, dimension agreement) so downstream code can rely on them.
//!
//! All types are immutable after construction and safe to share across threads.

mod spec;

pub use spec::{
    build_game_scenario, build_scenario, ActionsSpec, ContinuousThetaSpec, GameKernelSpec,
    GameScenarioSpec, GridSpec, KernelSpec, OutcomeSpec, PayoffSpec, PlayerSpec,
    PolicyOverrideSpec, ScenarioSpec, TrueKernelSpec,
};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::{log_sum_exp, Real};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("normalization error: {0}")]
    NormalizationError(String),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("all weights are zero")]
    AllZero,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

pub type ModelResult<T> = Result<T, ModelError>;

/// Tolerance for accepting an input probability row as normalized.
fn input_row_tol<S: Real>() -> S {
    let floor = S::from_f64_lossy(1.0e-9);
    let scaled = S::epsilon() * S::from_f64_lossy(1.0e7);
    floor.max(scaled)
}

fn check_finite<S: Real>(what: &str, xs: &[S]) -> ModelResult<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite(what.to_string()));
    }
    Ok(())
}

/// Renormalizes a nonnegative row in place unless it is already within a few
/// ulps of summing to one, so that re-validation is a fixed point.
fn normalize_row<S: Real>(what: &str, row: &mut [S]) -> ModelResult<()> {
    check_finite(what, row)?;
    if row.iter().any(|&x| x < S::zero()) {
        return Err(ModelError::NormalizationError(format!(
            "{what}: negative probability"
        )));
    }
    let sum: S = row.iter().copied().sum();
    let err = (sum - S::one()).abs();
    if err > input_row_tol::<S>() {
        return Err(ModelError::NormalizationError(format!(
            "{what}: row sums to {sum}, off by more than 1e-9"
        )));
    }
    let slack = S::epsilon() * S::from_usize(4 * row.len().max(1)).unwrap();
    if err > slack {
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
    Ok(())
}

/// Finite ordered list of parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid<S> {
    points: Vec<Vec<S>>,
    labels: Vec<String>,
}

impl<S: Real> ParameterGrid<S> {
    pub fn new(points: Vec<Vec<S>>, labels: Option<Vec<String>>) -> ModelResult<Self> {
        if points.is_empty() {
            return Err(ModelError::EmptyGrid);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(ModelError::DimensionMismatch(
                "parameter points must have dimension >= 1".into(),
            ));
        }
        for p in &points {
            if p.len() != dim {
                return Err(ModelError::DimensionMismatch(
                    "ragged parameter grid".into(),
                ));
            }
            check_finite("parameter grid", p)?;
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(ModelError::Duplicate(format!("parameter point #{j}")));
                }
            }
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != points.len() {
                    return Err(ModelError::LengthMismatch {
                        expected: points.len(),
                        got: l.len(),
                    });
                }
                l
            }
            None => points.iter().map(|p| format_point(p)).collect(),
        };
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, i: usize) -> &[S] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// First coordinate, for one-dimensional grids.
    pub fn scalar(&self, i: usize) -> S {
        self.points[i][0]
    }

    /// Index of the grid point closest to `target` in Euclidean distance.
    pub fn nearest(&self, target: &[S]) -> usize {
        let mut best = 0;
        let mut best_d = S::infinity();
        for (i, p) in self.points.iter().enumerate() {
            let d: S = p
                .iter()
                .zip(target)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

fn format_point<S: Real>(p: &[S]) -> String {
    if p.len() == 1 {
        format!("{}", p[0])
    } else {
        let coords: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
        format!("({})", coords.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionProvenance<S> {
    NativeFinite,
    DiscretizedInterval { lo: S, hi: S, n: usize },
}

/// Finite ordered list of action values (scalar or vector).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet<S> {
    values: Vec<Vec<S>>,
    provenance: ActionProvenance<S>,
}

impl<S: Real> ActionSet<S> {
    pub fn native(values: Vec<Vec<S>>) -> ModelResult<Self> {
        Self::new(values, ActionProvenance::NativeFinite)
    }

    /// Uniform grid of `n` scalar actions over `[lo, hi]`, endpoints included.
    pub fn discretized_interval(lo: S, hi: S, n: usize) -> ModelResult<Self> {
        if n < 2 || !(lo < hi) {
            return Err(ModelError::Invalid(
                "discretized interval needs lo < hi and n >= 2".into(),
            ));
        }
        let step = (hi - lo) / S::from_usize(n - 1).unwrap();
        let values = (0..n)
            .map(|i| {
                let x = if i + 1 == n {
                    hi
                } else {
                    lo + step * S::from_usize(i).unwrap()
                };
                vec![x]
            })
            .collect();
        Self::new(values, ActionProvenance::DiscretizedInterval { lo, hi, n })
    }

    pub fn new(values: Vec<Vec<S>>, provenance: ActionProvenance<S>) -> ModelResult<Self> {
        if values.is_empty() {
            return Err(ModelError::Invalid("action set is empty".into()));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(ModelError::DimensionMismatch(
                "actions must have dimension >= 1".into(),
            ));
        }
        for v in &values {
            if v.len() != dim {
                return Err(ModelError::DimensionMismatch("ragged action set".into()));
            }
            check_finite("action set", v)?;
        }
        for i in 0..values.len() {
            for j in (i + 1)..values.len() {
                if values[i] == values[j] {
                    return Err(ModelError::Duplicate(format!("action #{j}")));
                }
            }
        }
        if let ActionProvenance::DiscretizedInterval { .. } = provenance {
            for w in values.windows(2) {
                if !(w[0][0] < w[1][0]) {
                    return Err(ModelError::Invalid(
                        "discretized interval actions must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(Self { values, provenance })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> &[S] {
        &self.values[i]
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.values
    }

    pub fn provenance(&self) -> &ActionProvenance<S> {
        &self.provenance
    }

    /// First coordinate, for scalar actions.
    pub fn scalar(&self, i: usize) -> S {
        self.values[i][0]
    }

    /// Index of the scalar action closest to `x`.
    pub fn nearest_scalar(&self, x: S) -> usize {
        let mut best = 0;
        let mut best_d = S::infinity();
        for (i, v) in self.values.iter().enumerate() {
            let d = (v[0] - x).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeSpace<S> {
    Finite { values: Vec<S> },
    /// The real line with unit-variance Gaussian kernels.
    GaussianLine,
}

impl<S: Real> OutcomeSpace<S> {
    pub fn finite_len(&self) -> Option<usize> {
        match self {
            OutcomeSpace::Finite { values } => Some(values.len()),
            OutcomeSpace::GaussianLine => None,
        }
    }
}

/// Subjective kernel family, one outcome distribution per (parameter, action).
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily<S> {
    /// `prob[theta][action][outcome]`
    Categorical { prob: Vec<Vec<Vec<S>>> },
    /// Unit-variance Gaussian with mean `mean[theta][action]`.
    GaussianMean { mean: Vec<Vec<S>> },
}

/// True outcome kernel, one distribution per action.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueKernel<S> {
    /// `prob[action][outcome]`
    Categorical { prob: Vec<Vec<S>> },
    /// Unit-variance Gaussian with mean `mean[action]`.
    GaussianMean { mean: Vec<S> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payoff<S> {
    /// `value[action][outcome]` for finite outcome spaces.
    Table { value: Vec<Vec<S>> },
    /// `intercept[action] + slope[action] * y`, the only form allowed on
    /// `GaussianLine` so expectations stay closed-form.
    AffineInOutcome { intercept: Vec<S>, slope: Vec<S> },
}

/// One observed outcome: an index into a finite outcome space, or a real draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation<S> {
    Finite(usize),
    Real(S),
}

/// Probability vector over the parameter grid, held as raw log-weights.
///
/// The log-weights are not kept normalized; [`Belief::probs`] and
/// [`Belief::log_probs`] normalize with a max shift on demand, so horizons of
/// 1e6 updates neither overflow nor lose the exact log-odds differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<S> {
    logw: Vec<S>,
}

impl<S: Real> Belief<S> {
    /// Builds a belief from nonnegative weights (not necessarily normalized).
    pub fn from_weights(weights: &[S]) -> ModelResult<Self> {
        if weights.is_empty() {
            return Err(ModelError::EmptyGrid);
        }
        check_finite("belief weights", weights)?;
        if weights.iter().any(|&w| w < S::zero()) {
            return Err(ModelError::NormalizationError(
                "belief weights must be nonnegative".into(),
            ));
        }
        if weights.iter().all(|&w| w == S::zero()) {
            return Err(ModelError::AllZero);
        }
        let logw = weights.iter().map(|&w| w.ln()).collect();
        let mut b = Self { logw };
        b.renormalize();
        Ok(b)
    }

    /// Builds a belief from raw log-weights (entries may be -inf, not NaN).
    pub fn from_log_weights(logw: Vec<S>) -> ModelResult<Self> {
        if logw.is_empty() {
            return Err(ModelError::EmptyGrid);
        }
        if logw.iter().any(|x| x.is_nan() || *x == S::infinity()) {
            return Err(ModelError::NonFinite("belief log-weights".into()));
        }
        if logw.iter().all(|&x| x == S::neg_infinity()) {
            return Err(ModelError::AllZero);
        }
        Ok(Self { logw })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            logw: vec![S::zero(); n],
        }
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut logw = vec![S::neg_infinity(); n];
        logw[i] = S::zero();
        Self { logw }
    }

    pub fn len(&self) -> usize {
        self.logw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logw.is_empty()
    }

    pub fn log_weights(&self) -> &[S] {
        &self.logw
    }

    /// Adds `delta` to each log-weight, leaving normalization for later.
    pub fn accumulate(&mut self, delta: &[S]) {
        for (w, d) in self.logw.iter_mut().zip(delta) {
            *w = *w + *d;
        }
    }

    /// Shifts log-weights so they are normalized (log-sum-exp equals zero).
    pub fn renormalize(&mut self) {
        let lse = log_sum_exp(&self.logw);
        for w in self.logw.iter_mut() {
            if *w > S::neg_infinity() {
                *w = *w - lse;
            }
        }
    }

    /// Normalized probabilities, computed with a max shift.
    pub fn probs(&self) -> Vec<S> {
        let max = self
            .logw
            .iter()
            .fold(S::neg_infinity(), |acc, &x| if x > acc { x } else { acc });
        let unnorm: Vec<S> = self.logw.iter().map(|&x| (x - max).exp()).collect();
        let sum: S = unnorm.iter().copied().sum();
        unnorm.into_iter().map(|x| x / sum).collect()
    }

    /// Normalized log-probabilities.
    pub fn log_probs(&self) -> Vec<S> {
        let lse = log_sum_exp(&self.logw);
        self.logw
            .iter()
            .map(|&x| {
                if x == S::neg_infinity() {
                    x
                } else {
                    x - lse
                }
            })
            .collect()
    }

    /// Log of the normalized posterior mass on an index set.
    pub fn log_mass_on(&self, indices: &[usize]) -> S {
        let subset: Vec<S> = indices.iter().map(|&i| self.logw[i]).collect();
        log_sum_exp(&subset) - log_sum_exp(&self.logw)
    }

    /// Raw log-odds between two grid points.
    pub fn log_odds(&self, i: usize, j: usize) -> S {
        self.logw[i] - self.logw[j]
    }

    pub fn l1_distance(&self, other: &Self) -> S {
        let p = self.probs();
        let q = other.probs();
        p.iter().zip(&q).map(|(&a, &b)| (a - b).abs()).sum()
    }
}

/// Probability vector over the action set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedAction<S> {
    probs: Vec<S>,
}

impl<S: Real> MixedAction<S> {
    pub fn new(probs: Vec<S>) -> ModelResult<Self> {
        if probs.is_empty() {
            return Err(ModelError::Invalid("mixed action over no actions".into()));
        }
        let mut probs = probs;
        normalize_row("mixed action", &mut probs)?;
        Ok(Self { probs })
    }

    /// Normalizes an arbitrary nonnegative vector (used by solvers that mix).
    pub fn from_unnormalized(weights: Vec<S>) -> ModelResult<Self> {
        if weights.is_empty() {
            return Err(ModelError::Invalid("mixed action over no actions".into()));
        }
        check_finite("mixed action", &weights)?;
        if weights.iter().any(|&w| w < S::zero()) {
            return Err(ModelError::NormalizationError(
                "mixed action weights must be nonnegative".into(),
            ));
        }
        let sum: S = weights.iter().copied().sum();
        if sum <= S::zero() {
            return Err(ModelError::AllZero);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut probs = vec![S::zero(); n];
        probs[i] = S::one();
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![S::one() / S::from_usize(n).unwrap(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> S {
        self.probs[i]
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    /// Indices with probability above `tol`.
    pub fn support(&self, tol: S) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn linf_distance(&self, other: &Self) -> S {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |acc, d| if d > acc { d } else { acc })
    }
}

/// A policy injected in place of utility maximization.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyOverride<S> {
    /// Scalar effort `scale * prod_k mu(theta_k)`, snapped to the nearest
    /// action on the grid. Degenerate beliefs map to effort zero.
    BeliefProductEffort { scale: S },
    /// Always the same action.
    FixedAction { index: usize },
}

/// Closed-form structure for KL minimization over the convex hull of the
/// parameter grid: subjective means affine in the parameter vector,
/// `m_theta(a) = offset[a] + sum_k theta[k] * factor[k][a]`, with the
/// parameter ranging over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTheta<S> {
    pub offset: Vec<S>,
    pub factors: Vec<Vec<S>>,
    pub lo: Vec<S>,
    pub hi: Vec<S>,
}

impl<S: Real> ContinuousTheta<S> {
    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn mean_at(&self, theta: &[S], action: usize) -> S {
        let mut m = self.offset[action];
        for (k, f) in self.factors.iter().enumerate() {
            m = m + theta[k] * f[action];
        }
        m
    }
}

/// Identifier plus free-form numeric reference values.
pub type Metadata = BTreeMap<String, f64>;

/// The pieces of a scenario, before validation.
#[derive(Debug, Clone)]
pub struct ScenarioParts<S> {
    pub id: String,
    pub grid: ParameterGrid<S>,
    pub actions: ActionSet<S>,
    pub outcomes: OutcomeSpace<S>,
    pub true_kernel: TrueKernel<S>,
    pub family: KernelFamily<S>,
    pub payoff: Payoff<S>,
    pub prior_weights: Vec<S>,
    pub policy_override: Option<PolicyOverride<S>>,
    pub continuous_theta: Option<ContinuousTheta<S>>,
    pub metadata: Metadata,
}

/// A fully validated single-agent scenario.
#[derive(Debug, Clone)]
pub struct Scenario<S> {
    id: String,
    grid: ParameterGrid<S>,
    actions: ActionSet<S>,
    outcomes: OutcomeSpace<S>,
    true_kernel: TrueKernel<S>,
    family: KernelFamily<S>,
    payoff: Payoff<S>,
    prior_weights: Vec<S>,
    prior: Belief<S>,
    policy_override: Option<PolicyOverride<S>>,
    continuous_theta: Option<ContinuousTheta<S>>,
    metadata: Metadata,
}

impl<S: Real> Scenario<S> {
    /// Validates every invariant and returns the scenario. This is the single
    /// construction path; all tables are checked for shape, finiteness,
    /// normalization, and the support condition, and probability rows are
    /// renormalized to machine precision.
    pub fn new(parts: ScenarioParts<S>) -> ModelResult<Self> {
        let ScenarioParts {
            id,
            grid,
            actions,
            outcomes,
            mut true_kernel,
            mut family,
            payoff,
            prior_weights,
            policy_override,
            continuous_theta,
            metadata,
        } = parts;

        let n_theta = grid.len();
        let n_actions = actions.len();

        if let OutcomeSpace::Finite { values } = &outcomes {
            if values.len() < 2 {
                return Err(ModelError::Invalid(
                    "finite outcome space needs at least 2 values".into(),
                ));
            }
            check_finite("outcome values", values)?;
            for i in 0..values.len() {
                for j in (i + 1)..values.len() {
                    if values[i] == values[j] {
                        return Err(ModelError::Duplicate(format!("outcome value #{j}")));
                    }
                }
            }
        }

        match (&outcomes, &mut family, &mut true_kernel) {
            (
                OutcomeSpace::Finite { values },
                KernelFamily::Categorical { prob },
                TrueKernel::Categorical { prob: true_prob },
            ) => {
                let n_y = values.len();
                if prob.len() != n_theta {
                    return Err(ModelError::DimensionMismatch(format!(
                        "kernel family has {} parameter rows, grid has {n_theta}",
                        prob.len()
                    )));
                }
                for (t, per_action) in prob.iter_mut().enumerate() {
                    if per_action.len() != n_actions {
                        return Err(ModelError::DimensionMismatch(format!(
                            "kernel family theta #{t} has {} action rows, expected {n_actions}",
                            per_action.len()
                        )));
                    }
                    for (a, row) in per_action.iter_mut().enumerate() {
                        if row.len() != n_y {
                            return Err(ModelError::DimensionMismatch(format!(
                                "kernel row (theta {t}, action {a}) has {} outcomes, expected {n_y}",
                                row.len()
                            )));
                        }
                        normalize_row(&format!("kernel row (theta {t}, action {a})"), row)?;
                    }
                }
                if true_prob.len() != n_actions {
                    return Err(ModelError::DimensionMismatch(format!(
                        "true kernel has {} action rows, expected {n_actions}",
                        true_prob.len()
                    )));
                }
                for (a, row) in true_prob.iter_mut().enumerate() {
                    if row.len() != n_y {
                        return Err(ModelError::DimensionMismatch(format!(
                            "true kernel row (action {a}) has {} outcomes, expected {n_y}",
                            row.len()
                        )));
                    }
                    normalize_row(&format!("true kernel row (action {a})"), row)?;
                }
                // Support condition: positive true mass needs positive
                // subjective density under every parameter.
                for a in 0..n_actions {
                    for y in 0..n_y {
                        if true_prob[a][y] > S::zero() {
                            for t in 0..n_theta {
                                if prob[t][a][y] <= S::zero() {
                                    return Err(ModelError::SupportViolation(format!(
                                        "outcome #{y} at action #{a} has positive true probability \
                                         but zero subjective probability under theta #{t}"
                                    )));
                                }
                            }
                        }
                    }
                }
            }
            (
                OutcomeSpace::GaussianLine,
                KernelFamily::GaussianMean { mean },
                TrueKernel::GaussianMean { mean: true_mean },
            ) => {
                if mean.len() != n_theta {
                    return Err(ModelError::DimensionMismatch(format!(
                        "kernel family has {} parameter rows, grid has {n_theta}",
                        mean.len()
                    )));
                }
                for (t, row) in mean.iter().enumerate() {
                    if row.len() != n_actions {
                        return Err(ModelError::DimensionMismatch(format!(
                            "kernel means for theta #{t} cover {} actions, expected {n_actions}",
                            row.len()
                        )));
                    }
                    check_finite("kernel means", row)?;
                }
                if true_mean.len() != n_actions {
                    return Err(ModelError::DimensionMismatch(format!(
                        "true kernel means cover {} actions, expected {n_actions}",
                        true_mean.len()
                    )));
                }
                check_finite("true kernel means", true_mean)?;
            }
            _ => {
                return Err(ModelError::DimensionMismatch(
                    "outcome space, kernel family, and true kernel must share a variant".into(),
                ));
            }
        }

        match (&outcomes, &payoff) {
            (OutcomeSpace::Finite { values }, Payoff::Table { value }) => {
                if value.len() != n_actions {
                    return Err(ModelError::DimensionMismatch(format!(
                        "payoff table has {} action rows, expected {n_actions}",
                        value.len()
                    )));
                }
                for row in value {
                    if row.len() != values.len() {
                        return Err(ModelError::DimensionMismatch(
                            "payoff table row length differs from outcome count".into(),
                        ));
                    }
                    check_finite("payoff table", row)?;
                }
            }
            (OutcomeSpace::Finite { .. }, Payoff::AffineInOutcome { intercept, slope })
            | (OutcomeSpace::GaussianLine, Payoff::AffineInOutcome { intercept, slope }) => {
                if intercept.len() != n_actions || slope.len() != n_actions {
                    return Err(ModelError::DimensionMismatch(
                        "affine payoff coefficients must cover every action".into(),
                    ));
                }
                check_finite("payoff intercept", intercept)?;
                check_finite("payoff slope", slope)?;
            }
            (OutcomeSpace::GaussianLine, Payoff::Table { .. }) => {
                return Err(ModelError::Invalid(
                    "payoffs on the Gaussian line must be affine in the outcome".into(),
                ));
            }
        }

        if prior_weights.len() != n_theta {
            return Err(ModelError::LengthMismatch {
                expected: n_theta,
                got: prior_weights.len(),
            });
        }
        check_finite("prior weights", &prior_weights)?;
        if prior_weights.iter().any(|&w| w <= S::zero()) {
            return Err(ModelError::SupportViolation(
                "prior must place positive weight on every grid point".into(),
            ));
        }
        let prior = Belief::from_weights(&prior_weights)?;

        if let Some(PolicyOverride::FixedAction { index }) = &policy_override {
            if *index >= n_actions {
                return Err(ModelError::DimensionMismatch(format!(
                    "policy override action #{index} out of range"
                )));
            }
        }

        if let Some(ct) = &continuous_theta {
            if ct.dim() != grid.dim() {
                return Err(ModelError::DimensionMismatch(
                    "continuous parameter structure dimension differs from grid".into(),
                ));
            }
            if ct.offset.len() != n_actions
                || ct.factors.iter().any(|f| f.len() != n_actions)
                || ct.lo.len() != ct.dim()
                || ct.hi.len() != ct.dim()
            {
                return Err(ModelError::DimensionMismatch(
                    "continuous parameter structure tables must cover every action".into(),
                ));
            }
            let KernelFamily::GaussianMean { mean } = &family else {
                return Err(ModelError::Invalid(
                    "continuous parameter structure requires Gaussian kernels".into(),
                ));
            };
            // The affine structure must reproduce the gridded means.
            let tol = S::from_f64_lossy(1.0e-9);
            for t in 0..n_theta {
                for a in 0..n_actions {
                    let m = ct.mean_at(grid.point(t), a);
                    if (m - mean[t][a]).abs() > tol {
                        return Err(ModelError::Invalid(format!(
                            "continuous structure disagrees with gridded mean at theta #{t}, action #{a}"
                        )));
                    }
                }
            }
            for k in 0..ct.dim() {
                if !(ct.lo[k] <= ct.hi[k]) {
                    return Err(ModelError::Invalid(
                        "continuous parameter box has lo > hi".into(),
                    ));
                }
            }
        }

        Ok(Self {
            id,
            grid,
            actions,
            outcomes,
            true_kernel,
            family,
            payoff,
            prior_weights,
            prior,
            policy_override,
            continuous_theta,
            metadata,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn grid(&self) -> &ParameterGrid<S> {
        &self.grid
    }

    pub fn actions(&self) -> &ActionSet<S> {
        &self.actions
    }

    pub fn outcomes(&self) -> &OutcomeSpace<S> {
        &self.outcomes
    }

    pub fn true_kernel(&self) -> &TrueKernel<S> {
        &self.true_kernel
    }

    pub fn family(&self) -> &KernelFamily<S> {
        &self.family
    }

    pub fn payoff(&self) -> &Payoff<S> {
        &self.payoff
    }

    pub fn prior(&self) -> &Belief<S> {
        &self.prior
    }

    pub fn prior_weights(&self) -> &[S] {
        &self.prior_weights
    }

    pub fn policy_override(&self) -> Option<&PolicyOverride<S>> {
        self.policy_override.as_ref()
    }

    pub fn continuous_theta(&self) -> Option<&ContinuousTheta<S>> {
        self.continuous_theta.as_ref()
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn reference(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).copied()
    }

    pub fn n_params(&self) -> usize {
        self.grid.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Log-density of outcome `y` at action `a` under parameter `theta`.
    pub fn log_likelihood(&self, theta: usize, action: usize, y: &Observation<S>) -> S {
        match (&self.family, y) {
            (KernelFamily::Categorical { prob }, Observation::Finite(idx)) => {
                prob[theta][action][*idx].ln()
            }
            (KernelFamily::GaussianMean { mean }, Observation::Real(v)) => {
                gaussian_log_density(*v, mean[theta][action])
            }
            _ => S::nan(),
        }
    }

    /// Log-density vector across the whole grid, for Bayes updates.
    pub fn log_likelihood_all(&self, action: usize, y: &Observation<S>) -> Vec<S> {
        (0..self.n_params())
            .map(|t| self.log_likelihood(t, action, y))
            .collect()
    }

    /// The action prescribed by the policy override, if one is set.
    pub fn override_action(&self, belief: &Belief<S>) -> Option<usize> {
        match self.policy_override.as_ref()? {
            PolicyOverride::FixedAction { index } => Some(*index),
            PolicyOverride::BeliefProductEffort { scale } => {
                let probs = belief.probs();
                let product = probs
                    .iter()
                    .fold(S::one(), |acc, &p| acc * p);
                let effort = *scale * product;
                Some(self.actions.nearest_scalar(effort))
            }
        }
    }
}

pub(crate) fn gaussian_log_density<S: Real>(y: S, mean: S) -> S {
    let half = S::from_f64_lossy(0.5);
    let log_2pi = S::from_f64_lossy(core::f64::consts::TAU.ln());
    let d = y - mean;
    -half * d * d - half * log_2pi
}

/// One player's primitives in a complete-information game. Kernels are indexed
/// by the joint action profile (row-major over per-player action indices).
#[derive(Debug, Clone)]
pub struct PlayerModel<S> {
    pub grid: ParameterGrid<S>,
    pub actions: ActionSet<S>,
    pub outcomes: OutcomeSpace<S>,
    pub true_kernel: GameTrueKernel<S>,
    pub family: GameKernelFamily<S>,
    pub payoff: Payoff<S>,
    pub prior_weights: Vec<S>,
}

/// Subjective kernels over joint actions.
#[derive(Debug, Clone, PartialEq)]
pub enum GameKernelFamily<S> {
    /// `prob[theta][joint][outcome]`
    Categorical { prob: Vec<Vec<Vec<S>>> },
    /// Unit-variance Gaussian, mean affine in a scalar parameter:
    /// `m_theta(a) = offset[joint] + factor[joint] * theta`.
    GaussianAffine { offset: Vec<S>, factor: Vec<S> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameTrueKernel<S> {
    /// `prob[joint][outcome]`
    Categorical { prob: Vec<Vec<S>> },
    GaussianMean { mean: Vec<S> },
}

/// A validated complete-information game.
#[derive(Debug, Clone)]
pub struct GameScenario<S> {
    id: String,
    players: Vec<PlayerModel<S>>,
    priors: Vec<Belief<S>>,
    metadata: Metadata,
}

impl<S: Real> GameScenario<S> {
    pub fn new(
        id: String,
        players: Vec<PlayerModel<S>>,
        metadata: Metadata,
    ) -> ModelResult<Self> {
        if players.is_empty() {
            return Err(ModelError::Invalid("game needs at least one player".into()));
        }
        let n_joint: usize = players.iter().map(|p| p.actions.len()).product();
        let mut priors = Vec::with_capacity(players.len());
        for (i, p) in players.iter().enumerate() {
            let n_theta = p.grid.len();
            match (&p.outcomes, &p.family, &p.true_kernel) {
                (
                    OutcomeSpace::Finite { values },
                    GameKernelFamily::Categorical { prob },
                    GameTrueKernel::Categorical { prob: tp },
                ) => {
                    if prob.len() != n_theta
                        || prob.iter().any(|per| per.len() != n_joint)
                        || tp.len() != n_joint
                    {
                        return Err(ModelError::DimensionMismatch(format!(
                            "player {i}: kernel tables must cover every (theta, joint action)"
                        )));
                    }
                    let n_y = values.len();
                    if prob
                        .iter()
                        .flatten()
                        .chain(tp.iter())
                        .any(|row| row.len() != n_y)
                    {
                        return Err(ModelError::DimensionMismatch(format!(
                            "player {i}: kernel rows must cover every outcome"
                        )));
                    }
                    for row in tp {
                        let sum: S = row.iter().copied().sum();
                        if (sum - S::one()).abs() > input_row_tol::<S>() {
                            return Err(ModelError::NormalizationError(format!(
                                "player {i}: true kernel row off by more than 1e-9"
                            )));
                        }
                    }
                    for per in prob {
                        for row in per {
                            let sum: S = row.iter().copied().sum();
                            if (sum - S::one()).abs() > input_row_tol::<S>() {
                                return Err(ModelError::NormalizationError(format!(
                                    "player {i}: kernel row off by more than 1e-9"
                                )));
                            }
                        }
                    }
                    for (j, row) in tp.iter().enumerate() {
                        for y in 0..n_y {
                            if row[y] > S::zero() {
                                for t in 0..n_theta {
                                    if prob[t][j][y] <= S::zero() {
                                        return Err(ModelError::SupportViolation(format!(
                                            "player {i}: outcome #{y} at joint action #{j}"
                                        )));
                                    }
                                }
                            }
                        }
                    }
                }
                (
                    OutcomeSpace::GaussianLine,
                    GameKernelFamily::GaussianAffine { offset, factor },
                    GameTrueKernel::GaussianMean { mean },
                ) => {
                    if p.grid.dim() != 1 {
                        return Err(ModelError::DimensionMismatch(format!(
                            "player {i}: affine Gaussian kernels need a scalar parameter grid"
                        )));
                    }
                    if offset.len() != n_joint || factor.len() != n_joint || mean.len() != n_joint
                    {
                        return Err(ModelError::DimensionMismatch(format!(
                            "player {i}: Gaussian kernel tables must cover every joint action"
                        )));
                    }
                    check_finite("game kernel offset", offset)?;
                    check_finite("game kernel factor", factor)?;
                    check_finite("game true means", mean)?;
                }
                _ => {
                    return Err(ModelError::DimensionMismatch(format!(
                        "player {i}: outcome space, kernel family, and true kernel must share a variant"
                    )));
                }
            }
            match (&p.outcomes, &p.payoff) {
                (OutcomeSpace::GaussianLine, Payoff::Table { .. }) => {
                    return Err(ModelError::Invalid(format!(
                        "player {i}: payoffs on the Gaussian line must be affine"
                    )));
                }
                (_, Payoff::AffineInOutcome { intercept, slope }) => {
                    if intercept.len() != p.actions.len() || slope.len() != p.actions.len() {
                        return Err(ModelError::DimensionMismatch(format!(
                            "player {i}: payoff coefficients must cover own actions"
                        )));
                    }
                }
                (OutcomeSpace::Finite { values }, Payoff::Table { value }) => {
                    if value.len() != p.actions.len()
                        || value.iter().any(|row| row.len() != values.len())
                    {
                        return Err(ModelError::DimensionMismatch(format!(
                            "player {i}: payoff table shape"
                        )));
                    }
                }
            }
            if p.prior_weights.len() != n_theta {
                return Err(ModelError::LengthMismatch {
                    expected: n_theta,
                    got: p.prior_weights.len(),
                });
            }
            if p.prior_weights.iter().any(|&w| w <= S::zero()) {
                return Err(ModelError::SupportViolation(format!(
                    "player {i}: prior must have full support"
                )));
            }
            priors.push(Belief::from_weights(&p.prior_weights)?);
        }
        Ok(Self {
            id,
            players,
            priors,
            metadata,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn player(&self, i: usize) -> &PlayerModel<S> {
        &self.players[i]
    }

    pub fn players(&self) -> &[PlayerModel<S>] {
        &self.players
    }

    pub fn prior(&self, i: usize) -> &Belief<S> {
        &self.priors[i]
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn reference(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).copied()
    }

    /// Number of joint action profiles.
    pub fn n_joint(&self) -> usize {
        self.players.iter().map(|p| p.actions.len()).product()
    }

    /// Row-major index of a joint action profile.
    pub fn joint_index(&self, profile: &[usize]) -> usize {
        debug_assert_eq!(profile.len(), self.players.len());
        let mut idx = 0;
        for (i, &a) in profile.iter().enumerate() {
            idx = idx * self.players[i].actions.len() + a;
        }
        idx
    }

    /// Inverse of [`GameScenario::joint_index`].
    pub fn profile_of(&self, mut joint: usize) -> Vec<usize> {
        let mut profile = vec![0; self.players.len()];
        for i in (0..self.players.len()).rev() {
            let n = self.players[i].actions.len();
            profile[i] = joint % n;
            joint /= n;
        }
        profile
    }
}

#[cfg(test)]
pub(crate) mod tests;
