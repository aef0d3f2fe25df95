//! KL divergences, KL-minimizer sets, Bayesian updating, and q-dominance
//! moments: the statistical core.
//!
//! Divergences are closed-form per kernel variant (finite sums for
//! categorical kernels, squared mean gaps for unit-variance Gaussians), so
//! equilibrium residuals carry no Monte Carlo error. All log-likelihood
//! accumulation happens in log space with max-shift normalization.

use thiserror::Error;

use crate::model::{
    Belief, KernelFamily, MixedAction, Observation, OutcomeSpace, Scenario, TrueKernel,
};
use crate::Real;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("zero evidence: every subjective likelihood vanished")]
    ZeroEvidence,
    #[error("out of range: {0}")]
    OutOfRange(String),
}

pub type InferenceResult<T> = Result<T, InferenceError>;

/// Per-parameter weighted KL values with the minimizer set.
#[derive(Debug, Clone)]
pub struct KlReport<S> {
    pub values: Vec<S>,
    pub labels: Vec<String>,
    pub min_value: S,
    pub min_set: Vec<usize>,
    pub tol: S,
}

impl<S: Real> KlReport<S> {
    /// One CSV row per parameter: `theta_index,theta_label,weighted_kl,in_min_set`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_index,theta_label,weighted_kl,in_min_set\n");
        for (i, v) in self.values.iter().enumerate() {
            let in_set = self.min_set.contains(&i);
            out.push_str(&format!(
                "{i},{},{:.16e},{}\n",
                self.labels[i],
                v.to_f64_lossy(),
                u8::from(in_set)
            ));
        }
        out
    }
}

/// KL divergence (nats) between the true kernel and the subjective kernel at
/// one (parameter, action) pair.
pub fn kl_divergence<S: Real>(
    scenario: &Scenario<S>,
    theta: usize,
    action: usize,
) -> InferenceResult<S> {
    if theta >= scenario.n_params() || action >= scenario.n_actions() {
        return Err(InferenceError::OutOfRange(format!(
            "theta {theta} / action {action}"
        )));
    }
    match (scenario.true_kernel(), scenario.family()) {
        (TrueKernel::Categorical { prob: p }, KernelFamily::Categorical { prob: q }) => {
            let mut acc = S::zero();
            for (y, &py) in p[action].iter().enumerate() {
                if py > S::zero() {
                    let qy = q[theta][action][y];
                    if qy <= S::zero() {
                        return Err(InferenceError::SupportViolation(format!(
                            "theta #{theta} puts zero mass on outcome #{y} at action #{action}"
                        )));
                    }
                    acc = acc + py * (py / qy).ln();
                }
            }
            Ok(acc)
        }
        (TrueKernel::GaussianMean { mean: m }, KernelFamily::GaussianMean { mean: mq }) => {
            let d = m[action] - mq[theta][action];
            Ok(S::from_f64_lossy(0.5) * d * d)
        }
        _ => unreachable!("scenario validation enforces matching kernel variants"),
    }
}

/// Action-frequency-weighted KL divergence for one parameter.
pub fn weighted_kl<S: Real>(
    scenario: &Scenario<S>,
    theta: usize,
    sigma: &MixedAction<S>,
) -> InferenceResult<S> {
    if sigma.len() != scenario.n_actions() {
        return Err(InferenceError::OutOfRange(format!(
            "mixed action has {} entries, scenario has {} actions",
            sigma.len(),
            scenario.n_actions()
        )));
    }
    let mut acc = S::zero();
    for a in 0..scenario.n_actions() {
        let w = sigma.prob(a);
        if w > S::zero() {
            acc = acc + w * kl_divergence(scenario, theta, a)?;
        }
    }
    Ok(acc)
}

/// Weighted KL values across the grid and the minimizer set at tolerance
/// `tol_set` (absolute, nats). Ties are listed in grid order.
pub fn kl_min_set<S: Real>(
    scenario: &Scenario<S>,
    sigma: &MixedAction<S>,
    tol_set: S,
) -> InferenceResult<KlReport<S>> {
    let values: Vec<S> = (0..scenario.n_params())
        .map(|t| weighted_kl(scenario, t, sigma))
        .collect::<InferenceResult<_>>()?;
    let labels = (0..scenario.n_params())
        .map(|t| scenario.grid().label(t).to_string())
        .collect();
    Ok(report_from_values(values, labels, tol_set))
}

/// Builds the report from precomputed weighted-KL values. The minimizer set
/// depends on the values only through differences, so adding a common
/// constant to every entry leaves membership unchanged.
pub fn report_from_values<S: Real>(values: Vec<S>, labels: Vec<String>, tol: S) -> KlReport<S> {
    let min_value = values
        .iter()
        .fold(S::infinity(), |acc, &v| if v < acc { v } else { acc });
    let min_set = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= min_value + tol)
        .map(|(i, _)| i)
        .collect();
    KlReport {
        values,
        labels,
        min_value,
        min_set,
        tol,
    }
}

/// Default minimizer-set tolerance: 1e-9 nats, absolute.
pub fn default_min_set_tol<S: Real>() -> S {
    S::from_f64_lossy(1.0e-9)
}

/// One Bayes step: adds log-likelihoods of `(action, outcome)` to the belief
/// and renormalizes in log space.
pub fn bayes_update<S: Real>(
    scenario: &Scenario<S>,
    belief: &Belief<S>,
    action: usize,
    y: &Observation<S>,
) -> InferenceResult<Belief<S>> {
    if action >= scenario.n_actions() {
        return Err(InferenceError::OutOfRange(format!("action {action}")));
    }
    match (scenario.outcomes(), y) {
        (OutcomeSpace::Finite { values }, Observation::Finite(idx)) => {
            if *idx >= values.len() {
                return Err(InferenceError::OutOfRange(format!("outcome index {idx}")));
            }
        }
        (OutcomeSpace::GaussianLine, Observation::Real(v)) => {
            if !v.is_finite() {
                return Err(InferenceError::OutOfRange("non-finite outcome".into()));
            }
        }
        _ => {
            return Err(InferenceError::OutOfRange(
                "observation kind does not match the outcome space".into(),
            ))
        }
    }
    let ll = scenario.log_likelihood_all(action, y);
    if ll.iter().all(|&x| x == S::neg_infinity()) {
        return Err(InferenceError::ZeroEvidence);
    }
    let mut updated = belief.clone();
    updated.accumulate(&ll);
    updated.renormalize();
    Ok(updated)
}

/// The q-dominance moment: the expectation under the true kernel at `action`
/// of the likelihood ratio `(q_other / q_base)^q`. A value weakly below one
/// means `base` q-dominates `other` at this action.
pub fn q_moment<S: Real>(
    scenario: &Scenario<S>,
    base: usize,
    other: usize,
    action: usize,
    q: S,
) -> InferenceResult<S> {
    if q <= S::zero() {
        return Err(InferenceError::OutOfRange("q must be positive".into()));
    }
    if base >= scenario.n_params() || other >= scenario.n_params() {
        return Err(InferenceError::OutOfRange("parameter index".into()));
    }
    match (scenario.true_kernel(), scenario.family()) {
        (TrueKernel::Categorical { prob: p }, KernelFamily::Categorical { prob: qf }) => {
            let mut acc = S::zero();
            for (y, &py) in p[action].iter().enumerate() {
                if py > S::zero() {
                    let qb = qf[base][action][y];
                    if qb <= S::zero() {
                        return Err(InferenceError::SupportViolation(format!(
                            "theta #{base} puts zero mass on outcome #{y} at action #{action}"
                        )));
                    }
                    let qo = qf[other][action][y];
                    acc = acc + py * (qo / qb).powf(q);
                }
            }
            Ok(acc)
        }
        (TrueKernel::GaussianMean { mean }, KernelFamily::GaussianMean { mean: mq }) => {
            // With unit variances the log-ratio is linear in y, so the moment
            // is a Gaussian exponential moment in closed form.
            let m_star = mean[action];
            let mb = mq[base][action];
            let mo = mq[other][action];
            let d = mo - mb;
            let half = S::from_f64_lossy(0.5);
            let exponent = q * d * m_star + half * q * q * d * d - half * q * (mo * mo - mb * mb);
            Ok(exponent.exp())
        }
        _ => unreachable!("scenario validation enforces matching kernel variants"),
    }
}

/// Weighted KL at an off-grid parameter vector, for scenarios carrying the
/// affine Gaussian structure.
pub fn weighted_kl_at<S: Real>(scenario: &Scenario<S>, theta: &[S], sigma: &MixedAction<S>) -> S {
    let ct = scenario
        .continuous_theta()
        .expect("weighted_kl_at requires a continuous parameter structure");
    let TrueKernel::GaussianMean { mean } = scenario.true_kernel() else {
        unreachable!("continuous structure implies Gaussian kernels");
    };
    let half = S::from_f64_lossy(0.5);
    let mut acc = S::zero();
    for a in 0..scenario.n_actions() {
        let w = sigma.prob(a);
        if w > S::zero() {
            let d = ct.mean_at(theta, a) - mean[a];
            acc = acc + w * half * d * d;
        }
    }
    acc
}

/// Minimizes the weighted KL over the continuous parameter box, available
/// when the scenario carries the affine Gaussian structure (dimension 1 or 2).
/// The objective is a convex quadratic, so the interior stationary point,
/// the edge-restricted minimizers, and the corners exhaust the candidates.
pub fn kl_min_box<S: Real>(scenario: &Scenario<S>, sigma: &MixedAction<S>) -> Option<Vec<S>> {
    let ct = scenario.continuous_theta()?;
    let TrueKernel::GaussianMean { mean } = scenario.true_kernel() else {
        return None;
    };
    let dim = ct.dim();
    if dim == 0 || dim > 2 {
        return None;
    }

    // Quadratic form: W(theta) = 1/2 theta' A theta - b' theta + c, with
    // A[j][k] = sum_a w_a f_j(a) f_k(a), b[j] = sum_a w_a (m*_a - off_a) f_j(a).
    let mut a_mat = [[S::zero(); 2]; 2];
    let mut b_vec = [S::zero(); 2];
    for a in 0..scenario.n_actions() {
        let w = sigma.prob(a);
        if w <= S::zero() {
            continue;
        }
        let resid = mean[a] - ct.offset[a];
        for j in 0..dim {
            let fj = ct.factors[j][a];
            b_vec[j] = b_vec[j] + w * resid * fj;
            for k in 0..dim {
                a_mat[j][k] = a_mat[j][k] + w * fj * ct.factors[k][a];
            }
        }
    }

    let mut candidates: Vec<Vec<S>> = Vec::new();
    let clamp = |x: S, k: usize| x.max(ct.lo[k]).min(ct.hi[k]);
    if dim == 1 {
        if a_mat[0][0] > S::zero() {
            candidates.push(vec![clamp(b_vec[0] / a_mat[0][0], 0)]);
        }
        candidates.push(vec![ct.lo[0]]);
        candidates.push(vec![ct.hi[0]]);
    } else {
        let det = a_mat[0][0] * a_mat[1][1] - a_mat[0][1] * a_mat[1][0];
        if det.abs() > S::epsilon() {
            let x = (b_vec[0] * a_mat[1][1] - b_vec[1] * a_mat[0][1]) / det;
            let y = (a_mat[0][0] * b_vec[1] - a_mat[1][0] * b_vec[0]) / det;
            if x >= ct.lo[0] && x <= ct.hi[0] && y >= ct.lo[1] && y <= ct.hi[1] {
                candidates.push(vec![x, y]);
            }
        }
        // Each edge fixes one coordinate and minimizes the 1-d restriction.
        for (fixed_dim, free_dim) in [(0usize, 1usize), (1, 0)] {
            for bound in [ct.lo[fixed_dim], ct.hi[fixed_dim]] {
                if a_mat[free_dim][free_dim] > S::zero() {
                    let rhs = b_vec[free_dim] - a_mat[free_dim][fixed_dim] * bound;
                    let free = clamp(rhs / a_mat[free_dim][free_dim], free_dim);
                    let mut point = vec![S::zero(); 2];
                    point[fixed_dim] = bound;
                    point[free_dim] = free;
                    candidates.push(point);
                }
            }
        }
        for &x in &[ct.lo[0], ct.hi[0]] {
            for &y in &[ct.lo[1], ct.hi[1]] {
                candidates.push(vec![x, y]);
            }
        }
    }

    let mut best: Option<(S, Vec<S>)> = None;
    for cand in candidates {
        let val = weighted_kl_at(scenario, &cand, sigma);
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, cand));
        }
    }
    best.map(|(_, theta)| theta)
}
