//! The limiting differential inclusion for empirical action frequencies.
//!
//! On the slow time scale, the empirical frequency is shadowed by solutions
//! of `d sigma / dt in BR(sigma) - sigma`, where `BR(sigma)` collects the
//! mixed best replies to beliefs supported on the KL minimizers at `sigma`.
//! The set-valued right-hand side is resolved by named selection rules, and
//! every global-attraction verdict must hold across all of them; verdicts
//! are labeled "consistent with", never proofs, because selections are
//! sampled rather than exhausted.
//!
//! Integration is explicit Euler: the right-hand side is discontinuous at
//! indifference boundaries, where higher-order schemes lose their edge. Each
//! Euler step is a convex combination for `dt <= 1`, so iterates stay on the
//! simplex up to rounding; a renormalization pass cleans that up.

use thiserror::Error;

use crate::decision::{
    best_reply_at_theta, best_reply_set, default_opt_tol,
};
use crate::inference::{default_min_set_tol, kl_min_box, kl_min_set, InferenceError};
use crate::model::{Belief, MixedAction, Scenario};
use crate::Real;

#[derive(Debug, Error)]
pub enum DiError {
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("window too long: {0}")]
    WindowTooLong(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

pub type DiResult<T> = Result<T, DiError>;

/// How a single velocity is chosen from the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Toward the best reply with the highest perceived utility.
    MaxUtility,
    /// The smallest-norm admissible velocity: the Euclidean projection of
    /// the state onto the justified face, which holds rest points exactly.
    MinSpeed,
    /// Toward the lowest-indexed justified action (deterministic fallback).
    IndexOrder,
}

impl SelectionRule {
    pub const ALL: [SelectionRule; 3] = [
        SelectionRule::MaxUtility,
        SelectionRule::MinSpeed,
        SelectionRule::IndexOrder,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            SelectionRule::MaxUtility => "max_utility",
            SelectionRule::MinSpeed => "min_speed",
            SelectionRule::IndexOrder => "index_order",
        }
    }
}

/// One generator of the admissible velocity set: a justified action, the
/// perceived utility behind it, and the vertex velocity `e_a - sigma`.
#[derive(Debug, Clone)]
pub struct VelocityCandidate<S> {
    pub action: usize,
    pub utility: S,
    pub velocity: Vec<S>,
}

/// The admissible velocities at one state: vertex generators toward every
/// justified action. At indifference the generators span a face of the
/// simplex, and selections may take any point of it.
#[derive(Debug, Clone)]
pub struct DiVelocitySet<S> {
    pub candidates: Vec<VelocityCandidate<S>>,
    pub justified: Vec<usize>,
}

impl<S: Real> DiVelocitySet<S> {
    /// The minimum-norm admissible velocity: projection of the state onto
    /// the justified face, minus the state.
    pub fn min_speed_velocity(&self, sigma: &MixedAction<S>) -> Vec<S> {
        let proj = project_onto_face(sigma.probs(), &self.justified);
        proj.iter()
            .zip(sigma.probs())
            .map(|(&p, &s)| p - s)
            .collect()
    }

    /// Whether the zero velocity is admissible (the state lies on the
    /// justified face, up to `tol` in sup norm).
    pub fn contains_zero(&self, sigma: &MixedAction<S>, tol: S) -> bool {
        self.min_speed_velocity(sigma)
            .iter()
            .all(|v| v.abs() <= tol)
    }
}

/// Euclidean projection onto the face of the simplex supported on `face`:
/// the usual sort-and-threshold on the supported coordinates, zero off it.
fn project_onto_face<S: Real>(x: &[S], face: &[usize]) -> Vec<S> {
    let mut vals: Vec<S> = face.iter().map(|&i| x[i]).collect();
    // Shift so the supported mass sums to one, then project onto the
    // nonnegativity constraints.
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumsum = S::zero();
    let mut rho = 0usize;
    let mut theta = S::zero();
    for (k, &v) in sorted.iter().enumerate() {
        cumsum = cumsum + v;
        let kf = S::from_usize(k + 1).unwrap();
        let cand = (cumsum - S::one()) / kf;
        if v - cand > S::zero() {
            rho = k + 1;
            theta = cand;
        }
    }
    let _ = rho;
    for v in vals.iter_mut() {
        *v = (*v - theta).max(S::zero());
    }
    let mut out = vec![S::zero(); x.len()];
    for (k, &i) in face.iter().enumerate() {
        out[i] = vals[k];
    }
    out
}

/// The admissible velocity set at `sigma`.
///
/// With the affine Gaussian structure the supporting beliefs collapse to the
/// continuous box minimizer, so indifference faces appear exactly where the
/// minimizer ties utilities. Otherwise beliefs are sampled on a simplex mesh
/// (denominator `belief_mesh`, vertices included) over the gridded minimizer
/// set.
pub fn di_velocity_set<S: Real>(
    scenario: &Scenario<S>,
    sigma: &MixedAction<S>,
    belief_mesh: usize,
) -> DiResult<DiVelocitySet<S>> {
    let n = scenario.n_actions();
    let tol = default_opt_tol::<S>();
    let mut justified: Vec<usize> = Vec::new();
    let mut utilities_of: Vec<Option<S>> = vec![None; n];

    if scenario.continuous_theta().is_some() {
        let theta = kl_min_box(scenario, sigma).expect("continuous structure present");
        let br = best_reply_at_theta(scenario, &theta, tol);
        for &a in &br.optimal {
            justified.push(a);
            utilities_of[a] = Some(br.utilities[a]);
        }
    } else {
        let report = kl_min_set(scenario, sigma, default_min_set_tol())?;
        let k = report.min_set.len();
        // Mesh over beliefs on the minimizer simplex, vertices first.
        let mut weight_sets: Vec<Vec<S>> = Vec::new();
        for v in 0..k {
            let mut w = vec![S::zero(); k];
            w[v] = S::one();
            weight_sets.push(w);
        }
        if k > 1 && belief_mesh > 1 {
            let mut comp = vec![0usize; k];
            comp[0] = belief_mesh;
            loop {
                let w: Vec<S> = comp
                    .iter()
                    .map(|&c| {
                        S::from_usize(c).unwrap() / S::from_usize(belief_mesh).unwrap()
                    })
                    .collect();
                weight_sets.push(w);
                if !next_comp(&mut comp) {
                    break;
                }
            }
        }
        for w in weight_sets {
            let mut logw = vec![S::neg_infinity(); scenario.n_params()];
            for (slot, &idx) in report.min_set.iter().enumerate() {
                if w[slot] > S::zero() {
                    logw[idx] = w[slot].ln();
                }
            }
            let belief = Belief::from_log_weights(logw).expect("mesh weights valid");
            let br = best_reply_set(scenario, &belief, tol);
            for &a in &br.optimal {
                if !justified.contains(&a) {
                    justified.push(a);
                }
                let u = br.utilities[a];
                if utilities_of[a].is_none_or(|prev| u > prev) {
                    utilities_of[a] = Some(u);
                }
            }
        }
        justified.sort_unstable();
    }

    let candidates = justified
        .iter()
        .map(|&a| {
            let mut velocity: Vec<S> = sigma.probs().iter().map(|&s| -s).collect();
            velocity[a] = velocity[a] + S::one();
            VelocityCandidate {
                action: a,
                utility: utilities_of[a].unwrap_or_else(S::zero),
                velocity,
            }
        })
        .collect();
    Ok(DiVelocitySet {
        candidates,
        justified,
    })
}

fn next_comp(comp: &mut [usize]) -> bool {
    let n = comp.len();
    if n <= 1 {
        return false;
    }
    if comp[0] > 0 {
        comp[0] -= 1;
        comp[1] += 1;
        return true;
    }
    for i in 1..(n - 1) {
        if comp[i] > 0 {
            comp[0] = comp[i] - 1;
            comp[i + 1] += 1;
            comp[i] = 0;
            return true;
        }
    }
    false
}

/// One integrated trajectory.
#[derive(Debug, Clone)]
pub struct DiTrajectory<S> {
    pub times: Vec<S>,
    pub sigmas: Vec<Vec<S>>,
    pub selection: SelectionRule,
    /// Vertex chosen at each step; `None` when the min-speed projection used
    /// an interior face point.
    pub chosen: Vec<Option<usize>>,
}

impl<S: Real> DiTrajectory<S> {
    pub fn final_sigma(&self) -> MixedAction<S> {
        MixedAction::new(self.sigmas.last().expect("nonempty").clone())
            .expect("trajectory stays on the simplex")
    }

    /// Linear interpolation at an arbitrary time inside the grid.
    pub fn at(&self, t: S) -> Vec<S> {
        let times = &self.times;
        if t <= times[0] {
            return self.sigmas[0].clone();
        }
        if t >= *times.last().unwrap() {
            return self.sigmas.last().unwrap().clone();
        }
        let mut lo = 0;
        let mut hi = times.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if times[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = (t - times[lo]) / (times[hi] - times[lo]);
        self.sigmas[lo]
            .iter()
            .zip(&self.sigmas[hi])
            .map(|(&a, &b)| a + w * (b - a))
            .collect()
    }

    /// CSV rows `(t, sigma components..., selection id)`.
    pub fn to_csv(&self) -> String {
        let n = self.sigmas.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",sigma_{i}"));
        }
        out.push_str(",selection\n");
        for (t, sigma) in self.times.iter().zip(&self.sigmas) {
            out.push_str(&format!("{:.16e}", t.to_f64_lossy()));
            for s in sigma {
                out.push_str(&format!(",{:.16e}", s.to_f64_lossy()));
            }
            out.push_str(&format!(",{}\n", self.selection.id()));
        }
        out
    }
}

/// Explicit Euler integration of the inclusion under a selection rule.
pub fn integrate_di<S: Real>(
    scenario: &Scenario<S>,
    sigma0: &MixedAction<S>,
    horizon: S,
    dt: S,
    selection: SelectionRule,
    belief_mesh: usize,
) -> DiResult<DiTrajectory<S>> {
    if !(dt > S::zero()) || horizon < dt {
        return Err(DiError::OutOfRange("need dt > 0 and horizon >= dt".into()));
    }
    let steps = (horizon / dt).to_f64_lossy().ceil() as usize;
    let mut sigma = sigma0.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut sigmas = Vec::with_capacity(steps + 1);
    let mut chosen = Vec::with_capacity(steps);
    times.push(S::zero());
    sigmas.push(sigma.probs().to_vec());
    for step in 0..steps {
        let set = di_velocity_set(scenario, &sigma, belief_mesh)?;
        let (velocity, pick): (Vec<S>, Option<usize>) = match selection {
            SelectionRule::MinSpeed => (set.min_speed_velocity(&sigma), None),
            SelectionRule::MaxUtility => {
                let best = set
                    .candidates
                    .iter()
                    .max_by(|a, b| {
                        a.utility
                            .partial_cmp(&b.utility)
                            .expect("finite utilities")
                            .then(b.action.cmp(&a.action))
                    })
                    .expect("velocity set is nonempty");
                (best.velocity.clone(), Some(best.action))
            }
            SelectionRule::IndexOrder => {
                let first = &set.candidates[0];
                (first.velocity.clone(), Some(first.action))
            }
        };
        let next: Vec<S> = sigma
            .probs()
            .iter()
            .zip(&velocity)
            .map(|(&s, &v)| (s + dt * v).max(S::zero()))
            .collect();
        sigma = MixedAction::from_unnormalized(next).expect("Euler step stays on the simplex");
        times.push(dt * S::from_usize(step + 1).unwrap());
        sigmas.push(sigma.probs().to_vec());
        chosen.push(pick);
    }
    Ok(DiTrajectory {
        times,
        sigmas,
        selection,
        chosen,
    })
}

#[derive(Debug, Clone)]
pub struct AttractionProbe<S> {
    /// True when every trajectory from every start, under every selection
    /// rule, enters the target neighborhood by the horizon and never leaves.
    pub consistent: bool,
    pub max_entry_time: Option<S>,
    /// (start index, rule, closest distance reached) for the first failure.
    pub counterexample: Option<(usize, SelectionRule, S)>,
    pub starts: usize,
    pub epsilon: S,
}

impl<S: Real> AttractionProbe<S> {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "consistent": self.consistent,
            "max_entry_time": self.max_entry_time.map(|t| t.to_f64_lossy()),
            "counterexample": self.counterexample.as_ref().map(|(s, r, d)| {
                serde_json::json!({
                    "start": s,
                    "selection": r.id(),
                    "closest_distance": d.to_f64_lossy(),
                })
            }),
            "starts": self.starts,
            "epsilon": self.epsilon.to_f64_lossy(),
        })
    }
}

fn dist_to_targets<S: Real>(sigma: &[S], targets: &[MixedAction<S>]) -> S {
    targets
        .iter()
        .map(|t| {
            sigma
                .iter()
                .zip(t.probs())
                .map(|(&a, &b)| (a - b).abs())
                .fold(S::zero(), |acc, d| if d > acc { d } else { acc })
        })
        .fold(S::infinity(), |acc, d| if d < acc { d } else { acc })
}

/// Start grid covering the simplex: equally spaced for two actions, a
/// simplex mesh otherwise (as close to the requested count as possible).
pub fn start_grid<S: Real>(n_actions: usize, count: usize) -> Vec<MixedAction<S>> {
    if n_actions == 2 {
        let m = count.max(2);
        return (0..m)
            .map(|i| {
                let p = S::from_usize(i).unwrap() / S::from_usize(m - 1).unwrap();
                MixedAction::new(vec![S::one() - p, p]).expect("valid mix")
            })
            .collect();
    }
    let mut den = 1usize;
    while count_compositions(den + 1, n_actions) <= count {
        den += 1;
    }
    let mut out = Vec::new();
    let mut comp = vec![0usize; n_actions];
    comp[0] = den;
    loop {
        out.push(
            MixedAction::new(
                comp.iter()
                    .map(|&c| S::from_usize(c).unwrap() / S::from_usize(den).unwrap())
                    .collect(),
            )
            .expect("valid mix"),
        );
        if !next_comp(&mut comp) {
            break;
        }
    }
    out
}

fn count_compositions(den: usize, parts: usize) -> usize {
    let mut acc: usize = 1;
    for i in 0..(parts.saturating_sub(1)) {
        acc = acc.saturating_mul(den + i + 1);
        acc /= i + 1;
    }
    acc
}

/// Integrates from every start under every selection rule and checks entry
/// into (and containment in) the epsilon-neighborhood of the target set.
#[allow(clippy::too_many_arguments)]
pub fn probe_global_attraction<S: Real>(
    scenario: &Scenario<S>,
    targets: &[MixedAction<S>],
    starts: &[MixedAction<S>],
    epsilon: S,
    horizon: S,
    dt: S,
    belief_mesh: usize,
) -> DiResult<AttractionProbe<S>> {
    if targets.is_empty() || starts.is_empty() {
        return Err(DiError::OutOfRange("need targets and starts".into()));
    }
    let slack = S::from_f64_lossy(1.0e-9);
    let mut max_entry: Option<S> = None;
    for (start_idx, start) in starts.iter().enumerate() {
        for rule in SelectionRule::ALL {
            let traj = integrate_di(scenario, start, horizon, dt, rule, belief_mesh)?;
            let mut entry: Option<S> = None;
            let mut closest = S::infinity();
            let mut stayed = true;
            for (t, sigma) in traj.times.iter().zip(&traj.sigmas) {
                let d = dist_to_targets(sigma, targets);
                closest = closest.min(d);
                match entry {
                    None => {
                        if d <= epsilon {
                            entry = Some(*t);
                        }
                    }
                    Some(_) => {
                        if d > epsilon + slack {
                            stayed = false;
                            break;
                        }
                    }
                }
            }
            match (entry, stayed) {
                (Some(t), true) => {
                    if max_entry.is_none_or(|m| t > m) {
                        max_entry = Some(t);
                    }
                }
                _ => {
                    return Ok(AttractionProbe {
                        consistent: false,
                        max_entry_time: None,
                        counterexample: Some((start_idx, rule, closest)),
                        starts: starts.len(),
                        epsilon,
                    });
                }
            }
        }
    }
    Ok(AttractionProbe {
        consistent: true,
        max_entry_time: max_entry,
        counterexample: None,
        starts: starts.len(),
        epsilon,
    })
}

/// Per-anchor shadowing distances between the interpolated empirical
/// frequency (on the slow time scale) and the best-matching DI solution
/// started near it.
#[derive(Debug, Clone)]
pub struct ShadowingSeries<S> {
    /// (anchor period, inf over starts and rules of the sup distance).
    pub distances: Vec<(usize, S)>,
    pub window: S,
    pub start_ball: S,
}

/// For each anchor, integrates DI solutions from a small ball of starts
/// around the interpolated state and reports the best sup-distance over the
/// slow-time window.
pub fn shadowing_distance<S: Real>(
    scenario: &Scenario<S>,
    path: &crate::dynamics::PathRecord<S>,
    window: S,
    dt: S,
    belief_mesh: usize,
) -> DiResult<ShadowingSeries<S>> {
    let n = scenario.n_actions();
    let t_max = path.actions.len();
    if t_max < 10 {
        return Err(DiError::OutOfRange("path too short".into()));
    }
    // Slow-time coordinates and the dense frequency series.
    let mut tau = Vec::with_capacity(t_max + 1);
    let mut freq: Vec<Vec<S>> = Vec::with_capacity(t_max + 1);
    let mut counts = vec![0usize; n];
    tau.push(S::zero());
    freq.push(vec![S::zero(); n]);
    let mut acc = S::zero();
    for (t, &a) in path.actions.iter().enumerate() {
        counts[a as usize] += 1;
        acc = acc + S::one() / S::from_usize(t + 1).unwrap();
        tau.push(acc);
        freq.push(
            counts
                .iter()
                .map(|&c| S::from_usize(c).unwrap() / S::from_usize(t + 1).unwrap())
                .collect(),
        );
    }
    let tau_end = *tau.last().unwrap();
    let anchors: Vec<usize> = path
        .checkpoints
        .iter()
        .map(|cp| cp.t)
        .filter(|&t| t >= 10 && tau[t] + window <= tau_end)
        .collect();
    if anchors.is_empty() {
        return Err(DiError::WindowTooLong(format!(
            "no anchor leaves a slow-time window of {} before the path ends",
            window.to_f64_lossy()
        )));
    }

    let start_ball = S::from_f64_lossy(0.01);
    let mut distances = Vec::with_capacity(anchors.len());
    for &anchor in &anchors {
        let w0 = &freq[anchor];
        // Ball of starts around the anchor state.
        let mut starts: Vec<MixedAction<S>> = vec![MixedAction::new(w0.clone()).expect("valid")];
        for i in 0..n {
            for sign in [S::one(), -S::one()] {
                for frac in [S::from_f64_lossy(0.5), S::one()] {
                    let mut v = w0.clone();
                    v[i] = (v[i] + sign * frac * start_ball).max(S::zero());
                    if let Ok(m) = MixedAction::from_unnormalized(v) {
                        starts.push(m);
                    }
                }
            }
        }
        let mut best = S::infinity();
        for start in &starts {
            for rule in SelectionRule::ALL {
                let traj = integrate_di(scenario, start, window, dt, rule, belief_mesh)?;
                // Sup over the path's slow-time samples inside the window.
                let mut sup = S::zero();
                let mut t = anchor;
                while t <= t_max && tau[t] - tau[anchor] <= window {
                    let s = traj.at(tau[t] - tau[anchor]);
                    let d = s
                        .iter()
                        .zip(&freq[t])
                        .map(|(&a, &b)| (a - b).abs())
                        .fold(S::zero(), |acc, d| if d > acc { d } else { acc });
                    sup = sup.max(d);
                    t += 1;
                }
                best = best.min(sup);
            }
        }
        distances.push((anchor, best));
    }
    Ok(ShadowingSeries {
        distances,
        window,
        start_ball,
    })
}
