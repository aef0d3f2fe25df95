//! Solvers and verifiers for Berk-Nash equilibria and their variants.
//!
//! A mixed action is a Berk-Nash equilibrium when it is supported on best
//! replies to a belief that is itself supported on the KL minimizers induced
//! by that mixed action. The feasibility question "is there such a belief"
//! is a linear program over the simplex spanned by the minimizer set; it is
//! solved exactly by vertex/edge enumeration when the set has at most three
//! elements and by a simplex-mesh search (mesh 1/32, refined twice near
//! misses) otherwise.
//!
//! Solvers report the fixed points they found, never completeness.

use serde_json::json;

use crate::decision::{
    best_reply_set, default_opt_tol, expected_utility, game_mean_utilities, logit_from_utilities,
    mean_utilities, utilities_at_theta,
};
use crate::inference::{default_min_set_tol, kl_min_box, kl_min_set, InferenceError};
use crate::model::{
    Belief, GameKernelFamily, GameScenario, GameTrueKernel, KernelFamily, MixedAction, Scenario,
};
use crate::Real;

/// Supporting beliefs: a single belief for standard equilibria, or one
/// witness per support action for generalized ones.
#[derive(Debug, Clone)]
pub enum SupportingBeliefs<S> {
    Single(Belief<S>),
    PerAction(Vec<(usize, Belief<S>)>),
}

#[derive(Debug, Clone)]
pub struct Residuals<S> {
    /// Worst violated optimality constraint, in utility units (zero when
    /// every support action is a best reply to its witness belief).
    pub optimality_gap: S,
    /// Witness-belief mass outside the KL-minimizer set.
    pub kl_support_gap: S,
}

#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub pure: bool,
    pub mixed: bool,
    pub generalized: bool,
    pub intended_tau: Option<f64>,
    pub uniformly_strict: bool,
    pub weak_identification: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SolverInfo {
    pub method: String,
    pub starts: usize,
    pub iterations: usize,
    pub damping: f64,
    pub converged: bool,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult<S> {
    pub sigma: MixedAction<S>,
    pub beliefs: SupportingBeliefs<S>,
    pub residuals: Residuals<S>,
    pub flags: Flags,
    pub solver: SolverInfo,
}

impl<S: Real> EquilibriumResult<S> {
    /// One JSONL object per result; map keys are sorted, so output is
    /// deterministic.
    pub fn to_json_value(&self) -> serde_json::Value {
        let beliefs = match &self.beliefs {
            SupportingBeliefs::Single(b) => json!({
                "single": b.probs().iter().map(|p| p.to_f64_lossy()).collect::<Vec<_>>(),
            }),
            SupportingBeliefs::PerAction(list) => json!({
                "per_action": list
                    .iter()
                    .map(|(a, b)| json!({
                        "action": a,
                        "belief": b.probs().iter().map(|p| p.to_f64_lossy()).collect::<Vec<_>>(),
                    }))
                    .collect::<Vec<_>>(),
            }),
        };
        json!({
            "sigma": self.sigma.probs().iter().map(|p| p.to_f64_lossy()).collect::<Vec<_>>(),
            "beliefs": beliefs,
            "residuals": {
                "optimality_gap": self.residuals.optimality_gap.to_f64_lossy(),
                "kl_support_gap": self.residuals.kl_support_gap.to_f64_lossy(),
            },
            "flags": {
                "pure": self.flags.pure,
                "mixed": self.flags.mixed,
                "generalized": self.flags.generalized,
                "intended_tau": self.flags.intended_tau,
                "uniformly_strict": self.flags.uniformly_strict,
                "weak_identification": self.flags.weak_identification,
            },
            "solver": {
                "method": self.solver.method,
                "starts": self.solver.starts,
                "iterations": self.solver.iterations,
                "damping": self.solver.damping,
                "converged": self.solver.converged,
                "messages": self.solver.messages,
            },
        })
    }
}

/// Maximizes `min_j (D w)_j` over weight vectors `w` in the simplex spanned
/// by the columns of `d` (`d[j][v]`: constraint `j`, vertex `v`). Exact for
/// up to three vertices (and three-vertex problems with up to 80
/// constraints); simplex-mesh search beyond that.
///
/// With no constraints the value is plus infinity on the first vertex.
pub(crate) fn max_min_over_simplex<S: Real>(d: &[Vec<S>]) -> (S, Vec<S>) {
    let nv = match d.first() {
        Some(row) => row.len(),
        None => return (S::infinity(), vec![S::one()]),
    };
    let eval = |w: &[S]| -> S {
        d.iter()
            .map(|row| {
                row.iter()
                    .zip(w)
                    .map(|(&c, &wi)| c * wi)
                    .fold(S::zero(), |a, b| a + b)
            })
            .fold(S::infinity(), |a, b| if b < a { b } else { a })
    };
    match nv {
        1 => (eval(&[S::one()]), vec![S::one()]),
        2 => {
            let mut candidates = vec![S::zero(), S::one()];
            for j in 0..d.len() {
                for k in (j + 1)..d.len() {
                    // c_j(t) = c_k(t) with c(t) = (1-t) d[.][0] + t d[.][1].
                    let num = d[j][0] - d[k][0];
                    let den = num - (d[j][1] - d[k][1]);
                    if den != S::zero() {
                        let t = num / den;
                        if t > S::zero() && t < S::one() {
                            candidates.push(t);
                        }
                    }
                }
            }
            let mut best = (S::neg_infinity(), vec![S::one(), S::zero()]);
            for t in candidates {
                let w = vec![S::one() - t, t];
                let v = eval(&w);
                if v > best.0 {
                    best = (v, w);
                }
            }
            best
        }
        3 if d.len() <= 80 => {
            let mut candidates: Vec<[S; 3]> = vec![
                [S::one(), S::zero(), S::zero()],
                [S::zero(), S::one(), S::zero()],
                [S::zero(), S::zero(), S::one()],
            ];
            // Pairwise ties restricted to each simplex edge.
            for (u, v) in [(0usize, 1usize), (0, 2), (1, 2)] {
                for j in 0..d.len() {
                    for k in (j + 1)..d.len() {
                        let num = d[j][u] - d[k][u];
                        let den = num - (d[j][v] - d[k][v]);
                        if den != S::zero() {
                            let t = num / den;
                            if t > S::zero() && t < S::one() {
                                let mut w = [S::zero(); 3];
                                w[u] = S::one() - t;
                                w[v] = t;
                                candidates.push(w);
                            }
                        }
                    }
                }
            }
            // Three-way ties in the interior: a 2x2 system in the first two
            // barycentric coordinates after substituting w2 = 1 - w0 - w1.
            let m = d.len();
            for j in 0..m {
                for k in (j + 1)..m {
                    for l in (k + 1)..m {
                        let row = |a: usize, b: usize| {
                            [
                                (d[a][0] - d[b][0]) - (d[a][2] - d[b][2]),
                                (d[a][1] - d[b][1]) - (d[a][2] - d[b][2]),
                                d[a][2] - d[b][2],
                            ]
                        };
                        let r1 = row(j, k);
                        let r2 = row(j, l);
                        let det = r1[0] * r2[1] - r1[1] * r2[0];
                        if det.abs() > S::epsilon() {
                            // Solve r[0] w0 + r[1] w1 = -r[2].
                            let w0 = (-r1[2] * r2[1] + r2[2] * r1[1]) / det;
                            let w1 = (-r1[0] * r2[2] + r2[0] * r1[2]) / det;
                            let w2 = S::one() - w0 - w1;
                            if w0 >= S::zero() && w1 >= S::zero() && w2 >= S::zero() {
                                candidates.push([w0, w1, w2]);
                            }
                        }
                    }
                }
            }
            let mut best = (S::neg_infinity(), vec![S::one(), S::zero(), S::zero()]);
            for w in candidates {
                let wv = w.to_vec();
                let v = eval(&wv);
                if v > best.0 {
                    best = (v, wv);
                }
            }
            best
        }
        _ => mesh_max_min(d, nv, &eval),
    }
}

/// Simplex-mesh search: mesh 1/32 (coarsened adaptively when the mesh would
/// be too large), refined twice around the incumbent on near-misses.
fn mesh_max_min<S: Real>(d: &[Vec<S>], nv: usize, eval: &dyn Fn(&[S]) -> S) -> (S, Vec<S>) {
    let budget = 200_000usize;
    let mut den = 32usize;
    while den > 1 && compositions_count(den, nv) > budget {
        den /= 2;
    }
    let _ = d;
    let mut best: (S, Vec<S>) = (S::neg_infinity(), Vec::new());
    let scan = |center: Option<&[S]>, best: &mut (S, Vec<S>)| {
        let mut comp = vec![0usize; nv];
        comp[0] = den;
        loop {
            let mut w: Vec<S> = comp
                .iter()
                .map(|&c| S::from_usize(c).unwrap() / S::from_usize(den).unwrap())
                .collect();
            if let Some(c) = center {
                // Halve the mesh around the incumbent.
                for (wi, &ci) in w.iter_mut().zip(c) {
                    *wi = (*wi + ci) / S::from_f64_lossy(2.0);
                }
            }
            let v = eval(&w);
            if v > best.0 {
                *best = (v, w);
            }
            if !next_composition(&mut comp) {
                break;
            }
        }
    };
    scan(None, &mut best);
    for _ in 0..2 {
        if best.0.to_f64_lossy().abs() < 1.0e-2 {
            let center = best.1.clone();
            scan(Some(&center), &mut best);
        }
    }
    best
}

fn compositions_count(den: usize, parts: usize) -> usize {
    // C(den + parts - 1, parts - 1), saturating.
    let mut acc: usize = 1;
    for i in 0..(parts.saturating_sub(1)) {
        acc = acc.saturating_mul(den + i + 1);
        acc /= i + 1;
        if acc > 1 << 40 {
            return usize::MAX;
        }
    }
    acc
}

/// Iterates compositions of a fixed total across `comp.len()` parts.
fn next_composition(comp: &mut [usize]) -> bool {
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

/// Scatters minimizer-set weights onto a full-grid belief.
fn belief_on_min_set<S: Real>(n_params: usize, min_set: &[usize], weights: &[S]) -> Belief<S> {
    let mut logw = vec![S::neg_infinity(); n_params];
    for (&idx, &w) in min_set.iter().zip(weights) {
        if w > S::zero() {
            logw[idx] = w.ln();
        }
    }
    Belief::from_log_weights(logw).expect("minimizer weights sum to one")
}

fn uniform_min_set_belief<S: Real>(n_params: usize, min_set: &[usize]) -> Belief<S> {
    let w = S::one() / S::from_usize(min_set.len()).unwrap();
    belief_on_min_set(n_params, min_set, &vec![w; min_set.len()])
}

/// Feasibility of supporting `target_actions` simultaneously with one belief
/// on the minimizer set: returns the max-min slack and the witness.
///
/// Scenarios with a policy override have no utility margins; feasibility is
/// then a witness search over a belief mesh on the minimizer set, with slack
/// zero when a witness maps to every target action and negative infinity
/// otherwise.
fn support_feasibility<S: Real>(
    scenario: &Scenario<S>,
    min_set: &[usize],
    target_actions: &[usize],
) -> (S, Belief<S>) {
    if scenario.policy_override().is_some() {
        return override_feasibility(scenario, min_set, target_actions);
    }
    let n_actions = scenario.n_actions();
    let mut d: Vec<Vec<S>> = Vec::new();
    for &a in target_actions {
        for a_other in 0..n_actions {
            if a_other == a {
                continue;
            }
            d.push(
                min_set
                    .iter()
                    .map(|&t| {
                        expected_utility(scenario, a, t) - expected_utility(scenario, a_other, t)
                    })
                    .collect(),
            );
        }
    }
    let (value, weights) = max_min_over_simplex(&d);
    let weights = if weights.len() == min_set.len() {
        weights
    } else {
        vec![S::one(); 1]
    };
    (
        value,
        belief_on_min_set(scenario.n_params(), min_set, &weights),
    )
}

fn override_feasibility<S: Real>(
    scenario: &Scenario<S>,
    min_set: &[usize],
    target_actions: &[usize],
) -> (S, Belief<S>) {
    let k = min_set.len();
    let mut weight_sets: Vec<Vec<S>> = Vec::new();
    for v in 0..k {
        let mut w = vec![S::zero(); k];
        w[v] = S::one();
        weight_sets.push(w);
    }
    if k > 1 {
        let den = 8usize;
        let mut comp = vec![0usize; k];
        comp[0] = den;
        loop {
            weight_sets.push(
                comp.iter()
                    .map(|&c| S::from_usize(c).unwrap() / S::from_usize(den).unwrap())
                    .collect(),
            );
            if !next_composition(&mut comp) {
                break;
            }
        }
    }
    for w in weight_sets {
        let belief = belief_on_min_set(scenario.n_params(), min_set, &w);
        let chosen = scenario
            .override_action(&belief)
            .expect("override present");
        if target_actions.len() == 1 && target_actions[0] == chosen {
            return (S::zero(), belief);
        }
        if target_actions.len() > 1 && target_actions == [chosen] {
            return (S::zero(), belief);
        }
    }
    // An override maps each belief to one action, so simultaneous support of
    // several actions by a single belief is infeasible by construction.
    (
        S::neg_infinity(),
        uniform_min_set_belief(scenario.n_params(), min_set),
    )
}

/// Whether all minimizer-set members induce the same outcome distribution on
/// the given actions, within `tol`.
fn weak_identification<S: Real>(
    scenario: &Scenario<S>,
    min_set: &[usize],
    actions: &[usize],
    tol: S,
) -> bool {
    for pair in 0..min_set.len() {
        for other in (pair + 1)..min_set.len() {
            let (t1, t2) = (min_set[pair], min_set[other]);
            for &a in actions {
                let dist = match scenario.family() {
                    KernelFamily::Categorical { prob } => prob[t1][a]
                        .iter()
                        .zip(&prob[t2][a])
                        .map(|(&x, &y)| (x - y).abs())
                        .fold(S::zero(), |acc, v| if v > acc { v } else { acc }),
                    KernelFamily::GaussianMean { mean } => (mean[t1][a] - mean[t2][a]).abs(),
                };
                if dist > tol {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Standard,
    Generalized,
}

/// Verifies whether `sigma` is a (standard or generalized) Berk-Nash
/// equilibrium, reporting residuals and the weak-identification flag.
pub fn check_equilibrium<S: Real>(
    scenario: &Scenario<S>,
    sigma: &MixedAction<S>,
    kind: CheckKind,
    tol: S,
) -> Result<EquilibriumResult<S>, InferenceError> {
    let support = sigma.support(S::from_f64_lossy(1.0e-12));
    let report = kl_min_set(scenario, sigma, default_min_set_tol())?;
    let wi = weak_identification(
        scenario,
        &report.min_set,
        &support,
        S::from_f64_lossy(1.0e-10),
    );

    let (gap, beliefs) = match kind {
        CheckKind::Standard => {
            let (value, witness) = support_feasibility(scenario, &report.min_set, &support);
            ((-value).max(S::zero()), SupportingBeliefs::Single(witness))
        }
        CheckKind::Generalized => {
            let mut worst = S::zero();
            let mut witnesses = Vec::with_capacity(support.len());
            for &a in &support {
                let (value, witness) = support_feasibility(scenario, &report.min_set, &[a]);
                worst = worst.max((-value).max(S::zero()));
                witnesses.push((a, witness));
            }
            (worst, SupportingBeliefs::PerAction(witnesses))
        }
    };

    let complement: Vec<usize> = (0..scenario.n_params())
        .filter(|i| !report.min_set.contains(i))
        .collect();
    let kl_support_gap = if complement.is_empty() {
        S::zero()
    } else {
        match &beliefs {
            SupportingBeliefs::Single(b) => b.log_mass_on(&complement).exp(),
            SupportingBeliefs::PerAction(list) => list
                .iter()
                .map(|(_, b)| b.log_mass_on(&complement).exp())
                .fold(S::zero(), |acc, v| if v > acc { v } else { acc }),
        }
    };

    let pure = support.len() == 1;
    let uniformly_strict = if pure && gap <= tol {
        check_uniformly_strict(scenario, support[0], tol)?.holds
    } else {
        false
    };

    Ok(EquilibriumResult {
        sigma: sigma.clone(),
        beliefs,
        residuals: Residuals {
            optimality_gap: gap,
            kl_support_gap,
        },
        flags: Flags {
            pure,
            mixed: support.len() > 1,
            generalized: kind == CheckKind::Generalized,
            intended_tau: None,
            uniformly_strict,
            weak_identification: wi,
        },
        solver: SolverInfo {
            method: "check".into(),
            starts: 0,
            iterations: 0,
            damping: 0.0,
            converged: true,
            messages: Vec::new(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct UniformStrictness<S> {
    pub holds: bool,
    /// Smallest utility margin of the candidate action over any deviation,
    /// across minimizer-set vertices.
    pub margin: S,
    /// A violating (theta index, deviation action) pair, when one exists.
    pub witness: Option<(usize, usize)>,
}

/// An action is uniformly strict when it is the unique best reply under
/// every belief on its minimizer set. The utility gap is affine in the
/// belief, so checking the vertices suffices.
pub fn check_uniformly_strict<S: Real>(
    scenario: &Scenario<S>,
    action: usize,
    tol: S,
) -> Result<UniformStrictness<S>, InferenceError> {
    let sigma = MixedAction::point_mass(scenario.n_actions(), action);
    let report = kl_min_set(scenario, &sigma, default_min_set_tol())?;
    if scenario.policy_override().is_some() {
        // Under an override, strictness means the rule picks this action at
        // every belief on the minimizer set; check the witness mesh.
        let (value, _) = override_feasibility(scenario, &report.min_set, &[action]);
        let mut holds = value == S::zero();
        if holds && report.min_set.len() > 1 {
            // Every vertex must map to the action, not just some witness.
            for &t in &report.min_set {
                let belief = Belief::point_mass(scenario.n_params(), t);
                if scenario.override_action(&belief) != Some(action) {
                    holds = false;
                    break;
                }
            }
        }
        return Ok(UniformStrictness {
            holds,
            margin: S::zero(),
            witness: None,
        });
    }
    let mut margin = S::infinity();
    let mut witness = None;
    for &t in &report.min_set {
        for a_other in 0..scenario.n_actions() {
            if a_other == action {
                continue;
            }
            let gap =
                expected_utility(scenario, action, t) - expected_utility(scenario, a_other, t);
            if gap < margin {
                margin = gap;
                if gap <= tol {
                    witness = Some((t, a_other));
                }
            }
        }
    }
    if margin == S::infinity() {
        // Single-action scenarios are vacuously uniformly strict.
        return Ok(UniformStrictness {
            holds: true,
            margin: S::zero(),
            witness: None,
        });
    }
    Ok(UniformStrictness {
        holds: margin > tol,
        margin,
        witness,
    })
}

/// Scans every pure action for Berk-Nash feasibility: compute the minimizer
/// set of the point mass, then search for a supporting belief on it.
pub fn find_pure_bne<S: Real>(
    scenario: &Scenario<S>,
    tol: S,
) -> Result<Vec<EquilibriumResult<S>>, InferenceError> {
    let mut results = Vec::new();
    for a in 0..scenario.n_actions() {
        let sigma = MixedAction::point_mass(scenario.n_actions(), a);
        let mut res = check_equilibrium(scenario, &sigma, CheckKind::Standard, tol)?;
        if res.residuals.optimality_gap <= tol {
            res.solver.method = "pure-scan".into();
            results.push(res);
        }
    }
    Ok(results)
}

type InferenceResultS<T> = Result<T, InferenceError>;

/// Binary-action mixed solver: root-find the indifference condition in the
/// probability of the second action. Scenarios carrying the affine Gaussian
/// structure use the continuous box minimizer, which makes the indifference
/// function continuous in sigma; otherwise the gridded minimizer is used and
/// the root is located within grid tolerance. Boundary pure equilibria are
/// always reported alongside.
pub fn find_mixed_bne_binary<S: Real>(
    scenario: &Scenario<S>,
    tol: S,
) -> Result<Vec<EquilibriumResult<S>>, InferenceError> {
    assert_eq!(
        scenario.n_actions(),
        2,
        "mixed-binary solver requires exactly two actions"
    );
    let continuous = scenario.continuous_theta().is_some();
    let g = |p: S| -> InferenceResultS<S> {
        let sigma = MixedAction::new(vec![S::one() - p, p]).expect("valid mix");
        let utilities = if continuous {
            let theta = kl_min_box(scenario, &sigma).expect("continuous structure present");
            utilities_at_theta(scenario, &theta)
        } else {
            let report = kl_min_set(scenario, &sigma, default_min_set_tol())?;
            let belief = uniform_min_set_belief(scenario.n_params(), &report.min_set);
            mean_utilities(scenario, &belief)
        };
        Ok(utilities[1] - utilities[0])
    };

    let mut results = find_pure_bne(scenario, tol)?;
    for r in &mut results {
        r.solver.method = "mixed-binary/boundary".into();
    }

    let scan_n = 512usize;
    let mut messages = Vec::new();
    let mut roots: Vec<S> = Vec::new();
    // Gridded minimizers make the indifference function piecewise constant,
    // so exact zeros come in runs; each maximal run is one root, reported at
    // its midpoint (on a uniform grid that midpoint is where the underlying
    // continuous indifference crosses).
    let mut zero_run: Option<(S, S)> = None;
    let mut prev: Option<(S, S)> = None;
    for i in 1..=scan_n {
        let at_end = i == scan_n;
        let p = S::from_usize(i).unwrap() / S::from_usize(scan_n).unwrap();
        let v = if at_end { S::one() } else { g(p)? };
        if !at_end && v == S::zero() {
            zero_run = match zero_run {
                None => Some((p, p)),
                Some((start, _)) => Some((start, p)),
            };
            prev = Some((p, v));
            continue;
        }
        if let Some((start, end)) = zero_run.take() {
            roots.push((start + end) / S::from_f64_lossy(2.0));
        }
        if at_end {
            break;
        }
        if let Some((p0, v0)) = prev {
            if v0 != S::zero() && (v0 > S::zero()) != (v > S::zero()) {
                let (mut lo, mut hi, mut vlo) = (p0, p, v0);
                for _ in 0..200 {
                    let mid = (lo + hi) / S::from_f64_lossy(2.0);
                    if mid == lo || mid == hi {
                        break;
                    }
                    let vm = g(mid)?;
                    if vm == S::zero() {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (vm > S::zero()) == (vlo > S::zero()) {
                        lo = mid;
                        vlo = vm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push((lo + hi) / S::from_f64_lossy(2.0));
            }
        }
        prev = Some((p, v));
    }
    if roots.is_empty() {
        messages.push("no sign change of the indifference condition on (0, 1)".into());
        for r in &mut results {
            r.solver.messages.extend(messages.iter().cloned());
        }
    }

    for root in roots {
        let sigma = MixedAction::new(vec![S::one() - root, root]).expect("valid mix");
        let mut res = check_equilibrium(scenario, &sigma, CheckKind::Standard, tol)?;
        res.flags.mixed = true;
        res.solver = SolverInfo {
            method: if continuous {
                "mixed-binary/continuous".into()
            } else {
                "mixed-binary/grid".into()
            },
            starts: 1,
            iterations: 200,
            damping: 0.0,
            converged: true,
            messages: messages.clone(),
        };
        results.push(res);
    }
    if results.is_empty() {
        // Surface the no-sign-change note even without any equilibria.
        let sigma = MixedAction::uniform(2);
        let mut res = check_equilibrium(scenario, &sigma, CheckKind::Standard, tol)?;
        res.solver.method = "mixed-binary/none".into();
        res.solver.converged = false;
        res.solver.messages = messages;
        results.push(res);
    }
    Ok(results)
}

/// Damped fixed-point iteration for equilibria in intended (random-utility)
/// strategies: `sigma <- (1 - lambda) sigma + lambda logit(mu(sigma), tau)`,
/// multistarted from every pure action and the barycenter. Fixed points are
/// accepted at sup-norm residual below 1e-8 and deduplicated at 1e-6.
pub fn find_intended_bne<S: Real>(
    scenario: &Scenario<S>,
    tau: S,
    damping: S,
    max_iters: usize,
) -> Result<Vec<EquilibriumResult<S>>, InferenceError> {
    assert!(tau > S::zero(), "temperature must be positive");
    let n = scenario.n_actions();
    let residual_tol = S::from_f64_lossy(1.0e-8);
    let continuous = scenario.continuous_theta().is_some();

    let intended = |sigma: &MixedAction<S>| -> InferenceResultS<MixedAction<S>> {
        let utilities = if continuous {
            let theta = kl_min_box(scenario, sigma).expect("continuous structure present");
            utilities_at_theta(scenario, &theta)
        } else {
            let report = kl_min_set(scenario, sigma, default_min_set_tol())?;
            let belief = uniform_min_set_belief(scenario.n_params(), &report.min_set);
            mean_utilities(scenario, &belief)
        };
        Ok(logit_from_utilities(&utilities, tau))
    };

    let mut starts: Vec<MixedAction<S>> = (0..n).map(|a| MixedAction::point_mass(n, a)).collect();
    starts.push(MixedAction::uniform(n));

    let mut fixed_points: Vec<EquilibriumResult<S>> = Vec::new();
    let n_starts = starts.len();
    for (start_idx, start) in starts.into_iter().enumerate() {
        let mut sigma = start;
        let mut converged = false;
        let mut iterations = 0;
        // The logit map steepens like 1/tau near indifference points, so the
        // step size adapts: halve on residual growth, creep back up on
        // sustained progress.
        let mut lambda = damping;
        let lambda_floor = S::from_f64_lossy(1.0e-7);
        let mut prev_residual = S::infinity();
        let mut good_streak = 0usize;
        for it in 0..max_iters {
            iterations = it + 1;
            let target = intended(&sigma)?;
            let residual = sigma.linf_distance(&target);
            if residual < residual_tol {
                converged = true;
                break;
            }
            if residual >= prev_residual {
                lambda = (lambda / S::from_f64_lossy(2.0)).max(lambda_floor);
                good_streak = 0;
            } else {
                good_streak += 1;
                if good_streak >= 64 {
                    lambda = (lambda * S::from_f64_lossy(1.25)).min(damping);
                    good_streak = 0;
                }
            }
            prev_residual = residual;
            let mixed: Vec<S> = sigma
                .probs()
                .iter()
                .zip(target.probs())
                .map(|(&s, &t)| (S::one() - lambda) * s + lambda * t)
                .collect();
            sigma = MixedAction::from_unnormalized(mixed).expect("positive mix");
        }
        let duplicate = fixed_points
            .iter()
            .any(|r| r.sigma.linf_distance(&sigma) < S::from_f64_lossy(1.0e-6));
        if duplicate {
            continue;
        }
        let target = intended(&sigma)?;
        let residual = sigma.linf_distance(&target);
        let report = kl_min_set(scenario, &sigma, default_min_set_tol())?;
        let belief = uniform_min_set_belief(scenario.n_params(), &report.min_set);
        let mut messages = Vec::new();
        if !converged {
            messages.push(format!(
                "start #{start_idx}: no convergence after {max_iters} iterations \
                 (residual {:.3e})",
                residual.to_f64_lossy()
            ));
        }
        let support = sigma.support(S::from_f64_lossy(1.0e-9));
        fixed_points.push(EquilibriumResult {
            sigma: sigma.clone(),
            beliefs: SupportingBeliefs::Single(belief),
            residuals: Residuals {
                optimality_gap: residual,
                kl_support_gap: S::zero(),
            },
            flags: Flags {
                pure: support.len() == 1,
                mixed: support.len() > 1,
                generalized: false,
                intended_tau: Some(tau.to_f64_lossy()),
                uniformly_strict: false,
                weak_identification: false,
            },
            solver: SolverInfo {
                method: "intended/damped-logit".into(),
                starts: n_starts,
                iterations,
                damping: damping.to_f64_lossy(),
                converged,
                messages,
            },
        });
    }
    if fixed_points.iter().any(|r| r.solver.converged) {
        fixed_points.retain(|r| r.solver.converged);
    }
    Ok(fixed_points)
}

#[derive(Debug, Clone)]
pub struct RationalizableReport {
    /// The shrinking sequence of action-index sets, starting from the full
    /// action set; the last entry is the fixed point.
    pub sets: Vec<Vec<usize>>,
    pub mixture_mesh: usize,
    pub sigma_samples: usize,
}

impl RationalizableReport {
    pub fn fixed_point(&self) -> &[usize] {
        self.sets.last().expect("sequence starts nonempty")
    }
}

/// Iterates the justifiability operator from the full action set: an action
/// survives when some mixture over the current set (sampled on a simplex
/// mesh, vertices always included) induces a minimizer set whose simplex
/// supports a belief making the action optimal. Monotone decreasing by
/// construction; the mesh is an approximation and is recorded in the report.
pub fn rationalizable_set<S: Real>(
    scenario: &Scenario<S>,
    mixture_mesh: usize,
    tol: S,
) -> Result<RationalizableReport, InferenceError> {
    assert!(mixture_mesh >= 1, "mesh must have at least one cell");
    let n = scenario.n_actions();
    let mut current: Vec<usize> = (0..n).collect();
    let mut sets = vec![current.clone()];
    let mut sigma_samples = 0usize;
    for _ in 0..n {
        let sigmas = simplex_mesh_mixtures::<S>(n, &current, mixture_mesh);
        sigma_samples += sigmas.len();
        let mut justified: Vec<usize> = Vec::new();
        for sigma in &sigmas {
            let report = kl_min_set(scenario, sigma, default_min_set_tol())?;
            for &a in &current {
                if justified.contains(&a) {
                    continue;
                }
                let (value, _) = support_feasibility(scenario, &report.min_set, &[a]);
                if value >= -tol {
                    justified.push(a);
                }
            }
            if justified.len() == current.len() {
                break;
            }
        }
        justified.sort_unstable();
        let shrank = justified.len() < current.len();
        current = justified;
        sets.push(current.clone());
        if !shrank || current.is_empty() {
            break;
        }
    }
    Ok(RationalizableReport {
        sets,
        mixture_mesh,
        sigma_samples,
    })
}

/// Mixtures over `support` on a mesh of denominator `den`, embedded in the
/// full action space. Falls back to vertices, the barycenter, and meshed
/// pairs when the support is too large for the full product mesh.
fn simplex_mesh_mixtures<S: Real>(n: usize, support: &[usize], den: usize) -> Vec<MixedAction<S>> {
    let k = support.len();
    if k == 0 {
        return Vec::new();
    }
    let embed = |weights: &[(usize, S)]| {
        let mut probs = vec![S::zero(); n];
        for &(idx, w) in weights {
            probs[idx] = w;
        }
        MixedAction::from_unnormalized(probs).expect("mesh weights are valid")
    };
    let mut out = Vec::new();
    if compositions_count(den, k) <= 100_000 {
        let mut comp = vec![0usize; k];
        comp[0] = den;
        loop {
            let weights: Vec<(usize, S)> = comp
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    (
                        support[i],
                        S::from_usize(c).unwrap() / S::from_usize(den).unwrap(),
                    )
                })
                .collect();
            out.push(embed(&weights));
            if !next_composition(&mut comp) {
                break;
            }
        }
    } else {
        for &a in support {
            out.push(embed(&[(a, S::one())]));
        }
        let w = S::one() / S::from_usize(k).unwrap();
        let weights: Vec<(usize, S)> = support.iter().map(|&a| (a, w)).collect();
        out.push(embed(&weights));
        for i in 0..k {
            for j in (i + 1)..k {
                for step in 1..den {
                    let t = S::from_usize(step).unwrap() / S::from_usize(den).unwrap();
                    out.push(embed(&[(support[i], S::one() - t), (support[j], t)]));
                }
            }
        }
    }
    out
}

/// A game-equilibrium candidate: per-player mixes, supporting beliefs, and
/// per-player optimality residuals.
#[derive(Debug, Clone)]
pub struct GameEquilibriumResult<S> {
    pub profile: Vec<MixedAction<S>>,
    pub beliefs: Vec<Belief<S>>,
    /// Continuous KL minimizers per player, when the affine structure exists.
    pub theta_hats: Vec<Option<S>>,
    pub residuals: Vec<S>,
    pub solver: SolverInfo,
}

impl<S: Real> GameEquilibriumResult<S> {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "profile": self.profile.iter()
                .map(|m| m.probs().iter().map(|p| p.to_f64_lossy()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "beliefs": self.beliefs.iter()
                .map(|b| b.probs().iter().map(|p| p.to_f64_lossy()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "theta_hats": self.theta_hats.iter()
                .map(|t| t.map(|v| v.to_f64_lossy()))
                .collect::<Vec<_>>(),
            "residuals": self.residuals.iter().map(|r| r.to_f64_lossy()).collect::<Vec<_>>(),
            "solver": {
                "method": self.solver.method,
                "starts": self.solver.starts,
                "iterations": self.solver.iterations,
                "damping": self.solver.damping,
                "converged": self.solver.converged,
                "messages": self.solver.messages,
            },
        })
    }
}

/// Player `i`'s KL-minimizing parameter under the product profile: the grid
/// argmin, plus the continuous minimizer when the affine structure exists.
pub fn game_kl_minimizer<S: Real>(
    game: &GameScenario<S>,
    i: usize,
    profile: &[MixedAction<S>],
) -> (usize, Option<S>) {
    let p = game.player(i);
    let supports: Vec<Vec<usize>> = profile
        .iter()
        .map(|m| m.support(S::from_f64_lossy(1.0e-14)))
        .collect();
    let mut joints: Vec<(usize, S)> = Vec::new();
    let mut idxs = vec![0usize; supports.len()];
    'outer: loop {
        let mut w = S::one();
        let mut prof = Vec::with_capacity(supports.len());
        for (j, s) in supports.iter().enumerate() {
            let a = s[idxs[j]];
            prof.push(a);
            w = w * profile[j].prob(a);
        }
        if w > S::zero() {
            joints.push((game.joint_index(&prof), w));
        }
        for j in (0..idxs.len()).rev() {
            idxs[j] += 1;
            if idxs[j] < supports[j].len() {
                continue 'outer;
            }
            idxs[j] = 0;
            if j == 0 {
                break 'outer;
            }
        }
    }
    match (&p.family, &p.true_kernel) {
        (
            GameKernelFamily::GaussianAffine { offset, factor },
            GameTrueKernel::GaussianMean { mean },
        ) => {
            // Weighted KL is quadratic in the scalar parameter.
            let mut e_g2 = S::zero();
            let mut e_gr = S::zero();
            for &(j, w) in &joints {
                let g = factor[j];
                let r = mean[j] - offset[j];
                e_g2 = e_g2 + w * g * g;
                e_gr = e_gr + w * g * r;
            }
            let lo = p.grid.scalar(0);
            let hi = p.grid.scalar(p.grid.len() - 1);
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let theta_hat = if e_g2 > S::zero() {
                (e_gr / e_g2).max(lo).min(hi)
            } else {
                lo
            };
            let mut best = (S::infinity(), 0usize);
            for t in 0..p.grid.len() {
                let th = p.grid.scalar(t);
                let val = e_g2 * th * th - (e_gr + e_gr) * th;
                if val < best.0 {
                    best = (val, t);
                }
            }
            (best.1, Some(theta_hat))
        }
        (GameKernelFamily::Categorical { prob }, GameTrueKernel::Categorical { prob: tp }) => {
            let mut best = (S::infinity(), 0usize);
            for t in 0..p.grid.len() {
                let mut acc = S::zero();
                for &(j, w) in &joints {
                    for (y, &py) in tp[j].iter().enumerate() {
                        if py > S::zero() {
                            acc = acc + w * py * (py / prob[t][j][y]).ln();
                        }
                    }
                }
                if acc < best.0 {
                    best = (acc, t);
                }
            }
            (best.1, None)
        }
        _ => unreachable!("validation enforces matching variants"),
    }
}

/// Player `i`'s mean utilities at a continuous scalar parameter against the
/// other players' mixes (affine Gaussian games only).
fn game_utilities_at_theta<S: Real>(
    game: &GameScenario<S>,
    i: usize,
    theta: S,
    others: &[MixedAction<S>],
) -> Vec<S> {
    let p = game.player(i);
    let (
        GameKernelFamily::GaussianAffine { offset, factor },
        crate::model::Payoff::AffineInOutcome { intercept, slope },
    ) = (&p.family, &p.payoff)
    else {
        unreachable!("continuous game utilities require the affine structure");
    };
    let supports: Vec<Vec<usize>> = others
        .iter()
        .map(|m| m.support(S::from_f64_lossy(1.0e-14)))
        .collect();
    (0..p.actions.len())
        .map(|own| {
            let mut acc = S::zero();
            let mut idxs = vec![0usize; supports.len()];
            'outer: loop {
                let mut w = S::one();
                let mut profile = Vec::with_capacity(game.n_players());
                let mut k = 0;
                for j in 0..game.n_players() {
                    if j == i {
                        profile.push(own);
                    } else {
                        let a = supports[k][idxs[k]];
                        profile.push(a);
                        w = w * others[k].prob(a);
                        k += 1;
                    }
                }
                if w > S::zero() {
                    let joint = game.joint_index(&profile);
                    let mean = offset[joint] + factor[joint] * theta;
                    acc = acc + w * (intercept[own] + slope[own] * mean);
                }
                if supports.is_empty() {
                    break;
                }
                let mut advanced = false;
                for j in (0..idxs.len()).rev() {
                    idxs[j] += 1;
                    if idxs[j] < supports[j].len() {
                        advanced = true;
                        break;
                    }
                    idxs[j] = 0;
                }
                if !advanced {
                    break 'outer;
                }
            }
            acc
        })
        .collect()
}

/// Damped simultaneous best-response iteration on mixed profiles, with each
/// player's belief set to their KL minimizer for the current profile each
/// round. Multistarts over all pure profiles when the joint space is small,
/// over corner profiles, midpoints, and the barycenter otherwise; fixed
/// points are deduplicated.
pub fn find_game_bne<S: Real>(
    game: &GameScenario<S>,
    damping: S,
    tol: S,
    max_iters: usize,
) -> Vec<GameEquilibriumResult<S>> {
    let n_players = game.n_players();
    let support_floor = S::from_f64_lossy(1.0e-12);

    let mut starts: Vec<Vec<MixedAction<S>>> = Vec::new();
    if game.n_joint() <= 64 {
        let mut profile = vec![0usize; n_players];
        loop {
            starts.push(
                profile
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| MixedAction::point_mass(game.player(i).actions.len(), a))
                    .collect(),
            );
            let mut done = true;
            for i in (0..n_players).rev() {
                profile[i] += 1;
                if profile[i] < game.player(i).actions.len() {
                    done = false;
                    break;
                }
                profile[i] = 0;
            }
            if done {
                break;
            }
        }
    } else {
        let corner = |pick: &dyn Fn(usize) -> usize| -> Vec<MixedAction<S>> {
            (0..n_players)
                .map(|i| MixedAction::point_mass(game.player(i).actions.len(), pick(i)))
                .collect()
        };
        let last = |i: usize| game.player(i).actions.len() - 1;
        let mid = |i: usize| game.player(i).actions.len() / 2;
        starts.push(corner(&|_| 0));
        starts.push(corner(&last));
        starts.push(corner(&mid));
        starts.push(corner(&|i| if i % 2 == 0 { 0 } else { last(i) }));
        starts.push(corner(&|i| if i % 2 == 0 { last(i) } else { 0 }));
        starts.push(
            (0..n_players)
                .map(|i| MixedAction::uniform(game.player(i).actions.len()))
                .collect(),
        );
    }

    let player_state = |profile: &[MixedAction<S>], i: usize| -> (usize, Option<S>, Vec<S>) {
        let others: Vec<MixedAction<S>> = (0..n_players)
            .filter(|&j| j != i)
            .map(|j| profile[j].clone())
            .collect();
        let (grid_idx, theta_hat) = game_kl_minimizer(game, i, profile);
        let utilities = match theta_hat {
            Some(th) => game_utilities_at_theta(game, i, th, &others),
            None => {
                let belief = Belief::point_mass(game.player(i).grid.len(), grid_idx);
                game_mean_utilities(game, i, &belief, &others)
            }
        };
        (grid_idx, theta_hat, utilities)
    };

    let n_starts = starts.len();
    let mut results: Vec<GameEquilibriumResult<S>> = Vec::new();
    for (start_idx, start) in starts.into_iter().enumerate() {
        let mut profile = start;
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..max_iters {
            iterations = it + 1;
            let mut max_residual = S::zero();
            let mut next_profile = Vec::with_capacity(n_players);
            for i in 0..n_players {
                let (_, _, utilities) = player_state(&profile, i);
                let max_u = utilities
                    .iter()
                    .fold(S::neg_infinity(), |a, &b| if b > a { b } else { a });
                let mean_u: S = profile[i]
                    .probs()
                    .iter()
                    .zip(&utilities)
                    .map(|(&p, &u)| p * u)
                    .sum();
                max_residual = max_residual.max(max_u - mean_u);
                let br: Vec<usize> = utilities
                    .iter()
                    .enumerate()
                    .filter(|(_, &u)| u >= max_u - tol)
                    .map(|(a, _)| a)
                    .collect();
                let br_w = S::one() / S::from_usize(br.len()).unwrap();
                let mut mixed: Vec<S> = profile[i]
                    .probs()
                    .iter()
                    .map(|&p| (S::one() - damping) * p)
                    .collect();
                for &a in &br {
                    mixed[a] = mixed[a] + damping * br_w;
                }
                for m in mixed.iter_mut() {
                    if *m < support_floor {
                        *m = S::zero();
                    }
                }
                next_profile.push(MixedAction::from_unnormalized(mixed).expect("valid mix"));
            }
            profile = next_profile;
            if max_residual < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            continue;
        }
        // Snap tiny residual mass, then rebuild beliefs and residuals.
        let profile: Vec<MixedAction<S>> = profile
            .into_iter()
            .map(|m| {
                let trimmed: Vec<S> = m
                    .probs()
                    .iter()
                    .map(|&p| {
                        if p < S::from_f64_lossy(1.0e-9) {
                            S::zero()
                        } else {
                            p
                        }
                    })
                    .collect();
                MixedAction::from_unnormalized(trimmed).expect("valid mix")
            })
            .collect();
        let mut beliefs = Vec::with_capacity(n_players);
        let mut theta_hats = Vec::with_capacity(n_players);
        let mut residuals = Vec::with_capacity(n_players);
        for i in 0..n_players {
            let (grid_idx, theta_hat, utilities) = player_state(&profile, i);
            let max_u = utilities
                .iter()
                .fold(S::neg_infinity(), |a, &b| if b > a { b } else { a });
            let mean_u: S = profile[i]
                .probs()
                .iter()
                .zip(&utilities)
                .map(|(&p, &u)| p * u)
                .sum();
            beliefs.push(Belief::point_mass(game.player(i).grid.len(), grid_idx));
            theta_hats.push(theta_hat);
            residuals.push(max_u - mean_u);
        }
        let duplicate = results.iter().any(|r| {
            r.profile
                .iter()
                .zip(&profile)
                .all(|(a, b)| a.linf_distance(b) < S::from_f64_lossy(1.0e-6))
        });
        if duplicate {
            continue;
        }
        results.push(GameEquilibriumResult {
            profile,
            beliefs,
            theta_hats,
            residuals,
            solver: SolverInfo {
                method: "game/damped-br".into(),
                starts: n_starts,
                iterations,
                damping: damping.to_f64_lossy(),
                converged,
                messages: vec![format!("start #{start_idx}")],
            },
        });
    }
    results
}

/// Default solver tolerance, in utility units.
pub fn default_tol<S: Real>() -> S {
    default_opt_tol()
}

/// Upper-hemicontinuity surrogate for best replies: the strict argmax under
/// `belief` survives any total-variation perturbation below
/// `gap / (2 max|U|)`. Returns `None` at ties or for zero payoffs.
pub fn br_stability_radius<S: Real>(scenario: &Scenario<S>, belief: &Belief<S>) -> Option<S> {
    let br = best_reply_set(scenario, belief, S::zero());
    if !br.is_strict() {
        return None;
    }
    let best = br.best();
    let mut gap = S::infinity();
    let mut max_abs = S::zero();
    for (a, &u) in br.utilities.iter().enumerate() {
        if a != best {
            gap = gap.min(br.utilities[best] - u);
        }
    }
    for t in 0..scenario.n_params() {
        for a in 0..scenario.n_actions() {
            max_abs = max_abs.max(expected_utility(scenario, a, t).abs());
        }
    }
    if max_abs == S::zero() {
        return None;
    }
    Some(gap / (S::from_f64_lossy(2.0) * max_abs))
}

#[cfg(test)]
mod tests;
