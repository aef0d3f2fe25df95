//! Expected utilities, best-reply correspondences, and random-utility choice.

use crate::model::{
    Belief, GameKernelFamily, GameScenario, KernelFamily, MixedAction, OutcomeSpace, Payoff,
    Scenario,
};
use crate::Real;

/// Default optimality tolerance, in utility units.
pub fn default_opt_tol<S: Real>() -> S {
    S::from_f64_lossy(1.0e-9)
}

/// The tolerance-argmax of expected utility under a belief.
#[derive(Debug, Clone)]
pub struct BestReplySet<S> {
    /// Optimal action indices, in action order.
    pub optimal: Vec<usize>,
    /// Expected utility of every action under the belief.
    pub utilities: Vec<S>,
    /// Tolerance used for membership.
    pub tol: S,
}

impl<S: Real> BestReplySet<S> {
    fn from_utilities(utilities: Vec<S>, tol: S) -> Self {
        let max = utilities
            .iter()
            .fold(S::neg_infinity(), |acc, &u| if u > acc { u } else { acc });
        let optimal = utilities
            .iter()
            .enumerate()
            .filter(|(_, &u)| u >= max - tol)
            .map(|(i, _)| i)
            .collect();
        Self {
            optimal,
            utilities,
            tol,
        }
    }

    pub fn best(&self) -> usize {
        self.optimal[0]
    }

    pub fn is_strict(&self) -> bool {
        self.optimal.len() == 1
    }

    /// One CSV row per action: `action_index,utility,optimal_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("action_index,utility,optimal_flag\n");
        for (i, u) in self.utilities.iter().enumerate() {
            out.push_str(&format!(
                "{i},{:.16e},{}\n",
                u.to_f64_lossy(),
                u8::from(self.optimal.contains(&i))
            ));
        }
        out
    }
}

/// Expected payoff of `action` when outcomes follow the subjective kernel at
/// grid point `theta`: an exact finite sum for categorical kernels, the
/// closed-form affine expectation for Gaussian ones.
pub fn expected_utility<S: Real>(scenario: &Scenario<S>, action: usize, theta: usize) -> S {
    match (scenario.family(), scenario.payoff()) {
        (KernelFamily::Categorical { prob }, Payoff::Table { value }) => prob[theta][action]
            .iter()
            .zip(&value[action])
            .map(|(&q, &pi)| q * pi)
            .sum(),
        (KernelFamily::Categorical { prob }, Payoff::AffineInOutcome { intercept, slope }) => {
            let OutcomeSpace::Finite { values } = scenario.outcomes() else {
                unreachable!("categorical kernels imply finite outcomes");
            };
            let mean_y: S = prob[theta][action]
                .iter()
                .zip(values)
                .map(|(&q, &y)| q * y)
                .sum();
            intercept[action] + slope[action] * mean_y
        }
        (KernelFamily::GaussianMean { mean }, Payoff::AffineInOutcome { intercept, slope }) => {
            intercept[action] + slope[action] * mean[theta][action]
        }
        (KernelFamily::GaussianMean { .. }, Payoff::Table { .. }) => {
            unreachable!("validation rejects table payoffs on the Gaussian line")
        }
    }
}

/// Expected utilities of every action, averaged over the belief.
pub fn mean_utilities<S: Real>(scenario: &Scenario<S>, belief: &Belief<S>) -> Vec<S> {
    let probs = belief.probs();
    (0..scenario.n_actions())
        .map(|a| {
            probs
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > S::zero())
                .map(|(t, &w)| w * expected_utility(scenario, a, t))
                .sum()
        })
        .collect()
}

/// Expected utilities at an off-grid parameter vector, for scenarios with the
/// affine Gaussian structure.
pub fn utilities_at_theta<S: Real>(scenario: &Scenario<S>, theta: &[S]) -> Vec<S> {
    let ct = scenario
        .continuous_theta()
        .expect("utilities_at_theta requires a continuous parameter structure");
    let Payoff::AffineInOutcome { intercept, slope } = scenario.payoff() else {
        unreachable!("continuous structure implies an affine payoff");
    };
    (0..scenario.n_actions())
        .map(|a| intercept[a] + slope[a] * ct.mean_at(theta, a))
        .collect()
}

/// The optimal-action correspondence at `belief`, within `tol`. When the
/// scenario carries a policy override the returned set is the override's
/// single action (utilities are still reported).
pub fn best_reply_set<S: Real>(scenario: &Scenario<S>, belief: &Belief<S>, tol: S) -> BestReplySet<S> {
    let utilities = mean_utilities(scenario, belief);
    if let Some(forced) = scenario.override_action(belief) {
        return BestReplySet {
            optimal: vec![forced],
            utilities,
            tol,
        };
    }
    BestReplySet::from_utilities(utilities, tol)
}

/// Tolerance-argmax at an off-grid parameter vector (no override handling).
pub fn best_reply_at_theta<S: Real>(scenario: &Scenario<S>, theta: &[S], tol: S) -> BestReplySet<S> {
    BestReplySet::from_utilities(utilities_at_theta(scenario, theta), tol)
}

/// Random-utility (logit) choice probabilities at temperature `tau`:
/// `probs proportional to exp(U(a)/tau)`, computed with a max shift. Full
/// support for every positive temperature, and continuous in the belief.
pub fn logit_choice<S: Real>(scenario: &Scenario<S>, belief: &Belief<S>, tau: S) -> MixedAction<S> {
    assert!(tau > S::zero(), "logit temperature must be positive");
    logit_from_utilities(&mean_utilities(scenario, belief), tau)
}

pub fn logit_from_utilities<S: Real>(utilities: &[S], tau: S) -> MixedAction<S> {
    let max = utilities
        .iter()
        .fold(S::neg_infinity(), |acc, &u| if u > acc { u } else { acc });
    // Floor at the smallest positive value so huge gaps cannot underflow
    // the full-support guarantee away.
    let weights: Vec<S> = utilities
        .iter()
        .map(|&u| ((u - max) / tau).exp().max(S::min_positive_value()))
        .collect();
    MixedAction::from_unnormalized(weights).expect("logit weights are positive")
}

/// Player `i`'s expected utility of own action `own` against a pure opponent
/// profile `others` (indices for every player except `i`), under grid point
/// `theta`.
pub fn game_utility_vs_pure<S: Real>(
    game: &GameScenario<S>,
    i: usize,
    own: usize,
    others: &[usize],
    theta: usize,
) -> S {
    let mut profile = Vec::with_capacity(game.n_players());
    let mut k = 0;
    for j in 0..game.n_players() {
        if j == i {
            profile.push(own);
        } else {
            profile.push(others[k]);
            k += 1;
        }
    }
    let joint = game.joint_index(&profile);
    let p = game.player(i);
    match (&p.family, &p.payoff) {
        (GameKernelFamily::Categorical { prob }, Payoff::Table { value }) => prob[theta][joint]
            .iter()
            .zip(&value[own])
            .map(|(&q, &pi)| q * pi)
            .sum(),
        (GameKernelFamily::Categorical { prob }, Payoff::AffineInOutcome { intercept, slope }) => {
            let OutcomeSpace::Finite { values } = &p.outcomes else {
                unreachable!("categorical kernels imply finite outcomes");
            };
            let mean_y: S = prob[theta][joint]
                .iter()
                .zip(values)
                .map(|(&q, &y)| q * y)
                .sum();
            intercept[own] + slope[own] * mean_y
        }
        (
            GameKernelFamily::GaussianAffine { offset, factor },
            Payoff::AffineInOutcome { intercept, slope },
        ) => {
            let mean = offset[joint] + factor[joint] * p.grid.scalar(theta);
            intercept[own] + slope[own] * mean
        }
        (GameKernelFamily::GaussianAffine { .. }, Payoff::Table { .. }) => {
            unreachable!("validation rejects table payoffs on the Gaussian line")
        }
    }
}

/// Player `i`'s best replies to independent opponent mixes under belief
/// `mu_i`: the argmax over own actions of the doubly averaged utility.
pub fn game_best_reply<S: Real>(
    game: &GameScenario<S>,
    i: usize,
    mu_i: &Belief<S>,
    others: &[MixedAction<S>],
    tol: S,
) -> BestReplySet<S> {
    let utilities = game_mean_utilities(game, i, mu_i, others);
    BestReplySet::from_utilities(utilities, tol)
}

/// Doubly averaged utilities: over the belief and over opponents' mixes.
pub fn game_mean_utilities<S: Real>(
    game: &GameScenario<S>,
    i: usize,
    mu_i: &Belief<S>,
    others: &[MixedAction<S>],
) -> Vec<S> {
    assert_eq!(others.len(), game.n_players() - 1);
    let probs = mu_i.probs();
    let zero = S::zero();
    // Enumerate opponent profiles over their supports with product weights.
    let supports: Vec<Vec<usize>> = others.iter().map(|m| m.support(zero)).collect();
    let mut profiles: Vec<(Vec<usize>, S)> = vec![(Vec::new(), S::one())];
    for (j, support) in supports.iter().enumerate() {
        let mut next = Vec::with_capacity(profiles.len() * support.len());
        for (prefix, w) in &profiles {
            for &a in support {
                let mut p = prefix.clone();
                p.push(a);
                next.push((p, *w * others[j].prob(a)));
            }
        }
        profiles = next;
    }
    let own_n = game.player(i).actions.len();
    (0..own_n)
        .map(|own| {
            let mut acc = S::zero();
            for (t, &w_t) in probs.iter().enumerate() {
                if w_t <= S::zero() {
                    continue;
                }
                for (others_profile, w_p) in &profiles {
                    acc = acc + w_t * *w_p * game_utility_vs_pure(game, i, own, others_profile, t);
                }
            }
            acc
        })
        .collect()
}
