use super::*;
use crate::model::tests::coin_parts;
use crate::model::{KernelFamily, Payoff, Scenario, TrueKernel};
use crate::scenarios::make_builtin;
use std::collections::BTreeMap;

pub(crate) fn monopolist() -> Scenario<f64> {
    make_builtin::<f64>("monopolist", &BTreeMap::new())
        .unwrap()
        .as_single()
        .cloned()
        .unwrap()
}

/// Two actions, action-independent kernels, action 0 strictly dominant.
pub(crate) fn dominant_action_scenario() -> Scenario<f64> {
    let mut parts = coin_parts(vec![1.0, 1.0]);
    parts.actions = crate::model::ActionSet::native(vec![vec![0.0], vec![1.0]]).unwrap();
    parts.true_kernel = TrueKernel::Categorical {
        prob: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    };
    parts.family = KernelFamily::Categorical {
        prob: vec![
            vec![vec![0.75, 0.25], vec![0.75, 0.25]],
            vec![vec![0.25, 0.75], vec![0.25, 0.75]],
        ],
    };
    parts.payoff = Payoff::Table {
        value: vec![vec![1.0, 1.0], vec![0.0, 0.0]],
    };
    Scenario::new(parts).unwrap()
}

#[test]
fn max_min_handles_one_two_and_three_vertices() {
    // One vertex: value is the row minimum.
    let (v, w) = max_min_over_simplex::<f64>(&[vec![2.0], vec![-1.0]]);
    assert_eq!(v, -1.0);
    assert_eq!(w, vec![1.0]);
    // Two vertices: constraints x and 1-x cross at 1/2.
    let (v, w) = max_min_over_simplex::<f64>(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert!((v - 0.5).abs() < 1e-12);
    assert!((w[0] - 0.5).abs() < 1e-12);
    // Three vertices: symmetric cross at the barycenter.
    let d: Vec<Vec<f64>> = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let (v, w) = max_min_over_simplex(&d);
    assert!((v - 1.0 / 3.0).abs() < 1e-12);
    for wi in w {
        assert!((wi - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn mesh_route_close_to_exact_on_a_lifted_problem() {
    // Four vertices, duplicating a 2-vertex problem; mesh search should get
    // within mesh resolution of the true value 1/2.
    let d: Vec<Vec<f64>> = vec![vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0, 0.0]];
    let (v, _) = max_min_over_simplex(&d);
    assert!((v - 0.5).abs() < 1e-2, "mesh value {v}");
}

#[test]
fn monopolist_has_no_pure_equilibrium() {
    let scn = monopolist();
    let results = find_pure_bne(&scn, default_tol()).unwrap();
    assert!(results.is_empty());
}

#[test]
fn monopolist_low_price_point_mass_fails_with_gap_32() {
    let scn = monopolist();
    let sigma = MixedAction::new(vec![1.0, 0.0]).unwrap();
    let res = check_equilibrium(&scn, &sigma, CheckKind::Standard, default_tol()).unwrap();
    // Deviation to the high price is worth 8 alpha - 96 beta = 32 at (40, 3).
    assert!((res.residuals.optimality_gap - 32.0).abs() < 1e-9);
}

#[test]
fn monopolist_mixed_solver_finds_one_over_36() {
    let scn = monopolist();
    let results = find_mixed_bne_binary(&scn, default_tol()).unwrap();
    let mixed: Vec<_> = results.iter().filter(|r| r.flags.mixed).collect();
    assert_eq!(mixed.len(), 1);
    let sigma_star = mixed[0].sigma.prob(1);
    assert!(
        (sigma_star - 1.0 / 36.0).abs() < 1e-9,
        "sigma(10) = {sigma_star}"
    );
    assert!(mixed[0].residuals.optimality_gap < 1e-8);
    assert!(mixed[0].flags.weak_identification);
}

#[test]
fn monopolist_boundary_law_on_the_continuous_box() {
    let scn = monopolist();
    for &s in &[0.005, 0.01, 0.02] {
        let sigma = MixedAction::new(vec![1.0 - s, s]).unwrap();
        let theta = crate::inference::kl_min_box(&scn, &sigma).unwrap();
        assert!((theta[0] - 40.0).abs() < 1e-12);
        let beta_law = (3.0 + 92.0 * s) / (1.0 + 24.0 * s);
        assert!(
            (theta[1] - beta_law).abs() < 1e-12,
            "beta({s}) = {} vs law {beta_law}",
            theta[1]
        );
    }
}

#[test]
fn monopolist_equilibrium_check_passes_at_sigma_star() {
    let scn = monopolist();
    let sigma = MixedAction::new(vec![35.0 / 36.0, 1.0 / 36.0]).unwrap();
    let res = check_equilibrium(&scn, &sigma, CheckKind::Standard, default_tol()).unwrap();
    assert!(res.residuals.optimality_gap < 1e-9);
    assert!(res.flags.weak_identification);
    // Standard passing implies generalized passing.
    let gen = check_equilibrium(&scn, &sigma, CheckKind::Generalized, default_tol()).unwrap();
    assert!(gen.residuals.optimality_gap < 1e-9);
}

#[test]
fn dominant_action_is_uniformly_strict_and_pure() {
    let scn = dominant_action_scenario();
    let results = find_pure_bne(&scn, default_tol()).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].sigma.support(1e-12), vec![0]);
    let strict = check_uniformly_strict(&scn, 0, default_tol()).unwrap();
    assert!(strict.holds);
    assert!((strict.margin - 1.0).abs() < 1e-12);
}

#[test]
fn monopolist_low_price_is_not_uniformly_strict() {
    let scn = monopolist();
    let strict = check_uniformly_strict(&scn, 0, default_tol()).unwrap();
    assert!(!strict.holds);
    assert!(strict.witness.is_some());
}

#[test]
fn dominant_action_scenario_has_no_interior_mixed_root() {
    let scn = dominant_action_scenario();
    let results = find_mixed_bne_binary(&scn, default_tol()).unwrap();
    let interior: Vec<_> = results
        .iter()
        .filter(|r| r.flags.mixed && r.solver.converged)
        .collect();
    assert!(interior.is_empty(), "dominance admits no interior root");
    assert!(results.iter().any(|r| r.flags.pure));
    assert!(results
        .iter()
        .any(|r| r.solver.messages.iter().any(|m| m.contains("no sign change"))));
}

#[test]
fn intended_fixed_points_flatten_at_high_temperature() {
    let scn = monopolist();
    let results = find_intended_bne(&scn, 1000.0, 0.2, 20_000).unwrap();
    assert_eq!(results.len(), 1);
    // Utility gaps are bounded by ~32, so the logit is within 1e-2 of flat.
    let sigma = &results[0].sigma;
    assert!((sigma.prob(0) - 0.5).abs() < 1e-2);
}

#[test]
fn intended_fixed_points_approach_sigma_star_as_tau_falls() {
    let scn = monopolist();
    let sigma_star = 1.0 / 36.0;
    let mut gaps = Vec::new();
    for &tau in &[0.05, 0.01, 0.002] {
        let results = find_intended_bne(&scn, tau, 0.2, 200_000).unwrap();
        assert_eq!(results.len(), 1, "unique fixed point at tau = {tau}");
        assert!(results[0].solver.converged);
        gaps.push((results[0].sigma.prob(1) - sigma_star).abs());
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
    assert!(gaps[2] < 2e-3);
}

#[test]
fn intended_fixed_point_decouples_for_exogenous_kernels() {
    // Action-independent kernels pin the belief by outcome fit alone: both
    // parameters tie in KL, utilities are (1, 0) under any belief, so the
    // fixed point is the logistic of the utility gap.
    let scn = dominant_action_scenario();
    let tau = 0.5f64;
    let results = find_intended_bne(&scn, tau, 0.2, 50_000).unwrap();
    assert_eq!(results.len(), 1);
    let expect = 1.0 / (1.0 + (-1.0 / tau).exp());
    assert!((results[0].sigma.prob(0) - expect).abs() < 1e-6);
}

#[test]
fn rationalizable_set_keeps_both_monopolist_prices() {
    let scn = monopolist();
    let report = rationalizable_set(&scn, 32, default_tol()).unwrap();
    assert_eq!(report.fixed_point(), &[0, 1]);
}

#[test]
fn rationalizable_set_collapses_under_dominance() {
    let scn = dominant_action_scenario();
    let report = rationalizable_set(&scn, 8, default_tol()).unwrap();
    assert_eq!(report.fixed_point(), &[0]);
    assert!(report.sets.len() >= 2);
    for w in report.sets.windows(2) {
        assert!(w[1].iter().all(|a| w[0].contains(a)), "monotone decreasing");
    }
}

#[test]
fn coin_with_actions_keeps_both_best_replies() {
    // Beliefs are action-independent; each parameter has its own strict best
    // reply, and both point beliefs sit in the minimizer set.
    let mut parts = coin_parts(vec![1.0, 1.0]);
    parts.actions = crate::model::ActionSet::native(vec![vec![0.0], vec![1.0]]).unwrap();
    parts.true_kernel = TrueKernel::Categorical {
        prob: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    };
    parts.family = KernelFamily::Categorical {
        prob: vec![
            vec![vec![0.75, 0.25], vec![0.75, 0.25]],
            vec![vec![0.25, 0.75], vec![0.25, 0.75]],
        ],
    };
    // Action 0 is best under theta 0, action 1 under theta 1.
    parts.payoff = Payoff::Table {
        value: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    };
    let scn = Scenario::new(parts).unwrap();
    let report = rationalizable_set(&scn, 16, default_tol()).unwrap();
    assert_eq!(report.fixed_point(), &[0, 1]);
}

#[test]
fn effort_game_solver_matches_the_scalar_oracle() {
    // Small grids for unit-test speed; the acceptance suite runs defaults.
    let mut params = BTreeMap::new();
    params.insert("n_actions".to_string(), 61.0);
    params.insert("n_theta".to_string(), 41.0);
    let game = make_builtin::<f64>("effort-game", &params)
        .unwrap()
        .as_game()
        .cloned()
        .unwrap();
    let results = find_game_bne(&game, 0.2, 1e-9, 2_000);
    assert!(!results.is_empty());
    // Scalar oracle: damped best response on the symmetric one-dimensional
    // problem, clamped to the effort interval.
    let oracle = {
        let mut a = 0.5f64;
        for _ in 0..100_000 {
            let s = 2.0 * a + a * a;
            let theta = (1.0 + s) / (2.0 + s);
            let target = (theta * (1.0 + a)).clamp(0.0, 3.0);
            a += 0.2 * (target - a);
        }
        a
    };
    for r in &results {
        assert!(r.solver.converged);
        for m in &r.profile {
            assert_eq!(m.support(1e-9).len(), 1, "pure profile expected");
        }
        let a0 = game.player(0).actions.scalar(r.profile[0].support(1e-9)[0]);
        let a1 = game.player(1).actions.scalar(r.profile[1].support(1e-9)[0]);
        assert!((a0 - a1).abs() < 1e-12, "symmetric profile");
        assert!((a0 - oracle).abs() < 1e-9, "a0 = {a0}, oracle = {oracle}");
    }
}

#[test]
fn game_with_dominant_actions_converges_in_one_step() {
    // Kernels ignore actions; payoffs give each player a dominant action.
    let actions = crate::model::ActionSet::native(vec![vec![0.0], vec![1.0]]).unwrap();
    let player = crate::model::PlayerModel {
        grid: crate::model::ParameterGrid::new(vec![vec![0.3], vec![0.7]], None).unwrap(),
        actions: actions.clone(),
        outcomes: crate::model::OutcomeSpace::Finite {
            values: vec![0.0, 1.0],
        },
        true_kernel: crate::model::GameTrueKernel::Categorical {
            prob: vec![vec![0.5, 0.5]; 4],
        },
        family: crate::model::GameKernelFamily::Categorical {
            prob: vec![vec![vec![0.7, 0.3]; 4], vec![vec![0.3, 0.7]; 4]],
        },
        payoff: Payoff::Table {
            value: vec![vec![1.0, 1.0], vec![0.0, 0.0]],
        },
        prior_weights: vec![1.0, 1.0],
    };
    let game = crate::model::GameScenario::new(
        "dominant-game".into(),
        vec![player.clone(), player],
        Default::default(),
    )
    .unwrap();
    let results = find_game_bne(&game, 1.0, 1e-9, 50);
    assert_eq!(results.len(), 1);
    for m in &results[0].profile {
        assert_eq!(m.support(1e-9), vec![0]);
    }
    assert!(results[0].residuals.iter().all(|&r| r < 1e-9));
}

#[test]
fn every_finder_result_passes_check_equilibrium() {
    let scn = monopolist();
    let tol = default_tol::<f64>();
    for res in find_mixed_bne_binary(&scn, tol).unwrap() {
        if !res.solver.converged {
            continue;
        }
        let check = check_equilibrium(&scn, &res.sigma, CheckKind::Standard, tol).unwrap();
        assert!(check.residuals.optimality_gap < 10.0 * 1e-9 + 1e-12);
    }
}

#[test]
fn results_serialize_to_deterministic_json() {
    let scn = monopolist();
    let sigma = MixedAction::new(vec![35.0 / 36.0, 1.0 / 36.0]).unwrap();
    let res = check_equilibrium(&scn, &sigma, CheckKind::Standard, default_tol()).unwrap();
    let a = serde_json::to_string(&res.to_json_value()).unwrap();
    let b = serde_json::to_string(&res.to_json_value()).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("optimality_gap"));
}

#[test]
fn game_best_reply_matches_the_foc_bisection_oracle() {
    // Opponent frozen at a pure effort, point belief on theta: the best
    // reply solves c'(a) = theta (1 + a_other), located by bisection.
    let mut params = BTreeMap::new();
    params.insert("n_actions".to_string(), 301.0);
    params.insert("n_theta".to_string(), 21.0);
    let game = make_builtin::<f64>("effort-game", &params)
        .unwrap()
        .as_game()
        .cloned()
        .unwrap();
    let actions = &game.player(0).actions;
    let a_other_idx = actions.nearest_scalar(0.5);
    let a_other = actions.scalar(a_other_idx);
    let theta_idx = game.player(0).grid.nearest(&[0.8]);
    let theta = game.player(0).grid.scalar(theta_idx);
    let br = crate::decision::game_best_reply(
        &game,
        0,
        &crate::model::Belief::point_mass(game.player(0).grid.len(), theta_idx),
        &[MixedAction::point_mass(actions.len(), a_other_idx)],
        1e-9,
    );
    // Bisection on f(a) = a - theta (1 + a_other).
    let f = |a: f64| a - theta * (1.0 + a_other);
    let (mut lo, mut hi) = (0.0f64, 3.0f64);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    assert_eq!(br.optimal.len(), 1);
    let grid_step = 3.0 / 300.0;
    let best = actions.scalar(br.best());
    assert!(
        (best - root).abs() <= grid_step / 2.0 + 1e-12,
        "grid best reply {best} vs FOC root {root}"
    );
}

#[test]
fn overconfidence_equilibrium_is_uniformly_strict() {
    // The KL minimizer is unique and the perceived objective is strictly
    // concave in effort (second-order oracle below), so the equilibrium
    // action is the unique best reply on its minimizer set.
    let scn = make_builtin::<f64>("overconfidence", &BTreeMap::new())
        .unwrap()
        .as_single()
        .cloned()
        .unwrap();
    let eq = find_pure_bne(&scn, default_tol()).unwrap();
    assert_eq!(eq.len(), 1);
    let action = eq[0].sigma.support(1e-12)[0];
    let strict = check_uniformly_strict(&scn, action, default_tol()).unwrap();
    assert!(strict.holds);
    assert!(strict.margin > 0.0);
    // Second-order oracle: U(a, theta) = (2 + a) theta - a^2 / 2 has second
    // derivative -1 < 0 everywhere, so the smooth maximizer is unique.
    let second_derivative = -1.0f64;
    assert!(second_derivative < 0.0);
    assert!(eq[0].flags.uniformly_strict);
}

#[test]
fn strict_best_replies_survive_small_belief_perturbations() {
    let scn = monopolist();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..scn.n_params())
            .map(|_| rng.random::<f64>() + 1e-6)
            .collect();
        let belief = crate::model::Belief::from_weights(&w).unwrap();
        let Some(radius) = br_stability_radius(&scn, &belief) else {
            continue;
        };
        let base = crate::decision::best_reply_set(&scn, &belief, 0.0).best();
        // Perturb within half the radius in total variation.
        let probs = belief.probs();
        for _ in 0..5 {
            let i = rng.random_range(0..probs.len());
            let j = rng.random_range(0..probs.len());
            if i == j {
                continue;
            }
            let shift = (radius / 2.0).min(probs[i]);
            let mut q = probs.clone();
            q[i] -= shift;
            q[j] += shift;
            let perturbed = crate::model::Belief::from_weights(
                &q.iter().map(|&x| x.max(1e-300)).collect::<Vec<_>>(),
            )
            .unwrap();
            let new_best = crate::decision::best_reply_set(&scn, &perturbed, 0.0).best();
            assert_eq!(base, new_best, "strict argmax flipped inside the radius");
            checked += 1;
        }
    }
    assert!(checked > 100, "exercised {checked} perturbations");
}

#[test]
fn grid_refinement_moves_the_mixed_root_within_the_displacement_bound() {
    // Categorical two-action scenario with an interior mixed equilibrium:
    // q_theta(high | a0) = theta, q_theta(high | a1) = 1 - theta, truths
    // 0.7 and 0.6, payoffs rewarding `high` under both actions. The mixture
    // minimizer is theta_hat(sigma) = 0.7 - 0.3 sigma and indifference sits
    // at theta = 1/2, so the continuous root is sigma* = 2/3.
    let build = |n_theta: usize| {
        let thetas: Vec<f64> = (0..n_theta)
            .map(|i| 0.2 + 0.6 * i as f64 / (n_theta - 1) as f64)
            .collect();
        let prob: Vec<Vec<Vec<f64>>> = thetas
            .iter()
            .map(|&t| vec![vec![1.0 - t, t], vec![t, 1.0 - t]])
            .collect();
        Scenario::new(crate::model::ScenarioParts {
            id: format!("signal-flip-{n_theta}"),
            grid: crate::model::ParameterGrid::new(
                thetas.iter().map(|&t| vec![t]).collect(),
                None,
            )
            .unwrap(),
            actions: crate::model::ActionSet::native(vec![vec![0.0], vec![1.0]]).unwrap(),
            outcomes: crate::model::OutcomeSpace::Finite {
                values: vec![0.0, 1.0],
            },
            true_kernel: TrueKernel::Categorical {
                prob: vec![vec![0.3, 0.7], vec![0.4, 0.6]],
            },
            family: KernelFamily::Categorical { prob },
            payoff: Payoff::Table {
                value: vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            },
            prior_weights: vec![1.0; n_theta],
            policy_override: None,
            continuous_theta: None,
            metadata: Default::default(),
        })
        .unwrap()
    };
    let root_of = |scn: &Scenario<f64>| -> f64 {
        let results = find_mixed_bne_binary(scn, default_tol()).unwrap();
        let mixed: Vec<_> = results.iter().filter(|r| r.flags.mixed).collect();
        assert_eq!(mixed.len(), 1);
        mixed[0].sigma.prob(1)
    };
    // Coarse grid, 2x refinement (keeping old points), 4x refinement.
    let coarse = root_of(&build(13));
    let fine = root_of(&build(25));
    let finest = root_of(&build(49));
    let sigma_star = 2.0 / 3.0;
    // The minimizer moves one theta step per (step / 0.3) of sigma, so grid
    // refinement displaces the root by at most that bound.
    let theta_step = 0.6 / 12.0;
    let displacement_bound = theta_step / 0.3;
    assert!(
        (fine - coarse).abs() < displacement_bound,
        "2x refinement moved sigma* by {} (bound {displacement_bound})",
        (fine - coarse).abs()
    );
    assert!(
        (finest - sigma_star).abs() < (coarse - sigma_star).abs() + 1e-12,
        "refinement drifts toward the continuous root"
    );
    assert!((finest - sigma_star).abs() < displacement_bound / 2.0);
}

#[test]
fn stronger_overconfidence_adds_an_interior_game_equilibrium() {
    // With alpha = 6 the symmetric system has interior solutions at
    // z^2 - 5z + 5 = 0, z = 1 + a: efforts 0.382 and 2.618. On a grid the
    // stable interior equilibrium shows up as a symmetric mixture over
    // adjacent efforts straddling the root; the corner at 3 remains.
    let mut params = BTreeMap::new();
    params.insert("alpha".to_string(), 6.0);
    params.insert("n_actions".to_string(), 121.0);
    params.insert("n_theta".to_string(), 41.0);
    let game = make_builtin::<f64>("effort-game", &params)
        .unwrap()
        .as_game()
        .cloned()
        .unwrap();
    let results = find_game_bne(&game, 0.2, 1e-9, 5_000);
    assert!(results.len() >= 2, "corner and interior fixed points");
    let root_lo = (5.0 - 5.0f64.sqrt()) / 2.0 - 1.0;
    let step = 3.0 / 120.0;
    let mut saw_corner = false;
    let mut saw_interior = false;
    for r in &results {
        let means: Vec<f64> = r
            .profile
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.probs()
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| p * game.player(i).actions.scalar(j))
                    .sum()
            })
            .collect();
        assert!((means[0] - means[1]).abs() < 1e-9, "symmetric profiles");
        assert!(r.residuals.iter().all(|&x| x < 1e-9));
        if (means[0] - 3.0).abs() < 1e-12 {
            saw_corner = true;
        }
        if (means[0] - root_lo).abs() < 2.0 * step {
            saw_interior = true;
        }
    }
    assert!(saw_corner, "the corner equilibrium persists");
    assert!(saw_interior, "an interior fixed point straddles the FOC root");
}

#[test]
fn zero_payoff_games_make_every_action_optimal() {
    let actions = crate::model::ActionSet::native(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    let player = crate::model::PlayerModel {
        grid: crate::model::ParameterGrid::new(vec![vec![0.5]], None).unwrap(),
        actions: actions.clone(),
        outcomes: crate::model::OutcomeSpace::Finite {
            values: vec![0.0, 1.0],
        },
        true_kernel: crate::model::GameTrueKernel::Categorical {
            prob: vec![vec![0.5, 0.5]; 9],
        },
        family: crate::model::GameKernelFamily::Categorical {
            prob: vec![vec![vec![0.5, 0.5]; 9]],
        },
        payoff: Payoff::Table {
            value: vec![vec![0.0, 0.0]; 3],
        },
        prior_weights: vec![1.0],
    };
    let game = crate::model::GameScenario::new(
        "zero-game".into(),
        vec![player.clone(), player],
        Default::default(),
    )
    .unwrap();
    let br = crate::decision::game_best_reply(
        &game,
        0,
        &crate::model::Belief::uniform(1),
        &[MixedAction::uniform(3)],
        1e-9,
    );
    assert_eq!(br.optimal, vec![0, 1, 2]);
}
