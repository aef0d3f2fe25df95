use super::*;

pub(crate) fn coin_parts(prior: Vec<f64>) -> ScenarioParts<f64> {
    // Two-point Bernoulli grid {0.25, 0.75}, truth 0.5, one dummy action.
    ScenarioParts {
        id: "coin-test".into(),
        grid: ParameterGrid::new(vec![vec![0.25], vec![0.75]], None).unwrap(),
        actions: ActionSet::native(vec![vec![0.0]]).unwrap(),
        outcomes: OutcomeSpace::Finite {
            values: vec![0.0, 1.0],
        },
        true_kernel: TrueKernel::Categorical {
            prob: vec![vec![0.5, 0.5]],
        },
        family: KernelFamily::Categorical {
            prob: vec![vec![vec![0.75, 0.25]], vec![vec![0.25, 0.75]]],
        },
        payoff: Payoff::Table {
            value: vec![vec![0.0, 0.0]],
        },
        prior_weights: prior,
        policy_override: None,
        continuous_theta: None,
        metadata: Metadata::new(),
    }
}

#[test]
fn coin_scenario_validates() {
    let scn = Scenario::new(coin_parts(vec![1.0, 1.0])).unwrap();
    assert_eq!(scn.n_params(), 2);
    assert_eq!(scn.n_actions(), 1);
}

#[test]
fn zero_prior_weight_is_a_support_violation() {
    let err = Scenario::new(coin_parts(vec![1.0, 0.0])).unwrap_err();
    assert!(matches!(err, ModelError::SupportViolation(_)));
}

#[test]
fn unnormalized_kernel_row_is_rejected() {
    let mut parts = coin_parts(vec![1.0, 1.0]);
    parts.family = KernelFamily::Categorical {
        prob: vec![vec![vec![0.73, 0.25]], vec![vec![0.25, 0.75]]],
    };
    let err = Scenario::new(parts).unwrap_err();
    assert!(matches!(err, ModelError::NormalizationError(_)));
}

#[test]
fn subjective_zero_on_supported_outcome_is_rejected() {
    let mut parts = coin_parts(vec![1.0, 1.0]);
    parts.family = KernelFamily::Categorical {
        prob: vec![vec![vec![1.0, 0.0]], vec![vec![0.25, 0.75]]],
    };
    let err = Scenario::new(parts).unwrap_err();
    assert!(matches!(err, ModelError::SupportViolation(_)));
}

#[test]
fn empty_grid_is_rejected() {
    assert!(matches!(
        ParameterGrid::<f64>::new(vec![], None),
        Err(ModelError::EmptyGrid)
    ));
}

#[test]
fn duplicate_grid_points_are_rejected() {
    let err = ParameterGrid::new(vec![vec![1.0], vec![1.0]], None).unwrap_err();
    assert!(matches!(err, ModelError::Duplicate(_)));
}

#[test]
fn gaussian_line_rejects_table_payoffs() {
    let mut parts = coin_parts(vec![1.0, 1.0]);
    parts.outcomes = OutcomeSpace::GaussianLine;
    parts.family = KernelFamily::GaussianMean {
        mean: vec![vec![0.25], vec![0.75]],
    };
    parts.true_kernel = TrueKernel::GaussianMean { mean: vec![0.5] };
    let err = Scenario::new(parts).unwrap_err();
    assert!(matches!(err, ModelError::Invalid(_)));
}

#[test]
fn belief_from_equal_weights_is_uniform() {
    let b = Belief::<f64>::from_weights(&[1.0, 1.0]).unwrap();
    let p = b.probs();
    assert!((p[0] - 0.5).abs() < 1e-15);
    assert!((p[1] - 0.5).abs() < 1e-15);
}

#[test]
fn belief_from_degenerate_weights_is_a_point_mass() {
    let b = Belief::<f64>::from_weights(&[2.0, 0.0, 0.0]).unwrap();
    let p = b.probs();
    assert_eq!(p[0], 1.0);
    assert_eq!(p[1], 0.0);
    assert_eq!(p[2], 0.0);
}

#[test]
fn belief_from_tiny_weights_does_not_underflow() {
    // Oracle: direct normalization at a moderate scale gives (0.5, 0.5);
    // the log-space path must agree at 1e-300.
    let direct = {
        let w = [2.0e-3, 2.0e-3];
        let s: f64 = w.iter().sum();
        [w[0] / s, w[1] / s]
    };
    let b = Belief::<f64>::from_weights(&[1.0e-300, 1.0e-300]).unwrap();
    let p = b.probs();
    assert!((p[0] - direct[0]).abs() < 1e-15);
    assert!((p[1] - direct[1]).abs() < 1e-15);
}

#[test]
fn belief_rejects_all_zero_and_length_mismatch_surfaces_elsewhere() {
    assert!(matches!(
        Belief::<f64>::from_weights(&[0.0, 0.0]),
        Err(ModelError::AllZero)
    ));
}

#[test]
fn belief_scale_invariance_in_log_space() {
    let w = [0.3f64, 1.7, 0.01];
    let a = Belief::from_weights(&w).unwrap();
    let scaled: Vec<f64> = w.iter().map(|x| x * 7.3e40).collect();
    let b = Belief::from_weights(&scaled).unwrap();
    for (x, y) in a.log_probs().iter().zip(b.log_probs().iter()) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn mixed_action_normalizes_and_reports_support() {
    let m = MixedAction::<f64>::new(vec![0.5, 0.5, 0.0]).unwrap();
    assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(m.support(1e-12), vec![0, 1]);
}

#[test]
fn spec_roundtrip_is_a_fixed_point() {
    let scn = Scenario::new(coin_parts(vec![1.0, 3.0])).unwrap();
    let spec1 = scn.to_spec();
    let json1 = spec1.to_canonical_json();
    let rebuilt = build_scenario::<f64>(&ScenarioSpec::from_json(&json1).unwrap()).unwrap();
    let json2 = rebuilt.to_spec().to_canonical_json();
    assert_eq!(json1, json2);
}

#[test]
fn build_scenario_is_deterministic() {
    let spec = Scenario::new(coin_parts(vec![1.0, 1.0])).unwrap().to_spec();
    let a = build_scenario::<f64>(&spec).unwrap().to_spec();
    let b = build_scenario::<f64>(&spec).unwrap().to_spec();
    assert_eq!(a.to_canonical_json(), b.to_canonical_json());
}

#[test]
fn joint_index_roundtrips() {
    // Two players with 3 and 4 actions; check row-major indexing.
    let actions3 = ActionSet::native(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    let actions4 = ActionSet::native(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let player = |acts: &ActionSet<f64>, n_joint: usize| PlayerModel {
        grid: ParameterGrid::new(vec![vec![1.0]], None).unwrap(),
        actions: acts.clone(),
        outcomes: OutcomeSpace::GaussianLine,
        true_kernel: GameTrueKernel::GaussianMean {
            mean: vec![0.0; n_joint],
        },
        family: GameKernelFamily::GaussianAffine {
            offset: vec![0.0; n_joint],
            factor: vec![1.0; n_joint],
        },
        payoff: Payoff::AffineInOutcome {
            intercept: vec![0.0; acts.len()],
            slope: vec![1.0; acts.len()],
        },
        prior_weights: vec![1.0],
    };
    let game = GameScenario::new(
        "g".into(),
        vec![player(&actions3, 12), player(&actions4, 12)],
        Metadata::new(),
    )
    .unwrap();
    assert_eq!(game.n_joint(), 12);
    for j in 0..12 {
        assert_eq!(game.joint_index(&game.profile_of(j)), j);
    }
    assert_eq!(game.joint_index(&[1, 2]), 6);
}

#[test]
fn scalar_generic_construction_works_at_f32() {
    let grid = ParameterGrid::<f32>::new(vec![vec![0.25], vec![0.75]], None).unwrap();
    assert_eq!(grid.len(), 2);
    let b = Belief::<f32>::from_weights(&[1.0, 1.0]).unwrap();
    assert!((b.probs()[0] - 0.5).abs() < 1e-6);
}
