//! Parameterized constructors for the worked examples.
//!
//! Each builtin validates under [`Scenario::new`] and carries its closed-form
//! reference values in the metadata map, keyed by descriptive names.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    ActionSet, ContinuousTheta, GameKernelFamily, GameScenario, GameTrueKernel, KernelFamily,
    Metadata, ModelError, OutcomeSpace, ParameterGrid, Payoff, PlayerModel, PolicyOverride,
    Scenario, ScenarioParts, TrueKernel,
};
use crate::Real;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type ScenarioResult<T> = Result<T, ScenarioError>;

/// A builtin is either a single-agent scenario or a game.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Built<S> {
    Single(Scenario<S>),
    Game(GameScenario<S>),
}

impl<S: Real> Built<S> {
    pub fn as_single(&self) -> Option<&Scenario<S>> {
        match self {
            Built::Single(s) => Some(s),
            Built::Game(_) => None,
        }
    }

    pub fn as_game(&self) -> Option<&GameScenario<S>> {
        match self {
            Built::Game(g) => Some(g),
            Built::Single(_) => None,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Built::Single(s) => s.id(),
            Built::Game(g) => g.id(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

#[derive(Debug, Clone)]
pub struct BuiltinDescriptor {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: Vec<ParamSpec>,
    pub references: Vec<(&'static str, f64)>,
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "coin",
    "misspecified-bernoulli",
    "overconfidence",
    "adverse-selection",
    "monopolist",
    "effort-game",
    "slow-learning",
];

pub fn list_builtins() -> Vec<BuiltinDescriptor> {
    BUILTIN_NAMES.iter().map(|n| describe(n).unwrap()).collect()
}

pub fn describe(name: &str) -> ScenarioResult<BuiltinDescriptor> {
    let d = match name {
        "coin" => BuiltinDescriptor {
            name: "coin",
            summary: "Bernoulli outcomes with truth 0.5 and the two-point model {0.25, 0.75}: \
                      tied KL minimizers, so the posterior log-odds follow a zero-drift random walk",
            params: vec![
                p("truth", 0.5, "true success probability"),
                p("theta_lo", 0.25, "low model success probability"),
                p("theta_hi", 0.75, "high model success probability"),
            ],
            references: vec![("log_odds_step", (3.0f64).ln())],
        },
        "misspecified-bernoulli" => BuiltinDescriptor {
            name: "misspecified-bernoulli",
            summary: "Bernoulli outcomes with truth 0.5 on the grid {0.25, 0.3, 0.6, 0.9}: \
                      a unique KL projection at 0.6, so the posterior concentrates there",
            params: vec![p("truth", 0.5, "true success probability")],
            references: vec![("pseudo_true_theta", 0.6)],
        },
        "overconfidence" => BuiltinDescriptor {
            name: "overconfidence",
            summary: "Effort choice with Gaussian output (alpha* + a) theta* perceived as \
                      (alpha + a) theta, alpha > alpha*: the agent underestimates returns and \
                      settles below the truth-based effort",
            params: vec![
                p("alpha", 2.0, "perceived ability (not learned)"),
                p("alpha_star", 1.0, "true ability"),
                p("theta_star", 1.0, "true return parameter"),
                p("theta_bar", 2.0, "upper bound of the parameter grid"),
                p("n_theta", 201.0, "parameter grid size on [0, theta_bar]"),
                p("action_hi", 3.0, "upper bound of the effort grid"),
                p("n_actions", 301.0, "effort grid size on [0, action_hi]"),
                p(
                    "strict",
                    1.0,
                    "when 1, reject alpha <= alpha* (overconfidence mode)",
                ),
            ],
            references: vec![("truth_benchmark_effort", 1.0)],
        },
        "adverse-selection" => BuiltinDescriptor {
            name: "adverse-selection",
            summary: "A buyer posts a price, ignoring that traded values are selected: the \
                      perceived value distribution is action-invariant while the true one \
                      conditions on the seller accepting",
            params: vec![
                p(
                    "mesh_denominator",
                    16.0,
                    "simplex grid denominator for the value-distribution parameter",
                ),
                p("include_zero_price", 1.0, "when 1, include a no-trade price"),
            ],
            references: vec![
                ("cond_mean_low", 1.375),
                ("cond_mean_mid", 1.6875),
                ("cond_mean_high", 2.25),
            ],
        },
        "monopolist" => BuiltinDescriptor {
            name: "monopolist",
            summary: "Prices {2, 10} with true mean sales (34, 2) and the perceived demand \
                      line alpha - beta a on [33,40]x[3,3.5]: no pure equilibrium, one mixed \
                      equilibrium with sigma(10) = 1/36",
            params: vec![
                p("n_alpha", 15.0, "alpha grid size on [33, 40]"),
                p("n_beta", 7.0, "beta grid size on [3, 3.5]"),
            ],
            references: vec![
                ("sigma_star", 1.0 / 36.0),
                ("theta_m_alpha", 40.0),
                ("theta_m_beta", 10.0 / 3.0),
                ("di_entry_time_bound", 35.0),
            ],
        },
        "effort-game" => BuiltinDescriptor {
            name: "effort-game",
            summary: "Two players choose efforts with interacting Gaussian output \
                      (alpha + a1 + a2 + a1 a2) theta and quadratic costs; both perceive \
                      ability alpha above the true alpha*",
            params: vec![
                p("alpha", 2.0, "perceived ability"),
                p("alpha_star", 1.0, "true ability"),
                p("theta_star", 1.0, "true return parameter"),
                p("theta_bar", 2.0, "upper bound of the parameter grid"),
                p("n_theta", 201.0, "parameter grid size on [0, theta_bar]"),
                p("action_hi", 3.0, "upper bound of the effort grid"),
                p("n_actions", 400.0, "effort grid size on [0, action_hi]"),
            ],
            references: vec![],
        },
        "slow-learning" => BuiltinDescriptor {
            name: "slow-learning",
            summary: "Two-point parameter grid with signal probability a theta + beta, the \
                      base rate beta underestimated: near point beliefs the prescribed effort \
                      vanishes, so learning slows and the wrong point belief can be stable",
            params: vec![
                p("theta1", 1.0, "low parameter value"),
                p("theta2", 2.0, "high parameter value"),
                p("beta", 0.2, "perceived base rate"),
                p("beta_star", 0.3, "true base rate"),
                p("n_actions", 501.0, "effort grid size on [0, a_bar]"),
                p(
                    "kappa_frac",
                    0.5,
                    "effort scale as a fraction of a_bar in the override policy",
                ),
                p("truth_is_theta2", 0.0, "when 1, the true parameter is theta2"),
            ],
            references: vec![("a_bar", 0.1), ("kappa", 0.05)],
        },
        other => return Err(ScenarioError::UnknownBuiltin(other.to_string())),
    };
    Ok(d)
}

fn p(name: &'static str, default: f64, doc: &'static str) -> ParamSpec {
    ParamSpec { name, default, doc }
}

/// Resolves a parameter map against the builtin's schema, rejecting unknown
/// keys so typos cannot silently fall back to defaults.
fn resolve_params(
    descriptor: &BuiltinDescriptor,
    params: &BTreeMap<String, f64>,
) -> ScenarioResult<BTreeMap<&'static str, f64>> {
    let mut resolved: BTreeMap<&'static str, f64> = descriptor
        .params
        .iter()
        .map(|p| (p.name, p.default))
        .collect();
    for (k, v) in params {
        let known = descriptor.params.iter().find(|p| p.name == k);
        match known {
            Some(spec) => {
                resolved.insert(spec.name, *v);
            }
            None => return Err(ScenarioError::UnknownParam(k.clone())),
        }
    }
    Ok(resolved)
}

/// Builds a named builtin with the given parameter overrides.
pub fn make_builtin<S: Real>(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> ScenarioResult<Built<S>> {
    let descriptor = describe(name)?;
    let pm = resolve_params(&descriptor, params)?;
    match name {
        "coin" => Ok(Built::Single(make_coin(&pm)?)),
        "misspecified-bernoulli" => Ok(Built::Single(make_misspecified_bernoulli(&pm)?)),
        "overconfidence" => Ok(Built::Single(make_overconfidence(&pm)?)),
        "adverse-selection" => Ok(Built::Single(make_adverse_selection(&pm)?)),
        "monopolist" => Ok(Built::Single(make_monopolist(&pm)?)),
        "effort-game" => Ok(Built::Game(make_effort_game(&pm)?)),
        "slow-learning" => Ok(Built::Single(make_slow_learning(&pm)?)),
        _ => unreachable!("describe already validated the name"),
    }
}

fn check_prob(name: &str, x: f64) -> ScenarioResult<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(ScenarioError::ParamOutOfRange(format!(
            "{name} = {x} must lie strictly inside (0, 1)"
        )));
    }
    Ok(())
}

fn as_count(name: &str, x: f64, min: usize) -> ScenarioResult<usize> {
    if x.fract() != 0.0 || x < min as f64 || x > 1.0e7 {
        return Err(ScenarioError::ParamOutOfRange(format!(
            "{name} = {x} must be an integer >= {min}"
        )));
    }
    Ok(x as usize)
}

fn bernoulli_scenario<S: Real>(
    id: &str,
    thetas: &[f64],
    truth: f64,
    references: &[(&str, f64)],
) -> ScenarioResult<Scenario<S>> {
    let grid = ParameterGrid::new(
        thetas.iter().map(|&t| vec![S::from_f64_lossy(t)]).collect(),
        Some(thetas.iter().map(|t| format!("{t}")).collect()),
    )?;
    let f = S::from_f64_lossy;
    let family = KernelFamily::Categorical {
        prob: thetas
            .iter()
            .map(|&t| vec![vec![f(1.0 - t), f(t)]])
            .collect(),
    };
    let mut metadata = Metadata::new();
    for (k, v) in references {
        metadata.insert((*k).to_string(), *v);
    }
    metadata.insert("truth".into(), truth);
    Ok(Scenario::new(ScenarioParts {
        id: id.to_string(),
        grid,
        actions: ActionSet::native(vec![vec![S::zero()]])?,
        outcomes: OutcomeSpace::Finite {
            values: vec![S::zero(), S::one()],
        },
        true_kernel: TrueKernel::Categorical {
            prob: vec![vec![f(1.0 - truth), f(truth)]],
        },
        family,
        payoff: Payoff::Table {
            value: vec![vec![S::zero(), S::zero()]],
        },
        prior_weights: vec![S::one(); thetas.len()],
        policy_override: None,
        continuous_theta: None,
        metadata,
    })?)
}

fn make_coin<S: Real>(pm: &BTreeMap<&'static str, f64>) -> ScenarioResult<Scenario<S>> {
    let truth = pm["truth"];
    let lo = pm["theta_lo"];
    let hi = pm["theta_hi"];
    check_prob("truth", truth)?;
    check_prob("theta_lo", lo)?;
    check_prob("theta_hi", hi)?;
    if !(lo < hi) {
        return Err(ScenarioError::ParamOutOfRange(
            "theta_lo must be below theta_hi".into(),
        ));
    }
    // Log-odds shift of one success observation in favor of theta_hi.
    let step = (hi / lo).ln();
    bernoulli_scenario("coin", &[lo, hi], truth, &[("log_odds_step", step)])
}

fn make_misspecified_bernoulli<S: Real>(
    pm: &BTreeMap<&'static str, f64>,
) -> ScenarioResult<Scenario<S>> {
    let truth = pm["truth"];
    check_prob("truth", truth)?;
    bernoulli_scenario(
        "misspecified-bernoulli",
        &[0.25, 0.3, 0.6, 0.9],
        truth,
        &[("pseudo_true_theta", 0.6)],
    )
}

fn make_overconfidence<S: Real>(pm: &BTreeMap<&'static str, f64>) -> ScenarioResult<Scenario<S>> {
    let alpha = pm["alpha"];
    let alpha_star = pm["alpha_star"];
    let theta_star = pm["theta_star"];
    let theta_bar = pm["theta_bar"];
    let strict = pm["strict"] != 0.0;
    if strict && alpha <= alpha_star {
        return Err(ScenarioError::ParamOutOfRange(format!(
            "alpha = {alpha} must exceed alpha_star = {alpha_star} (set strict=0 to allow)"
        )));
    }
    if alpha_star <= 0.0 || alpha <= 0.0 || theta_star <= 0.0 {
        return Err(ScenarioError::ParamOutOfRange(
            "alpha, alpha_star, theta_star must be positive".into(),
        ));
    }
    if theta_bar < theta_star {
        return Err(ScenarioError::ParamOutOfRange(format!(
            "theta_bar = {theta_bar} must be at least theta_star = {theta_star}"
        )));
    }
    let n_theta = as_count("n_theta", pm["n_theta"], 2)?;
    let n_actions = as_count("n_actions", pm["n_actions"], 2)?;
    let action_hi = pm["action_hi"];
    if action_hi <= 0.0 {
        return Err(ScenarioError::ParamOutOfRange("action_hi must be positive".into()));
    }

    let f = S::from_f64_lossy;
    let actions = ActionSet::discretized_interval(S::zero(), f(action_hi), n_actions)?;
    let action_vals: Vec<S> = (0..n_actions).map(|i| actions.scalar(i)).collect();
    let thetas: Vec<f64> = (0..n_theta)
        .map(|i| theta_bar * i as f64 / (n_theta - 1) as f64)
        .collect();
    let grid = ParameterGrid::new(thetas.iter().map(|&t| vec![f(t)]).collect(), None)?;
    let mean: Vec<Vec<S>> = thetas
        .iter()
        .map(|&t| action_vals.iter().map(|&a| (f(alpha) + a) * f(t)).collect())
        .collect();
    let true_mean: Vec<S> = action_vals
        .iter()
        .map(|&a| (f(alpha_star) + a) * f(theta_star))
        .collect();
    let intercept: Vec<S> = action_vals.iter().map(|&a| -(a * a) / f(2.0)).collect();
    let factors: Vec<S> = action_vals.iter().map(|&a| f(alpha) + a).collect();

    // Closed form for the equilibrium effort with quadratic costs:
    // a^2 + (alpha - theta*) a - theta* alpha* = 0.
    let b = alpha - theta_star;
    let root = 0.5 * (-b + (b * b + 4.0 * theta_star * alpha_star).sqrt());
    let mut metadata = Metadata::new();
    metadata.insert("alpha".into(), alpha);
    metadata.insert("alpha_star".into(), alpha_star);
    metadata.insert("theta_star".into(), theta_star);
    metadata.insert("equilibrium_effort_closed_form".into(), root);
    metadata.insert("truth_benchmark_effort".into(), theta_star);

    Ok(Scenario::new(ScenarioParts {
        id: "overconfidence".into(),
        grid,
        actions,
        outcomes: OutcomeSpace::GaussianLine,
        true_kernel: TrueKernel::GaussianMean { mean: true_mean },
        family: KernelFamily::GaussianMean { mean },
        payoff: Payoff::AffineInOutcome {
            intercept,
            slope: vec![S::one(); n_actions],
        },
        prior_weights: vec![S::one(); n_theta],
        policy_override: None,
        continuous_theta: Some(ContinuousTheta {
            offset: vec![S::zero(); n_actions],
            factors: vec![factors],
            lo: vec![S::zero()],
            hi: vec![f(theta_bar)],
        }),
        metadata,
    })?)
}

/// Joint distribution over (seller cost, buyer value): rows are costs
/// {0.5, 1.5, 2.5}, columns values {1, 2, 3}, entries in 32nds with a heavy
/// diagonal (positive dependence). All conditionals are dyadic, so they sit
/// exactly on the simplex grid with denominator 16.
const ADVERSE_JOINT_32: [[f64; 3]; 3] = [[6.0, 1.0, 1.0], [1.0, 6.0, 1.0], [1.0, 1.0, 14.0]];
const ADVERSE_COSTS: [f64; 3] = [0.5, 1.5, 2.5];
const ADVERSE_VALUES: [f64; 3] = [1.0, 2.0, 3.0];

fn make_adverse_selection<S: Real>(
    pm: &BTreeMap<&'static str, f64>,
) -> ScenarioResult<Scenario<S>> {
    let mesh = as_count("mesh_denominator", pm["mesh_denominator"], 3)?;
    let include_zero = pm["include_zero_price"] != 0.0;
    let f = S::from_f64_lossy;

    let mut prices: Vec<f64> = Vec::new();
    if include_zero {
        prices.push(0.0);
    }
    prices.extend_from_slice(&ADVERSE_COSTS);

    // Interior simplex grid: compositions of `mesh` into three positive parts.
    let mut points: Vec<Vec<S>> = Vec::new();
    for i in 1..(mesh - 1) {
        for j in 1..(mesh - i) {
            let k = mesh - i - j;
            if k >= 1 {
                points.push(vec![
                    f(i as f64 / mesh as f64),
                    f(j as f64 / mesh as f64),
                    f(k as f64 / mesh as f64),
                ]);
            }
        }
    }
    let grid = ParameterGrid::new(points, None)?;

    let joint_total: f64 = ADVERSE_JOINT_32.iter().flatten().sum();
    // Trade probability and conditional value pmf at each price.
    let trade_prob: Vec<f64> = prices
        .iter()
        .map(|&a| {
            ADVERSE_COSTS
                .iter()
                .enumerate()
                .filter(|(_, &s)| s <= a)
                .map(|(r, _)| ADVERSE_JOINT_32[r].iter().sum::<f64>())
                .sum::<f64>()
                / joint_total
        })
        .collect();
    let cond_pmf: Vec<Option<[f64; 3]>> = prices
        .iter()
        .map(|&a| {
            let mut col = [0.0; 3];
            let mut mass = 0.0;
            for (r, &s) in ADVERSE_COSTS.iter().enumerate() {
                if s <= a {
                    for (c, q) in ADVERSE_JOINT_32[r].iter().enumerate() {
                        col[c] += q;
                        mass += q;
                    }
                }
            }
            if mass > 0.0 {
                for c in col.iter_mut() {
                    *c /= mass;
                }
                Some(col)
            } else {
                None
            }
        })
        .collect();

    // Outcome 0 is "no trade" (sentinel value -1), outcomes 1..=3 the values.
    let outcome_values: Vec<S> = std::iter::once(f(-1.0))
        .chain(ADVERSE_VALUES.iter().map(|&v| f(v)))
        .collect();
    let true_prob: Vec<Vec<S>> = prices
        .iter()
        .enumerate()
        .map(|(ai, _)| {
            let fs = trade_prob[ai];
            let mut row = vec![f(1.0 - fs)];
            match &cond_pmf[ai] {
                Some(pmf) => row.extend(pmf.iter().map(|&q| f(fs * q))),
                None => row.extend(std::iter::repeat_n(S::zero(), 3)),
            }
            row
        })
        .collect();
    let prob: Vec<Vec<Vec<S>>> = (0..grid.len())
        .map(|t| {
            let theta: Vec<S> = grid.point(t).to_vec();
            prices
                .iter()
                .enumerate()
                .map(|(ai, _)| {
                    let fs = f(trade_prob[ai]);
                    let mut row = vec![S::one() - fs];
                    row.extend(theta.iter().map(|&q| fs * q));
                    row
                })
                .collect()
        })
        .collect();
    let payoff: Vec<Vec<S>> = prices
        .iter()
        .map(|&a| {
            let mut row = vec![S::zero()];
            row.extend(ADVERSE_VALUES.iter().map(|&v| f(v - a)));
            row
        })
        .collect();

    let mut metadata = Metadata::new();
    for (ai, &a) in prices.iter().enumerate() {
        metadata.insert(format!("trade_prob_at_{a}"), trade_prob[ai]);
        if let Some(pmf) = &cond_pmf[ai] {
            let mean: f64 = pmf.iter().zip(&ADVERSE_VALUES).map(|(&q, &v)| q * v).sum();
            metadata.insert(format!("cond_mean_at_{a}"), mean);
        }
    }

    let n_theta = grid.len();
    Ok(Scenario::new(ScenarioParts {
        id: "adverse-selection".into(),
        grid,
        actions: ActionSet::native(prices.iter().map(|&a| vec![f(a)]).collect())?,
        outcomes: OutcomeSpace::Finite {
            values: outcome_values,
        },
        true_kernel: TrueKernel::Categorical { prob: true_prob },
        family: KernelFamily::Categorical { prob },
        payoff: Payoff::Table { value: payoff },
        prior_weights: vec![S::one(); n_theta],
        policy_override: None,
        continuous_theta: None,
        metadata,
    })?)
}

fn make_monopolist<S: Real>(pm: &BTreeMap<&'static str, f64>) -> ScenarioResult<Scenario<S>> {
    let n_alpha = as_count("n_alpha", pm["n_alpha"], 2)?;
    let n_beta = as_count("n_beta", pm["n_beta"], 2)?;
    let f = S::from_f64_lossy;
    let (alpha_lo, alpha_hi) = (33.0, 40.0);
    let (beta_lo, beta_hi) = (3.0, 3.5);
    let prices = [2.0, 10.0];

    let alphas: Vec<f64> = (0..n_alpha)
        .map(|i| alpha_lo + (alpha_hi - alpha_lo) * i as f64 / (n_alpha - 1) as f64)
        .collect();
    let betas: Vec<f64> = (0..n_beta)
        .map(|i| beta_lo + (beta_hi - beta_lo) * i as f64 / (n_beta - 1) as f64)
        .collect();
    let mut points = Vec::with_capacity(n_alpha * n_beta);
    for &a in &alphas {
        for &b in &betas {
            points.push(vec![f(a), f(b)]);
        }
    }
    let grid = ParameterGrid::new(points, None)?;

    let mean: Vec<Vec<S>> = (0..grid.len())
        .map(|t| {
            let th = grid.point(t);
            prices.iter().map(|&a| th[0] - th[1] * f(a)).collect()
        })
        .collect();

    let mut metadata = Metadata::new();
    metadata.insert("sigma_star".into(), 1.0 / 36.0);
    metadata.insert("theta_m_alpha".into(), 40.0);
    metadata.insert("theta_m_beta".into(), 10.0 / 3.0);
    metadata.insert("di_entry_time_bound".into(), 35.0);

    let n_theta = grid.len();
    Ok(Scenario::new(ScenarioParts {
        id: "monopolist".into(),
        grid,
        actions: ActionSet::native(prices.iter().map(|&a| vec![f(a)]).collect())?,
        outcomes: OutcomeSpace::GaussianLine,
        true_kernel: TrueKernel::GaussianMean {
            mean: vec![f(34.0), f(2.0)],
        },
        family: KernelFamily::GaussianMean { mean },
        // Revenue a * y: affine in the outcome with slope a.
        payoff: Payoff::AffineInOutcome {
            intercept: vec![S::zero(); 2],
            slope: prices.iter().map(|&a| f(a)).collect(),
        },
        prior_weights: vec![S::one(); n_theta],
        policy_override: None,
        continuous_theta: Some(ContinuousTheta {
            offset: vec![S::zero(); 2],
            factors: vec![
                vec![S::one(); 2],
                prices.iter().map(|&a| f(-a)).collect(),
            ],
            lo: vec![f(alpha_lo), f(beta_lo)],
            hi: vec![f(alpha_hi), f(beta_hi)],
        }),
        metadata,
    })?)
}

fn make_effort_game<S: Real>(pm: &BTreeMap<&'static str, f64>) -> ScenarioResult<GameScenario<S>> {
    let alpha = pm["alpha"];
    let alpha_star = pm["alpha_star"];
    let theta_star = pm["theta_star"];
    let theta_bar = pm["theta_bar"];
    if alpha <= alpha_star || alpha_star <= 0.0 || theta_star <= 0.0 {
        return Err(ScenarioError::ParamOutOfRange(
            "need alpha > alpha_star > 0 and theta_star > 0".into(),
        ));
    }
    if theta_bar < theta_star {
        return Err(ScenarioError::ParamOutOfRange(
            "theta_bar must be at least theta_star".into(),
        ));
    }
    let n_theta = as_count("n_theta", pm["n_theta"], 2)?;
    let n_actions = as_count("n_actions", pm["n_actions"], 2)?;
    let action_hi = pm["action_hi"];
    if action_hi <= 0.0 {
        return Err(ScenarioError::ParamOutOfRange("action_hi must be positive".into()));
    }
    let f = S::from_f64_lossy;

    let actions = ActionSet::<S>::discretized_interval(S::zero(), f(action_hi), n_actions)?;
    let thetas: Vec<f64> = (0..n_theta)
        .map(|i| theta_bar * i as f64 / (n_theta - 1) as f64)
        .collect();
    let grid = ParameterGrid::new(thetas.iter().map(|&t| vec![f(t)]).collect(), None)?;

    // Joint index row-major over (a1, a2); the interaction term is
    // s(a) = a1 + a2 + a1 a2, identical for both players.
    let n_joint = n_actions * n_actions;
    let mut factor = Vec::with_capacity(n_joint);
    let mut true_mean = Vec::with_capacity(n_joint);
    for i in 0..n_actions {
        for j in 0..n_actions {
            let a1 = actions.scalar(i);
            let a2 = actions.scalar(j);
            let s = a1 + a2 + a1 * a2;
            factor.push(f(alpha) + s);
            true_mean.push((f(alpha_star) + s) * f(theta_star));
        }
    }

    let intercept: Vec<S> = (0..n_actions)
        .map(|i| {
            let a = actions.scalar(i);
            -(a * a) / f(2.0)
        })
        .collect();

    let player = PlayerModel {
        grid,
        actions,
        outcomes: OutcomeSpace::GaussianLine,
        true_kernel: GameTrueKernel::GaussianMean { mean: true_mean },
        family: GameKernelFamily::GaussianAffine {
            offset: vec![S::zero(); n_joint],
            factor,
        },
        payoff: Payoff::AffineInOutcome {
            intercept,
            slope: vec![S::one(); n_actions],
        },
        prior_weights: vec![S::one(); n_theta],
    };

    let mut metadata = Metadata::new();
    metadata.insert("alpha".into(), alpha);
    metadata.insert("alpha_star".into(), alpha_star);
    metadata.insert("theta_star".into(), theta_star);
    metadata.insert("action_hi".into(), action_hi);

    Ok(GameScenario::new(
        "effort-game".into(),
        vec![player.clone(), player],
        metadata,
    )?)
}

fn make_slow_learning<S: Real>(pm: &BTreeMap<&'static str, f64>) -> ScenarioResult<Scenario<S>> {
    let theta1 = pm["theta1"];
    let theta2 = pm["theta2"];
    let beta = pm["beta"];
    let beta_star = pm["beta_star"];
    if !(theta2 > theta1 && theta1 > 0.0) {
        return Err(ScenarioError::ParamOutOfRange(
            "need theta2 > theta1 > 0".into(),
        ));
    }
    if !(beta < beta_star) {
        return Err(ScenarioError::ParamOutOfRange(
            "need beta < beta_star (underestimated base rate)".into(),
        ));
    }
    check_prob("beta", beta)?;
    check_prob("beta_star", beta_star)?;
    let n_actions = as_count("n_actions", pm["n_actions"], 2)?;
    let kappa_frac = pm["kappa_frac"];
    if !(kappa_frac > 0.0 && kappa_frac <= 4.0) {
        return Err(ScenarioError::ParamOutOfRange(
            "kappa_frac must lie in (0, 4]".into(),
        ));
    }
    let truth = if pm["truth_is_theta2"] != 0.0 {
        theta2
    } else {
        theta1
    };

    // Efforts live on [0, a_bar]; on that range the high parameter fits the
    // true signal strictly better whenever effort is positive.
    let a_bar = (beta_star - beta) / (theta2 - theta1);
    let kappa = kappa_frac * a_bar;
    let max_p = a_bar * theta2 + beta.max(beta_star);
    if max_p >= 1.0 {
        return Err(ScenarioError::ParamOutOfRange(format!(
            "signal probability reaches {max_p} >= 1 on the effort range"
        )));
    }
    let f = S::from_f64_lossy;
    let actions = ActionSet::<S>::discretized_interval(S::zero(), f(a_bar), n_actions)?;
    let action_vals: Vec<f64> = (0..n_actions).map(|i| actions.scalar(i).to_f64_lossy()).collect();

    let grid = ParameterGrid::new(
        vec![vec![f(theta1)], vec![f(theta2)]],
        Some(vec![format!("{theta1}"), format!("{theta2}")]),
    )?;
    let prob: Vec<Vec<Vec<S>>> = [theta1, theta2]
        .iter()
        .map(|&t| {
            action_vals
                .iter()
                .map(|&a| {
                    let p1 = a * t + beta;
                    vec![f(1.0 - p1), f(p1)]
                })
                .collect()
        })
        .collect();
    let true_prob: Vec<Vec<S>> = action_vals
        .iter()
        .map(|&a| {
            let p1 = a * truth + beta_star;
            vec![f(1.0 - p1), f(p1)]
        })
        .collect();
    // The payoff is a placeholder (signal value minus quadratic effort cost);
    // play is driven by the override policy, not by maximization.
    let payoff: Vec<Vec<S>> = action_vals
        .iter()
        .map(|&a| vec![f(-a * a), f(1.0 - a * a)])
        .collect();

    let mut metadata = Metadata::new();
    metadata.insert("a_bar".into(), a_bar);
    metadata.insert("kappa".into(), kappa);
    metadata.insert("truth".into(), truth);
    metadata.insert("theta1".into(), theta1);
    metadata.insert("theta2".into(), theta2);

    Ok(Scenario::new(ScenarioParts {
        id: "slow-learning".into(),
        grid,
        actions,
        outcomes: OutcomeSpace::Finite {
            values: vec![S::zero(), S::one()],
        },
        true_kernel: TrueKernel::Categorical { prob: true_prob },
        family: KernelFamily::Categorical { prob },
        payoff: Payoff::Table { value: payoff },
        prior_weights: vec![S::one(), S::one()],
        policy_override: Some(PolicyOverride::BeliefProductEffort { scale: f(kappa) }),
        continuous_theta: None,
        metadata,
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{default_min_set_tol, kl_min_set};
    use crate::model::MixedAction;

    fn defaults() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn all_builtins_validate_at_defaults() {
        for name in BUILTIN_NAMES {
            make_builtin::<f64>(name, &defaults()).unwrap();
        }
    }

    #[test]
    fn builtins_validate_at_refined_resolutions() {
        for (name, knobs) in [
            ("overconfidence", vec![("n_theta", 201.0), ("n_actions", 301.0)]),
            ("monopolist", vec![("n_alpha", 15.0), ("n_beta", 7.0)]),
            ("slow-learning", vec![("n_actions", 501.0)]),
            ("adverse-selection", vec![("mesh_denominator", 16.0)]),
        ] {
            for refine in [1usize, 2, 4] {
                let mut params = defaults();
                for (k, v) in &knobs {
                    // Interval grids refine as n -> (n-1)*r + 1 to keep old points.
                    let refined = if *k == "mesh_denominator" {
                        v * refine as f64
                    } else {
                        (v - 1.0) * refine as f64 + 1.0
                    };
                    params.insert((*k).to_string(), refined);
                }
                make_builtin::<f64>(name, &params).unwrap_or_else(|e| {
                    panic!("{name} at {refine}x refinement failed: {e}")
                });
            }
        }
        let mut game = defaults();
        game.insert("n_actions".into(), 799.0);
        make_builtin::<f64>("effort-game", &game).unwrap();
    }

    #[test]
    fn unknown_builtin_and_params_are_rejected() {
        assert!(matches!(
            make_builtin::<f64>("nope", &defaults()),
            Err(ScenarioError::UnknownBuiltin(_))
        ));
        let mut params = defaults();
        params.insert("alhpa".into(), 2.0);
        assert!(matches!(
            make_builtin::<f64>("overconfidence", &params),
            Err(ScenarioError::UnknownParam(_))
        ));
    }

    #[test]
    fn overconfidence_rejects_underconfidence_in_strict_mode() {
        let mut params = defaults();
        params.insert("alpha".into(), 0.5);
        assert!(matches!(
            make_builtin::<f64>("overconfidence", &params),
            Err(ScenarioError::ParamOutOfRange(_))
        ));
    }

    #[test]
    fn overconfidence_bias_vanishes_when_alpha_matches() {
        // With alpha = alpha*, the KL minimizer is theta* for every action.
        let mut params = defaults();
        params.insert("alpha".into(), 1.0);
        params.insert("strict".into(), 0.0);
        let scn = make_builtin::<f64>("overconfidence", &params)
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        for a in [0usize, 150, 300] {
            let report = kl_min_set(
                &scn,
                &MixedAction::point_mass(scn.n_actions(), a),
                default_min_set_tol(),
            )
            .unwrap();
            assert_eq!(report.min_set.len(), 1);
            let theta = scn.grid().scalar(report.min_set[0]);
            assert!((theta - 1.0).abs() < 1e-12, "theta^m = {theta} at action {a}");
        }
    }

    #[test]
    fn monopolist_grid_contains_the_reference_minimizer() {
        let scn = make_builtin::<f64>("monopolist", &defaults())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let target = [40.0, 10.0 / 3.0];
        let idx = scn.grid().nearest(&target);
        let p = scn.grid().point(idx);
        assert!((p[0] - target[0]).abs() < 1e-12);
        assert!((p[1] - target[1]).abs() < 1e-12);
    }

    #[test]
    fn monopolist_kl_min_at_pure_low_price_is_the_corner() {
        let scn = make_builtin::<f64>("monopolist", &defaults())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let sigma = MixedAction::new(vec![1.0, 0.0]).unwrap();
        let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
        assert_eq!(report.min_set.len(), 1);
        let p = scn.grid().point(report.min_set[0]);
        assert!((p[0] - 40.0).abs() < 1e-12);
        assert!((p[1] - 3.0).abs() < 1e-12);
        assert!(report.min_value.abs() < 1e-12, "perfect fit at sigma = 0");
    }

    #[test]
    fn adverse_selection_minimizer_is_the_conditional_pmf() {
        let scn = make_builtin::<f64>("adverse-selection", &defaults())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        // Price 0.5 is action index 1 (index 0 is the zero price).
        let sigma = MixedAction::point_mass(scn.n_actions(), 1);
        let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
        assert_eq!(report.min_set.len(), 1);
        let theta = scn.grid().point(report.min_set[0]);
        assert_eq!(theta, &[0.75, 0.125, 0.125]);
        assert_eq!(report.min_value, 0.0);
    }

    #[test]
    fn monopolist_pure_high_price_minimizers_favor_the_low_price() {
        // At sigma = 1 the perfect-fit segment is alpha = 2 + 10 beta; on it
        // the revenue difference is 8 alpha - 96 beta = 16 - 16 beta < 0.
        let scn = make_builtin::<f64>("monopolist", &BTreeMap::new())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let sigma = MixedAction::new(vec![0.0, 1.0]).unwrap();
        let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
        // The default grid hits the perfect-fit segment at two points.
        assert!(!report.min_set.is_empty());
        assert!(report.min_value.abs() < 1e-18);
        for &idx in &report.min_set {
            let p = scn.grid().point(idx);
            assert!(
                (p[0] - (2.0 + 10.0 * p[1])).abs() < 1e-9,
                "minimizer {p:?} sits on the segment"
            );
            let revenue_diff = 8.0 * p[0] - 96.0 * p[1];
            assert!(revenue_diff < 0.0, "the low price dominates at sigma = 1");
        }
        // The continuous minimizer lands on the same segment.
        let theta = crate::inference::kl_min_box(&scn, &sigma).unwrap();
        assert!((theta[0] - (2.0 + 10.0 * theta[1])).abs() < 1e-9);
        assert!(8.0 * theta[0] - 96.0 * theta[1] < 0.0);
    }

    #[test]
    fn monopolist_minimizer_walks_the_boundary_as_sigma_grows() {
        // Past sigma = 1/16 the continuous minimizer sits at (40, 3.5); past
        // 1/4 it slides along beta = 3.5 with alpha = 41 - 4 sigma.
        let scn = make_builtin::<f64>("monopolist", &BTreeMap::new())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let minimizer = |s: f64| {
            let sigma = MixedAction::new(vec![1.0 - s, s]).unwrap();
            crate::inference::kl_min_box(&scn, &sigma).unwrap()
        };
        for s in [0.08, 0.15, 0.25] {
            let theta = minimizer(s);
            assert!((theta[0] - 40.0).abs() < 1e-9, "alpha at sigma = {s}");
            assert!((theta[1] - 3.5).abs() < 1e-9, "beta at sigma = {s}");
        }
        for s in [0.3, 0.5, 0.9] {
            let theta = minimizer(s);
            assert!(
                (theta[0] - (41.0 - 4.0 * s)).abs() < 1e-9,
                "alpha law at sigma = {s}: {}",
                theta[0]
            );
            assert!((theta[1] - 3.5).abs() < 1e-9);
        }
    }

    #[test]
    fn monopolist_reference_minimizer_attains_the_weighted_kl_minimum() {
        let scn = make_builtin::<f64>("monopolist", &BTreeMap::new())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let sigma = MixedAction::new(vec![35.0 / 36.0, 1.0 / 36.0]).unwrap();
        let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
        let reference = scn.grid().nearest(&[40.0, 10.0 / 3.0]);
        assert_eq!(report.min_set, vec![reference]);
    }

    #[test]
    fn overconfidence_minimizer_follows_the_closed_form_law() {
        // theta_m(delta_a) = theta* + theta* (alpha* - alpha) / (alpha + a).
        let scn = make_builtin::<f64>("overconfidence", &BTreeMap::new())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let theta_step = 2.0 / 200.0;
        for a_idx in [0usize, 75, 150, 225, 300] {
            let a = scn.actions().scalar(a_idx);
            let law = 1.0 + (1.0 - 2.0) / (2.0 + a);
            let sigma = MixedAction::point_mass(scn.n_actions(), a_idx);
            let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
            assert_eq!(report.min_set.len(), 1);
            let grid_theta = scn.grid().scalar(report.min_set[0]);
            assert!(
                (grid_theta - law).abs() <= theta_step / 2.0 + 1e-12,
                "grid minimizer {grid_theta} vs law {law} at effort {a}"
            );
            let cont = crate::inference::kl_min_box(&scn, &sigma).unwrap();
            assert!((cont[0] - law).abs() < 1e-12);
        }
    }

    #[test]
    fn overconfidence_equilibrium_converges_under_grid_refinement() {
        // Both discretizations displace the fixed point: the action step
        // directly, the parameter step through the minimizer snap (damped
        // by the fixed-point contraction, slope ~0.15 at the root).
        let root = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut errors = Vec::new();
        for refine in [1.0, 2.0, 4.0] {
            let n_actions = (301.0 - 1.0) * refine + 1.0;
            let n_theta = (201.0 - 1.0) * refine + 1.0;
            let mut params = BTreeMap::new();
            params.insert("n_actions".to_string(), n_actions);
            params.insert("n_theta".to_string(), n_theta);
            let scn = make_builtin::<f64>("overconfidence", &params)
                .unwrap()
                .as_single()
                .cloned()
                .unwrap();
            let eq = crate::equilibrium::find_pure_bne(&scn, 1e-9).unwrap();
            assert!(!eq.is_empty());
            let effort = scn.actions().scalar(eq[0].sigma.support(1e-12)[0]);
            let action_step = 3.0 / (n_actions - 1.0);
            let theta_step = 2.0 / (n_theta - 1.0);
            let bound = action_step / 2.0 + theta_step;
            let err = (effort - root).abs();
            assert!(err <= bound + 1e-12, "error {err} exceeds bound {bound}");
            errors.push(err);
        }
        assert!(
            errors[2] < errors[0],
            "refinement tightens the root: {errors:?}"
        );
    }

    #[test]
    fn slow_learning_probabilities_depend_on_effort() {
        let scn = make_builtin::<f64>("slow-learning", &defaults())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        let a_bar = scn.reference("a_bar").unwrap();
        assert!((a_bar - 0.1).abs() < 1e-15);
        let last = scn.n_actions() - 1;
        assert!((scn.actions().scalar(last) - a_bar).abs() < 1e-15);
    }

    #[test]
    fn coin_metadata_records_the_log_odds_step() {
        let scn = make_builtin::<f64>("coin", &defaults())
            .unwrap()
            .as_single()
            .cloned()
            .unwrap();
        assert!((scn.reference("log_odds_step").unwrap() - 3.0f64.ln()).abs() < 1e-12);
    }
}
