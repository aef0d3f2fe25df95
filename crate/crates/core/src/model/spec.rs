//! JSON spec documents for scenarios.
//!
//! The on-disk format is always `f64`; building converts into the requested
//! scalar type. Field order is fixed by struct declaration and maps use
//! `BTreeMap`, so re-serialization is deterministic, and numeric fields are
//! stored verbatim so export -> build -> export is byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    ActionProvenance, ActionSet, ContinuousTheta, GameKernelFamily, GameScenario, GameTrueKernel,
    KernelFamily, ModelError, ModelResult, OutcomeSpace, ParameterGrid, Payoff, PlayerModel,
    PolicyOverride, Scenario, ScenarioParts, TrueKernel,
};
use crate::Real;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub points: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "provenance", rename_all = "snake_case")]
pub enum ActionsSpec {
    NativeFinite {
        values: Vec<Vec<f64>>,
    },
    DiscretizedInterval {
        lo: f64,
        hi: f64,
        n: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutcomeSpec {
    Finite { values: Vec<f64> },
    GaussianLine,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `prob[theta][action][outcome]`
    Categorical { prob: Vec<Vec<Vec<f64>>> },
    /// `mean[theta][action]`
    GaussianMean { mean: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrueKernelSpec {
    Categorical { prob: Vec<Vec<f64>> },
    GaussianMean { mean: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PayoffSpec {
    Table {
        value: Vec<Vec<f64>>,
    },
    AffineInOutcome {
        intercept: Vec<f64>,
        slope: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyOverrideSpec {
    BeliefProductEffort { scale: f64 },
    FixedAction { index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContinuousThetaSpec {
    pub offset: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// The scenario spec file: one JSON document holding every primitive.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub grid: GridSpec,
    pub actions: ActionsSpec,
    pub outcomes: OutcomeSpec,
    pub kernel: KernelSpec,
    pub true_kernel: TrueKernelSpec,
    pub payoff: PayoffSpec,
    /// Prior weights over the grid (positive, not necessarily normalized).
    pub prior: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policy_override: Option<PolicyOverrideSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub continuous_theta: Option<ContinuousThetaSpec>,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> ModelResult<Self> {
        serde_json::from_str(text).map_err(|e| ModelError::Invalid(format!("bad spec JSON: {e}")))
    }

    /// Canonical pretty-printed JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serialization cannot fail");
        s.push('\n');
        s
    }
}

fn vec_to<S: Real>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::from_f64_lossy(x)).collect()
}

fn vec2_to<S: Real>(xs: &[Vec<f64>]) -> Vec<Vec<S>> {
    xs.iter().map(|row| vec_to(row)).collect()
}

fn vec3_to<S: Real>(xs: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<S>>> {
    xs.iter().map(|t| vec2_to(t)).collect()
}

fn vec_from<S: Real>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64_lossy()).collect()
}

fn vec2_from<S: Real>(xs: &[Vec<S>]) -> Vec<Vec<f64>> {
    xs.iter().map(|row| vec_from(row)).collect()
}

fn vec3_from<S: Real>(xs: &[Vec<Vec<S>>]) -> Vec<Vec<Vec<f64>>> {
    xs.iter().map(|t| vec2_from(t)).collect()
}

/// Validates a spec document and builds the scenario.
pub fn build_scenario<S: Real>(spec: &ScenarioSpec) -> ModelResult<Scenario<S>> {
    let grid = ParameterGrid::new(vec2_to(&spec.grid.points), spec.grid.labels.clone())?;
    let actions = match &spec.actions {
        ActionsSpec::NativeFinite { values } => ActionSet::native(vec2_to(values))?,
        ActionsSpec::DiscretizedInterval { lo, hi, n } => {
            ActionSet::discretized_interval(S::from_f64_lossy(*lo), S::from_f64_lossy(*hi), *n)?
        }
    };
    let outcomes = match &spec.outcomes {
        OutcomeSpec::Finite { values } => OutcomeSpace::Finite {
            values: vec_to(values),
        },
        OutcomeSpec::GaussianLine => OutcomeSpace::GaussianLine,
    };
    let family = match &spec.kernel {
        KernelSpec::Categorical { prob } => KernelFamily::Categorical {
            prob: vec3_to(prob),
        },
        KernelSpec::GaussianMean { mean } => KernelFamily::GaussianMean {
            mean: vec2_to(mean),
        },
    };
    let true_kernel = match &spec.true_kernel {
        TrueKernelSpec::Categorical { prob } => TrueKernel::Categorical {
            prob: vec2_to(prob),
        },
        TrueKernelSpec::GaussianMean { mean } => TrueKernel::GaussianMean {
            mean: vec_to(mean),
        },
    };
    let payoff = match &spec.payoff {
        PayoffSpec::Table { value } => Payoff::Table {
            value: vec2_to(value),
        },
        PayoffSpec::AffineInOutcome { intercept, slope } => Payoff::AffineInOutcome {
            intercept: vec_to(intercept),
            slope: vec_to(slope),
        },
    };
    let policy_override = spec.policy_override.as_ref().map(|p| match p {
        PolicyOverrideSpec::BeliefProductEffort { scale } => PolicyOverride::BeliefProductEffort {
            scale: S::from_f64_lossy(*scale),
        },
        PolicyOverrideSpec::FixedAction { index } => PolicyOverride::FixedAction { index: *index },
    });
    let continuous_theta = spec.continuous_theta.as_ref().map(|c| ContinuousTheta {
        offset: vec_to(&c.offset),
        factors: vec2_to(&c.factors),
        lo: vec_to(&c.lo),
        hi: vec_to(&c.hi),
    });
    Scenario::new(ScenarioParts {
        id: spec.id.clone(),
        grid,
        actions,
        outcomes,
        true_kernel,
        family,
        payoff,
        prior_weights: vec_to(&spec.prior),
        policy_override,
        continuous_theta,
        metadata: spec.metadata.clone(),
    })
}

impl<S: Real> Scenario<S> {
    pub fn to_spec(&self) -> ScenarioSpec {
        let actions = match self.actions().provenance() {
            ActionProvenance::NativeFinite => ActionsSpec::NativeFinite {
                values: vec2_from(self.actions().values()),
            },
            ActionProvenance::DiscretizedInterval { lo, hi, n } => {
                ActionsSpec::DiscretizedInterval {
                    lo: lo.to_f64_lossy(),
                    hi: hi.to_f64_lossy(),
                    n: *n,
                }
            }
        };
        ScenarioSpec {
            id: self.id().to_string(),
            grid: GridSpec {
                points: vec2_from(self.grid().points()),
                labels: Some(
                    (0..self.grid().len())
                        .map(|i| self.grid().label(i).to_string())
                        .collect(),
                ),
            },
            actions,
            outcomes: match self.outcomes() {
                OutcomeSpace::Finite { values } => OutcomeSpec::Finite {
                    values: vec_from(values),
                },
                OutcomeSpace::GaussianLine => OutcomeSpec::GaussianLine,
            },
            kernel: match self.family() {
                KernelFamily::Categorical { prob } => KernelSpec::Categorical {
                    prob: vec3_from(prob),
                },
                KernelFamily::GaussianMean { mean } => KernelSpec::GaussianMean {
                    mean: vec2_from(mean),
                },
            },
            true_kernel: match self.true_kernel() {
                TrueKernel::Categorical { prob } => TrueKernelSpec::Categorical {
                    prob: vec2_from(prob),
                },
                TrueKernel::GaussianMean { mean } => TrueKernelSpec::GaussianMean {
                    mean: vec_from(mean),
                },
            },
            payoff: match self.payoff() {
                Payoff::Table { value } => PayoffSpec::Table {
                    value: vec2_from(value),
                },
                Payoff::AffineInOutcome { intercept, slope } => PayoffSpec::AffineInOutcome {
                    intercept: vec_from(intercept),
                    slope: vec_from(slope),
                },
            },
            prior: vec_from(self.prior_weights()),
            policy_override: self.policy_override().map(|p| match p {
                PolicyOverride::BeliefProductEffort { scale } => {
                    PolicyOverrideSpec::BeliefProductEffort {
                        scale: scale.to_f64_lossy(),
                    }
                }
                PolicyOverride::FixedAction { index } => {
                    PolicyOverrideSpec::FixedAction { index: *index }
                }
            }),
            continuous_theta: self.continuous_theta().map(|c| ContinuousThetaSpec {
                offset: vec_from(&c.offset),
                factors: vec2_from(&c.factors),
                lo: vec_from(&c.lo),
                hi: vec_from(&c.hi),
            }),
            metadata: self.metadata().clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GameKernelSpec {
    Categorical {
        prob: Vec<Vec<Vec<f64>>>,
    },
    GaussianAffine {
        offset: Vec<f64>,
        factor: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlayerSpec {
    pub grid: GridSpec,
    pub actions: ActionsSpec,
    pub outcomes: OutcomeSpec,
    pub kernel: GameKernelSpec,
    pub true_kernel: TrueKernelSpec,
    pub payoff: PayoffSpec,
    pub prior: Vec<f64>,
}

/// Spec file for a complete-information game; kernels index joint actions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GameScenarioSpec {
    pub id: String,
    pub players: Vec<PlayerSpec>,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

impl GameScenarioSpec {
    pub fn from_json(text: &str) -> ModelResult<Self> {
        serde_json::from_str(text)
            .map_err(|e| ModelError::Invalid(format!("bad game spec JSON: {e}")))
    }

    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serialization cannot fail");
        s.push('\n');
        s
    }
}

pub fn build_game_scenario<S: Real>(spec: &GameScenarioSpec) -> ModelResult<GameScenario<S>> {
    let mut players = Vec::with_capacity(spec.players.len());
    for p in &spec.players {
        let actions = match &p.actions {
            ActionsSpec::NativeFinite { values } => ActionSet::native(vec2_to(values))?,
            ActionsSpec::DiscretizedInterval { lo, hi, n } => ActionSet::discretized_interval(
                S::from_f64_lossy(*lo),
                S::from_f64_lossy(*hi),
                *n,
            )?,
        };
        players.push(PlayerModel {
            grid: ParameterGrid::new(vec2_to(&p.grid.points), p.grid.labels.clone())?,
            actions,
            outcomes: match &p.outcomes {
                OutcomeSpec::Finite { values } => OutcomeSpace::Finite {
                    values: vec_to(values),
                },
                OutcomeSpec::GaussianLine => OutcomeSpace::GaussianLine,
            },
            true_kernel: match &p.true_kernel {
                TrueKernelSpec::Categorical { prob } => GameTrueKernel::Categorical {
                    prob: vec2_to(prob),
                },
                TrueKernelSpec::GaussianMean { mean } => GameTrueKernel::GaussianMean {
                    mean: vec_to(mean),
                },
            },
            family: match &p.kernel {
                GameKernelSpec::Categorical { prob } => GameKernelFamily::Categorical {
                    prob: vec3_to(prob),
                },
                GameKernelSpec::GaussianAffine { offset, factor } => {
                    GameKernelFamily::GaussianAffine {
                        offset: vec_to(offset),
                        factor: vec_to(factor),
                    }
                }
            },
            payoff: match &p.payoff {
                PayoffSpec::Table { value } => Payoff::Table {
                    value: vec2_to(value),
                },
                PayoffSpec::AffineInOutcome { intercept, slope } => Payoff::AffineInOutcome {
                    intercept: vec_to(intercept),
                    slope: vec_to(slope),
                },
            },
            prior_weights: vec_to(&p.prior),
        });
    }
    GameScenario::new(spec.id.clone(), players, spec.metadata.clone())
}

impl<S: Real> GameScenario<S> {
    pub fn to_spec(&self) -> GameScenarioSpec {
        GameScenarioSpec {
            id: self.id().to_string(),
            players: self
                .players()
                .iter()
                .map(|p| PlayerSpec {
                    grid: GridSpec {
                        points: vec2_from(p.grid.points()),
                        labels: Some(
                            (0..p.grid.len())
                                .map(|i| p.grid.label(i).to_string())
                                .collect(),
                        ),
                    },
                    actions: match p.actions.provenance() {
                        ActionProvenance::NativeFinite => ActionsSpec::NativeFinite {
                            values: vec2_from(p.actions.values()),
                        },
                        ActionProvenance::DiscretizedInterval { lo, hi, n } => {
                            ActionsSpec::DiscretizedInterval {
                                lo: lo.to_f64_lossy(),
                                hi: hi.to_f64_lossy(),
                                n: *n,
                            }
                        }
                    },
                    outcomes: match &p.outcomes {
                        OutcomeSpace::Finite { values } => OutcomeSpec::Finite {
                            values: vec_from(values),
                        },
                        OutcomeSpace::GaussianLine => OutcomeSpec::GaussianLine,
                    },
                    kernel: match &p.family {
                        GameKernelFamily::Categorical { prob } => GameKernelSpec::Categorical {
                            prob: vec3_from(prob),
                        },
                        GameKernelFamily::GaussianAffine { offset, factor } => {
                            GameKernelSpec::GaussianAffine {
                                offset: vec_from(offset),
                                factor: vec_from(factor),
                            }
                        }
                    },
                    true_kernel: match &p.true_kernel {
                        GameTrueKernel::Categorical { prob } => TrueKernelSpec::Categorical {
                            prob: vec2_from(prob),
                        },
                        GameTrueKernel::GaussianMean { mean } => TrueKernelSpec::GaussianMean {
                            mean: vec_from(mean),
                        },
                    },
                    payoff: match &p.payoff {
                        Payoff::Table { value } => PayoffSpec::Table {
                            value: vec2_from(value),
                        },
                        Payoff::AffineInOutcome { intercept, slope } => {
                            PayoffSpec::AffineInOutcome {
                                intercept: vec_from(intercept),
                                slope: vec_from(slope),
                            }
                        }
                    },
                    prior: vec_from(&p.prior_weights),
                })
                .collect(),
            metadata: self.metadata().clone(),
        }
    }
}
