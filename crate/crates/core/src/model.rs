//! The agent's generative world model and the two rival ways of encoding
//! value into it.
//!
//! A [`DiscretePomdp`] holds categorical transition, observation, initial
//! and action-prior tables. Value enters either as an optimality
//! log-likelihood `ln p(O=1|s,a) = r(s,a) - max r` (reward-as-likelihood),
//! as a preference prior over observations `p~(o) = softmax(r(o))`, or as a
//! biased per-state observation likelihood `p~(o|s)` ([`ValueEncoding`]).
//!
//! Rewards are shifted by their maximum so `exp(r)` is a valid probability;
//! softmax and posterior outputs are shift-invariant, so nothing is lost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{softmax, Categorical, LogWeights, ProbError};
use crate::scalar::{real, to_f64, Scalar};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{table} has {found} entries, expected {expected}")]
    BadShape {
        table: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid {table} row {index}: {source}")]
    InvalidRow {
        table: &'static str,
        index: usize,
        source: ProbError,
    },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("reward table must populate state-action rewards, observation rewards, or both")]
    EmptyRewardTable,
    #[error("operation requires {0} rewards, which are not populated")]
    MissingRewards(&'static str),
    #[error("non-finite reward entry")]
    NonFiniteReward,
    #[error("biased likelihood target row {row} has no finite entry")]
    DegenerateLikelihoodRow { row: usize },
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Validated categorical POMDP: the generative model handed to every agent.
#[derive(Debug, Clone)]
pub struct DiscretePomdp<F: Scalar> {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    /// `transition[a][s]` is the distribution over successor states.
    transition: Vec<Vec<Categorical<F>>>,
    /// `observation[s]` is the distribution over observations.
    observation: Vec<Categorical<F>>,
    initial_belief: Categorical<F>,
    /// `action_prior[s]` is the prior over actions in state `s`.
    action_prior: Vec<Categorical<F>>,
    horizon: usize,
}

impl<F: Scalar> DiscretePomdp<F> {
    /// Validate raw tables into a model. Rows are renormalized under the
    /// probability-core tolerance policy; worse drift is rejected.
    ///
    /// The action prior defaults to uniform per state when absent.
    pub fn build(
        transition: Vec<Vec<Vec<F>>>,
        observation: Vec<Vec<F>>,
        initial_belief: Vec<F>,
        action_prior: Option<Vec<Vec<F>>>,
        horizon: usize,
    ) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        let num_actions = transition.len();
        let num_states = initial_belief.len();
        if num_actions == 0 {
            return Err(ModelError::BadShape {
                table: "transition",
                expected: 1,
                found: 0,
            });
        }
        if observation.len() != num_states {
            return Err(ModelError::BadShape {
                table: "observation",
                expected: num_states,
                found: observation.len(),
            });
        }
        let num_observations = observation.first().map_or(0, Vec::len);

        let mut transition_rows = Vec::with_capacity(num_actions);
        for (a, per_state) in transition.into_iter().enumerate() {
            if per_state.len() != num_states {
                return Err(ModelError::BadShape {
                    table: "transition",
                    expected: num_states,
                    found: per_state.len(),
                });
            }
            let mut rows = Vec::with_capacity(num_states);
            for (s, row) in per_state.into_iter().enumerate() {
                if row.len() != num_states {
                    return Err(ModelError::BadShape {
                        table: "transition",
                        expected: num_states,
                        found: row.len(),
                    });
                }
                rows.push(Categorical::new(row).map_err(|source| ModelError::InvalidRow {
                    table: "transition",
                    index: a * num_states + s,
                    source,
                })?);
            }
            transition_rows.push(rows);
        }

        let mut observation_rows = Vec::with_capacity(num_states);
        for (s, row) in observation.into_iter().enumerate() {
            if row.len() != num_observations {
                return Err(ModelError::BadShape {
                    table: "observation",
                    expected: num_observations,
                    found: row.len(),
                });
            }
            observation_rows.push(Categorical::new(row).map_err(|source| {
                ModelError::InvalidRow {
                    table: "observation",
                    index: s,
                    source,
                }
            })?);
        }

        let initial = Categorical::new(initial_belief).map_err(|source| ModelError::InvalidRow {
            table: "initial_belief",
            index: 0,
            source,
        })?;

        let action_prior = match action_prior {
            Some(rows) => {
                if rows.len() != num_states {
                    return Err(ModelError::BadShape {
                        table: "action_prior",
                        expected: num_states,
                        found: rows.len(),
                    });
                }
                let mut built = Vec::with_capacity(num_states);
                for (s, row) in rows.into_iter().enumerate() {
                    if row.len() != num_actions {
                        return Err(ModelError::BadShape {
                            table: "action_prior",
                            expected: num_actions,
                            found: row.len(),
                        });
                    }
                    built.push(Categorical::new(row).map_err(|source| ModelError::InvalidRow {
                        table: "action_prior",
                        index: s,
                        source,
                    })?);
                }
                built
            }
            None => vec![Categorical::uniform(num_actions)?; num_states],
        };

        Ok(Self {
            num_states,
            num_actions,
            num_observations,
            transition: transition_rows,
            observation: observation_rows,
            initial_belief: initial,
            action_prior,
            horizon,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Distribution over successors of `state` under `action`.
    pub fn transition_row(&self, action: usize, state: usize) -> &Categorical<F> {
        &self.transition[action][state]
    }

    /// Distribution over observations emitted from `state`.
    pub fn observation_row(&self, state: usize) -> &Categorical<F> {
        &self.observation[state]
    }

    pub fn initial_belief(&self) -> &Categorical<F> {
        &self.initial_belief
    }

    pub fn action_prior_row(&self, state: usize) -> &Categorical<F> {
        &self.action_prior[state]
    }

    pub fn with_initial_belief(mut self, belief: Categorical<F>) -> Result<Self, ModelError> {
        if belief.dim() != self.num_states {
            return Err(ModelError::BadShape {
                table: "initial_belief",
                expected: self.num_states,
                found: belief.dim(),
            });
        }
        self.initial_belief = belief;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// True iff observations reveal the state exactly: one observation per
    /// state and each row is the point mass on its own index.
    pub fn is_mdp(&self) -> bool {
        self.num_observations == self.num_states
            && self
                .observation
                .iter()
                .enumerate()
                .all(|(s, row)| row.prob(s) == F::one())
    }
}

/// Reward structure: state-action rewards, observation rewards, or both.
#[derive(Debug, Clone)]
pub struct RewardTable<F: Scalar> {
    state_action: Option<Vec<Vec<F>>>,
    observation: Option<Vec<F>>,
}

impl<F: Scalar> RewardTable<F> {
    pub fn new(
        state_action: Option<Vec<Vec<F>>>,
        observation: Option<Vec<F>>,
    ) -> Result<Self, ModelError> {
        if state_action.is_none() && observation.is_none() {
            return Err(ModelError::EmptyRewardTable);
        }
        if let Some(rows) = &state_action {
            if rows.is_empty() || rows.iter().any(Vec::is_empty) {
                return Err(ModelError::EmptyRewardTable);
            }
            if rows.iter().flatten().any(|r| !r.is_finite()) {
                return Err(ModelError::NonFiniteReward);
            }
        }
        if let Some(obs) = &observation {
            if obs.is_empty() {
                return Err(ModelError::EmptyRewardTable);
            }
            if obs.iter().any(|r| !r.is_finite()) {
                return Err(ModelError::NonFiniteReward);
            }
        }
        Ok(Self {
            state_action,
            observation,
        })
    }

    pub fn from_state_action(rows: Vec<Vec<F>>) -> Result<Self, ModelError> {
        Self::new(Some(rows), None)
    }

    pub fn from_observation(obs: Vec<F>) -> Result<Self, ModelError> {
        Self::new(None, Some(obs))
    }

    pub fn state_action(&self) -> Option<&Vec<Vec<F>>> {
        self.state_action.as_ref()
    }

    pub fn observation(&self) -> Option<&Vec<F>> {
        self.observation.as_ref()
    }

    /// State-action rewards, deriving them from observation rewards through
    /// the observation map when absent: `r(s,a) = sum_o p(o|s) r(o)`.
    pub fn state_action_view(&self, model: &DiscretePomdp<F>) -> Result<Vec<Vec<F>>, ModelError> {
        if let Some(rows) = &self.state_action {
            return Ok(rows.clone());
        }
        let obs = self
            .observation
            .as_ref()
            .ok_or(ModelError::MissingRewards("observation"))?;
        let mut rows = Vec::with_capacity(model.num_states());
        for s in 0..model.num_states() {
            let expected: F = model
                .observation_row(s)
                .probs()
                .iter()
                .zip(obs)
                .map(|(&p, &r)| p * r)
                .sum();
            rows.push(vec![expected; model.num_actions()]);
        }
        Ok(rows)
    }

    /// Same table with a constant added to every populated reward.
    pub fn shifted(&self, c: F) -> Self {
        Self {
            state_action: self.state_action.as_ref().map(|rows| {
                rows.iter()
                    .map(|r| r.iter().map(|&x| x + c).collect())
                    .collect()
            }),
            observation: self
                .observation
                .as_ref()
                .map(|obs| obs.iter().map(|&x| x + c).collect()),
        }
    }
}

/// Optimality log-likelihood matrix: rewards shifted by their global
/// maximum, so every entry is a valid log-probability and the best entry
/// is exactly 0.
pub fn optimality_loglik<F: Scalar>(rewards: &RewardTable<F>) -> Result<Vec<Vec<F>>, ModelError> {
    let rows = rewards
        .state_action()
        .ok_or(ModelError::MissingRewards("state-action"))?;
    let max = rows
        .iter()
        .flatten()
        .copied()
        .fold(F::neg_infinity(), F::max);
    Ok(rows
        .iter()
        .map(|row| row.iter().map(|&r| r - max).collect())
        .collect())
}

/// Preference prior over observations: `p~(o) = softmax(r(o))`.
///
/// The paper-level definition is proportional to `exp(r(o))`; normalizing
/// adds a constant to every objective and moves no argmin.
pub fn biased_observation_prior<F: Scalar>(
    rewards: &RewardTable<F>,
) -> Result<Categorical<F>, ModelError> {
    let obs = rewards
        .observation()
        .ok_or(ModelError::MissingRewards("observation"))?;
    Ok(softmax(&LogWeights::new(obs.clone())?)?)
}

/// Biased per-state observation likelihood: row-wise softmax of a target
/// log-likelihood matrix (states x observations).
pub fn biased_observation_likelihood<F: Scalar>(
    model: &DiscretePomdp<F>,
    target_loglik: &[Vec<F>],
) -> Result<Vec<Categorical<F>>, ModelError> {
    if target_loglik.len() != model.num_states() {
        return Err(ModelError::BadShape {
            table: "biased_likelihood",
            expected: model.num_states(),
            found: target_loglik.len(),
        });
    }
    let mut rows = Vec::with_capacity(target_loglik.len());
    for (row_index, row) in target_loglik.iter().enumerate() {
        if row.len() != model.num_observations() {
            return Err(ModelError::BadShape {
                table: "biased_likelihood",
                expected: model.num_observations(),
                found: row.len(),
            });
        }
        let weights =
            LogWeights::new(row.clone()).map_err(|_| ModelError::DegenerateLikelihoodRow {
                row: row_index,
            })?;
        rows.push(
            softmax(&weights).map_err(|_| ModelError::DegenerateLikelihoodRow { row: row_index })?,
        );
    }
    Ok(rows)
}

/// How value is written into the generative model.
///
/// Each variant carries exactly the payload its kind requires, which keeps
/// the "only the fields demanded by the kind are populated" invariant
/// structural.
#[derive(Debug, Clone)]
pub enum ValueEncoding<F: Scalar> {
    /// `ln p(O=1|s,a)`: shifted rewards, every entry <= 0.
    OptimalityLikelihood { loglik: Vec<Vec<F>> },
    /// Preference prior `p~(o)` over observations.
    BiasedObservationPrior { prior: Categorical<F> },
    /// Biased likelihood `p~(o|s)`, one categorical row per state.
    BiasedObservationLikelihood { rows: Vec<Categorical<F>> },
}

/// Discriminant of a [`ValueEncoding`], used in mismatch errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingKind {
    OptimalityLikelihood,
    BiasedObservationPrior,
    BiasedObservationLikelihood,
}

impl std::fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EncodingKind::OptimalityLikelihood => "optimality-likelihood",
            EncodingKind::BiasedObservationPrior => "biased-observation-prior",
            EncodingKind::BiasedObservationLikelihood => "biased-observation-likelihood",
        };
        f.write_str(name)
    }
}

impl<F: Scalar> ValueEncoding<F> {
    pub fn optimality_from(rewards: &RewardTable<F>) -> Result<Self, ModelError> {
        Ok(Self::OptimalityLikelihood {
            loglik: optimality_loglik(rewards)?,
        })
    }

    /// Optimality encoding from whichever reward table is populated,
    /// deriving state-action rewards through the observation map if needed.
    pub fn optimality_from_model(
        model: &DiscretePomdp<F>,
        rewards: &RewardTable<F>,
    ) -> Result<Self, ModelError> {
        let derived = RewardTable::from_state_action(rewards.state_action_view(model)?)?;
        Self::optimality_from(&derived)
    }

    pub fn biased_prior_from(rewards: &RewardTable<F>) -> Result<Self, ModelError> {
        Ok(Self::BiasedObservationPrior {
            prior: biased_observation_prior(rewards)?,
        })
    }

    pub fn biased_likelihood_from(
        model: &DiscretePomdp<F>,
        target_loglik: &[Vec<F>],
    ) -> Result<Self, ModelError> {
        Ok(Self::BiasedObservationLikelihood {
            rows: biased_observation_likelihood(model, target_loglik)?,
        })
    }

    pub fn kind(&self) -> EncodingKind {
        match self {
            ValueEncoding::OptimalityLikelihood { .. } => EncodingKind::OptimalityLikelihood,
            ValueEncoding::BiasedObservationPrior { .. } => EncodingKind::BiasedObservationPrior,
            ValueEncoding::BiasedObservationLikelihood { .. } => {
                EncodingKind::BiasedObservationLikelihood
            }
        }
    }
}

/// On-disk model description: plain nested arrays, validated on load.
///
/// This is the JSON document consumed by the CLI; [`PomdpSpec::build`]
/// converts it into a validated model at the requested scalar type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PomdpSpec {
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    pub horizon: usize,
    /// `transition[action][state][next_state]`, row-major.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `observation[state][obs]`, row-major.
    pub observation: Vec<Vec<f64>>,
    pub initial_belief: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_prior: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_sa: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_obs: Option<Vec<f64>>,
}

impl PomdpSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    /// Validate the declared dimensions and build the model plus any
    /// rewards the file carries.
    pub fn build<F: Scalar>(
        &self,
    ) -> Result<(DiscretePomdp<F>, Option<RewardTable<F>>), ModelError> {
        let expect = |table: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(ModelError::BadShape {
                    table,
                    expected,
                    found,
                })
            }
        };
        expect("transition", self.actions, self.transition.len())?;
        expect("observation", self.states, self.observation.len())?;
        for row in &self.observation {
            expect("observation", self.observations, row.len())?;
        }
        expect("initial_belief", self.states, self.initial_belief.len())?;

        let conv1 = |v: &[f64]| -> Vec<F> { v.iter().map(|&x| real(x)).collect() };
        let conv2 = |v: &[Vec<f64>]| -> Vec<Vec<F>> { v.iter().map(|r| conv1(r)).collect() };

        let model = DiscretePomdp::build(
            self.transition.iter().map(|per| conv2(per)).collect(),
            conv2(&self.observation),
            conv1(&self.initial_belief),
            self.action_prior.as_ref().map(|r| conv2(r)),
            self.horizon,
        )?;

        let rewards = match (&self.reward_sa, &self.reward_obs) {
            (None, None) => None,
            (sa, obs) => {
                if let Some(rows) = sa {
                    expect("reward_sa", self.states, rows.len())?;
                    for row in rows {
                        expect("reward_sa", self.actions, row.len())?;
                    }
                }
                if let Some(o) = obs {
                    expect("reward_obs", self.observations, o.len())?;
                }
                Some(RewardTable::new(
                    sa.as_ref().map(|r| conv2(r)),
                    obs.as_ref().map(|o| conv1(o)),
                )?)
            }
        };
        Ok((model, rewards))
    }
}

/// Round-trip a validated model (and optional rewards) back into the file
/// representation.
pub fn to_spec<F: Scalar>(model: &DiscretePomdp<F>, rewards: Option<&RewardTable<F>>) -> PomdpSpec {
    let row64 = |c: &Categorical<F>| c.probs().iter().map(|&p| to_f64(p)).collect::<Vec<_>>();
    PomdpSpec {
        states: model.num_states(),
        actions: model.num_actions(),
        observations: model.num_observations(),
        horizon: model.horizon(),
        transition: (0..model.num_actions())
            .map(|a| {
                (0..model.num_states())
                    .map(|s| row64(model.transition_row(a, s)))
                    .collect()
            })
            .collect(),
        observation: (0..model.num_states())
            .map(|s| row64(model.observation_row(s)))
            .collect(),
        initial_belief: row64(model.initial_belief()),
        action_prior: Some(
            (0..model.num_states())
                .map(|s| row64(model.action_prior_row(s)))
                .collect(),
        ),
        reward_sa: rewards.and_then(|r| {
            r.state_action().map(|rows| {
                rows.iter()
                    .map(|row| row.iter().map(|&x| to_f64(x)).collect())
                    .collect()
            })
        }),
        reward_obs: rewards
            .and_then(|r| r.observation().map(|o| o.iter().map(|&x| to_f64(x)).collect())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state_mdp() -> DiscretePomdp<f64> {
        DiscretePomdp::build(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]], // action 0: stay
                vec![vec![0.0, 1.0], vec![1.0, 0.0]], // action 1: swap
            ],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            None,
            2,
        )
        .unwrap()
    }

    #[test]
    fn builds_identity_observation_mdp() {
        let m = two_state_mdp();
        assert!(m.is_mdp());
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_actions(), 2);
        assert_eq!(m.num_observations(), 2);
    }

    #[test]
    fn rejects_unnormalized_transition_row() {
        let err = DiscretePomdp::build(
            vec![vec![vec![0.25, 0.25], vec![0.5, 0.5]]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            None,
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ModelError::InvalidRow {
                table: "transition",
                ..
            }
        ));
    }

    #[test]
    fn rejects_zero_horizon() {
        let err = DiscretePomdp::<f64>::build(
            vec![vec![vec![1.0]]],
            vec![vec![1.0]],
            vec![1.0],
            None,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ZeroHorizon));
    }

    #[test]
    fn uniform_observation_rows_are_not_an_mdp() {
        let m = DiscretePomdp::build(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            None,
            1,
        )
        .unwrap();
        assert!(!m.is_mdp());
    }

    #[test]
    fn optimality_loglik_shifts_by_max() {
        let r = RewardTable::from_state_action(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            optimality_loglik(&r).unwrap(),
            vec![vec![-3.0, -2.0], vec![-1.0, 0.0]]
        );
        let zero = RewardTable::from_state_action(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            optimality_loglik(&zero).unwrap(),
            vec![vec![0.0, 0.0], vec![0.0, 0.0]]
        );
    }

    #[test]
    fn optimality_loglik_is_shift_invariant_for_integer_rewards() {
        let base = vec![vec![1.0, -3.0], vec![2.0, 0.0]];
        let r = RewardTable::from_state_action(base.clone()).unwrap();
        for c in [-5.0, 2.0, 7.0] {
            let shifted = RewardTable::from_state_action(
                base.iter()
                    .map(|row| row.iter().map(|x| x + c).collect())
                    .collect(),
            )
            .unwrap();
            assert_eq!(
                optimality_loglik(&r).unwrap(),
                optimality_loglik(&shifted).unwrap()
            );
        }
    }

    #[test]
    fn optimality_loglik_has_unit_max_likelihood() {
        let r = RewardTable::from_state_action(vec![vec![-0.3_f64, 0.7], vec![0.1, 0.2]]).unwrap();
        let ll = optimality_loglik(&r).unwrap();
        let mut saw_one = false;
        for &v in ll.iter().flatten() {
            let p = v.exp();
            assert!(p > 0.0 && p <= 1.0);
            if p == 1.0 {
                saw_one = true;
            }
        }
        assert!(saw_one);
    }

    #[test]
    fn biased_prior_closed_forms() {
        let flat = RewardTable::from_observation(vec![0.0, 0.0]).unwrap();
        assert_eq!(
            biased_observation_prior(&flat).unwrap().probs(),
            &[0.5, 0.5]
        );

        let skewed = RewardTable::from_observation(vec![0.0, 3.0_f64.ln()]).unwrap();
        let p = biased_observation_prior(&skewed).unwrap();
        assert!((p.prob(0) - 0.25).abs() < 1e-15);
        assert!((p.prob(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn biased_prior_is_shift_invariant() {
        let obs = vec![0.3_f64, -0.8, 1.1, 0.05];
        let base =
            biased_observation_prior(&RewardTable::from_observation(obs.clone()).unwrap()).unwrap();
        let shifted = biased_observation_prior(
            &RewardTable::from_observation(obs.iter().map(|x| x + 7.3).collect()).unwrap(),
        )
        .unwrap();
        for (a, b) in base.probs().iter().zip(shifted.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_prior_matches_direct_exponentiation() {
        let obs = vec![0.2_f64, -0.4, 0.9, -1.3];
        let p =
            biased_observation_prior(&RewardTable::from_observation(obs.clone()).unwrap()).unwrap();
        let z: f64 = obs.iter().map(|r| r.exp()).sum();
        for (got, r) in p.probs().iter().zip(&obs) {
            assert!((got - r.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_likelihood_rows() {
        let m = two_state_mdp();
        let uniform = biased_observation_likelihood(&m, &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(uniform[0].probs(), &[0.5, 0.5]);

        let onehot = biased_observation_likelihood(
            &m,
            &[vec![0.0, f64::NEG_INFINITY], vec![f64::NEG_INFINITY, 0.0]],
        )
        .unwrap();
        assert_eq!(onehot[0].probs(), &[1.0, 0.0]);
        assert_eq!(onehot[1].probs(), &[0.0, 1.0]);

        let err = biased_observation_likelihood(
            &m,
            &[vec![f64::NEG_INFINITY, f64::NEG_INFINITY], vec![0.0, 0.0]],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DegenerateLikelihoodRow { row: 0 }));
    }

    #[test]
    fn reward_table_contract() {
        assert!(matches!(
            RewardTable::<f64>::new(None, None),
            Err(ModelError::EmptyRewardTable)
        ));
        assert!(matches!(
            RewardTable::from_observation(vec![f64::INFINITY]),
            Err(ModelError::NonFiniteReward)
        ));
    }

    #[test]
    fn observation_rewards_convert_through_observation_map() {
        let m = DiscretePomdp::<f64>::build(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.75, 0.25], vec![0.25, 0.75]],
            vec![0.5, 0.5],
            None,
            1,
        )
        .unwrap();
        let r = RewardTable::from_observation(vec![1.0, 0.0]).unwrap();
        let sa = r.state_action_view(&m).unwrap();
        assert!((sa[0][0] - 0.75).abs() < 1e-15);
        assert!((sa[1][0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip_and_validation() {
        let m = two_state_mdp();
        let rewards = RewardTable::from_state_action(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let spec = to_spec(&m, Some(&rewards));
        let parsed = PomdpSpec::from_json(&spec.to_json()).unwrap();
        let (rebuilt, re_rewards) = parsed.build::<f64>().unwrap();
        assert!(rebuilt.is_mdp());
        assert_eq!(rebuilt.horizon(), 2);
        assert_eq!(
            re_rewards.unwrap().state_action().unwrap(),
            rewards.state_action().unwrap()
        );

        let mut bad = spec.clone();
        bad.initial_belief = vec![1.0];
        assert!(matches!(
            bad.build::<f64>(),
            Err(ModelError::BadShape {
                table: "initial_belief",
                ..
            })
        ));
    }
}
