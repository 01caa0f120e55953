//! Exact belief propagation under a plan.
//!
//! Planning never conditions on observations: the plan-conditioned
//! marginals `q(s_t|pi)` are the priors produced by pushing the initial
//! belief through the transition tensor, one plan action at a time. The
//! belief stored at step `t` is the distribution *after* the plan's action
//! at `t` has been applied (the pre-observation prior for that step).
//!
//! Bayes conditioning and the expected information gain over states live
//! here too; the information gain is exactly the mutual information
//! `I(S;O)` under the joint `b(s) p(o|s)`.

use thiserror::Error;

use crate::model::DiscretePomdp;
use crate::objectives::Plan;
use crate::prob::{kl_divergence, Categorical, ProbError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("{what} index {index} out of range (< {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("belief has dimension {found}, model has {expected} states")]
    BeliefDimension { expected: usize, found: usize },
    #[error("cannot condition on observation {observation}: predictive probability is zero")]
    ZeroProbabilityObservation { observation: usize },
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Plan-conditioned state marginals, one per plan step.
#[derive(Debug, Clone)]
pub struct BeliefTrajectory<F: Scalar> {
    plan: Plan,
    beliefs: Vec<Categorical<F>>,
}

impl<F: Scalar> BeliefTrajectory<F> {
    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// Belief after the plan's action at step `t` (0-based).
    pub fn belief(&self, t: usize) -> &Categorical<F> {
        &self.beliefs[t]
    }

    pub fn beliefs(&self) -> &[Categorical<F>] {
        &self.beliefs
    }
}

fn check_belief<F: Scalar>(
    model: &DiscretePomdp<F>,
    belief: &Categorical<F>,
) -> Result<(), RolloutError> {
    if belief.dim() != model.num_states() {
        return Err(RolloutError::BeliefDimension {
            expected: model.num_states(),
            found: belief.dim(),
        });
    }
    Ok(())
}

/// One exact transition step: `b'(s') = sum_s b(s) p(s'|s,a)`.
pub fn step_belief<F: Scalar>(
    model: &DiscretePomdp<F>,
    belief: &Categorical<F>,
    action: usize,
) -> Result<Categorical<F>, RolloutError> {
    check_belief(model, belief)?;
    if action >= model.num_actions() {
        return Err(RolloutError::IndexOutOfRange {
            what: "action",
            index: action,
            bound: model.num_actions(),
        });
    }
    let mut next = vec![F::zero(); model.num_states()];
    for (s, b) in belief.support() {
        for (succ, p) in model.transition_row(action, s).support() {
            next[succ] += b * p;
        }
    }
    Ok(Categorical::new(next)?)
}

/// Push `initial` through the plan, recording the belief after every action.
pub fn predict_states<F: Scalar>(
    model: &DiscretePomdp<F>,
    plan: &Plan,
    initial: &Categorical<F>,
) -> Result<BeliefTrajectory<F>, RolloutError> {
    check_belief(model, initial)?;
    let mut beliefs = Vec::with_capacity(plan.len());
    let mut current = initial.clone();
    for &action in plan.actions() {
        current = step_belief(model, &current, action)?;
        beliefs.push(current.clone());
    }
    Ok(BeliefTrajectory {
        plan: plan.clone(),
        beliefs,
    })
}

/// Predictive observation distribution `q(o) = sum_s p(o|s) b(s)`.
pub fn predict_observations<F: Scalar>(
    model: &DiscretePomdp<F>,
    belief: &Categorical<F>,
) -> Result<Categorical<F>, RolloutError> {
    check_belief(model, belief)?;
    let mut obs = vec![F::zero(); model.num_observations()];
    for (s, b) in belief.support() {
        for (o, p) in model.observation_row(s).support() {
            obs[o] += b * p;
        }
    }
    Ok(Categorical::new(obs)?)
}

/// Exact Bayes rule: posterior over states proportional to `p(o|s) b(s)`.
///
/// Conditioning on an observation with zero predictive probability is an
/// error, not a silent renormalization.
pub fn posterior_state<F: Scalar>(
    model: &DiscretePomdp<F>,
    belief: &Categorical<F>,
    observation: usize,
) -> Result<Categorical<F>, RolloutError> {
    check_belief(model, belief)?;
    if observation >= model.num_observations() {
        return Err(RolloutError::IndexOutOfRange {
            what: "observation",
            index: observation,
            bound: model.num_observations(),
        });
    }
    let weights: Vec<F> = (0..model.num_states())
        .map(|s| belief.prob(s) * model.observation_row(s).prob(observation))
        .collect();
    let mass: F = weights.iter().copied().sum();
    if mass <= F::zero() {
        return Err(RolloutError::ZeroProbabilityObservation { observation });
    }
    Ok(Categorical::new(
        weights.into_iter().map(|w| w / mass).collect(),
    )?)
}

/// Expected information gain over states:
/// `E_{q(o)}[ KL(q(s|o) || b(s)) ]`, summed over observations with positive
/// predictive probability. Equals the mutual information `I(S;O)` of the
/// joint `b(s) p(o|s)`.
pub fn information_gain<F: Scalar>(
    model: &DiscretePomdp<F>,
    belief: &Categorical<F>,
) -> Result<F, RolloutError> {
    let predictive = predict_observations(model, belief)?;
    let mut gain = F::zero();
    for (o, q_o) in predictive.support() {
        let posterior = posterior_state(model, belief, o)?;
        gain += q_o * kl_divergence(&posterior, belief)?;
    }
    Ok(gain)
}
