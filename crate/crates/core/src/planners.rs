//! From objectives to behavior: enumerate plans and form the softmax plan
//! posterior, select actions from it, and compute exact soft policies on
//! MDPs by backward recursion.
//!
//! The plan posterior weights plan `pi` by `ln p(pi) - total(pi)`, where
//! `total` is the horizon-summed stage cost of the chosen functional. The
//! backward recursions score an action on the state it lands in,
//! `Q_t(s,a) = sum_s' p(s'|s,a) (g(s',a) + V_{t+1}(s'))` with
//! `V_t(s) = ln sum_a p(a|s) exp(Q_t(s,a))`, which makes the recursion the
//! exact minimizer of the same horizon objective the plan set is scored
//! by (verified against enumeration in the acceptance suite).

use thiserror::Error;

use crate::model::{DiscretePomdp, EncodingKind, ValueEncoding};
use crate::objectives::{
    total_over_horizon, FunctionalKind, ObjectiveBreakdown, ObjectiveError, Plan, Policy,
};
use crate::prob::{
    entropy, kl_divergence, log_sum_exp, softmax, Categorical, LogWeights, ProbError,
};
use crate::rollout::{information_gain, predict_observations, RolloutError};
use crate::scalar::Scalar;

/// Default ceiling on the number of enumerated plans.
pub const DEFAULT_ENUM_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("plan enumeration needs {required} plans, over the cap of {cap}")]
    CapExceeded { required: u128, cap: usize },
    #[error("plan prior has dimension {found}, plan set has {expected}")]
    PriorDimension { expected: usize, found: usize },
    #[error("backward recursion requires an MDP (identity observations)")]
    NotMdp,
    #[error("backward recursion requires a {expected} encoding, got {found}")]
    EncodingMismatch {
        expected: EncodingKind,
        found: EncodingKind,
    },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
}

/// All `num_actions^horizon` plans in lexicographic order.
pub fn enumerate_plans(
    num_actions: usize,
    horizon: usize,
    cap: usize,
) -> Result<Vec<Plan>, PlannerError> {
    assert!(num_actions >= 1 && horizon >= 1);
    let required = (num_actions as u128)
        .checked_pow(horizon as u32)
        .unwrap_or(u128::MAX);
    if required > cap as u128 {
        return Err(PlannerError::CapExceeded { required, cap });
    }
    let mut plans = Vec::with_capacity(required as usize);
    let mut current = vec![0usize; horizon];
    loop {
        plans.push(Plan::new(current.clone())?);
        // lexicographic increment, least significant digit last
        let mut pos = horizon;
        loop {
            if pos == 0 {
                return Ok(plans);
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < num_actions {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// Softmax posterior over an enumerated plan set.
#[derive(Debug, Clone)]
pub struct PlanPosterior<F: Scalar> {
    plans: Vec<Plan>,
    totals: Vec<ObjectiveBreakdown<F>>,
    log_weights: LogWeights<F>,
    probs: Categorical<F>,
    log_partition: F,
}

impl<F: Scalar> PlanPosterior<F> {
    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    /// Horizon-summed breakdown of each plan, aligned with `plans`.
    pub fn totals(&self) -> &[ObjectiveBreakdown<F>] {
        &self.totals
    }

    pub fn log_weights(&self) -> &LogWeights<F> {
        &self.log_weights
    }

    pub fn probs(&self) -> &Categorical<F> {
        &self.probs
    }

    pub fn log_partition(&self) -> F {
        self.log_partition
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    /// Index of the most probable plan, ties broken toward the
    /// lexicographically smallest.
    pub fn map_plan_index(&self) -> usize {
        let mut best = 0;
        for i in 1..self.probs.dim() {
            if self.probs.prob(i) > self.probs.prob(best) {
                best = i;
            }
        }
        best
    }

    /// Entropy of the plan posterior in nats.
    pub fn entropy(&self) -> F {
        entropy(&self.probs)
    }
}

/// Enumerate the model's plan space and score it with the given plan
/// functional: `q*(pi) = softmax(ln p(pi) - total(pi))`.
pub fn plan_posterior<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    kind: FunctionalKind,
    plan_prior: &Categorical<F>,
    cap: usize,
) -> Result<PlanPosterior<F>, PlannerError> {
    let plans = enumerate_plans(model.num_actions(), model.horizon(), cap)?;
    if plan_prior.dim() != plans.len() {
        return Err(PlannerError::PriorDimension {
            expected: plans.len(),
            found: plan_prior.dim(),
        });
    }
    let mut totals = Vec::with_capacity(plans.len());
    let mut weights = Vec::with_capacity(plans.len());
    for (i, plan) in plans.iter().enumerate() {
        let breakdown = total_over_horizon(model, encoding, kind, plan)?;
        weights.push(plan_prior.prob(i).ln() - breakdown.total);
        totals.push(breakdown);
    }
    let log_weights = LogWeights::new(weights)?;
    let probs = softmax(&log_weights)?;
    let log_partition = log_sum_exp(&log_weights)?;
    Ok(PlanPosterior {
        plans,
        totals,
        log_weights,
        probs,
        log_partition,
    })
}

/// [`plan_posterior`] under a uniform plan prior.
pub fn plan_posterior_uniform<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    kind: FunctionalKind,
    cap: usize,
) -> Result<PlanPosterior<F>, PlannerError> {
    let count = {
        let required = (model.num_actions() as u128)
            .checked_pow(model.horizon() as u32)
            .unwrap_or(u128::MAX);
        if required > cap as u128 {
            return Err(PlannerError::CapExceeded { required, cap });
        }
        required as usize
    };
    let prior = Categorical::uniform(count)?;
    plan_posterior(model, encoding, kind, &prior, cap)
}

/// How to turn a plan posterior into a single action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// Argmax of the first-action marginal `sum_{pi: pi_1 = a} q(pi)`.
    FirstActionMarginal,
    /// First action of the most probable plan.
    MapPlan,
}

impl std::str::FromStr for SelectMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "marginal" => Ok(SelectMode::FirstActionMarginal),
            "map" => Ok(SelectMode::MapPlan),
            other => Err(format!("unknown select mode `{other}` (expected marginal or map)")),
        }
    }
}

/// Deterministic action selection; all ties break toward the lowest index.
pub fn select_action<F: Scalar>(posterior: &PlanPosterior<F>, mode: SelectMode) -> usize {
    match mode {
        SelectMode::MapPlan => posterior.plans()[posterior.map_plan_index()].first_action(),
        SelectMode::FirstActionMarginal => {
            let num_actions = posterior
                .plans()
                .iter()
                .map(Plan::first_action)
                .max()
                .unwrap_or(0)
                + 1;
            let mut marginal = vec![F::zero(); num_actions];
            for (i, plan) in posterior.plans().iter().enumerate() {
                marginal[plan.first_action()] += posterior.probs().prob(i);
            }
            let mut best = 0;
            for (a, &m) in marginal.iter().enumerate() {
                if m > marginal[best] {
                    best = a;
                }
            }
            best
        }
    }
}

/// Variational objective of an arbitrary plan distribution `q` against the
/// prior and per-plan totals:
/// `B(q) = sum_pi q(pi) (ln q(pi) - ln p(pi) + total(pi))`.
///
/// Minimized exactly by the softmax posterior, where it equals minus the
/// log-partition value.
pub fn plan_distribution_bound<F: Scalar>(
    q: &Categorical<F>,
    prior: &Categorical<F>,
    totals: &[F],
) -> F {
    let mut acc = F::zero();
    for (i, qi) in q.support() {
        acc += qi * (qi.ln() - prior.prob(i).ln() + totals[i]);
    }
    acc
}

fn require_mdp<F: Scalar>(model: &DiscretePomdp<F>) -> Result<(), PlannerError> {
    if model.is_mdp() {
        Ok(())
    } else {
        Err(PlannerError::NotMdp)
    }
}

/// Backward soft recursion over landing-state potentials `g(s', a)`.
fn backward_soft<F: Scalar>(
    model: &DiscretePomdp<F>,
    potential: impl Fn(usize, usize) -> F,
) -> Result<Policy<F>, PlannerError> {
    let horizon = model.horizon();
    let num_states = model.num_states();
    let num_actions = model.num_actions();
    let mut value_next = vec![F::zero(); num_states];
    let mut steps = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let mut rows = Vec::with_capacity(num_states);
        let mut value = Vec::with_capacity(num_states);
        for s in 0..num_states {
            let mut weights = Vec::with_capacity(num_actions);
            for a in 0..num_actions {
                let mut q_sa = F::zero();
                for (succ, p) in model.transition_row(a, s).support() {
                    q_sa += p * (potential(succ, a) + value_next[succ]);
                }
                let prior = model.action_prior_row(s).prob(a);
                weights.push(prior.ln() + q_sa);
            }
            let weights = LogWeights::new(weights)?;
            rows.push(softmax(&weights)?);
            value.push(log_sum_exp(&weights)?);
        }
        steps[t] = rows;
        value_next = value;
    }
    Ok(Policy::time_varying(steps))
}

/// Exact finite-horizon soft policy for the optimality-likelihood
/// objective on an MDP: `q_t(a|s) ~ p(a|s) exp(Q_t(s,a))` with the stage
/// reward collected on the landing state.
pub fn soft_policy_backward<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
) -> Result<Policy<F>, PlannerError> {
    require_mdp(model)?;
    let loglik = match encoding {
        ValueEncoding::OptimalityLikelihood { loglik } => loglik,
        other => {
            return Err(PlannerError::EncodingMismatch {
                expected: EncodingKind::OptimalityLikelihood,
                found: other.kind(),
            })
        }
    };
    backward_soft(model, |succ, a| loglik[succ][a])
}

/// Backward recursion for the preference-prior objective on an MDP: the
/// landing potential is `ln p~(s')`, the per-step KL-control form of the
/// expected free energy.
pub fn aif_policy_backward<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
) -> Result<Policy<F>, PlannerError> {
    require_mdp(model)?;
    let prior = match encoding {
        ValueEncoding::BiasedObservationPrior { prior } => prior,
        other => {
            return Err(PlannerError::EncodingMismatch {
                expected: EncodingKind::BiasedObservationPrior,
                found: other.kind(),
            })
        }
    };
    backward_soft(model, |succ, _| prior.prob(succ).ln())
}

/// Horizon value of a time-indexed policy under the optimality-likelihood
/// objective, paired stage-for-stage with the plan functional: the action
/// chosen at step `t` is scored on its landing marginal, the action
/// divergence on the marginal it is chosen from. A plan replayed as a
/// policy yields exactly the plan's stage costs plus its action
/// divergences.
pub fn cai_policy_value<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    policy: &Policy<F>,
) -> Result<ObjectiveBreakdown<F>, PlannerError> {
    let loglik = match encoding {
        ValueEncoding::OptimalityLikelihood { loglik } => loglik,
        other => {
            return Err(PlannerError::EncodingMismatch {
                expected: EncodingKind::OptimalityLikelihood,
                found: other.kind(),
            })
        }
    };
    let mut extrinsic = F::zero();
    let mut action_divergence = F::zero();
    let mut ambiguity = F::zero();
    let mut marginal = model.initial_belief().clone();
    for t in 0..model.horizon() {
        let rows = policy.step(t);
        if rows.len() != model.num_states() {
            return Err(ObjectiveError::PolicyShape {
                expected: model.num_states(),
                found: rows.len(),
            }
            .into());
        }
        let mut landing = vec![F::zero(); model.num_states()];
        for (s, w) in marginal.support() {
            action_divergence += w * kl_divergence(&rows[s], model.action_prior_row(s))?;
            for (a, pa) in rows[s].support() {
                for (succ, p) in model.transition_row(a, s).support() {
                    let mass = w * pa * p;
                    extrinsic = extrinsic - mass * loglik[succ][a];
                    landing[succ] += mass;
                }
            }
        }
        marginal = Categorical::new(landing)?;
        for (s, w) in marginal.support() {
            ambiguity += w * entropy(model.observation_row(s));
        }
    }
    let mut out = ObjectiveBreakdown::zeroed(FunctionalKind::CaiBound);
    out.accumulate(&{
        let mut stage = ObjectiveBreakdown::zeroed(FunctionalKind::CaiBound);
        stage.extrinsic = extrinsic;
        stage.action_divergence = action_divergence;
        stage.ambiguity = ambiguity;
        stage.total = extrinsic + action_divergence + ambiguity;
        stage
    });
    Ok(out)
}

/// Horizon value of a time-indexed policy under the preference-prior
/// objective: preference extrinsic and information gain on each landing
/// marginal, action divergence on each choice marginal.
pub fn aif_policy_value<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    policy: &Policy<F>,
) -> Result<ObjectiveBreakdown<F>, PlannerError> {
    let preference = match encoding {
        ValueEncoding::BiasedObservationPrior { prior } => prior,
        other => {
            return Err(PlannerError::EncodingMismatch {
                expected: EncodingKind::BiasedObservationPrior,
                found: other.kind(),
            })
        }
    };
    let mut extrinsic = F::zero();
    let mut action_divergence = F::zero();
    let mut intrinsic = F::zero();
    let mut marginal = model.initial_belief().clone();
    for t in 0..model.horizon() {
        let rows = policy.step(t);
        if rows.len() != model.num_states() {
            return Err(ObjectiveError::PolicyShape {
                expected: model.num_states(),
                found: rows.len(),
            }
            .into());
        }
        let mut landing = vec![F::zero(); model.num_states()];
        for (s, w) in marginal.support() {
            action_divergence += w * kl_divergence(&rows[s], model.action_prior_row(s))?;
            for (a, pa) in rows[s].support() {
                for (succ, p) in model.transition_row(a, s).support() {
                    landing[succ] += w * pa * p;
                }
            }
        }
        marginal = Categorical::new(landing)?;
        let predictive = predict_observations(model, &marginal)?;
        for (o, q_o) in predictive.support() {
            let p = preference.prob(o);
            if p <= F::zero() {
                return Err(ObjectiveError::PreferenceSupport { observation: o }.into());
            }
            extrinsic = extrinsic - q_o * p.ln();
        }
        intrinsic += information_gain(model, &marginal)?;
    }
    let mut stage = ObjectiveBreakdown::zeroed(FunctionalKind::AifPolicy);
    stage.extrinsic = extrinsic;
    stage.action_divergence = action_divergence;
    stage.intrinsic = intrinsic;
    stage.total = extrinsic + action_divergence - intrinsic;
    Ok(stage)
}
