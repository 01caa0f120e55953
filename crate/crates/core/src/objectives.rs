//! The objective functionals, each computed exactly and returned as a
//! per-term breakdown.
//!
//! Five functionals share one sign convention: every value is a loss in
//! nats to be minimized, and plan posteriors weight plans by
//! `exp(-total)`. The terms:
//!
//! * extrinsic value: expected negative log-probability of optimality or
//!   of preferred observations;
//! * state divergence: KL from the variational state marginal to the prior
//!   predictive (exactly zero when the marginal is pinned to it);
//! * action divergence: expected KL from the variational policy to the
//!   action prior;
//! * observation ambiguity: expected conditional entropy of observations
//!   given states (zero on MDPs);
//! * intrinsic value: expected information gain over states, stored as a
//!   nonnegative magnitude and *subtracted* in the total.
//!
//! Per-plan stage costs pair the belief after the plan's step-`t` action
//! with that same action, so a plan's final action is scored on the state
//! it lands in; that makes the plan set and the backward policy recursion
//! in `planners` minimize the same quantity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DiscretePomdp, EncodingKind, ModelError, ValueEncoding};
use crate::prob::{entropy, kl_divergence, Categorical, ProbError};
use crate::rollout::{
    information_gain, predict_observations, step_belief, BeliefTrajectory, RolloutError,
};
use crate::scalar::{to_f64, Scalar};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("functional requires a {expected} encoding, got {found}")]
    EncodingMismatch {
        expected: EncodingKind,
        found: EncodingKind,
    },
    #[error("stage {t} out of range for a length-{len} trajectory")]
    StageOutOfRange { t: usize, len: usize },
    #[error("plan is empty")]
    EmptyPlan,
    #[error("plan action {action} out of range (< {bound})")]
    PlanActionOutOfRange { action: usize, bound: usize },
    #[error("policy step has {found} state rows, model has {expected} states")]
    PolicyShape { expected: usize, found: usize },
    #[error("preference prior assigns zero mass to observation {observation}, which has positive predicted probability")]
    PreferenceSupport { observation: usize },
    #[error("biased likelihood assigns zero mass to observation {observation} in state {state}")]
    LikelihoodSupport { state: usize, observation: usize },
    #[error("functional kind {0} has no per-plan stage cost")]
    NotAPlanFunctional(FunctionalKind),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which functional a breakdown belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalKind {
    /// One-step variational bound with optimality likelihood (four terms).
    CaiBound,
    /// Per-plan stage cost of the bound (no action term).
    CaiPlanStage,
    /// Per-plan expected free energy stage (extrinsic minus information gain).
    EfePlanStage,
    /// Expected free energy in policy form (adds the action divergence).
    AifPolicy,
    /// One-step bound with a biased observation likelihood.
    LikelihoodAif,
}

impl FunctionalKind {
    pub fn uses_state_divergence(self) -> bool {
        matches!(
            self,
            FunctionalKind::CaiBound | FunctionalKind::CaiPlanStage | FunctionalKind::LikelihoodAif
        )
    }

    pub fn uses_action_divergence(self) -> bool {
        matches!(
            self,
            FunctionalKind::CaiBound | FunctionalKind::AifPolicy | FunctionalKind::LikelihoodAif
        )
    }

    pub fn uses_ambiguity(self) -> bool {
        matches!(self, FunctionalKind::CaiBound | FunctionalKind::CaiPlanStage)
    }

    pub fn uses_intrinsic(self) -> bool {
        matches!(self, FunctionalKind::EfePlanStage | FunctionalKind::AifPolicy)
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionalKind::CaiBound => "cai-bound",
            FunctionalKind::CaiPlanStage => "cai-plan",
            FunctionalKind::EfePlanStage => "efe-plan",
            FunctionalKind::AifPolicy => "aif-policy",
            FunctionalKind::LikelihoodAif => "likelihood-aif",
        }
    }
}

impl std::fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FunctionalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cai-bound" => Ok(FunctionalKind::CaiBound),
            "cai-plan" => Ok(FunctionalKind::CaiPlanStage),
            "efe-plan" => Ok(FunctionalKind::EfePlanStage),
            "aif-policy" => Ok(FunctionalKind::AifPolicy),
            "likelihood-aif" => Ok(FunctionalKind::LikelihoodAif),
            other => Err(format!(
                "unknown functional kind `{other}` (expected cai-bound, cai-plan, efe-plan, aif-policy or likelihood-aif)"
            )),
        }
    }
}

/// Per-term values of a functional. Terms a kind does not use are exactly
/// zero; `total` is the signed sum with the intrinsic magnitude subtracted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveBreakdown<F: Scalar> {
    pub kind: FunctionalKind,
    pub extrinsic: F,
    pub state_divergence: F,
    pub action_divergence: F,
    pub ambiguity: F,
    pub intrinsic: F,
    pub total: F,
}

impl<F: Scalar> ObjectiveBreakdown<F> {
    fn assemble(
        kind: FunctionalKind,
        extrinsic: F,
        state_divergence: F,
        action_divergence: F,
        ambiguity: F,
        intrinsic: F,
    ) -> Self {
        debug_assert!(kind.uses_state_divergence() || state_divergence == F::zero());
        debug_assert!(kind.uses_action_divergence() || action_divergence == F::zero());
        debug_assert!(kind.uses_ambiguity() || ambiguity == F::zero());
        debug_assert!(kind.uses_intrinsic() || intrinsic == F::zero());
        let total = extrinsic + state_divergence + action_divergence + ambiguity - intrinsic;
        Self {
            kind,
            extrinsic,
            state_divergence,
            action_divergence,
            ambiguity,
            intrinsic,
            total,
        }
    }

    pub fn zeroed(kind: FunctionalKind) -> Self {
        Self::assemble(kind, F::zero(), F::zero(), F::zero(), F::zero(), F::zero())
    }

    /// Termwise accumulation of a same-kind stage breakdown.
    pub fn accumulate(&mut self, stage: &Self) {
        debug_assert_eq!(self.kind, stage.kind);
        self.extrinsic += stage.extrinsic;
        self.state_divergence += stage.state_divergence;
        self.action_divergence += stage.action_divergence;
        self.ambiguity += stage.ambiguity;
        self.intrinsic += stage.intrinsic;
        self.total += stage.total;
    }

    pub const CSV_HEADER: &'static str =
        "plan,t,functional_kind,extrinsic,state_div,action_div,ambiguity,intrinsic,total";

    /// One flat CSV row for this breakdown at plan step `t`.
    pub fn csv_row(&self, plan_label: &str, t: usize) -> String {
        format!(
            "{plan_label},{t},{},{},{},{},{},{},{}",
            self.kind,
            to_f64(self.extrinsic),
            to_f64(self.state_divergence),
            to_f64(self.action_divergence),
            to_f64(self.ambiguity),
            to_f64(self.intrinsic),
            to_f64(self.total),
        )
    }
}

/// Fixed open-loop action sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    actions: Vec<usize>,
}

impl Plan {
    pub fn new(actions: Vec<usize>) -> Result<Self, ObjectiveError> {
        if actions.is_empty() {
            return Err(ObjectiveError::EmptyPlan);
        }
        Ok(Self { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn action(&self, t: usize) -> usize {
        self.actions[t]
    }

    pub fn first_action(&self) -> usize {
        self.actions[0]
    }

    pub fn check_against(&self, num_actions: usize) -> Result<(), ObjectiveError> {
        for &a in &self.actions {
            if a >= num_actions {
                return Err(ObjectiveError::PlanActionOutOfRange {
                    action: a,
                    bound: num_actions,
                });
            }
        }
        Ok(())
    }

    /// Stable text form, e.g. `2-0-1`.
    pub fn label(&self) -> String {
        self.actions
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// State-conditional action distributions, one set of rows per timestep.
///
/// A stationary policy stores a single step which answers for every `t`;
/// reading past the end clamps to the final step.
#[derive(Debug, Clone)]
pub struct Policy<F: Scalar> {
    steps: Vec<Vec<Categorical<F>>>,
}

impl<F: Scalar> Policy<F> {
    pub fn stationary(rows: Vec<Categorical<F>>) -> Self {
        Self { steps: vec![rows] }
    }

    pub fn time_varying(steps: Vec<Vec<Categorical<F>>>) -> Self {
        debug_assert!(!steps.is_empty());
        Self { steps }
    }

    /// Deterministic, state-independent policy that replays a plan.
    pub fn from_plan(plan: &Plan, num_states: usize, num_actions: usize) -> Result<Self, ObjectiveError> {
        plan.check_against(num_actions)?;
        let steps = plan
            .actions()
            .iter()
            .map(|&a| {
                let row = Categorical::delta(num_actions, a)?;
                Ok(vec![row; num_states])
            })
            .collect::<Result<Vec<_>, ProbError>>()?;
        Ok(Self { steps })
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Action rows for timestep `t`, clamped to the final declared step.
    pub fn step(&self, t: usize) -> &[Categorical<F>] {
        &self.steps[t.min(self.steps.len() - 1)]
    }

    pub fn action_dist(&self, t: usize, state: usize) -> &Categorical<F> {
        &self.step(t)[state]
    }
}

fn require_optimality<'a, F: Scalar>(
    encoding: &'a ValueEncoding<F>,
) -> Result<&'a Vec<Vec<F>>, ObjectiveError> {
    match encoding {
        ValueEncoding::OptimalityLikelihood { loglik } => Ok(loglik),
        other => Err(ObjectiveError::EncodingMismatch {
            expected: EncodingKind::OptimalityLikelihood,
            found: other.kind(),
        }),
    }
}

fn require_biased_prior<'a, F: Scalar>(
    encoding: &'a ValueEncoding<F>,
) -> Result<&'a Categorical<F>, ObjectiveError> {
    match encoding {
        ValueEncoding::BiasedObservationPrior { prior } => Ok(prior),
        other => Err(ObjectiveError::EncodingMismatch {
            expected: EncodingKind::BiasedObservationPrior,
            found: other.kind(),
        }),
    }
}

fn require_biased_likelihood<'a, F: Scalar>(
    encoding: &'a ValueEncoding<F>,
) -> Result<&'a Vec<Categorical<F>>, ObjectiveError> {
    match encoding {
        ValueEncoding::BiasedObservationLikelihood { rows } => Ok(rows),
        other => Err(ObjectiveError::EncodingMismatch {
            expected: EncodingKind::BiasedObservationLikelihood,
            found: other.kind(),
        }),
    }
}

fn check_policy_rows<F: Scalar>(
    model: &DiscretePomdp<F>,
    rows: &[Categorical<F>],
) -> Result<(), ObjectiveError> {
    if rows.len() != model.num_states() {
        return Err(ObjectiveError::PolicyShape {
            expected: model.num_states(),
            found: rows.len(),
        });
    }
    Ok(())
}

/// Expected conditional observation entropy under `q_s`:
/// `-E_{q(s)}[ sum_o p(o|s) ln p(o|s) ]`. Exactly zero on MDPs.
fn expected_ambiguity<F: Scalar>(model: &DiscretePomdp<F>, q_s: &Categorical<F>) -> F {
    let mut acc = F::zero();
    for (s, w) in q_s.support() {
        acc += w * entropy(model.observation_row(s));
    }
    acc
}

/// `E_{q(s)}[ KL(q(a|s) || p(a|s)) ]`, skipping zero-mass states.
fn expected_action_divergence<F: Scalar>(
    model: &DiscretePomdp<F>,
    q_s: &Categorical<F>,
    rows: &[Categorical<F>],
) -> Result<F, ObjectiveError> {
    let mut acc = F::zero();
    for (s, w) in q_s.support() {
        acc += w * kl_divergence(&rows[s], model.action_prior_row(s))?;
    }
    Ok(acc)
}

/// Extrinsic value against a preference prior: `-E_{q(o)}[ ln p~(o) ]`.
fn preference_extrinsic<F: Scalar>(
    predictive: &Categorical<F>,
    preference: &Categorical<F>,
) -> Result<F, ObjectiveError> {
    let mut acc = F::zero();
    for (o, q_o) in predictive.support() {
        let p = preference.prob(o);
        if p <= F::zero() {
            return Err(ObjectiveError::PreferenceSupport { observation: o });
        }
        acc = acc - q_o * p.ln();
    }
    Ok(acc)
}

/// One-step variational bound with an optimality likelihood (four terms).
///
/// `prev_belief` advanced by `prev_action` is the prior predictive; with
/// `pin_state_marginal` the variational state marginal `q(s)` is replaced
/// by that predictive and the state divergence is exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn cai_bound<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    policy: &Policy<F>,
    prev_belief: &Categorical<F>,
    prev_action: usize,
    q_state: &Categorical<F>,
    pin_state_marginal: bool,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    let loglik = require_optimality(encoding)?;
    let rows = policy.step(0);
    check_policy_rows(model, rows)?;
    let prior_predictive = step_belief(model, prev_belief, prev_action)?;
    let (q_s, state_divergence) = if pin_state_marginal {
        (prior_predictive, F::zero())
    } else {
        let div = kl_divergence(q_state, &prior_predictive)?;
        (q_state.clone(), div)
    };

    let mut extrinsic = F::zero();
    for (s, w) in q_s.support() {
        for (a, pa) in rows[s].support() {
            extrinsic = extrinsic - w * pa * loglik[s][a];
        }
    }
    let action_divergence = expected_action_divergence(model, &q_s, rows)?;
    let ambiguity = expected_ambiguity(model, &q_s);

    Ok(ObjectiveBreakdown::assemble(
        FunctionalKind::CaiBound,
        extrinsic,
        state_divergence,
        action_divergence,
        ambiguity,
        F::zero(),
    ))
}

/// Stage cost of the plan-conditioned bound at step `t`: expected negative
/// optimality log-likelihood of the step's action plus observation
/// ambiguity. No action term, and the state divergence is pinned to zero
/// because the trajectory beliefs *are* the prior predictives.
pub fn cai_plan_stage<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    plan: &Plan,
    t: usize,
    traj: &BeliefTrajectory<F>,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    let loglik = require_optimality(encoding)?;
    if t >= traj.len() || t >= plan.len() {
        return Err(ObjectiveError::StageOutOfRange {
            t,
            len: traj.len().min(plan.len()),
        });
    }
    let action = plan.action(t);
    let belief = traj.belief(t);

    let mut extrinsic = F::zero();
    for (s, w) in belief.support() {
        extrinsic = extrinsic - w * loglik[s][action];
    }
    let ambiguity = expected_ambiguity(model, belief);

    Ok(ObjectiveBreakdown::assemble(
        FunctionalKind::CaiPlanStage,
        extrinsic,
        F::zero(),
        F::zero(),
        ambiguity,
        F::zero(),
    ))
}

/// Expected free energy stage at step `t`: negative expected preference
/// log-probability minus the expected information gain over states.
pub fn efe_stage<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    plan: &Plan,
    t: usize,
    traj: &BeliefTrajectory<F>,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    let preference = require_biased_prior(encoding)?;
    if t >= traj.len() || t >= plan.len() {
        return Err(ObjectiveError::StageOutOfRange {
            t,
            len: traj.len().min(plan.len()),
        });
    }
    let belief = traj.belief(t);
    let predictive = predict_observations(model, belief)?;
    let extrinsic = preference_extrinsic(&predictive, preference)?;
    let intrinsic = information_gain(model, belief)?;

    Ok(ObjectiveBreakdown::assemble(
        FunctionalKind::EfePlanStage,
        extrinsic,
        F::zero(),
        F::zero(),
        F::zero(),
        intrinsic,
    ))
}

/// Expected free energy in policy form: the extrinsic and intrinsic terms
/// of [`efe_stage`] evaluated on the action-marginalized predictive (the
/// current marginal advanced under `q(a|s)`), plus the action divergence.
pub fn aif_policy_objective<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    policy: &Policy<F>,
    q_state: &Categorical<F>,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    let preference = require_biased_prior(encoding)?;
    let rows = policy.step(0);
    check_policy_rows(model, rows)?;

    let mut advanced = vec![F::zero(); model.num_states()];
    for (s, w) in q_state.support() {
        for (a, pa) in rows[s].support() {
            for (succ, p) in model.transition_row(a, s).support() {
                advanced[succ] += w * pa * p;
            }
        }
    }
    let advanced = Categorical::new(advanced)?;

    let predictive = predict_observations(model, &advanced)?;
    let extrinsic = preference_extrinsic(&predictive, preference)?;
    let intrinsic = information_gain(model, &advanced)?;
    let action_divergence = expected_action_divergence(model, q_state, rows)?;

    Ok(ObjectiveBreakdown::assemble(
        FunctionalKind::AifPolicy,
        extrinsic,
        F::zero(),
        action_divergence,
        F::zero(),
        intrinsic,
    ))
}

/// One-step bound with a biased observation likelihood: extrinsic value is
/// the expectation of `-ln p~(o|s)` where the inner observation expectation
/// uses the *true* `p(o|s)`; state and action divergences as in
/// [`cai_bound`]; no ambiguity term.
#[allow(clippy::too_many_arguments)]
pub fn likelihood_aif<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    policy: &Policy<F>,
    prev_belief: &Categorical<F>,
    prev_action: usize,
    q_state: &Categorical<F>,
    pin_state_marginal: bool,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    let biased = require_biased_likelihood(encoding)?;
    let rows = policy.step(0);
    check_policy_rows(model, rows)?;
    let prior_predictive = step_belief(model, prev_belief, prev_action)?;
    let (q_s, state_divergence) = if pin_state_marginal {
        (prior_predictive, F::zero())
    } else {
        let div = kl_divergence(q_state, &prior_predictive)?;
        (q_state.clone(), div)
    };

    let mut extrinsic = F::zero();
    for (s, w) in q_s.support() {
        for (o, p_true) in model.observation_row(s).support() {
            let p_biased = biased[s].prob(o);
            if p_biased <= F::zero() {
                return Err(ObjectiveError::LikelihoodSupport {
                    state: s,
                    observation: o,
                });
            }
            extrinsic = extrinsic - w * p_true * p_biased.ln();
        }
    }
    let action_divergence = expected_action_divergence(model, &q_s, rows)?;

    Ok(ObjectiveBreakdown::assemble(
        FunctionalKind::LikelihoodAif,
        extrinsic,
        state_divergence,
        action_divergence,
        F::zero(),
        F::zero(),
    ))
}

/// Stage breakdown of a plan functional at step `t` of its trajectory.
pub fn plan_stage<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    kind: FunctionalKind,
    plan: &Plan,
    t: usize,
    traj: &BeliefTrajectory<F>,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    match kind {
        FunctionalKind::CaiPlanStage => cai_plan_stage(model, encoding, plan, t, traj),
        FunctionalKind::EfePlanStage => efe_stage(model, encoding, plan, t, traj),
        other => Err(ObjectiveError::NotAPlanFunctional(other)),
    }
}

/// Path integral of a plan functional: termwise sum of the per-stage
/// breakdowns over the whole horizon, beliefs seeded from the model's
/// initial belief.
pub fn total_over_horizon<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    kind: FunctionalKind,
    plan: &Plan,
) -> Result<ObjectiveBreakdown<F>, ObjectiveError> {
    plan.check_against(model.num_actions())?;
    let traj = crate::rollout::predict_states(model, plan, model.initial_belief())?;
    let mut sum = ObjectiveBreakdown::zeroed(kind);
    for t in 0..plan.len() {
        sum.accumulate(&plan_stage(model, encoding, kind, plan, t, &traj)?);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscretePomdp, RewardTable, ValueEncoding};
    use crate::prob::Categorical;
    use crate::rollout::predict_states;

    fn cat(p: &[f64]) -> Categorical<f64> {
        Categorical::new(p.to_vec()).unwrap()
    }

    /// 2 states, 2 actions (stay/swap), identity observations.
    fn mdp() -> DiscretePomdp<f64> {
        DiscretePomdp::build(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            None,
            2,
        )
        .unwrap()
    }

    fn zero_reward_encoding() -> ValueEncoding<f64> {
        ValueEncoding::optimality_from(
            &RewardTable::from_state_action(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(),
        )
        .unwrap()
    }

    fn uniform_policy(num_states: usize, num_actions: usize) -> Policy<f64> {
        Policy::stationary(vec![Categorical::uniform(num_actions).unwrap(); num_states])
    }

    fn delta_policy(num_states: usize, num_actions: usize, action: usize) -> Policy<f64> {
        Policy::stationary(vec![
            Categorical::delta(num_actions, action).unwrap();
            num_states
        ])
    }

    #[test]
    fn degenerate_bound_is_all_zeros() {
        let m = mdp();
        let enc = zero_reward_encoding();
        let b = cat(&[0.5, 0.5]);
        let bd = cai_bound(&m, &enc, &uniform_policy(2, 2), &b, 0, &b, true).unwrap();
        assert_eq!(bd.extrinsic, 0.0);
        assert_eq!(bd.state_divergence, 0.0);
        assert_eq!(bd.action_divergence, 0.0);
        assert_eq!(bd.ambiguity, 0.0);
        assert_eq!(bd.total, 0.0);
    }

    #[test]
    fn deterministic_policy_under_uniform_prior_costs_ln_num_actions() {
        let m = mdp();
        let enc = zero_reward_encoding();
        let b = cat(&[0.5, 0.5]);
        let bd = cai_bound(&m, &enc, &delta_policy(2, 2, 1), &b, 0, &b, true).unwrap();
        assert!((bd.action_divergence - 2.0_f64.ln()).abs() < 1e-15);
        assert_eq!(bd.total, bd.action_divergence);
    }

    #[test]
    fn bound_rejects_wrong_encoding() {
        let m = mdp();
        let enc = ValueEncoding::biased_prior_from(
            &RewardTable::from_observation(vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let b = cat(&[0.5, 0.5]);
        let err = cai_bound(&m, &enc, &uniform_policy(2, 2), &b, 0, &b, true).unwrap_err();
        assert!(matches!(err, ObjectiveError::EncodingMismatch { .. }));
    }

    #[test]
    fn unpinned_bound_reports_state_divergence() {
        let m = mdp();
        let enc = zero_reward_encoding();
        let prev = cat(&[1.0, 0.0]);
        let q = cat(&[0.5, 0.5]);
        // prior predictive after swap is [0, 1]; q places mass where the
        // predictive has none.
        let err = cai_bound(&m, &enc, &uniform_policy(2, 2), &prev, 1, &q, false).unwrap_err();
        assert!(matches!(err, ObjectiveError::Prob(ProbError::AbsoluteContinuity { .. })));

        let q_ok = cat(&[0.0, 1.0]);
        let bd = cai_bound(&m, &enc, &uniform_policy(2, 2), &prev, 1, &q_ok, false).unwrap();
        assert_eq!(bd.state_divergence, 0.0);
    }

    #[test]
    fn plan_stage_on_mdp_is_expected_shifted_reward() {
        let m = mdp();
        let enc = ValueEncoding::optimality_from(
            &RewardTable::from_state_action(vec![vec![1.0, 0.5], vec![0.0, 2.0]]).unwrap(),
        )
        .unwrap();
        let plan = Plan::new(vec![0, 1]).unwrap();
        let traj = predict_states(&m, &plan, m.initial_belief()).unwrap();
        let stage = cai_plan_stage(&m, &enc, &plan, 0, &traj).unwrap();
        assert_eq!(stage.ambiguity, 0.0);
        // shifted rewards for action 0: [-1, -2]; belief stays [0.5, 0.5]
        assert!((stage.extrinsic - 1.5).abs() < 1e-15);
        assert_eq!(stage.total, stage.extrinsic);

        let err = cai_plan_stage(&m, &enc, &plan, 2, &traj).unwrap_err();
        assert!(matches!(err, ObjectiveError::StageOutOfRange { .. }));
    }

    #[test]
    fn efe_stage_with_flat_preferences_and_blind_observations() {
        let m = DiscretePomdp::build(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            None,
            1,
        )
        .unwrap();
        let enc = ValueEncoding::biased_prior_from(
            &RewardTable::from_observation(vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let plan = Plan::new(vec![0]).unwrap();
        let traj = predict_states(&m, &plan, m.initial_belief()).unwrap();
        let stage = efe_stage(&m, &enc, &plan, 0, &traj).unwrap();
        assert_eq!(stage.intrinsic, 0.0);
        assert!((stage.total - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn efe_stage_on_mdp_is_kl_to_the_preference_prior() {
        let m = mdp();
        let rewards = RewardTable::from_observation(vec![0.4, -0.9]).unwrap();
        let enc = ValueEncoding::biased_prior_from(&rewards).unwrap();
        let preference = match &enc {
            ValueEncoding::BiasedObservationPrior { prior } => prior.clone(),
            _ => unreachable!(),
        };
        let plan = Plan::new(vec![1, 0]).unwrap();
        let traj = predict_states(&m, &plan, &cat(&[0.7, 0.3])).unwrap();
        for t in 0..2 {
            let stage = efe_stage(&m, &enc, &plan, t, &traj).unwrap();
            let kl = crate::prob::kl_divergence(traj.belief(t), &preference).unwrap();
            assert!((stage.total - kl).abs() < 1e-12);
        }
    }

    #[test]
    fn aif_policy_with_prior_policy_has_no_action_cost() {
        let m = mdp();
        let enc = ValueEncoding::biased_prior_from(
            &RewardTable::from_observation(vec![0.8, -0.2]).unwrap(),
        )
        .unwrap();
        let q = cat(&[0.6, 0.4]);
        let bd = aif_policy_objective(&m, &enc, &uniform_policy(2, 2), &q).unwrap();
        assert_eq!(bd.action_divergence, 0.0);

        // Deterministic policy against the uniform prior: mixing penalty is
        // ln |A| and the rest must match the plan-style stage on the same
        // predictive belief.
        let bd_det = aif_policy_objective(&m, &enc, &delta_policy(2, 2, 1), &q).unwrap();
        assert!((bd_det.action_divergence - 2.0_f64.ln()).abs() < 1e-15);
        let plan = Plan::new(vec![1]).unwrap();
        let traj = predict_states(&m, &plan, &q).unwrap();
        let stage = efe_stage(&m, &enc, &plan, 0, &traj).unwrap();
        assert!((bd_det.extrinsic - stage.extrinsic).abs() < 1e-12);
        assert!((bd_det.intrinsic - stage.intrinsic).abs() < 1e-12);
    }

    #[test]
    fn deterministic_aif_policy_over_three_actions_costs_ln_3() {
        let m = DiscretePomdp::build(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            None,
            1,
        )
        .unwrap();
        let enc = ValueEncoding::biased_prior_from(
            &RewardTable::from_observation(vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let bd = aif_policy_objective(&m, &enc, &delta_policy(2, 3, 2), &cat(&[0.5, 0.5])).unwrap();
        assert!((bd.action_divergence - 3.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_aif_with_uniform_biased_rows() {
        let m = mdp();
        let enc = ValueEncoding::biased_likelihood_from(
            &m,
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let b = cat(&[0.5, 0.5]);
        let bd = likelihood_aif(&m, &enc, &uniform_policy(2, 2), &b, 0, &b, true).unwrap();
        assert!((bd.extrinsic - 2.0_f64.ln()).abs() < 1e-15);
        assert_eq!(bd.action_divergence, 0.0);
        assert_eq!(bd.ambiguity, 0.0);

        let skew = cat(&[0.9, 0.1]);
        let bd2 = likelihood_aif(&m, &enc, &uniform_policy(2, 2), &skew, 0, &skew, true).unwrap();
        assert!((bd2.extrinsic - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_aif_zero_rewards_leaves_only_action_divergence() {
        let m = mdp();
        // A "zero reward" biased likelihood on an MDP: the diagonal carries
        // full mass, matching exp(0) = 1.
        let enc = ValueEncoding::biased_likelihood_from(
            &m,
            &[
                vec![0.0, f64::NEG_INFINITY],
                vec![f64::NEG_INFINITY, 0.0],
            ],
        )
        .unwrap();
        let b = cat(&[0.5, 0.5]);
        let bd = likelihood_aif(&m, &enc, &delta_policy(2, 2, 0), &b, 0, &b, true).unwrap();
        assert_eq!(bd.extrinsic, 0.0);
        assert!((bd.total - bd.action_divergence).abs() < 1e-15);
        assert!((bd.action_divergence - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn horizon_totals_sum_stages() {
        let m = mdp();
        let enc = ValueEncoding::optimality_from(
            &RewardTable::from_state_action(vec![vec![0.3, -0.4], vec![-1.0, 0.2]]).unwrap(),
        )
        .unwrap();
        let single = Plan::new(vec![1]).unwrap();
        let one = total_over_horizon(&m, &enc, FunctionalKind::CaiPlanStage, &single).unwrap();
        let traj = predict_states(&m, &single, m.initial_belief()).unwrap();
        let stage = cai_plan_stage(&m, &enc, &single, 0, &traj).unwrap();
        assert_eq!(one.total, stage.total);

        let zero_enc = zero_reward_encoding();
        let plan = Plan::new(vec![0, 1]).unwrap();
        let zeros = total_over_horizon(&m, &zero_enc, FunctionalKind::CaiPlanStage, &plan).unwrap();
        assert_eq!(zeros.total, 0.0);

        let err = total_over_horizon(&m, &zero_enc, FunctionalKind::CaiBound, &plan).unwrap_err();
        assert!(matches!(err, ObjectiveError::NotAPlanFunctional(_)));
    }

    #[test]
    fn uniform_action_prior_reduces_to_negative_action_entropy() {
        let m = mdp();
        let enc = zero_reward_encoding();
        let q_s = cat(&[0.3, 0.7]);
        let rows = vec![cat(&[0.9, 0.1]), cat(&[0.25, 0.75])];
        let policy = Policy::stationary(rows.clone());
        let bd = cai_bound(&m, &enc, &policy, &q_s, 0, &q_s, true).unwrap();
        let expected_entropy: f64 = q_s
            .probs()
            .iter()
            .zip(&rows)
            .map(|(&w, row)| w * crate::prob::entropy(row))
            .sum();
        let identity = 2.0_f64.ln() - expected_entropy;
        assert!((bd.action_divergence - identity).abs() < 1e-12);
    }

    #[test]
    fn breakdown_total_is_the_signed_term_sum() {
        let bd = ObjectiveBreakdown::<f64>::assemble(
            FunctionalKind::AifPolicy,
            1.5,
            0.0,
            0.25,
            0.0,
            0.75,
        );
        assert!((bd.total - 1.0).abs() < 1e-15);
        let row = bd.csv_row("0-1", 3);
        assert!(row.starts_with("0-1,3,aif-policy,1.5,"));
    }

    #[test]
    fn plan_contract() {
        assert!(matches!(Plan::new(vec![]), Err(ObjectiveError::EmptyPlan)));
        let plan = Plan::new(vec![0, 2, 1]).unwrap();
        assert_eq!(plan.label(), "0-2-1");
        assert!(plan.check_against(3).is_ok());
        assert!(matches!(
            plan.check_against(2),
            Err(ObjectiveError::PlanActionOutOfRange { action: 2, .. })
        ));
    }

    #[test]
    fn policy_step_clamps_to_final() {
        let rows_a = vec![cat(&[1.0, 0.0]); 2];
        let rows_b = vec![cat(&[0.0, 1.0]); 2];
        let p = Policy::time_varying(vec![rows_a, rows_b]);
        assert_eq!(p.step(0)[0].probs(), &[1.0, 0.0]);
        assert_eq!(p.step(5)[0].probs(), &[0.0, 1.0]);

        let plan = Plan::new(vec![1, 0]).unwrap();
        let from_plan = Policy::<f64>::from_plan(&plan, 2, 2).unwrap();
        assert_eq!(from_plan.action_dist(0, 1).probs(), &[0.0, 1.0]);
        assert_eq!(from_plan.action_dist(1, 0).probs(), &[1.0, 0.0]);
    }
}
