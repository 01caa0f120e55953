//! Brute-force ground truth.
//!
//! Everything here re-derives quantities by exhaustive enumeration against
//! the raw model tables, sharing no code with the fast paths it certifies:
//! explicit joint tables over state/observation sequences, exact evidence,
//! the one-step bound computed as a single undecomposed sum, and the
//! equivalence checks between the reward-as-likelihood and biased-model
//! objectives. Accumulation uses compensated (Kahan) summation.
//!
//! Random instances follow a fixed protocol - Dirichlet(1,..,1) rows for
//! every stochastic matrix, rewards uniform in [-1, 1], 2..=5 states,
//! 2..=3 actions, 2..=5 observations - seeded per instance so every report
//! is reproducible.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{DiscretePomdp, RewardTable, ValueEncoding};
use crate::objectives::{
    aif_policy_objective, cai_bound, efe_stage, likelihood_aif, total_over_horizon,
    FunctionalKind, ObjectiveError, Plan, Policy,
};
use crate::planners::{
    enumerate_plans, plan_distribution_bound, plan_posterior_uniform, soft_policy_backward,
    PlannerError,
};
use crate::prob::{kl_divergence, softmax, Categorical, LogWeights, ProbError};
use crate::rollout::{predict_states, RolloutError};
use crate::scalar::{real, to_f64, Scalar};

/// Ceiling on `|S|^T * |O|^T` for explicit joint tables.
pub const DEFAULT_JOINT_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("joint table needs {required} entries, over the cap of {cap}")]
    CapExceeded { required: u128, cap: usize },
    #[error("variational weight on state {state}, which the joint assigns zero probability")]
    SupportViolation { state: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Compensated accumulator.
#[derive(Clone, Copy)]
struct Kahan<F: Scalar> {
    sum: F,
    carry: F,
}

impl<F: Scalar> Kahan<F> {
    fn new() -> Self {
        Self {
            sum: F::zero(),
            carry: F::zero(),
        }
    }

    fn add(&mut self, term: F) {
        let y = term - self.carry;
        let s = self.sum + y;
        self.carry = (s - self.sum) - y;
        self.sum = s;
    }

    fn value(self) -> F {
        self.sum
    }
}

/// One path of the explicit joint: states and observations for steps
/// `1..=T` under a fixed plan.
#[derive(Debug, Clone)]
pub struct JointEntry<F: Scalar> {
    pub states: Vec<usize>,
    pub observations: Vec<usize>,
    pub prob: F,
}

/// Explicit table of `p(s_{1:T}, o_{1:T} | plan)`; zero-probability paths
/// are omitted.
#[derive(Debug, Clone)]
pub struct JointTable<F: Scalar> {
    plan: Plan,
    entries: Vec<JointEntry<F>>,
}

impl<F: Scalar> JointTable<F> {
    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn entries(&self) -> &[JointEntry<F>] {
        &self.entries
    }

    pub fn total_mass(&self) -> F {
        let mut acc = Kahan::new();
        for e in &self.entries {
            acc.add(e.prob);
        }
        acc.value()
    }

    /// Marginal distribution of the state at step `t` (0-based).
    pub fn state_marginal(&self, t: usize, num_states: usize) -> Vec<F> {
        let mut marginal = vec![F::zero(); num_states];
        for e in &self.entries {
            marginal[e.states[t]] += e.prob;
        }
        marginal
    }
}

/// Enumerate `p(s_{1:T}, o_{1:T} | plan)` by nested summation, starting
/// from the initial belief and applying the plan's actions in order.
pub fn exact_joint<F: Scalar>(
    model: &DiscretePomdp<F>,
    plan: &Plan,
    cap: usize,
) -> Result<JointTable<F>, OracleError> {
    plan.check_against(model.num_actions())?;
    let horizon = plan.len() as u32;
    let required = (model.num_states() as u128)
        .checked_pow(horizon)
        .and_then(|s| (model.num_observations() as u128).checked_pow(horizon).map(|o| (s, o)))
        .and_then(|(s, o)| s.checked_mul(o))
        .unwrap_or(u128::MAX);
    if required > cap as u128 {
        return Err(OracleError::CapExceeded { required, cap });
    }

    // state sequences first; the first step marginalizes the initial belief
    let mut state_paths: Vec<(Vec<usize>, F)> = vec![(Vec::new(), F::one())];
    for &action in plan.actions() {
        let mut next_paths = Vec::new();
        for (path, prob) in &state_paths {
            let mut reach = vec![F::zero(); model.num_states()];
            match path.last() {
                Some(&s) => {
                    for (succ, p) in model.transition_row(action, s).support() {
                        reach[succ] += p;
                    }
                }
                None => {
                    for (s, w) in model.initial_belief().support() {
                        for (succ, p) in model.transition_row(action, s).support() {
                            reach[succ] += w * p;
                        }
                    }
                }
            }
            for (succ, mass) in reach.into_iter().enumerate() {
                if mass > F::zero() {
                    let mut extended = path.clone();
                    extended.push(succ);
                    next_paths.push((extended, *prob * mass));
                }
            }
        }
        state_paths = next_paths;
    }

    // observation sequences per state sequence
    let mut entries = Vec::new();
    for (states, s_prob) in state_paths {
        let mut obs_paths: Vec<(Vec<usize>, F)> = vec![(Vec::new(), s_prob)];
        for &s in &states {
            let mut next = Vec::new();
            for (path, prob) in &obs_paths {
                for (o, p) in model.observation_row(s).support() {
                    let mut extended = path.clone();
                    extended.push(o);
                    next.push((extended, *prob * p));
                }
            }
            obs_paths = next;
        }
        for (observations, prob) in obs_paths {
            entries.push(JointEntry {
                states: states.clone(),
                observations,
                prob,
            });
        }
    }

    Ok(JointTable {
        plan: plan.clone(),
        entries,
    })
}

/// Exact log marginal likelihood of optimality along a plan:
/// `ln sum_{s,o} p(s_{1:T}, o_{1:T} | plan) prod_t exp(loglik[s_t][plan_t])`.
pub fn exact_log_evidence<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    plan: &Plan,
    cap: usize,
) -> Result<F, OracleError> {
    let loglik = match encoding {
        ValueEncoding::OptimalityLikelihood { loglik } => loglik,
        other => {
            return Err(ObjectiveError::EncodingMismatch {
                expected: crate::model::EncodingKind::OptimalityLikelihood,
                found: other.kind(),
            }
            .into())
        }
    };
    let joint = exact_joint(model, plan, cap)?;
    let mut acc = Kahan::new();
    for entry in joint.entries() {
        let mut log_opt = F::zero();
        for (t, &s) in entry.states.iter().enumerate() {
            log_opt += loglik[s][plan.action(t)];
        }
        acc.add(entry.prob * log_opt.exp());
    }
    Ok(acc.value().ln())
}

/// The one-step bound computed as a single sum over `(s, a, o)` triples
/// against the explicit unnormalized joint
/// `p(s|prev) p(a|s) p(o|s) exp(loglik)`, with no term decomposition.
#[allow(clippy::too_many_arguments)]
pub fn direct_bound<F: Scalar>(
    model: &DiscretePomdp<F>,
    encoding: &ValueEncoding<F>,
    policy: &Policy<F>,
    q_state: &Categorical<F>,
    prev_belief: &Categorical<F>,
    prev_action: usize,
    pin_state_marginal: bool,
) -> Result<F, OracleError> {
    let loglik = match encoding {
        ValueEncoding::OptimalityLikelihood { loglik } => loglik,
        other => {
            return Err(ObjectiveError::EncodingMismatch {
                expected: crate::model::EncodingKind::OptimalityLikelihood,
                found: other.kind(),
            }
            .into())
        }
    };
    // prior predictive by raw summation
    let mut predictive = vec![F::zero(); model.num_states()];
    for (s, w) in prev_belief.support() {
        for (succ, p) in model.transition_row(prev_action, s).support() {
            predictive[succ] += w * p;
        }
    }
    let rows = policy.step(0);
    let q_s: Vec<F> = if pin_state_marginal {
        predictive.clone()
    } else {
        q_state.probs().to_vec()
    };

    let mut acc = Kahan::new();
    for s in 0..model.num_states() {
        let qs = q_s[s];
        if qs <= F::zero() {
            continue;
        }
        if predictive[s] <= F::zero() {
            return Err(OracleError::SupportViolation { state: s });
        }
        for (a, qa) in rows[s].support() {
            let prior_a = model.action_prior_row(s).prob(a);
            if prior_a <= F::zero() {
                return Err(OracleError::SupportViolation { state: s });
            }
            for (_o, p_o) in model.observation_row(s).support() {
                let weight = qs * qa * p_o;
                let log_ratio = qs.ln() + qa.ln()
                    - predictive[s].ln()
                    - prior_a.ln()
                    - p_o.ln()
                    - loglik[s][a];
                acc.add(weight * log_ratio);
            }
        }
    }
    Ok(acc.value())
}

/// Expected free energy of a stage belief computed from the explicit joint
/// `w(s,o) = b(s) p(o|s)`: returns the direct total
/// `E_w[ln b(s) - ln p~(o) - ln q(s|o)]` and the direct mutual-information
/// double sum.
pub fn direct_efe_stage<F: Scalar>(
    model: &DiscretePomdp<F>,
    preference: &Categorical<F>,
    belief: &Categorical<F>,
) -> (F, F) {
    let num_obs = model.num_observations();
    let mut q_o = vec![F::zero(); num_obs];
    for (s, b) in belief.support() {
        for (o, p) in model.observation_row(s).support() {
            q_o[o] += b * p;
        }
    }
    let mut total = Kahan::new();
    let mut mutual_information = Kahan::new();
    for (s, b) in belief.support() {
        for (o, p) in model.observation_row(s).support() {
            let w = b * p;
            let posterior = w / q_o[o];
            total.add(w * (b.ln() - preference.prob(o).ln() - posterior.ln()));
            mutual_information.add(w * (w / (b * q_o[o])).ln());
        }
    }
    (total.value(), mutual_information.value())
}

/// Policy-form expected free energy evaluated by enumeration: advance the
/// marginal under the policy by raw sums, then score extrinsic, intrinsic
/// and action-divergence terms directly from the tables.
pub fn direct_policy_efe<F: Scalar>(
    model: &DiscretePomdp<F>,
    preference: &Categorical<F>,
    policy_rows: &[Categorical<F>],
    q_state: &Categorical<F>,
) -> F {
    let mut advanced = vec![F::zero(); model.num_states()];
    for (s, w) in q_state.support() {
        for (a, pa) in policy_rows[s].support() {
            for (succ, p) in model.transition_row(a, s).support() {
                advanced[succ] += w * pa * p;
            }
        }
    }
    let mut q_o = vec![F::zero(); model.num_observations()];
    for (s, b) in advanced.iter().enumerate() {
        if *b > F::zero() {
            for (o, p) in model.observation_row(s).support() {
                q_o[o] += *b * p;
            }
        }
    }
    let mut acc = Kahan::new();
    // extrinsic minus intrinsic from the landing joint
    for (s, b) in advanced.iter().enumerate() {
        if *b <= F::zero() {
            continue;
        }
        for (o, p) in model.observation_row(s).support() {
            let w = *b * p;
            acc.add(-w * preference.prob(o).ln());
            acc.add(-w * (w / (*b * q_o[o])).ln());
        }
    }
    // action divergence on the choice marginal
    for (s, w) in q_state.support() {
        for (a, qa) in policy_rows[s].support() {
            acc.add(w * qa * (qa / model.action_prior_row(s).prob(a)).ln());
        }
    }
    acc.value()
}

/// Target log-likelihood matrix whose row-softmax places exactly
/// `exp(loglik[s][action_for(s)])` on the diagonal observation, the rest
/// spread evenly. On an MDP this realizes `ln p~(o|s) = ln p(O|s,a)` for
/// the evaluated action.
pub fn matched_likelihood_target<F: Scalar>(
    num_observations: usize,
    loglik: &[Vec<F>],
    action_for: impl Fn(usize) -> usize,
) -> Vec<Vec<F>> {
    let mut target = Vec::with_capacity(loglik.len());
    for (s, row) in loglik.iter().enumerate() {
        let diag = row[action_for(s)];
        let p_diag = diag.exp();
        let rest = (F::one() - p_diag) / real::<F>((num_observations - 1) as f64);
        let mut t_row = vec![rest.ln(); num_observations];
        t_row[s] = diag;
        target.push(t_row);
    }
    target
}

// ---------------------------------------------------------------------------
// random instance protocol
// ---------------------------------------------------------------------------

/// The named, seedable generator used everywhere randomness is needed.
pub fn oracle_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dirichlet(1,..,1) draw: normalized unit exponentials.
pub fn random_simplex<F: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> Categorical<F> {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            return Categorical::new(raw.into_iter().map(|x| real(x / sum)).collect())
                .expect("normalized Dirichlet draw is a valid distribution");
        }
    }
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let c: Categorical<f64> = random_simplex(rng, dim);
            c.probs().to_vec()
        })
        .collect()
}

/// Random POMDP with Dirichlet rows; sizes follow the fixed protocol.
pub fn random_pomdp<F: Scalar>(rng: &mut ChaCha8Rng, max_horizon: usize) -> DiscretePomdp<F> {
    let states = rng.gen_range(2..=5);
    let actions = rng.gen_range(2..=3);
    let observations = rng.gen_range(2..=5);
    let horizon = rng.gen_range(1..=max_horizon.max(1));
    let transition = (0..actions).map(|_| random_rows(rng, states, states)).collect();
    let observation = random_rows(rng, states, observations);
    let initial: Categorical<f64> = random_simplex(rng, states);
    DiscretePomdp::build(
        convert3(transition),
        convert2(observation),
        initial.probs().iter().map(|&x| real(x)).collect(),
        None,
        horizon,
    )
    .expect("random tables are valid by construction")
}

/// Random MDP: identity observations; optionally a point-mass start state.
pub fn random_mdp<F: Scalar>(
    rng: &mut ChaCha8Rng,
    max_horizon: usize,
    deterministic_start: bool,
    uniform_action_prior: bool,
) -> DiscretePomdp<F> {
    let states = rng.gen_range(2..=5);
    let actions = rng.gen_range(2..=3);
    let horizon = rng.gen_range(1..=max_horizon.max(1));
    let transition = (0..actions).map(|_| random_rows(rng, states, states)).collect();
    let observation: Vec<Vec<f64>> = (0..states)
        .map(|s| (0..states).map(|o| if o == s { 1.0 } else { 0.0 }).collect())
        .collect();
    let initial: Vec<f64> = if deterministic_start {
        let s0 = rng.gen_range(0..states);
        (0..states).map(|s| if s == s0 { 1.0 } else { 0.0 }).collect()
    } else {
        let c: Categorical<f64> = random_simplex(rng, states);
        c.probs().to_vec()
    };
    let action_prior = if uniform_action_prior {
        None
    } else {
        Some(random_rows(rng, states, actions))
    };
    DiscretePomdp::build(
        convert3(transition),
        convert2(observation),
        initial.into_iter().map(|x| real(x)).collect(),
        action_prior.map(convert2),
        horizon,
    )
    .expect("random tables are valid by construction")
}

fn convert2<F: Scalar>(rows: Vec<Vec<f64>>) -> Vec<Vec<F>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(|x| real(x)).collect())
        .collect()
}

fn convert3<F: Scalar>(t: Vec<Vec<Vec<f64>>>) -> Vec<Vec<Vec<F>>> {
    t.into_iter().map(convert2).collect()
}

/// Uniform rewards in [-1, 1] over state-action pairs.
pub fn random_rewards_sa<F: Scalar>(
    rng: &mut ChaCha8Rng,
    states: usize,
    actions: usize,
) -> RewardTable<F> {
    let rows = (0..states)
        .map(|_| (0..actions).map(|_| real(rng.gen_range(-1.0..=1.0))).collect())
        .collect();
    RewardTable::from_state_action(rows).expect("finite rewards")
}

/// Uniform rewards in [-1, 1] over observations.
pub fn random_rewards_obs<F: Scalar>(rng: &mut ChaCha8Rng, observations: usize) -> RewardTable<F> {
    let obs = (0..observations)
        .map(|_| real(rng.gen_range(-1.0..=1.0)))
        .collect();
    RewardTable::from_observation(obs).expect("finite rewards")
}

/// Random stochastic policy rows (Dirichlet per state).
pub fn random_policy_rows<F: Scalar>(
    rng: &mut ChaCha8Rng,
    states: usize,
    actions: usize,
) -> Vec<Categorical<F>> {
    (0..states).map(|_| random_simplex(rng, actions)).collect()
}

/// Random plan of the model's horizon length.
pub fn random_plan<F: Scalar>(rng: &mut ChaCha8Rng, model: &DiscretePomdp<F>) -> Plan {
    Plan::new(
        (0..model.horizon())
            .map(|_| rng.gen_range(0..model.num_actions()))
            .collect(),
    )
    .expect("horizon is at least 1")
}

// ---------------------------------------------------------------------------
// check records and batteries
// ---------------------------------------------------------------------------

/// Outcome of one named check on one instance.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub instance_seed: u64,
    pub check_name: &'static str,
    pub max_abs_deviation: f64,
    pub pass: bool,
}

/// All records from a battery run, in execution order.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<CheckRecord>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Worst deviation per check name, in first-seen order.
    pub fn summary(&self) -> Vec<(&'static str, f64, bool)> {
        let mut names: Vec<&'static str> = Vec::new();
        for r in &self.records {
            if !names.contains(&r.check_name) {
                names.push(r.check_name);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let records = self.records.iter().filter(|r| r.check_name == name);
                let mut worst = 0.0f64;
                let mut pass = true;
                for r in records {
                    worst = worst.max(r.max_abs_deviation);
                    pass &= r.pass;
                }
                (name, worst, pass)
            })
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("instance_seed,check_name,max_abs_deviation,pass\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.instance_seed, r.check_name, r.max_abs_deviation, r.pass
            ));
        }
        out
    }

    fn push(&mut self, instance_seed: u64, check_name: &'static str, deviation: f64, tol: f64) {
        self.records.push(CheckRecord {
            instance_seed,
            check_name,
            max_abs_deviation: deviation,
            pass: deviation < tol,
        });
    }
}

pub const TOL_EQ1: f64 = 1e-9;
pub const TOL_EQ5: f64 = 1e-9;
pub const TOL_MUTUAL_INFO: f64 = 1e-12;
pub const TOL_EQ6: f64 = 1e-9;
pub const TOL_S5_TERMS: f64 = 1e-9;
pub const TOL_S5_POSTERIOR: f64 = 1e-12;
pub const TOL_KL_CONTROL: f64 = 1e-12;
pub const TOL_SOFTMAX_OPTIMALITY: f64 = 1e-10;
pub const TOL_ELBO: f64 = 1e-9;
pub const TOL_JOINT_MARGINALS: f64 = 1e-12;
pub const TOL_PLAN_POLICY: f64 = 1e-10;

fn max_term_deviation<F: Scalar>(
    a: &crate::objectives::ObjectiveBreakdown<F>,
    b: &crate::objectives::ObjectiveBreakdown<F>,
) -> f64 {
    [
        to_f64(a.extrinsic) - to_f64(b.extrinsic),
        to_f64(a.state_divergence) - to_f64(b.state_divergence),
        to_f64(a.action_divergence) - to_f64(b.action_divergence),
        to_f64(a.ambiguity) - to_f64(b.ambiguity),
        to_f64(a.intrinsic) - to_f64(b.intrinsic),
        to_f64(a.total) - to_f64(b.total),
    ]
    .iter()
    .fold(0.0, |m, d| m.max(d.abs()))
}

/// The biased-likelihood equivalence suite: on random MDPs, build matched
/// optimality and biased-likelihood encodings, compare the two one-step
/// bounds term for term and the two plan posteriors, and verify the
/// per-step KL-control identity of the expected free energy. Failures are
/// recorded, never thrown.
pub fn equivalence_suite(seed: u64, num_instances: usize) -> Report {
    let mut report = Report::default();
    for i in 0..num_instances {
        let instance_seed = seed.wrapping_add(i as u64);
        let mut rng = oracle_rng(instance_seed);
        // non-uniform action priors on odd instances; the claim needs neither
        let model: DiscretePomdp<f64> = random_mdp(&mut rng, 3, false, i % 2 == 0);
        let states = model.num_states();
        let actions = model.num_actions();
        let rewards = random_rewards_sa::<f64>(&mut rng, states, actions);
        let optimality = ValueEncoding::optimality_from(&rewards).unwrap();
        let loglik = match &optimality {
            ValueEncoding::OptimalityLikelihood { loglik } => loglik.clone(),
            _ => unreachable!(),
        };

        // term-for-term: deterministic state-action map sigma, biased
        // likelihood matched to the action each state evaluates
        let sigma: Vec<usize> = (0..states).map(|_| rng.gen_range(0..actions)).collect();
        let target = matched_likelihood_target(model.num_observations(), &loglik, |s| sigma[s]);
        let matched = ValueEncoding::biased_likelihood_from(&model, &target).unwrap();
        let policy = Policy::stationary(
            sigma
                .iter()
                .map(|&a| Categorical::delta(actions, a).unwrap())
                .collect(),
        );
        let prev_belief: Categorical<f64> = random_simplex(&mut rng, states);
        let prev_action = rng.gen_range(0..actions);
        let q_state: Categorical<f64> = random_simplex(&mut rng, states);
        let mut term_dev = 0.0f64;
        for pin in [true, false] {
            let cai = cai_bound(
                &model,
                &optimality,
                &policy,
                &prev_belief,
                prev_action,
                &q_state,
                pin,
            )
            .unwrap();
            let lik = likelihood_aif(
                &model,
                &matched,
                &policy,
                &prev_belief,
                prev_action,
                &q_state,
                pin,
            )
            .unwrap();
            // the likelihood form has no ambiguity term; on an MDP the
            // bound's ambiguity is exactly zero, so compare the rest
            term_dev = term_dev
                .max((cai.extrinsic - lik.extrinsic).abs())
                .max((cai.state_divergence - lik.state_divergence).abs())
                .max((cai.action_divergence - lik.action_divergence).abs())
                .max(cai.ambiguity.abs())
                .max((cai.total - lik.total).abs());
        }
        report.push(instance_seed, "s5_cai_equivalence_terms", term_dev, TOL_S5_TERMS);

        // plan posteriors: matched encoding per action of each stage
        let cai_posterior = plan_posterior_uniform(
            &model,
            &optimality,
            FunctionalKind::CaiPlanStage,
            crate::planners::DEFAULT_ENUM_CAP,
        )
        .unwrap();
        let per_action_diag: Vec<Vec<f64>> = (0..actions)
            .map(|a| {
                let target = matched_likelihood_target(model.num_observations(), &loglik, |_| a);
                let rows = crate::model::biased_observation_likelihood(&model, &target).unwrap();
                (0..states).map(|s| rows[s].prob(s).ln()).collect()
            })
            .collect();
        let mut lik_weights = Vec::with_capacity(cai_posterior.len());
        let ln_prior = -(cai_posterior.len() as f64).ln();
        for plan in cai_posterior.plans() {
            let traj = predict_states(&model, plan, model.initial_belief()).unwrap();
            let mut total = Kahan::<f64>::new();
            for t in 0..plan.len() {
                let action = plan.action(t);
                for (s, w) in traj.belief(t).support() {
                    total.add(-w * per_action_diag[action][s]);
                }
            }
            lik_weights.push(ln_prior - total.value());
        }
        let lik_posterior = softmax(&LogWeights::new(lik_weights).unwrap()).unwrap();
        let posterior_dev = cai_posterior
            .probs()
            .probs()
            .iter()
            .zip(lik_posterior.probs())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        report.push(
            instance_seed,
            "s5_cai_equivalence_posterior",
            posterior_dev,
            TOL_S5_POSTERIOR,
        );

        // per-step KL control: EFE stage equals KL(belief || preference)
        let obs_rewards = random_rewards_obs::<f64>(&mut rng, model.num_observations());
        let efe_encoding = ValueEncoding::biased_prior_from(&obs_rewards).unwrap();
        let preference = match &efe_encoding {
            ValueEncoding::BiasedObservationPrior { prior } => prior.clone(),
            _ => unreachable!(),
        };
        let mut kl_dev = 0.0f64;
        for plan in enumerate_plans(actions, model.horizon(), crate::planners::DEFAULT_ENUM_CAP)
            .unwrap()
        {
            let traj = predict_states(&model, &plan, model.initial_belief()).unwrap();
            for t in 0..plan.len() {
                let stage = efe_stage(&model, &efe_encoding, &plan, t, &traj).unwrap();
                let kl = kl_divergence(traj.belief(t), &preference).unwrap();
                kl_dev = kl_dev.max((stage.total - kl).abs());
            }
        }
        report.push(instance_seed, "mdp_kl_control", kl_dev, TOL_KL_CONTROL);
    }
    report
}

/// The full identity battery: every decomposition and optimality check on
/// seeded random instances, plus the equivalence suite.
///
/// `decomposition_offset` is a harness self-test hook: it is added to the
/// decomposed one-step bound before comparison, so any nonzero value must
/// make the battery fail. Verification runs pass `0.0`.
pub fn run_battery(seed: u64, num_instances: usize, decomposition_offset: f64) -> Report {
    let mut report = Report::default();
    for i in 0..num_instances {
        let instance_seed = seed.wrapping_add(i as u64);
        let mut rng = oracle_rng(instance_seed.wrapping_mul(2).wrapping_add(1));

        // Eq. 1: four-term split vs the undecomposed sum
        let model: DiscretePomdp<f64> = random_pomdp(&mut rng, 4);
        let rewards = random_rewards_sa::<f64>(&mut rng, model.num_states(), model.num_actions());
        let optimality = ValueEncoding::optimality_from(&rewards).unwrap();
        let policy = Policy::stationary(random_policy_rows(
            &mut rng,
            model.num_states(),
            model.num_actions(),
        ));
        let prev_belief: Categorical<f64> = random_simplex(&mut rng, model.num_states());
        let prev_action = rng.gen_range(0..model.num_actions());
        let q_state: Categorical<f64> = random_simplex(&mut rng, model.num_states());
        let mut eq1_dev = 0.0f64;
        for pin in [true, false] {
            let decomposed = cai_bound(
                &model,
                &optimality,
                &policy,
                &prev_belief,
                prev_action,
                &q_state,
                pin,
            )
            .unwrap();
            let direct = direct_bound(
                &model,
                &optimality,
                &policy,
                &q_state,
                &prev_belief,
                prev_action,
                pin,
            )
            .unwrap();
            eq1_dev = eq1_dev.max((decomposed.total + decomposition_offset - direct).abs());
            if pin {
                eq1_dev = eq1_dev.max(decomposed.state_divergence.abs());
            }
        }
        report.push(instance_seed, "eq1_direct_bound", eq1_dev, TOL_EQ1);

        // Eq. 5: stage decomposition vs the explicit joint, and the
        // intrinsic term vs the mutual-information double sum
        let obs_rewards = random_rewards_obs::<f64>(&mut rng, model.num_observations());
        let efe_encoding = ValueEncoding::biased_prior_from(&obs_rewards).unwrap();
        let preference = match &efe_encoding {
            ValueEncoding::BiasedObservationPrior { prior } => prior.clone(),
            _ => unreachable!(),
        };
        let plan = random_plan(&mut rng, &model);
        let traj = predict_states(&model, &plan, model.initial_belief()).unwrap();
        let mut eq5_dev = 0.0f64;
        let mut mi_dev = 0.0f64;
        for t in 0..plan.len() {
            let stage = efe_stage(&model, &efe_encoding, &plan, t, &traj).unwrap();
            let (direct_total, direct_mi) = direct_efe_stage(&model, &preference, traj.belief(t));
            eq5_dev = eq5_dev.max((stage.total - direct_total).abs());
            mi_dev = mi_dev.max((stage.intrinsic - direct_mi).abs());
        }
        report.push(instance_seed, "eq5_joint_decomposition", eq5_dev, TOL_EQ5);
        report.push(instance_seed, "eq5_intrinsic_mutual_info", mi_dev, TOL_MUTUAL_INFO);

        // joint-table marginals reproduce the rollout beliefs
        let joint = exact_joint(&model, &plan, DEFAULT_JOINT_CAP).unwrap();
        let mut marginal_dev = (joint.total_mass() - 1.0).abs();
        for t in 0..plan.len() {
            let marginal = joint.state_marginal(t, model.num_states());
            for (s, &m) in marginal.iter().enumerate() {
                marginal_dev = marginal_dev.max((m - traj.belief(t).prob(s)).abs());
            }
        }
        report.push(
            instance_seed,
            "joint_state_marginals",
            marginal_dev,
            TOL_JOINT_MARGINALS,
        );

        // Eq. 6: policy-form decomposition vs enumeration
        let mdp: DiscretePomdp<f64> = random_mdp(&mut rng, 3, false, true);
        let mdp_obs_rewards = random_rewards_obs::<f64>(&mut rng, mdp.num_observations());
        let mdp_efe = ValueEncoding::biased_prior_from(&mdp_obs_rewards).unwrap();
        let mdp_pref = match &mdp_efe {
            ValueEncoding::BiasedObservationPrior { prior } => prior.clone(),
            _ => unreachable!(),
        };
        let rows = random_policy_rows::<f64>(&mut rng, mdp.num_states(), mdp.num_actions());
        let mdp_q: Categorical<f64> = random_simplex(&mut rng, mdp.num_states());
        let decomposed =
            aif_policy_objective(&mdp, &mdp_efe, &Policy::stationary(rows.clone()), &mdp_q)
                .unwrap();
        let direct = direct_policy_efe(&mdp, &mdp_pref, &rows, &mdp_q);
        report.push(
            instance_seed,
            "eq6_policy_decomposition",
            (decomposed.total - direct).abs(),
            TOL_EQ6,
        );

        // softmax optimality of the plan posterior, strictness under
        // perturbation, and the evidence bound
        let small = model.clone().with_horizon(model.horizon().min(3)).unwrap();
        let posterior = plan_posterior_uniform(
            &small,
            &optimality,
            FunctionalKind::CaiPlanStage,
            crate::planners::DEFAULT_ENUM_CAP,
        )
        .unwrap();
        let totals: Vec<f64> = posterior.totals().iter().map(|b| b.total).collect();
        let prior = Categorical::uniform(posterior.len()).unwrap();
        let at_posterior = plan_distribution_bound(posterior.probs(), &prior, &totals);
        report.push(
            instance_seed,
            "softmax_optimality",
            (at_posterior + posterior.log_partition()).abs(),
            TOL_SOFTMAX_OPTIMALITY,
        );
        let mut min_margin = f64::INFINITY;
        for _ in 0..100 {
            let perturbed: Categorical<f64> = random_simplex(&mut rng, posterior.len());
            if kl_divergence(&perturbed, posterior.probs()).is_ok_and(|kl| kl < 1e-12) {
                continue;
            }
            let bound = plan_distribution_bound(&perturbed, &prior, &totals);
            min_margin = min_margin.min(bound - at_posterior);
        }
        report.push(
            instance_seed,
            "softmax_strict_minimum",
            (-min_margin).max(0.0),
            f64::MIN_POSITIVE,
        );

        let mut elbo_slack = 0.0f64;
        for plan in
            enumerate_plans(small.num_actions(), small.horizon(), 200).unwrap_or_default()
        {
            let total =
                total_over_horizon(&small, &optimality, FunctionalKind::CaiPlanStage, &plan)
                    .unwrap();
            let evidence =
                exact_log_evidence(&small, &optimality, &plan, DEFAULT_JOINT_CAP).unwrap();
            elbo_slack = elbo_slack.max(-(evidence + total.total));
        }
        report.push(instance_seed, "elbo_evidence", elbo_slack.max(0.0), TOL_ELBO);

        // plan/policy agreement at horizon one on a known-start MDP
        let h1: DiscretePomdp<f64> = random_mdp(&mut rng, 1, true, true)
            .with_horizon(1)
            .unwrap();
        let h1_rewards = random_rewards_sa::<f64>(&mut rng, h1.num_states(), h1.num_actions());
        let h1_enc = ValueEncoding::optimality_from(&h1_rewards).unwrap();
        let soft = soft_policy_backward(&h1, &h1_enc).unwrap();
        let h1_posterior = plan_posterior_uniform(
            &h1,
            &h1_enc,
            FunctionalKind::CaiPlanStage,
            crate::planners::DEFAULT_ENUM_CAP,
        )
        .unwrap();
        let start = (0..h1.num_states())
            .find(|&s| h1.initial_belief().prob(s) == 1.0)
            .expect("deterministic start state");
        let policy_row = soft.action_dist(0, start);
        let mut h1_dev = 0.0f64;
        for (i, plan) in h1_posterior.plans().iter().enumerate() {
            h1_dev = h1_dev.max(
                (h1_posterior.probs().prob(i) - policy_row.prob(plan.first_action())).abs(),
            );
        }
        report.push(instance_seed, "plan_policy_h1", h1_dev, TOL_PLAN_POLICY);
    }

    let mut suite = equivalence_suite(seed, num_instances);
    report.records.append(&mut suite.records);
    report
}
