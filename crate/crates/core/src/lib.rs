//! Exact, desk-scale planning-as-inference on discrete POMDPs.
//!
//! Two families of agents share one generative model and differ only in how
//! value enters it: reward-as-optimality-likelihood (soft/maximum-entropy
//! control) versus preference-biased priors or likelihoods over
//! observations (expected-free-energy agents). Every objective is computed
//! exactly and returned as a per-term breakdown, planners act by minimizing
//! the objectives over enumerated plans or by backward recursion, and a
//! brute-force oracle certifies each decomposition and equivalence claim.
//!
//! All math is generic over the floating-point scalar through
//! [`scalar::Scalar`]; the `*64` aliases below are the concrete types used
//! by the CLI and the test suites.

pub mod model;
pub mod objectives;
pub mod oracle;
pub mod planners;
pub mod prob;
pub mod rollout;
pub mod scalar;

pub use scalar::Scalar;

/// Concrete `f64` aliases for the public types.
pub type Categorical64 = prob::Categorical<f64>;
pub type LogWeights64 = prob::LogWeights<f64>;
pub type DiscretePomdp64 = model::DiscretePomdp<f64>;
pub type RewardTable64 = model::RewardTable<f64>;
pub type ValueEncoding64 = model::ValueEncoding<f64>;
pub type BeliefTrajectory64 = rollout::BeliefTrajectory<f64>;
pub type ObjectiveBreakdown64 = objectives::ObjectiveBreakdown<f64>;
pub type Policy64 = objectives::Policy<f64>;
pub type PlanPosterior64 = planners::PlanPosterior<f64>;
