//! Exact finite categorical probability primitives.
//!
//! Everything downstream works in natural log (nats). Zero probabilities
//! follow the measure-theoretic convention `0 ln 0 = 0`; dividing by a zero
//! probability where the numerator has mass is an absolute-continuity
//! violation and is reported as a hard error rather than returned as
//! infinity.

use thiserror::Error;

use crate::scalar::{real, Scalar};

/// Errors from constructing or combining categorical distributions.
#[derive(Debug, Error, PartialEq)]
pub enum ProbError {
    #[error("distribution must have at least one outcome")]
    Empty,
    #[error("negative probability {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("non-finite probability at index {index}")]
    NonFiniteEntry { index: usize },
    #[error("probabilities sum to {sum}, outside the renormalization tolerance")]
    NotNormalized { sum: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("absolute continuity violated: p[{index}] > 0 but q[{index}] = 0")]
    AbsoluteContinuity { index: usize },
    #[error("log weight at index {index} is NaN or +inf")]
    InvalidLogWeight { index: usize },
    #[error("all log weights are -inf")]
    AllNegInfinite,
}

/// Largest accepted deviation of an input's sum from 1 before rejection.
///
/// 1e-9 for f64; for narrower scalars the bound widens to a small multiple
/// of the machine epsilon so that honest f32 arithmetic still constructs.
fn renorm_tolerance<F: Scalar>(dim: usize) -> F {
    let eps_bound = F::epsilon() * real::<F>(16.0 * dim as f64);
    eps_bound.max(real(1e-9))
}

/// Probability distribution over a finite set of outcomes.
///
/// Invariants: every entry is nonnegative and finite, the dimension is at
/// least 1, and the entries sum to 1 within 1e-12 (ensured by renormalizing
/// on construction).
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical<F: Scalar> {
    probs: Vec<F>,
}

impl<F: Scalar> Categorical<F> {
    /// Validate and renormalize a probability vector.
    ///
    /// Inputs whose sum deviates from 1 by more than the renormalization
    /// tolerance are rejected; smaller drift is divided out.
    pub fn new(probs: Vec<F>) -> Result<Self, ProbError> {
        if probs.is_empty() {
            return Err(ProbError::Empty);
        }
        for (index, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(ProbError::NonFiniteEntry { index });
            }
            if p < F::zero() {
                return Err(ProbError::NegativeEntry {
                    index,
                    value: crate::scalar::to_f64(p),
                });
            }
        }
        let sum: F = probs.iter().copied().sum();
        if (sum - F::one()).abs() > renorm_tolerance::<F>(probs.len()) {
            return Err(ProbError::NotNormalized {
                sum: crate::scalar::to_f64(sum),
            });
        }
        let probs = if sum == F::one() {
            probs
        } else {
            probs.into_iter().map(|p| p / sum).collect()
        };
        Ok(Self { probs })
    }

    /// Uniform distribution over `dim` outcomes.
    pub fn uniform(dim: usize) -> Result<Self, ProbError> {
        if dim == 0 {
            return Err(ProbError::Empty);
        }
        let p = F::one() / real::<F>(dim as f64);
        Self::new(vec![p; dim])
    }

    /// Point mass on `outcome`.
    pub fn delta(dim: usize, outcome: usize) -> Result<Self, ProbError> {
        if dim == 0 || outcome >= dim {
            return Err(ProbError::Empty);
        }
        let mut probs = vec![F::zero(); dim];
        probs[outcome] = F::one();
        Ok(Self { probs })
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn prob(&self, outcome: usize) -> F {
        self.probs[outcome]
    }

    /// Outcomes carrying strictly positive mass.
    pub fn support(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.probs
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, p)| p > F::zero())
    }
}

/// Unnormalized log-potentials, one per outcome.
///
/// Entries may be `-inf` (zero mass) but never NaN or `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights<F: Scalar> {
    values: Vec<F>,
}

impl<F: Scalar> LogWeights<F> {
    pub fn new(values: Vec<F>) -> Result<Self, ProbError> {
        if values.is_empty() {
            return Err(ProbError::Empty);
        }
        for (index, &w) in values.iter().enumerate() {
            if w.is_nan() || w == F::infinity() {
                return Err(ProbError::InvalidLogWeight { index });
            }
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }
}

/// `D_KL(p || q) = sum_i p_i ln(p_i / q_i)` in nats.
///
/// Outcomes with `p_i = 0` contribute nothing; `p_i > 0` with `q_i = 0` is
/// an absolute-continuity error, not infinity.
pub fn kl_divergence<F: Scalar>(p: &Categorical<F>, q: &Categorical<F>) -> Result<F, ProbError> {
    if p.dim() != q.dim() {
        return Err(ProbError::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    let mut acc = F::zero();
    for (index, &pi) in p.probs().iter().enumerate() {
        if pi > F::zero() {
            let qi = q.prob(index);
            if qi <= F::zero() {
                return Err(ProbError::AbsoluteContinuity { index });
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc)
}

/// Shannon entropy `-sum_i p_i ln p_i` in nats, with `0 ln 0 = 0`.
pub fn entropy<F: Scalar>(p: &Categorical<F>) -> F {
    let mut acc = F::zero();
    for &pi in p.probs() {
        if pi > F::zero() {
            acc = acc - pi * pi.ln();
        }
    }
    acc
}

/// Normalize log weights into a distribution: `p_i = exp(w_i - lse(w))`.
///
/// Stable under max-subtraction and invariant to adding a constant.
pub fn softmax<F: Scalar>(w: &LogWeights<F>) -> Result<Categorical<F>, ProbError> {
    let max = max_weight(w)?;
    let unnorm: Vec<F> = w.values().iter().map(|&v| (v - max).exp()).collect();
    let z: F = unnorm.iter().copied().sum();
    Categorical::new(unnorm.into_iter().map(|u| u / z).collect())
}

/// `ln sum_i exp(w_i)` with max-subtraction; at least `max(w)`.
pub fn log_sum_exp<F: Scalar>(w: &LogWeights<F>) -> Result<F, ProbError> {
    let max = max_weight(w)?;
    let sum: F = w.values().iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

fn max_weight<F: Scalar>(w: &LogWeights<F>) -> Result<F, ProbError> {
    let max = w
        .values()
        .iter()
        .copied()
        .fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return Err(ProbError::AllNegInfinite);
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    /// Compensated (Kahan) summation, the independent accumulation oracle.
    fn kahan_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
        let mut sum = 0.0;
        let mut carry = 0.0;
        for t in terms {
            let y = t - carry;
            let s = sum + y;
            carry = (s - sum) - y;
            sum = s;
        }
        sum
    }

    fn cat(probs: &[f64]) -> Categorical<f64> {
        Categorical::new(probs.to_vec()).unwrap()
    }

    #[test]
    fn constructor_renormalizes_small_drift() {
        let c = Categorical::new(vec![0.5 + 4e-10, 0.5]).unwrap();
        let sum: f64 = c.probs().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constructor_rejects_bad_rows() {
        assert!(matches!(
            Categorical::new(vec![0.25, 0.25]),
            Err(ProbError::NotNormalized { .. })
        ));
        assert!(matches!(
            Categorical::new(vec![-0.1, 1.1]),
            Err(ProbError::NegativeEntry { .. })
        ));
        assert_eq!(Categorical::<f64>::new(vec![]), Err(ProbError::Empty));
    }

    #[test]
    fn kl_identical_is_exactly_zero() {
        let p = cat(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_delta_against_uniform_is_ln_2() {
        let p = cat(&[1.0, 0.0]);
        let q = cat(&[0.5, 0.5]);
        assert!((kl_divergence(&p, &q).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_termwise_kahan_oracle() {
        let p = cat(&[0.1, 0.2, 0.3, 0.4]);
        let q = cat(&[0.4, 0.3, 0.2, 0.1]);
        let oracle = kahan_sum(
            p.probs()
                .iter()
                .zip(q.probs())
                .map(|(&pi, &qi)| pi * (pi / qi).ln()),
        );
        assert!((kl_divergence(&p, &q).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn kl_reports_support_violation() {
        let p = cat(&[0.5, 0.5]);
        let q = cat(&[1.0, 0.0]);
        assert_eq!(
            kl_divergence(&p, &q),
            Err(ProbError::AbsoluteContinuity { index: 1 })
        );
    }

    #[test]
    fn kl_reports_dimension_mismatch() {
        let p = cat(&[0.5, 0.5]);
        let q = cat(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(
            kl_divergence(&p, &q),
            Err(ProbError::DimensionMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn entropy_of_point_mass_is_zero() {
        assert_eq!(entropy(&cat(&[1.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn entropy_of_uniform_is_ln_dim() {
        let h = entropy(&Categorical::<f64>::uniform(4).unwrap());
        assert!((h - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_equals_ln_n_minus_kl_to_uniform() {
        let p = cat(&[0.1, 0.15, 0.2, 0.25, 0.3]);
        let u = Categorical::uniform(5).unwrap();
        let identity = 5.0_f64.ln() - kl_divergence(&p, &u).unwrap();
        assert!((entropy(&p) - identity).abs() < 1e-12);
    }

    #[test]
    fn softmax_symmetry_and_shift() {
        let s = softmax(&LogWeights::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(s.probs(), &[0.5, 0.5]);
        let s3 = softmax(&LogWeights::new(vec![7.25_f64; 3]).unwrap()).unwrap();
        for &p in s3.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let s = softmax(&LogWeights::new(vec![1.0_f64.ln(), 3.0_f64.ln()]).unwrap()).unwrap();
        assert!((s.prob(0) - 0.25).abs() < 1e-15);
        assert!((s.prob(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_neg_infinity_entries() {
        let s = softmax(&LogWeights::new(vec![f64::NEG_INFINITY, 0.0]).unwrap()).unwrap();
        assert_eq!(s.probs(), &[0.0, 1.0]);
        assert_eq!(
            softmax(&LogWeights::new(vec![f64::NEG_INFINITY; 3]).unwrap()),
            Err(ProbError::AllNegInfinite)
        );
    }

    #[test]
    fn log_weights_reject_nan_and_pos_inf() {
        assert_eq!(
            LogWeights::new(vec![0.0, f64::NAN]),
            Err(ProbError::InvalidLogWeight { index: 1 })
        );
        assert_eq!(
            LogWeights::new(vec![f64::INFINITY]),
            Err(ProbError::InvalidLogWeight { index: 0 })
        );
    }

    #[test]
    fn log_sum_exp_closed_forms() {
        assert_eq!(log_sum_exp(&LogWeights::new(vec![0.0]).unwrap()).unwrap(), 0.0);
        let lse = log_sum_exp(&LogWeights::new(vec![2.0_f64.ln(), 3.0_f64.ln()]).unwrap()).unwrap();
        assert!((lse - 5.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_matches_kahan_oracle() {
        let w: Vec<f64> = (0..10).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let oracle = kahan_sum(w.iter().map(|&v| v.exp())).ln();
        let lse = log_sum_exp(&LogWeights::new(w).unwrap()).unwrap();
        assert!((lse - oracle).abs() < 1e-12);
    }

    prop_compose! {
        fn simplex(dim: usize)(raw in prop::collection::vec(1e-3..1.0f64, dim)) -> Categorical<f64> {
            let sum: f64 = raw.iter().sum();
            Categorical::new(raw.into_iter().map(|x| x / sum).collect()).unwrap()
        }
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(p in simplex(4), q in simplex(4)) {
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
        }

        #[test]
        fn softmax_is_shift_invariant(w in prop::collection::vec(-20.0..20.0f64, 1..8), c in -50.0..50.0f64) {
            let base = softmax(&LogWeights::new(w.clone()).unwrap()).unwrap();
            let shifted = softmax(&LogWeights::new(w.iter().map(|v| v + c).collect()).unwrap()).unwrap();
            for (a, b) in base.probs().iter().zip(shifted.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn exp_lse_matches_direct_sum(w in prop::collection::vec(-30.0..30.0f64, 1..12)) {
            let direct: f64 = w.iter().map(|v| v.exp()).sum();
            let lse = log_sum_exp(&LogWeights::new(w).unwrap()).unwrap();
            prop_assert!((lse.exp() - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        }

        #[test]
        fn lse_dominates_max(w in prop::collection::vec(-30.0..30.0f64, 1..12)) {
            let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = log_sum_exp(&LogWeights::new(w).unwrap()).unwrap();
            prop_assert!(lse >= max - 1e-12);
        }

        #[test]
        fn entropy_bounded_by_ln_dim(p in simplex(6)) {
            let h = entropy(&p);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= 6.0_f64.ln() + 1e-12);
        }
    }
}
