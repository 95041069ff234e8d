//! Dirichlet evidence arithmetic.
//!
//! A perception source emits per-class evidence `alpha` (Dirichlet parameters). From it:
//! `p_k = alpha_k / S` with `S = sum(alpha)`, epistemic uncertainty `u = K / S`, and the total
//! uncertainty of a probability vector as its entropy normalised by `ln K`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities below this are clamped before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EvidenceError {
    #[error("evidence vector is empty")]
    Empty,
    #[error("evidence for class {class} is negative or not finite ({value})")]
    Invalid { class: usize, value: f64 },
    #[error("total evidence must be positive, got {0}")]
    Degenerate(f64),
    #[error("probabilities must be non-negative and sum to one (sum = {0})")]
    NotNormalized(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceVector {
    alpha: Vec<f64>,
}

impl EvidenceVector {
    /// Evidence with every entry finite and non-negative.
    pub fn new(alpha: Vec<f64>) -> Result<Self, EvidenceError> {
        check_alpha(&alpha)?;
        Ok(Self { alpha })
    }

    /// Evidence from raw network logits: `softplus(o) + 1`, so every entry is at least one.
    pub fn from_logits(logits: &[f64]) -> Self {
        let alpha = logits
            .iter()
            .map(|&o| {
                // softplus without overflow for large o
                let sp = if o > 30.0 { o } else { o.exp().ln_1p() };
                sp + 1.0
            })
            .collect();
        Self { alpha }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.alpha
    }

    /// Number of classes K.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Total evidence S.
    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            alpha: self.alpha.iter().map(|a| a * c).collect(),
        }
    }

    pub fn probabilities(&self) -> Result<ProbabilityVector, EvidenceError> {
        probabilities(self)
    }

    pub fn epistemic_uncertainty(&self) -> Result<f64, EvidenceError> {
        epistemic_uncertainty(self)
    }
}

fn check_alpha(alpha: &[f64]) -> Result<(), EvidenceError> {
    if alpha.is_empty() {
        return Err(EvidenceError::Empty);
    }
    if let Some((class, &value)) = alpha
        .iter()
        .enumerate()
        .find(|(_, a)| !a.is_finite() || **a < 0.0)
    {
        return Err(EvidenceError::Invalid { class, value });
    }
    Ok(())
}

fn checked_total(alpha: &[f64]) -> Result<f64, EvidenceError> {
    check_alpha(alpha)?;
    let s: f64 = alpha.iter().sum();
    if !(s > 0.0) {
        return Err(EvidenceError::Degenerate(s));
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self, EvidenceError> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(EvidenceError::NotNormalized(sum));
        }
        Ok(Self { p })
    }

    /// Normalises non-negative weights; used where the caller guarantees a positive total.
    pub(crate) fn from_weights_unchecked(mut p: Vec<f64>) -> Self {
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Self { p }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.p)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn probabilities(e: &EvidenceVector) -> Result<ProbabilityVector, EvidenceError> {
    let s = checked_total(&e.alpha)?;
    Ok(ProbabilityVector {
        p: e.alpha.iter().map(|a| a / s).collect(),
    })
}

/// `K / S`, clamped to at most one.
pub fn epistemic_uncertainty(e: &EvidenceVector) -> Result<f64, EvidenceError> {
    let s = checked_total(&e.alpha)?;
    Ok((e.alpha.len() as f64 / s).min(1.0))
}

/// Shannon entropy of `p` divided by `ln K`, in [0, 1].
pub fn normalized_entropy(p: &ProbabilityVector) -> f64 {
    normalized_entropy_of(&p.p)
}

/// [`normalized_entropy`] on a raw slice assumed to be a probability vector.
pub fn normalized_entropy_of(p: &[f64]) -> f64 {
    let k = p.len();
    if k < 2 {
        return 0.0;
    }
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.max(LOG_FLOOR).ln())
        .sum();
    // `+ 0.0` turns the -0.0 of a one-hot vector into 0.0.
    (h / (k as f64).ln()).clamp(0.0, 1.0) + 0.0
}

/// Normalised entropy of the "peaked" vector with mass `a` on one class and the rest spread
/// evenly over the other `k - 1`.
pub fn peaked_entropy(a: f64, k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let rest = (1.0 - a) / (k - 1) as f64;
    let term = |v: f64| if v > 0.0 { -v * v.max(LOG_FLOOR).ln() } else { 0.0 };
    ((term(a) + (k - 1) as f64 * term(rest)) / (k as f64).ln()).clamp(0.0, 1.0) + 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(a: &[f64]) -> EvidenceVector {
        EvidenceVector::new(a.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn probabilities_examples() {
        assert!(close(
            ev(&[1.0, 1.0, 1.0, 1.0]).probabilities().unwrap().as_slice(),
            &[0.25; 4]
        ));
        assert!(close(
            ev(&[5.0, 1.0, 1.0, 1.0]).probabilities().unwrap().as_slice(),
            &[0.625, 0.125, 0.125, 0.125]
        ));
        assert!(close(
            ev(&[2.0, 2.0]).probabilities().unwrap().as_slice(),
            &[0.5, 0.5]
        ));
    }

    #[test]
    fn epistemic_examples() {
        assert_eq!(ev(&[1.0; 4]).epistemic_uncertainty().unwrap(), 1.0);
        assert!((ev(&[97.0, 1.0, 1.0, 1.0]).epistemic_uncertainty().unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(ev(&[1.0, 1.0]).epistemic_uncertainty().unwrap(), 1.0);
        // Sub-unit aggregated evidence would give K/S > 1.
        assert_eq!(ev(&[0.5, 0.5]).epistemic_uncertainty().unwrap(), 1.0);
    }

    #[test]
    fn degenerate_evidence_is_an_error() {
        assert_eq!(
            ev(&[0.0, 0.0]).probabilities(),
            Err(EvidenceError::Degenerate(0.0))
        );
        assert!(EvidenceVector::new(vec![1.0, -0.1]).is_err());
        assert!(EvidenceVector::new(vec![f64::NAN]).is_err());
        assert_eq!(EvidenceVector::new(vec![]), Err(EvidenceError::Empty));
    }

    #[test]
    fn entropy_examples() {
        let uniform = ProbabilityVector::new(vec![0.25; 4]).unwrap();
        assert!((normalized_entropy(&uniform) - 1.0).abs() < 1e-12);
        let one_hot = ProbabilityVector::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(normalized_entropy(&one_hot), 0.0);
        // -(0.625 ln 0.625 + 3 * 0.125 ln 0.125) / ln 4, evaluated independently.
        let p = ProbabilityVector::new(vec![0.625, 0.125, 0.125, 0.125]).unwrap();
        assert!((normalized_entropy(&p) - 0.7743974703476993).abs() < 1e-12);
        assert!((peaked_entropy(0.625, 4) - 0.7743974703476993).abs() < 1e-12);
    }

    #[test]
    fn softplus_logits_give_at_least_unit_evidence() {
        let e = EvidenceVector::from_logits(&[-50.0, 0.0, 3.0, 100.0]);
        assert!(e.alpha().iter().all(|a| *a >= 1.0));
        assert!((e.alpha()[1] - (1.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(e.alpha()[3], 101.0);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_tie() {
        assert_eq!(argmax(&[0.3, 0.3, 0.4]), 2);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    fn alpha_strategy() -> impl Strategy<Value = Vec<f64>> {
        (2usize..8).prop_flat_map(|k| proptest::collection::vec(1.0..100.0f64, k))
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_u_is_k_over_s(alpha in alpha_strategy()) {
            let e = ev(&alpha);
            let p = e.probabilities().unwrap();
            let s: f64 = alpha.iter().sum();
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let u = e.epistemic_uncertainty().unwrap();
            prop_assert!(u > 0.0 && u <= 1.0);
            prop_assert!((u - alpha.len() as f64 / s).abs() < 1e-12);
        }

        #[test]
        fn scaling_keeps_p_and_divides_u(alpha in alpha_strategy(), c in 1.0..50.0f64) {
            let e = ev(&alpha);
            let scaled = e.scaled(c);
            prop_assert!(close(e.probabilities().unwrap().as_slice(), scaled.probabilities().unwrap().as_slice()));
            let (u, us) = (e.epistemic_uncertainty().unwrap(), scaled.epistemic_uncertainty().unwrap());
            prop_assert!((us - u / c).abs() < 1e-12);
        }

        #[test]
        fn entropy_bounds_and_permutation_invariance(alpha in alpha_strategy(), shift in 0usize..8) {
            let p = ev(&alpha).probabilities().unwrap();
            let h = normalized_entropy(&p);
            prop_assert!((0.0..=1.0).contains(&h));
            let mut rotated = p.as_slice().to_vec();
            let n = rotated.len();
            rotated.rotate_left(shift % n);
            let hr = normalized_entropy(&ProbabilityVector::new(rotated).unwrap());
            prop_assert!((h - hr).abs() < 1e-12);
        }
    }
}
