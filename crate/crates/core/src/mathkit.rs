//! Numeric primitives shared by the signal extractors.

use std::collections::HashSet;
use std::hash::Hash;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Discrete probability distribution with at least two outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub fn new(weights: Vec<f64>) -> Result<Self, MathError> {
        if weights.len() < 2 {
            return Err(MathError::InvalidDistribution(format!(
                "need at least 2 outcomes, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MathError::InvalidDistribution(format!("weight {w} is negative or not finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(MathError::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// sum p log2(p/q), with 0 log 0 = 0. Callers guarantee q > 0 wherever p > 0.
fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).log2())
        .sum()
}

/// Jensen-Shannon divergence in bits, so the result lies in [0, 1].
pub fn js_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64, MathError> {
    if p.len() != q.len() {
        return Err(MathError::Dimension(p.len(), q.len()));
    }
    let m: Vec<f64> = p.0.iter().zip(&q.0).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl_bits(&p.0, &m) + 0.5 * kl_bits(&q.0, &m);
    Ok(js.clamp(0.0, 1.0))
}

/// |a ∩ b| / |a ∪ b|; two empty sets count as identical.
pub fn jaccard_similarity<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn check_positive(components: &[f64]) -> Result<(), MathError> {
    if components.is_empty() {
        return Err(MathError::Domain("mean of an empty list".into()));
    }
    if let Some(c) = components.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(MathError::Domain(format!("component {c} is not strictly positive")));
    }
    Ok(())
}

pub fn harmonic_mean(components: &[f64]) -> Result<f64, MathError> {
    check_positive(components)?;
    let inv: f64 = components.iter().map(|c| 1.0 / c).sum();
    Ok(components.len() as f64 / inv)
}

/// Computed in log space to avoid underflow of long products.
pub fn geometric_mean(components: &[f64]) -> Result<f64, MathError> {
    check_positive(components)?;
    let log_sum: f64 = components.iter().map(|c| c.ln()).sum();
    Ok((log_sum / components.len() as f64).exp())
}

pub fn arithmetic_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pd(w: &[f64]) -> ProbDist {
        ProbDist::new(w.to_vec()).unwrap()
    }

    fn set(items: &[&'static str]) -> HashSet<&'static str> {
        items.iter().copied().collect()
    }

    #[test]
    fn js_examples() {
        assert_eq!(js_divergence(&pd(&[1.0, 0.0, 0.0]), &pd(&[1.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(js_divergence(&pd(&[1.0, 0.0]), &pd(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(js_divergence(&pd(&[0.5, 0.5]), &pd(&[0.5, 0.5])).unwrap(), 0.0);
    }

    #[test]
    fn js_errors() {
        assert_eq!(
            js_divergence(&pd(&[0.5, 0.5]), &pd(&[0.2, 0.3, 0.5])),
            Err(MathError::Dimension(2, 3))
        );
        assert!(ProbDist::new(vec![0.5, 0.6]).is_err());
        assert!(ProbDist::new(vec![1.0]).is_err());
        assert!(ProbDist::new(vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_similarity(&set(&["a", "b", "c"]), &set(&["a", "b", "c"])), 1.0);
        assert_eq!(jaccard_similarity(&set(&["a", "b"]), &set(&["c", "d"])), 0.0);
        assert_eq!(jaccard_similarity(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard_similarity(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(harmonic_mean(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(harmonic_mean(&[0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert!((harmonic_mean(&[1.0, 1.0, 0.01]).unwrap() - 3.0 / 102.0).abs() < 1e-15);
        assert_eq!(geometric_mean(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!((geometric_mean(&[4.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((geometric_mean(&[0.25, 0.25, 0.25]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn means_reject_non_positive() {
        assert!(matches!(harmonic_mean(&[1.0, 0.0]), Err(MathError::Domain(_))));
        assert!(matches!(geometric_mean(&[1.0, -1.0]), Err(MathError::Domain(_))));
        assert!(harmonic_mean(&[]).is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = ProbDist> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-9).then(|| ProbDist::new(raw.iter().map(|x| x / s).collect()).ok())?
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn js_is_symmetric_and_bounded((p, q) in (2usize..6).prop_flat_map(|n| (simplex(n), simplex(n)))) {
            let pq = js_divergence(&p, &q).unwrap();
            let qp = js_divergence(&q, &p).unwrap();
            prop_assert!((pq - qp).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
        }

        #[test]
        fn mean_ordering(c in prop::collection::vec(1e-6f64..10.0, 1..12)) {
            let h = harmonic_mean(&c).unwrap();
            let g = geometric_mean(&c).unwrap();
            let a = arithmetic_mean(&c).unwrap();
            let min = c.iter().copied().fold(f64::INFINITY, f64::min);
            let tol = 1e-12 * a.max(1.0);
            prop_assert!(min <= h + tol);
            prop_assert!(h <= g + tol);
            prop_assert!(g <= a + tol);
            prop_assert!(h <= c.len() as f64 * min + tol);
        }

        #[test]
        fn jaccard_symmetric(a in prop::collection::hash_set(0u8..20, 0..10), b in prop::collection::hash_set(0u8..20, 0..10)) {
            prop_assert_eq!(jaccard_similarity(&a, &b), jaccard_similarity(&b, &a));
            prop_assert_eq!(jaccard_similarity(&a, &a), 1.0);
        }
    }
}
