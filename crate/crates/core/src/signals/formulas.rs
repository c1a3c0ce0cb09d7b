use pcib_backends::TokenLogliks;
use serde::{Deserialize, Serialize};

use super::lexicon::HedgeLexicon;
use super::text::word_set;
use super::{ConflictAggregation, SignalError, SignalVector};
use crate::mathkit::{geometric_mean, harmonic_mean, jaccard_similarity};

/// Mean per-token log-likelihood gain from adding the context, clipped at 0.
pub fn uptake(post: &TokenLogliks, prior: &TokenLogliks) -> Result<f64, SignalError> {
    if post.len() != prior.len() {
        return Err(SignalError::Alignment {
            post: post.len(),
            prior: prior.len(),
        });
    }
    let gain: f64 = post
        .logliks()
        .iter()
        .zip(prior.logliks())
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / post.len() as f64;
    Ok(gain.max(0.0))
}

fn check_nested(name: &str, values: &[Vec<f64>]) -> Result<(), SignalError> {
    if values.is_empty() {
        return Err(SignalError::Precondition(format!("{name}: no claims")));
    }
    for (i, inner) in values.iter().enumerate() {
        if inner.is_empty() {
            return Err(SignalError::Precondition(format!("{name}: claim {i} has no perturbations")));
        }
        if let Some(v) = inner.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SignalError::Precondition(format!("{name}: value {v} outside [0, 1]")));
        }
    }
    Ok(())
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Mean over claims of the mean JS divergence over that claim's paraphrases.
pub fn stress(per_claim_js: &[Vec<f64>]) -> Result<f64, SignalError> {
    check_nested("stress", per_claim_js)?;
    Ok(mean(per_claim_js.iter().map(|inner| mean(inner.iter().copied()))))
}

pub fn conflict(per_claim_contradiction: &[Vec<f64>], mode: ConflictAggregation) -> Result<f64, SignalError> {
    check_nested("conflict", per_claim_contradiction)?;
    let claim_max = |inner: &Vec<f64>| inner.iter().copied().fold(0.0, f64::max);
    Ok(match mode {
        ConflictAggregation::MeanOfMax => mean(per_claim_contradiction.iter().map(claim_max)),
        ConflictAggregation::Max => per_claim_contradiction.iter().map(claim_max).fold(0.0, f64::max),
    })
}

/// Mean pairwise Jaccard similarity between the traces' word sets.
pub fn rationalization<S: AsRef<str>>(traces: &[S]) -> Result<f64, SignalError> {
    if traces.len() < 2 {
        return Err(SignalError::Precondition(format!(
            "rationalization needs at least 2 traces, got {}",
            traces.len()
        )));
    }
    let sets: Vec<_> = traces.iter().map(|t| word_set(t.as_ref())).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for j in 0..sets.len() {
        for k in j + 1..sets.len() {
            total += jaccard_similarity(&sets[j], &sets[k]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

pub fn entity_uptake(u_base: f64, density: f64, alpha: f64) -> f64 {
    u_base * (1.0 + alpha * density)
}

pub fn context_adherence(stress: f64, context_word_count: usize, norm_words: usize) -> f64 {
    let availability = (context_word_count as f64 / norm_words as f64).min(1.0);
    availability / (1.0 + stress)
}

pub fn falsifiability_from_counts(conflict: f64, n_definitive: usize, n_hedge: usize, beta: f64) -> f64 {
    let balance = n_definitive as f64 - n_hedge as f64;
    conflict * (1.0 + beta * balance).max(0.0)
}

pub fn falsifiability(conflict: f64, answer: &str, lexicon: &HedgeLexicon, beta: f64) -> f64 {
    let (n_def, n_hedge) = lexicon.count(answer);
    falsifiability_from_counts(conflict, n_def, n_hedge, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Esi {
    pub harmonic: f64,
    pub geometric: f64,
    /// Normalized (uptake, stability, consistency), each floored at epsilon.
    pub components: [f64; 3],
}

/// Evidence Sufficiency Index. Components are oriented so that high means
/// trustworthy: u/(1+u), 1-s and 1-cf, each floored at `epsilon`.
pub fn esi(u: f64, s: f64, cf: f64, epsilon: f64) -> Esi {
    let floor = |x: f64| if x.is_finite() { x.clamp(epsilon, 1.0) } else { epsilon };
    let components = [floor(u / (1.0 + u)), floor(1.0 - s), floor(1.0 - cf)];
    // components are all >= epsilon > 0, so the means cannot fail
    let harmonic = harmonic_mean(&components).unwrap_or(epsilon);
    let geometric = geometric_mean(&components).unwrap_or(epsilon);
    Esi {
        harmonic,
        geometric: geometric.max(harmonic),
        components,
    }
}

/// Theory-guided hallucination risk: 1 - ESI_harm.
pub fn risk_score(v: &SignalVector) -> f64 {
    (1.0 - v.esi_harm).clamp(0.0, 1.0)
}

/// Naive baseline: unweighted mean of the raw uptake, stress, conflict and
/// rationalization values with no orientation correction.
pub fn simple_average_score(v: &SignalVector) -> f64 {
    (v.uptake + v.stress + v.conflict + v.rationalization) / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ll(values: &[f64]) -> TokenLogliks {
        TokenLogliks::new(
            (0..values.len()).map(|i| format!("t{i}")).collect(),
            values.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn uptake_examples() {
        assert_eq!(uptake(&ll(&[-1.0, -2.0]), &ll(&[-1.0, -2.0])).unwrap(), 0.0);
        assert_eq!(uptake(&ll(&[-1.0, -1.0]), &ll(&[-2.0, -3.0])).unwrap(), 1.5);
        assert_eq!(uptake(&ll(&[-3.0]), &ll(&[-1.0])).unwrap(), 0.0);
        assert!(matches!(
            uptake(&ll(&[-1.0]), &ll(&[-1.0, -1.0])),
            Err(SignalError::Alignment { post: 1, prior: 2 })
        ));
    }

    #[test]
    fn stress_examples() {
        assert!((stress(&[vec![0.2, 0.4]]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(stress(&[vec![0.0, 0.0], vec![0.0]]).unwrap(), 0.0);
        assert!((stress(&[vec![0.2], vec![0.6]]).unwrap() - 0.4).abs() < 1e-15);
        assert!(stress(&[]).is_err());
        assert!(stress(&[vec![]]).is_err());
        assert!(stress(&[vec![1.5]]).is_err());
    }

    #[test]
    fn conflict_examples() {
        let data = [vec![0.1, 0.9], vec![0.2, 0.3]];
        assert!((conflict(&data, ConflictAggregation::MeanOfMax).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(conflict(&data, ConflictAggregation::Max).unwrap(), 0.9);
        let zeros = [vec![0.0, 0.0], vec![0.0]];
        assert_eq!(conflict(&zeros, ConflictAggregation::MeanOfMax).unwrap(), 0.0);
        assert_eq!(conflict(&zeros, ConflictAggregation::Max).unwrap(), 0.0);
    }

    #[test]
    fn rationalization_examples() {
        assert_eq!(rationalization(&["x y", "x y", "x y"]).unwrap(), 1.0);
        assert_eq!(rationalization(&["a b", "c d"]).unwrap(), 0.0);
        assert_eq!(rationalization(&["a b c", "b c d"]).unwrap(), 0.5);
        assert_eq!(rationalization(&["A, b!", "a B"]).unwrap(), 1.0);
        assert!(rationalization(&["only one"]).is_err());
    }

    #[test]
    fn enhancement_examples() {
        assert_eq!(entity_uptake(0.5, 0.25, 2.0), 0.75);
        assert_eq!(entity_uptake(0.5, 0.0, 2.0), 0.5);
        assert_eq!(entity_uptake(0.0, 0.4, 2.0), 0.0);

        assert_eq!(context_adherence(0.0, 200, 200), 1.0);
        assert_eq!(context_adherence(1.0, 100, 200), 0.25);
        assert_eq!(context_adherence(0.3, 0, 200), 0.0);

        assert!((falsifiability_from_counts(0.8, 2, 0, 0.1) - 0.96).abs() < 1e-15);
        assert_eq!(falsifiability_from_counts(0.5, 0, 12, 0.1), 0.0);
        let lex = HedgeLexicon::default();
        assert_eq!(falsifiability(0.37, "The tower is in Paris.", &lex, 0.1), 0.37);
        assert!((falsifiability(0.8, "It is definitely, certainly true.", &lex, 0.1) - 0.96).abs() < 1e-15);
    }

    #[test]
    fn esi_examples() {
        let e = esi(9.0, 0.0, 0.0, 1e-3);
        assert!((e.harmonic - 3.0 / (1.0 / 0.9 + 2.0)).abs() < 1e-12);
        assert!((e.harmonic - 0.9643).abs() < 1e-4);

        let e = esi(5.0, 1.0, 0.3, 1e-3);
        assert!(e.harmonic <= 3.0 * 1e-3);

        let e = esi(0.0, 0.0, 0.0, 1e-3);
        assert!(e.harmonic < 0.01);
        assert!((e.harmonic - 3.0 * 1e-3 / (1.0 + 2.0 * 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn risk_examples() {
        let mut v = SignalVector {
            uptake: 0.0,
            stress: 0.0,
            conflict: 0.0,
            rationalization: 0.0,
            esi_harm: 1.0,
            esi_geo: 1.0,
            entity_uptake: 0.0,
            context_adherence: 0.0,
            falsifiability: 0.0,
        };
        assert_eq!(risk_score(&v), 0.0);
        v.esi_harm = 0.2;
        assert_eq!(risk_score(&v), 0.8);
    }

    fn risk_from_raw(u: f64, s: f64, cf: f64) -> f64 {
        1.0 - esi(u, s, cf, 1e-3).harmonic
    }

    proptest! {
        #[test]
        fn risk_monotone_in_conflict(u in 0.0f64..5.0, s in 0.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(risk_from_raw(u, s, hi) >= risk_from_raw(u, s, lo) - 1e-15);
        }

        #[test]
        fn harmonic_below_geometric(u in 0.0f64..20.0, s in 0.0f64..1.0, cf in 0.0f64..1.0) {
            let e = esi(u, s, cf, 1e-3);
            let min = e.components.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min <= e.harmonic + 1e-15);
            prop_assert!(e.harmonic <= e.geometric + 1e-15);
            prop_assert!(e.harmonic > 0.0 && e.geometric <= 1.0);
        }

        #[test]
        fn stress_and_conflict_permutation_invariant(
            data in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..5), 1..5),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = data.clone();
            for inner in shuffled.iter_mut() {
                inner.shuffle(&mut rng);
            }
            shuffled.shuffle(&mut rng);
            prop_assert!((stress(&data).unwrap() - stress(&shuffled).unwrap()).abs() < 1e-12);
            for mode in [ConflictAggregation::MeanOfMax, ConflictAggregation::Max] {
                prop_assert!((conflict(&data, mode).unwrap() - conflict(&shuffled, mode).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn entity_uptake_monotone(u in 0.0f64..5.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, du in 0.0f64..1.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(entity_uptake(u, hi, 2.0) >= entity_uptake(u, lo, 2.0));
            prop_assert!(entity_uptake(u + du, lo, 2.0) >= entity_uptake(u, lo, 2.0));
        }

        #[test]
        fn adherence_monotone(s1 in 0.0f64..1.0, s2 in 0.0f64..1.0, w1 in 0usize..500, w2 in 0usize..500) {
            let (slo, shi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let (wlo, whi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            prop_assert!(context_adherence(shi, wlo, 200) <= context_adherence(slo, wlo, 200));
            prop_assert!(context_adherence(slo, whi, 200) >= context_adherence(slo, wlo, 200));
            let a = context_adherence(slo, whi, 200);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
