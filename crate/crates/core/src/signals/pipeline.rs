//! Per-triple orchestration: likelihood scoring, claim perturbation with NLI,
//! reasoning traces, then the enhancement and composite formulas.

use pcib_backends::{BackendError, LanguageModel, NliDistribution, NliModel};
use rayon::prelude::*;

use super::formulas::{
    conflict, context_adherence, entity_uptake, esi, falsifiability, rationalization, stress, uptake,
};
use super::lexicon::HedgeLexicon;
use super::text::{count_words, entity_density};
use super::{SignalConfig, SignalError, SignalVector};
use crate::dataset::QcaTriple;
use crate::mathkit::{js_divergence, ProbDist};

/// Signal config plus hedge lexicon, validated once and reused per triple.
#[derive(Debug, Clone)]
pub struct SignalExtractor {
    cfg: SignalConfig,
    lexicon: HedgeLexicon,
}

struct ClaimOutcome {
    js: Vec<f64>,
    contradiction: Vec<f64>,
}

fn to_dist(d: NliDistribution) -> Result<ProbDist, SignalError> {
    let raw = d.as_array();
    let sum: f64 = raw.iter().sum();
    Ok(ProbDist::new(raw.iter().map(|x| x / sum).collect())?)
}

impl SignalExtractor {
    pub fn new(cfg: SignalConfig, lexicon: HedgeLexicon) -> Result<Self, SignalError> {
        cfg.validate()?;
        Ok(Self { cfg, lexicon })
    }

    pub fn config(&self) -> &SignalConfig {
        &self.cfg
    }

    pub fn lexicon(&self) -> &HedgeLexicon {
        &self.lexicon
    }

    /// Runs the full pipeline for one triple. Independent backend calls run
    /// concurrently; results are assembled in claim order.
    ///
    /// A triple without context skips likelihood scoring (uptake = 0,
    /// adherence = 0) and uses the question as the NLI premise for stress.
    pub fn extract(
        &self,
        triple: &QcaTriple,
        llm: &dyn LanguageModel,
        nli: &dyn NliModel,
    ) -> Result<SignalVector, SignalError> {
        triple
            .validate()
            .map_err(|e| SignalError::Precondition(e.to_string()))?;
        let annotate = |source: BackendError| SignalError::Backend {
            id: triple.id.clone(),
            source,
        };
        let cfg = &self.cfg;
        let has_context = triple.has_context();

        let ((u, per_claim), r) = rayon::join(
            || {
                rayon::join(
                    || self.uptake_step(triple, llm, has_context, &annotate),
                    || self.claims_step(triple, llm, nli, has_context, &annotate),
                )
            },
            || {
                let traces = llm
                    .reasoning_traces(&triple.question, &triple.answer, cfg.m_traces)
                    .map_err(&annotate)?;
                rationalization(&traces)
            },
        );
        let u = u?;
        let per_claim = per_claim?;
        let r = r?;

        let js: Vec<Vec<f64>> = per_claim.iter().map(|c| c.js.clone()).collect();
        let contra: Vec<Vec<f64>> = per_claim.into_iter().map(|c| c.contradiction).collect();
        let s = stress(&js)?;
        let cf = conflict(&contra, cfg.conflict_aggregation)?;

        let density = entity_density(&triple.answer).density;
        let context_words = if has_context { count_words(&triple.context) } else { 0 };
        let composite = esi(u, s, cf, cfg.esi_epsilon);
        let vector = SignalVector {
            uptake: u,
            stress: s,
            conflict: cf,
            rationalization: r,
            esi_harm: composite.harmonic,
            esi_geo: composite.geometric,
            entity_uptake: entity_uptake(u, density, cfg.alpha),
            context_adherence: context_adherence(s, context_words, cfg.context_norm_words),
            falsifiability: falsifiability(cf, &triple.answer, &self.lexicon, cfg.beta),
        };
        vector.validate()?;
        Ok(vector)
    }

    fn uptake_step(
        &self,
        triple: &QcaTriple,
        llm: &dyn LanguageModel,
        has_context: bool,
        annotate: &(dyn Fn(BackendError) -> SignalError + Sync),
    ) -> Result<f64, SignalError> {
        if !has_context {
            return Ok(0.0);
        }
        let (post, prior) = rayon::join(
            || llm.answer_token_logliks(&triple.question, &triple.answer, Some(&triple.context)),
            || llm.answer_token_logliks(&triple.question, &triple.answer, None),
        );
        let (post, prior) = (post.map_err(annotate)?, prior.map_err(annotate)?);
        if post.tokens() != prior.tokens() {
            return Err(SignalError::Alignment {
                post: post.len(),
                prior: prior.len(),
            });
        }
        uptake(&post, &prior)
    }

    fn claims_step(
        &self,
        triple: &QcaTriple,
        llm: &dyn LanguageModel,
        nli: &dyn NliModel,
        has_context: bool,
        annotate: &(dyn Fn(BackendError) -> SignalError + Sync),
    ) -> Result<Vec<ClaimOutcome>, SignalError> {
        let cfg = &self.cfg;
        let premise = if has_context { &triple.context } else { &triple.question };
        let claims = llm
            .extract_claims(&triple.answer, cfg.max_claims)
            .map_err(annotate)?;
        claims
            .par_iter()
            .map(|claim| {
                let variants = llm
                    .paraphrase(claim, cfg.k_perturbations, cfg.paraphrase_temperature)
                    .map_err(annotate)?;
                let original = to_dist(nli.nli_probs(premise, claim).map_err(annotate)?)?;
                let scored: Vec<(f64, f64)> = variants
                    .par_iter()
                    .map(|variant| {
                        let (perturbed, against_answer) = rayon::join(
                            || nli.nli_probs(premise, variant),
                            || nli.nli_probs(&triple.answer, variant),
                        );
                        let perturbed = to_dist(perturbed.map_err(annotate)?)?;
                        let js = js_divergence(&original, &perturbed)?;
                        Ok((js, against_answer.map_err(annotate)?.contradiction))
                    })
                    .collect::<Result<_, SignalError>>()?;
                Ok(ClaimOutcome {
                    js: scored.iter().map(|p| p.0).collect(),
                    contradiction: scored.iter().map(|p| p.1.clamp(0.0, 1.0)).collect(),
                })
            })
            .collect()
    }
}

/// One-shot convenience wrapper around [`SignalExtractor::extract`].
pub fn extract_signals(
    triple: &QcaTriple,
    cfg: &SignalConfig,
    lexicon: &HedgeLexicon,
    llm: &dyn LanguageModel,
    nli: &dyn NliModel,
) -> Result<SignalVector, SignalError> {
    SignalExtractor::new(cfg.clone(), lexicon.clone())?.extract(triple, llm, nli)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcib_backends::MockBackend;

    fn triple(context: &str, answer: &str) -> QcaTriple {
        QcaTriple::new("t1", "Where is the Eiffel Tower?", context, answer).unwrap()
    }

    fn run(t: &QcaTriple, seed: u64) -> SignalVector {
        let mock = MockBackend::new(seed);
        extract_signals(t, &SignalConfig::default(), &HedgeLexicon::default(), &mock, &mock).unwrap()
    }

    #[test]
    fn deterministic_and_valid() {
        let t = triple(
            "The Eiffel Tower is a wrought-iron tower in Paris. It was built in 1889.",
            "The Eiffel Tower is in Berlin. It was definitely built in 1920.",
        );
        let a = run(&t, 5);
        let b = run(&t, 5);
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn empty_context_takes_degenerate_path() {
        let v = run(&triple("", "The tower is in Paris."), 0);
        assert_eq!(v.uptake, 0.0);
        assert_eq!(v.context_adherence, 0.0);
        assert_eq!(v.entity_uptake, 0.0);
        assert!(v.validate().is_ok());
    }

    #[test]
    fn grounded_answer_is_stable_and_consistent() {
        let sentence = "The Eiffel Tower was built in Paris in 1889.";
        let t = triple(&format!("{sentence} It is made of wrought iron."), sentence);
        let v = run(&t, 1);
        assert!(v.stress < 1e-9, "stress {}", v.stress);
        assert!(v.conflict < 0.05, "conflict {}", v.conflict);
        assert!(v.uptake > 0.0);
    }

    #[test]
    fn ungrounded_answer_scores_riskier() {
        let ctx = "The Eiffel Tower was built in Paris in 1889. It is made of wrought iron.";
        let grounded = run(&triple(ctx, "The Eiffel Tower was built in Paris in 1889."), 2);
        let invented = run(
            &triple(ctx, "Gustave Mercier designed twelve copper spires across Lyon during 1923 festivals."),
            2,
        );
        assert!(invented.uptake < grounded.uptake);
        assert!(crate::signals::risk_score(&invented) > crate::signals::risk_score(&grounded));
    }

    #[test]
    fn backend_errors_name_the_example() {
        struct Broken;
        impl LanguageModel for Broken {
            fn answer_token_logliks(&self, _: &str, _: &str, _: Option<&str>) -> pcib_backends::Result<pcib_backends::TokenLogliks> {
                Err(BackendError::Transport { status: Some(503), message: "down".into() })
            }
            fn extract_claims(&self, a: &str, _: usize) -> pcib_backends::Result<Vec<String>> {
                Ok(vec![a.to_string()])
            }
            fn paraphrase(&self, c: &str, k: usize, _: f64) -> pcib_backends::Result<Vec<String>> {
                Ok(vec![c.to_string(); k])
            }
            fn reasoning_traces(&self, _: &str, _: &str, m: usize) -> pcib_backends::Result<Vec<String>> {
                Ok(vec!["x".into(); m])
            }
            fn model_name(&self) -> &str {
                "broken"
            }
        }
        let t = triple("Some context here.", "An answer.");
        let err = extract_signals(&t, &SignalConfig::default(), &HedgeLexicon::default(), &Broken, &MockBackend::default())
            .unwrap_err();
        assert!(err.to_string().contains("t1"));
        assert!(err.backend_error().is_some_and(BackendError::is_transport));
    }
}
