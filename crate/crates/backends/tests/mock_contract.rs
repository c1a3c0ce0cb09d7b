use pcib_backends::{LanguageModel, MockBackend, NliModel};
use proptest::prelude::*;

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z]{1,9}", 2..12).prop_map(|w| format!("{}.", w.join(" ")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn llm_contract(seed in any::<u64>(), a in sentence(), b in sentence(), k in 1usize..6, m in 2usize..5) {
        let mock = MockBackend::new(seed);
        let answer = format!("{a} {b}");
        let claims = mock.extract_claims(&answer, 5).unwrap();
        prop_assert!(!claims.is_empty() && claims.len() <= 5);
        prop_assert_eq!(&claims, &mock.extract_claims(&answer, 5).unwrap());
        let variants = mock.paraphrase(&claims[0], k, 0.7).unwrap();
        prop_assert_eq!(variants.len(), k);
        let traces = mock.reasoning_traces("Why?", &answer, m).unwrap();
        prop_assert_eq!(traces.len(), m);
        let post = mock.answer_token_logliks("Why?", &answer, Some(&a)).unwrap();
        let prior = mock.answer_token_logliks("Why?", &answer, None).unwrap();
        prop_assert_eq!(post.tokens(), prior.tokens());
        prop_assert!(post.logliks().iter().chain(prior.logliks()).all(|v| *v <= 0.0 && v.is_finite()));
    }

    #[test]
    fn nli_is_a_distribution(seed in any::<u64>(), p in sentence(), h in sentence()) {
        let d = MockBackend::new(seed).nli_probs(&p, &h).unwrap();
        let [e, n, c] = d.as_array();
        prop_assert!((e + n + c - 1.0).abs() < 1e-9);
        prop_assert!([e, n, c].iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    let mock = MockBackend::default();
    assert!(mock.paraphrase("a claim", 0, 0.7).is_err());
    assert!(mock.paraphrase("a claim", 2, 2.5).is_err());
    assert!(mock.reasoning_traces("q", "a", 1).is_err());
    assert!(mock.answer_token_logliks("q", "  ", None).is_err());
    assert!(mock.nli_probs("", "h").is_err());
}
