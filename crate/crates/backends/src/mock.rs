//! Deterministic in-process backend for tests and offline runs.
//!
//! Every output is a pure function of the inputs and the seed: text
//! transforms are driven by a ChaCha stream keyed on a stable hash of the
//! input, and NLI is rule based (exact match, negation mismatch, content-word
//! coverage). No network, no model weights.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    check_paraphrase_args, check_trace_args, finalize_claims, finalize_variants,
    require_non_empty, require_positive, LanguageModel, MAX_TEMPERATURE, NliDistribution, NliModel, Result,
    TokenLogliks,
};

pub const MOCK_MODEL_NAME: &str = "mock-v1";

/// Synonym groups; the first entry is the canonical form used by the mock NLI.
const SYNONYMS: &[&[&str]] = &[
    &["big", "large", "huge"],
    &["small", "little", "tiny"],
    &["fast", "quick", "rapid"],
    &["begin", "start", "commence"],
    &["end", "finish", "conclude"],
    &["make", "create", "produce"],
    &["show", "display", "reveal"],
    &["help", "assist", "aid"],
    &["buy", "purchase", "acquire"],
    &["old", "ancient", "aged"],
    &["famous", "renowned", "celebrated"],
    &["important", "significant", "notable"],
    &["city", "town"],
    &["said", "stated"],
    &["located", "situated"],
    &["built", "constructed"],
    &["founded", "established"],
    &["died", "perished"],
    &["won", "earned"],
    &["about", "approximately", "roughly"],
];

const FILLERS: &[&str] = &["Indeed,", "In fact,", "Notably,", "Put simply,"];

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "to", "in", "on", "at", "by", "for", "with", "from",
    "as", "is", "are", "was", "were", "be", "been", "being", "it", "its", "this", "that",
    "these", "those", "which", "who", "whom", "what", "there", "their", "they", "he", "she",
    "his", "her", "has", "have", "had", "do", "does", "did", "so", "than", "then", "also",
    "indeed", "fact", "notably", "put", "simply",
];

const NEGATIONS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "cannot",
];

const TRACE_OPENERS: &[&str] = &[
    "Because",
    "Given that",
    "Since",
    "It follows that, as",
    "The reasoning is that",
];

const TRACE_CLOSERS: &[&str] = &[
    "so the answer is supported.",
    "which is why the answer holds.",
    "therefore the claim is correct.",
    "and this matches the question.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockBackend {
    seed: u64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(0)
    }
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, parts: &[&str]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(stable_hash(self.seed, parts))
    }

    fn unit(&self, parts: &[&str]) -> f64 {
        self.rng(parts).random::<f64>()
    }
}

/// FNV-1a over the seed and each part, with a separator between parts.
fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    for part in parts {
        for b in part.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(PRIME);
    }
    h
}

fn normalize(token: &str) -> String {
    token
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(|w| {
            let w = w.to_lowercase();
            if w.ends_with("n't") {
                "not".to_string()
            } else {
                w.replace('\'', "")
            }
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn canonical(word: &str) -> &str {
    SYNONYMS
        .iter()
        .find(|group| group.contains(&word))
        .map(|group| group[0])
        .unwrap_or(word)
}

fn content_words(text: &str) -> HashSet<String> {
    words(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()) && !NEGATIONS.contains(&w.as_str()))
        .map(|w| canonical(&w).to_string())
        .collect()
}

fn has_negation(text: &str) -> bool {
    words(text).iter().any(|w| NEGATIONS.contains(&w.as_str()))
}

/// Sentence split on terminal punctuation followed by whitespace or end.
fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

fn substitute_synonym(token: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let start = token.find(|c: char| c.is_alphanumeric())?;
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map(|i| i + token[i..].chars().next().map_or(1, char::len_utf8))?;
    let core = &token[start..end];
    let lower = core.to_lowercase();
    let group = SYNONYMS.iter().find(|g| g.contains(&lower.as_str()))?;
    let others: Vec<&str> = group.iter().copied().filter(|w| *w != lower).collect();
    let pick = others[rng.random_range(0..others.len())];
    let pick = if core.chars().next().is_some_and(char::is_uppercase) {
        let mut cs = pick.chars();
        cs.next()
            .map(|f| f.to_uppercase().chain(cs).collect::<String>())
            .unwrap_or_default()
    } else {
        pick.to_string()
    };
    Some(format!("{}{}{}", &token[..start], pick, &token[end..]))
}

impl LanguageModel for MockBackend {
    fn answer_token_logliks(
        &self,
        question: &str,
        answer: &str,
        context: Option<&str>,
    ) -> Result<TokenLogliks> {
        require_non_empty("question", question)?;
        require_non_empty("answer", answer)?;
        let context_vocab: Option<HashSet<String>> = context.map(|c| {
            words(c)
                .into_iter()
                .map(|w| canonical(&w).to_string())
                .collect()
        });
        let tokens: Vec<String> = answer.split_whitespace().map(str::to_string).collect();
        let logliks = tokens
            .iter()
            .map(|tok| {
                let key = normalize(tok);
                let prior = -(0.5 + 4.5 * self.unit(&["prior", question, &key]));
                match &context_vocab {
                    None => prior,
                    Some(vocab) if vocab.contains(canonical(&key)) => {
                        -(0.05 + 0.45 * self.unit(&["post", question, &key]))
                    }
                    Some(_) => prior - 0.3 * self.unit(&["miss", question, &key]),
                }
            })
            .collect();
        TokenLogliks::new(tokens, logliks)
    }

    fn extract_claims(&self, answer: &str, max_claims: usize) -> Result<Vec<String>> {
        require_non_empty("answer", answer)?;
        require_positive("max_claims", max_claims)?;
        Ok(finalize_claims(answer, sentences(answer), max_claims))
    }

    fn paraphrase(&self, claim: &str, k: usize, temperature: f64) -> Result<Vec<String>> {
        check_paraphrase_args(claim, k, temperature)?;
        let drop_prob = (temperature / MAX_TEMPERATURE).clamp(0.0, 1.0) * 0.5;
        let raw = (0..k)
            .map(|i| {
                let idx = i.to_string();
                let mut rng = self.rng(&["paraphrase", claim, &idx]);
                let mut toks: Vec<String> =
                    claim.split_whitespace().map(str::to_string).collect();
                for tok in toks.iter_mut() {
                    if rng.random_bool(0.5) {
                        if let Some(swapped) = substitute_synonym(tok, &mut rng) {
                            *tok = swapped;
                        }
                    }
                }
                if toks.len() >= 3 && rng.random_bool(0.5) {
                    let at = rng.random_range(1..toks.len() - 1);
                    toks.swap(at, at + 1);
                }
                if toks.len() > 3 && rng.random_bool(drop_prob) {
                    let at = rng.random_range(1..toks.len());
                    toks.remove(at);
                }
                if rng.random_bool(0.3) {
                    let filler = FILLERS[rng.random_range(0..FILLERS.len())];
                    toks.insert(0, filler.to_string());
                }
                toks.join(" ")
            })
            .collect();
        Ok(finalize_variants(claim, raw, k))
    }

    fn reasoning_traces(&self, question: &str, answer: &str, m: usize) -> Result<Vec<String>> {
        check_trace_args(question, answer, m)?;
        let q_words: Vec<String> = content_words(question).into_iter().collect::<Vec<_>>();
        let a_words: Vec<String> = words(answer)
            .into_iter()
            .filter(|w| !STOPWORDS.contains(&w.as_str()))
            .collect();
        let mut q_sorted = q_words;
        q_sorted.sort();
        Ok((0..m)
            .map(|i| {
                let idx = i.to_string();
                let mut rng = self.rng(&["trace", question, answer, &idx]);
                let opener = TRACE_OPENERS[rng.random_range(0..TRACE_OPENERS.len())];
                let closer = TRACE_CLOSERS[rng.random_range(0..TRACE_CLOSERS.len())];
                let kept_a: Vec<&str> = a_words
                    .iter()
                    .filter(|_| rng.random_bool(0.7))
                    .map(String::as_str)
                    .collect();
                let kept_q: Vec<&str> = q_sorted
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .map(String::as_str)
                    .collect();
                format!(
                    "{opener} {} relates to {}, {closer}",
                    if kept_a.is_empty() { "the answer".to_string() } else { kept_a.join(" ") },
                    if kept_q.is_empty() { "the question".to_string() } else { kept_q.join(" ") },
                )
            })
            .collect())
    }

    fn model_name(&self) -> &str {
        MOCK_MODEL_NAME
    }
}


impl NliModel for MockBackend {
    fn nli_probs(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution> {
        require_non_empty("premise", premise)?;
        require_non_empty("hypothesis", hypothesis)?;
        if premise.trim() == hypothesis.trim() {
            return NliDistribution::from_raw(0.95, 0.04, 0.01);
        }
        let prem = content_words(premise);
        let hyp = content_words(hypothesis);
        let coverage = if hyp.is_empty() {
            0.0
        } else {
            hyp.iter().filter(|w| prem.contains(*w)).count() as f64 / hyp.len() as f64
        };
        if has_negation(premise) != has_negation(hypothesis) && coverage >= 0.5 {
            return NliDistribution::from_raw(0.08, 0.17, 0.75);
        }
        let entailment = 0.04 + 0.88 * coverage;
        let contradiction = 0.04;
        NliDistribution::from_raw(entailment, 1.0 - entailment - contradiction, contradiction)
    }
}
