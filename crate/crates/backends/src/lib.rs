//! Backend interface for the signal extractors.
//!
//! Two capabilities are needed: a language model that can score answer tokens
//! and generate claims, paraphrases and reasoning traces ([`LanguageModel`]),
//! and a three-way NLI classifier ([`NliModel`]). Both come in a remote HTTP
//! flavour ([`remote`]) and a deterministic in-process mock ([`mock`]).
//!
//! All calls are blocking. Implementations must be callable from many threads
//! at once and are responsible for their own in-flight limiting.

pub mod mock;
pub mod prompts;
pub mod remote;
mod types;

pub use mock::MockBackend;
pub use remote::{BackendConfig, RemoteLlm, RemoteNli};
pub use types::{NliDistribution, TokenLogliks};

use thiserror::Error;

pub const DEFAULT_PARAPHRASE_TEMPERATURE: f64 = 0.7;
pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("backend capability missing: {0}")]
    Capability(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
}

impl BackendError {
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

pub type Result<T, E = BackendError> = std::result::Result<T, E>;

/// Scoring and generation half of the backend pair.
pub trait LanguageModel: Send + Sync {
    /// Log-likelihood of every answer token, conditioned on the question and
    /// optionally the context. Segmentation depends only on the answer.
    fn answer_token_logliks(
        &self,
        question: &str,
        answer: &str,
        context: Option<&str>,
    ) -> Result<TokenLogliks>;

    /// Between 1 and `max_claims` atomic claims made by the answer.
    fn extract_claims(&self, answer: &str, max_claims: usize) -> Result<Vec<String>>;

    /// Exactly `k` meaning-preserving rewrites of `claim`.
    fn paraphrase(&self, claim: &str, k: usize, temperature: f64) -> Result<Vec<String>>;

    /// Exactly `m` (>= 2) explanations of why the answer is correct.
    fn reasoning_traces(&self, question: &str, answer: &str, m: usize) -> Result<Vec<String>>;

    /// Identifier folded into signal-cache keys.
    fn model_name(&self) -> &str;
}

pub trait NliModel: Send + Sync {
    fn nli_probs(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<T> {
    fn answer_token_logliks(&self, q: &str, a: &str, c: Option<&str>) -> Result<TokenLogliks> {
        (**self).answer_token_logliks(q, a, c)
    }
    fn extract_claims(&self, answer: &str, max_claims: usize) -> Result<Vec<String>> {
        (**self).extract_claims(answer, max_claims)
    }
    fn paraphrase(&self, claim: &str, k: usize, temperature: f64) -> Result<Vec<String>> {
        (**self).paraphrase(claim, k, temperature)
    }
    fn reasoning_traces(&self, q: &str, a: &str, m: usize) -> Result<Vec<String>> {
        (**self).reasoning_traces(q, a, m)
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

impl<T: NliModel + ?Sized> NliModel for std::sync::Arc<T> {
    fn nli_probs(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution> {
        (**self).nli_probs(premise, hypothesis)
    }
}

pub(crate) fn require_non_empty(what: &str, text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(BackendError::Precondition(format!("{what} must not be empty")));
    }
    Ok(())
}

pub(crate) fn require_positive(what: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(BackendError::Precondition(format!("{what} must be positive")));
    }
    Ok(())
}

pub(crate) fn check_paraphrase_args(claim: &str, k: usize, temperature: f64) -> Result<()> {
    require_non_empty("claim", claim)?;
    require_positive("paraphrase count", k)?;
    if !(0.0..=MAX_TEMPERATURE).contains(&temperature) {
        return Err(BackendError::Precondition(format!(
            "temperature {temperature} outside [0, {MAX_TEMPERATURE}]"
        )));
    }
    Ok(())
}

pub(crate) fn check_trace_args(question: &str, answer: &str, m: usize) -> Result<()> {
    require_non_empty("question", question)?;
    require_non_empty("answer", answer)?;
    if m < 2 {
        return Err(BackendError::Precondition(format!(
            "at least 2 reasoning traces are needed, got {m}"
        )));
    }
    Ok(())
}

/// Trims, drops blanks, truncates to `max_claims` and falls back to the whole
/// answer when nothing usable is left.
pub fn finalize_claims(answer: &str, raw: Vec<String>, max_claims: usize) -> Vec<String> {
    let mut claims: Vec<String> = raw
        .into_iter()
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .take(max_claims.max(1))
        .collect();
    if claims.is_empty() {
        claims.push(answer.trim().to_string());
    }
    claims
}

/// Pads or truncates to exactly `k` variants; empty variants become the
/// original claim.
pub fn finalize_variants(claim: &str, raw: Vec<String>, k: usize) -> Vec<String> {
    let original = claim.trim();
    let mut out: Vec<String> = raw
        .into_iter()
        .take(k)
        .map(|v| {
            let v = v.trim();
            if v.is_empty() {
                original.to_string()
            } else {
                v.to_string()
            }
        })
        .collect();
    out.resize(k, original.to_string());
    out
}
