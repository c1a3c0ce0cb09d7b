use serde::{Deserialize, Serialize};

use crate::BackendError;

/// Per-token natural-log likelihoods of an answer under some prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogliks {
    tokens: Vec<String>,
    logliks: Vec<f64>,
}

impl TokenLogliks {
    pub fn new(tokens: Vec<String>, logliks: Vec<f64>) -> Result<Self, BackendError> {
        if tokens.is_empty() {
            return Err(BackendError::InvalidResponse(
                "token log-likelihoods must cover at least one token".into(),
            ));
        }
        if tokens.len() != logliks.len() {
            return Err(BackendError::InvalidResponse(format!(
                "{} tokens but {} log-likelihoods",
                tokens.len(),
                logliks.len()
            )));
        }
        if let Some(bad) = logliks.iter().find(|l| !l.is_finite() || **l > 0.0) {
            return Err(BackendError::InvalidResponse(format!(
                "log-likelihood {bad} is not a finite value <= 0"
            )));
        }
        Ok(Self { tokens, logliks })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logliks(&self) -> &[f64] {
        &self.logliks
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Three-way NLI output over (entailment, neutral, contradiction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliDistribution {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl NliDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    /// Strict constructor: each probability in [0, 1] and the total within
    /// [`Self::SUM_TOLERANCE`] of one.
    pub fn new(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self, BackendError> {
        let d = Self {
            entailment,
            neutral,
            contradiction,
        };
        let parts = d.as_array();
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(BackendError::InvalidResponse(format!(
                "NLI probabilities out of range: {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(BackendError::InvalidResponse(format!(
                "NLI probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(d)
    }

    /// Builds a distribution from raw backend scores, clamping negatives to
    /// zero and renormalizing. Fails only if nothing positive remains.
    pub fn from_raw(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self, BackendError> {
        let clean = |x: f64| if x.is_finite() && x > 0.0 { x } else { 0.0 };
        let (e, n, c) = (clean(entailment), clean(neutral), clean(contradiction));
        let sum = e + n + c;
        if sum <= 0.0 {
            return Err(BackendError::InvalidResponse(format!(
                "NLI scores carry no mass: ({entailment}, {neutral}, {contradiction})"
            )));
        }
        Ok(Self {
            entailment: e / sum,
            neutral: n / sum,
            contradiction: c / sum,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.entailment, self.neutral, self.contradiction]
    }
}
