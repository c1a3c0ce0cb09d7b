//! The eight per-triple signals and their composites.
//!
//! Raw signals: uptake (context-conditioned likelihood gain), stress (NLI
//! drift under paraphrase), conflict (contradiction against perturbed claims)
//! and rationalization (agreement between reasoning traces). Enhancements:
//! entity-weighted uptake, context adherence and falsifiability. Composites:
//! harmonic and geometric Evidence Sufficiency Index over the normalized
//! uptake, stress and conflict components.

mod formulas;
mod lexicon;
mod pipeline;
mod text;

pub use formulas::{
    conflict, context_adherence, entity_uptake, esi, falsifiability, falsifiability_from_counts,
    rationalization, risk_score, simple_average_score, stress, uptake, Esi,
};
pub use lexicon::{HedgeLexicon, LEXICON_VERSION};
pub use pipeline::{extract_signals, SignalExtractor};
pub use text::{count_words, entity_density, word_set, EntityDensity};

use pcib_backends::BackendError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mathkit::MathError;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("answer token alignment failed: {post} tokens with context vs {prior} without")]
    Alignment { post: usize, prior: usize },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("backend failure for example {id}: {source}")]
    Backend {
        id: String,
        #[source]
        source: BackendError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid signal vector: {0}")]
    Invalid(String),
    #[error("lexicon error: {0}")]
    Lexicon(String),
}

impl SignalError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            SignalError::Backend { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConflictAggregation {
    /// Mean over claims of the max over perturbations.
    #[default]
    MeanOfMax,
    /// Global max over every claim and perturbation.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub k_perturbations: usize,
    pub m_traces: usize,
    pub max_claims: usize,
    pub alpha: f64,
    pub beta: f64,
    pub paraphrase_temperature: f64,
    pub esi_epsilon: f64,
    pub context_norm_words: usize,
    pub conflict_aggregation: ConflictAggregation,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            k_perturbations: 3,
            m_traces: 3,
            max_claims: 5,
            alpha: 2.0,
            beta: 0.1,
            paraphrase_temperature: pcib_backends::DEFAULT_PARAPHRASE_TEMPERATURE,
            esi_epsilon: 1e-3,
            context_norm_words: 200,
            conflict_aggregation: ConflictAggregation::MeanOfMax,
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let positive = [
            ("k_perturbations", self.k_perturbations),
            ("max_claims", self.max_claims),
            ("context_norm_words", self.context_norm_words),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SignalError::Config(format!("{name} must be positive")));
            }
        }
        if self.m_traces < 2 {
            return Err(SignalError::Config("m_traces must be at least 2".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(SignalError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(SignalError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.esi_epsilon > 0.0 && self.esi_epsilon < 1.0) {
            return Err(SignalError::Config(format!(
                "esi_epsilon must be in (0, 1), got {}",
                self.esi_epsilon
            )));
        }
        if !(0.0..=pcib_backends::MAX_TEMPERATURE).contains(&self.paraphrase_temperature) {
            return Err(SignalError::Config(format!(
                "paraphrase_temperature must be in [0, 2], got {}",
                self.paraphrase_temperature
            )));
        }
        Ok(())
    }
}

/// Every signal extracted for one triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalVector {
    /// Nats per token, >= 0.
    pub uptake: f64,
    pub stress: f64,
    pub conflict: f64,
    pub rationalization: f64,
    pub esi_harm: f64,
    pub esi_geo: f64,
    pub entity_uptake: f64,
    pub context_adherence: f64,
    pub falsifiability: f64,
}

impl SignalVector {
    pub fn validate(&self) -> Result<(), SignalError> {
        let fields = [
            ("uptake", self.uptake),
            ("stress", self.stress),
            ("conflict", self.conflict),
            ("rationalization", self.rationalization),
            ("esi_harm", self.esi_harm),
            ("esi_geo", self.esi_geo),
            ("entity_uptake", self.entity_uptake),
            ("context_adherence", self.context_adherence),
            ("falsifiability", self.falsifiability),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(SignalError::Invalid(format!("{name} is not finite")));
            }
        }
        let non_negative = [
            ("uptake", self.uptake),
            ("entity_uptake", self.entity_uptake),
            ("falsifiability", self.falsifiability),
        ];
        for (name, v) in non_negative {
            if v < 0.0 {
                return Err(SignalError::Invalid(format!("{name} = {v} is negative")));
            }
        }
        let unit = [
            ("stress", self.stress),
            ("conflict", self.conflict),
            ("rationalization", self.rationalization),
            ("context_adherence", self.context_adherence),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(SignalError::Invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, v) in [("esi_harm", self.esi_harm), ("esi_geo", self.esi_geo)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(SignalError::Invalid(format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SignalVector {
        SignalVector {
            uptake: 0.5,
            stress: 0.2,
            conflict: 0.1,
            rationalization: 0.4,
            esi_harm: 0.5,
            esi_geo: 0.6,
            entity_uptake: 0.7,
            context_adherence: 0.8,
            falsifiability: 0.1,
        }
    }

    #[test]
    fn vector_validation() {
        assert!(sample().validate().is_ok());
        let mut v = sample();
        v.stress = 1.2;
        assert!(v.validate().is_err());
        let mut v = sample();
        v.esi_harm = 0.0;
        assert!(v.validate().is_err());
        let mut v = sample();
        v.uptake = f64::NAN;
        assert!(v.validate().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = SignalConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!((cfg.k_perturbations, cfg.m_traces, cfg.max_claims), (3, 3, 5));
        assert_eq!((cfg.alpha, cfg.beta), (2.0, 0.1));
        let bad = SignalConfig { m_traces: 1, ..SignalConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SignalConfig { alpha: -1.0, ..SignalConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_parses_partial_json() {
        let cfg: SignalConfig =
            serde_json::from_str(r#"{"k_perturbations": 5, "conflict_aggregation": "max"}"#).unwrap();
        assert_eq!(cfg.k_perturbations, 5);
        assert_eq!(cfg.conflict_aggregation, ConflictAggregation::Max);
        assert_eq!(cfg.m_traces, 3);
    }
}
