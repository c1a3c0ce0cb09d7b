//! Turning one signal vector into a risk score and verdict.

use std::fmt;

use pcib_core::classifiers::ModelDescriptor;
use pcib_core::signals::{risk_score, SignalVector};
use pcib_core::TrainedModel;
use serde::{Deserialize, Serialize};

pub const THEORY_GUIDED: &str = "theory-guided";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Hallucination,
    Factual,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Hallucination => "HALLUCINATION",
            Verdict::Factual => "FACTUAL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelInfo {
    Trained(ModelDescriptor),
    /// Always the string `"theory-guided"`.
    TheoryGuided(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub risk: f64,
    pub verdict: Verdict,
    pub threshold: f64,
    pub signals: SignalVector,
    pub model: ModelInfo,
}

#[derive(Debug, Clone)]
pub enum Scorer {
    TheoryGuided,
    Model(Box<TrainedModel>),
}

impl Scorer {
    pub fn info(&self) -> ModelInfo {
        match self {
            Scorer::TheoryGuided => ModelInfo::TheoryGuided(THEORY_GUIDED.into()),
            Scorer::Model(m) => ModelInfo::Trained(m.descriptor()),
        }
    }

    pub fn risk(&self, v: &SignalVector) -> Result<f64, String> {
        match self {
            Scorer::TheoryGuided => Ok(risk_score(v)),
            Scorer::Model(m) => m.predict_proba(&m.variant.row(v)).map_err(|e| e.to_string()),
        }
    }

    pub fn respond(&self, signals: SignalVector, threshold: f64) -> Result<ScoreResponse, String> {
        let risk = self.risk(&signals)?;
        let verdict = if risk >= threshold { Verdict::Hallucination } else { Verdict::Factual };
        Ok(ScoreResponse { risk, verdict, threshold, signals, model: self.info() })
    }
}
