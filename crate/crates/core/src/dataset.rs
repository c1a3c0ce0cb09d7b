//! (question, context, answer) records, JSONL ingestion and stratified folds.
//!
//! Dataset lines are UTF-8 JSON objects. `question`, `answer` and `label` are
//! required; `context` defaults to the empty string and `id` to `line-<n>`
//! (1-based physical line number). Blank lines are skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{message} at line {line}")]
    Ingestion { line: usize, message: String },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value for {feature} in example {id}")]
    NonFinite { id: String, feature: String },
    #[error("empty input: {0}")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QcaTriple {
    pub id: String,
    pub question: String,
    pub context: String,
    pub answer: String,
}

impl QcaTriple {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        context: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<Self, DataError> {
        let triple = Self {
            id: id.into(),
            question: question.into(),
            context: context.into(),
            answer: answer.into(),
        };
        triple.validate()?;
        Ok(triple)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.question.trim().is_empty() {
            return Err(DataError::InvalidTriple(format!("{}: question is empty", self.id)));
        }
        if self.answer.trim().is_empty() {
            return Err(DataError::InvalidTriple(format!("{}: answer is empty", self.id)));
        }
        Ok(())
    }

    pub fn has_context(&self) -> bool {
        !self.context.trim().is_empty()
    }
}

/// 1 = hallucination (positive class), 0 = factual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Factual,
    Hallucination,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Hallucination
    }

    pub fn as_f64(self) -> f64 {
        u8::from(self) as f64
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Factual => 0,
            Label::Hallucination => 1,
        }
    }
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Hallucination
        } else {
            Label::Factual
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Factual),
            1 => Ok(Label::Hallucination),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub triple: QcaTriple,
    pub label: Label,
}

fn required_text(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String, DataError> {
    let err = |message: String| DataError::Ingestion { line, message };
    match obj.get(field) {
        None | Some(Value::Null) => Err(err(format!("missing field `{field}`"))),
        Some(Value::String(s)) if s.trim().is_empty() => Err(err(format!("field `{field}` is empty"))),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(err(format!("field `{field}` must be a string"))),
    }
}

fn parse_record(text: &str, line: usize) -> Result<LabeledExample, DataError> {
    let err = |message: String| DataError::Ingestion { line, message };
    let value: Value =
        serde_json::from_str(text).map_err(|e| err(format!("malformed JSON ({e})")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| err("record is not a JSON object".into()))?;
    let question = required_text(obj, "question", line)?;
    let answer = required_text(obj, "answer", line)?;
    let label = match obj.get("label") {
        None | Some(Value::Null) => return Err(err("missing field `label`".into())),
        Some(v) => match v.as_u64() {
            Some(0) => Label::Factual,
            Some(1) => Label::Hallucination,
            _ => return Err(err("label must be 0 or 1".into())),
        },
    };
    let context = match obj.get("context") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(err("field `context` must be a string".into())),
    };
    let id = match obj.get("id") {
        None | Some(Value::Null) => format!("line-{line}"),
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(err("field `id` must be a non-empty string".into())),
    };
    Ok(LabeledExample {
        triple: QcaTriple {
            id,
            question,
            context,
            answer,
        },
        label,
    })
}

/// Parses JSONL from any reader; see the module docs for the record schema.
pub fn read_jsonl_dataset<R: BufRead>(reader: R) -> Result<Vec<LabeledExample>, DataError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let example = parse_record(text, line_no)?;
        if !seen.insert(example.triple.id.clone()) {
            return Err(DataError::Ingestion {
                line: line_no,
                message: format!("duplicate id `{}`", example.triple.id),
            });
        }
        out.push(example);
    }
    Ok(out)
}

pub fn load_jsonl_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>, DataError> {
    let file = File::open(path)?;
    read_jsonl_dataset(BufReader::new(file))
}

/// Writes examples in the ingestion schema, every field explicit.
pub fn write_jsonl_dataset<W: Write>(mut out: W, examples: &[LabeledExample]) -> Result<(), DataError> {
    for ex in examples {
        let record = serde_json::json!({
            "id": ex.triple.id,
            "question": ex.triple.question,
            "context": ex.triple.context,
            "answer": ex.triple.answer,
            "label": u8::from(ex.label),
        });
        writeln!(out, "{record}")?;
    }
    Ok(())
}

/// Fold index per example, stratified by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn from_indices(k: usize, folds: Vec<usize>) -> Result<Self, DataError> {
        if k < 2 {
            return Err(DataError::Config(format!("need at least 2 folds, got {k}")));
        }
        if let Some(f) = folds.iter().find(|f| **f >= k) {
            return Err(DataError::Config(format!("fold index {f} out of range for k={k}")));
        }
        Ok(Self { k, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold_of(&self, example: usize) -> usize {
        self.folds[example]
    }

    pub fn indices(&self) -> &[usize] {
        &self.folds
    }

    /// (train, test) row indices for one fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.folds.len()).partition(|i| self.folds[*i] != fold)
    }
}

/// Shuffles each class with a seeded ChaCha stream, then deals examples
/// round-robin across folds, continuing the deal from one class to the next
/// so fold sizes stay within one of each other.
pub fn stratified_folds_for_labels(labels: &[Label], k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    if k < 2 {
        return Err(DataError::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [Label::Factual, Label::Hallucination] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        if members.len() < k {
            return Err(DataError::Config(format!(
                "{} folds requested but class {} has only {} examples",
                k,
                u8::from(class),
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, folds })
}

pub fn stratified_folds(examples: &[LabeledExample], k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    stratified_folds_for_labels(&labels, k, seed)
}
