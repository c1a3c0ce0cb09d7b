//! Append-only JSONL signal cache keyed by content hash.
//!
//! Each line is one [`SignalCacheRecord`]. The key is the SHA-256 of the
//! question, context, answer, signal-config digest and backend model name;
//! a key match only counts as a hit when all of those fields are equal too.
//! Unparseable lines are skipped with a warning so the example is simply
//! extracted again.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use pcib_backends::prompts::PROMPT_VERSION;
use pcib_core::features::FeatureVariant;
use pcib_core::signals::{HedgeLexicon, SignalConfig, SignalVector, LEXICON_VERSION};
use pcib_core::{Label, QcaTriple};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SOURCE_DATE_EPOCH: &str = "SOURCE_DATE_EPOCH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCacheRecord {
    pub id: String,
    pub key: String,
    pub question: String,
    pub context: String,
    pub answer: String,
    pub config_digest: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    /// Feature name to value. Older or reduced caches may hold only the BASE
    /// columns.
    pub signals: BTreeMap<String, f64>,
    /// Unix seconds.
    pub timestamp: u64,
}

fn sha256_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    format!("{:x}", h.finalize())
}

/// Digest of everything besides the triple and model that changes signal
/// values: the signal config, the hedge lexicon and the prompt templates.
pub fn config_digest(cfg: &SignalConfig, lexicon: &HedgeLexicon) -> String {
    let cfg_json = serde_json::to_string(cfg).expect("config serializes");
    sha256_hex(&[&cfg_json, &lexicon.to_file_string(), PROMPT_VERSION, LEXICON_VERSION])
}

pub fn content_key(triple: &QcaTriple, config_digest: &str, model: &str) -> String {
    sha256_hex(&[&triple.question, &triple.context, &triple.answer, config_digest, model])
}

/// Record timestamps: `SOURCE_DATE_EPOCH` when set, else the wall clock.
pub fn now_timestamp() -> u64 {
    if let Some(v) = std::env::var(SOURCE_DATE_EPOCH).ok().and_then(|v| v.trim().parse().ok()) {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn signal_map(v: &SignalVector) -> BTreeMap<String, f64> {
    match serde_json::to_value(v).expect("vector serializes") {
        serde_json::Value::Object(m) => m.into_iter().filter_map(|(k, v)| Some((k, v.as_f64()?))).collect(),
        _ => unreachable!("SignalVector is a struct"),
    }
}

impl SignalCacheRecord {
    pub fn new(
        triple: &QcaTriple,
        label: Option<Label>,
        signals: &SignalVector,
        config_digest: &str,
        model: &str,
        timestamp: u64,
    ) -> Self {
        Self {
            id: triple.id.clone(),
            key: content_key(triple, config_digest, model),
            question: triple.question.clone(),
            context: triple.context.clone(),
            answer: triple.answer.clone(),
            config_digest: config_digest.to_string(),
            model: model.to_string(),
            label,
            signals: signal_map(signals),
            timestamp,
        }
    }

    pub fn matches(&self, triple: &QcaTriple, config_digest: &str, model: &str) -> bool {
        self.question == triple.question
            && self.context == triple.context
            && self.answer == triple.answer
            && self.config_digest == config_digest
            && self.model == model
    }

    /// Feature row for `variant`, or the names of the missing columns.
    pub fn row(&self, variant: FeatureVariant) -> Result<Vec<f64>, Vec<&'static str>> {
        let mut missing = Vec::new();
        let mut row = Vec::with_capacity(variant.width());
        for name in variant.feature_names() {
            match self.signals.get(*name) {
                Some(v) => row.push(*v),
                None => missing.push(*name),
            }
        }
        if missing.is_empty() {
            Ok(row)
        } else {
            Err(missing)
        }
    }

    /// The full vector, when every field is present.
    pub fn vector(&self) -> Option<SignalVector> {
        let obj: serde_json::Map<String, serde_json::Value> =
            self.signals.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
        serde_json::from_value(serde_json::Value::Object(obj)).ok()
    }
}

#[derive(Debug, Default)]
pub struct SignalCache {
    records: Vec<SignalCacheRecord>,
    by_key: HashMap<String, Vec<usize>>,
    /// Lines that failed to parse (1-based).
    pub skipped_lines: Vec<usize>,
}

impl SignalCache {
    /// Loads a cache file; a missing file is an empty cache.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let mut cache = Self::default();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(e),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<SignalCacheRecord>(&line) {
                Ok(rec) => cache.insert(rec),
                Err(e) => {
                    log::warn!("{}:{}: skipping corrupted cache line ({e})", path.display(), i + 1);
                    cache.skipped_lines.push(i + 1);
                }
            }
        }
        Ok(cache)
    }

    fn insert(&mut self, rec: SignalCacheRecord) {
        self.by_key.entry(rec.key.clone()).or_default().push(self.records.len());
        self.records.push(rec);
    }

    pub fn records(&self) -> &[SignalCacheRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, triple: &QcaTriple, config_digest: &str, model: &str) -> Option<&SignalCacheRecord> {
        let key = content_key(triple, config_digest, model);
        self.by_key
            .get(&key)?
            .iter()
            .map(|&i| &self.records[i])
            .find(|r| r.matches(triple, config_digest, model))
    }

    /// Latest record per example id, in first-seen id order.
    pub fn latest_by_id(&self) -> Vec<&SignalCacheRecord> {
        let mut order: Vec<&str> = Vec::new();
        let mut latest: HashMap<&str, &SignalCacheRecord> = HashMap::new();
        for r in &self.records {
            if latest.insert(&r.id, r).is_none() {
                order.push(&r.id);
            }
        }
        order.into_iter().map(|id| latest[id]).collect()
    }

    /// Appends records to the file and to this cache.
    pub fn append(&mut self, path: &Path, records: Vec<SignalCacheRecord>) -> std::io::Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = Vec::new();
        for rec in &records {
            serde_json::to_writer(&mut buf, rec).map_err(std::io::Error::other)?;
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        file.sync_data()?;
        for rec in records {
            self.insert(rec);
        }
        Ok(())
    }
}
