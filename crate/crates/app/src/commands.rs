//! The batch commands behind the CLI: extract, synth, train, eval (with the
//! ablation grid) and score.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use pcib_core::classifiers::{oof_predictions, train, LoadError};
use pcib_core::dataset::{load_jsonl_dataset, stratified_folds_for_labels};
use pcib_core::metrics::{confusion_at, evaluate, write_pr_csv, write_roc_csv, EvalReport, Evaluation};
use pcib_core::signals::{SignalError, SignalExtractor};
use pcib_core::synthetic::{generate, PlantedSpec};
use pcib_core::{FeatureMatrix, FeatureVariant, Label, LabeledExample, ModelKind, QcaTriple, TrainConfig, TrainedModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::backend::Backends;
use crate::cache::{now_timestamp, SignalCacheRecord, SignalCache};
use crate::error::{AppError, AppResult, Context};
use crate::scoring::{ScoreResponse, Scorer};

/// Ids shown in error messages before the list is truncated.
const MAX_LISTED_IDS: usize = 20;

fn id_list(ids: &[&str]) -> String {
    let mut out = ids.iter().take(MAX_LISTED_IDS).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > MAX_LISTED_IDS {
        let _ = write!(out, " and {} more", ids.len() - MAX_LISTED_IDS);
    }
    out
}

/// Model identity recorded for generator-produced caches.
pub const PLANTED_MODEL: &str = "planted-generator";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub total: usize,
    pub cache_hits: usize,
    pub extracted: usize,
    pub failed: Vec<String>,
}

/// Sibling file `<cache>.errors.log`.
pub fn errors_log_path(cache: &Path) -> PathBuf {
    let mut name = cache.as_os_str().to_owned();
    name.push(".errors.log");
    PathBuf::from(name)
}

fn is_abort(e: &SignalError) -> bool {
    use pcib_backends::BackendError;
    matches!(e.backend_error(), Some(BackendError::Capability(_) | BackendError::Precondition(_)))
}

/// Extracts signals for every dataset example missing from the cache and
/// appends the new records in dataset order.
pub fn extract(
    examples: &[LabeledExample],
    cache_path: &Path,
    extractor: &SignalExtractor,
    digest: &str,
    backends: &Backends,
) -> AppResult<ExtractSummary> {
    let mut cache = SignalCache::load(cache_path).context(format!("reading cache {}", cache_path.display()))?;
    if !cache.skipped_lines.is_empty() {
        log::warn!("{} corrupted cache line(s) will be re-extracted", cache.skipped_lines.len());
    }
    let model = backends.model_id.as_str();
    let pending: Vec<&LabeledExample> = examples
        .iter()
        .filter(|ex| cache.lookup(&ex.triple, digest, model).is_none())
        .collect();
    let hits = examples.len() - pending.len();
    log::info!("{hits} cache hit(s), {} example(s) to extract", pending.len());

    let results: Vec<Result<SignalCacheRecord, SignalError>> = pending
        .par_iter()
        .map(|ex| {
            let v = extractor.extract(&ex.triple, backends.llm.as_ref(), backends.nli.as_ref())?;
            Ok(SignalCacheRecord::new(&ex.triple, Some(ex.label), &v, digest, model, now_timestamp()))
        })
        .collect();

    let mut records = Vec::new();
    let mut failures: Vec<(String, SignalError)> = Vec::new();
    for (ex, res) in pending.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => failures.push((ex.triple.id.clone(), e)),
        }
    }
    let extracted = records.len();
    cache.append(cache_path, records).context(format!("writing cache {}", cache_path.display()))?;

    let summary = ExtractSummary {
        total: examples.len(),
        cache_hits: hits,
        extracted,
        failed: failures.iter().map(|(id, _)| id.clone()).collect(),
    };
    if failures.is_empty() {
        return Ok(summary);
    }
    let log_path = errors_log_path(cache_path);
    let mut log = String::new();
    for (id, e) in &failures {
        let _ = writeln!(log, "{id}\t{e}");
    }
    fs::write(&log_path, log).context(format!("writing {}", log_path.display()))?;
    if let Some((_, e)) = failures.iter().find(|(_, e)| is_abort(e)) {
        return Err(AppError::backend(format!(
            "backend cannot serve the extraction pipeline: {e}; see {}",
            log_path.display()
        )));
    }
    let backend_only = failures.iter().all(|(_, e)| e.backend_error().is_some());
    let msg = format!(
        "{} of {} example(s) failed; details in {}",
        failures.len(),
        pending.len(),
        log_path.display()
    );
    if extracted == 0 && backend_only {
        Err(AppError::backend(msg))
    } else {
        Err(AppError::partial(msg))
    }
}

pub fn run_extract(
    dataset: &Path,
    cache_path: &Path,
    extractor: &SignalExtractor,
    digest: &str,
    backends: &Backends,
) -> AppResult<ExtractSummary> {
    let examples = load_jsonl_dataset(dataset).context(format!("loading {}", dataset.display()))?;
    extract(&examples, cache_path, extractor, digest, backends)
}

/// Writes planted examples as a signal cache. With `base_only`, only the
/// BASE columns are stored.
pub fn synth(spec: &PlantedSpec, out: &Path, base_only: bool) -> AppResult<usize> {
    let examples = generate(spec).context("invalid planted spec")?;
    let digest = crate::cache::config_digest(&spec.signals, &Default::default());
    let mut text = String::new();
    for ex in &examples {
        let triple = QcaTriple {
            id: ex.id.clone(),
            question: format!("planted question {}", ex.id),
            context: String::new(),
            answer: format!("planted answer {}", ex.id),
        };
        let mut rec = SignalCacheRecord::new(&triple, Some(ex.label), &ex.vector, &digest, PLANTED_MODEL, now_timestamp());
        if base_only {
            rec.signals.retain(|k, _| FeatureVariant::Base.feature_names().contains(&k.as_str()));
        }
        text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        text.push('\n');
    }
    fs::write(out, text).context(format!("writing {}", out.display()))?;
    Ok(examples.len())
}

/// Cache records joined with labels, in cache order.
pub struct LabeledCache {
    pub records: Vec<SignalCacheRecord>,
    pub labels: Vec<Label>,
}

/// Labels come from `labels_path` (a dataset file) when given, otherwise from
/// the cache records themselves.
pub fn load_labeled_cache(cache_path: &Path, labels_path: Option<&Path>) -> AppResult<LabeledCache> {
    let cache = SignalCache::load(cache_path).context(format!("reading cache {}", cache_path.display()))?;
    let latest = cache.latest_by_id();
    if latest.is_empty() {
        return Err(AppError::usage(format!("cache {} holds no records", cache_path.display())));
    }
    let (records, labels): (Vec<SignalCacheRecord>, Vec<Label>) = match labels_path {
        Some(p) => {
            let examples = load_jsonl_dataset(p).context(format!("loading labels {}", p.display()))?;
            let by_id: HashMap<&str, &SignalCacheRecord> = latest.iter().map(|r| (r.id.as_str(), *r)).collect();
            let missing: Vec<&str> = examples
                .iter()
                .map(|e| e.triple.id.as_str())
                .filter(|id| !by_id.contains_key(id))
                .collect();
            if !missing.is_empty() {
                return Err(AppError::usage(format!(
                    "cache has no signals for {} labeled id(s): {}",
                    missing.len(),
                    id_list(&missing)
                )));
            }
            examples.iter().map(|e| (by_id[e.triple.id.as_str()].clone(), e.label)).unzip()
        }
        None => {
            let unlabeled: Vec<&str> = latest.iter().filter(|r| r.label.is_none()).map(|r| r.id.as_str()).collect();
            if !unlabeled.is_empty() {
                return Err(AppError::usage(format!(
                    "cache records without labels (pass --labels): {}",
                    id_list(&unlabeled)
                )));
            }
            latest.into_iter().map(|r| (r.clone(), r.label.expect("checked"))).unzip()
        }
    };
    Ok(LabeledCache { records, labels })
}

impl LabeledCache {
    pub fn matrix(&self, variant: FeatureVariant) -> AppResult<FeatureMatrix> {
        let mut rows = Vec::with_capacity(self.records.len());
        let mut missing: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for r in &self.records {
            match r.row(variant) {
                Ok(row) => rows.push(row),
                Err(cols) => {
                    missing.insert(&r.id, cols);
                }
            }
        }
        if !missing.is_empty() {
            let ids: Vec<&str> = missing.keys().copied().collect();
            let cols: Vec<&str> = {
                let mut c: Vec<&str> = missing.values().flatten().copied().collect();
                c.sort_unstable();
                c.dedup();
                c
            };
            return Err(AppError::usage(format!(
                "{} variant needs columns {cols:?} missing for {} id(s): {}",
                variant,
                ids.len(),
                id_list(&ids)
            )));
        }
        FeatureMatrix::from_rows(variant, rows, self.labels.clone()).context("building feature matrix")
    }

    pub fn theory_scores(&self) -> AppResult<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.signals
                    .get("esi_harm")
                    .map(|h| (1.0 - h).clamp(0.0, 1.0))
                    .ok_or_else(|| AppError::usage(format!("record {} lacks esi_harm", r.id)))
            })
            .collect()
    }
}

pub fn load_train_config(path: Option<&Path>, seed: Option<u64>) -> AppResult<TrainConfig> {
    let mut cfg: TrainConfig = match path {
        Some(p) => {
            let text = fs::read_to_string(p).context(format!("reading {}", p.display()))?;
            serde_json::from_str(&text).context(format!("parsing train config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().context("invalid train config")?;
    Ok(cfg)
}

/// Out-of-fold evaluation with folds drawn from `cfg.seed`.
pub fn oof_evaluation(kind: ModelKind, matrix: &FeatureMatrix, cfg: &TrainConfig) -> AppResult<Evaluation> {
    let folds = stratified_folds_for_labels(matrix.labels(), cfg.folds, cfg.seed).context("building folds")?;
    let pairs = oof_predictions(kind, matrix, &folds, cfg).context(format!("cross-validating {kind}"))?;
    let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    evaluate(&scores, matrix.labels()).context("evaluating")
}

/// Fits on every row; returns the model and its out-of-fold report.
pub fn train_model(
    data: &LabeledCache,
    kind: ModelKind,
    variant: FeatureVariant,
    cfg: &TrainConfig,
) -> AppResult<(TrainedModel, EvalReport)> {
    let matrix = data.matrix(variant)?;
    let report = oof_evaluation(kind, &matrix, cfg)?.report;
    let model = train(kind, &matrix, cfg).context(format!("training {kind}"))?;
    Ok((model, report))
}

pub fn load_model(path: &Path) -> AppResult<TrainedModel> {
    TrainedModel::load(path).map_err(|e: LoadError| AppError::usage(format!("{}: {e}", path.display())))
}

/// Scores every cached example with `scorer`.
pub fn eval_scores(data: &LabeledCache, scorer: &Scorer) -> AppResult<Vec<f64>> {
    match scorer {
        Scorer::TheoryGuided => data.theory_scores(),
        Scorer::Model(m) => {
            let matrix = data.matrix(m.variant)?;
            m.predict_matrix(&matrix).context("model does not fit the cache")
        }
    }
}

pub fn write_eval_outputs(eval: &Evaluation, dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).context(format!("creating {}", dir.display()))?;
    let io = |p: PathBuf| move |e: std::io::Error| AppError::usage(format!("writing {}: {e}", p.display()));
    let report = dir.join("report.json");
    fs::write(&report, eval.report.to_json_pretty() + "\n").map_err(io(report.clone()))?;
    let roc = dir.join("roc.csv");
    let mut buf = Vec::new();
    write_roc_csv(&mut buf, &eval.roc).map_err(io(roc.clone()))?;
    fs::write(&roc, &buf).map_err(io(roc.clone()))?;
    let pr = dir.join("pr.csv");
    let mut buf = Vec::new();
    write_pr_csv(&mut buf, &eval.pr).map_err(io(pr.clone()))?;
    fs::write(&pr, &buf).map_err(io(pr.clone()))?;
    Ok(())
}

/// One row of the ablation comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub method: String,
    /// `base`, `improved` or `-` for the theory-guided score.
    pub variant: String,
    /// At the 0.5 probability threshold.
    pub accuracy: f64,
    pub auroc: f64,
    pub auprc: f64,
}

/// Kinds in the ablation grid; the meta-ensemble is reported as the
/// optimized ensemble.
pub const ABLATION_KINDS: [ModelKind; 4] =
    [ModelKind::RandomForest, ModelKind::MetaEnsemble, ModelKind::GradientBoosting, ModelKind::Mlp];

fn ablation_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::MetaEnsemble => "Optimized Ensemble",
        ModelKind::Mlp => "Neural Network",
        other => other.display_name(),
    }
}

fn row_for(method: String, variant: &str, scores: &[f64], labels: &[Label]) -> AppResult<AblationRow> {
    let eval = evaluate(scores, labels).context("evaluating")?;
    let at_half = confusion_at(scores, labels, 0.5).context("evaluating")?;
    Ok(AblationRow {
        method,
        variant: variant.to_string(),
        accuracy: at_half.accuracy,
        auroc: eval.report.auroc,
        auprc: eval.report.auprc,
    })
}

/// Out-of-fold BASE vs IMPROVED grid plus the theory-guided score, sorted by
/// AUROC descending (ties keep grid order).
pub fn ablate(data: &LabeledCache, cfg: &TrainConfig) -> AppResult<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for variant in [FeatureVariant::Base, FeatureVariant::Improved] {
        let matrix = data.matrix(variant)?;
        let folds = stratified_folds_for_labels(matrix.labels(), cfg.folds, cfg.seed).context("building folds")?;
        for kind in ABLATION_KINDS {
            let pairs = oof_predictions(kind, &matrix, &folds, cfg).context(format!("cross-validating {kind}"))?;
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            rows.push(row_for(ablation_name(kind).to_string(), variant.as_str(), &scores, matrix.labels())?);
        }
    }
    rows.push(row_for("Theory-Guided".into(), "-", &data.theory_scores()?, &data.labels)?);
    rows.sort_by(|a, b| b.auroc.total_cmp(&a.auroc));
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<20} {:<9} {:>8} {:>8} {:>8}\n", "method", "variant", "accuracy", "auroc", "auprc");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20} {:<9} {:>8.4} {:>8.4} {:>8.4}",
            r.method, r.variant, r.accuracy, r.auroc, r.auprc
        );
    }
    out
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> AppResult<()> {
    let mut buf = Vec::new();
    writeln!(buf, "method,variant,accuracy,auroc,auprc").expect("vec write");
    for r in rows {
        writeln!(buf, "{},{},{},{},{}", r.method, r.variant, r.accuracy, r.auroc, r.auprc).expect("vec write");
    }
    fs::write(path, buf).context(format!("writing {}", path.display()))
}

/// Extracts signals for one triple and scores them.
pub fn score(
    triple: &QcaTriple,
    extractor: &SignalExtractor,
    backends: &Backends,
    scorer: &Scorer,
    threshold: f64,
) -> AppResult<ScoreResponse> {
    triple.validate().context("invalid input")?;
    let v = extractor
        .extract(triple, backends.llm.as_ref(), backends.nli.as_ref())
        .map_err(|e| match e.backend_error() {
            Some(_) => AppError::backend(e.to_string()),
            None => AppError::usage(e.to_string()),
        })?;
    scorer.respond(v, threshold).map_err(AppError::usage)
}
