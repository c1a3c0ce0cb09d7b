//! Supervised aggregation over signal features: random forest, gradient
//! boosting, weighted logistic, a one-hidden-layer MLP and a stacked
//! meta-ensemble of those four.
//!
//! Models serialize to pretty JSON headed by `format_version`. Floats are
//! written in shortest round-trip form, so a reloaded model predicts
//! bit-identically.

mod boosting;
mod forest;
mod logistic;
mod meta;
mod mlp;
mod tree;

pub use boosting::{GradientBoosting, GB_LEAF_L2};
pub use forest::{ForestPlan, RandomForest};
pub use logistic::LogisticModel;
pub use meta::{MetaEnsemble, OofColumn, BASE_KINDS};
pub use mlp::{gradient_deviation, mlp_gradient_check, Mlp, FD_STEP};
pub use tree::{Node, Tree};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FoldAssignment, Label};
use crate::features::{FeatureMatrix, FeatureVariant};

pub const MODEL_FORMAT_VERSION: &str = "pcib-model-v1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("need at least {required} examples, got {n}")]
    TooFewExamples { n: usize, required: usize },
    #[error("feature mismatch: model expects {expected:?}, got {got}")]
    FeatureMismatch { expected: Vec<String>, got: String },
    #[error("non-finite input feature {0}")]
    NonFinite(String),
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("fold assignment error: {0}")]
    Folds(String),
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("incompatible model format `{found}` (this build reads {MODEL_FORMAT_VERSION})")]
    Incompatible { found: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    GradientBoosting,
    LogisticWeighted,
    Mlp,
    MetaEnsemble,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::LogisticWeighted,
        ModelKind::Mlp,
        ModelKind::MetaEnsemble,
    ];

    /// CLI short name.
    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "rf",
            ModelKind::GradientBoosting => "gb",
            ModelKind::LogisticWeighted => "logistic",
            ModelKind::Mlp => "mlp",
            ModelKind::MetaEnsemble => "meta",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "Random Forest",
            ModelKind::GradientBoosting => "Gradient Boosting",
            ModelKind::LogisticWeighted => "Optimized Weighted",
            ModelKind::Mlp => "MLP",
            ModelKind::MetaEnsemble => "Meta-Ensemble",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| {
                k.short_name() == lower
                    || serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_owned)) == Some(lower.clone())
            })
            .ok_or_else(|| format!("unknown model kind `{s}` (expected rf, gb, logistic, mlp or meta)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub rf_trees: usize,
    pub rf_max_depth: usize,
    /// `None` means round(sqrt(d)).
    pub rf_features_per_split: Option<usize>,
    pub gb_rounds: usize,
    pub gb_learning_rate: f64,
    pub gb_max_depth: usize,
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub mlp_learning_rate: f64,
    pub folds: usize,
    pub logistic_epochs: usize,
    pub logistic_learning_rate: f64,
    pub logistic_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rf_trees: 200,
            rf_max_depth: 6,
            rf_features_per_split: None,
            gb_rounds: 100,
            gb_learning_rate: 0.1,
            gb_max_depth: 3,
            mlp_hidden: 16,
            mlp_epochs: 500,
            mlp_learning_rate: 0.01,
            folds: 5,
            logistic_epochs: 1000,
            logistic_learning_rate: 0.5,
            logistic_l2: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("rf_trees", self.rf_trees),
            ("rf_max_depth", self.rf_max_depth),
            ("gb_rounds", self.gb_rounds),
            ("gb_max_depth", self.gb_max_depth),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_epochs", self.mlp_epochs),
            ("logistic_epochs", self.logistic_epochs),
            ("rf_features_per_split", self.rf_features_per_split.unwrap_or(1)),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ClassifierError::Config(format!("{name} must be positive")));
            }
        }
        if self.folds < 2 {
            return Err(ClassifierError::Config("folds must be at least 2".into()));
        }
        let rates = [
            ("gb_learning_rate", self.gb_learning_rate),
            ("mlp_learning_rate", self.mlp_learning_rate),
            ("logistic_learning_rate", self.logistic_learning_rate),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ClassifierError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.logistic_l2 >= 0.0 && self.logistic_l2.is_finite()) {
            return Err(ClassifierError::Config("logistic_l2 must be >= 0".into()));
        }
        Ok(())
    }

    pub fn features_per_split(&self, d: usize) -> usize {
        let default = ((d as f64).sqrt().round() as usize).max(1);
        self.rf_features_per_split.unwrap_or(default).clamp(1, d.max(1))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean logistic loss of logits `f` against 0/1 targets.
pub(crate) fn log_loss(f: &[f64], y: &[f64]) -> f64 {
    f.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum::<f64>() / y.len() as f64
}

/// Standardized values are clamped to this magnitude so arbitrary finite
/// inputs keep every downstream sum finite.
const STANDARDIZED_LIMIT: f64 = 1e6;

/// Per-feature z-scoring. Constant features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], scale: vec![1.0; d] }
    }

    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| ((v - m) / s).clamp(-STANDARDIZED_LIMIT, STANDARDIZED_LIMIT))
            .collect()
    }
}

/// Fitted parameters, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ModelParams {
    RandomForest(RandomForest),
    GradientBoosting(GradientBoosting),
    LogisticWeighted(LogisticModel),
    Mlp(Mlp),
    MetaEnsemble(Box<MetaEnsemble>),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
            ModelParams::GradientBoosting(_) => ModelKind::GradientBoosting,
            ModelParams::LogisticWeighted(_) => ModelKind::LogisticWeighted,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::MetaEnsemble(_) => ModelKind::MetaEnsemble,
        }
    }

    /// Probability of the positive class; `x` must have the fitted width.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let p = match self {
            ModelParams::RandomForest(m) => m.predict(x),
            ModelParams::GradientBoosting(m) => m.predict(x),
            ModelParams::LogisticWeighted(m) => m.predict(x),
            ModelParams::Mlp(m) => m.predict(x),
            ModelParams::MetaEnsemble(m) => m.predict(x),
        };
        if p.is_nan() {
            0.5
        } else {
            p.clamp(0.0, 1.0)
        }
    }

    fn check(&self, d: usize) -> std::result::Result<(), String> {
        let width = |got: usize, what: &str| {
            if got == d {
                Ok(())
            } else {
                Err(format!("{what} has width {got}, expected {d}"))
            }
        };
        match self {
            ModelParams::RandomForest(m) => {
                if m.trees.is_empty() {
                    return Err("forest has no trees".into());
                }
                m.trees.iter().try_for_each(|t| t.check(d))
            }
            ModelParams::GradientBoosting(m) => {
                if m.trees.len() != m.shrinkage.len() {
                    return Err("boosting trees and shrinkage differ in length".into());
                }
                m.trees.iter().try_for_each(|t| t.check(d))
            }
            ModelParams::LogisticWeighted(m) => {
                width(m.weights.len(), "logistic weights")?;
                width(m.scaler.mean.len(), "logistic scaler")?;
                width(m.scaler.scale.len(), "logistic scaler")
            }
            ModelParams::Mlp(m) => {
                width(m.scaler.mean.len(), "mlp scaler")?;
                width(m.scaler.scale.len(), "mlp scaler")?;
                let h = m.b1.len();
                if h == 0 || m.w2.len() != h || m.w1.len() != h * d {
                    return Err("mlp layer shapes are inconsistent".into());
                }
                Ok(())
            }
            ModelParams::MetaEnsemble(m) => {
                if m.base.len() != BASE_KINDS.len() {
                    return Err("meta-ensemble needs one model per base kind".into());
                }
                for (p, k) in m.base.iter().zip(BASE_KINDS) {
                    if p.kind() != k {
                        return Err(format!("meta-ensemble base model {} where {} expected", p.kind(), k));
                    }
                    p.check(d)?;
                }
                ModelParams::LogisticWeighted(m.meta.clone()).check(BASE_KINDS.len())
            }
        }
    }
}

fn has_both_classes(y: &[f64]) -> bool {
    y.iter().any(|&v| v > 0.5) && y.iter().any(|&v| v <= 0.5)
}

/// Fits one model on raw rows and 0/1 targets.
pub(crate) fn fit_params(kind: ModelKind, x: &[Vec<f64>], y: &[f64], cfg: &TrainConfig) -> Result<ModelParams> {
    if !has_both_classes(y) {
        return Err(ClassifierError::SingleClass);
    }
    let required = if kind == ModelKind::MetaEnsemble { 2 * cfg.folds } else { 2 };
    if y.len() < required {
        return Err(ClassifierError::TooFewExamples { n: y.len(), required });
    }
    let d = x[0].len();
    Ok(match kind {
        ModelKind::RandomForest => ModelParams::RandomForest(RandomForest::fit(
            x,
            y,
            cfg.rf_trees,
            cfg.rf_max_depth,
            cfg.features_per_split(d),
            cfg.seed,
        )),
        ModelKind::GradientBoosting => ModelParams::GradientBoosting(GradientBoosting::fit(
            x,
            y,
            cfg.gb_rounds,
            cfg.gb_learning_rate,
            cfg.gb_max_depth,
        )),
        ModelKind::LogisticWeighted => ModelParams::LogisticWeighted(LogisticModel::fit(
            x,
            y,
            cfg.logistic_epochs,
            cfg.logistic_learning_rate,
            cfg.logistic_l2,
        )),
        ModelKind::Mlp => ModelParams::Mlp(Mlp::fit(x, y, cfg.mlp_hidden, cfg.mlp_epochs, cfg.mlp_learning_rate, cfg.seed)),
        ModelKind::MetaEnsemble => ModelParams::MetaEnsemble(Box::new(MetaEnsemble::fit(x, y, cfg)?)),
    })
}

/// Out-of-fold probabilities in row order.
pub(crate) fn oof_raw(
    kind: ModelKind,
    x: &[Vec<f64>],
    y: &[f64],
    folds: &FoldAssignment,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if folds.len() != y.len() {
        return Err(ClassifierError::Folds(format!(
            "fold assignment covers {} examples, matrix has {}",
            folds.len(),
            y.len()
        )));
    }
    let per_fold = (0..folds.k())
        .into_par_iter()
        .map(|fold| {
            let (train, test) = folds.split(fold);
            if test.is_empty() {
                return Ok((test, Vec::new()));
            }
            if train.is_empty() {
                return Err(ClassifierError::Folds(format!("fold {fold} leaves no training data")));
            }
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = fit_params(kind, &tx, &ty, cfg)?;
            let preds = test.iter().map(|&i| model.predict(&x[i])).collect();
            Ok((test, preds))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![f64::NAN; y.len()];
    for (test, preds) in per_fold {
        for (i, p) in test.into_iter().zip(preds) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// A fitted model plus the metadata needed to check inputs and reload it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: String,
    pub kind: ModelKind,
    pub variant: FeatureVariant,
    pub feature_names: Vec<String>,
    pub train_seed: u64,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub kind: ModelKind,
    pub variant: FeatureVariant,
    pub version: String,
}

pub fn train(kind: ModelKind, matrix: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let params = fit_params(kind, matrix.rows(), &matrix.targets(), cfg)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION.to_string(),
        kind,
        variant: matrix.variant(),
        feature_names: matrix.feature_names().iter().map(|s| s.to_string()).collect(),
        train_seed: cfg.seed,
        params,
    })
}

/// Out-of-fold (probability, label) pairs in matrix row order.
pub fn oof_predictions(
    kind: ModelKind,
    matrix: &FeatureMatrix,
    folds: &FoldAssignment,
    cfg: &TrainConfig,
) -> Result<Vec<(f64, Label)>> {
    cfg.validate()?;
    let probs = oof_raw(kind, matrix.rows(), &matrix.targets(), folds, cfg)?;
    Ok(probs.into_iter().zip(matrix.labels().iter().copied()).collect())
}

impl TrainedModel {
    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: self.kind,
            variant: self.variant,
            version: self.format_version.clone(),
        }
    }

    fn mismatch(&self, got: String) -> ClassifierError {
        ClassifierError::FeatureMismatch { expected: self.feature_names.clone(), got }
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_names.len() {
            return Err(self.mismatch(format!("{} values", features.len())));
        }
        if let Some(j) = features.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite(self.feature_names[j].clone()));
        }
        Ok(self.params.predict(features))
    }

    /// Requires the exact feature names, in order.
    pub fn check_feature_names<S: AsRef<str>>(&self, names: &[S]) -> Result<()> {
        let same = names.len() == self.feature_names.len()
            && names.iter().zip(&self.feature_names).all(|(a, b)| a.as_ref() == b);
        if same {
            Ok(())
        } else {
            let got: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
            Err(self.mismatch(format!("{got:?}")))
        }
    }

    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_feature_names(matrix.feature_names())?;
        matrix.rows().iter().map(|r| self.predict_proba(r)).collect()
    }

    /// Normalized impurity decrease per feature for tree models.
    pub fn feature_importance(&self) -> Option<Vec<(String, f64)>> {
        let imp = match &self.params {
            ModelParams::RandomForest(m) => &m.importance,
            ModelParams::GradientBoosting(m) => &m.importance,
            _ => return None,
        };
        Some(self.feature_names.iter().cloned().zip(imp.iter().copied()).collect())
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("model parameters are finite");
        bytes.push(b'\n');
        bytes
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| ClassifierError::Parse(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ClassifierError::Parse("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Incompatible { found: version.to_string() });
        }
        let model: TrainedModel =
            serde_json::from_value(value).map_err(|e| ClassifierError::Parse(e.to_string()))?;
        if model.params.kind() != model.kind {
            return Err(ClassifierError::Invalid(format!(
                "header kind {} but parameters for {}",
                model.kind,
                model.params.kind()
            )));
        }
        model.check_feature_names(model.variant.feature_names())?;
        model
            .params
            .check(model.feature_names.len())
            .map_err(ClassifierError::Invalid)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        std::fs::write(path, self.serialize())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::result::Result<Self, LoadError> {
        let bytes = std::fs::read(path)?;
        Ok(Self::deserialize(&bytes)?)
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ClassifierError),
}
