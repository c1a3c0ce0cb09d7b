use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::LogisticModel;
use super::{fit_params, oof_raw, ClassifierError, ModelKind, ModelParams, TrainConfig};
use crate::dataset::{stratified_folds_for_labels, FoldAssignment, Label};

/// Base learners stacked by the meta-ensemble, in meta-feature order.
pub const BASE_KINDS: [ModelKind; 4] = [
    ModelKind::RandomForest,
    ModelKind::GradientBoosting,
    ModelKind::LogisticWeighted,
    ModelKind::Mlp,
];

/// Out-of-fold probabilities of one base kind. Only [`OofColumn::compute`]
/// builds one, and it never predicts a row with a model that saw that row,
/// so the meta-learner cannot be fit on in-fold outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OofColumn {
    kind: ModelKind,
    values: Vec<f64>,
}

impl OofColumn {
    pub fn compute(
        kind: ModelKind,
        x: &[Vec<f64>],
        y: &[f64],
        folds: &FoldAssignment,
        cfg: &TrainConfig,
    ) -> Result<Self, ClassifierError> {
        Ok(Self { kind, values: oof_raw(kind, x, y, folds, cfg)? })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Logistic meta-learner over base-model probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEnsemble {
    pub base: Vec<ModelParams>,
    pub meta: LogisticModel,
}

impl MetaEnsemble {
    pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &TrainConfig) -> Result<Self, ClassifierError> {
        let labels: Vec<Label> = y.iter().map(|&v| Label::from(v > 0.5)).collect();
        let folds = stratified_folds_for_labels(&labels, cfg.folds, cfg.seed)
            .map_err(|e| ClassifierError::Folds(e.to_string()))?;
        let columns = BASE_KINDS
            .par_iter()
            .map(|&k| OofColumn::compute(k, x, y, &folds, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let meta = Self::fit_meta(&columns, y, cfg);
        let base = BASE_KINDS
            .par_iter()
            .map(|&k| fit_params(k, x, y, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { base, meta })
    }

    fn fit_meta(columns: &[OofColumn], y: &[f64], cfg: &TrainConfig) -> LogisticModel {
        let rows: Vec<Vec<f64>> = (0..y.len())
            .map(|i| columns.iter().map(|c| c.values[i]).collect())
            .collect();
        LogisticModel::fit(&rows, y, cfg.logistic_epochs, cfg.logistic_learning_rate, cfg.logistic_l2)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let stacked: Vec<f64> = self.base.iter().map(|m| m.predict(x)).collect();
        self.meta.predict(&stacked)
    }
}
