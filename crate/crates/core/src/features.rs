//! Feature stacking for the supervised layer.

use serde::{Deserialize, Serialize};

use crate::dataset::{DataError, Label};
use crate::signals::SignalVector;

/// BASE column order.
pub const BASE_FEATURES: [&str; 5] = ["uptake", "stress", "conflict", "rationalization", "esi_harm"];

/// IMPROVED column order: BASE followed by the three enhancements.
pub const IMPROVED_FEATURES: [&str; 8] = [
    "uptake",
    "stress",
    "conflict",
    "rationalization",
    "esi_harm",
    "entity_uptake",
    "context_adherence",
    "falsifiability",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureVariant {
    Base,
    Improved,
}

impl FeatureVariant {
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            FeatureVariant::Base => &BASE_FEATURES,
            FeatureVariant::Improved => &IMPROVED_FEATURES,
        }
    }

    pub fn width(self) -> usize {
        self.feature_names().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureVariant::Base => "base",
            FeatureVariant::Improved => "improved",
        }
    }

    pub fn row(self, v: &SignalVector) -> Vec<f64> {
        let mut row = vec![v.uptake, v.stress, v.conflict, v.rationalization, v.esi_harm];
        if self == FeatureVariant::Improved {
            row.extend([v.entity_uptake, v.context_adherence, v.falsifiability]);
        }
        row
    }
}

impl std::fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(FeatureVariant::Base),
            "improved" => Ok(FeatureVariant::Improved),
            other => Err(format!("unknown feature variant `{other}` (expected base or improved)")),
        }
    }
}

/// Dense row-major design matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    variant: FeatureVariant,
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl FeatureMatrix {
    /// Builds a matrix from raw rows; every row must match the variant's width
    /// and hold only finite values.
    pub fn from_rows(variant: FeatureVariant, rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty("feature matrix has no rows".into()));
        }
        if rows.len() != labels.len() {
            return Err(DataError::Config(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != variant.width() {
                return Err(DataError::Config(format!(
                    "row {i} has {} features, {} expects {}",
                    row.len(),
                    variant,
                    variant.width()
                )));
            }
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(DataError::NonFinite {
                    id: format!("row-{i}"),
                    feature: variant.feature_names()[j].to_string(),
                });
            }
        }
        Ok(Self { variant, rows, labels })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        self.variant.feature_names()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.variant.width()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.as_f64()).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|l| l.is_positive()) && self.labels.iter().any(|l| !l.is_positive())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            variant: self.variant,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Stacks signal vectors in the variant's fixed column order. `ids` is used
/// only to name the offending example on error.
pub fn to_feature_matrix<S: AsRef<str>>(
    vectors: &[(S, SignalVector, Label)],
    variant: FeatureVariant,
) -> Result<FeatureMatrix, DataError> {
    if vectors.is_empty() {
        return Err(DataError::Empty("no signal vectors to stack".into()));
    }
    let mut rows = Vec::with_capacity(vectors.len());
    let mut labels = Vec::with_capacity(vectors.len());
    for (id, v, label) in vectors {
        let row = variant.row(v);
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(DataError::NonFinite {
                id: id.as_ref().to_string(),
                feature: variant.feature_names()[j].to_string(),
            });
        }
        rows.push(row);
        labels.push(*label);
    }
    FeatureMatrix::from_rows(variant, rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector() -> SignalVector {
        SignalVector {
            uptake: 1.0,
            stress: 2.0,
            conflict: 3.0,
            rationalization: 4.0,
            esi_harm: 5.0,
            esi_geo: 6.0,
            entity_uptake: 7.0,
            context_adherence: 8.0,
            falsifiability: 9.0,
        }
    }

    #[test]
    fn shapes_and_column_order() {
        let input = [("a", vector(), Label::Hallucination)];
        let base = to_feature_matrix(&input, FeatureVariant::Base).unwrap();
        assert_eq!((base.n_rows(), base.n_features()), (1, 5));
        assert_eq!(base.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let imp = to_feature_matrix(&input, FeatureVariant::Improved).unwrap();
        assert_eq!((imp.n_rows(), imp.n_features()), (1, 8));
        assert_eq!(imp.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn header_lists_are_fixed() {
        assert_eq!(
            FeatureVariant::Base.feature_names(),
            ["uptake", "stress", "conflict", "rationalization", "esi_harm"]
        );
        assert_eq!(
            FeatureVariant::Improved.feature_names(),
            [
                "uptake",
                "stress",
                "conflict",
                "rationalization",
                "esi_harm",
                "entity_uptake",
                "context_adherence",
                "falsifiability"
            ]
        );
    }

    #[test]
    fn nan_names_example() {
        let mut v = vector();
        v.uptake = f64::NAN;
        let err = to_feature_matrix(&[("ex-9", v, Label::Factual)], FeatureVariant::Base).unwrap_err();
        assert!(err.to_string().contains("ex-9"));
        assert!(err.to_string().contains("uptake"));
    }

    #[test]
    fn empty_input_rejected() {
        let none: [(&str, SignalVector, Label); 0] = [];
        assert!(to_feature_matrix(&none, FeatureVariant::Base).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("IMPROVED".parse::<FeatureVariant>().unwrap(), FeatureVariant::Improved);
        assert!("full".parse::<FeatureVariant>().is_err());
    }
}
