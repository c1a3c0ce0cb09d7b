//! Hallucination detection over (question, context, answer) triples.
//!
//! Signals are extracted per triple through pluggable backends
//! ([`signals`]), stacked into BASE or IMPROVED feature matrices
//! ([`features`]), and aggregated either by the theory-guided risk score or by
//! one of the supervised [`classifiers`]. [`metrics`] evaluates the result and
//! [`synthetic`] produces planted signal data for offline experiments.

pub mod classifiers;
pub mod dataset;
pub mod features;
pub mod mathkit;
pub mod metrics;
pub mod signals;
pub mod synthetic;

pub use classifiers::{ModelKind, TrainConfig, TrainedModel};
pub use dataset::{Label, LabeledExample, QcaTriple};
pub use features::{FeatureMatrix, FeatureVariant};
pub use metrics::EvalReport;
pub use signals::{SignalConfig, SignalVector};
