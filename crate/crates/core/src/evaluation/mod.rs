//! Downstream evaluation: splits, classifiers, metrics and ablations.

pub mod ablation;
pub mod logistic;
pub mod metrics;
pub mod split;
pub mod tasks;
