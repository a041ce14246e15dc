//! Churn classifiers and stratified cross-validation.

mod cv;
mod forest;
mod logistic;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cv::{cross_validate, cross_validate_at, stratified_folds, CvReport, MeanReport};
pub use forest::{resolve_mtry, train_forest, Forest, ForestConfig, Node, Tree};
pub use logistic::{train_logistic, Logistic, LogisticConfig};

/// Which classifier to train, with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainerConfig {
    RandomForest(ForestConfig),
    Logistic(LogisticConfig),
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig::RandomForest(ForestConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    RandomForest(Forest),
    Logistic(Logistic),
}

/// A fitted classifier that only accepts vectors of the width it was
/// trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_count: usize,
    /// Column names in order, when known.
    #[serde(default)]
    pub feature_names: Vec<alloc::string::String>,
    pub params: ModelParams,
}

impl TrainedModel {
    /// Probability of departure.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(Error::FeatureContract {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::RandomForest(f) => f.predict_proba(x),
            ModelParams::Logistic(l) => l.predict_proba(x),
        })
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }
}

fn check_training_set(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let p = x[0].len();
    if let Some(r) = x.iter().position(|r| r.len() != p) {
        return Err(Error::FeatureContract {
            expected: p,
            got: x[r].len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(p)
}

impl TrainerConfig {
    pub fn train(&self, x: &[Vec<f64>], y: &[bool], seed: u64) -> Result<TrainedModel> {
        let p = check_training_set(x, y)?;
        let params = match self {
            TrainerConfig::RandomForest(c) => ModelParams::RandomForest(train_forest(x, y, c, seed)?),
            TrainerConfig::Logistic(c) => ModelParams::Logistic(train_logistic(x, y, c)?),
        };
        Ok(TrainedModel {
            feature_count: p,
            feature_names: Vec::new(),
            params,
        })
    }
}

#[cfg(test)]
mod tests;
