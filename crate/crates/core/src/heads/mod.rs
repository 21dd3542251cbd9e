//! Classical classifier heads fitted on tapped CNN features.

mod common;
mod forest;
mod logistic;
mod matrix;
mod svm;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use common::Classifier;
pub use forest::{
    fit_forest, fit_forest_with, gini, importance, ForestConfig, ForestModel, ImportanceVector, Node, Tree,
};
pub use logistic::{fit_logistic, logistic_objective, LogisticConfig, LogisticModel};
pub use matrix::{FeatureMatrix, Provenance};
pub use svm::{fit_svm, hinge, LinearSvmModel, SvmConfig};

use crate::error::{Error, Result};
use crate::jsonio::{load_json, save_json};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Logistic,
    Svm,
    Forest,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Logistic, HeadKind::Svm, HeadKind::Forest];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Logistic => "logistic",
            HeadKind::Svm => "svm",
            HeadKind::Forest => "forest",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters for every head kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadsConfig {
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
}

/// Any fitted head; persists as tagged JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedHead {
    Logistic(LogisticModel),
    Svm(LinearSvmModel),
    Forest(ForestModel),
}

impl FittedHead {
    pub fn fit(kind: HeadKind, x: &FeatureMatrix, cfg: &HeadsConfig, exec: Execution) -> Result<Self> {
        Ok(match kind {
            HeadKind::Logistic => FittedHead::Logistic(fit_logistic(x, &cfg.logistic)?),
            HeadKind::Svm => FittedHead::Svm(fit_svm(x, &cfg.svm)?),
            HeadKind::Forest => FittedHead::Forest(fit_forest_with(x, &cfg.forest, exec)?),
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            FittedHead::Logistic(_) => HeadKind::Logistic,
            FittedHead::Svm(_) => HeadKind::Svm,
            FittedHead::Forest(_) => HeadKind::Forest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FittedHead::Logistic(m) => m.validate(),
            FittedHead::Svm(m) => m.validate(),
            FittedHead::Forest(m) => m.validate(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let head: FittedHead = load_json(path)?;
        head.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(head)
    }
}

impl Classifier for FittedHead {
    fn dim(&self) -> usize {
        match self {
            FittedHead::Logistic(m) => m.dim(),
            FittedHead::Svm(m) => m.dim(),
            FittedHead::Forest(m) => m.dim(),
        }
    }

    fn predict_row(&self, row: &[f32]) -> u8 {
        match self {
            FittedHead::Logistic(m) => m.predict_row(row),
            FittedHead::Svm(m) => m.predict_row(row),
            FittedHead::Forest(m) => m.predict_row(row),
        }
    }
}
