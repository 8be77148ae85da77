//! Tree ensembles, importance-based feature selection and PCA.
//!
//! Labels are class indices: 0 for LGG, 1 for HGG (the positive class).

mod boost;
mod config;
mod forest;
mod pca;
mod persist;
mod select;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use boost::{log_loss_from_margins, predict_boosted, train_boosted, BoostParams, BoostedModel, RegNode, RegTree};
pub use config::ModelSpec;
pub use forest::{predict_forest, train_forest, Forest, ForestParams, MaxFeatures};
pub use pca::{pca_project, Pca};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, ModelRecord, MAGIC};
pub use select::{
    best_tau, candidate_taus, project_columns, select_features, tau_sweep, SelectedFeatureSet, SweepPoint,
};
pub use tree::{Criterion, DecisionTree};

use crate::error::{Error, Result};
use crate::volume::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Probability of HGG.
    pub score: f64,
}

impl Prediction {
    /// Scores of exactly 0.5 go to HGG.
    pub fn from_score(score: f64) -> Prediction {
        let label = if score >= 0.5 { Label::Hgg } else { Label::Lgg };
        Prediction { label, score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Forest,
    Boosted,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Boosted => "boosted",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" | "rf" => Ok(ModelKind::Forest),
            "boosted" | "xgb" => Ok(ModelKind::Boosted),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Forest(Forest),
    Boosted(BoostedModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Forest(_) => ModelKind::Forest,
            Model::Boosted(_) => ModelKind::Boosted,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Forest(m) => m.n_features,
            Model::Boosted(m) => m.n_features,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Forest(m) => m.score(x),
            Model::Boosted(m) => m.score(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.score(x).map(Prediction::from_score)
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

/// Normalized impurity decrease (forest) or split gain (boosted) per feature.
pub fn feature_importance(m: &Model) -> &[f64] {
    match m {
        Model::Forest(f) => &f.importance,
        Model::Boosted(b) => &b.importance,
    }
}

/// Validates a training set and returns its feature count.
pub(crate) fn check_training_data(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidData(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 training samples".into()));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::InvalidData("feature rows are empty".into()));
    }
    for row in x {
        if row.len() != d {
            return Err(Error::Shape {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
    }
    if let Some(&c) = y.iter().find(|&&c| c > 1) {
        return Err(Error::InvalidData(format!("label index {c} is not binary")));
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(Error::DegenerateLabels);
    }
    Ok(d)
}

pub(crate) fn normalize_importance(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
}
