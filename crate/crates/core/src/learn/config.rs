use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train_boosted, train_forest, BoostParams, ForestParams, Model, ModelKind};
use crate::error::{Error, Result};

/// Hyperparameters for one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Forest(ForestParams),
    Boosted(BoostParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
            ModelKind::Boosted => ModelSpec::Boosted(BoostParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Boosted(_) => ModelKind::Boosted,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Forest(p) => p.seed,
            ModelSpec::Boosted(p) => p.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> ModelSpec {
        match &mut self {
            ModelSpec::Forest(p) => p.seed = seed,
            ModelSpec::Boosted(p) => p.seed = seed,
        }
        self
    }

    pub fn train(&self, x: &[Vec<f64>], y: &[usize]) -> Result<Model> {
        match self {
            ModelSpec::Forest(p) => train_forest(x, y, p).map(Model::Forest),
            ModelSpec::Boosted(p) => train_boosted(x, y, p).map(Model::Boosted),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. The `model` key
    /// picks the family and must come before any family-specific key.
    pub fn parse(text: &str) -> Result<ModelSpec> {
        let mut spec = ModelSpec::default_for(ModelKind::Forest);
        let mut seen_other = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let at = |e: Error| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", lineno + 1)),
                other => other,
            };
            if key == "model" {
                if seen_other {
                    return Err(Error::Config(format!(
                        "line {}: 'model' must precede other keys",
                        lineno + 1
                    )));
                }
                spec = ModelSpec::default_for(value.parse().map_err(at)?);
                continue;
            }
            seen_other = true;
            spec.set(key, value).map_err(at)?;
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<ModelSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        ModelSpec::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self {
            ModelSpec::Forest(p) => match key {
                "n_estimators" => p.n_estimators = num(key, value)?,
                "criterion" => p.criterion = value.parse()?,
                "min_samples_split" => p.min_samples_split = num(key, value)?,
                "max_depth" => p.max_depth = optional(key, value)?,
                "max_features" => p.max_features = value.parse()?,
                "bootstrap" => p.bootstrap = num(key, value)?,
                "class_weight" => {
                    p.balanced = match value {
                        "none" => false,
                        "balanced" => true,
                        _ => return Err(Error::Config(format!("bad class_weight '{value}'"))),
                    }
                }
                "random_state" => p.seed = num(key, value)?,
                _ => return Err(unknown(key, "forest")),
            },
            ModelSpec::Boosted(p) => match key {
                "n_estimators" => p.n_estimators = num(key, value)?,
                "max_depth" => p.max_depth = num(key, value)?,
                "learning_rate" => p.learning_rate = num(key, value)?,
                "colsample_bytree" => p.colsample_bytree = num(key, value)?,
                "colsample_bylevel" => p.colsample_bylevel = num(key, value)?,
                "reg_lambda" => p.lambda = num(key, value)?,
                "gamma" => p.gamma = num(key, value)?,
                "min_child_weight" => p.min_child_weight = num(key, value)?,
                "random_state" => p.seed = num(key, value)?,
                _ => return Err(unknown(key, "boosted")),
            },
        }
        Ok(())
    }

    /// Serializes every key so that `parse` reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", self.kind());
        match self {
            ModelSpec::Forest(p) => {
                let _ = writeln!(s, "n_estimators = {}", p.n_estimators);
                let _ = writeln!(s, "criterion = {}", p.criterion);
                let _ = writeln!(s, "min_samples_split = {}", p.min_samples_split);
                let depth = p.max_depth.map_or("none".to_string(), |d| d.to_string());
                let _ = writeln!(s, "max_depth = {depth}");
                let _ = writeln!(s, "max_features = {}", p.max_features);
                let _ = writeln!(s, "bootstrap = {}", p.bootstrap);
                let cw = if p.balanced { "balanced" } else { "none" };
                let _ = writeln!(s, "class_weight = {cw}");
                let _ = writeln!(s, "random_state = {}", p.seed);
            }
            ModelSpec::Boosted(p) => {
                let _ = writeln!(s, "n_estimators = {}", p.n_estimators);
                let _ = writeln!(s, "max_depth = {}", p.max_depth);
                let _ = writeln!(s, "learning_rate = {}", p.learning_rate);
                let _ = writeln!(s, "colsample_bytree = {}", p.colsample_bytree);
                let _ = writeln!(s, "colsample_bylevel = {}", p.colsample_bylevel);
                let _ = writeln!(s, "reg_lambda = {}", p.lambda);
                let _ = writeln!(s, "gamma = {}", p.gamma);
                let _ = writeln!(s, "min_child_weight = {}", p.min_child_weight);
                let _ = writeln!(s, "random_state = {}", p.seed);
            }
        }
        s
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn optional(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "none" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn unknown(key: &str, model: &str) -> Error {
    Error::Config(format!("unknown key '{key}' for model {model}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::Criterion;

    #[test]
    fn defaults_match_the_hyperparameter_table() {
        let ModelSpec::Forest(f) = ModelSpec::parse("").unwrap() else { panic!() };
        assert_eq!(f.n_estimators, 300);
        assert_eq!(f.criterion, Criterion::Entropy);
        assert_eq!(f.min_samples_split, 10);
        assert_eq!(f.seed, 0);
        let ModelSpec::Boosted(b) = ModelSpec::parse("model = boosted").unwrap() else { panic!() };
        assert_eq!(
            (b.n_estimators, b.max_depth, b.learning_rate, b.colsample_bytree, b.colsample_bylevel),
            (1000, 25, 0.1, 0.4, 0.4)
        );
    }

    #[test]
    fn parse_and_round_trip() {
        let text = "# forest\nmodel = forest\nn_estimators = 50\ncriterion=gini\nmax_depth = 7 # inline\n";
        let spec = ModelSpec::parse(text).unwrap();
        let ModelSpec::Forest(f) = &spec else { panic!() };
        assert_eq!((f.n_estimators, f.criterion, f.max_depth), (50, Criterion::Gini, Some(7)));
        assert_eq!(ModelSpec::parse(&spec.to_config_string()).unwrap(), spec);
        let b = ModelSpec::parse("model = boosted\nlearning_rate = 0.3\nrandom_state = 4").unwrap();
        assert_eq!(ModelSpec::parse(&b.to_config_string()).unwrap(), b);
        assert_eq!(b.seed(), 4);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "n_estimators",
            "n_estimators = many",
            "learning_rate = 0.1",
            "criterion = mse",
            "n_estimators = 3\nmodel = boosted",
            "model = svm",
        ] {
            assert!(matches!(ModelSpec::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
