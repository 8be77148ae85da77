use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, DecisionTree, TreeData, TreeSettings};
use super::{check_training_data, normalize_importance, Prediction};
use crate::error::{Error, Result};

/// Features considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let n = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(n) => n.min(d),
        };
        n.max(1)
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" | "none" => Ok(MaxFeatures::All),
            n => n
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .map(MaxFeatures::Count)
                .ok_or_else(|| Error::Config(format!("bad max_features '{n}'"))),
        }
    }
}

impl std::fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::All => f.write_str("all"),
            MaxFeatures::Count(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    /// Reweight classes by inverse frequency.
    pub balanced: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 300,
            criterion: Criterion::Entropy,
            min_samples_split: 10,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            balanced: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub importance: Vec<f64>,
    pub n_features: usize,
    pub params: ForestParams,
}

/// Fits a random forest; per-tree seeds come from one seeded stream so the
/// result does not depend on the thread count.
pub fn train_forest(x: &[Vec<f64>], y: &[usize], params: &ForestParams) -> Result<Forest> {
    let d = check_training_data(x, y)?;
    if params.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be positive".into()));
    }
    let n = x.len();
    let class_weight = if params.balanced {
        let n1 = y.iter().filter(|&&c| c == 1).count() as f64;
        let n0 = n as f64 - n1;
        [n as f64 / (2.0 * n0), n as f64 / (2.0 * n1)]
    } else {
        [1.0, 1.0]
    };
    let data = TreeData { x, y, class_weight };
    let settings = TreeSettings {
        criterion: params.criterion,
        min_samples_split: params.min_samples_split.max(2),
        max_depth: params.max_depth,
        max_features: params.max_features.resolve(d),
    };
    let mut seeder = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_estimators).map(|_| seeder.gen()).collect();
    let grown: Vec<(DecisionTree, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut imp = vec![0.0; d];
            let tree = DecisionTree::grow(&data, samples, &settings, &mut rng, &mut imp);
            (tree, imp)
        })
        .collect();
    let mut importance = vec![0.0; d];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (acc, v) in importance.iter_mut().zip(imp) {
            *acc += v;
        }
        trees.push(tree);
    }
    normalize_importance(&mut importance);
    Ok(Forest {
        trees,
        importance,
        n_features: d,
        params: params.clone(),
    })
}

impl Forest {
    /// Mean positive-class leaf probability over the trees.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf(x)[1]).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

pub fn predict_forest(m: &Forest, x: &[f64]) -> Result<Prediction> {
    m.score(x).map(Prediction::from_score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Label;

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        (vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]], vec![0, 0, 1, 1])
    }

    fn small() -> ForestParams {
        ForestParams {
            n_estimators: 25,
            min_samples_split: 2,
            ..ForestParams::default()
        }
    }

    #[test]
    fn sqrt_rule() {
        assert_eq!(MaxFeatures::Sqrt.resolve(300), 17);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Count(50).resolve(10), 10);
        assert_eq!("sqrt".parse::<MaxFeatures>().unwrap(), MaxFeatures::Sqrt);
        assert_eq!("7".parse::<MaxFeatures>().unwrap(), MaxFeatures::Count(7));
        assert!("0".parse::<MaxFeatures>().is_err());
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (x, y) = separable();
        let f = train_forest(&x, &y, &small()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(predict_forest(&f, xi).unwrap().label.index(), yi);
        }
        for t in &f.trees {
            assert!(t.split_count() <= 1);
            if let Some(crate::learn::tree::Node::Split { threshold, .. }) = t.nodes.first() {
                assert_eq!(*threshold, 0.5);
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_forest(&x, &[1, 1], &small()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn constant_feature_gets_no_importance() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![5.0, i as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let f = train_forest(&x, &y, &small()).unwrap();
        assert_eq!(f.importance[0], 0.0);
        assert!((f.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_forest() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64, i as f64 % 4.0])
            .collect();
        let y: Vec<usize> = (0..40).map(|i| (i * 7 % 11 > 5) as usize).collect();
        let a = train_forest(&x, &y, &small()).unwrap();
        let b = train_forest(&x, &y, &small()).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&x, &y, &ForestParams { seed: 9, ..small() }).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn tie_goes_to_hgg() {
        let leaf = |p: f64| DecisionTree {
            nodes: vec![crate::learn::tree::Node::Leaf { probs: [1.0 - p, p] }],
            criterion: Criterion::Entropy,
            n_features: 1,
        };
        let f = Forest {
            trees: vec![leaf(0.4), leaf(0.6)],
            importance: vec![0.0],
            n_features: 1,
            params: small(),
        };
        let p = predict_forest(&f, &[0.0]).unwrap();
        assert_eq!(p.score, 0.5);
        assert_eq!(p.label, Label::Hgg);
        assert!(matches!(
            predict_forest(&f, &[0.0, 1.0]),
            Err(Error::Shape { expected: 1, got: 2 })
        ));
    }
}
