use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_data, normalize_importance, Prediction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_estimators: 1000,
            max_depth: 25,
            learning_rate: 0.1,
            colsample_bytree: 0.4,
            colsample_bylevel: 0.4,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 0.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r > 0.0 && r <= 1.0;
        if !rate_ok(self.colsample_bytree) || !rate_ok(self.colsample_bylevel) {
            return Err(Error::Config("column sample rates must lie in (0, 1]".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config(
                "learning_rate must be positive, lambda and gamma non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Leaf weight with the learning rate already applied.
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<RegTree>,
    pub base_score: f64,
    pub importance: Vec<f64>,
    pub n_features: usize,
    /// Mean training log-loss before the first round and after each round.
    pub loss_history: Vec<f64>,
    pub params: BoostParams,
}

impl BoostedModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.value(x)).sum::<f64>())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.margin(x).map(sigmoid)
    }
}

pub fn predict_boosted(m: &BoostedModel, x: &[f64]) -> Result<Prediction> {
    m.score(x).map(Prediction::from_score)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean binary cross-entropy computed from margins.
pub fn log_loss_from_margins(margins: &[f64], y: &[usize]) -> f64 {
    // log(1 + e^z) - y z, written to stay finite for large |z|
    let softplus = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&z, &c)| softplus(z) - c as f64 * z)
        .sum();
    total / margins.len() as f64
}

struct Grad<'a> {
    x: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn score_term(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda > 0.0 {
        g * g / (h + lambda)
    } else {
        0.0
    }
}

fn best_split(
    data: &Grad<'_>,
    idx: &[usize],
    cols: &[usize],
    params: &BoostParams,
    g_sum: f64,
    h_sum: f64,
) -> Option<SplitChoice> {
    let parent = score_term(g_sum, h_sum, params.lambda);
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<(f64, f64, f64)> = Vec::with_capacity(idx.len());
    for &f in cols {
        order.clear();
        order.extend(idx.iter().map(|&i| (data.x[i][f], data.g[i], data.h[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            gl += order[k].1;
            hl += order[k].2;
            let (v, next) = (order[k].0, order[k + 1].0);
            if v == next {
                continue;
            }
            let (gr, hr) = (g_sum - gl, h_sum - hl);
            if hl < params.min_child_weight || hr < params.min_child_weight {
                continue;
            }
            let gain = 0.5
                * (score_term(gl, hl, params.lambda) + score_term(gr, hr, params.lambda) - parent)
                - params.gamma;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = v + (next - v) / 2.0;
                if !(threshold < next) {
                    threshold = v;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn subsample(rng: &mut ChaCha8Rng, from: &[usize], rate: f64) -> Vec<usize> {
    let k = ((from.len() as f64 * rate).floor() as usize).clamp(1, from.len());
    let mut picked: Vec<usize> = sample(rng, from.len(), k).into_iter().map(|i| from[i]).collect();
    picked.sort_unstable();
    picked
}

/// Grows one tree level by level. Returns `None` when the root has no
/// split with positive gain.
fn grow_tree(
    data: &Grad<'_>,
    params: &BoostParams,
    rng: &mut ChaCha8Rng,
    all_cols: &[usize],
    importance: &mut [f64],
) -> Option<RegTree> {
    let n = data.x.len();
    let tree_cols = subsample(rng, all_cols, params.colsample_bytree);
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    let mut level: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
    for depth in 0..=params.max_depth {
        if level.is_empty() {
            break;
        }
        let level_cols = subsample(rng, &tree_cols, params.colsample_bylevel);
        let mut next = Vec::new();
        for (slot, idx) in level {
            let g_sum: f64 = idx.iter().map(|&i| data.g[i]).sum();
            let h_sum: f64 = idx.iter().map(|&i| data.h[i]).sum();
            let leaf = RegNode::Leaf {
                value: -params.learning_rate * g_sum / (h_sum + params.lambda),
            };
            let choice = if depth < params.max_depth && idx.len() >= 2 {
                best_split(data, &idx, &level_cols, params, g_sum, h_sum)
            } else {
                None
            };
            let Some(c) = choice else {
                if slot == 0 {
                    return None;
                }
                nodes[slot] = leaf;
                continue;
            };
            importance[c.feature] += c.gain;
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| data.x[i][c.feature] <= c.threshold);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes[slot] = RegNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
            };
            next.push((left, l));
            next.push((right, r));
        }
        level = next;
    }
    Some(RegTree { nodes })
}

/// Newton boosting on the logistic loss with exact greedy splits.
pub fn train_boosted(x: &[Vec<f64>], y: &[usize], params: &BoostParams) -> Result<BoostedModel> {
    let d = check_training_data(x, y)?;
    params.validate()?;
    let n = x.len();
    let prior = y.iter().filter(|&&c| c == 1).count() as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut margins = vec![base_score; n];
    let mut loss_history = vec![log_loss_from_margins(&margins, y)];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let all_cols: Vec<usize> = (0..d).collect();
    let mut importance = vec![0.0; d];
    let mut trees = Vec::new();
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            g[i] = p - y[i] as f64;
            h[i] = p * (1.0 - p);
        }
        let data = Grad { x, g: &g, h: &h };
        let Some(tree) = grow_tree(&data, params, &mut rng, &all_cols, &mut importance) else {
            break;
        };
        for (m, xi) in margins.iter_mut().zip(x) {
            *m += tree.value(xi);
        }
        loss_history.push(log_loss_from_margins(&margins, y));
        trees.push(tree);
    }
    normalize_importance(&mut importance);
    Ok(BoostedModel {
        trees,
        base_score,
        importance,
        n_features: d,
        loss_history,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        (vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]], vec![0, 0, 1, 1])
    }

    fn quick() -> BoostParams {
        BoostParams {
            n_estimators: 300,
            max_depth: 4,
            colsample_bytree: 1.0,
            colsample_bylevel: 1.0,
            ..BoostParams::default()
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let (x, y) = separable();
        let m = train_boosted(&x, &y, &quick()).unwrap();
        assert_eq!(m.base_score, 0.0);
        assert_eq!(m.trees.len(), 300);
        assert!((m.loss_history[0] - std::f64::consts::LN_2).abs() < 1e-15);
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(predict_boosted(&m, &[1.0]).unwrap().score > 0.9);
        assert!(predict_boosted(&m, &[0.0]).unwrap().score < 0.1);
        assert_eq!(m.importance, vec![1.0]);
    }

    #[test]
    fn huge_lambda_pins_predictions_to_base() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 1, 1, 1, 1, 1, 1];
        let p = BoostParams { lambda: 1e12, ..quick() };
        let m = train_boosted(&x, &y, &p).unwrap();
        let base = 1.0 / (1.0 + (-m.base_score).exp());
        assert!((base - 6.0 / 9.0).abs() < 1e-12);
        for xi in &x {
            assert!((m.score(xi).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn stops_when_no_split_gains() {
        // a constant feature offers no split at all
        let x = vec![vec![1.0]; 6];
        let y = vec![0, 1, 0, 1, 0, 1];
        let m = train_boosted(&x, &y, &quick()).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.importance, vec![0.0]);
        assert_eq!(m.loss_history.len(), 1);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| (0..10).map(|j| ((i * 13 + j * 7) % 17) as f64).collect())
            .collect();
        let y: Vec<usize> = (0..30).map(|i| usize::from((i * 13) % 17 > 8)).collect();
        let p = BoostParams { n_estimators: 40, ..BoostParams::default() };
        let a = train_boosted(&x, &y, &p).unwrap();
        let b = train_boosted(&x, &y, &p).unwrap();
        assert_eq!(a, b);
        for w in a.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn bad_rates_are_config_errors() {
        let (x, y) = separable();
        let p = BoostParams { colsample_bytree: 0.0, ..quick() };
        assert!(matches!(train_boosted(&x, &y, &p), Err(Error::Config(_))));
    }

    #[test]
    fn log_loss_is_stable_for_large_margins() {
        let l = log_loss_from_margins(&[800.0, -800.0], &[1, 0]);
        assert_eq!(l, 0.0);
        let l = log_loss_from_margins(&[800.0], &[0]);
        assert_eq!(l, 800.0);
    }
}
