//! CART classification trees grown on (possibly repeated) sample indices.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Entropy,
    Gini,
}

impl Criterion {
    /// Impurity of a weighted two-class count.
    fn impurity(self, w0: f64, w1: f64) -> f64 {
        let total = w0 + w1;
        if total <= 0.0 {
            return 0.0;
        }
        let (p0, p1) = (w0 / total, w1 / total);
        match self {
            Criterion::Entropy => {
                let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
                h(p0) + h(p1)
            }
            Criterion::Gini => 1.0 - p0 * p0 - p1 * p1,
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Criterion::Entropy),
            "gini" => Ok(Criterion::Gini),
            other => Err(Error::Config(format!("unknown split criterion '{other}'"))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Entropy => "entropy",
            Criterion::Gini => "gini",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class probabilities `[p(LGG), p(HGG)]`.
    Leaf { probs: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub criterion: Criterion,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeSettings {
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Features examined per split; at least this many non-constant ones
    /// are tried before giving up on a node.
    pub max_features: usize,
}

pub(crate) struct TreeData<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [usize],
    pub class_weight: [f64; 2],
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl DecisionTree {
    /// Grows a tree on `samples` (indices into `data`, repeats allowed) and
    /// adds each split's weighted impurity decrease to `importance`.
    pub(crate) fn grow<R: Rng>(
        data: &TreeData<'_>,
        samples: Vec<usize>,
        settings: &TreeSettings,
        rng: &mut R,
        importance: &mut [f64],
    ) -> DecisionTree {
        let n_features = data.x.first().map_or(0, Vec::len);
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            criterion: settings.criterion,
            n_features,
        };
        let mut features: Vec<usize> = (0..n_features).collect();
        // (node slot, samples, depth)
        let mut stack = vec![(0usize, samples, 0usize)];
        tree.nodes.push(Node::Leaf { probs: [0.5, 0.5] });
        while let Some((slot, idx, depth)) = stack.pop() {
            let (w0, w1) = weights(data, &idx);
            let probs = if w0 + w1 > 0.0 {
                [w0 / (w0 + w1), w1 / (w0 + w1)]
            } else {
                [0.5, 0.5]
            };
            let leaf = Node::Leaf { probs };
            let pure = w0 == 0.0 || w1 == 0.0;
            let depth_ok = settings.max_depth.is_none_or(|d| depth < d);
            if pure || idx.len() < settings.min_samples_split || !depth_ok {
                tree.nodes[slot] = leaf;
                continue;
            }
            features.shuffle(rng);
            let Some(best) = best_split(data, &idx, &features, settings, w0, w1) else {
                tree.nodes[slot] = leaf;
                continue;
            };
            importance[best.feature] += best.gain * (w0 + w1);
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                .iter()
                .partition(|&&i| data.x[i][best.feature] <= best.threshold);
            let left = tree.nodes.len();
            tree.nodes.push(Node::Leaf { probs });
            let right = tree.nodes.len();
            tree.nodes.push(Node::Leaf { probs });
            tree.nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
            };
            stack.push((right, right_idx, depth + 1));
            stack.push((left, left_idx, depth + 1));
        }
        tree
    }

    pub fn leaf(&self, x: &[f64]) -> [f64; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probs } => return *probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }
}

fn weights(data: &TreeData<'_>, idx: &[usize]) -> (f64, f64) {
    let mut w = [0.0; 2];
    for &i in idx {
        w[data.y[i]] += data.class_weight[data.y[i]];
    }
    (w[0], w[1])
}

/// Scans features in the (already shuffled) order until `max_features`
/// non-constant ones have been tried. Split points sit halfway between
/// consecutive distinct values; samples with `x <= threshold` go left.
fn best_split(
    data: &TreeData<'_>,
    idx: &[usize],
    features: &[usize],
    settings: &TreeSettings,
    w0: f64,
    w1: f64,
) -> Option<Best> {
    let total = w0 + w1;
    let parent = settings.criterion.impurity(w0, w1);
    let mut best: Option<Best> = None;
    let mut tried = 0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
    for &f in features {
        if tried >= settings.max_features {
            break;
        }
        order.clear();
        order.extend(idx.iter().map(|&i| (data.x[i][f], data.y[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        if order[0].0 == order[order.len() - 1].0 {
            continue;
        }
        tried += 1;
        let mut left = [0.0; 2];
        for k in 0..order.len() - 1 {
            let (v, c) = order[k];
            left[c] += data.class_weight[c];
            let next = order[k + 1].0;
            if next == v {
                continue;
            }
            let lw = left[0] + left[1];
            let (r0, r1) = (w0 - left[0], w1 - left[1]);
            let rw = total - lw;
            let child = (lw * settings.criterion.impurity(left[0], left[1])
                + rw * settings.criterion.impurity(r0, r1))
                / total;
            let gain = parent - child;
            if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = v + (next - v) / 2.0;
                if !(threshold < next) {
                    threshold = v;
                }
                best = Some(Best {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings() -> TreeSettings {
        TreeSettings {
            criterion: Criterion::Entropy,
            min_samples_split: 2,
            max_depth: None,
            max_features: 1,
        }
    }

    #[test]
    fn impurity_values() {
        assert_eq!(Criterion::Entropy.impurity(1.0, 1.0), 1.0);
        assert_eq!(Criterion::Entropy.impurity(3.0, 0.0), 0.0);
        assert_eq!(Criterion::Gini.impurity(1.0, 1.0), 0.5);
    }

    #[test]
    fn separable_single_split() {
        let x = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        let y = vec![0, 0, 1, 1];
        let data = TreeData {
            x: &x,
            y: &y,
            class_weight: [1.0, 1.0],
        };
        let mut imp = vec![0.0];
        let t = DecisionTree::grow(&data, vec![0, 1, 2, 3], &settings(), &mut ChaCha8Rng::seed_from_u64(1), &mut imp);
        assert_eq!(t.split_count(), 1);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.5),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.leaf(&[0.2]), [1.0, 0.0]);
        assert_eq!(t.leaf(&[0.9]), [0.0, 1.0]);
        // a full bit of entropy removed over 4 samples
        assert_eq!(imp[0], 4.0);
    }

    #[test]
    fn min_samples_split_makes_a_leaf() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 1];
        let data = TreeData {
            x: &x,
            y: &y,
            class_weight: [1.0, 1.0],
        };
        let s = TreeSettings {
            min_samples_split: 10,
            ..settings()
        };
        let t = DecisionTree::grow(&data, vec![0, 1], &s, &mut ChaCha8Rng::seed_from_u64(1), &mut [0.0]);
        assert_eq!(t.nodes, vec![Node::Leaf { probs: [0.5, 0.5] }]);
    }

    #[test]
    fn constant_features_are_skipped() {
        // feature 0 is constant; with max_features = 1 the search must move on
        let x = vec![vec![3.0, 0.0], vec![3.0, 0.0], vec![3.0, 1.0], vec![3.0, 1.0]];
        let y = vec![0, 0, 1, 1];
        let data = TreeData {
            x: &x,
            y: &y,
            class_weight: [1.0, 1.0],
        };
        for seed in 0..8 {
            let mut imp = vec![0.0; 2];
            let t = DecisionTree::grow(&data, vec![0, 1, 2, 3], &settings(), &mut ChaCha8Rng::seed_from_u64(seed), &mut imp);
            assert_eq!(t.split_count(), 1);
            assert_eq!(imp[0], 0.0);
        }
    }
}
