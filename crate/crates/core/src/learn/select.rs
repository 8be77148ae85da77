use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeatureSet {
    pub tau: f64,
    /// Retained column indices, ascending.
    pub indices: Vec<usize>,
    /// Which model produced the importance scores.
    pub source: String,
}

impl SelectedFeatureSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Keeps every feature with importance `>= tau`.
pub fn select_features(importance: &[f64], tau: f64) -> Result<SelectedFeatureSet> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {tau}")));
    }
    let max = importance.iter().copied().fold(0.0, f64::max);
    let indices: Vec<usize> = importance
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= tau)
        .map(|(j, _)| j)
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptySelection { tau, max });
    }
    Ok(SelectedFeatureSet {
        tau,
        indices,
        source: String::from("forest"),
    })
}

pub fn project_columns(x: &[Vec<f64>], indices: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| indices.iter().map(|&j| row[j]).collect())
        .collect()
}

/// Thresholds `k/d` for `k = 0, 1, ...` up to the largest importance.
pub fn candidate_taus(importance: &[f64]) -> Vec<f64> {
    let d = importance.len();
    let max = importance.iter().copied().fold(0.0, f64::max);
    let mut taus = Vec::new();
    for k in 0.. {
        let tau = k as f64 / d as f64;
        if tau > max {
            break;
        }
        taus.push(tau);
    }
    taus
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub n_features: usize,
    pub accuracy: f64,
}

/// Trains `spec` on the fit split restricted to each `S_tau` and scores it
/// on the validation split. Thresholds that select nothing are skipped.
pub fn tau_sweep(
    spec: &ModelSpec,
    fit: (&[Vec<f64>], &[usize]),
    val: (&[Vec<f64>], &[usize]),
    importance: &[f64],
    taus: &[f64],
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let sel = match select_features(importance, tau) {
            Ok(s) => s,
            Err(Error::EmptySelection { .. }) => continue,
            Err(e) => return Err(e),
        };
        let model = spec.train(&project_columns(fit.0, &sel.indices), fit.1)?;
        let xv = project_columns(val.0, &sel.indices);
        let mut correct = 0;
        for (row, &c) in xv.iter().zip(val.1) {
            if model.predict(row)?.label.index() == c {
                correct += 1;
            }
        }
        out.push(SweepPoint {
            tau,
            n_features: sel.len(),
            accuracy: correct as f64 / val.1.len().max(1) as f64,
        });
    }
    Ok(out)
}

/// Highest validation accuracy; ties go to the larger threshold.
pub fn best_tau(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points.iter().max_by(|a, b| {
        a.accuracy
            .total_cmp(&b.accuracy)
            .then(a.tau.total_cmp(&b.tau))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let imp = [0.5, 0.3, 0.2];
        assert_eq!(select_features(&imp, 0.0).unwrap().indices, vec![0, 1, 2]);
        assert_eq!(select_features(&imp, 0.25).unwrap().indices, vec![0, 1]);
        assert_eq!(select_features(&imp, 0.5).unwrap().indices, vec![0]);
        assert!(matches!(
            select_features(&imp, 0.51),
            Err(Error::EmptySelection { .. })
        ));
        assert!(matches!(select_features(&imp, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn candidates_are_multiples_of_one_over_d() {
        assert_eq!(candidate_taus(&[0.5, 0.3, 0.2, 0.0]), vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn best_tau_prefers_larger_on_ties() {
        let pts = vec![
            SweepPoint { tau: 0.0, n_features: 10, accuracy: 0.9 },
            SweepPoint { tau: 0.1, n_features: 4, accuracy: 0.9 },
            SweepPoint { tau: 0.2, n_features: 1, accuracy: 0.7 },
        ];
        assert_eq!(best_tau(&pts).unwrap().tau, 0.1);
        assert!(best_tau(&[]).is_none());
    }

    #[test]
    fn projection_picks_columns() {
        let x = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        assert_eq!(project_columns(&x, &[2, 0]), vec![vec![3.0, 1.0], vec![6.0, 4.0]]);
    }
}
