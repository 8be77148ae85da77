//! Stratified splitting and binary classification metrics.
//!
//! Class indices follow [`Label::index`]: 0 is LGG, 1 is HGG. HGG is the
//! positive class for AUC.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::Label;

/// Smallest class size accepted by the 80:20 split.
pub const MIN_PER_CLASS: usize = 5;

fn class_members(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut out: [Vec<usize>; 2] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        out[l.index()].push(i);
    }
    out
}

/// Stratified split: each class contributes `round(fraction * n_c)` test
/// samples. Returns sorted (train, test) indices.
pub fn stratified_split(labels: &[Label], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut members) in class_members(labels).into_iter().enumerate() {
        if members.len() < MIN_PER_CLASS {
            return Err(Error::InsufficientData(format!(
                "class {} has {} samples, need at least {MIN_PER_CLASS}",
                Label::from_index(c),
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_80_20(labels: &[Label], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    stratified_split(labels, 0.2, seed)
}

/// Stratified k-fold: returns (train, test) pairs whose test parts
/// partition the samples.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut offset = 0;
    for (c, mut members) in class_members(labels).into_iter().enumerate() {
        if members.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {} has {} samples for {k} folds",
                Label::from_index(c),
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (j, m) in members.into_iter().enumerate() {
            folds[(j + offset) % k].push(m);
        }
        offset += 1;
    }
    Ok((0..k)
        .map(|f| {
            let mut test = folds[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
            train.sort_unstable();
            (train, test)
        })
        .collect())
}

/// Mann-Whitney AUC with the positive class 1; tied scores count one half.
pub fn auc(y_true: &[usize], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::InvalidData("labels and scores differ in length".into()));
    }
    let n_pos = y_true.iter().filter(|&&c| c == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of positives, doubled to stay integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_rank = (i + 1 + j + 1) as u64;
        let pos = order[i..=j].iter().filter(|&&o| y_true[o] == 1).count() as u64;
        rank_sum2 += pos * doubled_rank;
        i = j + 1;
    }
    let u2 = rank_sum2 - (n_pos * (n_pos + 1)) as u64;
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the test labels contain one class only.
    pub auc: Option<f64>,
    /// Rows are true classes, columns predicted ones.
    pub confusion: [[usize; 2]; 2],
    pub class_precision: [f64; 2],
    pub class_recall: [f64; 2],
    pub class_f1: [f64; 2],
    pub support: [usize; 2],
    pub seed: Option<u64>,
    pub descriptor: String,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], scores: &[f64]) -> Result<EvalReport> {
    let n = y_true.len();
    if y_pred.len() != n || scores.len() != n {
        return Err(Error::InvalidData(format!(
            "{} labels, {} predictions, {} scores",
            n,
            y_pred.len(),
            scores.len()
        )));
    }
    if n == 0 {
        return Err(Error::InsufficientData("no samples to score".into()));
    }
    if let Some(c) = y_true.iter().chain(y_pred).find(|&&c| c > 1) {
        return Err(Error::InvalidData(format!("label index {c} is not binary")));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidData(format!("score {s} outside [0, 1]")));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let support = [confusion[0][0] + confusion[0][1], confusion[1][0] + confusion[1][1]];
    let mut class_precision = [0.0; 2];
    let mut class_recall = [0.0; 2];
    let mut class_f1 = [0.0; 2];
    for c in 0..2 {
        let predicted = confusion[0][c] + confusion[1][c];
        class_precision[c] = ratio(confusion[c][c], predicted);
        class_recall[c] = ratio(confusion[c][c], support[c]);
        let s = class_precision[c] + class_recall[c];
        class_f1[c] = if s > 0.0 {
            2.0 * class_precision[c] * class_recall[c] / s
        } else {
            0.0
        };
    }
    let weighted = |v: &[f64; 2]| (v[0] * support[0] as f64 + v[1] * support[1] as f64) / n as f64;
    let auc = match auc(y_true, scores) {
        Ok(a) => Some(a),
        Err(Error::UndefinedAuc) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        accuracy: ratio(confusion[0][0] + confusion[1][1], n),
        precision: weighted(&class_precision),
        recall: weighted(&class_recall),
        f1: weighted(&class_f1),
        auc,
        confusion,
        class_precision,
        class_recall,
        class_f1,
        support,
        seed: None,
        descriptor: String::new(),
    })
}

impl EvalReport {
    pub fn with_context(mut self, descriptor: impl Into<String>, seed: u64) -> Self {
        self.descriptor = descriptor.into();
        self.seed = Some(seed);
        self
    }

    pub fn total(&self) -> usize {
        self.support[0] + self.support[1]
    }

    /// Flat `key=value` lines; an undefined AUC is written as `NaN`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "descriptor={}", self.descriptor);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        let _ = writeln!(s, "split=stratified");
        let _ = writeln!(s, "n_test={}", self.total());
        for (k, v) in [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("auc", self.auc.unwrap_or(f64::NAN)),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        for (c, name) in ["lgg", "hgg"].iter().enumerate() {
            let _ = writeln!(s, "precision_{name}={}", self.class_precision[c]);
            let _ = writeln!(s, "recall_{name}={}", self.class_recall[c]);
            let _ = writeln!(s, "f1_{name}={}", self.class_f1[c]);
            let _ = writeln!(s, "support_{name}={}", self.support[c]);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let pct = |v: f64| format!("{:6.2}", 100.0 * v);
        let mut s = String::new();
        let _ = writeln!(s, "# split: stratified 80:20 (class proportions preserved)");
        let _ = writeln!(s, "{}", self.descriptor);
        let _ = writeln!(s, "  accuracy   {}", pct(self.accuracy));
        let _ = writeln!(s, "  precision  {}", pct(self.precision));
        let _ = writeln!(s, "  recall     {}", pct(self.recall));
        let _ = writeln!(s, "  f1         {}", pct(self.f1));
        match self.auc {
            Some(a) => {
                let _ = writeln!(s, "  auc        {}", pct(a));
            }
            None => {
                let _ = writeln!(s, "  auc        undefined (single class)");
            }
        }
        let _ = writeln!(s, "  confusion  true\\pred  LGG  HGG");
        for (c, name) in ["LGG", "HGG"].iter().enumerate() {
            let _ = writeln!(
                s,
                "             {name}       {:>4} {:>4}",
                self.confusion[c][0], self.confusion[c][1]
            );
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true,pred_LGG,pred_HGG\n");
        for (c, name) in ["LGG", "HGG"].iter().enumerate() {
            let _ = writeln!(s, "{name},{},{}", self.confusion[c][0], self.confusion[c][1]);
        }
        s
    }

    /// Writes `<stem>.txt`, `<stem>.kv` and `<stem>_confusion.csv`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        for (name, body) in [
            (format!("{stem}.txt"), self.to_text()),
            (format!("{stem}.kv"), self.to_key_values()),
            (format!("{stem}_confusion.csv"), self.confusion_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::from(e).in_file(&p))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n_lgg: usize, n_hgg: usize) -> Vec<Label> {
        let mut v = vec![Label::Hgg; n_hgg];
        v.extend(std::iter::repeat_n(Label::Lgg, n_lgg));
        v
    }

    #[test]
    fn split_sizes() {
        let l = labels(76, 293);
        let (train, test) = split_80_20(&l, 0).unwrap();
        assert_eq!(test.len(), 74);
        assert_eq!(test.iter().filter(|&&i| l[i] == Label::Hgg).count(), 59);
        assert_eq!(train.len() + test.len(), 369);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..369).collect::<Vec<_>>());

        let (_, t) = split_80_20(&labels(10, 10), 3).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(split_80_20(&labels(10, 10), 3).unwrap(), split_80_20(&labels(10, 10), 3).unwrap());
        assert!(matches!(split_80_20(&labels(4, 10), 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn kfold_partitions() {
        let l = labels(7, 12);
        let folds = stratified_kfold(&l, 5, 1).unwrap();
        let mut seen: Vec<usize> = folds.iter().flat_map(|(_, t)| t.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..19).collect::<Vec<_>>());
        for (train, test) in &folds {
            assert_eq!(train.len() + test.len(), 19);
            assert!(test.iter().all(|i| !train.contains(i)));
        }
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]).unwrap(), 0.75);
        assert_eq!(auc(&[0, 1, 0, 1, 1], &[0.3; 5]).unwrap(), 0.5);
        assert_eq!(auc(&[0, 1], &[0.2, 0.9]).unwrap(), 1.0);
        assert!(matches!(auc(&[1, 1], &[0.2, 0.9]), Err(Error::UndefinedAuc)));
    }

    #[test]
    fn perfect_predictions() {
        let r = compute_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0], &[0.1, 0.9, 0.8, 0.3]).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1, r.auc), (1.0, 1.0, 1.0, 1.0, Some(1.0)));
        assert_eq!(r.confusion, [[2, 0], [0, 2]]);
    }

    #[test]
    fn weighted_averages_by_hand() {
        // confusion [[1,1],[1,3]]: p = (1/2, 3/4), r = (1/2, 3/4), support (2, 4)
        let r = compute_metrics(&[0, 0, 1, 1, 1, 1], &[0, 1, 0, 1, 1, 1], &[0.0; 6]).unwrap();
        assert_eq!(r.confusion, [[1, 1], [1, 3]]);
        assert!((r.precision - (0.5 * 2.0 + 0.75 * 4.0) / 6.0).abs() < 1e-15);
        assert_eq!(r.recall, r.accuracy);
    }

    #[test]
    fn single_class_keeps_other_metrics() {
        let r = compute_metrics(&[1, 1, 1], &[1, 0, 1], &[0.9, 0.2, 0.7]).unwrap();
        assert_eq!(r.auc, None);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        // no LGG predicted correctly and none present: zero-division gives 0
        assert_eq!(r.class_precision[0], 0.0);
        assert!(r.to_key_values().contains("auc=NaN"));
    }

    #[test]
    fn bad_inputs() {
        assert!(compute_metrics(&[0, 1], &[0], &[0.1, 0.2]).is_err());
        assert!(compute_metrics(&[0, 1], &[0, 1], &[0.1, 1.2]).is_err());
        assert!(compute_metrics(&[], &[], &[]).is_err());
    }

    #[test]
    fn report_rendering() {
        let r = compute_metrics(&[0, 1], &[0, 1], &[0.2, 0.7]).unwrap().with_context("B1+B2, 42 features", 0);
        assert!(r.to_text().contains("B1+B2, 42 features"));
        assert_eq!(r.confusion_csv(), "true,pred_LGG,pred_HGG\nLGG,1,0\nHGG,0,1\n");
        assert!(r.to_key_values().starts_with("descriptor=B1+B2, 42 features\nseed=0\n"));
    }
}
