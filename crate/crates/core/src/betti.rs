//! Betti curves: diagrams sampled on a fixed threshold grid, concatenated
//! into one feature vector per volume.

use std::io::{Read, Write};

use crate::cubical::FilteredCubicalComplex;
use crate::error::{Error, Result};
use crate::homology::{compute_persistence_with, Engine, Persistence, PersistenceDiagram};
use crate::volume::{Label, Volume3D};

pub const DEFAULT_THRESHOLDS: usize = 100;
pub const INTENSITY_MAX: f64 = 255.0;
/// Homology dimensions that make up a feature vector.
pub const FEATURE_DIMS: usize = 3;

/// Strictly increasing filtration thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    /// `n` evenly spaced thresholds from `lo` to `hi` inclusive.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("threshold grid needs at least one value".into()));
        }
        if n == 1 {
            return Ok(ThresholdGrid { values: vec![lo] });
        }
        if !(hi > lo) {
            return Err(Error::Config(format!("grid range [{lo}, {hi}] is empty")));
        }
        let values = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        Ok(ThresholdGrid { values })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("thresholds must be non-empty and strictly increasing".into()));
        }
        Ok(ThresholdGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for ThresholdGrid {
    /// 100 thresholds over [0, 255].
    fn default() -> Self {
        ThresholdGrid::uniform(DEFAULT_THRESHOLDS, 0.0, INTENSITY_MAX).unwrap()
    }
}

/// Entry `n` counts pairs with `birth <= t_n < death`.
pub fn betti_curve(d: &PersistenceDiagram, g: &ThresholdGrid) -> Vec<u32> {
    let t = g.values();
    let mut diff = vec![0i64; t.len() + 1];
    for p in &d.pairs {
        let start = t.partition_point(|&x| x < p.birth);
        let end = t.partition_point(|&x| x < p.death);
        if start < end {
            diff[start] += 1;
            diff[end] -= 1;
        }
    }
    let mut acc = 0i64;
    diff[..t.len()]
        .iter()
        .map(|&d| {
            acc += d;
            acc as u32
        })
        .collect()
}

/// `[b0 | b1 | b2]` curves of one volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BettiFeatureVector {
    pub curves: [Vec<u32>; FEATURE_DIMS],
    pub label: Option<Label>,
}

impl BettiFeatureVector {
    pub fn from_persistence(p: &Persistence, g: &ThresholdGrid) -> Self {
        BettiFeatureVector {
            curves: [0, 1, 2].map(|k| betti_curve(p.diagram(k), g)),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn thresholds(&self) -> usize {
        self.curves[0].len()
    }

    pub fn len(&self) -> usize {
        self.curves.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concatenated(&self) -> Vec<u32> {
        self.curves.concat()
    }

    /// Model input; the only place the integer curves become floats.
    pub fn to_f64(&self) -> Vec<f64> {
        self.curves.iter().flatten().map(|&c| f64::from(c)).collect()
    }
}

/// Filtration, persistence and Betti curves of a (normalized) volume.
pub fn featurize(v: &Volume3D, g: &ThresholdGrid) -> BettiFeatureVector {
    featurize_with(v, g, Engine::default())
}

pub fn featurize_with(v: &Volume3D, g: &ThresholdGrid, engine: Engine) -> BettiFeatureVector {
    let complex = FilteredCubicalComplex::build(v);
    let p = compute_persistence_with(&complex, engine);
    drop(complex);
    BettiFeatureVector::from_persistence(&p, g)
}

/// Pointwise median and percentile envelope of one class and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBand {
    pub label: Label,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per class and dimension, the median curve with a central `band` envelope
/// (0.4 gives the 30th to 70th percentiles).
pub fn summarize_curves(vectors: &[BettiFeatureVector], band: f64) -> Result<Vec<CurveBand>> {
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::Config(format!("band must lie in (0, 1), got {band}")));
    }
    let (p_lo, p_hi) = (50.0 - band * 50.0, 50.0 + band * 50.0);
    let mut out = Vec::new();
    for label in [Label::Lgg, Label::Hgg] {
        let members: Vec<&BettiFeatureVector> =
            vectors.iter().filter(|v| v.label == Some(label)).collect();
        if members.is_empty() {
            return Err(Error::MissingClass(label.to_string()));
        }
        let n = members[0].thresholds();
        for dim in 0..FEATURE_DIMS {
            let mut band = CurveBand {
                label,
                dim,
                lower: Vec::with_capacity(n),
                median: Vec::with_capacity(n),
                upper: Vec::with_capacity(n),
            };
            let mut column = Vec::with_capacity(members.len());
            for i in 0..n {
                column.clear();
                column.extend(members.iter().map(|v| f64::from(v.curves[dim][i])));
                column.sort_by(f64::total_cmp);
                band.lower.push(percentile(&column, p_lo));
                band.median.push(percentile(&column, 50.0));
                band.upper.push(percentile(&column, p_hi));
            }
            out.push(band);
        }
    }
    Ok(out)
}

/// Column names of the feature CSV for `n` thresholds per dimension.
pub fn feature_header(n: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(1 + FEATURE_DIMS * n);
    h.push("label".to_string());
    for k in 0..FEATURE_DIMS {
        for i in 0..n {
            h.push(format!("b{k}_{i:03}"));
        }
    }
    h
}

/// Labeled feature rows, the contract between extraction and training.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub thresholds: usize,
    pub rows: Vec<BettiFeatureVector>,
}

impl FeatureTable {
    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label.unwrap_or(Label::Lgg)).collect()
    }

    /// Rows as floats, restricted to `columns` of the concatenated vector.
    pub fn matrix(&self, columns: &[usize]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let full = r.to_f64();
                columns.iter().map(|&c| full[c]).collect()
            })
            .collect()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(feature_header(self.thresholds))?;
        for row in &self.rows {
            w.write_record(feature_record(row))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let cols = header.len().saturating_sub(1);
        if cols == 0 || cols % FEATURE_DIMS != 0 {
            return Err(Error::Format(format!("feature CSV has {} columns", header.len())));
        }
        let n = cols / FEATURE_DIMS;
        let expected = feature_header(n);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Format("feature CSV header does not match b0_000.. layout".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(parse_feature_record(&rec, n)?);
        }
        Ok(FeatureTable { thresholds: n, rows })
    }
}

pub(crate) fn feature_record(row: &BettiFeatureVector) -> Vec<String> {
    let mut rec = Vec::with_capacity(1 + row.len());
    rec.push(row.label.map(|l| l.to_string()).unwrap_or_default());
    rec.extend(row.curves.iter().flatten().map(|c| c.to_string()));
    rec
}

pub(crate) fn parse_feature_record(rec: &csv::StringRecord, n: usize) -> Result<BettiFeatureVector> {
    let label = rec[0].parse()?;
    let mut curves: [Vec<u32>; FEATURE_DIMS] = Default::default();
    for (k, curve) in curves.iter_mut().enumerate() {
        for i in 0..n {
            let cell = &rec[1 + k * n + i];
            curve.push(
                cell.parse()
                    .map_err(|_| Error::Format(format!("bad Betti count '{cell}'")))?,
            );
        }
    }
    Ok(BettiFeatureVector {
        curves,
        label: Some(label),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::PersistencePair;

    #[test]
    fn default_grid() {
        let g = ThresholdGrid::default();
        assert_eq!(g.len(), 100);
        assert_eq!(g.values()[0], 0.0);
        assert_eq!(g.values()[99], 255.0);
        assert!(g.values().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn curve_examples() {
        let g = ThresholdGrid::default();
        assert_eq!(betti_curve(&PersistenceDiagram::new(1, vec![]), &g), vec![0; 100]);
        let ess = PersistenceDiagram::new(0, vec![PersistencePair::essential(0.0)]);
        assert_eq!(betti_curve(&ess, &g), vec![1; 100]);

        // scripted enumeration of t_n = 255 (n - 1) / 99 against [64, 192)
        let expect: Vec<u32> = (1..=100)
            .map(|n| {
                let t = 255.0 * (n - 1) as f64 / 99.0;
                u32::from((64.0..192.0).contains(&t))
            })
            .collect();
        let ones: Vec<usize> = expect
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(ones.first(), Some(&26));
        assert_eq!(ones.last(), Some(&75));
        let pd = PersistenceDiagram::new(1, vec![PersistencePair::new(64.0, 192.0)]);
        assert_eq!(betti_curve(&pd, &g), expect);
    }

    #[test]
    fn curve_is_half_open_at_grid_points() {
        let g = ThresholdGrid::from_values(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let pd = PersistenceDiagram::new(1, vec![PersistencePair::new(1.0, 3.0), PersistencePair::new(1.0, 2.0)]);
        assert_eq!(betti_curve(&pd, &g), vec![0, 2, 1, 0]);
    }

    #[test]
    fn constant_volume_features() {
        let v = Volume3D::new([3, 3, 3], vec![100.0; 27]).unwrap();
        let f = featurize(&v, &ThresholdGrid::default());
        assert_eq!(f.len(), 300);
        let first = ThresholdGrid::default().values().iter().position(|&t| t >= 100.0).unwrap();
        for (i, &b) in f.curves[0].iter().enumerate() {
            assert_eq!(b, u32::from(i >= first));
        }
        assert!(f.curves[1].iter().chain(&f.curves[2]).all(|&b| b == 0));
    }

    #[test]
    fn shell_features() {
        let mut data = vec![10.0; 27];
        data[13] = 200.0;
        let v = Volume3D::new([3, 3, 3], data).unwrap();
        let g = ThresholdGrid::default();
        let f = featurize(&v, &g);
        for (i, &t) in g.values().iter().enumerate() {
            assert_eq!(f.curves[2][i], u32::from((10.0..200.0).contains(&t)));
        }
    }

    #[test]
    fn percentiles() {
        assert_eq!(percentile(&[1.0, 5.0, 9.0], 50.0), 5.0);
        assert_eq!(percentile(&[1.0, 5.0, 9.0], 30.0), 1.0 + 0.6 * 4.0);
        assert_eq!(percentile(&[4.0], 70.0), 4.0);
    }

    fn vector(label: Label, b: [u32; 3]) -> BettiFeatureVector {
        BettiFeatureVector {
            curves: b.map(|x| vec![x; 4]),
            label: Some(label),
        }
    }

    #[test]
    fn summary_examples() {
        let vs = vec![vector(Label::Lgg, [1, 2, 3]), vector(Label::Hgg, [4, 5, 6])];
        let s = summarize_curves(&vs, 0.4).unwrap();
        assert_eq!(s.len(), 6);
        for band in &s {
            assert_eq!(band.lower, band.median);
            assert_eq!(band.upper, band.median);
        }
        assert_eq!(s[4].median, vec![5.0; 4]);

        let vs = vec![
            vector(Label::Lgg, [1, 0, 0]),
            vector(Label::Lgg, [5, 0, 0]),
            vector(Label::Lgg, [9, 0, 0]),
            vector(Label::Hgg, [0, 0, 0]),
        ];
        let s = summarize_curves(&vs, 0.4).unwrap();
        assert_eq!(s[0].median, vec![5.0; 4]);
        assert!(s[0].lower[0] <= 5.0 && s[0].upper[0] >= 5.0);

        assert!(matches!(
            summarize_curves(&vs[..3], 0.4),
            Err(Error::MissingClass(_))
        ));
        assert!(summarize_curves(&vs, 1.0).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let table = FeatureTable {
            thresholds: 2,
            rows: vec![
                BettiFeatureVector {
                    curves: [vec![1, 2], vec![0, 3], vec![4, 0]],
                    label: Some(Label::Hgg),
                },
                BettiFeatureVector {
                    curves: [vec![1, 1], vec![0, 0], vec![0, 0]],
                    label: Some(Label::Lgg),
                },
            ],
        };
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,b0_000,b0_001,b1_000,b1_001,b2_000,b2_001\nHGG,1,2,0,3,4,0\n"));
        assert_eq!(FeatureTable::read(&buf[..]).unwrap(), table);
        assert_eq!(feature_header(100).len(), 301);
        assert_eq!(feature_header(100)[300], "b2_099");
    }
}
