//! Pipeline stages behind the command-line subcommands.
//!
//! Extraction is cached separately from training so that model sweeps never
//! recompute topology.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::betti::{summarize_curves, BettiFeatureVector, FeatureTable, ThresholdGrid, FEATURE_DIMS};
use crate::cubical::FilteredCubicalComplex;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, split_80_20, stratified_split, EvalReport};
use crate::homology::{betti_rank_oracle_full, compute_persistence_with, euler_characteristic, Engine};
use crate::learn::{
    best_tau, candidate_taus, pca_project, project_columns, save_model, select_features, tau_sweep, ForestParams,
    ModelRecord, ModelSpec, SweepPoint,
};
use crate::volume::{default_slab, extract_slab, load_volume, normalize, DatasetManifest, Label, RawSpec, Volume3D};

/// Which slices of the slice axis to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlabChoice {
    /// The default window when the axis is long enough, otherwise all.
    #[default]
    Auto,
    Full,
    Window(usize, usize),
}

impl std::str::FromStr for SlabChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SlabChoice::Auto),
            "full" => Ok(SlabChoice::Full),
            w => {
                let bad = || Error::Config(format!("slab must be auto, full or LO:HI, got '{w}'"));
                let (lo, hi) = w.split_once(':').ok_or_else(bad)?;
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                Ok(SlabChoice::Window(lo, hi))
            }
        }
    }
}

impl std::fmt::Display for SlabChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SlabChoice::Auto => f.write_str("auto"),
            SlabChoice::Full => f.write_str("full"),
            SlabChoice::Window(lo, hi) => write!(f, "{lo}:{hi}"),
        }
    }
}

/// Optional inversion (superlevel filtration), then normalization of the
/// whole volume, then the slab.
pub fn prepare_volume(v: &Volume3D, invert: bool, slab: SlabChoice) -> Result<Volume3D> {
    let v = if invert { v.inverted()? } else { v.clone() };
    let v = normalize(&v)?;
    let extent = v.dims()[v.slice_axis()];
    let window = match slab {
        SlabChoice::Auto => default_slab(extent),
        SlabChoice::Full => None,
        SlabChoice::Window(lo, hi) => Some((lo, hi)),
    };
    match window {
        Some((lo, hi)) => extract_slab(&v, lo, hi),
        None => Ok(v),
    }
}

/// Betti curves of a prepared volume, with the cell-accounting audit.
pub fn featurize_checked(v: &Volume3D, grid: &ThresholdGrid, engine: Engine) -> Result<BettiFeatureVector> {
    let complex = FilteredCubicalComplex::build(v);
    let p = compute_persistence_with(&complex, engine);
    drop(complex);
    p.audit()?;
    Ok(BettiFeatureVector::from_persistence(&p, grid))
}

#[derive(Debug, Clone)]
pub struct ExtractConfig {
    pub manifest: PathBuf,
    pub output: PathBuf,
    pub raw: Option<RawSpec>,
    pub slab: SlabChoice,
    pub thresholds: usize,
    pub invert: bool,
    pub engine: Engine,
}

impl ExtractConfig {
    pub fn new(manifest: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        ExtractConfig {
            manifest: manifest.into(),
            output: output.into(),
            raw: None,
            slab: SlabChoice::Auto,
            thresholds: 100,
            invert: false,
            engine: Engine::default(),
        }
    }

    fn settings_tag(&self) -> String {
        format!(
            "n={};slab={};invert={};engine={:?}",
            self.thresholds, self.slab, self.invert, self.engine
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractSummary {
    pub rows: usize,
    pub reused: usize,
    pub computed: usize,
    pub failed: Vec<(PathBuf, String)>,
}

/// Path of the hash file kept next to a feature CSV.
pub fn hash_sidecar(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".hashes");
    PathBuf::from(s)
}

fn content_hash(path: &Path, tag: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(fs::read(path).map_err(|e| Error::from(e).in_file(path))?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("hdr")) {
        let img = path.with_extension("img");
        h.update(fs::read(&img).map_err(|e| Error::from(e).in_file(&img))?);
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Rows of a previous run keyed by (path, hash). Any inconsistency drops
/// the cache.
fn load_cache(output: &Path) -> HashMap<(String, String), BettiFeatureVector> {
    let mut cache = HashMap::new();
    let (Ok(csv_file), Ok(hashes)) = (fs::File::open(output), fs::read_to_string(hash_sidecar(output))) else {
        return cache;
    };
    let Ok(table) = FeatureTable::read(csv_file) else {
        return cache;
    };
    let keys: Vec<(String, String)> = hashes
        .lines()
        .skip(1)
        .filter_map(|l| l.rsplit_once(',').map(|(p, h)| (p.to_string(), h.to_string())))
        .collect();
    if keys.len() != table.rows.len() {
        return cache;
    }
    cache.extend(keys.into_iter().zip(table.rows));
    cache
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::from(e).in_file(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| Error::from(e).in_file(path))
}

/// One feature row per readable volume, in manifest order.
pub fn cmd_extract(cfg: &ExtractConfig) -> Result<ExtractSummary> {
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    let grid = ThresholdGrid::uniform(cfg.thresholds, 0.0, 255.0)?;
    let tag = cfg.settings_tag();
    let cache = load_cache(&cfg.output);
    let results: Vec<Result<(String, BettiFeatureVector, bool)>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let key = entry.path.to_string_lossy().into_owned();
            let hash = content_hash(&entry.path, &tag)?;
            let id = (key, hash);
            if let Some(row) = cache.get(&id) {
                log::debug!("{}: unchanged, reusing row", entry.path.display());
                return Ok((id.1, row.clone().with_label(entry.label), true));
            }
            let start = Instant::now();
            let vol = load_volume(&entry.path, entry.format, cfg.raw)?;
            let vol = prepare_volume(&vol, cfg.invert, cfg.slab).map_err(|e| e.in_file(&entry.path))?;
            let row = featurize_checked(&vol, &grid, cfg.engine).map_err(|e| e.in_file(&entry.path))?;
            log::info!(
                "{}: {:?} voxels featurized in {:.2?}",
                entry.path.display(),
                vol.dims(),
                start.elapsed()
            );
            Ok((id.1, row.with_label(entry.label), false))
        })
        .collect();

    let mut summary = ExtractSummary::default();
    let mut table = FeatureTable {
        thresholds: cfg.thresholds,
        rows: Vec::new(),
    };
    let mut hashes = String::from("path,hash\n");
    for (entry, res) in manifest.entries.iter().zip(results) {
        match res {
            Ok((hash, row, reused)) => {
                let _ = writeln!(hashes, "{},{hash}", entry.path.to_string_lossy());
                table.rows.push(row);
                if reused {
                    summary.reused += 1;
                } else {
                    summary.computed += 1;
                }
            }
            // invariant violations abort the run, data problems skip the row
            Err(e) if is_invariant(&e) => return Err(e),
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.path.display());
                summary.failed.push((entry.path.clone(), e.to_string()));
            }
        }
    }
    summary.rows = table.rows.len();
    let mut buf = Vec::new();
    table.write(&mut buf)?;
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    }
    write_atomic(&cfg.output, &buf)?;
    write_atomic(&hash_sidecar(&cfg.output), hashes.as_bytes())?;
    Ok(summary)
}

pub fn is_invariant(e: &Error) -> bool {
    match e {
        Error::Invariant(_) => true,
        Error::File { source, .. } => is_invariant(source),
        _ => false,
    }
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let f = fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    FeatureTable::read(f).map_err(|e| e.in_file(path))
}

/// The five Betti-block combinations, as (name, file stem, blocks).
pub const FEATURE_SETS: [(&str, &str, &[usize]); 5] = [
    ("B0", "b0", &[0]),
    ("B1", "b1", &[1]),
    ("B2", "b2", &[2]),
    ("B1+B2", "b1_b2", &[1, 2]),
    ("B0+B1+B2", "b0_b1_b2", &[0, 1, 2]),
];

pub fn block_columns(blocks: &[usize], thresholds: usize) -> Vec<usize> {
    blocks
        .iter()
        .flat_map(|&b| b * thresholds..(b + 1) * thresholds)
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainEvalConfig {
    pub features: PathBuf,
    pub out_dir: PathBuf,
    pub spec: ModelSpec,
    pub seed: u64,
    /// Thresholds to sweep; `None` uses multiples of one over the column count.
    pub taus: Option<Vec<f64>>,
    pub save_models: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub feature_set: String,
    pub selected: bool,
    pub n_features: usize,
    pub tau: Option<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainEvalSummary {
    pub model: String,
    pub rows: Vec<SummaryRow>,
    pub sweeps: Vec<(String, Vec<SweepPoint>)>,
}

impl TrainEvalSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,feature_set,selection,n_features,tau,accuracy,precision,recall,f1,auc\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                self.model,
                r.feature_set,
                if r.selected { "selected" } else { "raw" },
                r.n_features,
                r.tau.map_or(String::new(), |t| t.to_string()),
                r.report.accuracy,
                r.report.precision,
                r.report.recall,
                r.report.f1,
                r.report.auc.map_or("NaN".to_string(), |a| a.to_string()),
            );
        }
        s
    }

    /// Table layout with separate blocks without and with selection.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}  split: stratified 80:20", self.model);
        for (title, selected) in [("Without Feature Selection", false), ("With Feature Selection", true)] {
            let _ = writeln!(s, "\n{title}");
            let _ = writeln!(
                s,
                "{:<10} {:>10} {:>9} {:>10} {:>8} {:>8}",
                "Features", "#Features", "Accuracy", "Precision", "Recall", "AUC"
            );
            for r in self.rows.iter().filter(|r| r.selected == selected) {
                let auc = r.report.auc.map_or("n/a".to_string(), |a| format!("{:.2}", 100.0 * a));
                let _ = writeln!(
                    s,
                    "{:<10} {:>10} {:>9.2} {:>10.2} {:>8.2} {:>8}",
                    r.feature_set,
                    r.n_features,
                    100.0 * r.report.accuracy,
                    100.0 * r.report.precision,
                    100.0 * r.report.recall,
                    auc
                );
            }
        }
        s
    }
}

fn evaluate(
    spec: &ModelSpec,
    x_train: &[Vec<f64>],
    y_train: &[usize],
    x_test: &[Vec<f64>],
    y_test: &[usize],
) -> Result<(crate::learn::Model, EvalReport)> {
    let model = spec.train(x_train, y_train)?;
    let preds = model.predict_all(x_test)?;
    let y_pred: Vec<usize> = preds.iter().map(|p| p.label.index()).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let report = compute_metrics(y_test, &y_pred, &scores)?;
    Ok((model, report))
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Importance from a forest with the default hyperparameters.
pub fn preliminary_importance(x: &[Vec<f64>], y: &[usize], seed: u64) -> Result<Vec<f64>> {
    let params = ForestParams {
        seed,
        ..ForestParams::default()
    };
    Ok(crate::learn::train_forest(x, y, &params)?.importance)
}

/// Ten evaluations: five feature sets, each raw and after selection.
pub fn cmd_train_eval(cfg: &TrainEvalConfig) -> Result<TrainEvalSummary> {
    let table = read_features(&cfg.features)?;
    let labels: Vec<Label> = table.labels();
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let (train, test) = split_80_20(&labels, cfg.seed)?;
    let train_labels = subset(&labels, &train);
    let (inner_fit, inner_val) = stratified_split(&train_labels, 0.2, cfg.seed)?;
    let y_train = subset(&y, &train);
    let y_test = subset(&y, &test);
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::from(e).in_file(&cfg.out_dir))?;

    let mut summary = TrainEvalSummary {
        model: cfg.spec.kind().to_string(),
        rows: Vec::new(),
        sweeps: Vec::new(),
    };
    for (name, stem, blocks) in FEATURE_SETS {
        let cols = block_columns(blocks, table.thresholds);
        let x = table.matrix(&cols);
        let x_train = subset(&x, &train);
        let x_test = subset(&x, &test);

        let (model, report) = evaluate(&cfg.spec, &x_train, &y_train, &x_test, &y_test)?;
        let report = report.with_context(format!("{name}, {} features", cols.len()), cfg.seed);
        report.write_files(&cfg.out_dir, &format!("{stem}_raw"))?;
        if cfg.save_models {
            let rec = ModelRecord {
                model,
                columns: cols.clone(),
                description: format!("{name} raw"),
            };
            save_model(&cfg.out_dir.join(format!("{stem}_raw.cbt")), &rec)?;
        }
        summary.rows.push(SummaryRow {
            feature_set: name.to_string(),
            selected: false,
            n_features: cols.len(),
            tau: None,
            report,
        });

        // importance from the training split only; the threshold is scored
        // on an inner validation split of that same training data
        let importance = preliminary_importance(&x_train, &y_train, cfg.seed)?;
        let x_fit = subset(&x_train, &inner_fit);
        let y_fit = subset(&y_train, &inner_fit);
        let x_val = subset(&x_train, &inner_val);
        let y_val = subset(&y_train, &inner_val);
        let taus = cfg.taus.clone().unwrap_or_else(|| candidate_taus(&importance));
        let sweep = tau_sweep(&cfg.spec, (&x_fit, &y_fit), (&x_val, &y_val), &importance, &taus)?;
        let tau = best_tau(&sweep)
            .map(|p| p.tau)
            .ok_or_else(|| Error::Config("no threshold in the sweep selects any feature".into()))?;
        let sel = select_features(&importance, tau)?;
        let (model, report) = evaluate(
            &cfg.spec,
            &project_columns(&x_train, &sel.indices),
            &y_train,
            &project_columns(&x_test, &sel.indices),
            &y_test,
        )?;
        let report = report.with_context(format!("{name} selected (tau {tau}), {} features", sel.len()), cfg.seed);
        report.write_files(&cfg.out_dir, &format!("{stem}_selected"))?;
        if cfg.save_models {
            let rec = ModelRecord {
                model,
                columns: sel.indices.iter().map(|&j| cols[j]).collect(),
                description: format!("{name} selected tau={tau}"),
            };
            save_model(&cfg.out_dir.join(format!("{stem}_selected.cbt")), &rec)?;
        }
        let mut sweep_csv = String::from("tau,n_features,accuracy\n");
        for p in &sweep {
            let _ = writeln!(sweep_csv, "{},{},{}", p.tau, p.n_features, p.accuracy);
        }
        let sweep_path = cfg.out_dir.join(format!("sweep_{stem}.csv"));
        fs::write(&sweep_path, sweep_csv).map_err(|e| Error::from(e).in_file(&sweep_path))?;
        summary.rows.push(SummaryRow {
            feature_set: name.to_string(),
            selected: true,
            n_features: sel.len(),
            tau: Some(tau),
            report,
        });
        summary.sweeps.push((name.to_string(), sweep));
    }
    let kind = cfg.spec.kind();
    for (file, body) in [
        (format!("summary_{kind}.csv"), summary.to_csv()),
        (format!("summary_{kind}.txt"), summary.to_text()),
    ] {
        let p = cfg.out_dir.join(file);
        fs::write(&p, body).map_err(|e| Error::from(e).in_file(&p))?;
    }
    Ok(summary)
}

/// Per-class median curves with a central band, as CSV text.
pub fn cmd_curves(table: &FeatureTable, band: f64) -> Result<String> {
    let grid = ThresholdGrid::uniform(table.thresholds, 0.0, 255.0)?;
    let bands = summarize_curves(&table.rows, band)?;
    let mut s = String::from("dim,t_index,t_value,class,lower,median,upper\n");
    for b in &bands {
        for (i, &t) in grid.values().iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{i},{t},{},{},{},{}",
                b.dim, b.label, b.lower[i], b.median[i], b.upper[i]
            );
        }
    }
    Ok(s)
}

/// Two-component projection of one Betti block. The first line is a
/// comment carrying the explained-variance ratios.
pub fn cmd_pca_block(table: &FeatureTable, block: usize) -> Result<String> {
    if block >= FEATURE_DIMS {
        return Err(Error::OutOfRange(format!("Betti block {block}")));
    }
    let x = table.matrix(&block_columns(&[block], table.thresholds));
    let p = pca_project(&x, 2)?;
    let r = &p.explained_variance_ratio;
    let mut s = format!("# explained_variance_ratio: {},{}\nid,class,pc1,pc2\n", r[0], r[1]);
    for (i, (row, label)) in p.projected.iter().zip(table.labels()).enumerate() {
        let _ = writeln!(s, "{i},{label},{},{}", row[0], row[1]);
    }
    Ok(s)
}

/// Writes `pca_b0.csv`, `pca_b1.csv` and `pca_b2.csv`.
pub fn cmd_pca(table: &FeatureTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::from(e).in_file(out_dir))?;
    let mut written = Vec::new();
    for block in 0..FEATURE_DIMS {
        let body = cmd_pca_block(table, block).map_err(|e| match e {
            Error::DegenerateCovariance => Error::InvalidData(format!("block B{block} has zero variance")),
            other => other,
        })?;
        let p = out_dir.join(format!("pca_b{block}.csv"));
        fs::write(&p, body).map_err(|e| Error::from(e).in_file(&p))?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub volumes: usize,
    pub thresholds_checked: usize,
    pub betti_mismatches: usize,
    pub euler_mismatches: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.betti_mismatches == 0 && self.euler_mismatches == 0
    }
}

/// Random integer volumes of side at most `max_side`, checked at every
/// threshold of `grid` against dense rank computation and the Euler
/// characteristic.
pub fn oracle_check(volumes: usize, max_side: usize, seed: u64, grid: &ThresholdGrid) -> Result<OracleReport> {
    if max_side == 0 {
        return Err(Error::Config("max side must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<Volume3D> = (0..volumes)
        .map(|_| {
            let dims: [usize; 3] = std::array::from_fn(|_| rng.gen_range(1..=max_side));
            let data = (0..dims.iter().product::<usize>())
                .map(|_| f64::from(rng.gen_range(0u8..=255)))
                .collect();
            Volume3D::new(dims, data).expect("dims match data")
        })
        .collect();
    let partial: Vec<Result<OracleReport>> = cases
        .par_iter()
        .map(|v| {
            let f = FilteredCubicalComplex::build(v);
            let p = compute_persistence_with(&f, Engine::default());
            p.audit()?;
            let mut r = OracleReport {
                volumes: 1,
                ..OracleReport::default()
            };
            for &t in grid.values() {
                let oracle = betti_rank_oracle_full(&f, t)?;
                r.thresholds_checked += 1;
                if p.betti_at(t) != oracle {
                    r.betti_mismatches += 1;
                }
                let alt = oracle[0] as i64 - oracle[1] as i64 + oracle[2] as i64 - oracle[3] as i64;
                if alt != euler_characteristic(&f, t) {
                    r.euler_mismatches += 1;
                }
            }
            Ok(r)
        })
        .collect();
    let mut total = OracleReport::default();
    for r in partial {
        let r = r?;
        total.volumes += r.volumes;
        total.thresholds_checked += r.thresholds_checked;
        total.betti_mismatches += r.betti_mismatches;
        total.euler_mismatches += r.euler_mismatches;
    }
    Ok(total)
}
