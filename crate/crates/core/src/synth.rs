//! Seeded synthetic phantoms.
//!
//! Class A (LGG) is a dark ellipsoidal blob on a bright background. Class B
//! (HGG) adds bright spherical pockets and tori inside the blob, which show
//! up as cavities and loops of the sublevel filtration. Sizes scale with the
//! smallest volume extent relative to 32.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{to_raw, DatasetManifest, Label, ManifestEntry, ScalarKind, Volume3D, VolumeFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Blob,
    Shell,
    Ring,
    TwoClassMix,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Blob => "blob",
            SynthKind::Shell => "shell",
            SynthKind::Ring => "ring",
            SynthKind::TwoClassMix => "two-class-mix",
        }
    }

    /// Label of the `i`-th generated volume.
    pub fn label(self, i: usize) -> Label {
        match self {
            SynthKind::Blob => Label::Lgg,
            SynthKind::Shell | SynthKind::Ring => Label::Hgg,
            SynthKind::TwoClassMix => {
                if i % 2 == 0 {
                    Label::Lgg
                } else {
                    Label::Hgg
                }
            }
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blob" => Ok(SynthKind::Blob),
            "shell" => Ok(SynthKind::Shell),
            "ring" => Ok(SynthKind::Ring),
            "two-class-mix" => Ok(SynthKind::TwoClassMix),
            other => Err(Error::Config(format!("unknown phantom kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub count: usize,
    pub seed: u64,
    pub dims: [usize; 3],
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: SynthKind::TwoClassMix,
            count: 40,
            seed: 0,
            dims: [32, 32, 32],
            noise: 8.0,
        }
    }
}

/// Bright inclusion placed inside the blob.
enum Inclusion {
    Sphere { center: [f64; 3], radius: f64, value: f64 },
    Torus { center: [f64; 3], axis: [f64; 3], major: f64, minor: f64, value: f64 },
}

impl Inclusion {
    fn contains(&self, p: [f64; 3]) -> Option<f64> {
        match self {
            Inclusion::Sphere { center, radius, value } => {
                let d2: f64 = (0..3).map(|a| (p[a] - center[a]).powi(2)).sum();
                (d2 <= radius * radius).then_some(*value)
            }
            Inclusion::Torus { center, axis, major, minor, value } => {
                let r: [f64; 3] = std::array::from_fn(|a| p[a] - center[a]);
                let along: f64 = (0..3).map(|a| r[a] * axis[a]).sum();
                let radial2 = (0..3).map(|a| r[a] * r[a]).sum::<f64>() - along * along;
                let ring = radial2.max(0.0).sqrt() - major;
                (ring * ring + along * along <= minor * minor).then_some(*value)
            }
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// Which inclusions to add on top of the base blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Plain,
    Shell,
    Ring,
    Mixed,
}

fn phantom(dims: [usize; 3], style: Style, noise: f64, rng: &mut ChaCha8Rng) -> Volume3D {
    let scale = *dims.iter().min().expect("three dims") as f64 / 32.0;
    let mid: [f64; 3] = std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    let center: [f64; 3] = std::array::from_fn(|a| (mid[a] + rng.gen_range(-2.0..=2.0) * scale).round());
    let radii: [f64; 3] = std::array::from_fn(|a| dims[a] as f64 * rng.gen_range(0.24..0.31));
    let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let ramp = 2.0 * scale.max(0.5);
    let fg = rng.gen_range(40.0..60.0);
    let bg = rng.gen_range(160.0..180.0);

    // random point whose distance from the blob center is at most `reach`
    let inside = |rng: &mut ChaCha8Rng, reach: f64| -> [f64; 3] {
        let u = unit_vector(rng);
        let s = reach.max(0.0) * rng.gen::<f64>();
        std::array::from_fn(|a| (center[a] + u[a] * s).round())
    };
    // dark voxels kept between an inclusion and the blob surface
    let margin = 1.5;
    let mut inclusions = Vec::new();
    let (n_pockets, n_tori) = match style {
        Style::Plain => (0, 0),
        Style::Shell => (0, 0),
        Style::Ring => (0, 1),
        Style::Mixed => (rng.gen_range(2..=4), rng.gen_range(1..=3)),
    };
    if style == Style::Shell {
        inclusions.push(Inclusion::Sphere {
            center,
            radius: 0.45 * r_min,
            value: rng.gen_range(200.0..225.0),
        });
    }
    for _ in 0..n_tori {
        let major = (rng.gen_range(3.5..5.0) * scale).min(0.55 * r_min);
        let minor = (rng.gen_range(1.3..1.7) * scale).max(0.9);
        let center = inside(rng, r_min - major - minor - margin);
        let axis = unit_vector(rng);
        let value = rng.gen_range(195.0..215.0);
        if major + minor + margin <= r_min {
            inclusions.push(Inclusion::Torus { center, axis, major, minor, value });
        }
    }
    for _ in 0..n_pockets {
        let radius = (rng.gen_range(1.5..2.5) * scale).max(0.75);
        inclusions.push(Inclusion::Sphere {
            center: inside(rng, r_min - radius - margin),
            radius,
            value: rng.gen_range(200.0..225.0),
        });
    }

    let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let p = [i as f64, j as f64, k as f64];
                let q = (0..3)
                    .map(|a| ((p[a] - center[a]) / radii[a]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let edge = ((q - 1.0) * r_min / ramp).clamp(0.0, 1.0);
                let mut v = fg + (bg - fg) * edge;
                for inc in &inclusions {
                    if let Some(val) = inc.contains(p) {
                        v = val;
                    }
                }
                v += rng.gen_range(-noise..=noise);
                data.push(v.round().clamp(0.0, 255.0));
            }
        }
    }
    Volume3D::new(dims, data).expect("dims match data")
}

/// Generates one volume per index, each from its own seed drawn in order
/// from the configured seed.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<(Volume3D, Label)>> {
    if cfg.dims.iter().any(|&d| d < 4) {
        return Err(Error::Config(format!("phantom dims {:?} are too small", cfg.dims)));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::Config("noise amplitude must be non-negative".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.count).map(|_| seeder.gen()).collect();
    Ok(seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let label = cfg.kind.label(i);
            let style = match cfg.kind {
                SynthKind::Blob => Style::Plain,
                SynthKind::Shell => Style::Shell,
                SynthKind::Ring => Style::Ring,
                SynthKind::TwoClassMix if label == Label::Lgg => Style::Plain,
                SynthKind::TwoClassMix => Style::Mixed,
            };
            (phantom(cfg.dims, style, cfg.noise, &mut rng), label)
        })
        .collect())
}

/// Writes `phantom_NNN.raw` (u8) files plus `manifest.csv` into `dir`.
pub fn write_synth(cfg: &SynthConfig, dir: &Path) -> Result<(PathBuf, DatasetManifest)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut entries = Vec::with_capacity(cfg.count);
    for (i, (vol, label)) in synthesize(cfg)?.into_iter().enumerate() {
        let path = dir.join(format!("phantom_{i:03}.raw"));
        std::fs::write(&path, to_raw(&vol, ScalarKind::U8)).map_err(|e| Error::from(e).in_file(&path))?;
        entries.push(ManifestEntry {
            path,
            label,
            format: VolumeFormat::Raw,
        });
    }
    let manifest = DatasetManifest::new(entries)?;
    let manifest_path = dir.join("manifest.csv");
    manifest.write(&manifest_path)?;
    Ok((manifest_path, manifest))
}
