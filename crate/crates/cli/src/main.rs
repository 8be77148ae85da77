use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use betti_core::betti::ThresholdGrid;
use betti_core::homology::Engine;
use betti_core::learn::{ModelKind, ModelSpec};
use betti_core::pipeline::{
    cmd_curves, cmd_extract, cmd_pca, cmd_train_eval, is_invariant, oracle_check, read_features, ExtractConfig,
    SlabChoice, TrainEvalConfig,
};
use betti_core::synth::{write_synth, SynthConfig, SynthKind};
use betti_core::volume::{RawSpec, ScalarKind};
use betti_core::Error;
use clap::{Parser, Subcommand};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

/// Betti-curve features of 3D volumes and tree-ensemble classification.
#[derive(Debug, Parser)]
#[command(name = "betti", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "BETTI_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Featurize every volume of a manifest into a feature CSV.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Raw volume shape, e.g. 32x32x32.
        #[arg(long, value_parser = parse_dims)]
        raw_dims: Option<[usize; 3]>,
        #[arg(long, default_value = "u8")]
        raw_kind: String,
        /// auto, full or LO:HI (inclusive).
        #[arg(long, default_value = "auto")]
        slab: String,
        #[arg(long, default_value_t = 100)]
        thresholds: usize,
        /// Negate intensities first (superlevel filtration).
        #[arg(long)]
        invert: bool,
        /// dual or matrix.
        #[arg(long, default_value = "dual")]
        engine: String,
    },
    /// Train and evaluate the five Betti feature sets, raw and selected.
    TrainEval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// key=value hyperparameter file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// forest or boosted; ignored when --config is given.
        #[arg(long, default_value = "forest")]
        model: String,
        /// Split seed; also overrides random_state. Defaults to 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated thresholds to sweep.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        #[arg(long)]
        save_models: bool,
    },
    /// Per-class median Betti curves with a percentile band.
    Curves {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        band: f64,
    },
    /// Two-component PCA of each Betti block.
    Pca {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate seeded synthetic phantoms and a manifest.
    Synth {
        /// blob, shell, ring or two-class-mix.
        #[arg(long, default_value = "two-class-mix")]
        kind: String,
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_parser = parse_dims, default_value = "32x32x32")]
        dims: [usize; 3],
        #[arg(long, default_value_t = 8.0)]
        noise: f64,
    },
    /// Compare diagrams against dense rank computation on small volumes.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        volumes: usize,
        #[arg(long, default_value_t = 5)]
        max_side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        thresholds: usize,
    },
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(['x', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad dims '{s}'")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if a > 0 && b > 0 && c > 0 => Ok([a, b, c]),
        _ => Err(format!("dims must be three positive sizes like 32x32x32, got '{s}'")),
    }
}

/// A finished command that still warrants a nonzero exit.
#[derive(Debug)]
struct Partial(String);

impl std::fmt::Display for Partial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Partial {}

#[derive(Debug)]
struct InvariantViolation(String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantViolation {}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Extract {
            manifest,
            out,
            raw_dims,
            raw_kind,
            slab,
            thresholds,
            invert,
            engine,
        } => {
            let mut cfg = ExtractConfig::new(manifest, out);
            let kind: ScalarKind = raw_kind.parse()?;
            cfg.raw = raw_dims.map(|dims| RawSpec { dims, kind });
            cfg.slab = slab.parse::<SlabChoice>()?;
            cfg.thresholds = thresholds;
            cfg.invert = invert;
            cfg.engine = engine.parse::<Engine>()?;
            let s = cmd_extract(&cfg)?;
            println!(
                "{} rows written to {} ({} computed, {} reused, {} failed)",
                s.rows,
                cfg.output.display(),
                s.computed,
                s.reused,
                s.failed.len()
            );
            if !s.failed.is_empty() {
                for (p, e) in &s.failed {
                    eprintln!("skipped {}: {e}", p.display());
                }
                return Err(Partial(format!("{} volumes could not be featurized", s.failed.len())).into());
            }
        }
        Command::TrainEval {
            features,
            out_dir,
            config,
            model,
            seed,
            taus,
            save_models,
        } => {
            let mut spec = match config {
                Some(path) => ModelSpec::from_file(&path)?,
                None => ModelSpec::default_for(model.parse::<ModelKind>()?),
            };
            if let Some(s) = seed {
                spec = spec.with_seed(s);
            }
            let cfg = TrainEvalConfig {
                features,
                out_dir,
                spec,
                seed: seed.unwrap_or(0),
                taus,
                save_models,
            };
            let summary = cmd_train_eval(&cfg)?;
            print!("{}", summary.to_text());
        }
        Command::Curves { features, out, band } => {
            let table = read_features(&features)?;
            let csv = cmd_curves(&table, band)?;
            fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
            println!("curves written to {}", out.display());
        }
        Command::Pca { features, out_dir } => {
            let table = read_features(&features)?;
            for p in cmd_pca(&table, &out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Synth {
            kind,
            count,
            seed,
            out_dir,
            dims,
            noise,
        } => {
            let cfg = SynthConfig {
                kind: kind.parse::<SynthKind>()?,
                count,
                seed,
                dims,
                noise,
            };
            let (manifest, _) = write_synth(&cfg, &out_dir)?;
            println!(
                "{count} {} phantoms written; extract with --manifest {} --raw-dims {}x{}x{} --raw-kind u8",
                cfg.kind,
                manifest.display(),
                dims[0],
                dims[1],
                dims[2]
            );
        }
        Command::OracleCheck {
            volumes,
            max_side,
            seed,
            thresholds,
        } => {
            let grid = ThresholdGrid::uniform(thresholds, 0.0, 255.0)?;
            let r = oracle_check(volumes, max_side, seed, &grid)?;
            println!(
                "{} volumes, {} thresholds checked: {} Betti mismatches, {} Euler mismatches",
                r.volumes, r.thresholds_checked, r.betti_mismatches, r.euler_mismatches
            );
            if !r.passed() {
                return Err(InvariantViolation("diagrams disagree with the rank oracle".into()).into());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<Partial>() {
        EXIT_PARTIAL
    } else if e.is::<InvariantViolation>() || e.downcast_ref::<Error>().is_some_and(is_invariant) {
        EXIT_INVARIANT
    } else {
        EXIT_CONFIG
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
