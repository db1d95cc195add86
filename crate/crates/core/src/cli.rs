//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 I/O or malformed
//! file, 3 numerical failure (sigma escalation exhausted).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::benchmark::{make_patch_set, run_benchmark, BenchmarkConfig, Method};
use crate::cluster::{cluster, ClusterAlgorithm};
use crate::dataset::build_dataset;
use crate::error::{Error, Result};
use crate::pgm;
use crate::pipeline::{degrade, psnr, restore_image};
use crate::rng::seeded;
use crate::store;
use crate::types::{DegradationModel, EstimationMode, Image, RestorationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "snis", version, about = "External patch-based image restoration by importance sampling")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SNIS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Kmeans,
    Cem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Central,
    Whole,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract clean patches from a directory of PGM images.
    BuildDataset {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 9)]
        side: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a dataset into K clusters.
    Cluster {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Algo::Kmeans)]
        algo: Algo,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate an observation of a clean image.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        /// gaussian:SIGMA | poisson:PEAK | inpaint:SIGMA:MASK | poisson-inpaint:PEAK:MASK
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore a degraded image.
    Restore {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value_t = Mode::Whole)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long = "alpha-samples", default_value_t = 900)]
        alpha_samples: usize,
        #[arg(long = "estimate-samples", default_value_t = 300)]
        estimate_samples: usize,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        #[arg(long = "sigma-init", default_value_t = 1.0)]
        sigma_init: f64,
        /// key=value file overriding the flags above.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Clean image for PSNR reporting.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Also write the key=value report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut random patches from PGM images and degrade them, for `benchmark`.
    MakePatches {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 9)]
        side: usize,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR of central-pixel estimates as a function of the sample budget.
    Benchmark {
        #[arg(long)]
        patches: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "uniform,snis")]
        methods: Vec<String>,
        #[arg(long = "alpha-fraction", default_value_t = 0.6)]
        alpha_fraction: f64,
        #[arg(long = "stage-size", default_value_t = 3000)]
        stage_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `gaussian:30`, `poisson:10`, `inpaint:5:mask.pgm` or
/// `poisson-inpaint:10:mask.pgm`, loading the mask file when present.
pub fn parse_model(spec: &str) -> Result<DegradationModel> {
    let mut parts = spec.splitn(3, ':');
    let kind = parts.next().unwrap_or_default();
    let number = |p: Option<&str>| -> Result<f64> {
        let p = p.ok_or_else(|| Error::InvalidConfig(format!("model {spec:?} is missing its parameter")))?;
        p.parse().map_err(|_| Error::InvalidConfig(format!("model {spec:?}: bad number {p:?}")))
    };
    let param = number(parts.next())?;
    let mask = |p: Option<&str>| -> Result<crate::types::Mask> {
        let p = p.ok_or_else(|| Error::InvalidConfig(format!("model {spec:?} needs a mask file")))?;
        pgm::read_mask(Path::new(p))
    };
    let rest = parts.next();
    let model = match kind {
        "gaussian" | "poisson" if rest.is_some() => {
            return Err(Error::InvalidConfig(format!("model {spec:?} takes one parameter")))
        }
        "gaussian" => DegradationModel::Gaussian { sigma: param },
        "poisson" => DegradationModel::Poisson { peak: param },
        "inpaint" => DegradationModel::MaskedGaussian { sigma: param, mask: mask(rest)? },
        "poisson-inpaint" => DegradationModel::MaskedPoisson { peak: param, mask: mask(rest)? },
        other => return Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
    };
    model.validate()?;
    Ok(model)
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("config line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

fn config_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidConfig(format!("config {key}: bad value {v:?}")))
}

/// Applies config-file overrides; returns a replacement model string if one
/// was given.
fn apply_config(cfg: &mut RestorationConfig, map: &BTreeMap<String, String>) -> Result<Option<String>> {
    let mut model = None;
    for (k, v) in map {
        match k.as_str() {
            "stride" => cfg.stride = config_value(k, v)?,
            "alpha_samples" | "m" => cfg.alpha_samples = config_value(k, v)?,
            "estimate_samples" | "n" => cfg.estimate_samples = config_value(k, v)?,
            "iterations" => cfg.iterations = config_value(k, v)?,
            "seed" => cfg.seed = config_value(k, v)?,
            "sigma_init" => cfg.sigma_init = config_value(k, v)?,
            "sigma_escalation_factor" => cfg.sigma_escalation_factor = config_value(k, v)?,
            "mode" => {
                cfg.mode = match v.as_str() {
                    "central" => EstimationMode::CentralPixel,
                    "whole" => EstimationMode::WholePatch,
                    _ => return Err(Error::InvalidConfig(format!("config mode: bad value {v:?}"))),
                }
            }
            "model" => model = Some(v.clone()),
            other => return Err(Error::InvalidConfig(format!("unknown config key {other:?}"))),
        }
    }
    Ok(model)
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!("no .pgm images in {}", dir.display())));
    }
    Ok(files)
}

fn read_images(dir: &Path) -> Result<Vec<Image>> {
    pgm_files(dir)?
        .iter()
        .map(|p| {
            pgm::read_image(p).map_err(|e| match e {
                Error::Io(io) => Error::Format(format!("{}: {io}", p.display())),
                other => other,
            })
        })
        .collect()
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::EscalationExhausted { .. } | Error::AllWeightsZero { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn execute(command: Command, out: &mut (dyn Write + Send)) -> Result<()> {
    match command {
        Command::BuildDataset { input, side, stride, out: path } => {
            let ds = build_dataset(&read_images(&input)?, side, stride)?;
            store::save_dataset(&path, &ds)?;
            writeln!(out, "count={}\nn={}", ds.count(), ds.dim())?;
        }
        Command::Cluster { dataset, k, seed, algo, max_iter, out: path } => {
            let ds = store::load_dataset(&dataset)?;
            let algo = match algo {
                Algo::Kmeans => ClusterAlgorithm::KMeans,
                Algo::Cem => ClusterAlgorithm::Cem,
            };
            let cm = cluster(&ds, algo, k, seed, max_iter)?;
            store::save_clusters(&path, &cm)?;
            for c in 0..cm.k() {
                writeln!(out, "cluster={c} size={} mass={:.6}", cm.size(c), cm.mass()[c])?;
            }
        }
        Command::Degrade { input, model, seed, out: path } => {
            let model = parse_model(&model)?;
            let clean = pgm::read_image(&input)?;
            let degraded = degrade(&clean, &model, &mut seeded(seed))?;
            pgm::write_image(&path, &degraded)?;
            writeln!(out, "psnr_db={:.4}", psnr(&clean, &degraded, clean.peak())?)?;
        }
        Command::Restore {
            input,
            dataset,
            clusters,
            model,
            mode,
            seed,
            stride,
            alpha_samples,
            estimate_samples,
            iterations,
            sigma_init,
            config,
            reference,
            report,
            out: path,
        } => {
            let ds = store::load_dataset(&dataset)?;
            let cm = store::load_clusters(&clusters)?;
            let mut cfg = RestorationConfig {
                patch_side: ds.side(),
                stride,
                clusters: cm.k(),
                alpha_samples,
                estimate_samples,
                iterations,
                mode: match mode {
                    Mode::Central => EstimationMode::CentralPixel,
                    Mode::Whole => EstimationMode::WholePatch,
                },
                seed,
                sigma_init,
                ..Default::default()
            };
            let mut model = model;
            if let Some(c) = config {
                if let Some(m) = apply_config(&mut cfg, &parse_config(&fs::read_to_string(c)?)?)? {
                    model = m;
                }
            }
            let model = parse_model(&model)?;
            let observed = pgm::read_image(&input)?;
            let (restored, mut rep) = restore_image(&observed, &model, &ds, &cm, &cfg)?;
            if let Some(r) = reference {
                let clean = pgm::read_image(&r)?;
                let restored_scaled = restored.rescaled(clean.peak())?;
                rep.psnr_db = Some(psnr(&clean, &restored_scaled, clean.peak())?);
                let input_scaled = observed.rescaled(clean.peak())?;
                writeln!(out, "input_psnr_db={:.4}", psnr(&clean, &input_scaled, clean.peak())?)?;
            }
            pgm::write_image(&path, &restored)?;
            let text = rep.to_key_value();
            write!(out, "{text}")?;
            if let Some(r) = report {
                fs::write(r, text)?;
            }
        }
        Command::MakePatches { input, side, count, model, seed, out: path } => {
            let model = parse_model(&model)?;
            let set = make_patch_set(&read_images(&input)?, side, count, &model, &mut seeded(seed))?;
            store::save_patch_set(&path, &set)?;
            writeln!(out, "count={}\nn={}", set.len(), side * side)?;
        }
        Command::Benchmark {
            patches,
            dataset,
            clusters,
            model,
            budgets,
            methods,
            alpha_fraction,
            stage_size,
            seed,
            out: path,
        } => {
            let set = store::load_patch_set(&patches)?;
            let ds = store::load_dataset(&dataset)?;
            let cm = store::load_clusters(&clusters)?;
            let model = parse_model(&model)?;
            let cfg = BenchmarkConfig {
                budgets,
                methods: methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
                alpha_fraction,
                stage_size,
                seed,
            };
            let csv = run_benchmark(&set, &ds, &cm, &model, &cfg)?.to_csv();
            match path {
                Some(p) => fs::write(p, csv)?,
                None => write!(out, "{csv}")?,
            }
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first), writing normal output to
/// `out` and diagnostics to `err`; returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| execute(cli.command, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}
