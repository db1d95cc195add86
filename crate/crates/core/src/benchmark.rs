//! Budget sweep: central-pixel PSNR over a set of degraded patches as a
//! function of the number of dataset patches each method may touch.
//!
//! SNIS runs in stages. Each stage spends a fraction of its budget on
//! refitting the proposal against the current central-pixel estimate and
//! the rest on weighted draws; the weighted sums carry over between stages,
//! so the estimate at budget `S` uses every estimation draw made so far.
//! Stages end at every multiple of the stage size and at every requested
//! budget.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::cluster::{sample_cluster, sample_uniform, ClusterModel};
use crate::dataset::PatchDataset;
use crate::error::{Error, Result};
use crate::estimator::{
    allocate_samples, compute_bk, exact_mmse, observation_scale, optimize_alpha, snis_log_weight, CurrentEstimate,
    WeightedAccumulator,
};
use crate::likelihood::PatchLikelihood;
use crate::pipeline::{degrade, psnr_values};
use crate::rng::{derive_seed, patch_stream};
use crate::store::PatchSet;
use crate::types::{central_index, DegradationModel, Image, Patch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Snis,
    Uniform,
    Exact,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Snis => "snis",
            Self::Uniform => "uniform",
            Self::Exact => "exact",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "snis" => Ok(Self::Snis),
            "uniform" => Ok(Self::Uniform),
            "exact" => Ok(Self::Exact),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub budget: usize,
    pub method: Method,
    pub psnr_db: f64,
    /// Processing time up to this budget, summed over patches.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkCurve {
    pub rows: Vec<CurveRow>,
}

impl BenchmarkCurve {
    pub const CSV_HEADER: &'static str = "budget,method,psnr_db,wall_seconds";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", r.budget, r.method, r.psnr_db, r.wall_seconds);
        }
        s
    }

    pub fn psnr(&self, method: Method, budget: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method && r.budget == budget).map(|r| r.psnr_db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub budgets: Vec<usize>,
    pub methods: Vec<Method>,
    /// Share of each SNIS stage spent on the proposal fit.
    pub alpha_fraction: f64,
    pub stage_size: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            budgets: vec![5_000, 10_000, 30_000],
            methods: vec![Method::Uniform, Method::Snis],
            alpha_fraction: 0.6,
            stage_size: 3000,
            seed: 0,
        }
    }
}

/// Sorted, de-duplicated budgets; rejects an empty list and zero budgets.
pub fn normalized_budgets(budgets: &[usize]) -> Result<Vec<usize>> {
    if budgets.is_empty() {
        return Err(Error::EmptyInput("budget list"));
    }
    if budgets.contains(&0) {
        return Err(Error::InvalidConfig("budgets must be positive".into()));
    }
    let mut b = budgets.to_vec();
    b.sort_unstable();
    b.dedup();
    Ok(b)
}

/// Cumulative stage boundaries: multiples of `stage_size` up to the largest
/// budget, merged with the budgets themselves.
pub fn stage_plan(budgets: &[usize], stage_size: usize) -> Result<Vec<usize>> {
    if stage_size == 0 {
        return Err(Error::InvalidConfig("stage size must be positive".into()));
    }
    let budgets = normalized_budgets(budgets)?;
    let last = *budgets.last().expect("non-empty");
    let mut plan: Vec<usize> = (1..=last / stage_size).map(|i| i * stage_size).chain(budgets).collect();
    plan.sort_unstable();
    plan.dedup();
    Ok(plan)
}

fn check(set: &PatchSet, ds: &PatchDataset, model: &DegradationModel) -> Result<()> {
    model.validate()?;
    if model.mask().is_some() {
        return Err(Error::InvalidConfig("benchmark patch sets carry no masks".into()));
    }
    if set.is_empty() {
        return Err(Error::EmptyInput("patch set"));
    }
    if set.side != ds.side() {
        return Err(Error::DimensionMismatch { expected: ds.side(), found: set.side });
    }
    Ok(())
}

fn patch_of(set: &PatchSet, i: usize) -> Result<Patch> {
    Patch::new(set.side, set.observed[i].clone())
}

/// Central-pixel estimates of one patch at each checkpoint, with elapsed
/// seconds.
fn progressive<R: Rng>(
    mut stage: impl FnMut(usize, &mut WeightedAccumulator, f64, &mut R) -> Result<()>,
    start: f64,
    plan: &[usize],
    checkpoints: &[usize],
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let clock = Instant::now();
    let mut acc = WeightedAccumulator::new(1);
    let mut current = start;
    let mut prev = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &boundary in plan {
        stage(boundary - prev, &mut acc, current, rng)?;
        prev = boundary;
        if let Some(mean) = acc.mean() {
            current = mean[0];
        }
        if checkpoints.binary_search(&boundary).is_ok() {
            out.push((current, clock.elapsed().as_secs_f64()));
        }
    }
    Ok(out)
}

fn method_rows(
    method: Method,
    per_patch: Vec<Vec<(f64, f64)>>,
    budgets: &[usize],
    truth: &[f64],
    peak: f64,
) -> Vec<CurveRow> {
    budgets
        .iter()
        .enumerate()
        .map(|(j, &budget)| {
            let est: Vec<f64> = per_patch.iter().map(|p| p[j].0).collect();
            CurveRow {
                budget,
                method,
                psnr_db: psnr_values(truth, &est, peak),
                wall_seconds: per_patch.iter().map(|p| p[j].1).sum(),
            }
        })
        .collect()
}

/// Runs every requested method over the patch set.
///
/// Observed patches are on the model's scale and clean patches on the
/// dataset's; PSNR compares central pixels at the dataset peak. The exact
/// method yields a single row whose budget is the dataset size.
pub fn run_benchmark(
    set: &PatchSet,
    ds: &PatchDataset,
    cm: &ClusterModel,
    model: &DegradationModel,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkCurve> {
    check(set, ds, model)?;
    cm.check_matches(ds)?;
    let budgets = normalized_budgets(&cfg.budgets)?;
    if !(0.0..=1.0).contains(&cfg.alpha_fraction) {
        return Err(Error::InvalidConfig(format!("alpha fraction {} outside [0, 1]", cfg.alpha_fraction)));
    }
    let plan = stage_plan(&budgets, cfg.stage_size)?;
    let centre = central_index(ds.side());
    let truth: Vec<f64> = set.clean.iter().map(|c| c[centre]).collect();
    let scale = observation_scale(model, ds);
    let mut methods = cfg.methods.clone();
    methods.sort_unstable();
    methods.dedup();

    let mut curve = BenchmarkCurve::default();
    for method in methods {
        let method_seed = derive_seed(cfg.seed, &[method as u64]);
        match method {
            Method::Exact => {
                let clock = Instant::now();
                let est: Vec<f64> = (0..set.len())
                    .into_par_iter()
                    .map(|i| exact_mmse(&patch_of(set, i)?, ds, model).map(|e| e.central))
                    .collect::<Result<_>>()?;
                curve.rows.push(CurveRow {
                    budget: ds.count(),
                    method,
                    psnr_db: psnr_values(&truth, &est, ds.peak()),
                    wall_seconds: clock.elapsed().as_secs_f64(),
                });
            }
            Method::Snis | Method::Uniform => {
                if method == Method::Snis && budgets[0] < cm.k() {
                    return Err(Error::InvalidConfig(format!(
                        "budget {} is smaller than the number of clusters {}",
                        budgets[0],
                        cm.k()
                    )));
                }
                let per_patch: Vec<Vec<(f64, f64)>> = (0..set.len())
                    .into_par_iter()
                    .map(|i| {
                        let y = patch_of(set, i)?;
                        let lik = PatchLikelihood::for_model(model, y.values(), ds.peak())?;
                        let mut rng = patch_stream(method_seed, i, 0);
                        let start = y.values()[centre] * scale;
                        if method == Method::Snis {
                            let stage = |size: usize, acc: &mut WeightedAccumulator, current: f64, rng: &mut _| {
                                snis_stage(size, cfg.alpha_fraction, acc, current, &lik, ds, cm, rng)
                            };
                            progressive(stage, start, &plan, &budgets, &mut rng)
                        } else {
                            let stage = |size: usize, acc: &mut WeightedAccumulator, _: f64, rng: &mut _| {
                                uniform_stage(size, acc, &lik, ds, rng);
                                Ok(())
                            };
                            progressive(stage, start, &plan, &budgets, &mut rng)
                        }
                    })
                    .collect::<Result<_>>()?;
                curve.rows.extend(method_rows(method, per_patch, &budgets, &truth, ds.peak()));
            }
        }
    }
    Ok(curve)
}

#[allow(clippy::too_many_arguments)]
fn snis_stage(
    size: usize,
    alpha_fraction: f64,
    acc: &mut WeightedAccumulator,
    current: f64,
    lik: &PatchLikelihood<'_>,
    ds: &PatchDataset,
    cm: &ClusterModel,
    rng: &mut impl Rng,
) -> Result<()> {
    let centre = central_index(ds.side());
    let fit_count = (alpha_fraction * size as f64).floor() as usize;
    let fit = sample_uniform(cm, fit_count, rng);
    let alpha = optimize_alpha(&compute_bk(&fit, CurrentEstimate::Pixel(current), lik, ds, cm))?;
    for (k, &n_k) in allocate_samples(&alpha, size - fit_count).iter().enumerate() {
        if n_k == 0 {
            continue;
        }
        for i in sample_cluster(cm, k, n_k, rng)? {
            let x = ds.patch(i);
            acc.push(snis_log_weight(k, lik.eval(x), cm, &alpha)?, &x[centre..=centre]);
        }
    }
    Ok(())
}

fn uniform_stage(size: usize, acc: &mut WeightedAccumulator, lik: &PatchLikelihood<'_>, ds: &PatchDataset, rng: &mut impl Rng) {
    let centre = central_index(ds.side());
    for _ in 0..size {
        let x = ds.patch(rng.random_range(0..ds.count()));
        acc.push(lik.eval(x), &x[centre..=centre]);
    }
}

/// Draws `count` patches at random positions of random images and degrades
/// each independently under `model`.
pub fn make_patch_set(
    images: &[Image],
    side: usize,
    count: usize,
    model: &DegradationModel,
    rng: &mut impl Rng,
) -> Result<PatchSet> {
    if images.is_empty() {
        return Err(Error::EmptyInput("images"));
    }
    if model.mask().is_some() {
        return Err(Error::InvalidConfig("benchmark patch sets carry no masks".into()));
    }
    let mut set = PatchSet { side, observed: Vec::with_capacity(count), clean: Vec::with_capacity(count) };
    for _ in 0..count {
        let img = &images[rng.random_range(0..images.len())];
        if img.width() < side || img.height() < side {
            return Err(Error::PatchTooLarge { side, width: img.width(), height: img.height() });
        }
        let row = rng.random_range(0..=img.height() - side);
        let col = rng.random_range(0..=img.width() - side);
        let clean = img.patch_at(row, col, side);
        let as_image = Image::new(side, side, img.peak(), clean.values().to_vec())?;
        set.observed.push(degrade(&as_image, model, rng)?.into_pixels());
        set.clean.push(clean.into_values());
    }
    Ok(set)
}
