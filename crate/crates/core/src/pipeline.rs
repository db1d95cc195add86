//! Whole-image operations: synthetic degradation, patch-wise restoration
//! with overlap averaging, and PSNR.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::cluster::ClusterModel;
use crate::dataset::{extract_patches, PatchDataset};
use crate::error::{Error, Result};
use crate::estimator::{observation_scale, restore_patch_with, Estimate, PatchOutcome, RestoreOptions};
use crate::rng::patch_stream;
use crate::types::{DegradationModel, EstimationMode, Image, Patch, RestorationConfig};

/// Escalation rounds allowed per patch before giving up.
pub const MAX_ESCALATIONS: u32 = 20;

/// Log-likelihood below which `exp` underflows to zero in `f64`; during
/// inpainting such samples count as zero-weight, which is what triggers
/// sigma escalation.
pub fn underflow_log_floor() -> f64 {
    f64::MIN_POSITIVE.ln()
}

fn check_mask_dims(image: &Image, model: &DegradationModel) -> Result<()> {
    if let Some(mask) = model.mask() {
        if mask.width() != image.width() || mask.height() != image.height() {
            return Err(Error::DimensionMismatch {
                expected: image.width() * image.height(),
                found: mask.width() * mask.height(),
            });
        }
    }
    Ok(())
}

/// Simulates an observation of `image`.
///
/// Gaussian models add i.i.d. noise on the image's own scale. Poisson models
/// rescale the image to `[0, peak]` and draw counts; the result carries the
/// Poisson peak. Masked models zero the unobserved pixels afterwards.
pub fn degrade(image: &Image, model: &DegradationModel, rng: &mut impl Rng) -> Result<Image> {
    model.validate()?;
    check_mask_dims(image, model)?;
    let (peak, mut pixels) = match model {
        DegradationModel::Gaussian { sigma } | DegradationModel::MaskedGaussian { sigma, .. } => {
            let pixels = if *sigma == 0.0 {
                image.pixels().to_vec()
            } else {
                let noise = Normal::new(0.0, *sigma).map_err(|_| Error::InvalidSigma(*sigma))?;
                image.pixels().iter().map(|&v| v + noise.sample(rng)).collect()
            };
            (image.peak(), pixels)
        }
        DegradationModel::Poisson { peak } | DegradationModel::MaskedPoisson { peak, .. } => {
            let scale = peak / image.peak();
            let mut pixels = Vec::with_capacity(image.pixels().len());
            for &v in image.pixels() {
                let mean = (v * scale).max(0.0);
                pixels.push(if mean > 0.0 {
                    Poisson::new(mean)
                        .map_err(|e| Error::InvalidObservation(format!("Poisson mean {mean}: {e}")))?
                        .sample(rng)
                } else {
                    0.0
                });
            }
            (*peak, pixels)
        }
    };
    if let Some(mask) = model.mask() {
        for (v, &o) in pixels.iter_mut().zip(mask.observed()) {
            if !o {
                *v = 0.0;
            }
        }
    }
    Image::new(image.width(), image.height(), peak, pixels)
}

/// `10 log10(peak² / MSE)`; identical images give `+∞`.
pub fn psnr(reference: &Image, estimate: &Image, peak: f64) -> Result<f64> {
    if reference.width() != estimate.width() || reference.height() != estimate.height() {
        return Err(Error::DimensionMismatch {
            expected: reference.pixels().len(),
            found: estimate.pixels().len(),
        });
    }
    Ok(psnr_values(reference.pixels(), estimate.pixels(), peak))
}

pub(crate) fn psnr_values(reference: &[f64], estimate: &[f64], peak: f64) -> f64 {
    let mse = reference.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / reference.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Outcome of restoring one patch inside an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteOutcome {
    pub outcome: PatchOutcome,
    /// Sigma escalations needed before some weight became non-zero.
    pub escalations: u32,
    /// The sampler found no usable weight and the initial estimate was kept.
    pub fell_back: bool,
}

/// Restores a masked-Gaussian patch, growing sigma geometrically until at
/// least one sample keeps a non-zero weight.
///
/// The first attempt uses the larger of the model's sigma and
/// `cfg.sigma_init`. Escalated values are local to this patch.
#[allow(clippy::too_many_arguments)]
pub fn inpaint_sigma_escalation(
    y: &Patch,
    ds: &PatchDataset,
    cm: &ClusterModel,
    model: &DegradationModel,
    cfg: &RestorationConfig,
    rng: &mut impl Rng,
    site: (usize, usize),
) -> Result<SiteOutcome> {
    let DegradationModel::MaskedGaussian { sigma, .. } = model else {
        return Err(Error::InvalidConfig("sigma escalation applies to masked Gaussian models only".into()));
    };
    let opts = RestoreOptions { log_floor: underflow_log_floor(), ..Default::default() };
    let mut sigma = sigma.max(cfg.sigma_init);
    let (mut evaluations, mut alpha_evaluations) = (0, 0);
    for escalations in 0..=MAX_ESCALATIONS {
        match restore_patch_with(y, ds, cm, &model.with_sigma(sigma), cfg, rng, &opts) {
            Ok(mut outcome) => {
                outcome.likelihood_evaluations += evaluations;
                outcome.alpha_evaluations += alpha_evaluations;
                return Ok(SiteOutcome { outcome, escalations, fell_back: false });
            }
            Err(Error::AllWeightsZero { .. }) => {
                // every attempt runs the proposal fit and estimate at least once
                evaluations += cfg.alpha_samples + cfg.estimate_samples;
                alpha_evaluations += cfg.alpha_samples;
                if escalations < MAX_ESCALATIONS {
                    sigma *= cfg.sigma_escalation_factor;
                }
            }
            Err(other) => return Err(other),
        }
    }
    Err(Error::EscalationExhausted { row: site.0, col: site.1, escalations: MAX_ESCALATIONS, sigma })
}

/// Restores one patch of an image according to its model: masked Gaussian
/// patches go through sigma escalation; Poisson patches whose samples are
/// all impossible keep their initial estimate.
pub fn restore_site(
    y: &Patch,
    ds: &PatchDataset,
    cm: &ClusterModel,
    model: &DegradationModel,
    cfg: &RestorationConfig,
    site: (usize, usize),
) -> Result<SiteOutcome> {
    let mut rng = patch_stream(cfg.seed, site.0, site.1);
    match model {
        DegradationModel::MaskedGaussian { .. } => {
            inpaint_sigma_escalation(y, ds, cm, model, cfg, &mut rng, site)
        }
        DegradationModel::Gaussian { .. } => {
            let outcome = restore_patch_with(y, ds, cm, model, cfg, &mut rng, &RestoreOptions::default())?;
            Ok(SiteOutcome { outcome, escalations: 0, fell_back: false })
        }
        DegradationModel::Poisson { .. } | DegradationModel::MaskedPoisson { .. } => {
            match restore_patch_with(y, ds, cm, model, cfg, &mut rng, &RestoreOptions::default()) {
                Ok(outcome) => Ok(SiteOutcome { outcome, escalations: 0, fell_back: false }),
                Err(Error::AllWeightsZero { .. }) => {
                    let init = crate::estimator::initial_estimate(y, model, ds);
                    let estimate = match cfg.mode {
                        EstimationMode::CentralPixel => Estimate::Pixel(init[crate::types::central_index(ds.side())]),
                        EstimationMode::WholePatch => Estimate::Patch(init),
                    };
                    let outcome = PatchOutcome { estimate, likelihood_evaluations: 0, alpha_evaluations: 0, alpha_entropy: Vec::new() };
                    Ok(SiteOutcome { outcome, escalations: 0, fell_back: true })
                }
                Err(other) => Err(other),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationReport {
    pub mode: EstimationMode,
    pub model: String,
    /// PSNR against a clean reference, when one was supplied.
    pub psnr_db: Option<f64>,
    pub patches_processed: usize,
    pub likelihood_evaluations: usize,
    /// Evaluations spent fitting proposals, included in the total above.
    pub alpha_evaluations: usize,
    pub escalated_patches: usize,
    pub fallback_patches: usize,
    pub wall_seconds: f64,
    /// Mean proposal-weight entropy per iteration, over all patches.
    pub alpha_entropy: Vec<f64>,
}

impl RestorationReport {
    pub const CSV_HEADER: &'static str =
        "mode,model,psnr_db,patches_processed,likelihood_evaluations,alpha_evaluations,escalated_patches,fallback_patches,wall_seconds";

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode={}", self.mode.as_str());
        let _ = writeln!(s, "model={}", self.model);
        if let Some(p) = self.psnr_db {
            let _ = writeln!(s, "psnr_db={p:.4}");
        }
        let _ = writeln!(s, "patches_processed={}", self.patches_processed);
        let _ = writeln!(s, "likelihood_evaluations={}", self.likelihood_evaluations);
        let _ = writeln!(s, "alpha_evaluations={}", self.alpha_evaluations);
        let _ = writeln!(s, "escalated_patches={}", self.escalated_patches);
        let _ = writeln!(s, "fallback_patches={}", self.fallback_patches);
        let _ = writeln!(s, "wall_seconds={:.3}", self.wall_seconds);
        let entropy: Vec<String> = self.alpha_entropy.iter().map(|e| format!("{e:.4}")).collect();
        let _ = writeln!(s, "alpha_entropy={}", entropy.join(","));
        s
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3}",
            self.mode.as_str(),
            self.model.replace(',', ";"),
            self.psnr_db.map(|p| format!("{p:.4}")).unwrap_or_default(),
            self.patches_processed,
            self.likelihood_evaluations,
            self.alpha_evaluations,
            self.escalated_patches,
            self.fallback_patches,
            self.wall_seconds
        )
    }
}

/// Restores a full image on the current rayon pool.
///
/// Whole-patch mode restores patches at `cfg.stride`, capped at the patch
/// side so no pixel falls into a gap (the last row and column are clamped
/// to the border), and averages overlaps uniformly.
/// Central-pixel mode mirror-pads the image so every pixel is the centre of
/// exactly one patch. Results depend only on the inputs and `cfg.seed`.
pub fn restore_image(
    observed: &Image,
    model: &DegradationModel,
    ds: &PatchDataset,
    cm: &ClusterModel,
    cfg: &RestorationConfig,
) -> Result<(Image, RestorationReport)> {
    let started = Instant::now();
    cfg.validate()?;
    model.validate()?;
    cm.check_matches(ds)?;
    check_mask_dims(observed, model)?;
    if cfg.patch_side != ds.side() {
        return Err(Error::DimensionMismatch { expected: ds.side(), found: cfg.patch_side });
    }
    let side = cfg.patch_side;
    let (work, work_model, stride) = match cfg.mode {
        EstimationMode::WholePatch => (observed.clone(), model.clone(), cfg.stride.min(side)),
        EstimationMode::CentralPixel => (observed.mirror_padded(side / 2), model.mirror_padded(side / 2), 1),
    };
    let sites = extract_patches(&work, side, stride)?;
    let outcomes: Vec<SiteOutcome> = sites
        .par_iter()
        .map(|s| {
            let patch_model = work_model.for_patch(s.row, s.col, side);
            restore_site(&s.patch, ds, cm, &patch_model, cfg, (s.row, s.col))
        })
        .collect::<Result<_>>()?;

    // estimates live on the dataset scale
    let to_output = 1.0 / observation_scale(model, ds);
    let (w, h) = (observed.width(), observed.height());
    let mut pixels = vec![0.0; w * h];
    match cfg.mode {
        EstimationMode::WholePatch => {
            let mut hits = vec![0u32; w * h];
            for (s, o) in sites.iter().zip(&outcomes) {
                let Estimate::Patch(values) = &o.outcome.estimate else { unreachable!("whole-patch estimate") };
                for r in 0..side {
                    for c in 0..side {
                        let idx = (s.row + r) * w + s.col + c;
                        pixels[idx] += values[r * side + c];
                        hits[idx] += 1;
                    }
                }
            }
            for (p, &n) in pixels.iter_mut().zip(&hits) {
                debug_assert!(n > 0);
                *p = *p / f64::from(n) * to_output;
            }
        }
        EstimationMode::CentralPixel => {
            for (s, o) in sites.iter().zip(&outcomes) {
                pixels[s.row * w + s.col] = o.outcome.estimate.central(side) * to_output;
            }
        }
    }

    let iterations = cfg.iterations;
    let mut entropy = vec![0.0; iterations];
    let mut entropy_n = vec![0usize; iterations];
    for o in &outcomes {
        for (i, e) in o.outcome.alpha_entropy.iter().enumerate().take(iterations) {
            entropy[i] += e;
            entropy_n[i] += 1;
        }
    }
    for (e, n) in entropy.iter_mut().zip(&entropy_n) {
        if *n > 0 {
            *e /= *n as f64;
        }
    }
    let report = RestorationReport {
        mode: cfg.mode,
        model: model.label(),
        psnr_db: None,
        patches_processed: outcomes.len(),
        likelihood_evaluations: outcomes.iter().map(|o| o.outcome.likelihood_evaluations).sum(),
        alpha_evaluations: outcomes.iter().map(|o| o.outcome.alpha_evaluations).sum(),
        escalated_patches: outcomes.iter().filter(|o| o.escalations > 0).count(),
        fallback_patches: outcomes.iter().filter(|o| o.fell_back).count(),
        wall_seconds: started.elapsed().as_secs_f64(),
        alpha_entropy: entropy,
    };
    Ok((Image::new(w, h, observed.peak(), pixels)?, report))
}

/// Hit count per pixel for a whole-patch sweep at `stride` (capped at the
/// patch side as in [`restore_image`]).
pub fn coverage(width: usize, height: usize, side: usize, stride: usize) -> Result<Vec<u32>> {
    let probe = Image::filled(width, height, 1.0, 0.0)?;
    let mut hits = vec![0u32; width * height];
    for s in extract_patches(&probe, side, stride.min(side))? {
        for r in 0..side {
            for c in 0..side {
                hits[(s.row + r) * width + s.col + c] += 1;
            }
        }
    }
    Ok(hits)
}
