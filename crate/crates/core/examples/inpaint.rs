//! Fills in a texture of which only 10% of the pixels survive.
//!
//! Noiseless observations make almost every likelihood underflow, so
//! restoration starts from a small sigma and grows it per patch until some
//! sample carries weight. The report counts the patches that needed it.

use snis::prelude::*;
use snis::synth::{random_mask, texture_image};

fn main() -> snis::Result<()> {
    let clean = texture_image(64, 64, 255.0, 1);
    let ds = build_dataset(std::slice::from_ref(&clean), 9, 1)?;
    let cm = cluster_kmeans(&ds, 100, 0, 30)?;

    let mask = random_mask(64, 64, 0.1, &mut snis::rng::seeded(1));
    let model = DegradationModel::MaskedGaussian { sigma: 0.0, mask };
    let observed = degrade(&clean, &model, &mut snis::rng::seeded(2))?;
    let cfg = RestorationConfig { clusters: 100, alpha_samples: 10_000, ..Default::default() };
    let (restored, report) = restore_image(&observed, &model, &ds, &cm, &cfg)?;

    println!("observed {:.2} dB", psnr(&clean, &observed, 255.0)?);
    println!("restored {:.2} dB", psnr(&clean, &restored, 255.0)?);
    println!("{} of {} patches escalated sigma", report.escalated_patches, report.patches_processed);
    Ok(())
}
