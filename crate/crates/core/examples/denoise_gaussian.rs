//! Denoises a synthetic glyph image corrupted by Gaussian noise and writes
//! the clean, noisy and restored images as PGM files.
//!
//! cargo run --release --example denoise_gaussian -- [out_dir]

use std::path::PathBuf;

use snis::prelude::*;
use snis::synth::{glyph_corpus, CorpusSpec};

fn main() -> snis::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let corpus = glyph_corpus(&CorpusSpec { train_images: 30, test_images: 1, ..Default::default() }, 7);
    let ds = build_dataset(&corpus.train, 9, 2)?;
    let cm = cluster_kmeans(&ds, 30, 0, 30)?;

    let clean = &corpus.test[0];
    let model = DegradationModel::Gaussian { sigma: 30.0 };
    let noisy = degrade(clean, &model, &mut snis::rng::seeded(1))?;
    let cfg = RestorationConfig { clusters: 30, ..Default::default() };
    let (restored, report) = restore_image(&noisy, &model, &ds, &cm, &cfg)?;

    println!("{} dataset patches, {} clusters", ds.count(), cm.k());
    println!("noisy    {:.2} dB", psnr(clean, &noisy, 255.0)?);
    println!("restored {:.2} dB ({:.1}s)", psnr(clean, &restored, 255.0)?, report.wall_seconds);
    for (name, img) in [("clean", clean), ("noisy", &noisy), ("restored", &restored)] {
        snis::pgm::write_image(&out.join(format!("{name}.pgm")), img)?;
    }
    Ok(())
}
