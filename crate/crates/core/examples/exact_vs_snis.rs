//! Compares one patch's SNIS estimate to the full-dataset posterior mean as
//! the sample count grows.

use snis::prelude::*;
use snis::synth::{glyph_corpus, CorpusSpec};

fn main() -> snis::Result<()> {
    let corpus = glyph_corpus(&CorpusSpec { train_images: 20, test_images: 1, ..Default::default() }, 9);
    let ds = build_dataset(&corpus.train, 9, 2)?;
    let cm = cluster_kmeans(&ds, 20, 0, 30)?;
    let model = DegradationModel::Gaussian { sigma: 30.0 };

    let noisy = degrade(&corpus.test[0], &model, &mut snis::rng::seeded(4))?;
    let y = noisy.patch_at(14, 10, 9);
    let exact = exact_mmse(&y, &ds, &model)?.central;
    println!("exact posterior mean of the central pixel: {exact:.3}");

    for n in [30, 100, 300, 1000, 3000] {
        let cfg = RestorationConfig { mode: EstimationMode::CentralPixel, estimate_samples: n, ..Default::default() };
        let errors: Vec<f64> = (0..50)
            .map(|seed| {
                let est = restore_patch(&y, &ds, &cm, &model, &cfg, &mut snis::rng::seeded(seed))?;
                Ok((est.central(9) - exact).abs())
            })
            .collect::<snis::Result<_>>()?;
        println!("N = {n:>4}: mean |error| {:.3}", errors.iter().sum::<f64>() / errors.len() as f64);
    }
    Ok(())
}
