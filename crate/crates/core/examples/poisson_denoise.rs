//! Low-light restoration: Poisson counts at a small peak are restored with
//! the Poisson likelihood, against a dataset kept on the 0-255 scale.

use snis::prelude::*;
use snis::synth::{glyph_corpus, CorpusSpec};

fn main() -> snis::Result<()> {
    let corpus = glyph_corpus(&CorpusSpec { train_images: 30, test_images: 1, ..Default::default() }, 3);
    let ds = build_dataset(&corpus.train, 9, 2)?;
    let cm = cluster_kmeans(&ds, 30, 0, 30)?;
    let cfg = RestorationConfig { clusters: 30, ..Default::default() };

    for peak in [10.0, 2.0] {
        let clean = corpus.test[0].rescaled(peak)?;
        let model = DegradationModel::Poisson { peak };
        let counts = degrade(&clean, &model, &mut snis::rng::seeded(5))?;
        let (restored, report) = restore_image(&counts, &model, &ds, &cm, &cfg)?;
        println!(
            "peak {peak:>4}: counts {:.2} dB, restored {:.2} dB, {} fallback patches",
            psnr(&clean, &counts, peak)?,
            psnr(&clean, &restored, peak)?,
            report.fallback_patches
        );
    }
    Ok(())
}
