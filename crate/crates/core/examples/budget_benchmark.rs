//! PSNR of central-pixel estimates against the number of likelihood
//! evaluations, for the clustered proposal and for uniform sampling.
//! Prints the curve as CSV.

use snis::benchmark::{make_patch_set, run_benchmark, BenchmarkConfig, Method};
use snis::prelude::*;
use snis::synth::{glyph_corpus, CorpusSpec};

fn main() -> snis::Result<()> {
    let corpus = glyph_corpus(&CorpusSpec { train_images: 30, test_images: 4, ..Default::default() }, 2);
    let ds = build_dataset(&corpus.train, 9, 2)?;
    let cm = cluster_kmeans(&ds, 40, 0, 30)?;
    let model = DegradationModel::Gaussian { sigma: 18.0 };
    let set = make_patch_set(&corpus.test, 9, 200, &model, &mut snis::rng::seeded(3))?;

    let cfg = BenchmarkConfig {
        budgets: vec![1_000, 3_000, 10_000],
        methods: vec![Method::Snis, Method::Uniform, Method::Exact],
        ..Default::default()
    };
    print!("{}", run_benchmark(&set, &ds, &cm, &model, &cfg)?.to_csv());
    Ok(())
}
