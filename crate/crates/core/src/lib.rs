//! External patch-based image restoration with self-normalized importance
//! sampling.
//!
//! Each degraded patch is restored by approximating its posterior mean
//! under an empirical prior: a large external set of clean patches. Rather
//! than averaging over the whole set (external non-local means), patches
//! are drawn from a mixture over a clustering of the set whose weights are
//! fit to the observed patch, and the draws are importance-weighted. Any
//! observation model with a computable likelihood works; Gaussian noise,
//! Poisson noise, and missing pixels are built in.
//!
//! ```no_run
//! use snis::prelude::*;
//!
//! # fn main() -> snis::Result<()> {
//! let corpus = snis::synth::glyph_corpus(&snis::synth::CorpusSpec::default(), 0);
//! let ds = build_dataset(&corpus.train, 9, 2)?;
//! let cm = cluster_kmeans(&ds, 20, 0, 30)?;
//! let clean = &corpus.test[0];
//! let model = DegradationModel::Gaussian { sigma: 30.0 };
//! let noisy = degrade(clean, &model, &mut snis::rng::seeded(1))?;
//! let cfg = RestorationConfig { clusters: 20, ..Default::default() };
//! let (restored, report) = restore_image(&noisy, &model, &ds, &cm, &cfg)?;
//! println!("{:.2} dB in {:.1}s", psnr(clean, &restored, 255.0)?, report.wall_seconds);
//! # Ok(())
//! # }
//! ```

pub mod benchmark;
pub mod cli;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod pgm;
pub mod pipeline;
pub mod rng;
pub mod store;
pub mod synth;
pub mod types;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::cluster::{cluster_cem, cluster_kmeans, ClusterAlgorithm, ClusterModel};
    pub use crate::dataset::{build_dataset, extract_patches, PatchDataset};
    pub use crate::estimator::{exact_mmse, restore_patch, uniform_baseline, Estimate, ProposalWeights};
    pub use crate::pipeline::{degrade, psnr, restore_image, RestorationReport};
    pub use crate::types::{DegradationModel, EstimationMode, Image, Mask, Patch, RestorationConfig};
}
