//! Clusters a patch dataset with k-means and with classification EM and
//! saves both models, then reloads one to show the file round trip.

use snis::prelude::*;
use snis::store;
use snis::synth::{glyph_corpus, CorpusSpec};

fn summary(name: &str, cm: &ClusterModel) {
    let mut sizes: Vec<usize> = (0..cm.k()).map(|k| cm.size(k)).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    println!("{name:>7}: {} clusters, largest {:?}, smallest {}", cm.k(), &sizes[..5], sizes[sizes.len() - 1]);
}

fn main() -> snis::Result<()> {
    let corpus = glyph_corpus(&CorpusSpec { train_images: 10, test_images: 0, ..Default::default() }, 11);
    let ds = build_dataset(&corpus.train, 9, 2)?;
    println!("{} patches of {} pixels", ds.count(), ds.dim());

    let km = cluster_kmeans(&ds, 20, 4, 50)?;
    let cem = cluster_cem(&ds, 20, 4, 50)?;
    summary("kmeans", &km);
    summary("cem", &cem);

    let dir = std::env::temp_dir().join("snis-clustering-example");
    std::fs::create_dir_all(&dir)?;
    store::save_dataset(&dir.join("patches.snpd"), &ds)?;
    store::save_clusters(&dir.join("kmeans.sncm"), &km)?;
    assert_eq!(store::load_clusters(&dir.join("kmeans.sncm"))?, km);
    println!("saved to {}", dir.display());
    Ok(())
}
