//! Hard partitions of a patch dataset and the samplers built on them.
//!
//! Two clusterers are provided: Lloyd's k-means with k-means++ seeding
//! (the default) and classification-EM over diagonal-covariance Gaussians.
//! Both return the same [`ClusterModel`] contract, and every cluster in the
//! result is non-empty.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::PatchDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterAlgorithm {
    KMeans,
    Cem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    dim: usize,
    assignment: Vec<u32>,
    members: Vec<Vec<usize>>,
    mass: Vec<f64>,
    centroids: Vec<f32>,
}

impl ClusterModel {
    /// Rebuilds the member lists and masses from a per-patch assignment.
    pub fn from_assignment(k: usize, dim: usize, assignment: Vec<u32>, centroids: Vec<f32>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("cluster count must be at least 1".into()));
        }
        if assignment.is_empty() {
            return Err(Error::EmptyInput("cluster assignment"));
        }
        if centroids.len() != k * dim {
            return Err(Error::DimensionMismatch { expected: k * dim, found: centroids.len() });
        }
        let mut members = vec![Vec::new(); k];
        for (i, &a) in assignment.iter().enumerate() {
            let a = a as usize;
            if a >= k {
                return Err(Error::InvalidCluster { k: a, clusters: k });
            }
            members[a].push(i);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::Format(format!("cluster {empty} has no members")));
        }
        let total = assignment.len() as f64;
        let mass = members.iter().map(|m| m.len() as f64 / total).collect();
        Ok(Self { dim, assignment, members, mass, centroids })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of clustered patches.
    pub fn count(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    #[inline]
    pub fn cluster_of(&self, index: usize) -> usize {
        self.assignment[index] as usize
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn size(&self, k: usize) -> usize {
        self.members[k].len()
    }

    /// Estimated prior mass of each cluster, |X_k| / count.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, k: usize) -> &[f32] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    /// Checks that this model describes `ds`.
    pub fn check_matches(&self, ds: &PatchDataset) -> Result<()> {
        if self.dim != ds.dim() {
            return Err(Error::DimensionMismatch { expected: ds.dim(), found: self.dim });
        }
        if self.count() != ds.count() {
            return Err(Error::DimensionMismatch { expected: ds.count(), found: self.count() });
        }
        Ok(())
    }
}

pub fn cluster(
    ds: &PatchDataset,
    algorithm: ClusterAlgorithm,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel> {
    match algorithm {
        ClusterAlgorithm::KMeans => cluster_kmeans(ds, k, seed, max_iter),
        ClusterAlgorithm::Cem => cluster_cem(ds, k, seed, max_iter),
    }
}

fn check_k(ds: &PatchDataset, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("cluster count must be at least 1".into()));
    }
    if k > ds.count() {
        return Err(Error::TooManyClusters { k, count: ds.count() });
    }
    Ok(())
}

#[inline]
fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &c)| {
        let d = f64::from(x) - c;
        d * d
    }).sum()
}

fn row(ds: &PatchDataset, i: usize) -> Vec<f64> {
    ds.patch(i).iter().map(|&v| f64::from(v)).collect()
}

/// k-means++ seeding: first centre uniform, then D²-weighted draws.
fn kmeans_pp(ds: &PatchDataset, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let count = ds.count();
    let mut centres = vec![row(ds, rng.random_range(0..count))];
    let mut d2: Vec<f64> = (0..count).into_par_iter().map(|i| sq_dist(ds.patch(i), &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = count - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all points coincide with a centre; any index works and the
            // empty-cluster repair sorts out the partition
            rng.random_range(0..count)
        };
        let centre = row(ds, pick);
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(ds.patch(i), &centre));
        });
        centres.push(centre);
    }
    centres
}

fn nearest(ds: &PatchDataset, centres: &[Vec<f64>]) -> Vec<u32> {
    (0..ds.count())
        .into_par_iter()
        .map(|i| {
            let p = ds.patch(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centre) in centres.iter().enumerate() {
                let d = sq_dist(p, centre);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best as u32
        })
        .collect()
}

fn means(ds: &PatchDataset, assignment: &[u32], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = ds.dim();
    let mut sums = vec![vec![0.0; n]; k];
    let mut sizes = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        let a = a as usize;
        sizes[a] += 1;
        for (s, &v) in sums[a].iter_mut().zip(ds.patch(i)) {
            *s += f64::from(v);
        }
    }
    for (s, &size) in sums.iter_mut().zip(&sizes) {
        if size > 0 {
            s.iter_mut().for_each(|v| *v /= size as f64);
        }
    }
    (sums, sizes)
}

/// Moves patches into empty clusters until none is left empty. Each empty
/// cluster takes the member of the currently largest cluster that lies
/// farthest from that cluster's centre, and is re-centred on it.
fn repair_empty(ds: &PatchDataset, assignment: &mut [u32], centres: &mut [Vec<f64>]) -> bool {
    let k = centres.len();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a as usize] += 1;
    }
    let mut repaired = false;
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).expect("k >= 1");
        let donor = assignment
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a as usize == largest)
            .map(|(i, _)| (i, sq_dist(ds.patch(i), &centres[largest])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("largest cluster is non-empty");
        assignment[donor] = empty as u32;
        sizes[largest] -= 1;
        sizes[empty] = 1;
        centres[empty] = row(ds, donor);
        repaired = true;
    }
    repaired
}

fn finish(k: usize, dim: usize, assignment: Vec<u32>, centres: &[Vec<f64>]) -> Result<ClusterModel> {
    let centroids = centres.iter().flat_map(|c| c.iter().map(|&v| v as f32)).collect();
    ClusterModel::from_assignment(k, dim, assignment, centroids)
}

/// Lloyd's algorithm from k-means++ seeds. Stops after `max_iter` rounds or
/// as soon as the assignment no longer changes.
pub fn cluster_kmeans(ds: &PatchDataset, k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    check_k(ds, k)?;
    let mut rng = crate::rng::seeded(seed);
    let mut centres = kmeans_pp(ds, k, &mut rng);
    let mut assignment = nearest(ds, &centres);
    repair_empty(ds, &mut assignment, &mut centres);
    for _ in 0..max_iter {
        let (m, sizes) = means(ds, &assignment, k);
        for (c, (mean, size)) in m.into_iter().zip(sizes).enumerate() {
            if size > 0 {
                centres[c] = mean;
            }
        }
        let mut next = nearest(ds, &centres);
        repair_empty(ds, &mut next, &mut centres);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let (m, _) = means(ds, &assignment, k);
    finish(k, ds.dim(), assignment, &m)
}

/// Classification-EM with diagonal-covariance Gaussian components.
///
/// Variances are floored at `1e-6` times the average per-dimension data
/// variance so that degenerate clusters stay finite.
pub fn cluster_cem(ds: &PatchDataset, k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    check_k(ds, k)?;
    let n = ds.dim();
    let count = ds.count();
    let mut rng = crate::rng::seeded(seed);
    let mut centres = kmeans_pp(ds, k, &mut rng);
    let mut assignment = nearest(ds, &centres);
    repair_empty(ds, &mut assignment, &mut centres);

    let (global, _) = means(ds, &vec![0; count], 1);
    let data_var = (0..count)
        .map(|i| sq_dist(ds.patch(i), &global[0]))
        .sum::<f64>()
        / (count * n) as f64;
    let floor = (1e-6 * data_var).max(1e-12);

    for _ in 0..max_iter {
        let (mu, sizes) = means(ds, &assignment, k);
        let mut var = vec![vec![0.0; n]; k];
        for (i, &a) in assignment.iter().enumerate() {
            let a = a as usize;
            for ((v, &x), &m) in var[a].iter_mut().zip(ds.patch(i)).zip(&mu[a]) {
                let d = f64::from(x) - m;
                *v += d * d;
            }
        }
        let mut log_norm = vec![0.0; k];
        for c in 0..k {
            let size = sizes[c].max(1) as f64;
            for v in var[c].iter_mut() {
                *v = (*v / size).max(floor);
            }
            let log_det: f64 = var[c].iter().map(|v| v.ln()).sum();
            log_norm[c] = (size / count as f64).ln() - 0.5 * log_det;
        }
        let inv_var: Vec<Vec<f64>> = var.iter().map(|v| v.iter().map(|x| 1.0 / x).collect()).collect();

        let mut next: Vec<u32> = (0..count)
            .into_par_iter()
            .map(|i| {
                let p = ds.patch(i);
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..k {
                    let quad: f64 = p
                        .iter()
                        .zip(&mu[c])
                        .zip(&inv_var[c])
                        .map(|((&x, &m), &iv)| {
                            let d = f64::from(x) - m;
                            d * d * iv
                        })
                        .sum();
                    let score = log_norm[c] - 0.5 * quad;
                    if score > best_score {
                        best_score = score;
                        best = c;
                    }
                }
                best as u32
            })
            .collect();
        centres = mu;
        repair_empty(ds, &mut next, &mut centres);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let (m, _) = means(ds, &assignment, k);
    finish(k, n, assignment, &m)
}

/// Uniform draws with replacement over the whole dataset, returned as
/// `(patch index, cluster id)` pairs.
pub fn sample_uniform(cm: &ClusterModel, count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let total = cm.count();
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..total);
            (i, cm.cluster_of(i))
        })
        .collect()
}

/// Uniform draws with replacement over the members of cluster `k`.
pub fn sample_cluster(cm: &ClusterModel, k: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if k >= cm.k() {
        return Err(Error::InvalidCluster { k, clusters: cm.k() });
    }
    let members = cm.members(k);
    Ok((0..count).map(|_| members[rng.random_range(0..members.len())]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn blobs(low: usize, high: usize, seed: u64) -> PatchDataset {
        let mut rng = seeded(seed);
        let n = 9;
        let mut data = Vec::new();
        for _ in 0..low {
            data.extend((0..n).map(|_| rng.random_range(-3.0f32..3.0)));
        }
        for _ in 0..high {
            data.extend((0..n).map(|_| 100.0 + rng.random_range(-3.0f32..3.0)));
        }
        PatchDataset::from_raw(3, 255.0, data).unwrap()
    }

    fn check_partition(cm: &ClusterModel, count: usize) {
        let mut seen = vec![false; count];
        for k in 0..cm.k() {
            assert!(!cm.members(k).is_empty(), "cluster {k} empty");
            for &i in cm.members(k) {
                assert!(!seen[i], "patch {i} in two clusters");
                seen[i] = true;
                assert_eq!(cm.cluster_of(i), k);
            }
        }
        assert!(seen.iter().all(|&s| s));
        let total: f64 = cm.mass().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    /// Ground truth for the blob fixture: threshold the mean intensity.
    fn threshold_labels(ds: &PatchDataset) -> Vec<bool> {
        (0..ds.count())
            .map(|i| ds.patch(i).iter().map(|&v| f64::from(v)).sum::<f64>() / 9.0 > 50.0)
            .collect()
    }

    fn same_partition(cm: &ClusterModel, labels: &[bool]) -> bool {
        let first = cm.cluster_of(0);
        labels.iter().enumerate().all(|(i, &l)| (cm.cluster_of(i) == first) == (l == labels[0]))
    }

    #[test]
    fn single_cluster_holds_everything() {
        let ds = blobs(10, 5, 1);
        for algo in [ClusterAlgorithm::KMeans, ClusterAlgorithm::Cem] {
            let cm = cluster(&ds, algo, 1, 3, 20).unwrap();
            assert_eq!(cm.k(), 1);
            assert_eq!(cm.mass(), &[1.0]);
            check_partition(&cm, ds.count());
        }
    }

    #[test]
    fn kmeans_separates_blobs() {
        let ds = blobs(30, 10, 2);
        let labels = threshold_labels(&ds);
        let cm = cluster_kmeans(&ds, 2, 9, 50).unwrap();
        check_partition(&cm, ds.count());
        assert!(same_partition(&cm, &labels));
        let mut masses = cm.mass().to_vec();
        masses.sort_by(f64::total_cmp);
        assert_eq!(masses, vec![0.25, 0.75]);
    }

    #[test]
    fn cem_matches_kmeans_on_blobs() {
        let ds = blobs(30, 10, 4);
        let km = cluster_kmeans(&ds, 2, 1, 50).unwrap();
        let cem = cluster_cem(&ds, 2, 1, 50).unwrap();
        check_partition(&cem, ds.count());
        let labels = threshold_labels(&ds);
        assert!(same_partition(&km, &labels));
        assert!(same_partition(&cem, &labels));
    }

    #[test]
    fn singleton_clusters_when_k_equals_count() {
        let ds = blobs(6, 6, 5);
        let cm = cluster_kmeans(&ds, ds.count(), 0, 20).unwrap();
        check_partition(&cm, ds.count());
        for k in 0..cm.k() {
            assert_eq!(cm.size(k), 1);
            assert!((cm.mass()[k] - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let ds = blobs(2, 1, 0);
        assert!(matches!(cluster_kmeans(&ds, 4, 0, 10), Err(Error::TooManyClusters { k: 4, count: 3 })));
        assert!(matches!(cluster_cem(&ds, 4, 0, 10), Err(Error::TooManyClusters { .. })));
    }

    #[test]
    fn identical_patches_stay_finite() {
        let ds = PatchDataset::from_raw(3, 255.0, vec![7.0; 9 * 10]).unwrap();
        let cm = cluster_cem(&ds, 2, 0, 10).unwrap();
        check_partition(&cm, 10);
        assert!(cm.centroids().iter().all(|v| v.is_finite()));
        let km = cluster_kmeans(&ds, 3, 0, 10).unwrap();
        check_partition(&km, 10);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let ds = blobs(40, 40, 7);
        let a = cluster_kmeans(&ds, 5, 11, 30).unwrap();
        let b = cluster_kmeans(&ds, 5, 11, 30).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permuted_dataset_gives_same_partition() {
        let ds = blobs(12, 8, 3);
        let n = ds.dim();
        let count = ds.count();
        // reverse order as the permutation
        let perm: Vec<usize> = (0..count).rev().collect();
        let mut data = Vec::with_capacity(count * n);
        for &p in &perm {
            data.extend_from_slice(ds.patch(p));
        }
        let permuted = PatchDataset::from_raw(3, 255.0, data).unwrap();
        let a = cluster_kmeans(&ds, 2, 1, 30).unwrap();
        let b = cluster_kmeans(&permuted, 2, 99, 30).unwrap();
        let contents = |cm: &ClusterModel, map: &dyn Fn(usize) -> usize| {
            let mut groups: Vec<Vec<usize>> =
                (0..cm.k()).map(|k| {
                    let mut g: Vec<usize> = cm.members(k).iter().map(|&i| map(i)).collect();
                    g.sort_unstable();
                    g
                }).collect();
            groups.sort();
            groups
        };
        assert_eq!(contents(&a, &|i| i), contents(&b, &|i| perm[i]));
    }

    /// Largest deviation of empirical index frequencies from `1/m`, in units
    /// of the binomial standard error.
    fn max_z(counts: &[usize], draws: usize) -> f64 {
        let p = 1.0 / counts.len() as f64;
        let se = (draws as f64 * p * (1.0 - p)).sqrt();
        counts.iter().map(|&c| (c as f64 - draws as f64 * p).abs() / se).fold(0.0, f64::max)
    }

    #[test]
    fn uniform_sampler_examples() {
        let one = ClusterModel::from_assignment(1, 9, vec![0], vec![0.0; 9]).unwrap();
        let draws = sample_uniform(&one, 5, &mut seeded(0));
        assert_eq!(draws, vec![(0, 0); 5]);

        let ds = blobs(5, 5, 8);
        let cm = cluster_kmeans(&ds, 2, 0, 10).unwrap();
        let draws = sample_uniform(&cm, 100_000, &mut seeded(1));
        let mut counts = vec![0; ds.count()];
        for &(i, c) in &draws {
            counts[i] += 1;
            assert_eq!(c, cm.cluster_of(i));
        }
        assert!(max_z(&counts, draws.len()) < 3.0, "{counts:?}");

        assert_eq!(sample_uniform(&cm, 50, &mut seeded(42)), sample_uniform(&cm, 50, &mut seeded(42)));
    }

    #[test]
    fn cluster_sampler_examples() {
        let cm = ClusterModel::from_assignment(2, 1, vec![0, 1, 1, 1, 1], vec![0.0; 2]).unwrap();
        assert_eq!(sample_cluster(&cm, 0, 4, &mut seeded(0)).unwrap(), vec![0; 4]);
        assert!(sample_cluster(&cm, 1, 0, &mut seeded(0)).unwrap().is_empty());
        assert!(matches!(sample_cluster(&cm, 2, 1, &mut seeded(0)), Err(Error::InvalidCluster { .. })));

        let draws = sample_cluster(&cm, 1, 100_000, &mut seeded(3)).unwrap();
        let mut counts = vec![0; 4];
        for i in draws {
            assert!((1..5).contains(&i));
            counts[i - 1] += 1;
        }
        assert!(max_z(&counts, 100_000) < 3.0, "{counts:?}");
    }
}
