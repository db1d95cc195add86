//! Self-normalized importance sampling of the patch MMSE estimate.
//!
//! The proposal is a mixture over the dataset clusters. Its weights are
//! refit for every observed patch from a small uniform sample, then a
//! second batch is drawn cluster by cluster and importance-weighted. The two
//! steps alternate for a fixed number of rounds, each round refining the
//! current estimate that the proposal fit depends on.
//!
//! Everything runs in the log domain. Weights are exponentiated only after
//! subtracting their maximum, which is harmless because both the proposal
//! fit and the weighted average are invariant to a common positive factor.

use rand::Rng;

use crate::cluster::{sample_cluster, sample_uniform, ClusterModel};
use crate::dataset::PatchDataset;
use crate::error::{Error, Result};
use crate::likelihood::PatchLikelihood;
use crate::types::{central_index, DegradationModel, EstimationMode, Patch, RestorationConfig};

/// Mixture weights of the proposal; a point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalWeights {
    alpha: Vec<f64>,
}

impl ProposalWeights {
    pub fn uniform(k: usize) -> Self {
        Self { alpha: vec![1.0 / k as f64; k] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.alpha
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.alpha.iter().filter(|&&a| a > 0.0).map(|&a| a * a.ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSample {
    pub patch_index: usize,
    pub cluster_id: usize,
    pub log_weight: f64,
}

/// Result of restoring one patch.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    /// Central pixel only.
    Pixel(f64),
    /// Every pixel, row-major.
    Patch(Vec<f64>),
}

impl Estimate {
    pub fn central(&self, side: usize) -> f64 {
        match self {
            Self::Pixel(v) => *v,
            Self::Patch(p) => p[central_index(side)],
        }
    }
}

/// The current estimate the proposal fit is measured against.
#[derive(Debug, Clone, Copy)]
pub enum CurrentEstimate<'a> {
    Pixel(f64),
    Patch(&'a [f64]),
}

/// Per-cluster proposal scores `b_k`.
///
/// With `l_s` the likelihood of sample `s` (rescaled so the largest is 1)
/// and `Δ_s` its deviation from the current estimate, the score is
/// `|X_k|^{-1/2} Σ_{s in k} sqrt(|Δ_s| l_s)`. For a whole-patch estimate
/// the inner sum also runs over every pixel, reusing one likelihood per
/// sample. Clusters without samples score zero.
pub fn compute_bk(
    samples: &[(usize, usize)],
    estimate: CurrentEstimate<'_>,
    likelihood: &PatchLikelihood<'_>,
    ds: &PatchDataset,
    cm: &ClusterModel,
) -> Vec<f64> {
    let logs: Vec<f64> = samples.iter().map(|&(i, _)| likelihood.eval(ds.patch(i))).collect();
    scores_from_logliks(samples, &logs, estimate, ds, cm)
}

fn scores_from_logliks(
    samples: &[(usize, usize)],
    logs: &[f64],
    estimate: CurrentEstimate<'_>,
    ds: &PatchDataset,
    cm: &ClusterModel,
) -> Vec<f64> {
    let mut b = vec![0.0; cm.k()];
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return b;
    }
    let centre = central_index(ds.side());
    for (&(i, k), &log_l) in samples.iter().zip(logs) {
        let l = (log_l - max).exp();
        if l == 0.0 {
            continue;
        }
        let x = ds.patch(i);
        b[k] += match estimate {
            CurrentEstimate::Pixel(c) => ((f64::from(x[centre]) - c).abs() * l).sqrt(),
            CurrentEstimate::Patch(est) => {
                l.sqrt() * x.iter().zip(est).map(|(&v, &e)| (f64::from(v) - e).abs().sqrt()).sum::<f64>()
            }
        };
    }
    for (k, bk) in b.iter_mut().enumerate() {
        *bk /= (cm.size(k) as f64).sqrt();
    }
    b
}

/// Closed-form maximiser of `Σ sqrt(α_k) b_k` over the simplex:
/// `α_k = b_k² / Σ b²`. All-zero scores give the uniform mixture.
pub fn optimize_alpha(b: &[f64]) -> Result<ProposalWeights> {
    if b.is_empty() {
        return Err(Error::EmptyInput("proposal scores"));
    }
    if let Some(&bad) = b.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::NegativeScore(bad));
    }
    let max = b.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(ProposalWeights::uniform(b.len()));
    }
    let sq: Vec<f64> = b.iter().map(|&v| (v / max) * (v / max)).collect();
    let total: f64 = sq.iter().sum();
    Ok(ProposalWeights { alpha: sq.into_iter().map(|v| v / total).collect() })
}

/// Apportions `n` draws to clusters by largest remainder of `α_k n`, ties
/// going to the lower cluster index. Counts always sum to `n`, and a
/// cluster with zero weight never receives a draw.
pub fn allocate_samples(alpha: &ProposalWeights, n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = alpha.as_slice().iter().map(|&a| a * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    while assigned > n {
        // only reachable through rounding in α; take back from the largest
        let k = (0..counts.len()).max_by_key(|&k| counts[k]).expect("non-empty");
        counts[k] -= 1;
        assigned -= 1;
    }
    let mut order: Vec<usize> = (0..counts.len()).filter(|&k| alpha.as_slice()[k] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(n - assigned) {
        counts[k] += 1;
    }
    counts
}

/// `ln w = ln m_k + ln l_y(x) - ln α_k` for a sample drawn from cluster `k`.
pub fn snis_log_weight(k: usize, log_lik: f64, cm: &ClusterModel, alpha: &ProposalWeights) -> Result<f64> {
    let a = alpha.as_slice()[k];
    if a <= 0.0 {
        return Err(Error::ZeroProposalWeight { k });
    }
    Ok(cm.mass()[k].ln() + log_lik - a.ln())
}

/// Running self-normalized weighted sum.
///
/// Accepts log-weights in any order, rescaling its sums whenever a new
/// maximum arrives, so batches from different proposals can be merged.
#[derive(Debug, Clone)]
pub struct WeightedAccumulator {
    max_log: f64,
    weight_sum: f64,
    value_sums: Vec<f64>,
}

impl WeightedAccumulator {
    pub fn new(len: usize) -> Self {
        Self { max_log: f64::NEG_INFINITY, weight_sum: 0.0, value_sums: vec![0.0; len] }
    }

    pub fn push<X: Copy + Into<f64>>(&mut self, log_weight: f64, values: &[X]) {
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        if log_weight > self.max_log {
            let shrink = (self.max_log - log_weight).exp();
            self.weight_sum *= shrink;
            self.value_sums.iter_mut().for_each(|s| *s *= shrink);
            self.max_log = log_weight;
        }
        let w = (log_weight - self.max_log).exp();
        self.weight_sum += w;
        for (s, &v) in self.value_sums.iter_mut().zip(values) {
            *s += w * v.into();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.max_log == f64::NEG_INFINITY
    }

    /// `Σ w f / Σ w`, or `None` when every weight was zero.
    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        Some(self.value_sums.iter().map(|s| s / self.weight_sum).collect())
    }
}

/// Self-normalized average of the sampled patches (or of their central
/// pixels when `mode` is [`EstimationMode::CentralPixel`]).
pub fn weighted_average(samples: &[WeightedSample], ds: &PatchDataset, mode: EstimationMode) -> Result<Vec<f64>> {
    let max = samples.iter().map(|s| s.log_weight).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllWeightsZero { alpha: Vec::new() });
    }
    let centre = central_index(ds.side());
    let len = match mode {
        EstimationMode::CentralPixel => 1,
        EstimationMode::WholePatch => ds.dim(),
    };
    let mut num = vec![0.0; len];
    let mut den = 0.0;
    for s in samples {
        let w = (s.log_weight - max).exp();
        if w == 0.0 {
            continue;
        }
        den += w;
        let x = ds.patch(s.patch_index);
        match mode {
            EstimationMode::CentralPixel => num[0] += w * f64::from(x[centre]),
            EstimationMode::WholePatch => {
                for (acc, &v) in num.iter_mut().zip(x) {
                    *acc += w * f64::from(v);
                }
            }
        }
    }
    Ok(num.into_iter().map(|v| v / den).collect())
}

/// How the two sampling stages obtain their draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    Random,
    /// Deterministic stand-in for random draws, used by oracle tests. The
    /// proposal fit scores the whole dataset, and the estimate enumerates
    /// every member of each cluster allotted a positive count `N_k`, each
    /// member standing for `N_k / |X_k|` draws.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestoreOptions {
    pub sampling: Sampling,
    /// Log-likelihoods below this count as exact zeros (see
    /// [`PatchLikelihood::with_log_floor`]).
    pub log_floor: f64,
}

impl Default for RestoreOptions {
    fn default() -> Self {
        Self { sampling: Sampling::Random, log_floor: f64::NEG_INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchOutcome {
    pub estimate: Estimate,
    pub likelihood_evaluations: usize,
    /// The share of `likelihood_evaluations` spent fitting the proposal.
    pub alpha_evaluations: usize,
    /// Entropy of the fitted proposal weights, one entry per iteration.
    pub alpha_entropy: Vec<f64>,
}

/// Ratio between the observation's intensity scale and the dataset's.
pub(crate) fn observation_scale(model: &DegradationModel, ds: &PatchDataset) -> f64 {
    match model {
        DegradationModel::Poisson { peak } | DegradationModel::MaskedPoisson { peak, .. } => ds.peak() / peak,
        _ => 1.0,
    }
}

/// Starting point of the alternation: the observation itself, on the
/// dataset scale, with unobserved pixels set to the mean of the observed
/// ones (half the dataset peak when nothing is observed).
pub fn initial_estimate(y: &Patch, model: &DegradationModel, ds: &PatchDataset) -> Vec<f64> {
    let scale = observation_scale(model, ds);
    let mut est: Vec<f64> = y.values().iter().map(|v| v * scale).collect();
    if let Some(mask) = model.mask() {
        let observed = mask.observed();
        let (sum, n) = est
            .iter()
            .zip(observed)
            .filter(|(_, &o)| o)
            .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
        let fill = if n > 0 { sum / n as f64 } else { 0.5 * ds.peak() };
        for (v, &o) in est.iter_mut().zip(observed) {
            if !o {
                *v = fill;
            }
        }
    }
    est
}

fn check_inputs(
    y: &Patch,
    ds: &PatchDataset,
    cm: &ClusterModel,
    cfg: &RestorationConfig,
) -> Result<()> {
    cfg.validate()?;
    cm.check_matches(ds)?;
    if cfg.clusters != cm.k() {
        return Err(Error::InvalidConfig(format!(
            "configuration expects {} clusters, model has {}",
            cfg.clusters,
            cm.k()
        )));
    }
    if y.len() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: ds.dim(), found: y.len() });
    }
    Ok(())
}

/// Restores one observed patch; shorthand for [`restore_patch_with`] with
/// random sampling.
pub fn restore_patch(
    y: &Patch,
    ds: &PatchDataset,
    cm: &ClusterModel,
    model: &DegradationModel,
    cfg: &RestorationConfig,
    rng: &mut impl Rng,
) -> Result<Estimate> {
    restore_patch_with(y, ds, cm, model, cfg, rng, &RestoreOptions::default()).map(|o| o.estimate)
}

/// Alternates `cfg.iterations` times between fitting the proposal weights
/// against the current estimate and re-estimating by SNIS. The estimate is
/// on the dataset intensity scale.
pub fn restore_patch_with(
    y: &Patch,
    ds: &PatchDataset,
    cm: &ClusterModel,
    model: &DegradationModel,
    cfg: &RestorationConfig,
    rng: &mut impl Rng,
    opts: &RestoreOptions,
) -> Result<PatchOutcome> {
    check_inputs(y, ds, cm, cfg)?;
    let likelihood = PatchLikelihood::for_model(model, y.values(), ds.peak())?.with_log_floor(opts.log_floor);
    let centre = central_index(ds.side());
    let mut current = initial_estimate(y, model, ds);
    let mut evaluations = 0;
    let mut alpha_evaluations = 0;
    let mut entropy = Vec::with_capacity(cfg.iterations);
    let exhaustive: Vec<(usize, usize)> = match opts.sampling {
        Sampling::Exhaustive => (0..ds.count()).map(|i| (i, cm.cluster_of(i))).collect(),
        Sampling::Random => Vec::new(),
    };

    for iteration in 0..cfg.iterations {
        let fit_samples = match opts.sampling {
            Sampling::Random => sample_uniform(cm, cfg.alpha_samples, rng),
            Sampling::Exhaustive => exhaustive.clone(),
        };
        let reference = match cfg.mode {
            EstimationMode::CentralPixel => CurrentEstimate::Pixel(current[centre]),
            EstimationMode::WholePatch => CurrentEstimate::Patch(&current),
        };
        let b = compute_bk(&fit_samples, reference, &likelihood, ds, cm);
        evaluations += fit_samples.len();
        alpha_evaluations += fit_samples.len();
        let alpha = optimize_alpha(&b)?;
        entropy.push(alpha.entropy());

        let counts = allocate_samples(&alpha, cfg.estimate_samples);
        let mut samples = Vec::with_capacity(cfg.estimate_samples);
        for (k, &n_k) in counts.iter().enumerate() {
            if n_k == 0 {
                continue;
            }
            let (indices, extra) = match opts.sampling {
                Sampling::Random => (sample_cluster(cm, k, n_k, rng)?, 0.0),
                Sampling::Exhaustive => {
                    (cm.members(k).to_vec(), (n_k as f64 / cm.size(k) as f64).ln())
                }
            };
            for i in indices {
                let log_lik = likelihood.eval(ds.patch(i));
                evaluations += 1;
                samples.push(WeightedSample {
                    patch_index: i,
                    cluster_id: k,
                    log_weight: snis_log_weight(k, log_lik, cm, &alpha)? + extra,
                });
            }
        }
        let updated = match weighted_average(&samples, ds, cfg.mode) {
            Ok(u) => u,
            // a refit that loses every usable sample keeps the last estimate
            Err(Error::AllWeightsZero { .. }) if iteration > 0 => break,
            Err(Error::AllWeightsZero { .. }) => return Err(Error::AllWeightsZero { alpha: alpha.into_vec() }),
            Err(other) => return Err(other),
        };
        match cfg.mode {
            EstimationMode::CentralPixel => current[centre] = updated[0],
            EstimationMode::WholePatch => current = updated,
        }
    }

    let estimate = match cfg.mode {
        EstimationMode::CentralPixel => Estimate::Pixel(current[centre]),
        EstimationMode::WholePatch => Estimate::Patch(current),
    };
    Ok(PatchOutcome { estimate, likelihood_evaluations: evaluations, alpha_evaluations, alpha_entropy: entropy })
}

/// Full-dataset posterior mean: every patch weighted by its likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEstimate {
    pub patch: Vec<f64>,
    pub central: f64,
}

pub fn exact_mmse(y: &Patch, ds: &PatchDataset, model: &DegradationModel) -> Result<ExactEstimate> {
    exact_mmse_floored(y, ds, model, f64::NEG_INFINITY)
}

pub(crate) fn exact_mmse_floored(
    y: &Patch,
    ds: &PatchDataset,
    model: &DegradationModel,
    log_floor: f64,
) -> Result<ExactEstimate> {
    if y.len() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: ds.dim(), found: y.len() });
    }
    let likelihood = PatchLikelihood::for_model(model, y.values(), ds.peak())?.with_log_floor(log_floor);
    let samples: Vec<WeightedSample> = (0..ds.count())
        .map(|i| WeightedSample { patch_index: i, cluster_id: 0, log_weight: likelihood.eval(ds.patch(i)) })
        .collect();
    let patch = weighted_average(&samples, ds, EstimationMode::WholePatch)?;
    let central = patch[central_index(ds.side())];
    Ok(ExactEstimate { patch, central })
}

/// `count` uniform draws from the dataset, averaged with likelihood
/// weights (the prior is the proposal, so no correction is needed).
pub fn uniform_baseline(
    y: &Patch,
    ds: &PatchDataset,
    model: &DegradationModel,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    uniform_baseline_with(y, ds, model, count, rng, Sampling::Random)
}

/// With [`Sampling::Exhaustive`] the draws are replaced by one pass over
/// the whole dataset and `count` is ignored.
pub fn uniform_baseline_with(
    y: &Patch,
    ds: &PatchDataset,
    model: &DegradationModel,
    count: usize,
    rng: &mut impl Rng,
    sampling: Sampling,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidConfig("uniform baseline needs at least one sample".into()));
    }
    if y.len() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: ds.dim(), found: y.len() });
    }
    let likelihood = PatchLikelihood::for_model(model, y.values(), ds.peak())?;
    let weigh = |i: usize| WeightedSample { patch_index: i, cluster_id: 0, log_weight: likelihood.eval(ds.patch(i)) };
    let samples: Vec<WeightedSample> = match sampling {
        Sampling::Random => (0..count).map(|_| weigh(rng.random_range(0..ds.count()))).collect(),
        Sampling::Exhaustive => (0..ds.count()).map(weigh).collect(),
    };
    weighted_average(&samples, ds, EstimationMode::WholePatch)
}
