//! Log-likelihoods `ln p(y | x)` for the supported observation models.
//!
//! Terms that do not depend on the clean patch `x` (the Gaussian
//! normaliser, `ln y!`) are dropped: the estimators only ever use ratios of
//! likelihoods, so they cancel.

use crate::error::{Error, Result};
use crate::types::{DegradationModel, Mask, Patch};

/// Lower bound applied to Poisson means before taking the logarithm.
pub const POISSON_MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Noise {
    Gaussian { inv_two_var: f64 },
    /// `scale` maps clean intensities onto the observation's photon scale.
    Poisson { scale: f64 },
}

/// A likelihood bound to one observed patch, ready to be evaluated against
/// many candidate clean patches.
#[derive(Debug, Clone)]
pub struct PatchLikelihood<'a> {
    y: &'a [f64],
    mask: Option<&'a [bool]>,
    noise: Noise,
    log_floor: f64,
}

fn check_mask(mask: Option<&Mask>, len: usize) -> Result<Option<&[bool]>> {
    match mask {
        None => Ok(None),
        Some(m) if m.observed().len() == len => Ok(Some(m.observed())),
        Some(m) => Err(Error::DimensionMismatch { expected: len, found: m.observed().len() }),
    }
}

fn check_counts(y: &[f64], mask: Option<&[bool]>) -> Result<()> {
    for (l, &v) in y.iter().enumerate() {
        if mask.is_some_and(|m| !m[l]) {
            continue;
        }
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidObservation(format!(
                "Poisson counts must be non-negative integers, found {v} at pixel {l}"
            )));
        }
    }
    Ok(())
}

impl<'a> PatchLikelihood<'a> {
    pub fn gaussian(y: &'a [f64], sigma: f64, mask: Option<&'a Mask>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidSigma(sigma));
        }
        Ok(Self {
            y,
            mask: check_mask(mask, y.len())?,
            noise: Noise::Gaussian { inv_two_var: 1.0 / (2.0 * sigma * sigma) },
            log_floor: f64::NEG_INFINITY,
        })
    }

    /// `scale` multiplies every clean intensity before it is used as a
    /// Poisson mean.
    pub fn poisson(y: &'a [f64], scale: f64, mask: Option<&'a Mask>) -> Result<Self> {
        let mask = check_mask(mask, y.len())?;
        check_counts(y, mask)?;
        Ok(Self { y, mask, noise: Noise::Poisson { scale }, log_floor: f64::NEG_INFINITY })
    }

    /// Binds `model` to `y`. Clean patches are expected on the
    /// `reference_peak` intensity scale; Poisson models rescale them to
    /// their own peak.
    pub fn for_model(model: &'a DegradationModel, y: &'a [f64], reference_peak: f64) -> Result<Self> {
        match model {
            DegradationModel::Gaussian { sigma } => Self::gaussian(y, *sigma, None),
            DegradationModel::MaskedGaussian { sigma, mask } => Self::gaussian(y, *sigma, Some(mask)),
            DegradationModel::Poisson { peak } => Self::poisson(y, peak / reference_peak, None),
            DegradationModel::MaskedPoisson { peak, mask } => {
                Self::poisson(y, peak / reference_peak, Some(mask))
            }
        }
    }

    /// Treats every log-likelihood below `log_floor` as an exact zero
    /// likelihood, i.e. as `-∞`.
    pub fn with_log_floor(mut self, log_floor: f64) -> Self {
        self.log_floor = log_floor;
        self
    }

    pub fn y(&self) -> &[f64] {
        self.y
    }

    #[inline]
    fn observed(&self, l: usize) -> bool {
        self.mask.is_none_or(|m| m[l])
    }

    /// Number of pixels that carry information.
    pub fn observed_count(&self) -> usize {
        self.mask.map_or(self.y.len(), |m| m.iter().filter(|&&o| o).count())
    }

    pub fn eval<X: Copy + Into<f64>>(&self, x: &[X]) -> f64 {
        let v = self.eval_unfloored(x);
        if v < self.log_floor {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn eval_unfloored<X: Copy + Into<f64>>(&self, x: &[X]) -> f64 {
        debug_assert_eq!(x.len(), self.y.len());
        match self.noise {
            Noise::Gaussian { inv_two_var } => {
                let mut acc = 0.0;
                for (l, (&y, &x)) in self.y.iter().zip(x).enumerate() {
                    if self.observed(l) {
                        let d = y - x.into();
                        acc += d * d;
                    }
                }
                -acc * inv_two_var
            }
            Noise::Poisson { scale } => {
                let mut acc = 0.0;
                for (l, (&y, &x)) in self.y.iter().zip(x).enumerate() {
                    if !self.observed(l) {
                        continue;
                    }
                    let mean = x.into() * scale;
                    if mean <= 0.0 && y > 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let mean = mean.max(POISSON_MEAN_FLOOR);
                    acc += if y > 0.0 { y * mean.ln() - mean } else { -mean };
                }
                acc
            }
        }
    }
}

fn check_dims(y: &Patch, x: &Patch) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: x.len() });
    }
    Ok(())
}

/// `-Σ (y - x)² / (2σ²)` over observed pixels.
pub fn loglik_gaussian(y: &Patch, x: &Patch, sigma: f64, mask: Option<&Mask>) -> Result<f64> {
    check_dims(y, x)?;
    Ok(PatchLikelihood::gaussian(y.values(), sigma, mask)?.eval(x.values()))
}

/// `Σ y ln x - x` over observed pixels. `x` is floored at
/// [`POISSON_MEAN_FLOOR`]; a pixel with `y > 0` and `x <= 0` makes the
/// observation impossible and yields `-∞`.
pub fn loglik_poisson(y: &Patch, x: &Patch, mask: Option<&Mask>) -> Result<f64> {
    check_dims(y, x)?;
    Ok(PatchLikelihood::poisson(y.values(), 1.0, mask)?.eval(x.values()))
}

/// Dispatches on `model`; `x` lives on the `reference_peak` scale.
pub fn loglik(model: &DegradationModel, y: &Patch, x: &Patch, reference_peak: f64) -> Result<f64> {
    check_dims(y, x)?;
    Ok(PatchLikelihood::for_model(model, y.values(), reference_peak)?.eval(x.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(v: &[f64]) -> Patch {
        let side = (v.len() as f64).sqrt() as usize;
        Patch::new(side, v.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_examples() {
        let y = patch(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(loglik_gaussian(&y, &y, 5.0, None).unwrap(), 0.0);

        let sigma = 7.0;
        let x = patch(&[1.0 + sigma, 2.0 - sigma, 3.0 + sigma, 4.0 - sigma]);
        assert!((loglik_gaussian(&y, &x, sigma, None).unwrap() + 2.0).abs() < 1e-12);

        let none = Mask::new(2, 2, vec![false; 4]).unwrap();
        let far = patch(&[1e3, -1e3, 5e2, 0.0]);
        assert_eq!(loglik_gaussian(&y, &far, 1.0, Some(&none)).unwrap(), 0.0);

        assert!(matches!(loglik_gaussian(&y, &y, 0.0, None), Err(Error::InvalidSigma(_))));
        assert!(matches!(loglik_gaussian(&y, &y, -1.0, None), Err(Error::InvalidSigma(_))));
    }

    #[test]
    fn poisson_examples() {
        // masked pixel contributes nothing, even with y > 0 and x = 0
        let y = patch(&[3.0, 0.0, 0.0, 0.0]);
        let x = patch(&[0.0, 1.0, 1.0, 1.0]);
        let mask = Mask::new(2, 2, vec![false, true, true, true]).unwrap();
        assert!((loglik_poisson(&y, &x, Some(&mask)).unwrap() + 3.0).abs() < 1e-12);
        assert_eq!(loglik_poisson(&y, &x, None).unwrap(), f64::NEG_INFINITY);

        let lambda = 2.5;
        let zeros = patch(&[0.0; 9]);
        let flat = patch(&[lambda; 9]);
        assert!((loglik_poisson(&zeros, &flat, None).unwrap() + 9.0 * lambda).abs() < 1e-12);

        // independent scalar evaluation: ln(2^2 e^-2) = 2 ln 2 - 2
        let scalar = (2.0f64.powi(2) * (-2.0f64).exp()).ln();
        let got = loglik_poisson(&patch(&[2.0]), &patch(&[2.0]), None).unwrap();
        assert!((got - scalar).abs() < 1e-12);
        assert!((got - (-0.61371)).abs() < 1e-5);

        assert!(loglik_poisson(&patch(&[-1.0]), &patch(&[1.0]), None).is_err());
        assert!(loglik_poisson(&patch(&[1.5]), &patch(&[1.0]), None).is_err());
        // zero mean with zero count is harmless
        assert!(loglik_poisson(&patch(&[0.0]), &patch(&[0.0]), None).unwrap().is_finite());
    }

    #[test]
    fn dispatch_examples() {
        let y = patch(&[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(loglik(&DegradationModel::Gaussian { sigma: 30.0 }, &y, &y, 255.0).unwrap(), 0.0);

        let mask = Mask::new(2, 2, vec![false; 4]).unwrap();
        let m = DegradationModel::MaskedGaussian { sigma: 1.0, mask };
        assert_eq!(loglik(&m, &y, &patch(&[0.0; 4]), 255.0).unwrap(), 0.0);

        // Poisson: dispatch rescales x from the 255 scale to the peak
        let peak = 10.0;
        let counts = patch(&[0.0, 3.0, 12.0, 7.0]);
        let clean = patch(&[12.0, 80.0, 255.0, 190.0]);
        let scaled = patch(&clean.values().iter().map(|v| v * peak / 255.0).collect::<Vec<_>>());
        let via_model = loglik(&DegradationModel::Poisson { peak }, &counts, &clean, 255.0).unwrap();
        let direct: f64 = counts
            .values()
            .iter()
            .zip(scaled.values())
            .map(|(&k, &lam)| k * lam.ln() - lam)
            .sum();
        assert!((via_model - direct).abs() < 1e-12);
        assert!((via_model - loglik_poisson(&counts, &scaled, None).unwrap()).abs() < 1e-12);

        let wrong = Mask::new(3, 3, vec![true; 9]).unwrap();
        assert!(loglik(&DegradationModel::MaskedGaussian { sigma: 1.0, mask: wrong }, &y, &y, 255.0).is_err());
    }

    proptest! {
        #[test]
        fn gaussian_is_symmetric(
            a in proptest::collection::vec(0.0f64..255.0, 9),
            b in proptest::collection::vec(0.0f64..255.0, 9),
            sigma in 0.5f64..80.0,
        ) {
            let (a, b) = (patch(&a), patch(&b));
            let ab = loglik_gaussian(&a, &b, sigma, None).unwrap();
            let ba = loglik_gaussian(&b, &a, sigma, None).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
        }

        #[test]
        fn gaussian_decreases_along_a_ray(
            y in proptest::collection::vec(0.0f64..255.0, 9),
            dir in proptest::collection::vec(-1.0f64..1.0, 9),
            t0 in 0.0f64..50.0,
            dt in 0.0f64..50.0,
            sigma in 0.5f64..80.0,
        ) {
            let y = patch(&y);
            let at = |t: f64| patch(&y.values().iter().zip(&dir).map(|(v, d)| v + t * d).collect::<Vec<_>>());
            let near = loglik_gaussian(&y, &at(t0), sigma, None).unwrap();
            let far = loglik_gaussian(&y, &at(t0 + dt), sigma, None).unwrap();
            prop_assert!(far <= near);
        }

        #[test]
        fn never_nan(
            y in proptest::collection::vec(0u32..20, 9),
            x in proptest::collection::vec(0.0f64..30.0, 9),
        ) {
            let y = patch(&y.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
            let x = patch(&x);
            prop_assert!(!loglik_poisson(&y, &x, None).unwrap().is_nan());
            prop_assert!(!loglik_gaussian(&y, &x, 1e-3, None).unwrap().is_nan());
        }
    }
}
