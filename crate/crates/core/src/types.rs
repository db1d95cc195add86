//! Value types shared by every stage of the restoration pipeline.
//!
//! All of these are immutable once built and can be shared freely across
//! worker threads.

use crate::error::{Error, Result};

/// Grayscale image with real-valued, row-major intensities.
///
/// `peak` is the nominal maximum intensity: 255 for 8-bit data, or the
/// Poisson peak for photon-limited observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    peak: f64,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, peak: f64, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-sized image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, found: pixels.len() });
        }
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::InvalidImage(format!("peak must be positive and finite, got {peak}")));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite pixel value {bad}")));
        }
        Ok(Self { width, height, peak, pixels })
    }

    pub fn filled(width: usize, height: usize, peak: f64, value: f64) -> Result<Self> {
        Self::new(width, height, peak, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Copies the `side`×`side` window whose top-left corner is `(row, col)`.
    pub fn patch_at(&self, row: usize, col: usize, side: usize) -> Patch {
        let mut values = Vec::with_capacity(side * side);
        for r in row..row + side {
            let start = r * self.width + col;
            values.extend_from_slice(&self.pixels[start..start + side]);
        }
        Patch { side, values }
    }

    /// Same pixels expressed on a different nominal peak.
    pub fn rescaled(&self, new_peak: f64) -> Result<Self> {
        let factor = new_peak / self.peak;
        Self::new(
            self.width,
            self.height,
            new_peak,
            self.pixels.iter().map(|v| v * factor).collect(),
        )
    }

    /// Mirror-pads (without repeating the edge pixel) by `pad` on every side.
    pub(crate) fn mirror_padded(&self, pad: usize) -> Self {
        let (width, height, pixels) = mirror_pad(&self.pixels, self.width, self.height, pad);
        Self { width, height, peak: self.peak, pixels }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m >= n { period - m } else { m }) as usize
}

fn mirror_pad<T: Copy>(src: &[T], width: usize, height: usize, pad: usize) -> (usize, usize, Vec<T>) {
    let w = width + 2 * pad;
    let h = height + 2 * pad;
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let sr = reflect(r as isize - pad as isize, height);
        for c in 0..w {
            let sc = reflect(c as isize - pad as isize, width);
            out.push(src[sr * width + sc]);
        }
    }
    (w, h, out)
}

/// Square patch of `side`² intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    side: usize,
    values: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidConfig("patch side must be at least 1".into()));
        }
        if values.len() != side * side {
            return Err(Error::DimensionMismatch { expected: side * side, found: values.len() });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite patch value {bad}")));
        }
        Ok(Self { side, values })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn central(&self) -> f64 {
        self.values[central_index(self.side)]
    }

    /// Little-endian encoding: side as u32, then each value as f64.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.values.len());
        out.extend_from_slice(&(self.side as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        let head: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Format("patch record shorter than its header".into()))?;
        let side = u32::from_le_bytes(head) as usize;
        let body = &bytes[4..];
        if body.len() != 8 * side * side {
            return Err(Error::Format(format!(
                "patch of side {side} needs {} value bytes, found {}",
                8 * side * side,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(side, values)
    }
}

/// Index of the central pixel of an odd-sided, row-major patch.
pub const fn central_index(side: usize) -> usize {
    (side * side - 1) / 2
}

/// Per-pixel observation mask: `true` where the pixel was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    observed: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, found: observed.len() });
        }
        Ok(Self { width, height, observed })
    }

    pub fn all_observed(width: usize, height: usize) -> Self {
        Self { width, height, observed: vec![true; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_fraction(&self) -> f64 {
        self.observed.iter().filter(|&&o| o).count() as f64 / self.observed.len() as f64
    }

    pub(crate) fn mirror_padded(&self, pad: usize) -> Self {
        let (width, height, observed) = mirror_pad(&self.observed, self.width, self.height, pad);
        Self { width, height, observed }
    }

    pub(crate) fn patch_at(&self, row: usize, col: usize, side: usize) -> Mask {
        let mut observed = Vec::with_capacity(side * side);
        for r in row..row + side {
            let start = r * self.width + col;
            observed.extend_from_slice(&self.observed[start..start + side]);
        }
        Mask { width: side, height: side, observed }
    }
}

/// Forward model relating a clean signal to its observation.
///
/// Masks are diagonal observation operators: a masked pixel carries no
/// information about the clean signal.
#[derive(Debug, Clone, PartialEq)]
pub enum DegradationModel {
    Gaussian { sigma: f64 },
    Poisson { peak: f64 },
    MaskedGaussian { sigma: f64, mask: Mask },
    MaskedPoisson { peak: f64, mask: Mask },
}

impl DegradationModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { sigma } | Self::MaskedGaussian { sigma, .. } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidSigma(*sigma));
                }
            }
            Self::Poisson { peak } | Self::MaskedPoisson { peak, .. } => {
                if !(*peak > 0.0 && peak.is_finite()) {
                    return Err(Error::InvalidConfig(format!("Poisson peak must be positive, got {peak}")));
                }
            }
        }
        Ok(())
    }

    pub fn mask(&self) -> Option<&Mask> {
        match self {
            Self::MaskedGaussian { mask, .. } | Self::MaskedPoisson { mask, .. } => Some(mask),
            _ => None,
        }
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self, Self::Poisson { .. } | Self::MaskedPoisson { .. })
    }

    /// Copy of this model with any mask cropped to one patch window.
    pub(crate) fn for_patch(&self, row: usize, col: usize, side: usize) -> Self {
        match self {
            Self::Gaussian { sigma } => Self::Gaussian { sigma: *sigma },
            Self::Poisson { peak } => Self::Poisson { peak: *peak },
            Self::MaskedGaussian { sigma, mask } => {
                Self::MaskedGaussian { sigma: *sigma, mask: mask.patch_at(row, col, side) }
            }
            Self::MaskedPoisson { peak, mask } => {
                Self::MaskedPoisson { peak: *peak, mask: mask.patch_at(row, col, side) }
            }
        }
    }

    pub(crate) fn mirror_padded(&self, pad: usize) -> Self {
        match self {
            Self::MaskedGaussian { sigma, mask } => {
                Self::MaskedGaussian { sigma: *sigma, mask: mask.mirror_padded(pad) }
            }
            Self::MaskedPoisson { peak, mask } => {
                Self::MaskedPoisson { peak: *peak, mask: mask.mirror_padded(pad) }
            }
            other => other.clone(),
        }
    }

    pub(crate) fn with_sigma(&self, sigma: f64) -> Self {
        match self {
            Self::Gaussian { .. } => Self::Gaussian { sigma },
            Self::MaskedGaussian { mask, .. } => Self::MaskedGaussian { sigma, mask: mask.clone() },
            other => other.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gaussian { sigma } => format!("gaussian:{sigma}"),
            Self::Poisson { peak } => format!("poisson:{peak}"),
            Self::MaskedGaussian { sigma, mask } => {
                format!("inpaint:{sigma} (observed {:.3})", mask.observed_fraction())
            }
            Self::MaskedPoisson { peak, mask } => {
                format!("poisson-inpaint:{peak} (observed {:.3})", mask.observed_fraction())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    /// Estimate only the central pixel of each patch (stride forced to 1).
    CentralPixel,
    /// Estimate every pixel of each patch and average overlaps.
    WholePatch,
}

impl EstimationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CentralPixel => "central",
            Self::WholePatch => "whole",
        }
    }
}

/// Knobs of the restoration algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationConfig {
    pub patch_side: usize,
    pub stride: usize,
    pub clusters: usize,
    /// Uniform samples drawn per iteration to fit the proposal weights.
    pub alpha_samples: usize,
    /// Proposal samples drawn per iteration for the estimate itself.
    pub estimate_samples: usize,
    pub iterations: usize,
    pub mode: EstimationMode,
    pub seed: u64,
    pub sigma_escalation_factor: f64,
    /// Starting sigma for noiseless inpainting, on the 0-255 scale.
    pub sigma_init: f64,
}

impl Default for RestorationConfig {
    fn default() -> Self {
        Self {
            patch_side: 9,
            stride: 2,
            clusters: 20,
            alpha_samples: 900,
            estimate_samples: 300,
            iterations: 3,
            mode: EstimationMode::WholePatch,
            seed: 0,
            sigma_escalation_factor: 2.0,
            sigma_init: 1.0,
        }
    }
}

impl RestorationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.patch_side % 2 == 0 {
            return bad(format!("patch side must be odd, got {}", self.patch_side));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.clusters == 0 {
            return bad("cluster count must be at least 1".into());
        }
        if self.alpha_samples < self.clusters {
            return bad(format!(
                "alpha samples ({}) must be at least the cluster count ({})",
                self.alpha_samples, self.clusters
            ));
        }
        if self.estimate_samples == 0 {
            return bad("estimate samples must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.sigma_escalation_factor > 1.0 && self.sigma_escalation_factor.is_finite()) {
            return bad(format!(
                "sigma escalation factor must exceed 1, got {}",
                self.sigma_escalation_factor
            ));
        }
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return bad(format!("initial sigma must be positive, got {}", self.sigma_init));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn central_index_examples() {
        assert_eq!(central_index(3), 4);
        assert_eq!(central_index(1), 0);
        assert_eq!(central_index(9), 40);
    }

    #[test]
    fn central_index_matches_row_col_form() {
        for s in (1..=15).step_by(2) {
            assert_eq!(central_index(s), s * (s / 2) + s / 2, "side {s}");
        }
    }

    #[test]
    fn even_side_rejected() {
        let cfg = RestorationConfig { patch_side: 8, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn config_invariants() {
        assert!(RestorationConfig::default().validate().is_ok());
        let cases = [
            RestorationConfig { stride: 0, ..Default::default() },
            RestorationConfig { clusters: 0, ..Default::default() },
            RestorationConfig { alpha_samples: 10, clusters: 11, ..Default::default() },
            RestorationConfig { estimate_samples: 0, ..Default::default() },
            RestorationConfig { iterations: 0, ..Default::default() },
            RestorationConfig { sigma_escalation_factor: 1.0, ..Default::default() },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn image_rejects_bad_input() {
        assert!(Image::new(2, 2, 255.0, vec![0.0; 3]).is_err());
        assert!(Image::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(Image::new(2, 2, 255.0, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn mirror_padding_reflects() {
        let img = Image::new(3, 1, 255.0, vec![1.0, 2.0, 3.0]).unwrap();
        let p = img.mirror_padded(2);
        assert_eq!(p.width(), 7);
        assert_eq!(p.height(), 5);
        let row: Vec<f64> = (0..7).map(|c| p.get(2, c)).collect();
        assert_eq!(row, vec![3.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn degradation_model_validation() {
        assert!(DegradationModel::Gaussian { sigma: -1.0 }.validate().is_err());
        assert!(DegradationModel::Poisson { peak: 0.0 }.validate().is_err());
        assert!(DegradationModel::Gaussian { sigma: 0.0 }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn patch_bytes_round_trip(
            half in 0usize..5,
            seed in proptest::collection::vec(-1e6f64..1e6, 81),
        ) {
            let side = 2 * half + 1;
            let values: Vec<f64> = seed.iter().copied().take(side * side).collect();
            let p = Patch::new(side, values).unwrap();
            let back = Patch::from_le_bytes(&p.to_le_bytes()).unwrap();
            prop_assert_eq!(
                back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back.side(), side);
        }
    }
}
