//! External corpus of clean patches.

use crate::error::{Error, Result};
use crate::types::{Image, Patch};

/// Flat, row-major store of clean `side`×`side` patches.
///
/// `peak` is the nominal intensity scale of the source images; Poisson
/// likelihoods rescale patches from this scale to the observation's peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    side: usize,
    peak: f64,
    data: Vec<f32>,
}

/// Conventional nominal peak for 8-bit corpora.
pub const DEFAULT_PEAK: f64 = 255.0;

impl PatchDataset {
    /// Wraps raw row-major patch data. `data.len()` must be a non-zero
    /// multiple of `side * side`.
    pub fn from_raw(side: usize, peak: f64, data: Vec<f32>) -> Result<Self> {
        let n = side * side;
        if n == 0 {
            return Err(Error::InvalidConfig("patch side must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyInput("patch dataset"));
        }
        if data.len() % n != 0 {
            return Err(Error::DimensionMismatch { expected: n, found: data.len() % n });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("dataset contains non-finite values".into()));
        }
        Ok(Self { side, peak, data })
    }

    pub fn from_patches(peak: f64, patches: &[Patch]) -> Result<Self> {
        let first = patches.first().ok_or(Error::EmptyInput("patch list"))?;
        let side = first.side();
        let mut data = Vec::with_capacity(patches.len() * side * side);
        for p in patches {
            if p.side() != side {
                return Err(Error::DimensionMismatch { expected: side, found: p.side() });
            }
            data.extend(p.values().iter().map(|&v| v as f32));
        }
        Self::from_raw(side, peak, data)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Patch dimensionality n = side².
    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn patch(&self, index: usize) -> &[f32] {
        let n = self.dim();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn patch_owned(&self, index: usize) -> Patch {
        Patch::new(self.side, self.patch(index).iter().map(|&v| f64::from(v)).collect())
            .expect("dataset rows are validated on construction")
    }
}

/// Top-left offsets along one axis of length `len`: every multiple of
/// `stride`, plus `len - side` so the far edge is always covered.
pub fn axis_offsets(len: usize, side: usize, stride: usize) -> Vec<usize> {
    debug_assert!(side <= len && stride >= 1);
    let last = len - side;
    let mut offsets: Vec<usize> = (0..=last).step_by(stride).collect();
    if offsets.last() != Some(&last) {
        offsets.push(last);
    }
    offsets
}

/// Patch located at a top-left `(row, col)` offset of its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSite {
    pub row: usize,
    pub col: usize,
    pub patch: Patch,
}

/// Overlapping patches in row-major offset order.
pub fn extract_patches(image: &Image, side: usize, stride: usize) -> Result<Vec<PatchSite>> {
    if side == 0 || stride == 0 {
        return Err(Error::InvalidConfig("patch side and stride must be at least 1".into()));
    }
    if side > image.width() || side > image.height() {
        return Err(Error::PatchTooLarge { side, width: image.width(), height: image.height() });
    }
    let rows = axis_offsets(image.height(), side, stride);
    let cols = axis_offsets(image.width(), side, stride);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &row in &rows {
        for &col in &cols {
            out.push(PatchSite { row, col, patch: image.patch_at(row, col, side) });
        }
    }
    Ok(out)
}

/// Concatenates the patches of every image, in input order.
///
/// Images whose peak differs from the first one are rescaled to it.
pub fn build_dataset(images: &[Image], side: usize, stride: usize) -> Result<PatchDataset> {
    let first = images.first().ok_or(Error::EmptyInput("image list"))?;
    let peak = first.peak();
    let mut data = Vec::new();
    for image in images {
        let scaled;
        let image = if image.peak() == peak {
            image
        } else {
            scaled = image.rescaled(peak)?;
            &scaled
        };
        for site in extract_patches(image, side, stride)? {
            data.extend(site.patch.values().iter().map(|&v| v as f32));
        }
    }
    PatchDataset::from_raw(side, peak, data)
}
