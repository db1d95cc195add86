//! Deterministic synthetic corpora: rendered digit-like glyphs on a dark
//! background, smooth textures, and random observation masks.

use rand::Rng;

use crate::rng::{derive_seed, seeded};
use crate::types::{Image, Mask};

/// Seven-segment endpoints in a unit box (x right, y down).
const SEGMENTS: [[(f64, f64); 2]; 7] = [
    [(0.0, 0.0), (1.0, 0.0)], // top
    [(1.0, 0.0), (1.0, 0.5)], // upper right
    [(1.0, 0.5), (1.0, 1.0)], // lower right
    [(0.0, 1.0), (1.0, 1.0)], // bottom
    [(0.0, 0.5), (0.0, 1.0)], // lower left
    [(0.0, 0.0), (0.0, 0.5)], // upper left
    [(0.0, 0.5), (1.0, 0.5)], // middle
];

/// Segment bitmasks of the ten digits.
const DIGITS: [u8; 10] = [
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110, 0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub width: usize,
    pub height: usize,
    /// Side of the square cell holding one glyph.
    pub cell: usize,
    pub train_images: usize,
    pub test_images: usize,
    pub peak: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { width: 64, height: 64, cell: 32, train_images: 40, test_images: 5, peak: 255.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Image>,
    pub test: Vec<Image>,
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Draws one jittered glyph into `pixels` inside the cell at `(x0, y0)`.
fn draw_glyph(pixels: &mut [f64], width: usize, x0: usize, y0: usize, cell: usize, peak: f64, rng: &mut impl Rng) {
    let digit = DIGITS[rng.random_range(0..DIGITS.len())];
    let c = cell as f64;
    let gw = c * rng.random_range(0.35..0.5);
    let gh = c * rng.random_range(0.55..0.7);
    let slant = rng.random_range(-0.25..0.25);
    let half = rng.random_range(1.2..2.0);
    let ink = peak * rng.random_range(0.75..1.0);
    let ox = x0 as f64 + (c - gw) / 2.0 + rng.random_range(-2.0..2.0);
    let oy = y0 as f64 + (c - gh) / 2.0 + rng.random_range(-2.0..2.0);
    let mut jitter = |(u, v): (f64, f64)| {
        let u = u + rng.random_range(-0.06..0.06);
        let v = v + rng.random_range(-0.04..0.04);
        (ox + u * gw + slant * (0.5 - v) * gh, oy + v * gh)
    };
    let strokes: Vec<((f64, f64), (f64, f64))> = SEGMENTS
        .iter()
        .enumerate()
        .filter(|(i, _)| digit >> i & 1 == 1)
        .map(|(_, [a, b])| (jitter(*a), jitter(*b)))
        .collect();
    let height = pixels.len() / width;
    for row in y0..(y0 + cell).min(height) {
        for col in x0..(x0 + cell).min(width) {
            let p = (col as f64 + 0.5, row as f64 + 0.5);
            let d = strokes.iter().map(|&(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min);
            let cover = (half + 0.5 - d).clamp(0.0, 1.0);
            let v = &mut pixels[row * width + col];
            *v = v.max(ink * cover);
        }
    }
}

/// Renders one image: a grid of glyphs, one per cell.
pub fn glyph_image(spec: &CorpusSpec, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let mut pixels = vec![0.0; spec.width * spec.height];
    for y0 in (0..spec.height).step_by(spec.cell) {
        for x0 in (0..spec.width).step_by(spec.cell) {
            draw_glyph(&mut pixels, spec.width, x0, y0, spec.cell, spec.peak, &mut rng);
        }
    }
    Image::new(spec.width, spec.height, spec.peak, pixels).expect("rendered pixels are finite")
}

/// Disjoint train and test images; identical for identical arguments.
pub fn glyph_corpus(spec: &CorpusSpec, seed: u64) -> Corpus {
    let render = |set: u64, count: usize| (0..count).map(|i| glyph_image(spec, derive_seed(seed, &[set, i as u64]))).collect();
    Corpus { train: render(0, spec.train_images), test: render(1, spec.test_images) }
}

/// Smooth grey-level texture: a sum of random plane waves with periods of
/// 6 to 40 pixels, stretched to `[0.06, 0.94]·peak`. Unlike glyphs, nearly
/// every pixel carries information, so a handful of observed pixels pins a
/// patch down.
pub fn texture_image(width: usize, height: usize, peak: f64, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            let period = rng.random_range(6.0..40.0);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let k = std::f64::consts::TAU / period;
            (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.3..1.0))
        })
        .collect();
    let raw: Vec<f64> = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            waves.iter().map(|&(kx, ky, phase, amp)| amp * (kx * x + ky * y + phase).cos()).sum()
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = raw.iter().map(|v| peak * (0.06 + 0.88 * (v - lo) / span)).collect();
    Image::new(width, height, peak, pixels).expect("texture pixels are finite")
}

/// Each pixel is observed independently with probability `fraction`.
pub fn random_mask(width: usize, height: usize, fraction: f64, rng: &mut impl Rng) -> Mask {
    Mask::new(width, height, (0..width * height).map(|_| rng.random_bool(fraction.clamp(0.0, 1.0))).collect())
        .expect("dimensions match")
}
