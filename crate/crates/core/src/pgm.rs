//! Binary PGM (P5, maxval 255) images.
//!
//! Images whose peak differs from 255 carry a sidecar `<file>.peak` of
//! `key=value` lines: `peak=<float>` and `scale=<float>`, the value of one
//! grey level. Scale defaults to `peak/255`; integer-valued images that fit
//! in a byte (photon counts) are written with scale 1 so they survive
//! unchanged.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{Image, Mask};

const MAXVAL: f64 = 255.0;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".peak");
    PathBuf::from(s)
}

fn token(r: &mut impl BufRead) -> Result<String> {
    let mut out = Vec::new();
    loop {
        let mut b = [0u8];
        if r.read(&mut b)? == 0 {
            break;
        }
        match b[0] {
            b'#' if out.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            }
            c if c.is_ascii_whitespace() => {
                if !out.is_empty() {
                    break;
                }
            }
            c => out.push(c),
        }
    }
    if out.is_empty() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    String::from_utf8(out).map_err(|_| Error::Format("non-ASCII PGM header".into()))
}

fn number(r: &mut impl BufRead, what: &str) -> Result<usize> {
    let t = token(r)?;
    t.parse().map_err(|_| Error::Format(format!("bad PGM {what}: {t:?}")))
}

/// Decodes raw P5 bytes into `(width, height, samples)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = BufReader::new(bytes);
    if token(&mut r)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let width = number(&mut r, "width")?;
    let height = number(&mut r, "height")?;
    let maxval = number(&mut r, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let mut data = Vec::with_capacity(width * height);
    r.read_to_end(&mut data)?;
    if data.len() < width * height {
        return Err(Error::Format(format!("expected {} pixels, found {}", width * height, data.len())));
    }
    data.truncate(width * height);
    Ok((width, height, data))
}

pub fn encode(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// `(peak, scale)` from the sidecar, if there is one.
fn read_sidecar(path: &Path) -> Result<Option<(f64, f64)>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let (mut peak, mut scale) = (None, None);
    for line in fs::read_to_string(&side)?.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let parse = || -> Result<f64> {
            v.trim().parse().map_err(|_| Error::Format(format!("{}: bad value {v:?}", side.display())))
        };
        match k.trim() {
            "peak" => peak = Some(parse()?),
            "scale" => scale = Some(parse()?),
            _ => {}
        }
    }
    let peak: f64 = peak.ok_or_else(|| Error::Format(format!("{}: no peak entry", side.display())))?;
    Ok(Some((peak, scale.unwrap_or(peak / MAXVAL))))
}

/// Reads an image, applying the sidecar if present.
pub fn read_image(path: &Path) -> Result<Image> {
    let (w, h, data) = decode(&fs::read(path)?).map_err(|e| annotate(e, path))?;
    let (peak, scale) = read_sidecar(path)?.unwrap_or((MAXVAL, 1.0));
    Image::new(w, h, peak, data.iter().map(|&v| f64::from(v) * scale).collect())
}

/// Grey-level size used when writing `image`.
pub fn storage_scale(image: &Image) -> f64 {
    let counts = image.pixels().iter().all(|&v| v.fract() == 0.0 && (0.0..=MAXVAL).contains(&v));
    if image.peak() == MAXVAL || counts {
        1.0
    } else {
        image.peak() / MAXVAL
    }
}

/// Quantises to 8 bits at the given grey-level size, clamping to 0..=255.
pub fn quantize(image: &Image, scale: f64) -> Vec<u8> {
    image.pixels().iter().map(|&v| (v / scale).round().clamp(0.0, MAXVAL) as u8).collect()
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let scale = storage_scale(image);
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(image.width(), image.height(), &quantize(image, scale)))?;
    let side = sidecar_path(path);
    if image.peak() != MAXVAL {
        fs::write(side, format!("peak={}\nscale={}\n", image.peak(), scale))?;
    } else if side.exists() {
        fs::remove_file(side)?;
    }
    Ok(())
}

/// Reads a mask file; pixels above zero are observed.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let (w, h, data) = decode(&fs::read(path)?).map_err(|e| annotate(e, path))?;
    Mask::new(w, h, data.iter().map(|&v| v > 0).collect())
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let data: Vec<u8> = mask.observed().iter().map(|&o| if o { 255 } else { 0 }).collect();
    fs::write(path, encode(mask.width(), mask.height(), &data))?;
    Ok(())
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 255]);
        let (w, h, d) = decode(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(d, vec![0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image::new(2, 2, 10.0, vec![0.0, 2.5, 4.0, 10.0]).unwrap();
        write_image(&path, &img).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = read_image(&path).unwrap();
        assert_eq!(back.peak(), 10.0);
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() <= 10.0 / 255.0);
        }

        let counts = Image::new(3, 1, 2.0, vec![0.0, 7.0, 30.0]).unwrap();
        write_image(&path, &counts).unwrap();
        assert_eq!(read_image(&path).unwrap(), counts);

        let plain = Image::new(2, 1, 255.0, vec![3.0, 250.0]).unwrap();
        write_image(&path, &plain).unwrap();
        assert!(!sidecar_path(&path).exists());
        assert_eq!(read_image(&path).unwrap(), plain);
    }

    #[test]
    fn mask_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        fs::write(&path, encode(3, 1, &[0, 1, 200])).unwrap();
        assert_eq!(read_mask(&path).unwrap().observed(), &[false, true, true]);
    }
}
