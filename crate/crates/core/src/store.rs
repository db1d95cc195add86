//! Little-endian binary files for datasets, cluster models and benchmark
//! patch sets.
//!
//! | file      | layout                                                              |
//! |-----------|---------------------------------------------------------------------|
//! | `SNPD` v1 | n u32, count u64, count×n f32                                       |
//! | `SNCM` v1 | K u32, n u32, count u64, count u32 labels, K f64 masses, K×n f32    |
//! | `SNPS` v1 | n u32, count u64, count × (n f32 observed, n f32 clean)             |

use std::fs;
use std::path::Path;

use crate::cluster::ClusterModel;
use crate::dataset::{PatchDataset, DEFAULT_PEAK};
use crate::error::{Error, Result};

const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != magic {
            return Err(Error::Format(format!("missing {} magic", String::from_utf8_lossy(magic))));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Byte length of `count` records of `width` bytes, if they fit.
    fn len(&self, count: u64, width: usize) -> Result<usize> {
        usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(width))
            .filter(|&b| b <= self.bytes.len() - self.at)
            .ok_or_else(|| Error::Format("declared size exceeds file".into()))
    }

    fn f32s(&mut self, count: u64, per: usize) -> Result<Vec<f32>> {
        let n = self.len(count, per * 4)?;
        Ok(self.take(n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    out
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn side_of(n: u32) -> Result<usize> {
    let side = (f64::from(n)).sqrt().round() as usize;
    if side * side != n as usize || side % 2 == 0 {
        return Err(Error::Format(format!("patch dimension {n} is not an odd square")));
    }
    Ok(side)
}

pub fn encode_dataset(ds: &PatchDataset) -> Vec<u8> {
    let mut out = header(b"SNPD");
    out.extend_from_slice(&(ds.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.count() as u64).to_le_bytes());
    put_f32s(&mut out, ds.raw());
    out
}

/// The format has no intensity field; loaded datasets use the 8-bit peak.
pub fn decode_dataset(bytes: &[u8]) -> Result<PatchDataset> {
    let mut r = Reader::new(bytes, b"SNPD")?;
    let n = r.u32()?;
    let count = r.u64()?;
    let side = side_of(n)?;
    let data = r.f32s(count, n as usize)?;
    r.finish()?;
    PatchDataset::from_raw(side, DEFAULT_PEAK, data)
}

pub fn encode_clusters(cm: &ClusterModel) -> Vec<u8> {
    let mut out = header(b"SNCM");
    out.extend_from_slice(&(cm.k() as u32).to_le_bytes());
    out.extend_from_slice(&(cm.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(cm.count() as u64).to_le_bytes());
    for a in cm.assignment() {
        out.extend_from_slice(&a.to_le_bytes());
    }
    for m in cm.mass() {
        out.extend_from_slice(&m.to_le_bytes());
    }
    put_f32s(&mut out, cm.centroids());
    out
}

/// Masses are recomputed from the labels and must agree with the stored ones.
pub fn decode_clusters(bytes: &[u8]) -> Result<ClusterModel> {
    let mut r = Reader::new(bytes, b"SNCM")?;
    let k = r.u32()? as usize;
    let n = r.u32()? as usize;
    let count = r.u64()?;
    let labels_len = r.len(count, 4)?;
    let assignment: Vec<u32> =
        r.take(labels_len)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let masses_len = r.len(k as u64, 8)?;
    let masses: Vec<f64> =
        r.take(masses_len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let centroids = r.f32s(k as u64, n)?;
    r.finish()?;
    let cm = ClusterModel::from_assignment(k, n, assignment, centroids)?;
    if cm.mass().iter().zip(&masses).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Format("stored masses disagree with the cluster labels".into()));
    }
    Ok(cm)
}

/// Observed patches paired with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub side: usize,
    pub observed: Vec<Vec<f64>>,
    pub clean: Vec<Vec<f64>>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

pub fn encode_patch_set(set: &PatchSet) -> Vec<u8> {
    let n = set.side * set.side;
    let mut out = header(b"SNPS");
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    for (o, c) in set.observed.iter().zip(&set.clean) {
        for v in o.iter().chain(c) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_patch_set(bytes: &[u8]) -> Result<PatchSet> {
    let mut r = Reader::new(bytes, b"SNPS")?;
    let n = r.u32()?;
    let count = r.u64()?;
    let side = side_of(n)?;
    let n = n as usize;
    let values = r.f32s(count, 2 * n)?;
    r.finish()?;
    let (mut observed, mut clean) = (Vec::new(), Vec::new());
    for pair in values.chunks_exact(2 * n) {
        observed.push(pair[..n].iter().map(|&v| f64::from(v)).collect());
        clean.push(pair[n..].iter().map(|&v| f64::from(v)).collect());
    }
    Ok(PatchSet { side, observed, clean })
}

macro_rules! file_io {
    ($save:ident, $load:ident, $ty:ty, $enc:ident, $dec:ident) => {
        pub fn $save(path: &Path, value: &$ty) -> Result<()> {
            fs::write(path, $enc(value))?;
            Ok(())
        }

        pub fn $load(path: &Path) -> Result<$ty> {
            $dec(&fs::read(path)?).map_err(|e| match e {
                Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
                other => other,
            })
        }
    };
}

file_io!(save_dataset, load_dataset, PatchDataset, encode_dataset, decode_dataset);
file_io!(save_clusters, load_clusters, ClusterModel, encode_clusters, decode_clusters);
file_io!(save_patch_set, load_patch_set, PatchSet, encode_patch_set, decode_patch_set);
