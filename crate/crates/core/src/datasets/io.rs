//! `FDS1` dataset files.
//!
//! Layout (little-endian): magic `FDS1`, version `u32`, image side `u32`,
//! row count `u64`, factor count `u32`, then per factor a `u32` name length,
//! the UTF-8 name and a `u32` cardinality; then all labels as `u16` row-major
//! and all pixels as `f32` row-major.

use std::fs;
use std::path::Path;

use super::{FactorDataset, FactorSpec};
use crate::binio::{Reader, WriteLe};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"FDS1";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(ds: &FactorDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + ds.factors.len() * 2 + ds.images.len() * 4);
    out.extend_from_slice(DATASET_MAGIC);
    out.put_u32(DATASET_VERSION);
    out.put_u32(ds.image_side as u32);
    out.put_u64(ds.len() as u64);
    out.put_u32(ds.n_factors() as u32);
    for spec in &ds.specs {
        out.put_u32(spec.name.len() as u32);
        out.extend_from_slice(spec.name.as_bytes());
        out.put_u32(spec.cardinality as u32);
    }
    for &v in &ds.factors {
        out.put_u16(v);
    }
    for &p in &ds.images {
        out.put_f32(p);
    }
    out
}

pub fn read_dataset(bytes: &[u8]) -> Result<FactorDataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "dataset",
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let side = r.u32("image side")? as usize;
    let n = r.u64("row count")? as usize;
    let f = r.u32("factor count")? as usize;
    let mut specs = Vec::with_capacity(f.min(64));
    for _ in 0..f {
        let len = r.u32("factor name length")? as usize;
        let name = match std::str::from_utf8(r.take(len, "factor name")?) {
            Ok(s) => s.to_owned(),
            Err(_) => return r.fail("factor name is not UTF-8"),
        };
        let cardinality = r.u32("cardinality")? as usize;
        if cardinality == 0 {
            return r.fail(format!("factor {name} has cardinality 0"));
        }
        specs.push(FactorSpec { name, cardinality });
    }
    let n_labels = n.checked_mul(f).unwrap_or(usize::MAX);
    let label_bytes = r.take(n_labels.saturating_mul(2), "labels")?;
    let factors: Vec<u16> = label_bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let n_pixels = n.checked_mul(side * side).unwrap_or(usize::MAX);
    let pixel_bytes = r.take(n_pixels.saturating_mul(4), "pixels")?;
    let images: Vec<f32> = pixel_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.finish()?;
    FactorDataset::new(side, images, factors, specs)
}

pub fn save_dataset(ds: &FactorDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_dataset(ds))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<FactorDataset> {
    read_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_toy_dataset, ToyConfig, Variant};

    fn small() -> FactorDataset {
        let mut cfg = ToyConfig::desk(Variant::Xycs);
        cfg.grid = 3;
        cfg.image_side = 16;
        cfg.object_radius = 2;
        generate_toy_dataset(&cfg).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.fds");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.factor_names(), vec!["x", "y", "color", "shape"]);
        assert_eq!(back.cardinalities(), vec![3, 3, 5, 3]);
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = write_dataset(&small());
        for cut in [2, 10, 30, bytes.len() - 1] {
            match read_dataset(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = write_dataset(&small());
        bytes[0] = b'X';
        assert!(matches!(read_dataset(&bytes), Err(Error::Format { offset: 0, .. })));
        let mut bytes = write_dataset(&small());
        bytes[4] = 9;
        assert!(matches!(
            read_dataset(&bytes),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
    }
}
