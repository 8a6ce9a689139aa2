//! On-disk dataset format.
//!
//! A dataset directory holds:
//! - `grid.json`: the factor grid (names, cardinalities, values, resolution).
//! - `images.bin`: 16-byte header (magic `DOTD`, version u32, N u32, H*W u32,
//!   all little-endian) followed by `N * H * W` little-endian f32 values.
//! - `factors.bin`: `N * F` little-endian u16 levels, no header.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, FactorGrid, FactoredDataset};

const MAGIC: &[u8; 4] = b"DOTD";
const VERSION: u32 = 1;

pub fn save_dataset(dir: &Path, ds: &FactoredDataset) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let grid_json = serde_json::to_string_pretty(&ds.grid)?;
    fs::write(dir.join("grid.json"), grid_json)?;

    let n = ds.num_items() as u32;
    let dim = ds.image_dim() as u32;
    let mut images = Vec::with_capacity(16 + ds.images.len() * 4);
    images.extend_from_slice(MAGIC);
    images.extend_from_slice(&VERSION.to_le_bytes());
    images.extend_from_slice(&n.to_le_bytes());
    images.extend_from_slice(&dim.to_le_bytes());
    for &v in &ds.images {
        images.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("images.bin"), images)?;

    let mut factors = Vec::with_capacity(ds.factor_indices.len() * 2);
    for &v in &ds.factor_indices {
        factors.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("factors.bin"), factors)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<FactoredDataset, DataError> {
    let grid: FactorGrid = serde_json::from_str(&fs::read_to_string(dir.join("grid.json"))?)?;
    grid.validate()?;
    let n = grid.num_items();
    let dim = grid.resolution * grid.resolution;

    let mut file = fs::File::open(dir.join("images.bin"))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(DataError::Malformed("bad magic in images.bin".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(DataError::Malformed(format!("unsupported images.bin version {version}")));
    }
    let n_file = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let dim_file = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if n_file != n || dim_file != dim {
        return Err(DataError::Malformed(format!(
            "images.bin header ({n_file} x {dim_file}) disagrees with grid ({n} x {dim})"
        )));
    }
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != n * dim * 4 {
        return Err(DataError::Malformed(format!(
            "images.bin payload has {} bytes, expected {}",
            raw.len(),
            n * dim * 4
        )));
    }
    let images: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let raw = fs::read(dir.join("factors.bin"))?;
    let f = grid.num_factors();
    if raw.len() != n * f * 2 {
        return Err(DataError::Malformed(format!(
            "factors.bin has {} bytes, expected {}",
            raw.len(),
            n * f * 2
        )));
    }
    let factor_indices: Vec<u16> = raw
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
        .collect();

    Ok(FactoredDataset { grid, images, factor_indices })
}

/// Write `bytes` to `path` atomically (temp file in the same directory, then
/// rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
