//! Raw dense-matrix files: `rows: u64 LE`, `cols: u64 LE`, then
//! `rows * cols` little-endian `f64` values in column-major order.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ttnn::DMatrix;

/// Refuse headers that would allocate more than 1 GiB of doubles.
const MAX_ELEMENTS: u64 = 1 << 27;

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_matrix(&bytes).with_context(|| format!("in matrix file {}", path.display()))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 16 {
        bail!("file too short for the 16-byte header ({} bytes)", bytes.len());
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let elements = rows
        .checked_mul(cols)
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| anyhow::anyhow!("header declares an oversized {rows} x {cols} matrix"))?;
    let expected = 16 + elements * 8;
    if bytes.len() as u64 != expected {
        bail!(
            "expected {expected} bytes for a {rows} x {cols} matrix, file has {}",
            bytes.len()
        );
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_vec(rows as usize, cols as usize, data))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + m.len() * 8);
    bytes.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for value in m.iter() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trips_through_a_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.mat");
        let m = DMatrix::from_fn(3, 5, |i, j| (i * 10 + j) as f64 - 7.5);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_short_truncated_and_oversized() {
        assert!(decode_matrix(&[0u8; 15]).is_err());
        let m = DMatrix::<f64>::from_element(2, 2, 1.0);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for &v in m.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(decode_matrix(&bytes).is_ok());
        assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
        let mut huge = bytes.clone();
        huge[0..8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_matrix(&huge).is_err());
    }
}
