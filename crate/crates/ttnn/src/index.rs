//! Multi-index bijections and factored matrix shapes.
//!
//! Flat indices are mapped to multi-indices in column-major order: the first
//! mode varies fastest, so `flat = i_0 + n_0*i_1 + n_0*n_1*i_2 + ...`. All
//! indices are 0-based.

use crate::error::{Error, Result};

/// Column-major bijection between flat indices and multi-indices over a box
/// of extents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexMap {
    modes: Vec<usize>,
}

impl MultiIndexMap {
    pub fn new(modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("multi-index map needs at least one mode"));
        }
        if modes.contains(&0) {
            return Err(Error::invalid("mode extents must be positive"));
        }
        Ok(MultiIndexMap {
            modes: modes.to_vec(),
        })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn ndim(&self) -> usize {
        self.modes.len()
    }

    /// Total number of points in the box.
    pub fn len(&self) -> usize {
        self.modes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false // extents are positive by construction
    }

    /// Column-major flat index of `idx`.
    pub fn multi_to_flat(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.modes.len() {
            return Err(Error::shape(format!(
                "expected {} indices, got {}",
                self.modes.len(),
                idx.len()
            )));
        }
        let mut flat = 0;
        let mut stride = 1;
        for (dim, (&i, &n)) in idx.iter().zip(&self.modes).enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    dim,
                    index: i,
                    extent: n,
                });
            }
            flat += i * stride;
            stride *= n;
        }
        Ok(flat)
    }

    /// Inverse of [`multi_to_flat`](Self::multi_to_flat).
    pub fn flat_to_multi(&self, flat: usize) -> Result<Vec<usize>> {
        let total = self.len();
        if flat >= total {
            return Err(Error::IndexOutOfRange {
                dim: 0,
                index: flat,
                extent: total,
            });
        }
        let mut rem = flat;
        let mut idx = Vec::with_capacity(self.modes.len());
        for &n in &self.modes {
            idx.push(rem % n);
            rem /= n;
        }
        Ok(idx)
    }
}

/// Factored shape of a TT-matrix: row extent `M = prod(m_k)` and column
/// extent `N = prod(n_k)`, with matching factor counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapePair {
    row_modes: Vec<usize>,
    col_modes: Vec<usize>,
}

impl ShapePair {
    pub fn new(row_modes: &[usize], col_modes: &[usize]) -> Result<Self> {
        if row_modes.len() != col_modes.len() {
            return Err(Error::shape(format!(
                "row factors ({}) and column factors ({}) must have the same length",
                row_modes.len(),
                col_modes.len()
            )));
        }
        if row_modes.is_empty() {
            return Err(Error::invalid("shape needs at least one factor"));
        }
        if row_modes.iter().chain(col_modes).any(|&n| n == 0) {
            return Err(Error::invalid("mode extents must be positive"));
        }
        Ok(ShapePair {
            row_modes: row_modes.to_vec(),
            col_modes: col_modes.to_vec(),
        })
    }

    pub fn row_modes(&self) -> &[usize] {
        &self.row_modes
    }

    pub fn col_modes(&self) -> &[usize] {
        &self.col_modes
    }

    pub fn ndim(&self) -> usize {
        self.row_modes.len()
    }

    /// Row count `M`.
    pub fn nrows(&self) -> usize {
        self.row_modes.iter().product()
    }

    /// Column count `N`.
    pub fn ncols(&self) -> usize {
        self.col_modes.iter().product()
    }

    pub fn row_map(&self) -> MultiIndexMap {
        MultiIndexMap {
            modes: self.row_modes.clone(),
        }
    }

    pub fn col_map(&self) -> MultiIndexMap {
        MultiIndexMap {
            modes: self.col_modes.clone(),
        }
    }

    /// Shape of the transposed matrix: row and column factors swapped.
    pub fn transposed(&self) -> ShapePair {
        ShapePair {
            row_modes: self.col_modes.clone(),
            col_modes: self.row_modes.clone(),
        }
    }

    /// Extents of the fused modes `m_k * n_k`.
    pub fn fused_modes(&self) -> Vec<usize> {
        self.row_modes
            .iter()
            .zip(&self.col_modes)
            .map(|(&m, &n)| m * n)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_of_origin_is_zero() {
        let map = MultiIndexMap::new(&[2, 3, 4]).unwrap();
        assert_eq!(map.multi_to_flat(&[0, 0, 0]).unwrap(), 0);
    }

    #[test]
    fn flat_of_last_element() {
        let map = MultiIndexMap::new(&[2, 3, 4]).unwrap();
        assert_eq!(map.multi_to_flat(&[1, 2, 3]).unwrap(), 23);
    }

    #[test]
    fn first_mode_varies_fastest() {
        let map = MultiIndexMap::new(&[2, 3]).unwrap();
        assert_eq!(map.flat_to_multi(3).unwrap(), vec![1, 1]);
        assert_eq!(map.multi_to_flat(&[1, 0]).unwrap(), 1);
        assert_eq!(map.multi_to_flat(&[0, 1]).unwrap(), 2);
    }

    #[test]
    fn round_trip_exhaustive() {
        let map = MultiIndexMap::new(&[2, 3, 4]).unwrap();
        for flat in 0..24 {
            let idx = map.flat_to_multi(flat).unwrap();
            assert_eq!(map.multi_to_flat(&idx).unwrap(), flat);
        }
    }

    #[test]
    fn out_of_box_rejected() {
        let map = MultiIndexMap::new(&[2, 3]).unwrap();
        assert!(map.multi_to_flat(&[2, 0]).is_err());
        assert!(map.multi_to_flat(&[0, 3]).is_err());
        assert!(map.flat_to_multi(6).is_err());
    }

    #[test]
    fn shape_pair_validation() {
        assert!(ShapePair::new(&[2, 3], &[4]).is_err());
        assert!(ShapePair::new(&[], &[]).is_err());
        assert!(ShapePair::new(&[2, 0], &[1, 1]).is_err());
        let s = ShapePair::new(&[2, 3], &[4, 5]).unwrap();
        assert_eq!(s.nrows(), 6);
        assert_eq!(s.ncols(), 20);
        assert_eq!(s.fused_modes(), vec![8, 15]);
    }
}
