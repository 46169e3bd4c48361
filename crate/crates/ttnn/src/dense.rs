//! Dense multi-way arrays in column-major layout.
//!
//! Used as the input/output of the TT decomposition routines and as the
//! ground truth in tests. Data lives in a flat `Vec<f64>` with the first
//! mode varying fastest, which matches `nalgebra`'s matrix storage: a tensor
//! reshaped to a matrix by splitting its modes needs no data movement.

use crate::error::{Error, Result};
use crate::index::MultiIndexMap;
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    modes: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Wraps existing column-major data.
    pub fn from_vec(modes: &[usize], data: Vec<f64>) -> Result<Self> {
        let map = MultiIndexMap::new(modes)?;
        if data.len() != map.len() {
            return Err(Error::shape(format!(
                "modes {:?} need {} elements, got {}",
                modes,
                map.len(),
                data.len()
            )));
        }
        Ok(DenseTensor {
            modes: modes.to_vec(),
            data,
        })
    }

    pub fn zeros(modes: &[usize]) -> Result<Self> {
        let map = MultiIndexMap::new(modes)?;
        Ok(DenseTensor {
            modes: modes.to_vec(),
            data: vec![0.0; map.len()],
        })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn ndim(&self) -> usize {
        self.modes.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        let map = MultiIndexMap::new(&self.modes)?;
        Ok(self.data[map.multi_to_flat(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let map = MultiIndexMap::new(&self.modes)?;
        let flat = map.multi_to_flat(idx)?;
        self.data[flat] = value;
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Mode-split matricization: modes `0..split` index rows, the rest index
    /// columns. Free in column-major layout, so this just copies the buffer
    /// into a matrix of the right shape.
    pub fn unfold(&self, split: usize) -> Result<DMatrix<f64>> {
        if split == 0 || split >= self.modes.len() {
            return Err(Error::invalid(format!(
                "split must lie strictly inside 1..{}, got {}",
                self.modes.len(),
                split
            )));
        }
        let rows: usize = self.modes[..split].iter().product();
        let cols: usize = self.modes[split..].iter().product();
        Ok(DMatrix::from_column_slice(rows, cols, &self.data))
    }

    /// Reorders the modes so that mode `perm[k]` of `self` becomes mode `k`
    /// of the result.
    pub fn permute(&self, perm: &[usize]) -> Result<DenseTensor> {
        let new_data = permute_colmajor(&self.data, &self.modes, perm)?;
        let new_modes: Vec<usize> = perm.iter().map(|&p| self.modes[p]).collect();
        DenseTensor::from_vec(&new_modes, new_data)
    }
}

/// Permutes a column-major buffer over `modes` so that axis `perm[k]` of the
/// input becomes axis `k` of the output.
pub fn permute_colmajor(data: &[f64], modes: &[usize], perm: &[usize]) -> Result<Vec<f64>> {
    if perm.len() != modes.len() {
        return Err(Error::shape(format!(
            "permutation length {} does not match {} modes",
            perm.len(),
            modes.len()
        )));
    }
    let mut seen = vec![false; modes.len()];
    for &p in perm {
        if p >= modes.len() || seen[p] {
            return Err(Error::invalid(format!("invalid permutation {:?}", perm)));
        }
        seen[p] = true;
    }
    let total: usize = modes.iter().product();
    if data.len() != total {
        return Err(Error::shape(format!(
            "buffer of {} elements does not match modes {:?}",
            data.len(),
            modes
        )));
    }

    // Input strides in column-major order, then reorder them to walk the
    // output in its own column-major order.
    let mut strides = vec![1usize; modes.len()];
    for k in 1..modes.len() {
        strides[k] = strides[k - 1] * modes[k - 1];
    }
    let out_modes: Vec<usize> = perm.iter().map(|&p| modes[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();

    let mut out = vec![0.0; total];
    let mut counter = vec![0usize; modes.len()];
    let mut src = 0usize;
    for slot in out.iter_mut() {
        *slot = data[src];
        for k in 0..modes.len() {
            counter[k] += 1;
            src += out_strides[k];
            if counter[k] < out_modes[k] {
                break;
            }
            counter[k] = 0;
            src -= out_modes[k] * out_strides[k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unfold_matches_manual_reshape() {
        // 2x3x2 tensor with entries equal to their flat index.
        let data: Vec<f64> = (0..12).map(|x| x as f64).collect();
        let t = DenseTensor::from_vec(&[2, 3, 2], data).unwrap();
        let m = t.unfold(1).unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m.ncols(), 6);
        assert_eq!(m[(1, 4)], 9.0); // flat = 1 + 2*4
        let m2 = t.unfold(2).unwrap();
        assert_eq!(m2.nrows(), 6);
        assert_eq!(m2.ncols(), 2);
        assert_eq!(m2[(5, 1)], 11.0);
    }

    #[test]
    fn permute_transposes_a_matrix() {
        // 2x3 matrix as a tensor; permuting axes must equal the transpose.
        let data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // columns [1,2], [3,4], [5,6]
        let t = DenseTensor::from_vec(&[2, 3], data).unwrap();
        let p = t.permute(&[1, 0]).unwrap();
        assert_eq!(p.modes(), &[3, 2]);
        // transpose rows become [1,3,5] and [2,4,6]
        assert_eq!(p.data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn permute_round_trip() {
        let data: Vec<f64> = (0..24).map(|x| x as f64).collect();
        let t = DenseTensor::from_vec(&[2, 3, 4], data.clone()).unwrap();
        let p = t.permute(&[2, 0, 1]).unwrap();
        // inverse of [2,0,1] is [1,2,0]
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.data(), data.as_slice());
        assert_eq!(back.modes(), &[2, 3, 4]);
    }

    #[test]
    fn permute_identity_is_noop() {
        let data: Vec<f64> = (0..6).map(|x| x as f64).collect();
        let t = DenseTensor::from_vec(&[2, 3], data.clone()).unwrap();
        let p = t.permute(&[0, 1]).unwrap();
        assert_eq!(p.data(), data.as_slice());
    }

    #[test]
    fn bad_permutations_rejected() {
        let t = DenseTensor::zeros(&[2, 3]).unwrap();
        assert!(t.permute(&[0]).is_err());
        assert!(t.permute(&[0, 0]).is_err());
        assert!(t.permute(&[0, 2]).is_err());
    }

    #[test]
    fn get_set_round_trip() {
        let mut t = DenseTensor::zeros(&[2, 3, 4]).unwrap();
        t.set(&[1, 2, 3], 7.5).unwrap();
        assert_eq!(t.get(&[1, 2, 3]).unwrap(), 7.5);
        assert_eq!(t.data()[23], 7.5);
        assert!(t.get(&[2, 0, 0]).is_err());
    }
}
