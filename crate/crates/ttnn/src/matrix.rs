//! TT representation of matrices with factored row and column extents.
//!
//! A matrix `W` of shape `M x N` with `M = m_1 ... m_d` and
//! `N = n_1 ... n_d` is stored through cores `G_k` indexed by a row
//! sub-index and a column sub-index per dimension:
//!
//! ```text
//! W(t, l) = G_1[i_1, j_1] * G_2[i_2, j_2] * ... * G_d[i_d, j_d]
//! ```
//!
//! where `t <-> (i_1, ..., i_d)` and `l <-> (j_1, ..., j_d)` are the
//! column-major multi-index maps over the row and column factors. Each
//! `G_k[i, j]` is an `r_{k-1} x r_k` matrix, so the storage is a TT tensor
//! over the fused modes `m_k * n_k` with fused index `i + m_k * j` (row
//! sub-index fastest). The fused view is a pure reinterpretation: a
//! [`Core4`] buffer is bit-identical to the corresponding [`Core3`] buffer.
//!
//! The point of the format: `matvec` contracts the cores against the input
//! one dimension at a time and never forms the `M x N` matrix, using
//! `O(d r^2 max(m_k n_k) max(M, N))` work and scratch memory proportional
//! to `r * max(M, N)` per input column.

use crate::dense::{permute_colmajor, DenseTensor};
use crate::error::{Error, Result};
use crate::index::ShapePair;
use crate::meter::AllocMeter;
use crate::tensor::{Core3, TruncationPolicy, TtTensor};
use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

/// One TT-matrix core: a 4-way array of shape `(r_prev, m, n, r_next)`
/// stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Core4 {
    r_prev: usize,
    m: usize,
    n: usize,
    r_next: usize,
    data: Vec<f64>,
}

impl Core4 {
    pub fn from_vec(r_prev: usize, m: usize, n: usize, r_next: usize, data: Vec<f64>) -> Result<Self> {
        if r_prev == 0 || m == 0 || n == 0 || r_next == 0 {
            return Err(Error::invalid("core dimensions must be positive"));
        }
        if data.len() != r_prev * m * n * r_next {
            return Err(Error::shape(format!(
                "core ({}, {}, {}, {}) needs {} elements, got {}",
                r_prev,
                m,
                n,
                r_next,
                r_prev * m * n * r_next,
                data.len()
            )));
        }
        Ok(Core4 {
            r_prev,
            m,
            n,
            r_next,
            data,
        })
    }

    pub fn zeros(r_prev: usize, m: usize, n: usize, r_next: usize) -> Result<Self> {
        Core4::from_vec(r_prev, m, n, r_next, vec![0.0; r_prev * m * n * r_next])
    }

    pub fn r_prev(&self) -> usize {
        self.r_prev
    }

    pub fn row_mode(&self) -> usize {
        self.m
    }

    pub fn col_mode(&self) -> usize {
        self.n
    }

    pub fn r_next(&self) -> usize {
        self.r_next
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Matrix slice `G[i, j]` of shape `r_prev x r_next`.
    pub fn slice(&self, i: usize, j: usize) -> DMatrix<f64> {
        assert!(i < self.m && j < self.n, "core index out of range");
        let f = i + self.m * j;
        DMatrix::from_fn(self.r_prev, self.r_next, |p, q| {
            self.data[p + self.r_prev * (f + self.m * self.n * q)]
        })
    }

    /// Reinterprets the buffer as a 3-way core over the fused mode
    /// `m * n`.
    pub fn fuse(&self) -> Core3 {
        Core3::from_vec(self.r_prev, self.m * self.n, self.r_next, self.data.clone())
            .expect("core buffer length is consistent by construction")
    }

    /// Inverse of [`fuse`](Self::fuse): splits a fused mode back into the
    /// `(row, column)` pair.
    pub fn from_fused(core: &Core3, m: usize, n: usize) -> Result<Self> {
        if core.mode() != m * n {
            return Err(Error::shape(format!(
                "fused mode {} cannot split into {} x {}",
                core.mode(),
                m,
                n
            )));
        }
        Core4::from_vec(core.r_prev(), m, n, core.r_next(), core.data().to_vec())
    }
}

/// Matrix in TT format over a [`ShapePair`].
#[derive(Debug, Clone, PartialEq)]
pub struct TtMatrix {
    shape: ShapePair,
    cores: Vec<Core4>,
}

impl TtMatrix {
    /// Validates core extents against the shape and the rank chain.
    pub fn from_cores(shape: ShapePair, cores: Vec<Core4>) -> Result<Self> {
        if cores.len() != shape.ndim() {
            return Err(Error::shape(format!(
                "{} cores for a {}-factor shape",
                cores.len(),
                shape.ndim()
            )));
        }
        for (k, c) in cores.iter().enumerate() {
            if c.m != shape.row_modes()[k] || c.n != shape.col_modes()[k] {
                return Err(Error::shape(format!(
                    "core {} has modes ({}, {}), shape wants ({}, {})",
                    k,
                    c.m,
                    c.n,
                    shape.row_modes()[k],
                    shape.col_modes()[k]
                )));
            }
        }
        if cores[0].r_prev != 1 || cores[cores.len() - 1].r_next != 1 {
            return Err(Error::shape("boundary ranks must be 1".to_string()));
        }
        for k in 1..cores.len() {
            if cores[k - 1].r_next != cores[k].r_prev {
                return Err(Error::shape(format!(
                    "rank mismatch between cores {} and {}",
                    k - 1,
                    k
                )));
            }
        }
        Ok(TtMatrix { shape, cores })
    }

    /// Decomposes a dense matrix: reshape to the `2d`-way tensor over
    /// `(i_1..i_d, j_1..j_d)`, interleave row and column factors, fuse each
    /// `(i_k, j_k)` pair, and run the TT decomposition. The policy's
    /// relative tolerance bounds the Frobenius error of the represented
    /// matrix.
    pub fn from_dense(w: &DMatrix<f64>, shape: &ShapePair, policy: &TruncationPolicy) -> Result<Self> {
        if w.nrows() != shape.nrows() || w.ncols() != shape.ncols() {
            return Err(Error::shape(format!(
                "matrix is {} x {}, shape wants {} x {}",
                w.nrows(),
                w.ncols(),
                shape.nrows(),
                shape.ncols()
            )));
        }
        let d = shape.ndim();
        // Column-major W buffer is already the (i_1..i_d, j_1..j_d) tensor.
        let mut modes: Vec<usize> = shape.row_modes().to_vec();
        modes.extend_from_slice(shape.col_modes());
        // Interleave to (i_1, j_1, i_2, j_2, ...).
        let perm: Vec<usize> = (0..d).flat_map(|k| [k, d + k]).collect();
        let interleaved = permute_colmajor(w.as_slice(), &modes, &perm)?;
        let fused = DenseTensor::from_vec(&shape.fused_modes(), interleaved)?;
        let tt = TtTensor::tt_svd(&fused, policy)?;
        let cores = tt
            .cores()
            .iter()
            .zip(shape.row_modes().iter().zip(shape.col_modes()))
            .map(|(c, (&m, &n))| Core4::from_fused(c, m, n))
            .collect::<Result<Vec<_>>>()?;
        TtMatrix::from_cores(shape.clone(), cores)
    }

    /// Contracts the cores back into the dense `M x N` matrix. Errors when
    /// the result would exceed the materialization cap.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let d = self.shape.ndim();
        let fused = self.as_fused_tensor().materialize()?;
        // Un-fuse each mode into (i_k, j_k), then gather rows before
        // columns: inverse of the interleave in from_dense.
        let mut modes = Vec::with_capacity(2 * d);
        for (&m, &n) in self.shape.row_modes().iter().zip(self.shape.col_modes()) {
            modes.push(m);
            modes.push(n);
        }
        let perm: Vec<usize> = (0..d).map(|k| 2 * k).chain((0..d).map(|k| 2 * k + 1)).collect();
        let data = permute_colmajor(fused.data(), &modes, &perm)?;
        Ok(DMatrix::from_vec(self.shape.nrows(), self.shape.ncols(), data))
    }

    /// Zero-copy view of the storage as a TT tensor over the fused modes.
    pub fn as_fused_tensor(&self) -> TtTensor {
        let cores = self.cores.iter().map(|c| c.fuse()).collect();
        TtTensor::from_cores(cores).expect("fused cores inherit a valid rank chain")
    }

    /// Rebuilds a matrix from a fused tensor with the same mode factoring.
    pub fn from_fused_tensor(tt: &TtTensor, shape: &ShapePair) -> Result<Self> {
        if tt.modes() != shape.fused_modes().as_slice() {
            return Err(Error::shape(format!(
                "fused modes {:?} do not match shape {:?} x {:?}",
                tt.modes(),
                shape.row_modes(),
                shape.col_modes()
            )));
        }
        let cores = tt
            .cores()
            .iter()
            .zip(shape.row_modes().iter().zip(shape.col_modes()))
            .map(|(c, (&m, &n))| Core4::from_fused(c, m, n))
            .collect::<Result<Vec<_>>>()?;
        TtMatrix::from_cores(shape.clone(), cores)
    }

    pub fn shape(&self) -> &ShapePair {
        &self.shape
    }

    pub fn nrows(&self) -> usize {
        self.shape.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.shape.ncols()
    }

    pub fn cores(&self) -> &[Core4] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &Core4 {
        &self.cores[k]
    }

    pub fn core_mut(&mut self, k: usize) -> &mut Core4 {
        &mut self.cores[k]
    }

    pub fn cores_mut(&mut self) -> &mut [Core4] {
        &mut self.cores
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.cores.len() + 1);
        r.push(1);
        r.extend(self.cores.iter().map(|c| c.r_next));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Total number of stored scalars: `sum_k r_{k-1} m_k n_k r_k`.
    pub fn param_count(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// Dense element count divided by stored element count.
    pub fn compression_factor(&self) -> f64 {
        (self.shape.nrows() as f64) * (self.shape.ncols() as f64) / (self.param_count() as f64)
    }

    /// Single entry `W(t, l)` by chained slice products.
    pub fn element(&self, t: usize, l: usize) -> Result<f64> {
        let rows = self.shape.row_map().flat_to_multi(t)?;
        let cols = self.shape.col_map().flat_to_multi(l)?;
        let mut acc = self.cores[0].slice(rows[0], cols[0]);
        for (k, core) in self.cores.iter().enumerate().skip(1) {
            acc *= core.slice(rows[k], cols[k]);
        }
        Ok(acc[(0, 0)])
    }

    /// Swaps the roles of row and column indices in every core; the result
    /// represents `W^T`.
    pub fn transpose(&self) -> TtMatrix {
        let cores = self
            .cores
            .iter()
            .map(|c| {
                let data =
                    permute_colmajor(&c.data, &[c.r_prev, c.m, c.n, c.r_next], &[0, 2, 1, 3])
                        .expect("axis swap of a consistent buffer");
                Core4::from_vec(c.r_prev, c.n, c.m, c.r_next, data)
                    .expect("swapped extents keep the buffer length")
            })
            .collect();
        TtMatrix {
            shape: self.shape.transposed(),
            cores,
        }
    }

    /// Re-compresses the representation through the fused-tensor rounding
    /// sweep.
    pub fn round(&self, policy: &TruncationPolicy) -> Result<TtMatrix> {
        let rounded = self.as_fused_tensor().round(policy)?;
        TtMatrix::from_fused_tensor(&rounded, &self.shape)
    }

    /// `y = W x` without forming `W`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xm = DMatrix::from_column_slice(x.len(), 1, x);
        let y = self.matvec_batch(&xm)?;
        Ok(y.as_slice().to_vec())
    }

    /// Batched product `Y = W X` for `X` of shape `N x B`, without forming
    /// `W`.
    pub fn matvec_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut meter = AllocMeter::new();
        self.matvec_batch_metered(x, &mut meter)
    }

    /// [`matvec_batch`](Self::matvec_batch) with scratch-space accounting;
    /// the meter records every intermediate buffer in f64 elements.
    pub fn matvec_batch_metered(
        &self,
        x: &DMatrix<f64>,
        meter: &mut AllocMeter,
    ) -> Result<DMatrix<f64>> {
        let n_total = self.shape.ncols();
        if x.nrows() != n_total {
            return Err(Error::shape(format!(
                "input has {} rows, matrix has {} columns",
                x.nrows(),
                n_total
            )));
        }
        let b = x.ncols();
        if b == 0 {
            return Err(Error::invalid("batch must contain at least one column"));
        }

        // State invariant entering step k, grouped column-major axes:
        //   (r_{k-1}, j_k, j_{k+1}..j_d, i_1..i_{k-1}, batch)
        // The input X is exactly the k = 0 state.
        let mut state = x.as_slice().to_vec();
        meter.alloc(state.len());
        let mut m_done: usize = 1;
        let mut n_rest: usize = n_total / self.cores[0].n;

        for (k, core) in self.cores.iter().enumerate() {
            let (r_prev, m, n, r_next) = (core.r_prev, core.m, core.n, core.r_next);
            // Core as a (m * r_next) x (r_prev * n) matrix whose columns
            // match the state's two leading axes.
            let a_buf = permute_colmajor(&core.data, &[r_prev, m, n, r_next], &[1, 3, 0, 2])?;
            meter.alloc(a_buf.len());

            let s_rows = r_prev * n;
            let s_cols = n_rest * m_done * b;
            let p_rows = m * r_next;
            let mut prod = vec![0.0; p_rows * s_cols];
            meter.alloc(prod.len());
            {
                let a = DMatrixView::from_slice(&a_buf, p_rows, s_rows);
                let s = DMatrixView::from_slice(&state, s_rows, s_cols);
                let mut out = DMatrixViewMut::from_slice(&mut prod, p_rows, s_cols);
                out.gemm(1.0, &a, &s, 0.0);
            }
            meter.free(a_buf.len());
            meter.free(state.len());

            // (i_k, r_k, J, I, b) -> (r_k, J, I i_k, b): the processed row
            // index joins the accumulated ones at the back.
            let next = permute_colmajor(&prod, &[m, r_next, n_rest, m_done, b], &[1, 2, 3, 0, 4])?;
            meter.alloc(next.len());
            meter.free(prod.len());
            state = next;

            m_done *= m;
            if k + 1 < self.cores.len() {
                n_rest /= self.cores[k + 1].n;
            }
        }
        let y = DMatrix::from_vec(self.shape.nrows(), b, state);
        meter.free(y.len());
        Ok(y)
    }
}
