//! Tensor-train representation of dense multi-way arrays.
//!
//! A d-way tensor `A(i_1, ..., i_d)` is stored as a chain of 3-way cores
//! `G_k` of shape `(r_{k-1}, n_k, r_k)` with boundary ranks `r_0 = r_d = 1`,
//! such that every element is the product of the corresponding core slices:
//!
//! ```text
//! A(i_1, ..., i_d) = G_1[:, i_1, :] * G_2[:, i_2, :] * ... * G_d[:, i_d, :]
//! ```
//!
//! Storage is `O(d n r^2)` instead of `O(n^d)`. Cores use column-major
//! buffers, so the two matricizations used by the sweeps (`(r_{k-1} n_k) x
//! r_k` and `r_{k-1} x (n_k r_k)`) are plain reshapes.

use crate::dense::DenseTensor;
use crate::error::{Error, Result};
use crate::linalg::{lq_parts, svd_parts, truncation_rank};
use nalgebra::DMatrix;

/// Largest dense tensor `materialize` will produce (2^27 elements = 1 GiB
/// of f64). Anything bigger is almost certainly a mistake.
pub const MATERIALIZE_CAP: usize = 1 << 27;

/// One TT core: a 3-way array of shape `(r_prev, n, r_next)` stored
/// column-major (first axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Core3 {
    r_prev: usize,
    n: usize,
    r_next: usize,
    data: Vec<f64>,
}

impl Core3 {
    pub fn from_vec(r_prev: usize, n: usize, r_next: usize, data: Vec<f64>) -> Result<Self> {
        if r_prev == 0 || n == 0 || r_next == 0 {
            return Err(Error::invalid("core dimensions must be positive"));
        }
        if data.len() != r_prev * n * r_next {
            return Err(Error::shape(format!(
                "core ({}, {}, {}) needs {} elements, got {}",
                r_prev,
                n,
                r_next,
                r_prev * n * r_next,
                data.len()
            )));
        }
        Ok(Core3 {
            r_prev,
            n,
            r_next,
            data,
        })
    }

    pub fn zeros(r_prev: usize, n: usize, r_next: usize) -> Result<Self> {
        Core3::from_vec(r_prev, n, r_next, vec![0.0; r_prev * n * r_next])
    }

    pub fn r_prev(&self) -> usize {
        self.r_prev
    }

    pub fn mode(&self) -> usize {
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

    /// Matrix slice `G[:, i, :]` of shape `r_prev x r_next`.
    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        assert!(i < self.n, "mode index {} out of range {}", i, self.n);
        DMatrix::from_fn(self.r_prev, self.r_next, |p, q| {
            self.data[p + self.r_prev * (i + self.n * q)]
        })
    }

    /// `(r_prev * n) x r_next` matricization; a reshape of the buffer.
    pub fn left_unfold(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.r_prev * self.n, self.r_next, &self.data)
    }

    /// `r_prev x (n * r_next)` matricization; a reshape of the buffer.
    pub fn right_unfold(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.r_prev, self.n * self.r_next, &self.data)
    }

    /// Inverse of [`left_unfold`](Self::left_unfold).
    pub fn from_left(m: &DMatrix<f64>, r_prev: usize, n: usize) -> Result<Self> {
        if m.nrows() != r_prev * n {
            return Err(Error::shape(format!(
                "left unfolding has {} rows, expected {} * {}",
                m.nrows(),
                r_prev,
                n
            )));
        }
        Core3::from_vec(r_prev, n, m.ncols(), m.as_slice().to_vec())
    }

    /// Inverse of [`right_unfold`](Self::right_unfold).
    pub fn from_right(m: &DMatrix<f64>, n: usize, r_next: usize) -> Result<Self> {
        if m.ncols() != n * r_next {
            return Err(Error::shape(format!(
                "right unfolding has {} columns, expected {} * {}",
                m.ncols(),
                n,
                r_next
            )));
        }
        Core3::from_vec(m.nrows(), n, r_next, m.as_slice().to_vec())
    }

    /// Builds a core from its `n` matrix slices, all of the same shape.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("core needs at least one slice"))?;
        let (r_prev, r_next) = first.shape();
        let n = slices.len();
        let mut data = vec![0.0; r_prev * n * r_next];
        for (i, s) in slices.iter().enumerate() {
            if s.shape() != (r_prev, r_next) {
                return Err(Error::shape("core slices must share one shape"));
            }
            for q in 0..r_next {
                for p in 0..r_prev {
                    data[p + r_prev * (i + n * q)] = s[(p, q)];
                }
            }
        }
        Core3::from_vec(r_prev, n, r_next, data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Rank-truncation rule shared by the decomposition and rounding sweeps.
///
/// The relative tolerance bounds the Frobenius error of the whole result:
/// with `d - 1` truncated unfoldings each gets a budget of
/// `eps * ||A||_F / sqrt(d - 1)`. A max rank caps every internal rank on
/// top of (or instead of) the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    rel_tolerance: f64,
    max_rank: Option<usize>,
}

impl TruncationPolicy {
    /// Keep every numerically nonzero direction.
    pub fn exact() -> Self {
        TruncationPolicy {
            rel_tolerance: 0.0,
            max_rank: None,
        }
    }

    pub fn rel_tolerance(eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::invalid(format!(
                "relative tolerance must be finite and non-negative, got {eps}"
            )));
        }
        Ok(TruncationPolicy {
            rel_tolerance: eps,
            max_rank: None,
        })
    }

    pub fn max_rank(r: usize) -> Result<Self> {
        TruncationPolicy::exact().with_max_rank(r)
    }

    pub fn with_max_rank(mut self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("max rank must be at least 1"));
        }
        self.max_rank = Some(r);
        Ok(self)
    }

    pub fn tolerance(&self) -> f64 {
        self.rel_tolerance
    }

    pub fn rank_cap(&self) -> Option<usize> {
        self.max_rank
    }

    /// Per-unfolding absolute budget for a tensor of norm `norm` with `d`
    /// modes.
    pub(crate) fn delta(&self, norm: f64, d: usize) -> f64 {
        if d <= 1 {
            return 0.0;
        }
        self.rel_tolerance * norm / ((d - 1) as f64).sqrt()
    }
}

/// Tensor in TT format. See the module docs for the element convention.
#[derive(Debug, Clone, PartialEq)]
pub struct TtTensor {
    modes: Vec<usize>,
    cores: Vec<Core3>,
}

impl TtTensor {
    /// Validates the rank chain (`r_0 = r_d = 1`, adjacent ranks match) and
    /// wraps the cores.
    pub fn from_cores(cores: Vec<Core3>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::invalid("TT tensor needs at least one core"));
        }
        if cores[0].r_prev != 1 {
            return Err(Error::shape(format!(
                "first core must have left rank 1, got {}",
                cores[0].r_prev
            )));
        }
        if cores[cores.len() - 1].r_next != 1 {
            return Err(Error::shape(format!(
                "last core must have right rank 1, got {}",
                cores[cores.len() - 1].r_next
            )));
        }
        for k in 1..cores.len() {
            if cores[k - 1].r_next != cores[k].r_prev {
                return Err(Error::shape(format!(
                    "rank mismatch between cores {} and {}: {} vs {}",
                    k - 1,
                    k,
                    cores[k - 1].r_next,
                    cores[k].r_prev
                )));
            }
        }
        let modes = cores.iter().map(|c| c.n).collect();
        Ok(TtTensor { modes, cores })
    }

    /// Decomposes a dense tensor by sequential truncated SVDs of its
    /// unfoldings, absorbing `sigma * V^T` into the remainder at each step.
    pub fn tt_svd(dense: &DenseTensor, policy: &TruncationPolicy) -> Result<Self> {
        let modes = dense.modes().to_vec();
        let d = modes.len();
        if d == 1 {
            let core = Core3::from_vec(1, modes[0], 1, dense.data().to_vec())?;
            return TtTensor::from_cores(vec![core]);
        }
        let delta = policy.delta(dense.frobenius_norm(), d);

        let mut cores = Vec::with_capacity(d);
        let mut rest: usize = modes.iter().product();
        let mut r_prev = 1usize;
        // The remainder starts as the full tensor reshaped to
        // (r_prev * n_1) x (everything else).
        rest /= modes[0];
        let mut c = DMatrix::from_column_slice(modes[0], rest, dense.data());

        for k in 0..d - 1 {
            let (u, sigma, v_t) = svd_parts(&c)?;
            let r = truncation_rank(&sigma, delta, policy.max_rank);
            cores.push(Core3::from_left(
                &u.columns(0, r).into_owned(),
                r_prev,
                modes[k],
            )?);
            let mut carry = v_t.rows(0, r).into_owned();
            for (i, &s) in sigma[..r].iter().enumerate() {
                carry.row_mut(i).scale_mut(s);
            }
            // Fold the next mode into the row index; free in column-major.
            rest /= modes[k + 1];
            c = DMatrix::from_column_slice(r * modes[k + 1], rest, carry.as_slice());
            r_prev = r;
        }
        cores.push(Core3::from_vec(r_prev, modes[d - 1], 1, c.as_slice().to_vec())?);
        TtTensor::from_cores(cores)
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn ndim(&self) -> usize {
        self.modes.len()
    }

    pub fn cores(&self) -> &[Core3] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &Core3 {
        &self.cores[k]
    }

    /// Full rank chain `[1, r_1, ..., r_{d-1}, 1]`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.cores.len() + 1);
        r.push(1);
        r.extend(self.cores.iter().map(|c| c.r_next));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Total number of stored scalars across all cores.
    pub fn param_count(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// Number of elements of the represented dense tensor.
    pub fn dense_len(&self) -> usize {
        self.modes.iter().product()
    }

    /// Single element by chained slice products.
    pub fn element(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.modes.len() {
            return Err(Error::shape(format!(
                "expected {} indices, got {}",
                self.modes.len(),
                idx.len()
            )));
        }
        for (dim, (&i, &n)) in idx.iter().zip(&self.modes).enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    dim,
                    index: i,
                    extent: n,
                });
            }
        }
        let mut m = self.cores[0].slice(idx[0]);
        for (core, &i) in self.cores[1..].iter().zip(&idx[1..]) {
            m *= core.slice(i);
        }
        Ok(m[(0, 0)])
    }

    /// Contracts the chain into a dense tensor. Errors when the result
    /// would exceed [`MATERIALIZE_CAP`] elements.
    pub fn materialize(&self) -> Result<DenseTensor> {
        let total = self.dense_len();
        if total > MATERIALIZE_CAP {
            return Err(Error::ResourceLimit {
                needed: total,
                cap: MATERIALIZE_CAP,
            });
        }
        // Grow (n_1 ... n_k) x r_k left to right; each step is one GEMM and
        // a column-splitting reshape.
        let mut s = self.cores[0].left_unfold();
        for core in &self.cores[1..] {
            let prod = &s * core.right_unfold();
            s = DMatrix::from_column_slice(
                prod.nrows() * core.n,
                core.r_next,
                prod.as_slice(),
            );
        }
        DenseTensor::from_vec(&self.modes, s.as_slice().to_vec())
    }

    /// Re-compresses the representation: a right-to-left orthogonalization
    /// sweep followed by a left-to-right truncated-SVD sweep. The result
    /// satisfies `||A - round(A)||_F <= eps * ||A||_F` for the policy's
    /// relative tolerance `eps`.
    pub fn round(&self, policy: &TruncationPolicy) -> Result<TtTensor> {
        let d = self.cores.len();
        let mut cores = self.cores.clone();
        right_orthogonalize(&mut cores)?;
        if d == 1 {
            return TtTensor::from_cores(cores);
        }
        // All mass now sits in the first core.
        let norm = cores[0].data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let delta = policy.delta(norm, d);

        for k in 0..d - 1 {
            let (u, sigma, v_t) = svd_parts(&cores[k].left_unfold())?;
            let r = truncation_rank(&sigma, delta, policy.max_rank);
            let (r_prev, n) = (cores[k].r_prev, cores[k].n);
            cores[k] = Core3::from_left(&u.columns(0, r).into_owned(), r_prev, n)?;
            let mut carry = v_t.rows(0, r).into_owned();
            for (i, &s) in sigma[..r].iter().enumerate() {
                carry.row_mut(i).scale_mut(s);
            }
            let merged = carry * cores[k + 1].right_unfold();
            cores[k + 1] = Core3::from_right(&merged, cores[k + 1].n, cores[k + 1].r_next)?;
        }
        TtTensor::from_cores(cores)
    }

    /// Elementwise sum. Ranks add: cores become block-diagonal with the
    /// boundary cores concatenated instead.
    pub fn add(&self, other: &TtTensor) -> Result<TtTensor> {
        if self.modes != other.modes {
            return Err(Error::shape(format!(
                "mode mismatch: {:?} vs {:?}",
                self.modes, other.modes
            )));
        }
        let d = self.cores.len();
        if d == 1 {
            let data: Vec<f64> = self.cores[0]
                .data
                .iter()
                .zip(&other.cores[0].data)
                .map(|(a, b)| a + b)
                .collect();
            return TtTensor::from_cores(vec![Core3::from_vec(1, self.modes[0], 1, data)?]);
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let (a, b) = (&self.cores[k], &other.cores[k]);
            let n = a.n;
            let slices: Vec<DMatrix<f64>> = (0..n)
                .map(|i| {
                    let (sa, sb) = (a.slice(i), b.slice(i));
                    if k == 0 {
                        // 1 x (rA + rB) row concatenation
                        DMatrix::from_fn(1, a.r_next + b.r_next, |_, q| {
                            if q < a.r_next {
                                sa[(0, q)]
                            } else {
                                sb[(0, q - a.r_next)]
                            }
                        })
                    } else if k == d - 1 {
                        // (rA + rB) x 1 column concatenation
                        DMatrix::from_fn(a.r_prev + b.r_prev, 1, |p, _| {
                            if p < a.r_prev {
                                sa[(p, 0)]
                            } else {
                                sb[(p - a.r_prev, 0)]
                            }
                        })
                    } else {
                        // block-diagonal [sa 0; 0 sb]
                        DMatrix::from_fn(
                            a.r_prev + b.r_prev,
                            a.r_next + b.r_next,
                            |p, q| match (p < a.r_prev, q < a.r_next) {
                                (true, true) => sa[(p, q)],
                                (false, false) => sb[(p - a.r_prev, q - a.r_next)],
                                _ => 0.0,
                            },
                        )
                    }
                })
                .collect();
            cores.push(Core3::from_slices(&slices)?);
        }
        TtTensor::from_cores(cores)
    }

    /// Elementwise (Hadamard) product. Core slices combine by Kronecker
    /// product, so ranks multiply.
    pub fn hadamard(&self, other: &TtTensor) -> Result<TtTensor> {
        if self.modes != other.modes {
            return Err(Error::shape(format!(
                "mode mismatch: {:?} vs {:?}",
                self.modes, other.modes
            )));
        }
        let mut cores = Vec::with_capacity(self.cores.len());
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let slices: Vec<DMatrix<f64>> =
                (0..a.n).map(|i| a.slice(i).kronecker(&b.slice(i))).collect();
            cores.push(Core3::from_slices(&slices)?);
        }
        TtTensor::from_cores(cores)
    }

    /// Multiplies the represented tensor by a scalar (absorbed into the
    /// first core).
    pub fn scale(&self, alpha: f64) -> TtTensor {
        let mut out = self.clone();
        for x in out.cores[0].data.iter_mut() {
            *x *= alpha;
        }
        out
    }

    /// Sum over all elements; one 1 x r vector-matrix product per core.
    pub fn sum_elements(&self) -> f64 {
        let mut v = DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let mut s = DMatrix::zeros(core.r_prev, core.r_next);
            for i in 0..core.n {
                s += core.slice(i);
            }
            v *= s;
        }
        v[(0, 0)]
    }

    /// Frobenius norm of the represented tensor, computed stably by
    /// orthogonalizing a copy and reading the norm off the first core.
    pub fn frobenius_norm(&self) -> f64 {
        let mut cores = self.cores.clone();
        if right_orthogonalize(&mut cores).is_err() {
            // QR of finite data does not fail; keep a safe fallback.
            return f64::NAN;
        }
        cores[0].data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Right-to-left sweep making every core but the first right-orthogonal
/// (orthonormal rows of the right unfolding). Preserves the represented
/// tensor and never increases ranks.
pub(crate) fn right_orthogonalize(cores: &mut [Core3]) -> Result<()> {
    for k in (1..cores.len()).rev() {
        let (l, q) = lq_parts(&cores[k].right_unfold());
        let (n, r_next) = (cores[k].n, cores[k].r_next);
        cores[k] = Core3::from_right(&q, n, r_next)?;
        let merged = cores[k - 1].left_unfold() * l;
        let (r_pp, n_prev) = (cores[k - 1].r_prev, cores[k - 1].n);
        cores[k - 1] = Core3::from_left(&merged, r_pp, n_prev)?;
    }
    Ok(())
}

/// Builds a TT tensor with all internal ranks 1 from per-mode factor
/// vectors: the represented tensor is the outer product of the factors.
pub fn rank_one(factors: &[Vec<f64>]) -> Result<TtTensor> {
    if factors.is_empty() {
        return Err(Error::invalid("outer product needs at least one factor"));
    }
    let cores = factors
        .iter()
        .map(|f| Core3::from_vec(1, f.len(), 1, f.clone()))
        .collect::<Result<Vec<_>>>()?;
    TtTensor::from_cores(cores)
}
