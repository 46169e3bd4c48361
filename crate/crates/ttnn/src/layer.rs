//! Fully-connected layer with a TT weight matrix.
//!
//! Computes `y = W x + b` where `W` lives in TT format and the bias stays
//! dense. Both the forward product and every parameter gradient are
//! evaluated by sweeping over the cores, so neither pass ever forms the
//! `M x N` matrix.
//!
//! # Gradient sweeps
//!
//! Writing `G_k[i, j]` for the `r_{k-1} x r_k` core slices, the chain rule
//! for one sample gives
//!
//! ```text
//! dL/dG_k[i, j] = sum over full indices (t, l) with t_k = i, l_k = j of
//!                 (prefix product)^T * dL/dy(t) * x(l) * (suffix product)^T
//! ```
//!
//! Evaluating that directly costs `O(M N)` per core. Instead two sweeps
//! factor the sums through the chain:
//!
//! * a right-to-left sweep contracts the cores after position `k` with the
//!   input, producing partial sums `R_k` indexed by `(alpha_k, i_{k+1..d},
//!   j_{1..k}, sample)` — these are stacked in a [`BackwardWorkspace`];
//! * a left-to-right sweep contracts the cores before position `k` with the
//!   upstream gradient, giving states `U_k` indexed by `(alpha_{k-1},
//!   i_{k..d}, j_{1..k-1}, sample)`.
//!
//! With column-major layouts each sweep step and each gradient emission
//! `dG_k = U_k-matrix * R_{k+1}-matrix` is a single matrix product plus an
//! axis permutation, and the emitted product buffer *is* the gradient core
//! buffer. Batch gradients are the sum over samples; averaging belongs to
//! the loss.

use crate::dense::permute_colmajor;
use crate::error::{Error, Result};
use crate::index::ShapePair;
use crate::linalg::gemm_colmajor;
use crate::matrix::{Core4, TtMatrix};
use crate::meter::AllocMeter;
use crate::tensor::{TruncationPolicy, MATERIALIZE_CAP};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Per-core standard deviation used by [`TtLayer::init_gaussian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    /// Every core entry drawn i.i.d. normal with this standard deviation.
    Fixed(f64),
    /// Per-core sigma `s / sqrt(n_k r_{k-1} r_k)` with the gain `s` chosen
    /// so a unit-variance input yields outputs of variance `target`.
    VarianceScaled { target: f64 },
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::VarianceScaled { target: 1.0 }
    }
}

/// Gradients of a scalar loss with respect to everything a [`TtLayer`]
/// touches. Core and bias gradients are summed over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// One gradient per weight core, with identical extents.
    pub cores: Vec<Core4>,
    /// Gradient of the bias, length `M`.
    pub bias: Vec<f64>,
    /// Gradient with respect to the layer input, `N x B`.
    pub input: DMatrix<f64>,
}

impl LayerGradients {
    /// Gradient arrays in the same order as [`TtLayer::param_slices`]:
    /// cores first, then bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.cores.iter().map(|c| c.data()).collect();
        v.push(&self.bias);
        v
    }
}

/// One sweep state: a column-major buffer over four grouped axes
/// `(rank, open row indices, open column indices, batch)`.
#[derive(Debug, Clone, PartialEq)]
struct SweepState {
    data: Vec<f64>,
    dims: [usize; 4],
}

impl SweepState {
    fn len(&self) -> usize {
        self.data.len()
    }
}

/// The right-to-left partial sums `R_k`: position `k` holds the input
/// contracted with every core after position `k`, laid out so the gradient
/// emission for core `k` is one matrix product.
#[derive(Debug)]
pub struct BackwardWorkspace {
    states: Vec<Option<SweepState>>,
}

impl BackwardWorkspace {
    /// Runs the right-to-left sweep. `x` is the `N x B` input batch.
    pub fn build(weights: &TtMatrix, x: &DMatrix<f64>) -> Result<Self> {
        let mut meter = AllocMeter::new();
        BackwardWorkspace::build_metered(weights, x, &mut meter)
    }

    fn build_metered(
        weights: &TtMatrix,
        x: &DMatrix<f64>,
        meter: &mut AllocMeter,
    ) -> Result<Self> {
        let d = weights.cores().len();
        let b = x.ncols();
        let mut slots: Vec<Option<SweepState>> = (0..d).map(|_| None).collect();
        // Deepest state: the bare input, rank axis 1, all columns open.
        let mut cur = SweepState {
            data: x.as_slice().to_vec(),
            dims: [1, 1, weights.ncols(), b],
        };
        meter.alloc(cur.len());
        for k in (1..d).rev() {
            let next = suffix_step(&weights.cores()[k], &cur, meter)?;
            slots[k] = Some(cur);
            cur = next;
        }
        slots[0] = Some(cur);
        Ok(BackwardWorkspace { states: slots })
    }

    /// Number of stored partial-sum states (one per core).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Raw buffer and grouped extents `(rank, open rows, open cols, batch)`
    /// of the partial sums used when emitting the gradient of core `k`.
    pub fn partial_sum(&self, k: usize) -> Option<(&[f64], [usize; 4])> {
        self.states
            .get(k)
            .and_then(|s| s.as_ref())
            .map(|s| (s.data.as_slice(), s.dims))
    }

    fn take(&mut self, k: usize) -> SweepState {
        self.states[k].take().expect("each state is consumed once")
    }
}

/// Contraction of one more core into a suffix state: given the partial sums
/// over cores `k+1..`, absorb core `k`.
fn suffix_step(core: &Core4, state: &SweepState, meter: &mut AllocMeter) -> Result<SweepState> {
    let (rp, m, n, rn) = (core.r_prev(), core.row_mode(), core.col_mode(), core.r_next());
    let [r_state, mg, nl_full, b] = state.dims;
    debug_assert_eq!(r_state, rn);
    let nl = nl_full / n;
    // Bring the contracted pair (rank, j_k) to the front; j_k is the
    // slowest open column axis.
    let s_buf = permute_colmajor(&state.data, &[rn, mg, nl, n, b], &[0, 3, 1, 2, 4])?;
    meter.alloc(s_buf.len());
    // Core as (r_prev * m) x (r_next * n).
    let a_buf = permute_colmajor(core.data(), &[rp, m, n, rn], &[0, 1, 3, 2])?;
    meter.alloc(a_buf.len());
    let cols = mg * nl * b;
    let out = gemm_colmajor(&a_buf, rp * m, rn * n, &s_buf, cols);
    meter.alloc(out.len());
    meter.free(s_buf.len());
    meter.free(a_buf.len());
    Ok(SweepState {
        data: out,
        dims: [rp, m * mg, nl, b],
    })
}

/// Fully-connected layer `y = W x + b` with `W` in TT format.
#[derive(Debug, Clone, PartialEq)]
pub struct TtLayer {
    weights: TtMatrix,
    bias: Vec<f64>,
}

impl TtLayer {
    pub fn new(weights: TtMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.nrows() {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weights.nrows()
            )));
        }
        Ok(TtLayer { weights, bias })
    }

    /// Random layer: core entries i.i.d. Gaussian per `rule`, bias zero.
    /// `internal_ranks` lists `r_1 .. r_{d-1}` (the boundary ranks are
    /// always 1).
    pub fn init_gaussian<R: Rng + ?Sized>(
        shape: &ShapePair,
        internal_ranks: &[usize],
        rule: &SigmaRule,
        rng: &mut R,
    ) -> Result<Self> {
        let d = shape.ndim();
        if internal_ranks.len() + 1 != d {
            return Err(Error::invalid(format!(
                "{} internal ranks for {} dimensions; expected {}",
                internal_ranks.len(),
                d,
                d - 1
            )));
        }
        if internal_ranks.contains(&0) {
            return Err(Error::invalid("ranks must be positive"));
        }
        let mut chain = Vec::with_capacity(d + 1);
        chain.push(1);
        chain.extend_from_slice(internal_ranks);
        chain.push(1);

        // Gain for the variance-scaled rule: with per-core sigma
        // s / sqrt(n_k r_{k-1} r_k) the output variance on unit-variance
        // input is s^(2d) / prod(internal ranks); solve for s.
        let rank_product: f64 = internal_ranks.iter().map(|&r| r as f64).product();
        let gain = match rule {
            SigmaRule::Fixed(s) => {
                if !s.is_finite() || *s < 0.0 {
                    return Err(Error::invalid("sigma must be finite and non-negative"));
                }
                *s
            }
            SigmaRule::VarianceScaled { target } => {
                if !target.is_finite() || *target <= 0.0 {
                    return Err(Error::invalid("target variance must be positive"));
                }
                (target * rank_product).powf(1.0 / (2.0 * d as f64))
            }
        };

        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let (m, n) = (shape.row_modes()[k], shape.col_modes()[k]);
            let (rp, rn) = (chain[k], chain[k + 1]);
            let sigma = match rule {
                SigmaRule::Fixed(_) => gain,
                SigmaRule::VarianceScaled { .. } => {
                    gain / ((n * rp * rn) as f64).sqrt()
                }
            };
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::invalid(format!("invalid sigma: {e}")))?;
            let data: Vec<f64> = (0..rp * m * n * rn).map(|_| normal.sample(rng)).collect();
            cores.push(Core4::from_vec(rp, m, n, rn, data)?);
        }
        let weights = TtMatrix::from_cores(shape.clone(), cores)?;
        let bias = vec![0.0; shape.nrows()];
        TtLayer::new(weights, bias)
    }

    pub fn weights(&self) -> &TtMatrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut TtMatrix {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Every parameter array in a fixed order: the cores first, then the
    /// bias. Optimizers pair these with [`LayerGradients::param_slices`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.weights.cores().iter().map(|c| c.data()).collect();
        v.push(&self.bias);
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self
            .weights
            .cores_mut()
            .iter_mut()
            .map(|c| c.data_mut())
            .collect();
        v.push(&mut self.bias);
        v
    }

    pub fn shape(&self) -> &ShapePair {
        self.weights.shape()
    }

    /// Stored scalars: TT cores plus the dense bias.
    pub fn param_count(&self) -> usize {
        self.weights.param_count() + self.bias.len()
    }

    /// `Y = W X + b` per column, for `X` of shape `N x B`.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut meter = AllocMeter::new();
        self.forward_metered(x, &mut meter)
    }

    pub fn forward_metered(
        &self,
        x: &DMatrix<f64>,
        meter: &mut AllocMeter,
    ) -> Result<DMatrix<f64>> {
        let mut y = self.weights.matvec_batch_metered(x, meter)?;
        for c in 0..y.ncols() {
            for t in 0..y.nrows() {
                y[(t, c)] += self.bias[t];
            }
        }
        Ok(y)
    }

    /// Gradients of a scalar loss given the upstream gradient `dy` (shape
    /// `M x B`) at input `x` (shape `N x B`). See the module docs for the
    /// sweep structure; no step materializes the dense matrix.
    pub fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> Result<LayerGradients> {
        let mut meter = AllocMeter::new();
        self.backward_metered(x, dy, &mut meter)
    }

    pub fn backward_metered(
        &self,
        x: &DMatrix<f64>,
        dy: &DMatrix<f64>,
        meter: &mut AllocMeter,
    ) -> Result<LayerGradients> {
        let (m_total, n_total) = (self.weights.nrows(), self.weights.ncols());
        if x.nrows() != n_total {
            return Err(Error::shape(format!(
                "input has {} rows, expected {}",
                x.nrows(),
                n_total
            )));
        }
        if dy.nrows() != m_total {
            return Err(Error::shape(format!(
                "upstream gradient has {} rows, expected {}",
                dy.nrows(),
                m_total
            )));
        }
        if dy.ncols() != x.ncols() {
            return Err(Error::shape(format!(
                "batch mismatch: input {} vs gradient {}",
                x.ncols(),
                dy.ncols()
            )));
        }
        let b = x.ncols();
        if b == 0 {
            return Err(Error::invalid("batch must contain at least one column"));
        }

        let mut ws = BackwardWorkspace::build_metered(&self.weights, x, meter)?;
        let cores = self.weights.cores();
        let d = cores.len();
        let mut grads = Vec::with_capacity(d);

        // Left-to-right state: upstream gradient with all row indices open.
        let mut u = SweepState {
            data: dy.as_slice().to_vec(),
            dims: [1, m_total, 1, b],
        };
        meter.alloc(u.len());

        for (k, core) in cores.iter().enumerate() {
            let (rp, m, n, rn) = (core.r_prev(), core.row_mode(), core.col_mode(), core.r_next());
            let [_, mg_full, nl, _] = u.dims;
            let mg = mg_full / m;

            // Emission: dG_k = U-matrix * R-matrix. The left factor is the
            // current state read as (r_{k-1} m_k) x (open * batch); the
            // right factor is the stored partial sum rearranged so its rows
            // run over the same open indices and its columns over
            // (j_k, r_k). The product buffer is the gradient core.
            let r_state = ws.take(k);
            debug_assert_eq!(r_state.dims, [rn, mg, nl * n, b]);
            let rmat =
                permute_colmajor(&r_state.data, &[rn, mg, nl, n, b], &[1, 2, 4, 3, 0])?;
            meter.alloc(rmat.len());
            meter.free(r_state.len());
            drop(r_state);
            let shared = mg * nl * b;
            let grad_buf = gemm_colmajor(&u.data, rp * m, shared, &rmat, n * rn);
            meter.alloc(grad_buf.len());
            meter.free(rmat.len());
            grads.push(Core4::from_vec(rp, m, n, rn, grad_buf)?);

            // Advance the prefix state: absorb core k against the open row
            // index i_k, opening the column index j_k.
            if k + 1 < d {
                let a_buf = permute_colmajor(core.data(), &[rp, m, n, rn], &[3, 2, 0, 1])?;
                meter.alloc(a_buf.len());
                let prod = gemm_colmajor(&a_buf, rn * n, rp * m, &u.data, shared);
                meter.alloc(prod.len());
                meter.free(a_buf.len());
                let next = permute_colmajor(&prod, &[rn, n, mg, nl, b], &[0, 2, 3, 1, 4])?;
                meter.alloc(next.len());
                meter.free(prod.len());
                meter.free(u.len());
                u = SweepState {
                    data: next,
                    dims: [rn, mg, nl * n, b],
                };
            } else {
                meter.free(u.len());
            }
        }

        let bias_grad: Vec<f64> = (0..m_total).map(|t| dy.row(t).sum()).collect();

        // dL/dx = W^T dy, one more core sweep on the transposed cores.
        let wt = self.weights.transpose();
        meter.alloc(wt.param_count());
        let input = wt.matvec_batch_metered(dy, meter)?;
        meter.free(wt.param_count());

        Ok(LayerGradients {
            cores: grads,
            bias: bias_grad,
            input,
        })
    }

    /// The memory-heavy alternative to per-core gradients: compress a dense
    /// `M x N` gradient into TT form directly. Exists for cross-checking
    /// the sweep path; costs the `O(M N)` the sweeps avoid.
    pub fn grads_to_tt_update(
        &self,
        dense_grad: &DMatrix<f64>,
        policy: &TruncationPolicy,
    ) -> Result<TtMatrix> {
        let (m_total, n_total) = (self.weights.nrows(), self.weights.ncols());
        if m_total.saturating_mul(n_total) > MATERIALIZE_CAP {
            return Err(Error::ResourceLimit {
                needed: m_total.saturating_mul(n_total),
                cap: MATERIALIZE_CAP,
            });
        }
        TtMatrix::from_dense(dense_grad, self.weights.shape(), policy)
    }
}
