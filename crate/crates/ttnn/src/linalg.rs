//! Linear-algebra kernels used by the TT routines.
//!
//! The SVD here is a QR-preconditioned one-sided Jacobi iteration rather
//! than nalgebra's Golub-Kahan implementation: the latter returns invalid
//! factorizations for some exactly rank-deficient inputs (for example the
//! unfoldings of an identity matrix, where whole rows and columns are
//! zero), which the TT decomposition feeds it routinely. Jacobi has the
//! worse flop count, but the matrices reaching it are at most
//! `rank * mode x rank`-sized after the QR step, and it computes small
//! singular values to full relative accuracy.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_TOL: f64 = 1e-15;

/// Thin SVD with singular values in descending order. Returns `(U, sigma,
/// V^T)` where `U` is `m x k`, `sigma` has length `k = min(m, n)` and `V^T`
/// is `k x n`.
pub(crate) fn svd_parts(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::invalid("SVD of an empty matrix"));
    }
    if m < n {
        // A = U S V^T  <=>  A^T = V S U^T
        let (u, sigma, v_t) = svd_parts(&a.transpose())?;
        return Ok((v_t.transpose(), sigma, u.transpose()));
    }
    // Tall or square: QR first so Jacobi works on the small n x n factor.
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let (ur, sigma, v_t) = jacobi_svd_square(r)?;
    Ok((q * ur, sigma, v_t))
}

/// One-sided Jacobi SVD of a square matrix: rotates column pairs until all
/// columns are mutually orthogonal, then reads off `U * S` as the rotated
/// matrix and `V` as the accumulated rotations.
fn jacobi_svd_square(mut b: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let n = b.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (x, y) = (b[(i, p)], b[(i, q)]);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= JACOBI_TOL * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (b[(i, p)], b[(i, q)]);
                    b[(i, p)] = c * x - s * y;
                    b[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; normalize to get U. Exactly
    // zero columns keep a zero U column: the truncation logic never selects
    // them because zero singular values sort last and are always dropped.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| b.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut v_t = DMatrix::<f64>::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > 0.0 {
            let col = b.column(src) / s;
            u.column_mut(dst).copy_from(&col);
        }
        v_t.row_mut(dst).copy_from(&v.column(src).transpose());
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::Computation("SVD produced non-finite values".into()));
    }
    Ok((u, sigma, v_t))
}

/// `A * B` on raw column-major buffers; returns the column-major product.
pub(crate) fn gemm_colmajor(
    a: &[f64],
    a_rows: usize,
    a_cols: usize,
    b: &[f64],
    b_cols: usize,
) -> Vec<f64> {
    debug_assert_eq!(a.len(), a_rows * a_cols);
    debug_assert_eq!(b.len(), a_cols * b_cols);
    let mut out = vec![0.0; a_rows * b_cols];
    {
        let av = nalgebra::DMatrixView::from_slice(a, a_rows, a_cols);
        let bv = nalgebra::DMatrixView::from_slice(b, a_cols, b_cols);
        let mut ov = nalgebra::DMatrixViewMut::from_slice(&mut out, a_rows, b_cols);
        ov.gemm(1.0, &av, &bv, 0.0);
    }
    out
}

/// LQ decomposition `A = L * Q` with `Q` having orthonormal rows, computed
/// as the transposed QR of `A^T`. `L` is `m x k`, `Q` is `k x n`,
/// `k = min(m, n)`.
pub(crate) fn lq_parts(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.transpose().qr();
    let l = qr.r().transpose();
    let q = qr.q().transpose();
    (l, q)
}

/// Smallest rank whose discarded singular-value tail has Frobenius norm at
/// most `delta`, optionally capped by `max_rank`. Always at least 1.
pub(crate) fn truncation_rank(sigma: &[f64], delta: f64, max_rank: Option<usize>) -> usize {
    let full = sigma.len().max(1);
    let mut rank = full;
    let mut tail = 0.0;
    // Walk the tail from the smallest value up; stop once dropping one more
    // would exceed the budget.
    for (i, &s) in sigma.iter().enumerate().rev() {
        tail += s * s;
        if tail > delta * delta {
            break;
        }
        rank = i.max(1);
        if rank == 1 {
            break;
        }
    }
    match max_rank {
        Some(cap) => rank.min(cap).max(1),
        None => rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_svd(a: &DMatrix<f64>, tol: f64) {
        let (u, sigma, v_t) = svd_parts(a).unwrap();
        let k = a.nrows().min(a.ncols());
        assert_eq!(u.shape(), (a.nrows(), k));
        assert_eq!(sigma.len(), k);
        assert_eq!(v_t.shape(), (k, a.ncols()));
        assert!(sigma.windows(2).all(|w| w[0] >= w[1]), "unsorted {sigma:?}");
        assert!(sigma.iter().all(|&s| s >= 0.0));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sigma.clone()));
        let rec = &u * d * &v_t;
        assert_relative_eq!(rec, *a, epsilon = tol);
        // sum of squared singular values matches the Frobenius norm
        let s2: f64 = sigma.iter().map(|s| s * s).sum();
        assert_relative_eq!(s2.sqrt(), a.norm(), epsilon = tol);
    }

    #[test]
    fn svd_of_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, n) in [(3, 4), (4, 3), (5, 5), (1, 6), (6, 1), (2, 2)] {
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
            check_svd(&a, 1e-11);
        }
    }

    #[test]
    fn svd_of_exactly_rank_deficient_matrices() {
        // Outer product with interior zero rows and columns; this exact
        // pattern comes out of TT unfoldings of identity-like matrices and
        // breaks nalgebra's built-in SVD.
        let c = DMatrix::from_column_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 1.0,
            ],
        );
        check_svd(&c, 1e-12);
        let (_, sigma, _) = svd_parts(&c).unwrap();
        assert_relative_eq!(sigma[0], 2.0, epsilon = 1e-12);
        assert!(sigma[1] < 1e-12);

        check_svd(&DMatrix::identity(5, 5), 1e-12);
        check_svd(&DMatrix::zeros(3, 4), 1e-12);
        // duplicated columns
        let mut dup = DMatrix::from_fn(4, 2, |i, j| ((i + 1) * (j + 2)) as f64);
        dup = DMatrix::from_columns(&[
            dup.column(0).into_owned(),
            dup.column(0).into_owned(),
            dup.column(1).into_owned(),
        ]);
        check_svd(&dup, 1e-12);
    }

    #[test]
    fn svd_matches_known_values() {
        // diag(3, 2) embedded in a rotation-free matrix
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]);
        let (_, sigma, _) = svd_parts(&a).unwrap();
        assert_relative_eq!(sigma[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(sigma[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn lq_reconstructs_with_orthonormal_rows() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let (l, q) = lq_parts(&a);
        assert_eq!(l.shape(), (2, 2));
        assert_eq!(q.shape(), (2, 4));
        assert_relative_eq!(&l * &q, a, epsilon = 1e-12);
        let gram = &q * q.transpose();
        assert_relative_eq!(gram, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn rank_selection_keeps_smallest_admissible() {
        let sigma = [2.0, 1.0, 0.5, 0.1];
        // tail(3) = 0.01 <= 0.12^2 but tail(2) = 0.26 > 0.12^2
        assert_eq!(truncation_rank(&sigma, 0.12, None), 3);
        // zero budget keeps everything nonzero
        assert_eq!(truncation_rank(&sigma, 0.0, None), 4);
        // trailing exact zeros are dropped even at zero budget
        assert_eq!(truncation_rank(&[2.0, 1.0, 0.0, 0.0], 0.0, None), 2);
        // huge budget still keeps rank 1
        assert_eq!(truncation_rank(&sigma, 100.0, None), 1);
        // cap wins when tighter
        assert_eq!(truncation_rank(&sigma, 0.0, Some(2)), 2);
        assert_eq!(truncation_rank(&sigma, 0.12, Some(8)), 3);
    }
}
