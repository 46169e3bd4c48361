//! A matrix in tensor-train form: factorize, multiply, transpose.
//!
//! ```sh
//! cargo run --example tt_matrix
//! ```

use ttnn::{DMatrix, ShapePair, TruncationPolicy, TtMatrix};

fn main() -> ttnn::Result<()> {
    // A 64 x 144 matrix whose entries separate over index digits, viewed
    // with rows factored as 4*4*4 and columns as 6*6*4.
    let shape = ShapePair::new(&[4, 4, 4], &[6, 6, 4])?;
    let w = DMatrix::from_fn(64, 144, |t, l| {
        (0.05 * t as f64).sin() * (0.02 * l as f64).cos() + 0.1
    });

    let tt = TtMatrix::from_dense(&w, &shape, &TruncationPolicy::rel_tolerance(1e-10)?)?;
    println!(
        "factorized {} x {} into ranks {:?}: {} params vs {} dense",
        tt.nrows(),
        tt.ncols(),
        tt.ranks(),
        tt.param_count(),
        w.len()
    );

    // Matrix-vector products run directly on the cores.
    let x = DMatrix::from_fn(144, 3, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5);
    let y_tt = tt.matvec_batch(&x)?;
    let y_dense = &w * &x;
    let gap = (&y_tt - &y_dense).norm() / y_dense.norm();
    println!("batched matvec agrees with dense to {gap:.2e}");

    // Individual entries come from a chain of tiny matrix products.
    println!(
        "entry (10, 20): dense {:.6}, tt {:.6}",
        w[(10, 20)],
        tt.element(10, 20)?
    );

    // The transpose swaps row and column modes core by core.
    let tt_t = tt.transpose();
    let yt = tt_t.matvec_batch(&DMatrix::from_fn(64, 1, |i, _| (i % 5) as f64 - 2.0))?;
    let yd = w.transpose() * DMatrix::from_fn(64, 1, |i, _| (i % 5) as f64 - 2.0);
    println!(
        "transpose matvec agrees to {:.2e}",
        (&yt - &yd).norm() / yd.norm()
    );
    Ok(())
}
