//! Decompose a dense tensor into tensor-train form and reconstruct it.
//!
//! ```sh
//! cargo run --example tt_basics
//! ```

use ttnn::{DenseTensor, TruncationPolicy, TtTensor};

fn main() -> ttnn::Result<()> {
    // A 6x6x6x6 tensor with smooth structure: f(i,j,k,l) depends only on
    // sums of index pairs, so its unfoldings are far from full rank.
    let modes = [6usize, 6, 6, 6];
    let mut a = DenseTensor::zeros(&modes)?;
    for i in 0..6 {
        for j in 0..6 {
            for k in 0..6 {
                for l in 0..6 {
                    let value = 1.0 / (1.0 + (i + j) as f64) + ((k + l) as f64 * 0.3).sin();
                    a.set(&[i, j, k, l], value)?;
                }
            }
        }
    }
    println!("dense tensor: modes {:?}, {} entries", a.modes(), a.len());

    // Exact decomposition: reconstruction error at machine precision.
    let exact = TtTensor::tt_svd(&a, &TruncationPolicy::exact())?;
    println!(
        "exact:    ranks {:?}, {} parameters, error {:.2e}",
        exact.ranks(),
        exact.param_count(),
        reconstruction_error(&exact, &a)?
    );

    // Lossy decomposition: trade accuracy for rank. The relative error
    // stays within the requested tolerance.
    for eps in [1e-8, 1e-4, 1e-1] {
        let tt = TtTensor::tt_svd(&a, &TruncationPolicy::rel_tolerance(eps)?)?;
        println!(
            "eps {eps:.0e}: ranks {:?}, {} parameters, error {:.2e}",
            tt.ranks(),
            tt.param_count(),
            reconstruction_error(&tt, &a)?
        );
    }

    // Single entries are available without materializing anything.
    let tt = TtTensor::tt_svd(&a, &TruncationPolicy::rel_tolerance(1e-10)?)?;
    println!(
        "entry [1,2,3,4]: dense {:.6}, tt {:.6}",
        a.get(&[1, 2, 3, 4])?,
        tt.element(&[1, 2, 3, 4])?
    );
    Ok(())
}

fn reconstruction_error(tt: &TtTensor, reference: &DenseTensor) -> ttnn::Result<f64> {
    let back = tt.materialize()?;
    let mut num = 0.0;
    for (x, y) in back.data().iter().zip(reference.data()) {
        num += (x - y) * (x - y);
    }
    Ok(num.sqrt() / reference.frobenius_norm())
}
