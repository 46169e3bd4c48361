//! Tensor-train arithmetic grows ranks; rounding recompresses.
//!
//! ```sh
//! cargo run --example tt_rounding
//! ```

use ttnn::tensor::rank_one;
use ttnn::TruncationPolicy;

fn main() -> ttnn::Result<()> {
    // Two rank-one tensors over 8x8x8x8.
    let u = rank_one(&[
        ramp(8, 0.9),
        ramp(8, -0.4),
        ramp(8, 0.7),
        ramp(8, 0.2),
    ])?;
    let v = rank_one(&[
        ramp(8, -0.3),
        ramp(8, 0.8),
        ramp(8, -0.6),
        ramp(8, 0.5),
    ])?;

    // Structural addition concatenates cores, so ranks add even when the
    // true rank is lower.
    let sum = u.add(&v)?;
    println!("u + v:          ranks {:?}", sum.ranks());

    // 2u + 2v = 2(u + v): rank 4 structurally, rank 2 mathematically.
    let doubled = sum.add(&sum)?;
    println!("(u+v) + (u+v):  ranks {:?}", doubled.ranks());

    // Rounding finds the mathematical rank again without changing the
    // value beyond the requested tolerance.
    let rounded = doubled.round(&TruncationPolicy::rel_tolerance(1e-12)?)?;
    println!("rounded:        ranks {:?}", rounded.ranks());

    let drift = rounded.add(&doubled.scale(-1.0))?.frobenius_norm() / doubled.frobenius_norm();
    println!("relative drift from rounding: {drift:.2e}");

    // Hadamard products multiply ranks pairwise; rounding tames those too.
    let had = sum.hadamard(&sum)?;
    let had_rounded = had.round(&TruncationPolicy::rel_tolerance(1e-12)?)?;
    println!(
        "(u+v) .* (u+v): ranks {:?} -> rounded {:?}",
        had.ranks(),
        had_rounded.ranks()
    );
    Ok(())
}

/// A smooth factor vector: entries (1 + alpha)^t scaled to unit norm.
fn ramp(n: usize, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|t| (1.0 + alpha).powi(t as i32)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x / norm).collect()
}
