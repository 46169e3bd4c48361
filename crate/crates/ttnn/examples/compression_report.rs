//! Parameter accounting for a factorized fully-connected layer.
//!
//! Reproduces the classic compression table for the 25088 -> 4096 layer
//! of a large convolutional network: the weight matrix is factorized
//! over mode products 4096 = 4^6 and 25088 = 2*7*8*8*7*4, and every
//! internal rank is capped at r.
//!
//! ```sh
//! cargo run --example compression_report
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttnn::{ShapePair, SigmaRule, TtLayer};

fn main() -> ttnn::Result<()> {
    let shape = ShapePair::new(&[4, 4, 4, 4, 4, 4], &[2, 7, 8, 8, 7, 4])?;
    let dense_params = shape.nrows() * shape.ncols();
    println!(
        "weight matrix {} x {} = {} dense parameters\n",
        shape.nrows(),
        shape.ncols(),
        dense_params
    );
    println!("{:>5} {:>12} {:>14}", "rank", "tt params", "compression");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for rank in [1usize, 2, 4, 8, 16] {
        let ranks = vec![rank; shape.ndim() - 1];
        let layer = TtLayer::init_gaussian(&shape, &ranks, &SigmaRule::default(), &mut rng)?;
        let tt = layer.weights();
        println!(
            "{rank:>5} {:>12} {:>13.0}x",
            tt.param_count(),
            tt.compression_factor()
        );
    }

    println!(
        "\nAt rank 2 the layer stores 528 weight scalars instead of {dense_params} \
         -- a factor of about 194622 -- while keeping the full 25088-dimensional input."
    );
    Ok(())
}
