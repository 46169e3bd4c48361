//! Time a tensor-train matvec against the dense equivalent as the rank
//! grows, and report the auxiliary memory the sweep actually used.
//!
//! ```sh
//! cargo run --release --example bench_matvec
//! ```

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::{AllocMeter, DMatrix, ShapePair, SigmaRule, TtLayer};

const REPS: usize = 9;
const WARMUP: usize = 2;

fn main() -> ttnn::Result<()> {
    // 1024 x 3125: rows 4^5, columns 5^5.
    let shape = ShapePair::new(&[4, 4, 4, 4, 4], &[5, 5, 5, 5, 5])?;
    let (m, n) = (shape.nrows(), shape.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(n, 1, |_, _| rng.gen::<f64>() * 2.0 - 1.0);

    let w = DMatrix::from_fn(m, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let dense_ms = median(|| {
        let y = &w * &x;
        black_box(y[(0, 0)]);
    });
    println!(
        "dense {m} x {n}: {dense_ms:.3} ms/matvec, {} weight scalars\n",
        m * n
    );

    println!(
        "{:>5} {:>10} {:>12} {:>14}",
        "rank", "ms/run", "params", "scratch peak"
    );
    for rank in [1usize, 2, 4, 8, 16] {
        let ranks = vec![rank; shape.ndim() - 1];
        let layer = TtLayer::init_gaussian(&shape, &ranks, &SigmaRule::default(), &mut rng)?;
        let tt = layer.weights();

        let mut meter = AllocMeter::new();
        tt.matvec_batch_metered(&x, &mut meter)?;

        let ms = median(|| {
            let y = tt.matvec_batch(&x).unwrap();
            black_box(y[(0, 0)]);
        });
        println!(
            "{rank:>5} {ms:>10.3} {:>12} {:>14}",
            tt.param_count(),
            meter.peak()
        );
    }
    println!("\nscratch peak is in f64 values; multiply by 8 for bytes");
    Ok(())
}

fn median(mut body: impl FnMut()) -> f64 {
    let mut times = Vec::with_capacity(REPS);
    for rep in 0..WARMUP + REPS {
        let start = Instant::now();
        body();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if rep >= WARMUP {
            times.push(ms);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}
