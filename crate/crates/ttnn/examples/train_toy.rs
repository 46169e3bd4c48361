//! Train a small network with a tensor-train layer on synthetic data.
//!
//! Four Gaussian blobs in 64 dimensions, classified by a tt layer, a
//! ReLU, and a dense readout. No data files needed.
//!
//! ```sh
//! cargo run --example train_toy
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::{
    evaluate, train_epoch, DMatrix, DenseLayer, Layer, Network, SgdMomentumState, ShapePair,
    SigmaRule, TtLayer,
};

const CLASSES: usize = 4;
const DIM: usize = 64;

fn main() -> ttnn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // Blob centers are random unit-ish directions; samples add noise.
    let centers = DMatrix::from_fn(DIM, CLASSES, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let sample = |count: usize, rng: &mut ChaCha8Rng| {
        let labels: Vec<usize> = (0..count).map(|s| s % CLASSES).collect();
        let images = DMatrix::from_fn(DIM, count, |i, s| {
            centers[(i, labels[s])] + 0.3 * (rng.gen::<f64>() * 2.0 - 1.0)
        });
        (images, labels)
    };
    let (train_x, train_y) = sample(256, &mut rng);
    let (test_x, test_y) = sample(128, &mut rng);

    // 64 = 4*4*4 on both sides of the tt layer.
    let shape = ShapePair::new(&[4, 4, 4], &[4, 4, 4])?;
    let tt = TtLayer::init_gaussian(&shape, &[4, 4], &SigmaRule::default(), &mut rng)?;
    let readout = DenseLayer::init_gaussian(CLASSES, DIM, 1.0 / (DIM as f64).sqrt(), &mut rng)?;
    let mut net = Network::new(vec![Layer::Tt(tt), Layer::Relu, Layer::Dense(readout)])?;
    println!("network: {} trainable parameters", net.param_count());

    let mut opt = SgdMomentumState::new(&net, 0.05, 0.9, 5e-4)?;
    for epoch in 0..8 {
        let metrics = train_epoch(&mut net, &train_x, &train_y, &mut opt, epoch, 16, &mut rng)?;
        let test_err = evaluate(&net, &test_x, &test_y)?;
        println!(
            "epoch {epoch}: loss {:.4}, train err {:.3}, test err {:.3}",
            metrics.loss, metrics.error_rate, test_err
        );
    }

    let final_err = evaluate(&net, &test_x, &test_y)?;
    println!("final test error rate: {final_err:.3}");
    Ok(())
}
