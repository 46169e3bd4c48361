//! Save a training run, reload it, and continue exactly where it
//! stopped: the checkpoint carries the layers and the optimizer state.
//!
//! ```sh
//! cargo run --example checkpoint_roundtrip
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::{
    load_checkpoint, save_checkpoint, train_epoch, Checkpoint, DMatrix, DenseLayer, Layer,
    Network, SgdMomentumState, ShapePair, SigmaRule, TtLayer,
};

fn main() -> ttnn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<usize> = (0..64).map(|s| s % 3).collect();
    let inputs = DMatrix::from_fn(16, 64, |i, s| {
        (labels[s] as f64 - 1.0) * 0.4 + 0.2 * ((i * 7 + s) as f64).sin() + 0.1 * rng.gen::<f64>()
    });

    let shape = ShapePair::new(&[4, 4], &[4, 4])?;
    let tt = TtLayer::init_gaussian(&shape, &[2], &SigmaRule::default(), &mut rng)?;
    let readout = DenseLayer::init_gaussian(3, 16, 0.25, &mut rng)?;
    let mut net = Network::new(vec![Layer::Tt(tt), Layer::Relu, Layer::Dense(readout)])?;
    let mut opt = SgdMomentumState::new(&net, 0.05, 0.9, 1e-4)?;

    let first = train_epoch(&mut net, &inputs, &labels, &mut opt, 0, 8, &mut rng)?;
    println!("epoch 0: loss {:.5}", first.loss);

    // Persist everything mid-run.
    let dir = std::env::temp_dir().join("ttnn-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("run.ttnet");
    save_checkpoint(&path, &Checkpoint::capture(&net, Some(&opt), "toy run"))?;
    println!("saved {}", path.display());

    // Reload into fresh objects; the forward pass is bit-identical.
    let restored = load_checkpoint(&path)?;
    let mut net2 = restored.to_network()?;
    let mut opt2 = restored.optimizer.clone().expect("optimizer was saved");
    assert_eq!(net.forward(&inputs)?, net2.forward(&inputs)?);
    println!("restored network reproduces the forward pass exactly");

    // Continuing from the checkpoint matches continuing the original,
    // shuffle and all, when the data rng is seeded the same way.
    let mut rng_a = ChaCha8Rng::seed_from_u64(99);
    let mut rng_b = rng_a.clone();
    let cont_a = train_epoch(&mut net, &inputs, &labels, &mut opt, 1, 8, &mut rng_a)?;
    let cont_b = train_epoch(&mut net2, &inputs, &labels, &mut opt2, 1, 8, &mut rng_b)?;
    assert_eq!(cont_a.loss.to_bits(), cont_b.loss.to_bits());
    assert_eq!(net.param_slices(), net2.param_slices());
    println!(
        "one more epoch on each: identical losses ({:.5}) and parameters",
        cont_a.loss
    );
    Ok(())
}
