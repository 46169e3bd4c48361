//! Train the headline MNIST architecture: a rank-8 tensor-train layer
//! over 32x32 zero-padded digits, a ReLU, and a dense readout.
//!
//! Expects the four standard idx files in `$TTNN_MNIST_DIR` (or
//! `data/mnist/` at the repository root):
//!   train-images-idx3-ubyte, train-labels-idx1-ubyte,
//!   t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte
//!
//! ```sh
//! TTNN_MNIST_DIR=/path/to/mnist cargo run --release --example train_mnist
//! ```
//!
//! Optional: TTNN_MNIST_EPOCHS (default 20), TTNN_MNIST_LIMIT (cap the
//! training set for a quick look).

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttnn::{
    evaluate, load_mnist_dir, train_epoch, DenseLayer, Layer, Network, ResizeMode,
    SgdMomentumState, ShapePair, SigmaRule, TtLayer,
};

fn mnist_dir() -> PathBuf {
    env::var_os("TTNN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("../../data/mnist")
        })
}

fn env_usize(key: &str, default: usize) -> usize {
    env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> ExitCode {
    let dir = mnist_dir();
    if !dir.join("train-images-idx3-ubyte").exists() {
        println!(
            "MNIST not found at {} -- set TTNN_MNIST_DIR to the directory \
             holding the four idx files",
            dir.display()
        );
        return ExitCode::SUCCESS;
    }
    match run(&dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(dir: &std::path::Path) -> ttnn::Result<()> {
    let epochs = env_usize("TTNN_MNIST_EPOCHS", 20);
    let (mut train, test) = load_mnist_dir(dir, ResizeMode::ZeroPad)?;
    if let Ok(limit) = env::var("TTNN_MNIST_LIMIT") {
        if let Ok(n) = limit.parse::<usize>() {
            if n < train.len() {
                train = train.take(n)?;
            }
        }
    }
    println!(
        "loaded {} train / {} test digits, {} features",
        train.len(),
        test.len(),
        train.feature_dim()
    );

    // 1024 = 4^5 on both sides, every internal rank 8.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let shape = ShapePair::new(&[4, 4, 4, 4, 4], &[4, 4, 4, 4, 4])?;
    let tt = TtLayer::init_gaussian(&shape, &[8, 8, 8, 8], &SigmaRule::default(), &mut rng)?;
    let readout = DenseLayer::init_gaussian(10, 1024, 1.0 / 32.0, &mut rng)?;
    let mut net = Network::new(vec![Layer::Tt(tt), Layer::Relu, Layer::Dense(readout)])?;
    println!(
        "tt layer: {} params (dense equivalent {}), network total {}",
        net.layer(0).param_count(),
        1024 * 1024,
        net.param_count()
    );

    let mut opt = SgdMomentumState::new(&net, 0.05, 0.9, 5e-4)?;
    for epoch in 0..epochs {
        let metrics = train_epoch(
            &mut net,
            train.images(),
            train.labels(),
            &mut opt,
            epoch,
            32,
            &mut rng,
        )?;
        let test_err = evaluate(&net, test.images(), test.labels())?;
        println!(
            "epoch {epoch}: loss {:.4}, train err {:.4}, test err {:.4} ({:.1}s)",
            metrics.loss, metrics.error_rate, test_err, metrics.seconds
        );
    }
    Ok(())
}
