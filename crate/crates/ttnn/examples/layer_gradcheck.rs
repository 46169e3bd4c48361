//! Verify a tensor-train layer's analytic gradients numerically.
//!
//! The probe loss 0.5*||y - t||^2 is exactly quadratic in every
//! parameter of the layer (the map is multilinear), so central finite
//! differences agree with the analytic gradient to machine precision.
//!
//! ```sh
//! cargo run --example layer_gradcheck
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::{DMatrix, ShapePair, SigmaRule, TtLayer};

fn main() -> ttnn::Result<()> {
    let shape = ShapePair::new(&[3, 4], &[4, 3])?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let layer = TtLayer::init_gaussian(&shape, &[3], &SigmaRule::default(), &mut rng)?;
    let x = DMatrix::from_fn(12, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let target = DMatrix::from_fn(12, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);

    let y = layer.forward(&x)?;
    let grads = layer.backward(&x, &(&y - &target))?;

    let loss = |layer: &TtLayer| -> ttnn::Result<f64> {
        Ok(0.5 * (&layer.forward(&x)? - &target).norm_squared())
    };

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut probe = layer.clone();
    for core in 0..grads.cores.len() {
        for idx in 0..grads.cores[core].len() {
            let analytic = grads.cores[core].data()[idx];
            let base = probe.weights().cores()[core].data()[idx];
            probe.weights_mut().cores_mut()[core].data_mut()[idx] = base + h;
            let plus = loss(&probe)?;
            probe.weights_mut().cores_mut()[core].data_mut()[idx] = base - h;
            let minus = loss(&probe)?;
            probe.weights_mut().cores_mut()[core].data_mut()[idx] = base;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
            checked += 1;
        }
    }
    for idx in 0..grads.bias.len() {
        let analytic = grads.bias[idx];
        let base = probe.bias()[idx];
        probe.bias_mut()[idx] = base + h;
        let plus = loss(&probe)?;
        probe.bias_mut()[idx] = base - h;
        let minus = loss(&probe)?;
        probe.bias_mut()[idx] = base;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
        checked += 1;
    }

    println!(
        "checked {checked} parameters of a {} -> {} layer (ranks {:?})",
        shape.ncols(),
        shape.nrows(),
        layer.weights().ranks()
    );
    println!("max relative deviation from finite differences: {worst:.3e}");
    assert!(worst < 1e-6, "gradient check failed");
    println!("analytic gradients confirmed");
    Ok(())
}
