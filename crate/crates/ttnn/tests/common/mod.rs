//! Shared helpers for the integration suites: a fixed grid of layer
//! configurations, finite-difference gradient checks, and a brute-force
//! oracle that rebuilds core gradients entry by entry from the dense
//! weight gradient.
//!
//! Each integration target compiles this module separately and uses a
//! subset of it.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::layer::SigmaRule;
use ttnn::{Core4, ShapePair, TtLayer, TtMatrix};

/// One tensor-train layer configuration under test.
#[derive(Debug, Clone)]
pub struct LayerConfig {
    pub row_modes: Vec<usize>,
    pub col_modes: Vec<usize>,
    pub ranks: Vec<usize>,
    pub batch: usize,
}

impl LayerConfig {
    fn new(row_modes: &[usize], col_modes: &[usize], ranks: &[usize], batch: usize) -> Self {
        LayerConfig {
            row_modes: row_modes.to_vec(),
            col_modes: col_modes.to_vec(),
            ranks: ranks.to_vec(),
            batch,
        }
    }

    pub fn shape(&self) -> ShapePair {
        ShapePair::new(&self.row_modes, &self.col_modes).expect("grid shapes are valid")
    }

    pub fn layer(&self, seed: u64) -> TtLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = TtLayer::init_gaussian(
            &self.shape(),
            &self.ranks,
            &SigmaRule::VarianceScaled { target: 1.0 },
            &mut rng,
        )
        .expect("grid configurations are constructible");
        // A random bias so its gradient is exercised from a generic point.
        for b in layer.bias_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        layer
    }
}

/// Fixed test grid: depths 2-4, mode sizes up to 4 (including size-1
/// modes), ranks up to 3, batches up to 3.
pub fn layer_grid() -> Vec<LayerConfig> {
    vec![
        LayerConfig::new(&[2, 3], &[3, 2], &[2], 1),
        LayerConfig::new(&[4, 2], &[2, 4], &[3], 3),
        LayerConfig::new(&[2, 2, 3], &[3, 2, 2], &[2, 3], 2),
        LayerConfig::new(&[4, 1, 2], &[1, 4, 2], &[3, 1], 3),
        LayerConfig::new(&[2, 2, 2, 2], &[2, 2, 2, 2], &[2, 3, 2], 2),
        LayerConfig::new(&[3, 2, 4, 2], &[2, 3, 2, 4], &[1, 2, 3], 3),
    ]
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Quadratic probe loss `L = 0.5 ||y - t||_F^2`, whose logit gradient is
/// `y - t`. Linear in every single parameter, so central differences are
/// exact up to roundoff.
pub fn quadratic_loss(y: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let diff = y - target;
    (0.5 * diff.iter().map(|v| v * v).sum::<f64>(), diff)
}

fn relative_gap(found: f64, want: f64) -> f64 {
    (found - want).abs() / want.abs().max(1.0)
}

/// Central-difference check of every core entry, bias entry, and input
/// entry of one grid configuration. Returns the worst relative gap.
pub fn finite_difference_gap(config: &LayerConfig, seed: u64) -> f64 {
    let mut layer = config.layer(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let x = random_matrix(layer.shape().ncols(), config.batch, &mut rng);
    let target = random_matrix(layer.shape().nrows(), config.batch, &mut rng);

    let y = layer.forward(&x).unwrap();
    let (_, dy) = quadratic_loss(&y, &target);
    let grads = layer.backward(&x, &dy).unwrap();
    let analytic: Vec<Vec<f64>> = grads
        .param_slices()
        .into_iter()
        .map(|s| s.to_vec())
        .collect();

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let loss_at = |layer: &TtLayer, x: &DMatrix<f64>| {
        quadratic_loss(&layer.forward(x).unwrap(), &target).0
    };
    for (a, expect) in analytic.iter().enumerate() {
        for (k, &want) in expect.iter().enumerate() {
            let orig = layer.param_slices_mut()[a][k];
            layer.param_slices_mut()[a][k] = orig + h;
            let plus = loss_at(&layer, &x);
            layer.param_slices_mut()[a][k] = orig - h;
            let minus = loss_at(&layer, &x);
            layer.param_slices_mut()[a][k] = orig;
            worst = worst.max(relative_gap((plus - minus) / (2.0 * h), want));
        }
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut plus = x.clone();
            plus[(i, j)] += h;
            let mut minus = x.clone();
            minus[(i, j)] -= h;
            let fd = (loss_at(&layer, &plus) - loss_at(&layer, &minus)) / (2.0 * h);
            worst = worst.max(relative_gap(fd, grads.input[(i, j)]));
        }
    }
    worst
}

/// Rebuilds each core gradient from the dense weight gradient
/// `dW = dy xᵀ` by brute force: for every matrix entry `(t, l)` the chain
/// rule contributes `dW[t,l] * prefix[alpha] * suffix[beta]` to
/// `dG_k[alpha, i_k, j_k, beta]`, with prefix/suffix the chained slice
/// products around core `k`. Independent of the sweep implementation.
pub fn brute_force_core_gradients(weights: &TtMatrix, dw: &DMatrix<f64>) -> Vec<Core4> {
    let d = weights.shape().ndim();
    let ranks = weights.ranks();
    let mut grads: Vec<Core4> = weights
        .cores()
        .iter()
        .map(|c| Core4::zeros(c.r_prev(), c.row_mode(), c.col_mode(), c.r_next()).unwrap())
        .collect();

    for t in 0..weights.nrows() {
        let rows = weights.shape().row_map().flat_to_multi(t).unwrap();
        for l in 0..weights.ncols() {
            let cols = weights.shape().col_map().flat_to_multi(l).unwrap();
            let slices: Vec<DMatrix<f64>> = (0..d)
                .map(|k| weights.core(k).slice(rows[k], cols[k]))
                .collect();

            // prefix[k]: product of slices 0..k (1 x r_k).
            let mut prefix: Vec<RowDVector<f64>> = Vec::with_capacity(d + 1);
            prefix.push(RowDVector::from_element(1, 1.0));
            for s in &slices {
                let last = prefix.last().unwrap();
                prefix.push(last * s);
            }
            // suffix[k]: product of slices k..d (r_k x 1).
            let mut suffix = vec![DVector::from_element(1, 1.0); d + 1];
            for k in (0..d).rev() {
                suffix[k] = &slices[k] * &suffix[k + 1];
            }

            let scale = dw[(t, l)];
            for k in 0..d {
                let core = &mut grads[k];
                let (m, pre, post) = (core.row_mode(), ranks[k], ranks[k + 1]);
                let f = rows[k] + m * cols[k];
                let mn = core.row_mode() * core.col_mode();
                for (q, &suf) in suffix[k + 1].iter().enumerate().take(post) {
                    for (p, &pre_val) in prefix[k].iter().enumerate().take(pre) {
                        core.data_mut()[p + pre * (f + mn * q)] += scale * pre_val * suf;
                    }
                }
            }
        }
    }
    grads
}

/// Worst per-core Frobenius-relative gap between the sweep gradients and
/// the brute-force oracle for one grid configuration.
pub fn dual_route_gap(config: &LayerConfig, seed: u64) -> f64 {
    let layer = config.layer(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51f0_55aa);
    let x = random_matrix(layer.shape().ncols(), config.batch, &mut rng);
    let dy = random_matrix(layer.shape().nrows(), config.batch, &mut rng);

    let grads = layer.backward(&x, &dy).unwrap();
    let dw = &dy * x.transpose();
    let oracle = brute_force_core_gradients(layer.weights(), &dw);

    let mut worst: f64 = 0.0;
    for (got, want) in grads.cores.iter().zip(&oracle) {
        let num: f64 = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = want.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(num / den.max(1.0));
    }
    worst
}
