//! Gradient verification across the layer configuration grid: central
//! finite differences, a brute-force dense-gradient oracle, and linearity
//! of the backward map.

mod common;

use common::{dual_route_gap, finite_difference_gap, layer_grid, random_matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_grid_configuration_passes_finite_difference_checks() {
    for (i, config) in layer_grid().iter().enumerate() {
        let gap = finite_difference_gap(config, 100 + i as u64);
        assert!(
            gap <= 1e-6,
            "config {i} ({:?}x{:?} ranks {:?} batch {}): worst relative gap {gap:.3e}",
            config.row_modes,
            config.col_modes,
            config.ranks,
            config.batch
        );
    }
}

#[test]
fn core_gradients_match_brute_force_dense_contraction() {
    for (i, config) in layer_grid().iter().enumerate() {
        let gap = dual_route_gap(config, 200 + i as u64);
        assert!(
            gap <= 1e-8,
            "config {i} ({:?}x{:?} ranks {:?} batch {}): worst core gap {gap:.3e}",
            config.row_modes,
            config.col_modes,
            config.ranks,
            config.batch
        );
    }
}

#[test]
fn backward_is_linear_in_the_output_gradient() {
    let config = &layer_grid()[4];
    let layer = config.layer(300);
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let x = random_matrix(layer.shape().ncols(), config.batch, &mut rng);
    let dy1 = random_matrix(layer.shape().nrows(), config.batch, &mut rng);
    let dy2 = random_matrix(layer.shape().nrows(), config.batch, &mut rng);
    let (a, b) = (0.37, -1.21);

    let g1 = layer.backward(&x, &dy1).unwrap();
    let g2 = layer.backward(&x, &dy2).unwrap();
    let combined = layer.backward(&x, &(&dy1 * a + &dy2 * b)).unwrap();

    let close = |found: f64, want: f64| (found - want).abs() <= 1e-10 * want.abs().max(1.0);
    for ((c, c1), c2) in combined.cores.iter().zip(&g1.cores).zip(&g2.cores) {
        for ((v, v1), v2) in c.data().iter().zip(c1.data()).zip(c2.data()) {
            assert!(close(*v, a * v1 + b * v2));
        }
    }
    for ((v, v1), v2) in combined.bias.iter().zip(&g1.bias).zip(&g2.bias) {
        assert!(close(*v, a * v1 + b * v2));
    }
    for ((v, v1), v2) in combined.input.iter().zip(g1.input.iter()).zip(g2.input.iter()) {
        assert!(close(*v, a * v1 + b * v2));
    }
}
