//! `ttnn gradcheck`: verify the analytic gradients of a tensor-train
//! layer against central finite differences of a quadratic probe loss
//! `0.5 * ||forward(x) - t||^2`. The probe is exactly quadratic in every
//! parameter, so central differences are exact up to roundoff.

use std::fs;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::{DMatrix, ShapePair, SigmaRule, TtLayer};

use crate::config;
use crate::netspec::broadcast_ranks;
use crate::GradcheckArgs;

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let mut cfg = config::resolve_common(&args.common)?;
    if let Some(list) = &args.row_modes {
        cfg.set("gradcheck.row_modes", list);
    }
    if let Some(list) = &args.col_modes {
        cfg.set("gradcheck.col_modes", list);
    }
    if let Some(list) = &args.ranks {
        cfg.set("gradcheck.ranks", list);
    }
    if let Some(batch) = args.batch {
        cfg.set("gradcheck.batch", batch);
    }
    if let Some(step) = args.step {
        cfg.set("gradcheck.step", step);
    }
    if let Some(tolerance) = args.tolerance {
        cfg.set("gradcheck.tolerance", tolerance);
    }
    if let Some(perturb) = args.perturb {
        cfg.set("gradcheck.perturb", perturb);
    }
    cfg.set_default("gradcheck.row_modes", "2,3");
    cfg.set_default("gradcheck.col_modes", "3,2");
    cfg.set_default("gradcheck.ranks", "2");
    cfg.set_default("gradcheck.batch", 2usize);
    cfg.set_default("gradcheck.step", 1e-4);
    cfg.set_default("gradcheck.tolerance", 1e-6);

    let common = config::take_common(&mut cfg)?;
    let row_modes: Vec<usize> = cfg.require_list("gradcheck.row_modes")?;
    let col_modes: Vec<usize> = cfg.require_list("gradcheck.col_modes")?;
    let ranks = broadcast_ranks(
        cfg.require_list("gradcheck.ranks")?,
        col_modes.len().saturating_sub(1),
        "gradcheck.ranks",
    )?;
    let batch: usize = cfg.require("gradcheck.batch")?;
    let step: f64 = cfg.require("gradcheck.step")?;
    let tolerance: f64 = cfg.require("gradcheck.tolerance")?;
    let perturb: Option<f64> = cfg.get("gradcheck.perturb")?;
    cfg.reject_unknown()?;
    if let Some(dir) = &common.out_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        cfg.echo_to(dir)?;
    }
    if batch == 0 {
        bail!("gradcheck.batch: must be at least 1");
    }
    if !(step > 0.0 && step.is_finite()) {
        bail!("gradcheck.step: must be a positive number");
    }
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        bail!("gradcheck.tolerance: must be a positive number");
    }

    let shape = ShapePair::new(&row_modes, &col_modes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let layer = TtLayer::init_gaussian(&shape, &ranks, &SigmaRule::default(), &mut rng)?;
    let x = DMatrix::from_fn(shape.ncols(), batch, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let target = DMatrix::from_fn(shape.nrows(), batch, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    println!(
        "checking tt layer {} -> {} (ranks [{}]), batch {batch}",
        shape.ncols(),
        shape.nrows(),
        layer
            .weights()
            .ranks()
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );

    // A zero upstream gradient must propagate to exactly zero parameter
    // gradients -- no roundoff allowed, the sweep is linear in dy.
    let zero_grads = layer.backward(&x, &DMatrix::zeros(shape.nrows(), batch))?;
    let mut zero_entries = 0usize;
    for slice in zero_grads.param_slices() {
        if slice.iter().any(|&g| g != 0.0) {
            bail!("zero upstream gradient produced a nonzero parameter gradient");
        }
        zero_entries += slice.len();
    }
    if zero_grads.input.iter().any(|&g| g != 0.0) {
        bail!("zero upstream gradient produced a nonzero input gradient");
    }
    println!("zero upstream gradient: all {zero_entries} analytic entries exactly zero");

    let y = layer.forward(&x)?;
    let mut grads = layer.backward(&x, &(&y - &target))?;
    if let Some(amount) = perturb {
        grads.cores[0].data_mut()[0] += amount;
        println!("injected {amount} into one analytic core gradient");
    }

    let loss = |layer: &TtLayer, x: &DMatrix<f64>| -> Result<f64> {
        let y = layer.forward(x)?;
        Ok(0.5 * (&y - &target).norm_squared())
    };

    let mut worst: f64 = 0.0;
    let mut params = 0usize;

    // Parameters: every core entry, then the bias.
    let mut probe = layer.clone();
    for core in 0..grads.cores.len() {
        for idx in 0..grads.cores[core].len() {
            let analytic = grads.cores[core].data()[idx];
            let base = probe.weights().cores()[core].data()[idx];
            probe.weights_mut().cores_mut()[core].data_mut()[idx] = base + step;
            let plus = loss(&probe, &x)?;
            probe.weights_mut().cores_mut()[core].data_mut()[idx] = base - step;
            let minus = loss(&probe, &x)?;
            probe.weights_mut().cores_mut()[core].data_mut()[idx] = base;
            worst = worst.max(relative_gap(analytic, (plus - minus) / (2.0 * step)));
            params += 1;
        }
    }
    for idx in 0..grads.bias.len() {
        let analytic = grads.bias[idx];
        let base = probe.bias()[idx];
        probe.bias_mut()[idx] = base + step;
        let plus = loss(&probe, &x)?;
        probe.bias_mut()[idx] = base - step;
        let minus = loss(&probe, &x)?;
        probe.bias_mut()[idx] = base;
        worst = worst.max(relative_gap(analytic, (plus - minus) / (2.0 * step)));
        params += 1;
    }

    // Inputs.
    let mut x_probe = x.clone();
    for idx in 0..x.len() {
        let analytic = grads.input[idx];
        let base = x_probe[idx];
        x_probe[idx] = base + step;
        let plus = loss(&layer, &x_probe)?;
        x_probe[idx] = base - step;
        let minus = loss(&layer, &x_probe)?;
        x_probe[idx] = base;
        worst = worst.max(relative_gap(analytic, (plus - minus) / (2.0 * step)));
    }

    println!(
        "max relative deviation: {worst:.3e} over {params} parameters and {} inputs \
         (tolerance {tolerance:.0e})",
        x.len()
    );
    if worst > tolerance {
        bail!("gradient check failed: {worst:.3e} exceeds tolerance {tolerance:.0e}");
    }
    println!("gradient check passed");
    Ok(())
}

fn relative_gap(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}
