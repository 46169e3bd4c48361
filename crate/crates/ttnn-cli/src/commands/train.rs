//! `ttnn train`: fit the configured network, logging one metrics row per
//! epoch and writing a resumable checkpoint.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttnn::{
    evaluate, load_mnist_dir, save_checkpoint, train_epoch, Checkpoint, LrSchedule,
    SgdMomentumState,
};

use crate::commands::{apply_limit, parse_resize};
use crate::config::{self, FlatConfig};
use crate::netspec;
use crate::TrainArgs;

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg = config::resolve_common(&args.common)?;
    if let Some(dir) = &args.data_dir {
        cfg.set("data.dir", dir.display());
    }
    if let Some(epochs) = args.epochs {
        cfg.set("train.epochs", epochs);
    }
    if let Some(batch) = args.batch_size {
        cfg.set("train.batch_size", batch);
    }
    apply_defaults(&mut cfg);

    let common = config::take_common(&mut cfg)?;
    let out_dir = common.out_dir.expect("out_dir is defaulted");

    let data_dir = PathBuf::from(cfg.require_str("data.dir")?);
    let resize = parse_resize(&cfg.require_str("data.resize")?)?;
    let limit_train: Option<usize> = cfg.get("data.limit_train")?;
    let limit_test: Option<usize> = cfg.get("data.limit_test")?;
    let epochs: usize = cfg.require("train.epochs")?;
    let batch_size: usize = cfg.require("train.batch_size")?;
    if epochs == 0 {
        bail!("train.epochs: must be at least 1");
    }
    if batch_size == 0 {
        bail!("train.batch_size: must be at least 1");
    }
    let lr: f64 = cfg.require("opt.lr")?;
    let momentum: f64 = cfg.require("opt.momentum")?;
    let weight_decay: f64 = cfg.require("opt.weight_decay")?;
    let decay_factor: Option<f64> = cfg.get("opt.decay_factor")?;
    let decay_epochs: Option<Vec<usize>> = cfg.get_list("opt.decay_epochs")?;
    let specs = netspec::parse_layers(&mut cfg)?;
    cfg.reject_unknown()?;

    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let resolved = cfg.render();
    let echo_path = cfg.echo_to(&out_dir)?;
    println!("resolved config -> {}", echo_path.display());

    let (train_full, test_full) = load_mnist_dir(&data_dir, resize)
        .with_context(|| format!("loading dataset from {}", data_dir.display()))?;
    let train = apply_limit(train_full, limit_train)?;
    let test = apply_limit(test_full, limit_test)?;
    println!(
        "data: {} train / {} test samples, {} features",
        train.len(),
        test.len(),
        train.feature_dim()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let mut net = netspec::build_network(&specs, &mut rng)?;
    print!("{}", netspec::describe_network(&net));

    let mut opt = SgdMomentumState::new(&net, lr, momentum, weight_decay)?;
    match (decay_factor, decay_epochs) {
        (Some(factor), Some(epochs)) => {
            opt = opt.with_schedule(LrSchedule::StepDecay { factor, epochs })?;
        }
        (None, None) => {}
        _ => bail!("opt.decay_factor and opt.decay_epochs must be set together"),
    }

    let metrics_path = out_dir.join("metrics.csv");
    let mut csv = File::create(&metrics_path)
        .with_context(|| format!("creating {}", metrics_path.display()))?;
    writeln!(csv, "epoch,step,train_loss,train_err,test_err,lr,wall_s")?;

    let mut steps = 0usize;
    for epoch in 0..epochs {
        let metrics = train_epoch(
            &mut net,
            train.images(),
            train.labels(),
            &mut opt,
            epoch,
            batch_size,
            &mut rng,
        )
        .with_context(|| format!("training epoch {epoch}"))?;
        steps += train.len().div_ceil(batch_size);
        let test_err = evaluate(&net, test.images(), test.labels())?;
        let rate = opt.learning_rate(epoch);
        for value in [
            metrics.loss,
            metrics.error_rate,
            test_err,
            rate,
            metrics.seconds,
        ] {
            if !value.is_finite() {
                bail!("refusing to write a non-finite metric at epoch {epoch}");
            }
        }
        writeln!(
            csv,
            "{epoch},{steps},{},{},{},{},{}",
            metrics.loss, metrics.error_rate, test_err, rate, metrics.seconds
        )?;
        csv.flush()?;
        println!(
            "epoch {epoch}: loss {:.4}, train err {:.4}, test err {:.4}, lr {}, {:.1}s",
            metrics.loss, metrics.error_rate, test_err, rate, metrics.seconds
        );
    }

    let checkpoint_path = out_dir.join("checkpoint.ttnet");
    save_checkpoint(
        &checkpoint_path,
        &Checkpoint::capture(&net, Some(&opt), resolved),
    )
    .with_context(|| format!("writing {}", checkpoint_path.display()))?;
    println!("checkpoint -> {}", checkpoint_path.display());
    println!("metrics -> {}", metrics_path.display());
    Ok(())
}

fn apply_defaults(cfg: &mut FlatConfig) {
    cfg.set_default("out_dir", "run");
    cfg.set_default("data.resize", "pad");
    cfg.set_default("train.epochs", 20usize);
    cfg.set_default("train.batch_size", 32usize);
    cfg.set_default("opt.lr", 0.05);
    cfg.set_default("opt.momentum", 0.9);
    cfg.set_default("opt.weight_decay", 0.0005);
}
