//! `ttnn eval`: score a saved checkpoint on a dataset split.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ttnn::{evaluate, load_checkpoint, load_mnist_dir};

use crate::commands::{apply_limit, parse_resize};
use crate::config;
use crate::EvalArgs;

pub fn run(args: &EvalArgs) -> Result<()> {
    let mut cfg = config::resolve_common(&args.common)?;
    if let Some(path) = &args.checkpoint {
        cfg.set("eval.checkpoint", path.display());
    }
    if let Some(dir) = &args.data_dir {
        cfg.set("data.dir", dir.display());
    }
    if let Some(split) = &args.split {
        cfg.set("eval.split", split);
    }
    if let Some(limit) = args.limit {
        cfg.set("eval.limit", limit);
    }
    cfg.set_default("eval.split", "test");
    cfg.set_default("data.resize", "pad");

    let common = config::take_common(&mut cfg)?;
    let checkpoint_path = PathBuf::from(cfg.require_str("eval.checkpoint")?);
    let data_dir = PathBuf::from(cfg.require_str("data.dir")?);
    let resize = parse_resize(&cfg.require_str("data.resize")?)?;
    let split_name = cfg.require_str("eval.split")?;
    let limit: Option<usize> = cfg.get("eval.limit")?;
    cfg.reject_unknown()?;
    if let Some(dir) = &common.out_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        cfg.echo_to(dir)?;
    }

    let checkpoint = load_checkpoint(&checkpoint_path)
        .with_context(|| format!("loading checkpoint {}", checkpoint_path.display()))?;
    let net = checkpoint
        .to_network()
        .context("rebuilding the network from the checkpoint")?;

    let (train, test) = load_mnist_dir(&data_dir, resize)
        .with_context(|| format!("loading dataset from {}", data_dir.display()))?;
    let split = match split_name.as_str() {
        "train" => train,
        "test" => test,
        other => bail!("eval.split: expected train or test, got {other:?}"),
    };
    let split = apply_limit(split, limit)?;

    if let Some(want) = net.input_dim() {
        if want != split.feature_dim() {
            bail!(
                "network expects {want} input features, data provides {}",
                split.feature_dim()
            );
        }
    }

    let error_rate = evaluate(&net, split.images(), split.labels())?;
    println!("samples: {}", split.len());
    println!("error rate: {error_rate}");
    Ok(())
}
