//! `ttnn compress`: factorize a dense matrix into tensor-train form, or
//! just report how many parameters a factorized shape would need.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ttnn::{
    save_checkpoint, Checkpoint, Core4, Layer, ShapePair, TruncationPolicy, TtLayer, TtMatrix,
};

use crate::config;
use crate::matfile;
use crate::CompressArgs;

pub fn run(args: &CompressArgs) -> Result<()> {
    let mut cfg = config::resolve_common(&args.common)?;
    if let Some(list) = &args.row_modes {
        cfg.set("compress.row_modes", list);
    }
    if let Some(list) = &args.col_modes {
        cfg.set("compress.col_modes", list);
    }
    if let Some(rank) = args.rank {
        cfg.set("compress.rank", rank);
    }
    if let Some(eps) = args.eps {
        cfg.set("compress.eps", eps);
    }
    if let Some(path) = &args.matrix {
        cfg.set("compress.matrix", path.display());
    }
    if let Some(path) = &args.out {
        cfg.set("compress.out", path.display());
    }

    let common = config::take_common(&mut cfg)?;
    let row_modes: Vec<usize> = cfg.require_list("compress.row_modes")?;
    let col_modes: Vec<usize> = cfg.require_list("compress.col_modes")?;
    let rank: Option<usize> = cfg.get("compress.rank")?;
    let eps: Option<f64> = cfg.get("compress.eps")?;
    let matrix_path: Option<PathBuf> = cfg.get_str("compress.matrix").map(PathBuf::from);
    let out_path: Option<PathBuf> = cfg.get_str("compress.out").map(PathBuf::from);
    cfg.reject_unknown()?;
    if let Some(dir) = &common.out_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        cfg.echo_to(dir)?;
    }

    if rank.is_some() && eps.is_some() {
        bail!("give either compress.rank or compress.eps, not both");
    }
    let shape =
        ShapePair::new(&row_modes, &col_modes).context("compress.row_modes/compress.col_modes")?;

    let tt = match &matrix_path {
        None => {
            let Some(r) = rank else {
                bail!("a budget report needs compress.rank; compress.eps requires --matrix");
            };
            if out_path.is_some() {
                bail!("writing a checkpoint requires --matrix");
            }
            budget_train(&shape, r)?
        }
        Some(path) => {
            let w = matfile::read_matrix(path)?;
            if (w.nrows(), w.ncols()) != (shape.nrows(), shape.ncols()) {
                bail!(
                    "matrix is {} x {}, but the factorized shape needs {} x {}",
                    w.nrows(),
                    w.ncols(),
                    shape.nrows(),
                    shape.ncols()
                );
            }
            let policy = match (rank, eps) {
                (Some(r), None) => TruncationPolicy::max_rank(r)?,
                (None, Some(e)) => TruncationPolicy::rel_tolerance(e)?,
                (None, None) => bail!("give compress.rank or compress.eps"),
                (Some(_), Some(_)) => unreachable!("rejected above"),
            };
            let tt = TtMatrix::from_dense(&w, &shape, &policy).context("factorizing the matrix")?;
            let back = tt.to_dense().context("reconstructing for the error report")?;
            let norm = w.norm();
            let error = if norm > 0.0 {
                (&back - &w).norm() / norm
            } else {
                back.norm()
            };
            println!("relative reconstruction error: {error:.3e}");
            tt
        }
    };

    println!(
        "shape: {} x {} (modes [{}] x [{}])",
        tt.nrows(),
        tt.ncols(),
        join(shape.row_modes()),
        join(shape.col_modes())
    );
    println!("ranks: [{}]", join(&tt.ranks()));
    println!("tt params: {}", tt.param_count());
    println!("dense params: {}", tt.nrows() * tt.ncols());
    println!("compression: {:.0}x", tt.compression_factor());

    if let Some(path) = out_path {
        let bias = vec![0.0; tt.nrows()];
        let layer = TtLayer::new(tt, bias).context("wrapping the matrix as a layer")?;
        let checkpoint = Checkpoint {
            layers: vec![Layer::Tt(layer)],
            optimizer: None,
            config: cfg.render(),
        };
        save_checkpoint(&path, &checkpoint)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("checkpoint -> {}", path.display());
    }
    Ok(())
}

/// An all-zero train with every internal rank at `min(rank, feasible)`,
/// used purely for parameter accounting.
fn budget_train(shape: &ShapePair, rank: usize) -> Result<TtMatrix> {
    if rank == 0 {
        bail!("compress.rank: must be at least 1");
    }
    let row_modes = shape.row_modes();
    let col_modes = shape.col_modes();
    let d = row_modes.len();
    let mut ranks = vec![1usize; d + 1];
    for (bond, slot) in ranks.iter_mut().enumerate().take(d).skip(1) {
        let mut left: u128 = 1;
        for k in 0..bond {
            left = left.saturating_mul((row_modes[k] * col_modes[k]) as u128);
        }
        let mut right: u128 = 1;
        for k in bond..d {
            right = right.saturating_mul((row_modes[k] * col_modes[k]) as u128);
        }
        *slot = (rank as u128).min(left).min(right) as usize;
    }
    let cores = (0..d)
        .map(|k| Core4::zeros(ranks[k], row_modes[k], col_modes[k], ranks[k + 1]))
        .collect::<ttnn::Result<Vec<_>>>()?;
    Ok(TtMatrix::from_cores(shape.clone(), cores)?)
}

fn join(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_matches_the_reference_accounting() {
        let shape = ShapePair::new(&[4, 4, 4, 4, 4, 4], &[2, 7, 8, 8, 7, 4]).unwrap();
        let tt = budget_train(&shape, 2).unwrap();
        assert_eq!(tt.param_count(), 528);
        assert_eq!(tt.compression_factor().floor(), 194_622.0);
    }

    #[test]
    fn budget_ranks_clip_at_the_boundaries() {
        let shape = ShapePair::new(&[2, 2, 2], &[1, 1, 1]).unwrap();
        let tt = budget_train(&shape, 100).unwrap();
        assert_eq!(tt.ranks(), vec![1, 2, 2, 1]);
    }
}
