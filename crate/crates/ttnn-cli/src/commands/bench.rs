//! `ttnn bench`: time a tensor-train matrix product against its dense
//! equivalent and report deployment memory figures.

use std::fs::{self, File};
use std::hint::black_box;
use std::io::Write as _;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttnn::{AllocMeter, DMatrix, ShapePair, SigmaRule, TtLayer};

use crate::commands::median_ms;
use crate::config;
use crate::netspec::broadcast_ranks;
use crate::BenchArgs;

const BYTES_F32: usize = 4;
const MIB: f64 = 1024.0 * 1024.0;

pub fn run(args: &BenchArgs) -> Result<()> {
    let mut cfg = config::resolve_common(&args.common)?;
    if let Some(list) = &args.row_modes {
        cfg.set("bench.row_modes", list);
    }
    if let Some(list) = &args.col_modes {
        cfg.set("bench.col_modes", list);
    }
    if let Some(list) = &args.ranks {
        cfg.set("bench.ranks", list);
    }
    if let Some(batch) = args.batch {
        cfg.set("bench.batch", batch);
    }
    if let Some(reps) = args.reps {
        cfg.set("bench.reps", reps);
    }
    if let Some(warmup) = args.warmup {
        cfg.set("bench.warmup", warmup);
    }
    if args.no_dense {
        cfg.set("bench.dense", false);
    }
    // Default shape: a 4096 x 25088 fully-connected layer, the classic
    // large-VGG matrix, at rank 8.
    cfg.set_default("bench.row_modes", "4,4,4,4,4,4");
    cfg.set_default("bench.col_modes", "2,7,8,8,7,4");
    cfg.set_default("bench.ranks", "8");
    cfg.set_default("bench.batch", 1usize);
    cfg.set_default("bench.reps", 11usize);
    cfg.set_default("bench.warmup", 2usize);
    cfg.set_default("bench.dense", true);
    cfg.set_default("out_dir", ".");

    let common = config::take_common(&mut cfg)?;
    let out_dir = common.out_dir.expect("out_dir is defaulted");
    let row_modes: Vec<usize> = cfg.require_list("bench.row_modes")?;
    let col_modes: Vec<usize> = cfg.require_list("bench.col_modes")?;
    let ranks = broadcast_ranks(
        cfg.require_list("bench.ranks")?,
        col_modes.len().saturating_sub(1),
        "bench.ranks",
    )?;
    let batch: usize = cfg.require("bench.batch")?;
    let reps: usize = cfg.require("bench.reps")?;
    let warmup: usize = cfg.require("bench.warmup")?;
    let time_dense: bool = cfg.require("bench.dense")?;
    cfg.reject_unknown()?;
    if reps == 0 {
        bail!("bench.reps: must be at least 1");
    }
    if batch == 0 {
        bail!("bench.batch: must be at least 1");
    }

    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    cfg.echo_to(&out_dir)?;

    let shape = ShapePair::new(&row_modes, &col_modes)?;
    let (m, n) = (shape.nrows(), shape.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let layer = TtLayer::init_gaussian(&shape, &ranks, &SigmaRule::default(), &mut rng)?;
    let tt = layer.weights();
    let x = DMatrix::from_fn(n, batch, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    println!(
        "shape {m} x {n}, ranks [{}], batch {batch}: timing {reps} reps after {warmup} warmup",
        tt.ranks()
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );

    let mut meter = AllocMeter::new();
    tt.matvec_batch_metered(&x, &mut meter)?;
    let scratch = meter.peak();

    let mut tt_times = Vec::with_capacity(reps);
    for rep in 0..warmup + reps {
        let start = Instant::now();
        let y = tt.matvec_batch(&x)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        black_box(y[(0, 0)]);
        if rep >= warmup {
            tt_times.push(elapsed);
        }
    }
    let tt_median = median_ms(&mut tt_times);
    let tt_params = tt.param_count();
    println!(
        "tt:    median {:.3} ms (min {:.3}, max {:.3})",
        tt_median,
        tt_times.first().unwrap(),
        tt_times.last().unwrap()
    );
    println!(
        "tt:    {} params = {:.3} MiB as f32, scratch peak {} values = {:.3} MiB as f32",
        tt_params,
        (tt_params * BYTES_F32) as f64 / MIB,
        scratch,
        (scratch * BYTES_F32) as f64 / MIB
    );

    let activations = (m + n) * batch;
    let mut rows = vec![BenchRow {
        kind: "tt",
        ms_median: tt_median,
        ms_min: tt_times[0],
        ms_max: tt_times[tt_times.len() - 1],
        params: tt_params,
        weight_mib_f32: (tt_params * BYTES_F32) as f64 / MIB,
        aux_mib_f32: (scratch * BYTES_F32) as f64 / MIB,
    }];

    if time_dense {
        let w = DMatrix::from_fn(m, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let mut dense_times = Vec::with_capacity(reps);
        for rep in 0..warmup + reps {
            let start = Instant::now();
            let y = &w * &x;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            black_box(y[(0, 0)]);
            if rep >= warmup {
                dense_times.push(elapsed);
            }
        }
        let dense_median = median_ms(&mut dense_times);
        println!(
            "dense: median {:.3} ms (min {:.3}, max {:.3})",
            dense_median,
            dense_times.first().unwrap(),
            dense_times.last().unwrap()
        );
        println!(
            "dense: {} params = {:.3} MiB as f32, activations {} values = {:.3} MiB as f32",
            m * n,
            (m * n * BYTES_F32) as f64 / MIB,
            activations,
            (activations * BYTES_F32) as f64 / MIB
        );
        if tt_median > 0.0 {
            println!("speedup: {:.1}x", dense_median / tt_median);
        }
        rows.push(BenchRow {
            kind: "dense",
            ms_median: dense_median,
            ms_min: dense_times[0],
            ms_max: dense_times[dense_times.len() - 1],
            params: m * n,
            weight_mib_f32: (m * n * BYTES_F32) as f64 / MIB,
            aux_mib_f32: (activations * BYTES_F32) as f64 / MIB,
        });
    }

    let csv_path = out_dir.join("bench.csv");
    let mut csv =
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    writeln!(
        csv,
        "kind,ms_median,ms_min,ms_max,reps,warmup,batch,params,weight_mib_f32,aux_mib_f32"
    )?;
    for row in &rows {
        for value in [row.ms_median, row.ms_min, row.ms_max] {
            if !value.is_finite() {
                bail!("refusing to write a non-finite timing");
            }
        }
        writeln!(
            csv,
            "{},{},{},{},{reps},{warmup},{batch},{},{},{}",
            row.kind, row.ms_median, row.ms_min, row.ms_max, row.params, row.weight_mib_f32,
            row.aux_mib_f32
        )?;
    }
    println!("bench -> {}", csv_path.display());
    Ok(())
}

struct BenchRow {
    kind: &'static str,
    ms_median: f64,
    ms_min: f64,
    ms_max: f64,
    params: usize,
    weight_mib_f32: f64,
    aux_mib_f32: f64,
}
