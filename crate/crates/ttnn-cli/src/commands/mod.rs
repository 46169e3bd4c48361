//! The five subcommands. Each resolves its configuration (file, then
//! flag overrides, then defaults), validates it, echoes it when an
//! output directory is in play, and only then starts computing.

pub mod bench;
pub mod compress;
pub mod eval;
pub mod gradcheck;
pub mod train;

use anyhow::{bail, Result};
use ttnn::{DatasetSplit, ResizeMode};

pub(crate) fn parse_resize(text: &str) -> Result<ResizeMode> {
    match text {
        "pad" => Ok(ResizeMode::ZeroPad),
        "bilinear" => Ok(ResizeMode::Bilinear),
        other => bail!("data.resize: expected pad or bilinear, got {other:?}"),
    }
}

/// Keeps at most the first `limit` samples; `None` keeps everything.
pub(crate) fn apply_limit(split: DatasetSplit, limit: Option<usize>) -> Result<DatasetSplit> {
    match limit {
        Some(n) if n < split.len() => Ok(split.take(n)?),
        _ => Ok(split),
    }
}

/// Median of timed repetitions, in milliseconds.
pub(crate) fn median_ms(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}
