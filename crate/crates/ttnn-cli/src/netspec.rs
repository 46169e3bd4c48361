//! Network architecture from config keys.
//!
//! Layers are numbered `layer.0`, `layer.1`, ... and each needs a
//! `layer.N.kind` of `tt`, `dense`, `bottleneck`, or `relu`:
//!
//! ```text
//! layer.0.kind      = tt
//! layer.0.row_modes = 4,4,4,4,4
//! layer.0.col_modes = 4,4,4,4,4
//! layer.0.ranks     = 8            # one value broadcasts to every bond
//! layer.1.kind      = relu
//! layer.2.kind      = dense
//! layer.2.rows      = 10
//! layer.2.cols      = 1024
//! ```
//!
//! Every weighted layer takes an optional `layer.N.sigma` (a number, or
//! `auto` for a variance-preserving default).

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rand::Rng;
use ttnn::{
    DenseLayer, Layer, MatrixRankBottleneck, Network, ShapePair, SigmaRule, TtLayer,
};

use crate::config::FlatConfig;

/// Standard deviation choice for Gaussian initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    /// Scale chosen so a unit-variance input keeps unit output variance.
    Auto,
    Fixed(f64),
}

impl FromStr for SigmaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(SigmaSpec::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaSpec::Fixed(v)),
            _ => Err(format!("expected `auto` or a positive number, got {s:?}")),
        }
    }
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Auto => write!(f, "auto"),
            SigmaSpec::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// One layer of the network, as configured.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Tt {
        row_modes: Vec<usize>,
        col_modes: Vec<usize>,
        ranks: Vec<usize>,
        sigma: SigmaSpec,
    },
    Dense {
        rows: usize,
        cols: usize,
        sigma: SigmaSpec,
    },
    Bottleneck {
        rows: usize,
        rank: usize,
        cols: usize,
        sigma: SigmaSpec,
    },
    Relu,
}

/// Expands a one-element rank list to the `bonds` internal bonds of a
/// train; longer lists must match exactly.
pub fn broadcast_ranks(ranks: Vec<usize>, bonds: usize, key: &str) -> Result<Vec<usize>> {
    if ranks.len() == 1 && bonds > 1 {
        return Ok(vec![ranks[0]; bonds]);
    }
    if ranks.len() != bonds {
        bail!(
            "{key}: expected {bonds} internal ranks (or one value to broadcast), got {}",
            ranks.len()
        );
    }
    Ok(ranks)
}

/// Reads `layer.0` upward until the first missing `layer.N.kind`.
pub fn parse_layers(cfg: &mut FlatConfig) -> Result<Vec<LayerSpec>> {
    let mut specs = Vec::new();
    for n in 0.. {
        let kind_key = format!("layer.{n}.kind");
        let Some(kind) = cfg.get_str(&kind_key) else {
            break;
        };
        let sigma_key = format!("layer.{n}.sigma");
        let spec = match kind.as_str() {
            "tt" => {
                let row_modes = cfg.require_list(&format!("layer.{n}.row_modes"))?;
                let col_modes: Vec<usize> = cfg.require_list(&format!("layer.{n}.col_modes"))?;
                let ranks_key = format!("layer.{n}.ranks");
                let ranks = cfg.require_list(&ranks_key)?;
                let bonds = col_modes.len().saturating_sub(1);
                LayerSpec::Tt {
                    row_modes,
                    col_modes,
                    ranks: broadcast_ranks(ranks, bonds, &ranks_key)?,
                    sigma: cfg.get(&sigma_key)?.unwrap_or(SigmaSpec::Auto),
                }
            }
            "dense" => LayerSpec::Dense {
                rows: cfg.require(&format!("layer.{n}.rows"))?,
                cols: cfg.require(&format!("layer.{n}.cols"))?,
                sigma: cfg.get(&sigma_key)?.unwrap_or(SigmaSpec::Auto),
            },
            "bottleneck" => LayerSpec::Bottleneck {
                rows: cfg.require(&format!("layer.{n}.rows"))?,
                rank: cfg.require(&format!("layer.{n}.rank"))?,
                cols: cfg.require(&format!("layer.{n}.cols"))?,
                sigma: cfg.get(&sigma_key)?.unwrap_or(SigmaSpec::Auto),
            },
            "relu" => LayerSpec::Relu,
            other => bail!(
                "{kind_key}: unknown layer kind {other:?} \
                 (expected tt, dense, bottleneck, or relu)"
            ),
        };
        specs.push(spec);
    }
    if specs.is_empty() {
        bail!("no layers configured: set layer.0.kind");
    }
    Ok(specs)
}

/// Builds and initializes the configured network, drawing all weights
/// from `rng` in layer order.
pub fn build_network<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Network> {
    let mut layers = Vec::with_capacity(specs.len());
    for (n, spec) in specs.iter().enumerate() {
        let layer = match spec {
            LayerSpec::Tt {
                row_modes,
                col_modes,
                ranks,
                sigma,
            } => {
                let shape = ShapePair::new(row_modes, col_modes)
                    .with_context(|| format!("layer.{n}: invalid factorized shape"))?;
                let rule = match sigma {
                    SigmaSpec::Auto => SigmaRule::VarianceScaled { target: 1.0 },
                    SigmaSpec::Fixed(s) => SigmaRule::Fixed(*s),
                };
                Layer::Tt(
                    TtLayer::init_gaussian(&shape, ranks, &rule, rng)
                        .with_context(|| format!("layer.{n}: initializing tt layer"))?,
                )
            }
            LayerSpec::Dense { rows, cols, sigma } => {
                let s = match sigma {
                    SigmaSpec::Auto => 1.0 / (*cols as f64).sqrt(),
                    SigmaSpec::Fixed(s) => *s,
                };
                Layer::Dense(
                    DenseLayer::init_gaussian(*rows, *cols, s, rng)
                        .with_context(|| format!("layer.{n}: initializing dense layer"))?,
                )
            }
            LayerSpec::Bottleneck {
                rows,
                rank,
                cols,
                sigma,
            } => {
                let s = match sigma {
                    SigmaSpec::Auto => (1.0 / (*rank as f64 * *cols as f64)).powf(0.25),
                    SigmaSpec::Fixed(s) => *s,
                };
                Layer::Bottleneck(
                    MatrixRankBottleneck::init_gaussian(*rows, *rank, *cols, s, rng)
                        .with_context(|| format!("layer.{n}: initializing bottleneck layer"))?,
                )
            }
            LayerSpec::Relu => Layer::Relu,
        };
        layers.push(layer);
    }
    Network::new(layers).context("assembling network")
}

fn join(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// One line per layer: shapes, parameter counts, and for factorized
/// layers the compression factor against a dense weight matrix.
pub fn describe_network(net: &Network) -> String {
    let mut out = String::new();
    for (n, layer) in net.layers().iter().enumerate() {
        let line = match layer {
            Layer::Tt(tt) => {
                let w = tt.weights();
                format!(
                    "layer {n}: tt {} -> {} (modes [{}] x [{}], ranks [{}]), \
                     {} params, dense weight {} params, compression {:.1}x",
                    w.ncols(),
                    w.nrows(),
                    join(w.shape().row_modes()),
                    join(w.shape().col_modes()),
                    join(&w.ranks()),
                    tt.param_count(),
                    w.nrows() * w.ncols(),
                    w.compression_factor(),
                )
            }
            Layer::Dense(d) => format!(
                "layer {n}: dense {} -> {}, {} params",
                d.weight().ncols(),
                d.weight().nrows(),
                d.param_count(),
            ),
            Layer::Bottleneck(b) => {
                let (rows, cols) = (b.left().nrows(), b.right().ncols());
                format!(
                    "layer {n}: bottleneck {} -> {} (rank {}), {} params, \
                     dense weight {} params, compression {:.1}x",
                    cols,
                    rows,
                    b.rank(),
                    b.param_count(),
                    rows * cols,
                    (rows * cols) as f64 / (b.param_count() - rows) as f64,
                )
            }
            Layer::Relu => format!("layer {n}: relu"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(&format!("total: {} params\n", net.param_count()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(text: &str) -> FlatConfig {
        FlatConfig::parse(text).unwrap()
    }

    #[test]
    fn parses_a_mixed_stack() {
        let mut c = cfg(
            "layer.0.kind = tt\n\
             layer.0.row_modes = 4,4,4\n\
             layer.0.col_modes = 4,4,4\n\
             layer.0.ranks = 2\n\
             layer.1.kind = relu\n\
             layer.2.kind = dense\n\
             layer.2.rows = 10\n\
             layer.2.cols = 64\n\
             layer.2.sigma = 0.5\n",
        );
        let specs = parse_layers(&mut c).unwrap();
        c.reject_unknown().unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(
            specs[0],
            LayerSpec::Tt {
                row_modes: vec![4, 4, 4],
                col_modes: vec![4, 4, 4],
                ranks: vec![2, 2],
                sigma: SigmaSpec::Auto,
            }
        );
        assert_eq!(specs[1], LayerSpec::Relu);
        assert_eq!(
            specs[2],
            LayerSpec::Dense {
                rows: 10,
                cols: 64,
                sigma: SigmaSpec::Fixed(0.5),
            }
        );
    }

    #[test]
    fn layer_numbering_must_start_at_zero() {
        let mut c = cfg("layer.1.kind = relu\n");
        let err = parse_layers(&mut c).unwrap_err();
        assert!(err.to_string().contains("layer.0.kind"));
    }

    #[test]
    fn unknown_kind_names_the_key() {
        let mut c = cfg("layer.0.kind = conv\n");
        let err = parse_layers(&mut c).unwrap_err();
        assert!(err.to_string().contains("layer.0.kind"));
        assert!(err.to_string().contains("conv"));
    }

    #[test]
    fn rank_broadcast_and_exact_lengths() {
        assert_eq!(broadcast_ranks(vec![3], 4, "k").unwrap(), vec![3, 3, 3, 3]);
        assert_eq!(broadcast_ranks(vec![1, 2], 2, "k").unwrap(), vec![1, 2]);
        let err = broadcast_ranks(vec![1, 2], 3, "k").unwrap_err();
        assert!(err.to_string().contains("expected 3"));
    }

    #[test]
    fn builds_a_network_that_chains() {
        let mut c = cfg(
            "layer.0.kind = tt\n\
             layer.0.row_modes = 2,2\n\
             layer.0.col_modes = 4,4\n\
             layer.0.ranks = 2\n\
             layer.1.kind = relu\n\
             layer.2.kind = bottleneck\n\
             layer.2.rows = 3\n\
             layer.2.rank = 1\n\
             layer.2.cols = 4\n",
        );
        let specs = parse_layers(&mut c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = build_network(&specs, &mut rng).unwrap();
        assert_eq!(net.input_dim(), Some(16));
        assert_eq!(net.output_dim(), Some(3));
        let report = describe_network(&net);
        assert!(report.contains("layer 0: tt 16 -> 4"));
        assert!(report.contains("layer 1: relu"));
        assert!(report.contains(&format!("total: {} params", net.param_count())));
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let mut c = cfg(
            "layer.0.kind = dense\n\
             layer.0.rows = 5\n\
             layer.0.cols = 8\n\
             layer.1.kind = dense\n\
             layer.1.rows = 3\n\
             layer.1.cols = 9\n",
        );
        let specs = parse_layers(&mut c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(build_network(&specs, &mut rng).is_err());
    }
}
