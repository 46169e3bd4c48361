//! Network checkpointing.
//!
//! A checkpoint file is the 8-byte magic `TTNETCK1`, a little-endian u32
//! format version, a little-endian u64 payload length, and then the
//! payload: a config echo, per-layer records (kind tag, shapes, ranks,
//! column-major f64 parameter arrays), and optional optimizer state.
//! All payload integers are little-endian; shape extents are u32.
//! Loading a saved checkpoint reproduces every parameter bit-exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::index::ShapePair;
use crate::layer::TtLayer;
use crate::matrix::{Core4, TtMatrix};
use crate::nn::{DenseLayer, Layer, LrSchedule, MatrixRankBottleneck, Network, SgdMomentumState};

/// First eight bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TTNETCK1";
/// Current format version.
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_TT: u8 = 0;
const KIND_DENSE: u8 = 1;
const KIND_BOTTLENECK: u8 = 2;
const KIND_RELU: u8 = 3;

/// Everything needed to resume or evaluate a run: the layer stack, the
/// optimizer state if training was in progress, and an echo of the
/// resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layers: Vec<Layer>,
    pub optimizer: Option<SgdMomentumState>,
    pub config: String,
}

impl Checkpoint {
    pub fn capture(
        net: &Network,
        optimizer: Option<&SgdMomentumState>,
        config: impl Into<String>,
    ) -> Self {
        Checkpoint {
            layers: net.layers().to_vec(),
            optimizer: optimizer.cloned(),
            config: config.into(),
        }
    }

    /// Reassembles the network, re-validating layer chaining.
    pub fn to_network(&self) -> Result<Network> {
        Network::new(self.layers.clone())
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(checkpoint)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_extent(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v: u32 = v
        .try_into()
        .map_err(|_| Error::invalid(format!("extent {v} exceeds the u32 format field")))?;
    push_u32(out, v);
    Ok(())
}

fn push_f64_array(out: &mut Vec<u8>, data: &[f64]) {
    push_u64(out, data.len() as u64);
    for &v in data {
        push_f64(out, v);
    }
}

/// Serializes a checkpoint to its byte representation.
pub fn encode_checkpoint(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    push_u64(&mut payload, checkpoint.config.len() as u64);
    payload.extend_from_slice(checkpoint.config.as_bytes());

    push_u64(&mut payload, checkpoint.layers.len() as u64);
    for layer in &checkpoint.layers {
        match layer {
            Layer::Tt(l) => {
                payload.push(KIND_TT);
                let shape = l.shape();
                push_extent(&mut payload, shape.ndim())?;
                for &m in shape.row_modes() {
                    push_extent(&mut payload, m)?;
                }
                for &n in shape.col_modes() {
                    push_extent(&mut payload, n)?;
                }
                for r in l.weights().ranks() {
                    push_extent(&mut payload, r)?;
                }
                for core in l.weights().cores() {
                    push_f64_array(&mut payload, core.data());
                }
                push_f64_array(&mut payload, l.bias());
            }
            Layer::Dense(l) => {
                payload.push(KIND_DENSE);
                push_extent(&mut payload, l.weight().nrows())?;
                push_extent(&mut payload, l.weight().ncols())?;
                push_f64_array(&mut payload, l.weight().as_slice());
                push_f64_array(&mut payload, l.bias());
            }
            Layer::Bottleneck(l) => {
                payload.push(KIND_BOTTLENECK);
                push_extent(&mut payload, l.left().nrows())?;
                push_extent(&mut payload, l.rank())?;
                push_extent(&mut payload, l.right().ncols())?;
                push_f64_array(&mut payload, l.left().as_slice());
                push_f64_array(&mut payload, l.right().as_slice());
                push_f64_array(&mut payload, l.bias());
            }
            Layer::Relu => payload.push(KIND_RELU),
        }
    }

    match &checkpoint.optimizer {
        None => payload.push(0),
        Some(opt) => {
            payload.push(1);
            push_f64(&mut payload, opt.base_rate());
            match opt.schedule() {
                LrSchedule::Constant => payload.push(0),
                LrSchedule::StepDecay { factor, epochs } => {
                    payload.push(1);
                    push_f64(&mut payload, *factor);
                    push_u64(&mut payload, epochs.len() as u64);
                    for &e in epochs {
                        push_extent(&mut payload, e)?;
                    }
                }
            }
            push_f64(&mut payload, opt.momentum());
            push_f64(&mut payload, opt.weight_decay());
            push_u64(&mut payload, opt.velocity().len() as u64);
            for buf in opt.velocity() {
                push_f64_array(&mut payload, buf);
            }
        }
    }

    let mut bytes = Vec::with_capacity(20 + payload.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    push_u32(&mut bytes, CHECKPOINT_VERSION);
    push_u64(&mut bytes, payload.len() as u64);
    bytes.extend_from_slice(&payload);
    Ok(bytes)
}

/// Cursor over checkpoint bytes that reports the failing offset.
struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let slice = &self.bytes[self.at..e];
                self.at = e;
                Ok(slice)
            }
            None => Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated while reading {what} ({n} bytes at offset {})", self.at),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut w = [0u8; 4];
        w.copy_from_slice(self.take(4, what)?);
        Ok(u32::from_le_bytes(w))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut w = [0u8; 8];
        w.copy_from_slice(self.take(8, what)?);
        Ok(u64::from_le_bytes(w))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut w = [0u8; 8];
        w.copy_from_slice(self.take(8, what)?);
        Ok(f64::from_le_bytes(w))
    }

    fn extent(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v)
            .map_err(|_| Error::format(self.at as u64, format!("{what} count {v} overflows")))
    }

    fn f64_array(&mut self, what: &str) -> Result<Vec<f64>> {
        let len = self.count(what)?;
        // Guard the multiply before allocating.
        let byte_len = len
            .checked_mul(8)
            .ok_or_else(|| Error::format(self.at as u64, format!("{what} length overflows")))?;
        let raw = self.take(byte_len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| {
                let mut w = [0u8; 8];
                w.copy_from_slice(c);
                f64::from_le_bytes(w)
            })
            .collect())
    }
}

/// Parses checkpoint bytes; the inverse of [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.take(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            8,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let payload_len = r.u64("payload length")?;
    let remaining = (bytes.len() - r.at) as u64;
    if payload_len != remaining {
        return Err(Error::format(
            r.at as u64,
            format!("payload declares {payload_len} bytes but {remaining} follow"),
        ));
    }

    let config_len = r.count("config length")?;
    let config = String::from_utf8(r.take(config_len, "config")?.to_vec())
        .map_err(|e| Error::format(r.at as u64, format!("config is not UTF-8: {e}")))?;

    let layer_count = r.count("layer count")?;
    let mut layers = Vec::new();
    for k in 0..layer_count {
        let kind = r.u8("layer kind")?;
        let layer = match kind {
            KIND_TT => {
                let d = r.extent("mode count")?;
                let rows: Vec<usize> = (0..d)
                    .map(|_| r.extent("row mode"))
                    .collect::<Result<_>>()?;
                let cols: Vec<usize> = (0..d)
                    .map(|_| r.extent("column mode"))
                    .collect::<Result<_>>()?;
                let ranks: Vec<usize> = (0..d + 1)
                    .map(|_| r.extent("rank"))
                    .collect::<Result<_>>()?;
                let shape = ShapePair::new(&rows, &cols)?;
                let mut cores = Vec::with_capacity(d);
                for i in 0..d {
                    let data = r.f64_array("core data")?;
                    cores.push(Core4::from_vec(ranks[i], rows[i], cols[i], ranks[i + 1], data)?);
                }
                let bias = r.f64_array("bias")?;
                Layer::Tt(TtLayer::new(TtMatrix::from_cores(shape, cores)?, bias)?)
            }
            KIND_DENSE => {
                let rows = r.extent("dense rows")?;
                let cols = r.extent("dense columns")?;
                let weight = r.f64_array("dense weight")?;
                if weight.len() != rows * cols {
                    return Err(Error::format(
                        r.at as u64,
                        format!(
                            "dense weight has {} values for a {rows}x{cols} matrix",
                            weight.len()
                        ),
                    ));
                }
                let bias = r.f64_array("bias")?;
                Layer::Dense(DenseLayer::new(
                    DMatrix::from_column_slice(rows, cols, &weight),
                    bias,
                )?)
            }
            KIND_BOTTLENECK => {
                let rows = r.extent("bottleneck rows")?;
                let rank = r.extent("bottleneck rank")?;
                let cols = r.extent("bottleneck columns")?;
                let left = r.f64_array("left factor")?;
                let right = r.f64_array("right factor")?;
                if left.len() != rows * rank || right.len() != rank * cols {
                    return Err(Error::format(
                        r.at as u64,
                        format!(
                            "factor sizes {} and {} disagree with {rows}x{rank} and {rank}x{cols}",
                            left.len(),
                            right.len()
                        ),
                    ));
                }
                let bias = r.f64_array("bias")?;
                Layer::Bottleneck(MatrixRankBottleneck::new(
                    DMatrix::from_column_slice(rows, rank, &left),
                    DMatrix::from_column_slice(rank, cols, &right),
                    bias,
                )?)
            }
            KIND_RELU => Layer::Relu,
            other => {
                return Err(Error::format(
                    (r.at - 1) as u64,
                    format!("unknown layer kind {other} in record {k}"),
                ))
            }
        };
        layers.push(layer);
    }

    let optimizer = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let base_rate = r.f64("learning rate")?;
            let schedule = match r.u8("schedule kind")? {
                0 => LrSchedule::Constant,
                1 => {
                    let factor = r.f64("decay factor")?;
                    let n = r.count("decay epoch count")?;
                    let epochs: Vec<usize> = (0..n)
                        .map(|_| r.extent("decay epoch"))
                        .collect::<Result<_>>()?;
                    LrSchedule::StepDecay { factor, epochs }
                }
                other => {
                    return Err(Error::format(
                        (r.at - 1) as u64,
                        format!("unknown schedule kind {other}"),
                    ))
                }
            };
            let momentum = r.f64("momentum")?;
            let weight_decay = r.f64("weight decay")?;
            let buffers = r.count("velocity buffer count")?;
            let velocity: Vec<Vec<f64>> = (0..buffers)
                .map(|_| r.f64_array("velocity"))
                .collect::<Result<_>>()?;
            Some(SgdMomentumState::from_parts(
                base_rate,
                schedule,
                momentum,
                weight_decay,
                velocity,
            )?)
        }
        other => {
            return Err(Error::format(
                (r.at - 1) as u64,
                format!("optimizer flag must be 0 or 1, found {other}"),
            ))
        }
    };

    if r.at != bytes.len() {
        return Err(Error::format(
            r.at as u64,
            format!("{} unread bytes after the payload", bytes.len() - r.at),
        ));
    }
    Ok(Checkpoint {
        layers,
        optimizer,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::SigmaRule;
    use crate::nn::{evaluate, softmax_xent, train_epoch};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Network exercising every layer kind: TT, ReLU, bottleneck, dense.
    fn mixed_net(seed: u64) -> Network {
        let mut r = rng(seed);
        let shape = ShapePair::new(&[4, 4], &[4, 4]).unwrap();
        let tt = TtLayer::init_gaussian(&shape, &[2], &SigmaRule::default(), &mut r).unwrap();
        let narrow = MatrixRankBottleneck::init_gaussian(8, 2, 16, 0.3, &mut r).unwrap();
        let dense = DenseLayer::init_gaussian(4, 8, 0.3, &mut r).unwrap();
        Network::new(vec![
            Layer::Tt(tt),
            Layer::Relu,
            Layer::Bottleneck(narrow),
            Layer::Dense(dense),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_every_parameter_bit() {
        let mut net = mixed_net(1);
        let (x, labels) = random_batch(5, 2);
        // A step gives the optimizer nonzero velocity worth saving.
        let mut opt = SgdMomentumState::new(&net, 0.05, 0.9, 0.0005)
            .unwrap()
            .with_schedule(LrSchedule::StepDecay {
                factor: 0.1,
                epochs: vec![3, 7],
            })
            .unwrap();
        let trace = net.forward_trace(&x).unwrap();
        let (_, dl) = softmax_xent(trace.logits(), &labels).unwrap();
        let grads = net.backward(&trace, &dl).unwrap();
        opt.step(&mut net, &grads, 0.05).unwrap();

        let before = Checkpoint::capture(&net, Some(&opt), "seed = 3\nlr = 0.05\n");
        let bytes = encode_checkpoint(&before).unwrap();
        let after = decode_checkpoint(&bytes).unwrap();

        assert_eq!(after.config, before.config);
        let restored = after.to_network().unwrap();
        assert_eq!(
            restored.param_slices().concat(),
            net.param_slices().concat()
        );
        let ropt = after.optimizer.as_ref().unwrap();
        assert_eq!(ropt.velocity(), opt.velocity());
        assert_eq!(ropt.base_rate(), opt.base_rate());
        assert_eq!(ropt.schedule(), opt.schedule());
        assert_eq!(ropt.momentum(), opt.momentum());
        assert_eq!(ropt.weight_decay(), opt.weight_decay());

        // Re-encoding the decoded checkpoint reproduces the bytes.
        assert_eq!(encode_checkpoint(&after).unwrap(), bytes);
    }

    fn random_batch(count: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut r = rng(seed);
        let x = DMatrix::from_fn(16, count, |_, _| r.gen_range(-1.0..1.0));
        let labels = (0..count).map(|_| r.gen_range(0..4)).collect();
        (x, labels)
    }

    #[test]
    fn reloaded_network_evaluates_identically() {
        let net = mixed_net(11);
        let (x, labels) = random_batch(40, 12);
        let bytes =
            encode_checkpoint(&Checkpoint::capture(&net, None, "eval")).unwrap();
        let restored = decode_checkpoint(&bytes).unwrap().to_network().unwrap();
        assert_eq!(
            evaluate(&restored, &x, &labels).unwrap(),
            evaluate(&net, &x, &labels).unwrap()
        );
        assert_eq!(restored.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn resumed_training_continues_exactly() {
        let (x, labels) = random_batch(32, 21);
        let mut net = mixed_net(22);
        let mut opt = SgdMomentumState::new(&net, 0.02, 0.9, 0.0005).unwrap();
        train_epoch(&mut net, &x, &labels, &mut opt, 0, 8, &mut rng(23)).unwrap();

        let saved = encode_checkpoint(&Checkpoint::capture(&net, Some(&opt), "")).unwrap();

        let direct = train_epoch(&mut net, &x, &labels, &mut opt, 1, 8, &mut rng(24)).unwrap();

        let reloaded = decode_checkpoint(&saved).unwrap();
        let mut net2 = reloaded.to_network().unwrap();
        let mut opt2 = reloaded.optimizer.unwrap();
        let resumed = train_epoch(&mut net2, &x, &labels, &mut opt2, 1, 8, &mut rng(24)).unwrap();

        assert_eq!(direct.loss, resumed.loss);
        assert_eq!(direct.error_rate, resumed.error_rate);
        assert_eq!(net.param_slices().concat(), net2.param_slices().concat());
    }

    #[test]
    fn empty_layer_list_round_trips_as_minimal_file() {
        let empty = Checkpoint {
            layers: Vec::new(),
            optimizer: None,
            config: String::new(),
        };
        let bytes = encode_checkpoint(&empty).unwrap();
        assert_eq!(bytes.len(), 20 + 8 + 8 + 1);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, empty);
        assert!(back.to_network().is_err());
    }

    #[test]
    fn corrupted_magic_version_and_truncations_are_rejected() {
        let net = mixed_net(31);
        let good = encode_checkpoint(&Checkpoint::capture(&net, None, "c")).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad_magic),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bad_version = good.clone();
        bad_version[8] = 9;
        assert!(matches!(
            decode_checkpoint(&bad_version),
            Err(Error::Format { offset: 8, .. })
        ));

        for cut in [0, 7, 12, 19, good.len() / 2, good.len() - 1] {
            assert!(
                decode_checkpoint(&good[..cut]).is_err(),
                "prefix of {cut} bytes was accepted"
            );
        }

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(decode_checkpoint(&trailing).is_err());
    }

    #[test]
    fn unknown_layer_kind_is_rejected() {
        let empty = Checkpoint {
            layers: Vec::new(),
            optimizer: None,
            config: String::new(),
        };
        let mut bytes = encode_checkpoint(&empty).unwrap();
        // Bump the layer count to 1 and splice in an unknown kind tag
        // where the first record would start.
        let count_at = 20 + 8;
        bytes[count_at] = 1;
        bytes.insert(count_at + 8, 250);
        let len_at = 12;
        let new_len = (bytes.len() - 20) as u64;
        bytes[len_at..len_at + 8].copy_from_slice(&new_len.to_le_bytes());
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
}
