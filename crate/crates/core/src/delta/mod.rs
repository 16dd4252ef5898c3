//! Parameter deltas between a base (superclass) network and a specialist
//! finetuned from it.
//!
//! Tensors are stored as differences against the base. A specialist head
//! whose width differs from the base head has no counterpart and is stored
//! verbatim.
//! Two encodings exist:
//!
//! * `Fp16`: the f32 difference rounded to binary16. Lossy.
//! * `QatInt`: both networks were trained with QAT on shared per-tensor
//!   grids, so the difference of grid indices is an exact small integer.
//!   Batch-norm running statistics are not on any grid; they are stored as
//!   the XOR of their f32 bit patterns with the base, which is exact and
//!   mostly zero in the sign and exponent bytes.

mod container;
mod stats;

pub use container::{pack, unpack, PackedDelta, DELTA_MAGIC, DELTA_VERSION};
pub use stats::{
    compression_ratio, concentration, delta_histogram, quantized_storage_bytes, Concentration, DeltaHistograms,
    Histogram,
};

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{is_on_grid, quantize_to_int, Layer, Network, ParamInfo, ParamRole, QuantInfo};
use crate::tensor::{f16_bits, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    Fp16,
    QatInt,
}

impl DeltaMode {
    pub fn code(self) -> u8 {
        match self {
            DeltaMode::Fp16 => 0,
            DeltaMode::QatInt => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DeltaMode::Fp16),
            1 => Some(DeltaMode::QatInt),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DeltaMode::Fp16 => "fp16",
            DeltaMode::QatInt => "qat-int",
        }
    }
}

impl std::str::FromStr for DeltaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp16" => Ok(DeltaMode::Fp16),
            "qat-int" | "qat_int" => Ok(DeltaMode::QatInt),
            other => Err(Error::parameter(format!("unknown delta mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// binary16 bit patterns of `sub − base`
    F16Delta(Vec<u16>),
    /// grid-index differences on a grid shared with the base
    IntDelta { scale: f32, values: Vec<i16> },
    /// values stored as-is
    Full(Vec<f32>),
    /// values stored as-is, plus the grid scale they were quantized with
    FullScaled { scale: f32, values: Vec<f32> },
    /// `sub.to_bits() ^ base.to_bits()` per element
    XorDelta(Vec<u32>),
}

impl Payload {
    pub fn kind(&self) -> u8 {
        match self {
            Payload::F16Delta(_) => 0,
            Payload::IntDelta { .. } => 1,
            Payload::Full(_) => 2,
            Payload::FullScaled { .. } => 3,
            Payload::XorDelta(_) => 4,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F16Delta(v) => v.len(),
            Payload::IntDelta { values, .. } => values.len(),
            Payload::Full(v) | Payload::FullScaled { values: v, .. } => v.len(),
            Payload::XorDelta(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Additive deltas; `XorDelta` is relative to the base too but not
    /// additive.
    pub fn is_delta(&self) -> bool {
        matches!(self, Payload::F16Delta(_) | Payload::IntDelta { .. })
    }

    /// Decoded additive delta values, `None` otherwise.
    pub fn delta_values(&self) -> Option<Vec<f32>> {
        match self {
            Payload::F16Delta(bits) => Some(bits.iter().map(|&b| f16::from_bits(b).to_f32()).collect()),
            Payload::IntDelta { scale, values } => Some(values.iter().map(|&q| q as f32 * scale).collect()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl DeltaEntry {
    pub fn role(&self) -> Option<ParamRole> {
        let suffix = self.name.split_once('.')?.1;
        Some(match suffix {
            "weight" => ParamRole::Weight,
            "bias" => ParamRole::Bias,
            "bn.gamma" => ParamRole::Gamma,
            "bn.beta" => ParamRole::Beta,
            "bn.running_mean" => ParamRole::RunningMean,
            "bn.running_var" => ParamRole::RunningVar,
            _ => return None,
        })
    }

    fn layer(&self) -> Option<usize> {
        self.name.strip_prefix("layer")?.split('.').next()?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPack {
    pub superclass_id: u32,
    pub mode: DeltaMode,
    /// Grid width for `QatInt`, 0 for `Fp16`.
    pub qat_bits: u8,
    /// [`Network::fingerprint`] of the base.
    pub base_fingerprint: u32,
    /// Body entries in declaration order, then head entries.
    pub entries: Vec<DeltaEntry>,
}

impl DeltaPack {
    fn head_layer(&self) -> Option<usize> {
        self.entries.iter().filter_map(DeltaEntry::layer).max()
    }

    pub fn head_entries(&self) -> impl Iterator<Item = &DeltaEntry> {
        let head = self.head_layer();
        self.entries.iter().filter(move |e| e.layer() == head)
    }

    pub fn body_entries(&self) -> impl Iterator<Item = &DeltaEntry> {
        let head = self.head_layer();
        self.entries.iter().filter(move |e| e.layer() != head)
    }

    /// Number of element additions needed to rebuild the specialist.
    pub fn delta_elements(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.payload.is_delta())
            .map(|e| e.payload.len())
            .sum()
    }
}

fn check_same_body(base: &Network, sub: &Network) -> Result<()> {
    let (b, s) = (base.config(), sub.config());
    let n = b.layer_dims.len();
    if s.layer_dims.len() != n || b.layer_dims[..n - 1] != s.layer_dims[..n - 1] || b.batchnorm != s.batchnorm {
        return Err(Error::contract(format!(
            "body shapes differ: base {:?} vs specialist {:?}",
            b.layer_dims, s.layer_dims
        )));
    }
    Ok(())
}

/// Trainable-order scales alongside each tensor, or `None` for running stats.
fn with_scales<'a>(net: &'a Network, quant: &QuantInfo) -> Vec<(ParamInfo, &'a Tensor, Option<f32>)> {
    let mut scales = quant.scales.iter().copied();
    net.params()
        .into_iter()
        .map(|(info, t)| {
            let s = if info.role.is_trainable() { scales.next() } else { None };
            (info, t, s)
        })
        .collect()
}

fn grid_indices(t: &Tensor, scale: f32, bits: u8, what: &str) -> Result<Vec<i32>> {
    if !is_on_grid(t, scale, bits) {
        return Err(Error::Mode(format!("{what} is not on its quantization grid")));
    }
    Ok(t.data().iter().map(|&v| quantize_to_int(v, scale, bits)).collect())
}

/// `sub − base` for every tensor whose shape matches the base; a resized
/// head is stored verbatim.
pub fn compute_delta(base: &Network, sub: &Network, superclass_id: u32, mode: DeltaMode) -> Result<DeltaPack> {
    check_same_body(base, sub)?;
    let same_head = base.head_dim() == sub.head_dim();
    let mut entries = Vec::new();
    let qat_bits = match mode {
        DeltaMode::Fp16 => {
            for ((info, tb), (_, ts)) in base.params().into_iter().zip(sub.params()) {
                let payload = if info.head && !same_head {
                    Payload::Full(ts.data().to_vec())
                } else {
                    let bits = tb
                        .data()
                        .iter()
                        .zip(ts.data())
                        .map(|(&b, &s)| f16_bits(s - b))
                        .collect::<Result<Vec<_>>>()?;
                    Payload::F16Delta(bits)
                };
                entries.push(DeltaEntry {
                    name: info.name,
                    shape: ts.shape().to_vec(),
                    payload,
                });
            }
            0
        }
        DeltaMode::QatInt => {
            let (qb, qs) = match (base.quant(), sub.quant()) {
                (Some(qb), Some(qs)) => (qb, qs),
                _ => return Err(Error::Mode("qat-int deltas need two QAT-quantized networks".into())),
            };
            if qb.bits != qs.bits {
                return Err(Error::Mode(format!(
                    "grid widths differ: {} vs {} bits",
                    qb.bits, qs.bits
                )));
            }
            let bits = qb.bits;
            for ((info, tb, sb), (_, ts, ss)) in with_scales(base, qb).into_iter().zip(with_scales(sub, qs)) {
                let comparable = !info.head || same_head;
                let payload = match (sb, ss) {
                    (Some(sb), Some(ss)) if comparable && sb.to_bits() == ss.to_bits() => {
                        let qb = grid_indices(tb, sb, bits, "base tensor")?;
                        let qs = grid_indices(ts, sb, bits, "specialist tensor")?;
                        let values = qs.iter().zip(&qb).map(|(&s, &b)| (s - b) as i16).collect();
                        Payload::IntDelta { scale: sb, values }
                    }
                    (Some(_), Some(ss)) if info.head => {
                        grid_indices(ts, ss, bits, "specialist head")?;
                        Payload::FullScaled {
                            scale: ss,
                            values: ts.data().to_vec(),
                        }
                    }
                    (Some(_), Some(_)) => {
                        return Err(Error::Mode(format!("{} is not on the base grid", info.name)));
                    }
                    _ if comparable => Payload::XorDelta(
                        tb.data()
                            .iter()
                            .zip(ts.data())
                            .map(|(b, s)| b.to_bits() ^ s.to_bits())
                            .collect(),
                    ),
                    _ => Payload::Full(ts.data().to_vec()),
                };
                entries.push(DeltaEntry {
                    name: info.name,
                    shape: ts.shape().to_vec(),
                    payload,
                });
            }
            bits
        }
    };
    Ok(DeltaPack {
        superclass_id,
        mode,
        qat_bits,
        base_fingerprint: base.fingerprint(),
        entries,
    })
}

/// Rebuilds the specialist as `base + delta`. Also returns the number of
/// element additions performed.
pub fn reconstruct_counted(base: &Network, pack: &DeltaPack) -> Result<(Network, usize)> {
    let found = base.fingerprint();
    if found != pack.base_fingerprint {
        return Err(Error::BaseMismatch {
            expected: pack.base_fingerprint,
            found,
        });
    }
    let head_weight = pack
        .head_entries()
        .find(|e| e.role() == Some(ParamRole::Weight))
        .ok_or_else(|| Error::contract("delta carries no head weight"))?;
    let width = head_weight.shape[0];
    let mut net = if width == base.head_dim() {
        let mut n = base.clone();
        n.set_quant(None);
        n
    } else {
        let head_layer = base.layers().len() - 1;
        let mut layers = base.layers().to_vec();
        layers[head_layer] = Layer {
            weight: Tensor::zeros(vec![width, base.config().layer_dims[head_layer]]),
            bias: Tensor::zeros(vec![width]),
            bn: None,
        };
        Network::from_parts(base.config().with_head(width), layers, None)?
    };

    let mut adds = 0;
    let mut scales = Vec::new();
    let mut entries = pack.entries.iter();
    for (info, tensor) in net.params_mut() {
        let entry = entries
            .next()
            .ok_or_else(|| Error::contract(format!("delta lacks an entry for {}", info.name)))?;
        if entry.name != info.name || entry.shape != tensor.shape() || entry.payload.len() != tensor.numel() {
            return Err(Error::contract(format!(
                "delta entry {} {:?} does not line up with {} {:?}",
                entry.name,
                entry.shape,
                info.name,
                tensor.shape()
            )));
        }
        match &entry.payload {
            Payload::F16Delta(bits) => {
                for (v, &b) in tensor.data_mut().iter_mut().zip(bits) {
                    *v += f16::from_bits(b).to_f32();
                }
                adds += bits.len();
            }
            Payload::IntDelta { scale, values } => {
                for (v, &d) in tensor.data_mut().iter_mut().zip(values) {
                    let q = quantize_to_int(*v, *scale, pack.qat_bits) + d as i32;
                    *v = q as f32 * scale;
                }
                adds += values.len();
                scales.push(*scale);
            }
            Payload::XorDelta(bits) => {
                for (v, &x) in tensor.data_mut().iter_mut().zip(bits) {
                    *v = f32::from_bits(v.to_bits() ^ x);
                }
            }
            Payload::Full(values) => tensor.data_mut().copy_from_slice(values),
            Payload::FullScaled { scale, values } => {
                tensor.data_mut().copy_from_slice(values);
                scales.push(*scale);
            }
        }
    }
    if let Some(extra) = entries.next() {
        return Err(Error::contract(format!("unexpected delta entry {}", extra.name)));
    }
    if pack.mode == DeltaMode::QatInt {
        net.set_quant(Some(QuantInfo {
            bits: pack.qat_bits,
            scales,
        }));
    }
    Ok((net, adds))
}

pub fn reconstruct(base: &Network, pack: &DeltaPack) -> Result<Network> {
    reconstruct_counted(base, pack).map(|(net, _)| net)
}
