use std::collections::BTreeMap;

use super::{DeltaPack, PackedDelta};
use crate::error::{Error, Result};
use crate::nn::{Network, ParamRole};

/// Packed delta size over the size of the reference specialist.
pub fn compression_ratio(packed: &PackedDelta, reference_model_bytes: usize) -> Result<f64> {
    if reference_model_bytes == 0 {
        return Err(Error::parameter("reference model size must be positive"));
    }
    Ok(packed.packed_size() as f64 / reference_model_bytes as f64)
}

/// Bytes to store `net` with one byte per trainable element plus one f32
/// scale per trainable tensor; running statistics stay f32. Layout mirrors
/// the network file otherwise.
pub fn quantized_storage_bytes(net: &Network) -> usize {
    let config = net.config();
    let header = 4 + 2 + 4 + 4 * config.layer_dims.len() + config.batchnorm.len();
    let (mut trainable, mut tensors, mut running) = (0, 0, 0);
    for (info, t) in net.params() {
        if info.role.is_trainable() {
            trainable += t.numel();
            tensors += 1;
        } else {
            running += t.numel();
        }
    }
    header + 1 + 1 + 4 + 4 * tensors + trainable + 4 * running + 4
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f32,
    pub max: f32,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: &[f32], n_bins: usize) -> Self {
        let min = values.iter().copied().fold(f32::INFINITY, f32::min);
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut counts = vec![0u64; n_bins];
        let width = max as f64 - min as f64;
        for &v in values {
            let bin = if width > 0.0 {
                (((v as f64 - min as f64) / width * n_bins as f64) as usize).min(n_bins - 1)
            } else {
                0
            };
            counts[bin] += 1;
        }
        Histogram { min, max, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self) -> Vec<f32> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.min + (self.max - self.min) * i as f32 / n as f32)
            .collect()
    }
}

/// Histograms keyed by tensor class (`weight`, `bias`, `bn_affine`,
/// `bn_running`) plus `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaHistograms {
    pub superclass_id: u32,
    pub by_class: BTreeMap<&'static str, Histogram>,
}

fn class_of(role: ParamRole) -> &'static str {
    match role {
        ParamRole::Weight => "weight",
        ParamRole::Bias => "bias",
        ParamRole::Gamma | ParamRole::Beta => "bn_affine",
        ParamRole::RunningMean | ParamRole::RunningVar => "bn_running",
    }
}

/// Uniform-bin histograms over `[min, max]` of the decoded body deltas.
pub fn delta_histogram(d: &DeltaPack, n_bins: usize) -> Result<DeltaHistograms> {
    if n_bins == 0 {
        return Err(Error::parameter("need at least one bin"));
    }
    let mut grouped: BTreeMap<&'static str, Vec<f32>> = BTreeMap::new();
    for e in d.body_entries() {
        if let (Some(values), Some(role)) = (e.payload.delta_values(), e.role()) {
            grouped.entry("all").or_default().extend_from_slice(&values);
            grouped.entry(class_of(role)).or_default().extend(values);
        }
    }
    let by_class = grouped
        .into_iter()
        .map(|(k, v)| (k, Histogram::build(&v, n_bins)))
        .collect();
    Ok(DeltaHistograms {
        superclass_id: d.superclass_id,
        by_class,
    })
}

/// How tightly the body deltas cluster around zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration {
    pub mean_abs_delta: f64,
    pub mean_abs_base: f64,
    pub sigma: f64,
    /// Fraction of deltas inside `±3σ` of zero.
    pub within_three_sigma: f64,
}

pub fn concentration(d: &DeltaPack, base: &Network) -> Result<Concentration> {
    let mut deltas = Vec::new();
    let mut base_abs = 0.0f64;
    let mut base_n = 0usize;
    for e in d.body_entries() {
        let Some(values) = e.payload.delta_values() else {
            continue;
        };
        let t = base
            .tensor(&e.name)
            .ok_or_else(|| Error::contract(format!("base lacks {}", e.name)))?;
        base_abs += t.data().iter().map(|v| v.abs() as f64).sum::<f64>();
        base_n += t.numel();
        deltas.extend(values.into_iter().map(f64::from));
    }
    if deltas.is_empty() {
        return Err(Error::contract("delta has no body deltas"));
    }
    let n = deltas.len() as f64;
    let mean_abs_delta = deltas.iter().map(|v| v.abs()).sum::<f64>() / n;
    let sigma = (deltas.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let within = deltas.iter().filter(|v| v.abs() <= 3.0 * sigma).count() as f64 / n;
    Ok(Concentration {
        mean_abs_delta,
        mean_abs_base: base_abs / base_n as f64,
        sigma,
        within_three_sigma: within,
    })
}
