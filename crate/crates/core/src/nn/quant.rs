//! Symmetric per-tensor fake quantization.
//!
//! A tensor with scale `s` lives on the grid `{q·s : |q| ≤ 2^(bits−1) − 1}`.
//! Grid values are always materialized as `(q as f32) * s`, so two networks
//! sharing a scale can exchange exact integer differences.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Quantization state of a network stored after QAT: one scale per trainable
/// tensor, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantInfo {
    pub bits: u8,
    pub scales: Vec<f32>,
}

pub(crate) fn check_bits(bits: u8) -> Result<()> {
    if !(2..=8).contains(&bits) {
        return Err(Error::parameter(format!(
            "quantization bits must be in [2, 8], got {bits}"
        )));
    }
    Ok(())
}

pub(crate) fn qmax(bits: u8) -> i32 {
    (1 << (bits - 1)) - 1
}

fn max_abs(t: &Tensor) -> f32 {
    t.data().iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

/// `max|t| / (2^(bits−1) − 1)`, or 1 for an all-zero tensor.
pub fn grid_scale(t: &Tensor, bits: u8) -> f32 {
    let m = max_abs(t);
    if m == 0.0 {
        1.0
    } else {
        (m as f64 / qmax(bits) as f64) as f32
    }
}

/// Grid index of `x` under `scale`, rounding half away from zero.
pub fn quantize_to_int(x: f32, scale: f32, bits: u8) -> i32 {
    let q = (x as f64 / scale as f64).round();
    let limit = qmax(bits) as f64;
    q.clamp(-limit, limit) as i32
}

pub fn fake_quantize_with_scale(t: &Tensor, scale: f32, bits: u8) -> Tensor {
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = quantize_to_int(*v, scale, bits) as f32 * scale;
    }
    out
}

/// Rounds `t` onto its own symmetric `bits`-bit grid.
pub fn fake_quantize(t: &Tensor, bits: u8) -> Tensor {
    let m = max_abs(t);
    if m == 0.0 {
        return Tensor::zeros(t.shape().to_vec());
    }
    let scale = grid_scale(t, bits);
    let levels = qmax(bits) as f64;
    let mut out = t.clone();
    for v in out.data_mut() {
        // index from the exact ratio so that ties like 63.5 are not perturbed by
        // the rounding of `scale`
        let q = (*v as f64 * levels / m as f64).round().clamp(-levels, levels) as i32;
        *v = q as f32 * scale;
    }
    out
}

pub fn is_on_grid(t: &Tensor, scale: f32, bits: u8) -> bool {
    t.data().iter().all(|&v| {
        let q = quantize_to_int(v, scale, bits);
        (q as f32 * scale).to_bits() == v.to_bits() || (v == 0.0 && q == 0)
    })
}
