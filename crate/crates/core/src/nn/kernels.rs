//! Forward and backward passes over borrowed parameter slices.
//!
//! Hidden layers compute `relu(bn(x·Wᵀ + b))`; the head is a plain affine
//! map producing logits. Loss is mean softmax cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, mean_nll, softmax_in_place, Real};

pub(crate) const BN_EPSILON: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.9;

pub(crate) struct BnParams<'a, T> {
    pub gamma: &'a [T],
    pub beta: &'a [T],
    pub running_mean: &'a [T],
    pub running_var: &'a [T],
}

pub(crate) struct LayerParams<'a, T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: &'a [T],
    pub bias: &'a [T],
    pub bn: Option<BnParams<'a, T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    /// Batch statistics, present only in training mode.
    pub batch_mean: Option<Vec<T>>,
    pub batch_var: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    pub input: Vec<T>,
    /// Pre-activation of hidden layers (after batch-norm), for the ReLU mask.
    pub pre_act: Vec<T>,
    pub bn: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub rows: usize,
    pub training: bool,
    pub layers: Vec<LayerCache<T>>,
    pub logits: Vec<T>,
}

pub(crate) struct RawGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub gamma: Option<Vec<T>>,
    pub beta: Option<Vec<T>>,
}

pub(crate) fn forward<T: Real>(layers: &[LayerParams<T>], x: &[T], rows: usize, training: bool) -> Trace<T> {
    let eps = T::from(BN_EPSILON).unwrap();
    let last = layers.len() - 1;
    let mut caches = Vec::with_capacity(layers.len());
    let mut act = x.to_vec();
    for (l, p) in layers.iter().enumerate() {
        let (n_in, n_out) = (p.in_dim, p.out_dim);
        let mut z = gemm_nt(&act, p.weight, rows, n_in, n_out);
        for row in z.chunks_exact_mut(n_out) {
            for (v, &b) in row.iter_mut().zip(p.bias) {
                *v = *v + b;
            }
        }
        if l == last {
            caches.push(LayerCache {
                input: act,
                pre_act: Vec::new(),
                bn: None,
            });
            return Trace {
                rows,
                training,
                layers: caches,
                logits: z,
            };
        }
        let bn_cache = p.bn.as_ref().map(|bn| {
            let (mean, var) = if training {
                column_moments(&z, rows, n_out)
            } else {
                (bn.running_mean.to_vec(), bn.running_var.to_vec())
            };
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let mut xhat = z.clone();
            for row in xhat.chunks_exact_mut(n_out) {
                for j in 0..n_out {
                    row[j] = (row[j] - mean[j]) * inv_std[j];
                }
            }
            for (row_z, row_h) in z.chunks_exact_mut(n_out).zip(xhat.chunks_exact(n_out)) {
                for j in 0..n_out {
                    row_z[j] = bn.gamma[j] * row_h[j] + bn.beta[j];
                }
            }
            BnCache {
                xhat,
                inv_std,
                batch_mean: training.then_some(mean),
                batch_var: training.then_some(var),
            }
        });
        let next: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
        caches.push(LayerCache {
            input: act,
            pre_act: z,
            bn: bn_cache,
        });
        act = next;
    }
    unreachable!("network has at least one layer")
}

/// Per-column mean and biased variance.
fn column_moments<T: Real>(z: &[T], rows: usize, cols: usize) -> (Vec<T>, Vec<T>) {
    let m = T::from_usize(rows.max(1));
    let mut mean = vec![T::zero(); cols];
    for row in z.chunks_exact(cols) {
        for j in 0..cols {
            mean[j] = mean[j] + row[j];
        }
    }
    mean.iter_mut().for_each(|v| *v = *v / m);
    let mut var = vec![T::zero(); cols];
    for row in z.chunks_exact(cols) {
        for j in 0..cols {
            let d = row[j] - mean[j];
            var[j] = var[j] + d * d;
        }
    }
    var.iter_mut().for_each(|v| *v = *v / m);
    (mean, var)
}

pub(crate) fn probabilities<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut p = logits.to_vec();
    for row in p.chunks_exact_mut(classes) {
        softmax_in_place(row);
    }
    p
}

pub(crate) fn loss<T: Real>(trace: &Trace<T>, labels: &[usize], classes: usize) -> Result<T> {
    mean_nll(&probabilities(&trace.logits, classes), labels, classes)
}

pub(crate) fn backward<T: Real>(
    layers: &[LayerParams<T>],
    trace: &Trace<T>,
    labels: &[usize],
) -> Result<Vec<RawGrads<T>>> {
    let m = trace.rows;
    if labels.len() != m || trace.layers.len() != layers.len() {
        return Err(Error::contract(format!(
            "cache holds {} rows over {} layers, got {} labels for {} layers",
            m,
            trace.layers.len(),
            labels.len(),
            layers.len()
        )));
    }
    let classes = layers.last().unwrap().out_dim;
    let inv_m = T::one() / T::from_usize(m.max(1));
    let mut delta = probabilities(&trace.logits, classes);
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Index {
                index: label,
                limit: classes,
            });
        }
        delta[i * classes + label] = delta[i * classes + label] - T::one();
    }
    delta.iter_mut().for_each(|d| *d = *d * inv_m);

    let mut grads: Vec<RawGrads<T>> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let p = &layers[l];
        let cache = &trace.layers[l];
        let (n_in, n_out) = (p.in_dim, p.out_dim);
        let mut gamma_grad = None;
        let mut beta_grad = None;

        if l != layers.len() - 1 {
            // delta currently holds dL/d(relu output)
            for (d, &pre) in delta.iter_mut().zip(&cache.pre_act) {
                if pre <= T::zero() {
                    *d = T::zero();
                }
            }
            if let (Some(bn), Some(bc)) = (&p.bn, &cache.bn) {
                let mut dgamma = vec![T::zero(); n_out];
                let mut dbeta = vec![T::zero(); n_out];
                for (row_d, row_h) in delta.chunks_exact(n_out).zip(bc.xhat.chunks_exact(n_out)) {
                    for j in 0..n_out {
                        dgamma[j] = dgamma[j] + row_d[j] * row_h[j];
                        dbeta[j] = dbeta[j] + row_d[j];
                    }
                }
                if trace.training {
                    // dxhat = dy·γ; dz = inv_std/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                    let mf = T::from_usize(m);
                    let mut sum_dxhat = vec![T::zero(); n_out];
                    let mut sum_dxhat_xhat = vec![T::zero(); n_out];
                    for (row_d, row_h) in delta.chunks_exact(n_out).zip(bc.xhat.chunks_exact(n_out)) {
                        for j in 0..n_out {
                            let dx = row_d[j] * bn.gamma[j];
                            sum_dxhat[j] = sum_dxhat[j] + dx;
                            sum_dxhat_xhat[j] = sum_dxhat_xhat[j] + dx * row_h[j];
                        }
                    }
                    for (row_d, row_h) in delta.chunks_exact_mut(n_out).zip(bc.xhat.chunks_exact(n_out)) {
                        for j in 0..n_out {
                            let dx = row_d[j] * bn.gamma[j];
                            row_d[j] = bc.inv_std[j] / mf * (mf * dx - sum_dxhat[j] - row_h[j] * sum_dxhat_xhat[j]);
                        }
                    }
                } else {
                    for row_d in delta.chunks_exact_mut(n_out) {
                        for j in 0..n_out {
                            row_d[j] = row_d[j] * bn.gamma[j] * bc.inv_std[j];
                        }
                    }
                }
                gamma_grad = Some(dgamma);
                beta_grad = Some(dbeta);
            }
        }

        let weight = gemm_tn(&delta, &cache.input, m, n_out, n_in);
        let mut bias = vec![T::zero(); n_out];
        for row in delta.chunks_exact(n_out) {
            for j in 0..n_out {
                bias[j] = bias[j] + row[j];
            }
        }
        if l > 0 {
            delta = gemm_nn(&delta, p.weight, m, n_out, n_in);
        }
        grads.push(RawGrads {
            weight,
            bias,
            gamma: gamma_grad,
            beta: beta_grad,
        });
    }
    grads.reverse();
    Ok(grads)
}
