//! Central-difference validation of the analytic backward pass, carried out
//! in double precision so rounding noise stays far below the tolerance.

use super::kernels::{self, BnParams, LayerParams};
use super::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct OwnedLayer {
    in_dim: usize,
    out_dim: usize,
    /// weight, bias, then gamma, beta, running mean, running var if present
    tensors: Vec<Vec<f64>>,
}

impl OwnedLayer {
    fn view(&self) -> LayerParams<'_, f64> {
        let t = &self.tensors;
        LayerParams {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight: &t[0],
            bias: &t[1],
            bn: (t.len() == 6).then(|| BnParams {
                gamma: &t[2],
                beta: &t[3],
                running_mean: &t[4],
                running_var: &t[5],
            }),
        }
    }
}

fn loss_at(layers: &[OwnedLayer], x: &[f64], rows: usize, labels: &[usize]) -> Result<f64> {
    let views: Vec<_> = layers.iter().map(OwnedLayer::view).collect();
    let trace = kernels::forward(&views, x, rows, true);
    kernels::loss(&trace, labels, views.last().unwrap().out_dim)
}

/// Max relative error `|analytic − fd| / max(|analytic|, |fd|, 1e-8)` over
/// every trainable parameter, using a training-mode forward pass.
pub fn gradient_check(net: &Network, batch: &Tensor, labels: &[usize], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::parameter(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    if batch.cols() != net.input_dim() || batch.rows() != labels.len() {
        return Err(Error::Dimension {
            left: batch.shape().to_vec(),
            right: vec![labels.len(), net.input_dim()],
        });
    }
    let mut layers: Vec<OwnedLayer> = net
        .layer_params()
        .iter()
        .map(|p| {
            let widen = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
            let mut tensors = vec![widen(p.weight), widen(p.bias)];
            if let Some(bn) = &p.bn {
                tensors.extend([
                    widen(bn.gamma),
                    widen(bn.beta),
                    widen(bn.running_mean),
                    widen(bn.running_var),
                ]);
            }
            OwnedLayer {
                in_dim: p.in_dim,
                out_dim: p.out_dim,
                tensors,
            }
        })
        .collect();
    let x: Vec<f64> = batch.data().iter().map(|&v| v as f64).collect();
    let rows = batch.rows();

    let analytic = {
        let views: Vec<_> = layers.iter().map(OwnedLayer::view).collect();
        let trace = kernels::forward(&views, &x, rows, true);
        kernels::backward(&views, &trace, labels)?
    };

    let mut worst = 0.0f64;
    for l in 0..layers.len() {
        let g = &analytic[l];
        let per_tensor: Vec<&Vec<f64>> = [Some(&g.weight), Some(&g.bias), g.gamma.as_ref(), g.beta.as_ref()]
            .into_iter()
            .flatten()
            .collect();
        for (t, grad) in per_tensor.into_iter().enumerate() {
            for k in 0..grad.len() {
                let original = layers[l].tensors[t][k];
                layers[l].tensors[t][k] = original + eps;
                let plus = loss_at(&layers, &x, rows, labels)?;
                layers[l].tensors[t][k] = original - eps;
                let minus = loss_at(&layers, &x, rows, labels)?;
                layers[l].tensors[t][k] = original;
                let fd = (plus - minus) / (2.0 * eps);
                let a = grad[k];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
