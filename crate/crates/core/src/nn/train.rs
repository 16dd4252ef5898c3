use serde::{Deserialize, Serialize};

use super::quant::{check_bits, fake_quantize_with_scale, grid_scale, QuantInfo};
use super::{BatchNorm, Gradients, Layer, Network, NetworkConfig};
use crate::data::{Dataset, LabelView};
use crate::error::{Error, Result};
use crate::prng::{gaussian, Prng};
use crate::tensor::Tensor;

const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4531;
const HEAD_STREAM: u64 = 0x4845_4144_494e_4954;

fn default_qat_bits() -> u8 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub qat: bool,
    #[serde(default = "default_qat_bits")]
    pub qat_bits: u8,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            qat: false,
            qat_bits: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::parameter(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::parameter("batch_size must be at least 1"));
        }
        check_bits(self.qat_bits)
    }
}

fn he_layer(prng: &mut Prng, n_in: usize, n_out: usize) -> Result<Layer> {
    let sigma = (2.0 / n_in as f64).sqrt() as f32;
    let data = (0..n_in * n_out)
        .map(|_| gaussian(prng, 0.0, sigma))
        .collect::<Result<_>>()?;
    Ok(Layer {
        weight: Tensor::new(vec![n_out, n_in], data)?,
        bias: Tensor::zeros(vec![n_out]),
        bn: None,
    })
}

fn fresh_bn(width: usize) -> BatchNorm {
    BatchNorm {
        gamma: Tensor::filled(vec![width], 1.0),
        beta: Tensor::zeros(vec![width]),
        running_mean: Tensor::zeros(vec![width]),
        running_var: Tensor::filled(vec![width], 1.0),
    }
}

/// He-initialized network: weights `N(0, 2/fan_in)`, zero biases, identity
/// batch-norm.
pub fn init_network(config: &NetworkConfig, seed: u64) -> Result<Network> {
    config.validate()?;
    let mut prng = Prng::new(seed);
    let n_layers = config.layer_dims.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (n_in, n_out) = (config.layer_dims[l], config.layer_dims[l + 1]);
        let mut layer = he_layer(&mut prng, n_in, n_out)?;
        if l + 1 < n_layers && config.batchnorm[l] {
            layer.bn = Some(fresh_bn(n_out));
        }
        layers.push(layer);
    }
    Network::from_parts(config.clone(), layers, None)
}

/// `θ ← θ − lr·g` on every trainable tensor; running statistics untouched.
pub fn sgd_step(net: &Network, grads: &Gradients, lr: f32) -> Result<Network> {
    let mut next = net.clone();
    apply_sgd(&mut next, grads, lr)?;
    Ok(next)
}

pub(crate) fn apply_sgd(net: &mut Network, grads: &Gradients, lr: f32) -> Result<()> {
    if grads.layers.len() != net.layers.len() {
        return Err(Error::contract(format!(
            "{} gradient layers for {} layers",
            grads.layers.len(),
            net.layers.len()
        )));
    }
    let mut pairs: Vec<(&mut Tensor, &Tensor)> = Vec::new();
    for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
        pairs.push((&mut layer.weight, &g.weight));
        pairs.push((&mut layer.bias, &g.bias));
        match (&mut layer.bn, &g.gamma, &g.beta) {
            (Some(bn), Some(gg), Some(gb)) => {
                pairs.push((&mut bn.gamma, gg));
                pairs.push((&mut bn.beta, gb));
            }
            (None, None, None) => {}
            _ => return Err(Error::contract("gradient batch-norm layout differs from network")),
        }
    }
    for (t, g) in &pairs {
        if t.shape() != g.shape() {
            return Err(Error::Dimension {
                left: t.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    for (t, g) in pairs {
        for (w, &d) in t.data_mut().iter_mut().zip(g.data()) {
            let step = lr * d;
            if step != 0.0 {
                *w -= step;
            }
        }
    }
    Ok(())
}

/// Which trainable tensors use a frozen grid scale during QAT; the rest are
/// re-scaled from their current values on every forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QatPlan {
    bits: u8,
    fixed: Vec<Option<f32>>,
}

impl QatPlan {
    /// Every trainable tensor derives its scale from its own values.
    pub fn dynamic(net: &Network, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        let n = net.params().iter().filter(|(i, _)| i.role.is_trainable()).count();
        Ok(QatPlan {
            bits,
            fixed: vec![None; n],
        })
    }

    /// Body tensors share the base network's scales; head tensors are dynamic.
    pub fn shared_body(base: &Network, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        let base_scales = match base.quant() {
            Some(q) if q.bits == bits => q.scales.clone(),
            Some(q) => {
                return Err(Error::Mode(format!(
                    "base quantized to {} bits, finetune requests {bits}",
                    q.bits
                )));
            }
            None => base
                .params()
                .iter()
                .filter(|(i, _)| i.role.is_trainable())
                .map(|(_, t)| grid_scale(t, bits))
                .collect(),
        };
        let fixed = base
            .params()
            .iter()
            .filter(|(i, _)| i.role.is_trainable())
            .zip(base_scales)
            .map(|((info, _), s)| (!info.head).then_some(s))
            .collect();
        Ok(QatPlan { bits, fixed })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Scales that would apply to `net` right now.
    pub fn scales(&self, net: &Network) -> Vec<f32> {
        net.params()
            .iter()
            .filter(|(i, _)| i.role.is_trainable())
            .zip(&self.fixed)
            .map(|((_, t), fixed)| fixed.unwrap_or_else(|| grid_scale(t, self.bits)))
            .collect()
    }

    /// The network the forward pass actually sees: every trainable tensor
    /// rounded onto its grid.
    pub fn effective(&self, net: &Network) -> Network {
        let scales = self.scales(net);
        let mut out = net.clone();
        let trainable = out.params_mut().into_iter().filter(|(i, _)| i.role.is_trainable());
        for ((_, t), s) in trainable.zip(scales) {
            *t = fake_quantize_with_scale(t, s, self.bits);
        }
        out
    }

    /// Converts trained master weights into the stored quantized network.
    pub fn finalize(&self, net: &Network) -> Network {
        let scales = self.scales(net);
        let mut out = self.effective(net);
        out.set_quant(Some(QuantInfo {
            bits: self.bits,
            scales,
        }));
        out
    }
}

/// Mini-batch SGD under a label view. Returns the trained network and the
/// mean training loss of every epoch.
pub fn train(net: &Network, dataset: &Dataset, view: LabelView, config: &TrainConfig) -> Result<(Network, Vec<f32>)> {
    config.validate()?;
    let classes = dataset.class_count(view)?;
    if net.head_dim() != classes {
        return Err(Error::contract(format!(
            "head has {} outputs but the label view has {classes} classes",
            net.head_dim()
        )));
    }
    let plan = if config.qat {
        Some(QatPlan::dynamic(net, config.qat_bits)?)
    } else {
        None
    };
    let (x, labels) = dataset.view(view)?;
    run_sgd(net.clone(), &x, &labels, config, plan.as_ref())
}

/// Specialist for superclass `superclass`: the base body with a fresh head of
/// the superclass's subclass count, trained on that superclass's rows.
pub fn finetune_from_super(
    super_net: &Network,
    superclass: usize,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Network> {
    config.validate()?;
    let width = dataset.manifest().subclass_count(superclass)?;
    if super_net.input_dim() != dataset.dim() {
        return Err(Error::Dimension {
            left: vec![super_net.input_dim()],
            right: vec![dataset.dim()],
        });
    }
    let mut layers = super_net.layers().to_vec();
    let head_in = *super_net.config().layer_dims.iter().rev().nth(1).unwrap();
    let mut prng = Prng::derive(config.seed, HEAD_STREAM);
    *layers.last_mut().unwrap() = he_layer(&mut prng, head_in, width)?;
    let start = Network::from_parts(super_net.config().with_head(width), layers, None)?;
    let plan = if config.qat {
        Some(QatPlan::shared_body(super_net, config.qat_bits)?)
    } else {
        None
    };
    let (x, labels) = dataset.view(LabelView::SubclassOf(superclass))?;
    Ok(run_sgd(start, &x, &labels, config, plan.as_ref())?.0)
}

fn run_sgd(
    mut net: Network,
    x: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    plan: Option<&QatPlan>,
) -> Result<(Network, Vec<f32>)> {
    if config.epochs == 0 {
        return Ok((net, Vec::new()));
    }
    if labels.is_empty() {
        return Err(Error::contract("no training rows under this label view"));
    }
    if x.cols() != net.input_dim() {
        return Err(Error::Dimension {
            left: x.shape().to_vec(),
            right: vec![x.rows(), net.input_dim()],
        });
    }
    net.set_quant(None);
    let n = labels.len();
    let dim = x.cols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut prng = Prng::derive(config.seed, SHUFFLE_STREAM);
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        prng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let mut data = Vec::with_capacity(chunk.len() * dim);
            for &i in chunk {
                data.extend_from_slice(x.row(i));
            }
            let batch = Tensor::new(vec![chunk.len(), dim], data)?;
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let effective;
            let view = match plan {
                Some(p) => {
                    effective = p.effective(&net);
                    &effective
                }
                None => &net,
            };
            let (_, cache) = view.forward(&batch, true)?;
            epoch_loss += view.loss(&cache, &batch_labels)? as f64 * chunk.len() as f64;
            // straight-through: gradients taken at the quantized point update the masters
            let grads = view.backward(&cache, &batch_labels)?;
            apply_sgd(&mut net, &grads, config.lr)?;
            net.update_running_stats(&cache);
        }
        history.push((epoch_loss / n as f64) as f32);
    }
    let net = match plan {
        Some(p) => p.finalize(&net),
        None => net,
    };
    Ok((net, history))
}
