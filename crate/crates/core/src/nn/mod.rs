//! Feed-forward classifier with optional batch-norm, trained by plain SGD.

mod gradcheck;
pub(crate) mod kernels;
mod quant;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gradcheck::gradient_check;
pub use quant::{fake_quantize, fake_quantize_with_scale, grid_scale, is_on_grid, quantize_to_int, QuantInfo};
pub use train::{finetune_from_super, init_network, sgd_step, train, QatPlan, TrainConfig};

use crate::codec::{self, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use kernels::{BnParams, LayerParams, Trace, BN_MOMENTUM};

pub const NETWORK_MAGIC: &[u8; 4] = b"HSNW";
pub const NETWORK_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// `[input, hidden…, output]`.
    pub layer_dims: Vec<usize>,
    /// One flag per hidden layer.
    pub batchnorm: Vec<bool>,
}

impl NetworkConfig {
    pub fn new(layer_dims: Vec<usize>, batchnorm: bool) -> Result<Self> {
        let hidden = layer_dims.len().saturating_sub(2);
        let config = NetworkConfig {
            layer_dims,
            batchnorm: vec![batchnorm; hidden],
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 3 {
            return Err(Error::parameter("need at least one hidden layer"));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::parameter(format!("zero-width layer in {:?}", self.layer_dims)));
        }
        if self.batchnorm.len() != self.layer_dims.len() - 2 {
            return Err(Error::parameter("one batch-norm flag per hidden layer"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn head_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn with_head(&self, head_dim: usize) -> Self {
        let mut c = self.clone();
        *c.layer_dims.last_mut().unwrap() = head_dim;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn is_trainable(self) -> bool {
        matches!(
            self,
            ParamRole::Weight | ParamRole::Bias | ParamRole::Gamma | ParamRole::Beta
        )
    }

    pub fn is_running_stat(self) -> bool {
        !self.is_trainable()
    }

    fn suffix(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::Gamma => "bn.gamma",
            ParamRole::Beta => "bn.beta",
            ParamRole::RunningMean => "bn.running_mean",
            ParamRole::RunningVar => "bn.running_var",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub layer: usize,
    pub role: ParamRole,
    pub head: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
    quant: Option<QuantInfo>,
}

/// Parameter gradients, shaped like the trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weight: Tensor,
    pub bias: Tensor,
    pub gamma: Option<Tensor>,
    pub beta: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn max_abs(&self) -> f32 {
        self.tensors()
            .flat_map(|t| t.data().iter())
            .fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Trainable-order iteration: weight, bias, gamma, beta per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| {
            [Some(&l.weight), Some(&l.bias), l.gamma.as_ref(), l.beta.as_ref()]
                .into_iter()
                .flatten()
        })
    }
}

/// Activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    trace: Trace<f32>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.trace.rows
    }
}

impl Network {
    pub fn from_parts(config: NetworkConfig, layers: Vec<Layer>, quant: Option<QuantInfo>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.layer_dims.len() - 1 {
            return Err(Error::contract(format!(
                "{} layers for dims {:?}",
                layers.len(),
                config.layer_dims
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (n_in, n_out) = (config.layer_dims[l], config.layer_dims[l + 1]);
            let want_bn = l + 1 < layers.len() && config.batchnorm[l];
            check_shape(&layer.weight, &[n_out, n_in])?;
            check_shape(&layer.bias, &[n_out])?;
            match (&layer.bn, want_bn) {
                (Some(bn), true) => {
                    for t in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                        check_shape(t, &[n_out])?;
                    }
                    if bn.running_var.data().iter().any(|&v| !(v >= 0.0)) {
                        return Err(Error::contract(format!("layer {l} has a negative running variance")));
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::contract(format!(
                        "layer {l} batch-norm presence disagrees with config"
                    )))
                }
            }
        }
        let net = Network { config, layers, quant };
        if let Some(q) = &net.quant {
            let trainable = net.params().iter().filter(|(i, _)| i.role.is_trainable()).count();
            if q.scales.len() != trainable {
                return Err(Error::contract(format!(
                    "{} quantization scales for {trainable} tensors",
                    q.scales.len()
                )));
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head_dim(&self) -> usize {
        self.config.head_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    pub fn quant(&self) -> Option<&QuantInfo> {
        self.quant.as_ref()
    }

    pub(crate) fn set_quant(&mut self, quant: Option<QuantInfo>) {
        self.quant = quant;
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Every tensor in declaration order.
    pub fn params(&self) -> Vec<(ParamInfo, &Tensor)> {
        let last = self.layers.len() - 1;
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let head = l == last;
            out.push((info(l, ParamRole::Weight, head), &layer.weight));
            out.push((info(l, ParamRole::Bias, head), &layer.bias));
            if let Some(bn) = &layer.bn {
                out.push((info(l, ParamRole::Gamma, head), &bn.gamma));
                out.push((info(l, ParamRole::Beta, head), &bn.beta));
                out.push((info(l, ParamRole::RunningMean, head), &bn.running_mean));
                out.push((info(l, ParamRole::RunningVar, head), &bn.running_var));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(ParamInfo, &mut Tensor)> {
        let last = self.layers.len() - 1;
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let head = l == last;
            out.push((info(l, ParamRole::Weight, head), &mut layer.weight));
            out.push((info(l, ParamRole::Bias, head), &mut layer.bias));
            if let Some(bn) = &mut layer.bn {
                out.push((info(l, ParamRole::Gamma, head), &mut bn.gamma));
                out.push((info(l, ParamRole::Beta, head), &mut bn.beta));
                out.push((info(l, ParamRole::RunningMean, head), &mut bn.running_mean));
                out.push((info(l, ParamRole::RunningVar, head), &mut bn.running_var));
            }
        }
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.params().into_iter().find(|(i, _)| i.name == name).map(|(_, t)| t)
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub(crate) fn layer_params(&self) -> Vec<LayerParams<'_, f32>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| LayerParams {
                in_dim: self.config.layer_dims[l],
                out_dim: self.config.layer_dims[l + 1],
                weight: layer.weight.data(),
                bias: layer.bias.data(),
                bn: layer.bn.as_ref().map(|bn| BnParams {
                    gamma: bn.gamma.data(),
                    beta: bn.beta.data(),
                    running_mean: bn.running_mean.data(),
                    running_var: bn.running_var.data(),
                }),
            })
            .collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != 2 || batch.cols() != self.input_dim() {
            return Err(Error::Dimension {
                left: batch.shape().to_vec(),
                right: vec![batch.rows(), self.input_dim()],
            });
        }
        Ok(())
    }

    /// Logits for a batch. Training mode normalizes with batch statistics.
    pub fn forward(&self, batch: &Tensor, training: bool) -> Result<(Tensor, ForwardCache)> {
        self.check_batch(batch)?;
        let trace = kernels::forward(&self.layer_params(), batch.data(), batch.rows(), training);
        let logits = Tensor::new(vec![batch.rows(), self.head_dim()], trace.logits.clone())?;
        Ok((logits, ForwardCache { trace }))
    }

    /// Gradient of mean cross-entropy for the batch that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
        let raw = kernels::backward(&self.layer_params(), &cache.trace, labels)?;
        let layers = raw
            .into_iter()
            .zip(&self.layers)
            .map(|(g, layer)| {
                let like = |data: Vec<f32>, t: &Tensor| Tensor::new(t.shape().to_vec(), data);
                Ok(LayerGradients {
                    weight: like(g.weight, &layer.weight)?,
                    bias: like(g.bias, &layer.bias)?,
                    gamma: g
                        .gamma
                        .map(|d| like(d, &layer.bn.as_ref().unwrap().gamma))
                        .transpose()?,
                    beta: g.beta.map(|d| like(d, &layer.bn.as_ref().unwrap().beta)).transpose()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Gradients { layers })
    }

    pub fn loss(&self, cache: &ForwardCache, labels: &[usize]) -> Result<f32> {
        kernels::loss(&cache.trace, labels, self.head_dim())
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// statistics (`r ← 0.9·r + 0.1·batch`).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let keep = BN_MOMENTUM as f32;
        for (layer, lc) in self.layers.iter_mut().zip(&cache.trace.layers) {
            if let (Some(bn), Some(bc)) = (&mut layer.bn, &lc.bn) {
                if let (Some(mean), Some(var)) = (&bc.batch_mean, &bc.batch_var) {
                    for (r, &b) in bn.running_mean.data_mut().iter_mut().zip(mean) {
                        *r = keep * *r + (1.0 - keep) * b;
                    }
                    for (r, &b) in bn.running_var.data_mut().iter_mut().zip(var) {
                        *r = keep * *r + (1.0 - keep) * b;
                    }
                }
            }
        }
    }

    /// Inference-mode logits.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch, false)?.0)
    }

    /// Inference-mode argmax per row; ties go to the lowest index.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    pub fn predict_row(&self, row: &[f32]) -> Result<usize> {
        let t = Tensor::new(vec![1, row.len()], row.to_vec())?;
        Ok(self.predict(&t)?[0])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(NETWORK_MAGIC);
        w.u16(NETWORK_VERSION);
        w.u32(self.config.layer_dims.len() as u32);
        for &d in &self.config.layer_dims {
            w.u32(d as u32);
        }
        for &bn in &self.config.batchnorm {
            w.u8(bn as u8);
        }
        match &self.quant {
            None => w.u8(0),
            Some(q) => {
                w.u8(1);
                w.u8(q.bits);
                w.u32(q.scales.len() as u32);
                w.f32s(&q.scales);
            }
        }
        for (_, t) in self.params() {
            w.f32s(t.data());
        }
        w.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(NETWORK_MAGIC)?;
        r.expect_version(NETWORK_VERSION)?;
        let body = codec::verify_trailing_crc(bytes, 0)?;
        let mut r = ByteReader::with_base(&body[6..], 6);
        let config_at = r.offset();
        let n_dims = r.u32()? as usize;
        if n_dims > r.remaining() / 4 {
            return Err(Error::format(config_at, format!("implausible layer count {n_dims}")));
        }
        let layer_dims = (0..n_dims)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let batchnorm = (0..n_dims.saturating_sub(2))
            .map(|_| r.u8().map(|b| b != 0))
            .collect::<Result<Vec<_>>>()?;
        let config = NetworkConfig { layer_dims, batchnorm };
        config.validate().map_err(|e| Error::format(config_at, e))?;
        let quant_at = r.offset();
        let quant = match r.u8()? {
            0 => None,
            1 => {
                let bits = r.u8()?;
                let n = r.u32()? as usize;
                Some(QuantInfo {
                    bits,
                    scales: r.f32s(n)?,
                })
            }
            other => return Err(Error::format(quant_at, format!("bad quantization flag {other}"))),
        };
        let mut layers = Vec::new();
        let n_layers = config.layer_dims.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (config.layer_dims[l], config.layer_dims[l + 1]);
            let mut read = |shape: Vec<usize>| -> Result<Tensor> {
                let n = shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
                let n = n.ok_or_else(|| Error::format(r.offset(), "tensor size overflow"))?;
                Tensor::new(shape, r.f32s(n)?)
            };
            let weight = read(vec![n_out, n_in])?;
            let bias = read(vec![n_out])?;
            let bn = if l + 1 < n_layers && config.batchnorm[l] {
                Some(BatchNorm {
                    gamma: read(vec![n_out])?,
                    beta: read(vec![n_out])?,
                    running_mean: read(vec![n_out])?,
                    running_var: read(vec![n_out])?,
                })
            } else {
                None
            };
            layers.push(Layer { weight, bias, bn });
        }
        r.expect_end()?;
        Network::from_parts(config, layers, quant).map_err(|e| Error::format(config_at, e))
    }

    /// Size of the serialized network file.
    pub fn storage_bytes(&self) -> usize {
        self.to_bytes().len()
    }

    /// CRC-32C of the serialized file body (everything before the trailing
    /// checksum); identifies a delta base.
    pub fn fingerprint(&self) -> u32 {
        // The file already ends in the CRC-32C of everything before it; a CRC
        // over the whole file would be the constant CRC residue.
        let bytes = self.to_bytes();
        codec::crc32c(&bytes[..bytes.len() - 4])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Network::from_bytes(&std::fs::read(path)?)
    }
}

fn info(layer: usize, role: ParamRole, head: bool) -> ParamInfo {
    ParamInfo {
        name: format!("layer{layer}.{}", role.suffix()),
        layer,
        role,
        head,
    }
}

fn check_shape(t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Dimension {
            left: t.shape().to_vec(),
            right: shape.to_vec(),
        });
    }
    Ok(())
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
