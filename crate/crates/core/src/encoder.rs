//! Compact 1-D convolutional encoder mapping a sample vector to `L` delay estimates.
//!
//! Layout: max-abs input scaling, three `conv1d + GELU` blocks, flatten,
//! `linear + GELU` hidden layers, and a final linear layer without activation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{FriError, Result};
use crate::seed::{self, stream};

/// Parameter budget of the reference encoder.
pub const DEFAULT_PARAM_TARGET: usize = 115_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_len: usize,
    pub output_len: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub param_target: Option<usize>,
}

impl EncoderConfig {
    /// Channels `[32, 64, 64]`, kernel 3, one hidden layer sized to land on `target`.
    pub fn tuned(input_len: usize, output_len: usize, target: usize) -> Self {
        let mut cfg = Self {
            input_len,
            output_len,
            conv_channels: vec![32, 64, 64],
            conv_kernel: 3,
            hidden: vec![1],
            param_target: Some(target),
        };
        let conv = cfg.conv_param_count();
        let flat = cfg.flatten_width();
        // conv + h·(flat + 1) + L·(h + 1) = target
        let h = (target as f64 - conv as f64 - output_len as f64) / (flat + 1 + output_len) as f64;
        cfg.hidden = vec![h.round().max(1.0) as usize];
        cfg
    }

    pub fn standard(input_len: usize, output_len: usize) -> Self {
        Self::tuned(input_len, output_len, DEFAULT_PARAM_TARGET)
    }

    fn conv_param_count(&self) -> usize {
        let mut c_in = 1;
        let mut total = 0;
        for &c in &self.conv_channels {
            total += c * c_in * self.conv_kernel + c;
            c_in = c;
        }
        total
    }

    fn flatten_width(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(1) * self.input_len
    }

    pub fn param_count(&self) -> usize {
        let mut total = self.conv_param_count();
        let mut width = self.flatten_width();
        for &h in self.hidden.iter().chain(std::iter::once(&self.output_len)) {
            total += width * h + h;
            width = h;
        }
        total
    }

    pub fn validate(&self) -> Result<()> {
        let widths_ok = self.input_len > 0
            && self.output_len > 0
            && self.conv_channels.iter().all(|&c| c > 0)
            && self.hidden.iter().all(|&h| h > 0);
        if !widths_ok {
            return Err(FriError::config("encoder widths must be positive"));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(FriError::config(format!("conv kernel size {} must be odd", self.conv_kernel)));
        }
        if let Some(target) = self.param_target {
            let count = self.param_count() as f64;
            let t = target as f64;
            if (count - t).abs() > 0.1 * t {
                return Err(FriError::config(format!(
                    "encoder has {count} parameters, outside ±10% of the target {target}; adjust the hidden widths"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum LayerKind {
    Conv,
    Hidden,
    Output,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    kind: LayerKind,
    weight: ParamId,
    bias: ParamId,
}

/// One row of the layer table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    params: ParamSet,
    layers: Vec<Layer>,
}

/// Output node of a forward pass plus the graph leaves bound to each parameter.
pub struct EncoderPass {
    pub output: Var,
    pub bound: Vec<(ParamId, Var)>,
}

fn uniform_tensor<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("shape")
}

impl Encoder {
    /// Builds the network with weights uniform in `±√(3/fan_in)` and zero biases.
    pub fn new(config: EncoderConfig, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng_for(seed_value, stream::INIT, 0);
        let mut params = ParamSet::new();
        let mut layers = Vec::new();
        let k = config.conv_kernel;
        let mut c_in = 1;
        for (i, &c) in config.conv_channels.iter().enumerate() {
            let bound = (3.0 / (c_in * k) as f64).sqrt();
            let weight = params.push(format!("conv{i}.weight"), uniform_tensor(&[c, c_in, k], bound, &mut rng), true);
            let bias = params.push(format!("conv{i}.bias"), Tensor::zeros(&[c]), true);
            layers.push(Layer {
                kind: LayerKind::Conv,
                weight,
                bias,
            });
            c_in = c;
        }
        let mut width = config.flatten_width();
        let outs: Vec<(usize, LayerKind)> = config
            .hidden
            .iter()
            .map(|&h| (h, LayerKind::Hidden))
            .chain(std::iter::once((config.output_len, LayerKind::Output)))
            .collect();
        for (i, (h, kind)) in outs.into_iter().enumerate() {
            let bound = (3.0 / width as f64).sqrt();
            let weight = params.push(format!("fc{i}.weight"), uniform_tensor(&[width, h], bound, &mut rng), true);
            let bias = params.push(format!("fc{i}.bias"), Tensor::zeros(&[h]), true);
            layers.push(Layer { kind, weight, bias });
            width = h;
        }
        Ok(Self { config, params, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records the network on `graph` for input `y` of shape `(B, N)`.
    pub fn forward(&self, graph: &mut Graph, y: Var) -> Result<EncoderPass> {
        let shape = graph.shape(y).to_vec();
        if shape.len() != 2 || shape[1] != self.config.input_len {
            return Err(FriError::Shape {
                op: "encoder input",
                left: shape,
                right: vec![0, self.config.input_len],
            });
        }
        let b = shape[0];
        let mut bound = Vec::with_capacity(2 * self.layers.len());
        let x = graph.normalize_max_abs(y)?;
        let mut x = graph.reshape(x, vec![b, 1, self.config.input_len])?;
        let mut flattened = false;
        for layer in &self.layers {
            let w = self.params.bind(graph, layer.weight);
            let bias = self.params.bind(graph, layer.bias);
            bound.push((layer.weight, w));
            bound.push((layer.bias, bias));
            match layer.kind {
                LayerKind::Conv => {
                    let c = graph.conv1d(x, w)?;
                    let c = graph.add_bias(c, bias)?;
                    x = graph.gelu(c);
                }
                LayerKind::Hidden | LayerKind::Output => {
                    if !flattened {
                        x = graph.flatten(x)?;
                        flattened = true;
                    }
                    let m = graph.matmul(x, w)?;
                    x = graph.add_bias(m, bias)?;
                    if matches!(layer.kind, LayerKind::Hidden) {
                        x = graph.gelu(x);
                    }
                }
            }
        }
        Ok(EncoderPass { output: x, bound })
    }

    /// Delay estimates for a `(B, N)` batch, optionally sorted ascending per row.
    pub fn predict_delays(&self, samples: &Tensor, sort: bool) -> Result<Tensor> {
        let mut g = Graph::new();
        let y = g.constant(samples.clone());
        let pass = self.forward(&mut g, y)?;
        let mut out = g.value(pass.output).clone();
        if sort {
            let l = self.config.output_len;
            for row in out.data_mut().chunks_mut(l) {
                row.sort_by(f64::total_cmp);
            }
        }
        Ok(out)
    }

    /// Convenience wrapper for a single sample vector.
    pub fn predict_one(&self, samples: &[f64], sort: bool) -> Result<Vec<f64>> {
        let t = Tensor::new(vec![1, samples.len()], samples.to_vec())?;
        Ok(self.predict_delays(&t, sort)?.into_data())
    }

    pub fn layer_table(&self) -> Vec<LayerInfo> {
        let mut rows = Vec::new();
        let n = self.config.input_len;
        let size = |id: ParamId| self.params.get(id).value.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = &self.params.get(layer.weight).value;
            let (kind, output_shape) = match layer.kind {
                LayerKind::Conv => ("conv1d+gelu", vec![w.shape()[0], n]),
                LayerKind::Hidden => ("linear+gelu", vec![w.shape()[1]]),
                LayerKind::Output => ("linear", vec![w.shape()[1]]),
            };
            rows.push(LayerInfo {
                name: format!("layer{i}"),
                kind,
                output_shape,
                params: size(layer.weight) + size(layer.bias),
            });
        }
        rows
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save_params(path, &self.params)
    }

    /// Rebuilds from a configuration and a checkpoint written by [`Encoder::save`].
    pub fn load(config: EncoderConfig, path: &Path) -> Result<Self> {
        let mut enc = Self::new(config, 0)?;
        checkpoint::load_params(path, &mut enc.params)?;
        Ok(enc)
    }
}
