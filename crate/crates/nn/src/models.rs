//! Model zoo: linear and logistic regression, MLPs and LeNet-5.
//!
//! Flat parameter layout: layers in forward order; within a layer the weight
//! (row-major, `[out, in]` for dense layers and `[filters, channels, kh, kw]`
//! for convolutions, so every filter is one contiguous block) followed by the
//! bias.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use wgsef_core::optim::derive_seed;

use crate::autodiff::{conv_out_len, Tape, Var};
use crate::error::{NnError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Linear,
    Logistic,
    Mlp { hidden: Vec<usize> },
    #[serde(rename = "lenet5")]
    LeNet5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Per-sample input shape, e.g. `[1, 32, 32]` or `[200]`.
    pub input_shape: Vec<usize>,
    /// Output dimension (regression) or number of classes.
    pub outputs: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { stride: usize, pad: usize },
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub label: String,
    pub kind: LayerKind,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn out_units(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_units(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Weights per output unit (`in` for dense, `C * kh * kw` for conv).
    pub fn unit_len(&self) -> usize {
        self.weight.numel() / self.out_units()
    }

    /// Weights per (output unit, input unit) pair: `kh * kw`, or 1 for dense.
    pub fn slice_len(&self) -> usize {
        self.unit_len() / self.in_units()
    }

    pub fn num_params(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Layer(usize),
    Relu,
    MaxPool { size: usize, stride: usize },
    Flatten,
}

/// Position of one layer's parameters in the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

/// Per-batch targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels(Vec<usize>),
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(t) => t.shape()[0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
            Targets::Values(t) => Targets::Values(t.gather_rows(idx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
    pub stages: Vec<Stage>,
}

fn dense(label: &str, inputs: usize, outputs: usize) -> Layer {
    Layer {
        label: label.into(),
        kind: LayerKind::Dense,
        weight: Tensor::zeros(&[outputs, inputs]),
        bias: Tensor::zeros(&[outputs]),
    }
}

fn conv(label: &str, channels: usize, filters: usize, kernel: usize) -> Layer {
    Layer {
        label: label.into(),
        kind: LayerKind::Conv { stride: 1, pad: 0 },
        weight: Tensor::zeros(&[filters, channels, kernel, kernel]),
        bias: Tensor::zeros(&[filters]),
    }
}

impl Model {
    /// Builds the architecture and initializes it from `spec.seed`: He normal
    /// (`sd = sqrt(2 / fan_in)`) for layers followed by a relu, uniform
    /// `+-1/sqrt(fan_in)` for output heads, zero biases.
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        if spec.input_shape.is_empty() || spec.input_shape.contains(&0) || spec.outputs == 0 {
            return Err(NnError::InvalidSpec(format!(
                "input shape {:?} and outputs {} must be positive",
                spec.input_shape, spec.outputs
            )));
        }
        let features: usize = spec.input_shape.iter().product();
        let mut layers = Vec::new();
        let mut stages = Vec::new();
        if spec.input_shape.len() > 1 && spec.architecture != Architecture::LeNet5 {
            stages.push(Stage::Flatten);
        }
        match &spec.architecture {
            Architecture::Linear | Architecture::Logistic => {
                layers.push(dense("fc", features, spec.outputs));
                stages.push(Stage::Layer(0));
            }
            Architecture::Mlp { hidden } => {
                let mut width = features;
                for (i, &h) in hidden.iter().enumerate() {
                    if h == 0 {
                        return Err(NnError::InvalidSpec("hidden layer of width 0".into()));
                    }
                    layers.push(dense(&format!("fc{}", i + 1), width, h));
                    stages.extend([Stage::Layer(i), Stage::Relu]);
                    width = h;
                }
                layers.push(dense(&format!("fc{}", hidden.len() + 1), width, spec.outputs));
                stages.push(Stage::Layer(hidden.len()));
            }
            Architecture::LeNet5 => {
                let [c, h, w] = spec.input_shape[..] else {
                    return Err(NnError::InvalidSpec(format!(
                        "LeNet-5 needs a [channels, height, width] input, got {:?}",
                        spec.input_shape
                    )));
                };
                let side = |len: usize| {
                    conv_out_len(len, 5, 1, 0)
                        .and_then(|l| conv_out_len(l, 2, 2, 0))
                        .and_then(|l| conv_out_len(l, 5, 1, 0))
                        .and_then(|l| conv_out_len(l, 2, 2, 0))
                };
                let (Some(fh), Some(fw)) = (side(h), side(w)) else {
                    return Err(NnError::InvalidSpec(format!("input {h}x{w} too small for LeNet-5")));
                };
                layers.push(conv("conv1", c, 6, 5));
                layers.push(conv("conv2", 6, 16, 5));
                layers.push(dense("fc1", 16 * fh * fw, 120));
                layers.push(dense("fc2", 120, 84));
                layers.push(dense("fc3", 84, spec.outputs));
                let pool = Stage::MaxPool { size: 2, stride: 2 };
                stages.extend([
                    Stage::Layer(0),
                    Stage::Relu,
                    pool,
                    Stage::Layer(1),
                    Stage::Relu,
                    pool,
                    Stage::Flatten,
                    Stage::Layer(2),
                    Stage::Relu,
                    Stage::Layer(3),
                    Stage::Relu,
                    Stage::Layer(4),
                ]);
            }
        }
        let mut model = Model { spec: spec.clone(), layers, stages };
        model.initialize(spec.seed);
        Ok(model)
    }

    fn initialize(&mut self, seed: u64) {
        let relu_after: Vec<bool> = (0..self.layers.len())
            .map(|i| {
                let pos = self.stages.iter().position(|s| *s == Stage::Layer(i)).unwrap();
                self.stages.get(pos + 1) == Some(&Stage::Relu)
            })
            .collect();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let fan_in = layer.unit_len() as f64;
            if relu_after[i] {
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
                layer.weight.data_mut().iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            } else {
                let r = 1.0 / fan_in.sqrt();
                layer.weight.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-r..=r));
            }
            layer.bias.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn task(&self) -> Task {
        match self.spec.architecture {
            Architecture::Linear => Task::Regression,
            _ => Task::Classification,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn layout(&self) -> Vec<ParamBlock> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = offset..offset + l.weight.numel();
                let b = w.end..w.end + l.bias.numel();
                offset = b.end;
                ParamBlock { weight: w, bias: b }
            })
            .collect()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn scatter_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(NnError::DimensionMismatch { expected: n, actual: flat.len() });
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weight.numel());
            let (b, tail) = tail.split_at(l.bias.numel());
            l.weight.data_mut().copy_from_slice(w);
            l.bias.data_mut().copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    /// Per-sample activation shape after each stage, starting with the input.
    pub fn stage_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = vec![self.spec.input_shape.clone()];
        let mut cur = self.spec.input_shape.clone();
        for stage in &self.stages {
            cur = match *stage {
                Stage::Layer(i) => {
                    let l = &self.layers[i];
                    match l.kind {
                        LayerKind::Dense => vec![l.out_units()],
                        LayerKind::Conv { stride, pad } => {
                            let ws = l.weight.shape();
                            vec![
                                l.out_units(),
                                conv_out_len(cur[1], ws[2], stride, pad).unwrap_or(0),
                                conv_out_len(cur[2], ws[3], stride, pad).unwrap_or(0),
                            ]
                        }
                    }
                }
                Stage::Relu => cur,
                Stage::MaxPool { size, stride } => vec![
                    cur[0],
                    conv_out_len(cur[1], size, stride, 0).unwrap_or(0),
                    conv_out_len(cur[2], size, stride, 0).unwrap_or(0),
                ],
                Stage::Flatten => vec![cur.iter().product()],
            };
            shapes.push(cur.clone());
        }
        shapes
    }

    /// Records the forward pass. Returns the output and `(weight, bias)` vars per layer.
    pub fn forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<(Var, Vec<(Var, Var)>)> {
        let params: Vec<(Var, Var)> = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        let mut h = x;
        for stage in &self.stages {
            h = match *stage {
                Stage::Layer(i) => {
                    let (w, b) = params[i];
                    let z = match self.layers[i].kind {
                        LayerKind::Dense => tape.matmul_bt(h, w)?,
                        LayerKind::Conv { stride, pad } => tape.conv2d(h, w, stride, pad)?,
                    };
                    tape.add_bias(z, b)?
                }
                Stage::Relu => tape.relu(h),
                Stage::MaxPool { size, stride } => tape.max_pool2d(h, size, stride)?,
                Stage::Flatten => tape.flatten(h)?,
            };
        }
        Ok((h, params))
    }

    fn check_batch(&self, x: &Tensor) -> Result<()> {
        if x.ndim() < 2 || x.shape()[1..] != self.spec.input_shape[..] {
            return Err(NnError::ShapeMismatch {
                op: "model input",
                detail: format!("batch {:?} for per-sample shape {:?}", x.shape(), self.spec.input_shape),
            });
        }
        Ok(())
    }

    fn loss_var(&self, tape: &mut Tape, out: Var, targets: &Targets) -> Result<Var> {
        match (self.task(), targets) {
            (Task::Classification, Targets::Labels(l)) => tape.softmax_cross_entropy(out, l),
            (Task::Regression, Targets::Values(t)) => tape.mse(out, t),
            _ => Err(NnError::InvalidSpec("targets do not match the model task".into())),
        }
    }

    /// Batch loss and its gradient in flat layout.
    pub fn loss_and_grad(&self, x: &Tensor, targets: &Targets) -> Result<(f64, Vec<f64>)> {
        self.check_batch(x)?;
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let (out, params) = self.forward(&mut tape, input, true)?;
        let loss = self.loss_var(&mut tape, out, targets)?;
        let mut grads = tape.backward(loss)?;
        let mut flat = Vec::with_capacity(self.num_params());
        for (l, (w, b)) in self.layers.iter().zip(params) {
            flat.extend(grads.take_or_zeros(w, l.weight.numel()));
            flat.extend(grads.take_or_zeros(b, l.bias.numel()));
        }
        Ok((tape.value(loss).data()[0], flat))
    }

    pub fn loss(&self, x: &Tensor, targets: &Targets) -> Result<f64> {
        self.check_batch(x)?;
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let (out, _) = self.forward(&mut tape, input, false)?;
        let loss = self.loss_var(&mut tape, out, targets)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Raw outputs (logits or regression values), `[N, outputs]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_batch(x)?;
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let (out, _) = self.forward(&mut tape, input, false)?;
        Ok(tape.value(out).clone())
    }
}

/// Index of the largest entry of each row; ties go to the lower class.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let k = t.shape()[1];
    t.data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
