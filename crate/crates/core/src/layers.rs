//! Layer builders: parameter initialization, forward passes over graph vars,
//! and a config-driven dispatch used by the shape/error contract tests.
//!
//! Weight matrices use fan-in-scaled uniform initialization; biases start at
//! zero; normalization scales start at one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ops;
use crate::graph::Var;
use crate::params::{Bound, ParameterSet};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Relu,
}

impl Activation {
    pub fn apply<F: Scalar>(&self, x: &Var<F>) -> Var<F> {
        match self {
            Activation::Silu => ops::silu(x),
            Activation::Relu => ops::relu(x),
        }
    }
}

fn shape_err(context: &str, expected: String, got: &[usize]) -> Error {
    Error::ShapeMismatch {
        context: context.to_string(),
        expected,
        got: format!("{got:?}"),
    }
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

fn fan_in_uniform<F: Scalar>(rng: &mut RngStream, shape: &[usize], fan_in: usize) -> Tensor<F> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64(rng.uniform_range(-bound, bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape consistent")
}

pub fn init_dense<F: Scalar>(
    ps: &mut ParameterSet<F>,
    name: &str,
    out_dim: usize,
    in_dim: usize,
    rng: &mut RngStream,
) -> Result<()> {
    ps.insert(
        &format!("{name}.weight"),
        fan_in_uniform(rng, &[out_dim, in_dim], in_dim),
        true,
    )?;
    ps.insert(&format!("{name}.bias"), Tensor::zeros(&[out_dim]), true)
}

pub fn init_conv1d<F: Scalar>(
    ps: &mut ParameterSet<F>,
    name: &str,
    out_ch: usize,
    in_ch: usize,
    kernel: usize,
    rng: &mut RngStream,
) -> Result<()> {
    ps.insert(
        &format!("{name}.weight"),
        fan_in_uniform(rng, &[out_ch, in_ch, kernel], in_ch * kernel),
        true,
    )?;
    ps.insert(&format!("{name}.bias"), Tensor::zeros(&[out_ch]), true)
}

pub fn init_group_norm<F: Scalar>(ps: &mut ParameterSet<F>, name: &str, channels: usize) -> Result<()> {
    ps.insert(&format!("{name}.gamma"), Tensor::full(&[channels], F::one()), true)?;
    ps.insert(&format!("{name}.beta"), Tensor::zeros(&[channels]), true)
}

pub fn init_lstm<F: Scalar>(
    ps: &mut ParameterSet<F>,
    name: &str,
    in_dim: usize,
    hidden: usize,
    rng: &mut RngStream,
) -> Result<()> {
    ps.insert(
        &format!("{name}.w_ih"),
        fan_in_uniform(rng, &[4 * hidden, in_dim], in_dim),
        true,
    )?;
    ps.insert(
        &format!("{name}.w_hh"),
        fan_in_uniform(rng, &[4 * hidden, hidden], hidden),
        true,
    )?;
    ps.insert(&format!("{name}.bias"), Tensor::zeros(&[4 * hidden]), true)
}

// ---------------------------------------------------------------------------
// forward helpers over bound parameters
// ---------------------------------------------------------------------------

/// Fully-connected layer: `x [B, in] -> [B, out]`.
pub fn dense<F: Scalar>(bound: &Bound<F>, name: &str, x: &Var<F>) -> Var<F> {
    let w = bound.var(&format!("{name}.weight"));
    let b = bound.var(&format!("{name}.bias"));
    ops::add_rows(&ops::matmul_nt(x, w), b)
}

/// 1-D convolution with bias: `x [B, Cin, L] -> [B, Cout, Lout]`.
pub fn conv1d_layer<F: Scalar>(
    bound: &Bound<F>,
    name: &str,
    x: &Var<F>,
    stride: usize,
    pad: usize,
) -> Var<F> {
    let w = bound.var(&format!("{name}.weight"));
    let b = bound.var(&format!("{name}.bias"));
    ops::add_channels(&ops::conv1d(x, w, stride, pad), b)
}

/// Largest group count <= 4 dividing the channel count.
pub fn norm_groups(channels: usize) -> usize {
    for g in [4usize, 2, 1] {
        if channels % g == 0 {
            return g;
        }
    }
    1
}

pub fn group_norm_layer<F: Scalar>(bound: &Bound<F>, name: &str, x: &Var<F>, groups: usize) -> Var<F> {
    let gamma = bound.var(&format!("{name}.gamma"));
    let beta = bound.var(&format!("{name}.beta"));
    ops::group_norm(x, gamma, beta, groups, 1e-5)
}

/// One LSTM step. Gate layout in the packed weights is `[i, f, g, o]`.
pub fn lstm_cell<F: Scalar>(
    bound: &Bound<F>,
    name: &str,
    x_t: &Var<F>,
    h: &Var<F>,
    c: &Var<F>,
) -> (Var<F>, Var<F>) {
    let w_ih = bound.var(&format!("{name}.w_ih"));
    let w_hh = bound.var(&format!("{name}.w_hh"));
    let bias = bound.var(&format!("{name}.bias"));
    let hidden = h.shape()[1];

    let gates = ops::add_rows(
        &ops::add(&ops::matmul_nt(x_t, w_ih), &ops::matmul_nt(h, w_hh)),
        bias,
    );
    let i = ops::sigmoid(&ops::narrow(&gates, 1, 0, hidden));
    let f = ops::sigmoid(&ops::narrow(&gates, 1, hidden, hidden));
    let g = ops::tanh(&ops::narrow(&gates, 1, 2 * hidden, hidden));
    let o = ops::sigmoid(&ops::narrow(&gates, 1, 3 * hidden, hidden));

    let c_next = ops::add(&ops::mul(&f, c), &ops::mul(&i, &g));
    let h_next = ops::mul(&o, &ops::tanh(&c_next));
    (h_next, c_next)
}

/// Run an LSTM over a `[B, T, in]` sequence, returning hidden states
/// `[B, T, hidden]`.
pub fn lstm_sequence<F: Scalar>(
    bound: &Bound<F>,
    name: &str,
    x: &Var<F>,
    hidden: usize,
) -> Var<F> {
    let (b, t, _d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut h = Var::constant(Tensor::zeros(&[b, hidden]));
    let mut c = Var::constant(Tensor::zeros(&[b, hidden]));
    let mut outs = Vec::with_capacity(t);
    for step in 0..t {
        let x_t = ops::reshape(&ops::narrow(x, 1, step, 1), vec![b, x.shape()[2]]);
        let (h_next, c_next) = lstm_cell(bound, name, &x_t, &h, &c);
        h = h_next;
        c = c_next;
        outs.push(ops::reshape(&h, vec![b, 1, hidden]));
    }
    ops::concat(&outs, 1)
}

/// Sinusoidal embedding of an integer step index.
pub fn sinusoidal_embedding<F: Scalar>(n: usize, dim: usize) -> Tensor<F> {
    debug_assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let denom = (half.max(2) - 1) as f64;
    let mut data = vec![F::zero(); dim];
    for i in 0..half {
        let freq = (-(10000.0f64.ln()) * i as f64 / denom).exp();
        let angle = n as f64 * freq;
        data[i] = F::from_f64(angle.sin());
        data[half + i] = F::from_f64(angle.cos());
    }
    Tensor::new(vec![dim], data).expect("shape consistent")
}

// ---------------------------------------------------------------------------
// config-driven dispatch
// ---------------------------------------------------------------------------

/// Layer description for the generic forward entry point. Parameter names
/// follow the `<name>.weight` / `<name>.bias` (etc.) convention used by the
/// initializers above.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { name: String, input: usize, output: usize },
    Conv1d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Transposed-convolution replacement: nearest-neighbour upsample by
    /// `factor`, then a stride-1 convolution.
    UpsampleConv1d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        factor: usize,
        padding: usize,
    },
    /// One step; takes inputs `[x, h, c]`, returns `[h', c']` concatenated
    /// along the feature axis.
    LstmCell { name: String, input: usize, hidden: usize },
    /// Full sequence `[B, T, input] -> [B, T, hidden]`.
    LstmSequence { name: String, input: usize, hidden: usize },
    Sigmoid,
    Activation { act: Activation },
    GroupNorm { name: String, channels: usize, groups: usize },
    SinusoidalEmbedding { dim: usize },
    /// Elementwise sum of two same-shaped inputs.
    ResidualAdd,
    /// Concatenation of two `[B, C, L]` inputs along the channel axis.
    ConcatChannels,
}

impl LayerSpec {
    fn label(&self) -> String {
        match self {
            LayerSpec::Dense { name, .. } => format!("dense `{name}`"),
            LayerSpec::Conv1d { name, .. } => format!("conv1d `{name}`"),
            LayerSpec::UpsampleConv1d { name, .. } => format!("upsample-conv1d `{name}`"),
            LayerSpec::LstmCell { name, .. } => format!("lstm-cell `{name}`"),
            LayerSpec::LstmSequence { name, .. } => format!("lstm `{name}`"),
            LayerSpec::Sigmoid => "sigmoid".into(),
            LayerSpec::Activation { act } => format!("activation {act:?}"),
            LayerSpec::GroupNorm { name, .. } => format!("group-norm `{name}`"),
            LayerSpec::SinusoidalEmbedding { .. } => "sinusoidal-embedding".into(),
            LayerSpec::ResidualAdd => "residual-add".into(),
            LayerSpec::ConcatChannels => "concat-channels".into(),
        }
    }

    /// Initialize this layer's parameters into `ps`.
    pub fn init<F: Scalar>(&self, ps: &mut ParameterSet<F>, rng: &mut RngStream) -> Result<()> {
        match self {
            LayerSpec::Dense { name, input, output } => init_dense(ps, name, *output, *input, rng),
            LayerSpec::Conv1d {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::UpsampleConv1d {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } => init_conv1d(ps, name, *out_channels, *in_channels, *kernel, rng),
            LayerSpec::LstmCell { name, input, hidden } | LayerSpec::LstmSequence { name, input, hidden } => {
                init_lstm(ps, name, *input, *hidden, rng)
            }
            LayerSpec::GroupNorm { name, channels, .. } => init_group_norm(ps, name, *channels),
            _ => Ok(()),
        }
    }

    /// Forward pass over graph vars. Multi-input kinds (residual add,
    /// concatenation, LSTM cell) read additional tensors from `inputs`.
    pub fn forward_var<F: Scalar>(&self, bound: &Bound<F>, inputs: &[&Var<F>]) -> Result<Var<F>> {
        let arity = match self {
            LayerSpec::ResidualAdd | LayerSpec::ConcatChannels => 2,
            LayerSpec::LstmCell { .. } => 3,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Config(format!(
                "{} takes {arity} input(s), got {}",
                self.label(),
                inputs.len()
            )));
        }
        let x = inputs[0];
        match self {
            LayerSpec::Dense { input, .. } => {
                if x.shape().len() != 2 || x.shape()[1] != *input {
                    return Err(shape_err(&self.label(), format!("[B, {input}]"), x.shape()));
                }
                Ok(dense(bound, self.name_str(), x))
            }
            LayerSpec::Conv1d {
                in_channels,
                stride,
                padding,
                kernel,
                ..
            } => {
                if x.shape().len() != 3 || x.shape()[1] != *in_channels {
                    return Err(shape_err(&self.label(), format!("[B, {in_channels}, L]"), x.shape()));
                }
                if x.shape()[2] + 2 * padding < *kernel {
                    return Err(shape_err(
                        &self.label(),
                        format!("L + 2*{padding} >= kernel {kernel}"),
                        x.shape(),
                    ));
                }
                Ok(conv1d_layer(bound, self.name_str(), x, *stride, *padding))
            }
            LayerSpec::UpsampleConv1d {
                in_channels,
                factor,
                padding,
                ..
            } => {
                if x.shape().len() != 3 || x.shape()[1] != *in_channels {
                    return Err(shape_err(&self.label(), format!("[B, {in_channels}, L]"), x.shape()));
                }
                let up = ops::upsample_nearest(x, *factor);
                Ok(conv1d_layer(bound, self.name_str(), &up, 1, *padding))
            }
            LayerSpec::LstmCell { input, hidden, .. } => {
                let (h, c) = (inputs[1], inputs[2]);
                if x.shape().len() != 2 || x.shape()[1] != *input {
                    return Err(shape_err(&self.label(), format!("[B, {input}]"), x.shape()));
                }
                if h.shape() != [x.shape()[0], *hidden] || c.shape() != h.shape() {
                    return Err(shape_err(
                        &self.label(),
                        format!("h, c of [B, {hidden}]"),
                        h.shape(),
                    ));
                }
                let (h2, c2) = lstm_cell(bound, self.name_str(), x, h, c);
                Ok(ops::concat(&[h2, c2], 1))
            }
            LayerSpec::LstmSequence { input, hidden, .. } => {
                if x.shape().len() != 3 || x.shape()[2] != *input {
                    return Err(shape_err(&self.label(), format!("[B, T, {input}]"), x.shape()));
                }
                Ok(lstm_sequence(bound, self.name_str(), x, *hidden))
            }
            LayerSpec::Sigmoid => Ok(ops::sigmoid(x)),
            LayerSpec::Activation { act } => Ok(act.apply(x)),
            LayerSpec::GroupNorm { channels, groups, .. } => {
                if x.shape().len() != 3 || x.shape()[1] != *channels {
                    return Err(shape_err(&self.label(), format!("[B, {channels}, L]"), x.shape()));
                }
                if channels % groups != 0 {
                    return Err(Error::Config(format!(
                        "{}: channels {channels} not divisible by groups {groups}",
                        self.label()
                    )));
                }
                Ok(group_norm_layer(bound, self.name_str(), x, *groups))
            }
            LayerSpec::SinusoidalEmbedding { dim } => {
                if x.value().len() != 1 {
                    return Err(shape_err(&self.label(), "scalar step index".into(), x.shape()));
                }
                let n = x.value().item().into_f64().round() as usize;
                Ok(Var::constant(sinusoidal_embedding(n, *dim)))
            }
            LayerSpec::ResidualAdd => {
                if x.shape() != inputs[1].shape() {
                    return Err(shape_err(&self.label(), format!("{:?}", x.shape()), inputs[1].shape()));
                }
                Ok(ops::add(x, inputs[1]))
            }
            LayerSpec::ConcatChannels => {
                let y = inputs[1];
                if x.shape().len() != 3
                    || y.shape().len() != 3
                    || x.shape()[0] != y.shape()[0]
                    || x.shape()[2] != y.shape()[2]
                {
                    return Err(shape_err(
                        &self.label(),
                        format!("two [B, *, L] tensors matching {:?}", x.shape()),
                        y.shape(),
                    ));
                }
                Ok(ops::concat(&[x.clone(), y.clone()], 1))
            }
        }
    }

    fn name_str(&self) -> &str {
        match self {
            LayerSpec::Dense { name, .. }
            | LayerSpec::Conv1d { name, .. }
            | LayerSpec::UpsampleConv1d { name, .. }
            | LayerSpec::LstmCell { name, .. }
            | LayerSpec::LstmSequence { name, .. }
            | LayerSpec::GroupNorm { name, .. } => name,
            _ => "",
        }
    }
}

/// Deterministic single-layer forward on plain tensors.
pub fn layer_forward<F: Scalar>(
    spec: &LayerSpec,
    params: &ParameterSet<F>,
    inputs: &[&Tensor<F>],
) -> Result<Tensor<F>> {
    let bound = params.bind(false);
    let vars: Vec<Var<F>> = inputs.iter().map(|t| Var::constant((*t).clone())).collect();
    let refs: Vec<&Var<F>> = vars.iter().collect();
    let out = spec.forward_var(&bound, &refs)?;
    Ok(out.value().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_passthrough() {
        let mut ps = ParameterSet::<f64>::new();
        ps.insert(
            "fc.weight",
            Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            true,
        )
        .unwrap();
        ps.insert("fc.bias", Tensor::zeros(&[3]), true).unwrap();
        let spec = LayerSpec::Dense {
            name: "fc".into(),
            input: 3,
            output: 3,
        };
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = layer_forward(&spec, &ps, &[&x]).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let ps = ParameterSet::<f64>::new();
        let x = Tensor::from_vec(vec![0.0]);
        let y = layer_forward(&LayerSpec::Sigmoid, &ps, &[&x]).unwrap();
        assert_eq!(y.data(), &[0.5]);
    }

    #[test]
    fn conv_scaling_case() {
        let mut ps = ParameterSet::<f64>::new();
        ps.insert("c.weight", Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap(), true)
            .unwrap();
        ps.insert("c.bias", Tensor::zeros(&[1]), true).unwrap();
        let spec = LayerSpec::Conv1d {
            name: "c".into(),
            in_channels: 1,
            out_channels: 1,
            kernel: 1,
            stride: 1,
            padding: 0,
        };
        let x = Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = layer_forward(&spec, &ps, &[&x]).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_names_layer_and_dims() {
        let mut ps = ParameterSet::<f64>::new();
        let mut rng = RngStream::new(0);
        init_conv1d(&mut ps, "enc", 4, 2, 3, &mut rng).unwrap();
        let spec = LayerSpec::Conv1d {
            name: "enc".into(),
            in_channels: 2,
            out_channels: 4,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let bad = Tensor::zeros(&[1, 3, 8]);
        let err = layer_forward(&spec, &ps, &[&bad]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("enc"), "error should name the layer: {msg}");
        assert!(msg.contains("[1, 3, 8]"), "error should show offending dims: {msg}");
    }

    #[test]
    fn lstm_sequence_shapes_and_determinism() {
        let mut ps = ParameterSet::<f64>::new();
        let mut rng = RngStream::new(3);
        init_lstm(&mut ps, "l", 2, 4, &mut rng).unwrap();
        let spec = LayerSpec::LstmSequence {
            name: "l".into(),
            input: 2,
            hidden: 4,
        };
        let x = Tensor::new(vec![2, 5, 2], (0..20).map(|i| i as f64 * 0.1).collect()).unwrap();
        let y1 = layer_forward(&spec, &ps, &[&x]).unwrap();
        let y2 = layer_forward(&spec, &ps, &[&x]).unwrap();
        assert_eq!(y1.shape(), &[2, 5, 4]);
        assert_eq!(y1, y2);
    }

    #[test]
    fn sinusoidal_embedding_is_unit_amplitude() {
        let e = sinusoidal_embedding::<f64>(7, 8);
        assert_eq!(e.len(), 8);
        for i in 0..4 {
            let s = e.data()[i];
            let c = e.data()[4 + i];
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
    }
}
