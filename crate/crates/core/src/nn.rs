//! Parameter containers and the small layers every encoder is built from.

use crate::error::Result;
use crate::tensor::{Rng, Tensor};

/// Standard deviation of the truncated-normal weight init.
pub const INIT_STD: f64 = 0.02;
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Forward-pass regime: evaluation disables every stochastic layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub training: bool,
    pub drop_path_p: f64,
    pub attn_dropout_p: f64,
}

impl Mode {
    pub const EVAL: Mode = Mode {
        training: false,
        drop_path_p: 0.0,
        attn_dropout_p: 0.0,
    };

    pub fn train(drop_path_p: f64, attn_dropout_p: f64) -> Mode {
        Mode {
            training: true,
            drop_path_p,
            attn_dropout_p,
        }
    }
}

/// Named traversal over the trainable tensors of a module.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    /// `(name, tensor)` pairs in a fixed traversal order.
    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn num_parameters(&self) -> usize {
        let mut total = 0;
        self.visit("", &mut |_, t| total += t.len());
        total
    }

    fn zero_grad(&self) {
        self.visit("", &mut |_, t| t.zero_grad());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Parameters for Tensor {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(prefix, self);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(prefix, self);
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Implements [`Parameters`] by visiting the listed fields in order.
macro_rules! impl_parameters {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::nn::Parameters for $ty {
            fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &$crate::tensor::Tensor)) {
                $( $crate::nn::Parameters::visit(&self.$field, &$crate::nn::join(prefix, stringify!($field)), f); )*
            }
            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut $crate::tensor::Tensor)) {
                $( $crate::nn::Parameters::visit_mut(&mut self.$field, &$crate::nn::join(prefix, stringify!($field)), f); )*
            }
        }
    };
}
pub(crate) use impl_parameters;

/// Truncated-normal initialized trainable tensor.
pub fn trunc_normal(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.trunc_normal(INIT_STD)).collect();
    Tensor::parameter(data, shape).expect("shape and data agree")
}

pub fn zeros_param(shape: &[usize]) -> Tensor {
    Tensor::parameter(vec![0.0; shape.iter().product()], shape).expect("shape and data agree")
}

/// `y = x·W + b`, with `W` stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl_parameters!(Linear { weight, bias });

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: trunc_normal(&[input, output], rng),
            bias: zeros_param(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    /// Elements in a `input → output` layer with bias.
    pub fn param_count(input: usize, output: usize) -> usize {
        input * output + output
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl_parameters!(LayerNorm { gamma, beta });

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::parameter(vec![1.0; dim], &[dim]).expect("shape and data agree"),
            beta: zeros_param(&[dim]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gamma, &self.beta, LAYER_NORM_EPS)
    }
}

/// Two-layer feed-forward block with a GELU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl_parameters!(Mlp { fc1, fc2 });

impl Mlp {
    pub fn new(dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Mlp {
            fc1: Linear::new(dim, hidden, rng),
            fc2: Linear::new(hidden, dim, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu())
    }
}

/// Hidden width of an MLP for a given ratio.
pub fn hidden_dim(dim: usize, ratio: f64) -> usize {
    ((dim as f64) * ratio).round().max(1.0) as usize
}

/// Sets every parameter to zero (diagnostic helper for identity tests).
pub fn zero_out(module: &mut dyn Parameters) {
    module.visit_mut("", &mut |_, t| {
        *t = t.with_data(vec![0.0; t.len()]).expect("same shape");
    });
}
