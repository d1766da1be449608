//! Scaled dot-product attention, multi-head self-attention and learned-latent
//! cross-attention.
//!
//! All entry points accept either a single sequence `[L, D]` or a batch of
//! independent sequences `[B, L, D]`. Heads are split from the channel axis,
//! attended separately, and concatenated back before the output projection.

use crate::error::{Error, Result};
use crate::nn::{impl_parameters, Linear};
use crate::tensor::{Rng, Tensor};

/// Projection weights of one attention layer.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub w_q: Linear,
    pub w_k: Linear,
    pub w_v: Linear,
    pub w_o: Linear,
    pub heads: usize,
    pub model_dim: usize,
}

impl_parameters!(AttentionParams { w_q, w_k, w_v, w_o });

/// Learned query array of a cross-attention bottleneck, `N × D`.
#[derive(Clone, Debug)]
pub struct LatentArray {
    pub values: Tensor,
}

impl_parameters!(LatentArray { values });

impl LatentArray {
    pub fn new(count: usize, dim: usize, rng: &mut Rng) -> Self {
        LatentArray {
            values: crate::nn::trunc_normal(&[count, dim], rng),
        }
    }

    pub fn count(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }
}

fn check_heads(model_dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || !model_dim.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "model dim {model_dim} is not divisible by {heads} heads"
        )));
    }
    Ok(())
}

impl AttentionParams {
    /// Self-attention: all projections `model_dim → model_dim`.
    pub fn new_self(model_dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Self::new_cross(model_dim, model_dim, heads, rng)
    }

    /// Cross-attention: queries from `model_dim`-wide latents, keys and values
    /// from `input_dim`-wide tokens, output back in `model_dim`.
    pub fn new_cross(model_dim: usize, input_dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        check_heads(model_dim, heads)?;
        Ok(AttentionParams {
            w_q: Linear::new(model_dim, model_dim, rng),
            w_k: Linear::new(input_dim, model_dim, rng),
            w_v: Linear::new(input_dim, model_dim, rng),
            w_o: Linear::new(model_dim, model_dim, rng),
            heads,
            model_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_k.input_dim()
    }

    pub fn param_count(model_dim: usize, input_dim: usize) -> usize {
        2 * Linear::param_count(model_dim, model_dim) + 2 * Linear::param_count(input_dim, model_dim)
    }

    /// Attends `queries` over `context`. When `record` is given, the
    /// post-softmax weights `[B·heads, Lq, Lk]` are pushed onto it before
    /// dropout; these are the very tensors on the gradient path.
    pub fn forward(
        &self,
        queries: &Tensor,
        context: &Tensor,
        dropout_p: f64,
        training: bool,
        rng: &mut Rng,
        record: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor> {
        let (q_in, batched) = as_batch(queries)?;
        let (kv_in, _) = as_batch(context)?;
        if q_in.shape()[0] != kv_in.shape()[0] {
            return Err(Error::shape("attention", queries.shape(), context.shape()));
        }
        if q_in.shape()[2] != self.w_q.input_dim() {
            return Err(Error::shape("attention", q_in.shape(), self.w_q.weight.shape()));
        }
        if kv_in.shape()[2] != self.w_k.input_dim() {
            return Err(Error::shape("attention", kv_in.shape(), self.w_k.weight.shape()));
        }
        let (batch, lq, lk) = (q_in.shape()[0], q_in.shape()[1], kv_in.shape()[1]);
        let heads = self.heads;
        let dh = self.model_dim / heads;

        let split = |x: Tensor, len: usize| -> Result<Tensor> {
            x.reshape(&[batch, len, heads, dh])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[batch * heads, len, dh])
        };
        let q = split(self.w_q.forward(&q_in)?, lq)?;
        let k = split(self.w_k.forward(&kv_in)?, lk)?;
        let v = split(self.w_v.forward(&kv_in)?, lk)?;

        let weights = attention_weights(&q, &k)?;
        if let Some(rec) = record {
            rec.push(weights.clone());
        }
        let weights = weights.dropout(dropout_p, training, rng)?;
        let mixed = weights
            .bmm(&v)?
            .reshape(&[batch, heads, lq, dh])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[batch, lq, self.model_dim])?;
        let out = self.w_o.forward(&mixed)?;
        if batched {
            Ok(out)
        } else {
            out.reshape(&[lq, self.model_dim])
        }
    }
}

fn as_batch(x: &Tensor) -> Result<(Tensor, bool)> {
    match x.shape() {
        [l, d] => Ok((x.reshape(&[1, *l, *d])?, false)),
        [_, _, _] => Ok((x.clone(), true)),
        other => Err(Error::shape("attention", other, &[0, 0, 0])),
    }
}

/// `softmax(Q·Kᵀ/√d_k)` over the key axis, for `[B, a, d_k]` and `[B, b, d_k]`.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let dk = *q.shape().last().unwrap_or(&0);
    if q.rank() != 3 || k.rank() != 3 || k.shape()[2] != dk || q.shape()[0] != k.shape()[0] {
        return Err(Error::shape("attention_weights", q.shape(), k.shape()));
    }
    q.bmm(&k.transpose(1, 2)?)?.scale(1.0 / (dk as f64).sqrt()).softmax(2)
}

/// `softmax(Q·Kᵀ/√d_k)·V` for `q: [a, d_k]`, `k: [b, d_k]`, `v: [b, d_v]`
/// (or batched with a leading axis).
pub fn scaled_dot_product(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (qb, batched) = as_batch(q)?;
    let (kb, _) = as_batch(k)?;
    let (vb, _) = as_batch(v)?;
    if kb.shape()[1] != vb.shape()[1] || kb.shape()[0] != vb.shape()[0] {
        return Err(Error::shape("scaled_dot_product", k.shape(), v.shape()));
    }
    let out = attention_weights(&qb, &kb)?.bmm(&vb)?;
    if batched {
        Ok(out)
    } else {
        out.reshape(&[q.shape()[0], v.shape()[1]])
    }
}

/// Multi-head self-attention over the rows of `x`.
pub fn multi_head_self_attention(
    x: &Tensor,
    params: &AttentionParams,
    dropout_p: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<Tensor> {
    let dim = *x.shape().last().unwrap_or(&0);
    if dim != params.model_dim {
        return Err(Error::shape(
            "multi_head_self_attention",
            x.shape(),
            &[params.model_dim],
        ));
    }
    params.forward(x, x, dropout_p, training, rng, None)
}

/// Latent cross-attention: `N` learned queries attend over `M` input rows.
/// The output has `N` rows whatever `M` is; `N ≥ M` is rejected.
pub fn cross_attention(
    latents: &Tensor,
    x: &Tensor,
    params: &AttentionParams,
    dropout_p: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<Tensor> {
    let n = latents.shape()[latents.rank().saturating_sub(2)];
    let m = x.shape()[x.rank().saturating_sub(2)];
    check_bottleneck(n, m)?;
    params.forward(latents, x, dropout_p, training, rng, None)
}

pub(crate) fn check_bottleneck(latents: usize, inputs: usize) -> Result<()> {
    if latents >= inputs {
        return Err(Error::Config(format!(
            "latent bottleneck not smaller than input ({latents} latents for {inputs} input rows)"
        )));
    }
    Ok(())
}

/// FLOPs of the `a×d_k · d_k×b` score product, per head-batch (1 MAC = 2 FLOPs).
pub fn score_flops(queries: usize, keys: usize, dk: usize) -> u64 {
    2 * (queries * keys * dk) as u64
}
