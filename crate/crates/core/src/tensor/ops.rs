//! Differentiable ops. Each forward lives next to its vector-Jacobian product.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::kernels::{axis_split, gemm, inverse_permutation, permute_data};
use super::{numel, Rng, Tensor};
use crate::error::{Error, Result};

pub(crate) enum Op {
    MatMul {
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatMul {
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    /// Second input's shape is a suffix of the first's.
    Add,
    Mul,
    Scale(f64),
    Reshape,
    Permute(Vec<usize>),
    Concat {
        axis: usize,
        sizes: Vec<usize>,
    },
    Narrow {
        axis: usize,
        start: usize,
    },
    Sum,
    Mean,
    SumAxis(usize),
    MeanAxis(usize),
    IndexSelect(Vec<usize>),
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm {
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu,
    /// Elementwise multiply by a saved 0 or 1/(1-p) mask.
    Mask(Vec<f64>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::MatMul { .. } => "matmul",
            Op::BatchMatMul { .. } => "bmm",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Reshape => "reshape",
            Op::Permute(_) => "permute",
            Op::Concat { .. } => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis(_) => "sum_axis",
            Op::MeanAxis(_) => "mean_axis",
            Op::IndexSelect(_) => "index_select",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu => "gelu",
            Op::Mask(_) => "mask",
        }
    }

    /// Gradients for each input given the output gradient `g`. `None` for
    /// inputs that do not require one.
    pub(crate) fn vjp(&self, inputs: &[Tensor], out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let wants = |i: usize| inputs[i].requires_grad();
        match self {
            Op::MatMul { m, k, n } => {
                let (a, b) = (&inputs[0], &inputs[1]);
                let da = wants(0).then(|| {
                    let mut da = vec![0.0; m * k];
                    gemm(*m, *n, *k, g, false, b.data(), true, &mut da, false);
                    da
                });
                let db = wants(1).then(|| {
                    let mut db = vec![0.0; k * n];
                    gemm(*k, *m, *n, a.data(), true, g, false, &mut db, false);
                    db
                });
                vec![da, db]
            }
            Op::BatchMatMul { batch, m, k, n } => {
                let (a, b) = (&inputs[0], &inputs[1]);
                let (sa, sb, sc) = (m * k, k * n, m * n);
                let da = wants(0).then(|| {
                    let mut da = vec![0.0; batch * sa];
                    for i in 0..*batch {
                        gemm(
                            *m,
                            *n,
                            *k,
                            &g[i * sc..],
                            false,
                            &b.data()[i * sb..],
                            true,
                            &mut da[i * sa..],
                            false,
                        );
                    }
                    da
                });
                let db = wants(1).then(|| {
                    let mut db = vec![0.0; batch * sb];
                    for i in 0..*batch {
                        gemm(
                            *k,
                            *m,
                            *n,
                            &a.data()[i * sa..],
                            true,
                            &g[i * sc..],
                            false,
                            &mut db[i * sb..],
                            false,
                        );
                    }
                    db
                });
                vec![da, db]
            }
            Op::Add => {
                let small = inputs[1].len();
                let da = wants(0).then(|| g.to_vec());
                let db = wants(1).then(|| reduce_to_suffix(g, small));
                vec![da, db]
            }
            Op::Mul => {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                let small = b.len();
                let da = wants(0).then(|| g.iter().enumerate().map(|(i, gi)| gi * b[i % small]).collect());
                let db = wants(1).then(|| {
                    let prod: Vec<f64> = g.iter().zip(a).map(|(gi, ai)| gi * ai).collect();
                    reduce_to_suffix(&prod, small)
                });
                vec![da, db]
            }
            Op::Scale(c) => vec![Some(g.iter().map(|v| v * c).collect())],
            Op::Reshape => vec![Some(g.to_vec())],
            Op::Permute(axes) => {
                let (back, _) = permute_data(g, out.shape(), &inverse_permutation(axes));
                vec![Some(back)]
            }
            Op::Concat { axis, sizes } => {
                let (outer, total, inner) = axis_split(out.shape(), *axis);
                let mut offset = 0;
                sizes
                    .iter()
                    .enumerate()
                    .map(|(idx, &len)| {
                        let start = offset;
                        offset += len;
                        wants(idx).then(|| {
                            let mut part = Vec::with_capacity(outer * len * inner);
                            for o in 0..outer {
                                let base = (o * total + start) * inner;
                                part.extend_from_slice(&g[base..base + len * inner]);
                            }
                            part
                        })
                    })
                    .collect()
            }
            Op::Narrow { axis, start } => {
                let (outer, total, inner) = axis_split(inputs[0].shape(), *axis);
                let len = out.shape()[*axis];
                let mut full = vec![0.0; inputs[0].len()];
                for o in 0..outer {
                    let dst = (o * total + start) * inner;
                    let src = o * len * inner;
                    full[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                vec![Some(full)]
            }
            Op::Sum => vec![Some(vec![g[0]; inputs[0].len()])],
            Op::Mean => {
                let n = inputs[0].len();
                vec![Some(vec![g[0] / n as f64; n])]
            }
            Op::SumAxis(axis) | Op::MeanAxis(axis) => {
                let (outer, len, inner) = axis_split(inputs[0].shape(), *axis);
                let scale = if matches!(self, Op::MeanAxis(_)) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let mut full = vec![0.0; inputs[0].len()];
                for o in 0..outer {
                    for i in 0..len {
                        for j in 0..inner {
                            full[(o * len + i) * inner + j] = g[o * inner + j] * scale;
                        }
                    }
                }
                vec![Some(full)]
            }
            Op::IndexSelect(indices) => {
                let row = inputs[0].len() / inputs[0].shape()[0].max(1);
                let mut full = vec![0.0; inputs[0].len()];
                for (r, &src) in indices.iter().enumerate() {
                    for j in 0..row {
                        full[src * row + j] += g[r * row + j];
                    }
                }
                vec![Some(full)]
            }
            Op::Softmax(axis) => {
                let y = out.data();
                let (outer, len, inner) = axis_split(out.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let dot: f64 = (0..len).map(|i| g[at(i)] * y[at(i)]).sum();
                        for i in 0..len {
                            dx[at(i)] = y[at(i)] * (g[at(i)] - dot);
                        }
                    }
                }
                vec![Some(dx)]
            }
            Op::LogSoftmax(axis) => {
                let y = out.data();
                let (outer, len, inner) = axis_split(out.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let gsum: f64 = (0..len).map(|i| g[at(i)]).sum();
                        for i in 0..len {
                            dx[at(i)] = g[at(i)] - y[at(i)].exp() * gsum;
                        }
                    }
                }
                vec![Some(dx)]
            }
            Op::LayerNorm { normalized, inv_std } => {
                let gamma = inputs[1].data();
                let width = gamma.len();
                let rows = normalized.len() / width;
                let dx = wants(0).then(|| {
                    let mut dx = vec![0.0; normalized.len()];
                    for r in 0..rows {
                        let xs = &normalized[r * width..(r + 1) * width];
                        let gs = &g[r * width..(r + 1) * width];
                        let mut sum_gy = 0.0;
                        let mut sum_gy_x = 0.0;
                        for c in 0..width {
                            let gy = gs[c] * gamma[c];
                            sum_gy += gy;
                            sum_gy_x += gy * xs[c];
                        }
                        let w = width as f64;
                        for c in 0..width {
                            let gy = gs[c] * gamma[c];
                            dx[r * width + c] = inv_std[r] / w * (w * gy - sum_gy - xs[c] * sum_gy_x);
                        }
                    }
                    dx
                });
                let dgamma = wants(1).then(|| {
                    let mut d = vec![0.0; width];
                    for (i, (gi, xi)) in g.iter().zip(normalized).enumerate() {
                        d[i % width] += gi * xi;
                    }
                    d
                });
                let dbeta = wants(2).then(|| reduce_to_suffix(g, width));
                vec![dx, dgamma, dbeta]
            }
            Op::Gelu => {
                let x = inputs[0].data();
                let dx = x
                    .iter()
                    .zip(g)
                    .map(|(&v, gi)| {
                        let cdf = 0.5 * (1.0 + libm::erf(v * FRAC_1_SQRT_2));
                        let pdf = (-0.5 * v * v).exp() / (2.0 * PI).sqrt();
                        gi * (cdf + v * pdf)
                    })
                    .collect();
                vec![Some(dx)]
            }
            Op::Mask(mask) => vec![Some(g.iter().zip(mask).map(|(a, b)| a * b).collect())],
        }
    }
}

fn reduce_to_suffix(g: &[f64], small: usize) -> Vec<f64> {
    let mut out = vec![0.0; small];
    for chunk in g.chunks_exact(small) {
        out.iter_mut().zip(chunk).for_each(|(o, v)| *o += v);
    }
    out
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::Param(format!(
            "{op}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

fn check_probability(op: &str, p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Param(format!("{op}: probability {p} must lie in [0, 1)")));
    }
    Ok(())
}

impl Tensor {
    /// `[.., m, k] × [k, n] → [.., m, n]`; leading axes of `self` are folded into `m`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.is_empty() || b.len() != 2 || a[a.len() - 1] != b[0] {
            return Err(Error::shape("matmul", a, b));
        }
        let k = b[0];
        let n = b[1];
        let m = self.len() / k.max(1);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, self.data(), false, other.data(), false, &mut c, false);
        let mut shape = a[..a.len() - 1].to_vec();
        shape.push(n);
        Ok(Tensor::from_op(c, shape, Op::MatMul { m, k, n }, &[self, other]))
    }

    /// Batched matmul `[b, m, k] × [b, k, n] → [b, m, n]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 3 || b.len() != 3 || a[0] != b[0] || a[2] != b[1] {
            return Err(Error::shape("bmm", a, b));
        }
        let (batch, m, k, n) = (a[0], a[1], a[2], b[2]);
        let mut c = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &self.data()[i * m * k..],
                false,
                &other.data()[i * k * n..],
                false,
                &mut c[i * m * n..],
                false,
            );
        }
        Ok(Tensor::from_op(
            c,
            vec![batch, m, n],
            Op::BatchMatMul { batch, m, k, n },
            &[self, other],
        ))
    }

    fn broadcast_pair<'a>(&'a self, other: &'a Tensor, op: &'static str) -> Result<(&'a Tensor, &'a Tensor)> {
        let (a, b) = (self.shape(), other.shape());
        if a.ends_with(b) {
            Ok((self, other))
        } else if b.ends_with(a) {
            Ok((other, self))
        } else {
            Err(Error::shape(op, a, b))
        }
    }

    /// Elementwise sum. The smaller operand broadcasts when its shape is a
    /// suffix of the larger one (bias and position-table adds).
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (big, small) = self.broadcast_pair(other, "add")?;
        let s = small.data();
        let data = big
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + s[i % s.len().max(1)])
            .collect();
        Ok(Tensor::from_op(data, big.shape().to_vec(), Op::Add, &[big, small]))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.add(&other.scale(-1.0))
    }

    /// Elementwise product with the same broadcasting rule as [`Tensor::add`].
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (big, small) = self.broadcast_pair(other, "mul")?;
        let s = small.data();
        let data = big
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * s[i % s.len().max(1)])
            .collect();
        Ok(Tensor::from_op(data, big.shape().to_vec(), Op::Mul, &[big, small]))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Scale(c), &[self])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            self.data().to_vec(),
            shape.to_vec(),
            Op::Reshape,
            &[self],
        ))
    }

    /// Reorders axes; output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        let valid = axes.len() == rank && axes.iter().all(|&a| a < rank && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(Error::shape("permute", self.shape(), axes));
        }
        let (data, shape) = permute_data(self.data(), self.shape(), axes);
        Ok(Tensor::from_op(data, shape, Op::Permute(axes.to_vec()), &[self]))
    }

    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor> {
        check_axis("transpose", self.shape(), a.max(b))?;
        let mut axes: Vec<usize> = (0..self.rank()).collect();
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = tensors
            .first()
            .ok_or_else(|| Error::Param("concat of zero tensors".into()))?;
        check_axis("concat", first.shape(), axis)?;
        for t in tensors {
            let same = t.rank() == first.rank()
                && t.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !same {
                return Err(Error::shape("concat", first.shape(), t.shape()));
            }
        }
        let sizes: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let (outer, _, inner) = axis_split(first.shape(), axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (t, &len) in tensors.iter().zip(&sizes) {
                let base = o * len * inner;
                data.extend_from_slice(&t.data()[base..base + len * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let refs: Vec<&Tensor> = tensors.iter().collect();
        Ok(Tensor::from_op(data, shape, Op::Concat { axis, sizes }, &refs))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(tensors: &[Tensor]) -> Result<Tensor> {
        let lifted = tensors
            .iter()
            .map(|t| {
                let mut shape = vec![1];
                shape.extend_from_slice(t.shape());
                t.reshape(&shape)
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat(&lifted, 0)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis("narrow", self.shape(), axis)?;
        if start + len > self.shape()[axis] {
            return Err(Error::shape("narrow", self.shape(), &[axis, start, len]));
        }
        let (outer, total, inner) = axis_split(self.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * total + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(data, shape, Op::Narrow { axis, start }, &[self]))
    }

    /// Splits along `axis` into consecutive pieces of the given sizes.
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
        check_axis("split", self.shape(), axis)?;
        if sizes.iter().sum::<usize>() != self.shape()[axis] {
            return Err(Error::shape("split", self.shape(), sizes));
        }
        let mut start = 0;
        sizes
            .iter()
            .map(|&len| {
                let piece = self.narrow(axis, start, len);
                start += len;
                piece
            })
            .collect()
    }

    pub fn sum(&self) -> Tensor {
        Tensor::from_op(vec![self.data().iter().sum()], Vec::new(), Op::Sum, &[self])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len().max(1) as f64;
        Tensor::from_op(vec![self.data().iter().sum::<f64>() / n], Vec::new(), Op::Mean, &[self])
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor> {
        check_axis("reduce", self.shape(), axis)?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..len {
                for j in 0..inner {
                    data[o * inner + j] += self.data()[(o * len + i) * inner + j];
                }
            }
        }
        if mean {
            data.iter_mut().for_each(|v| *v /= len as f64);
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let op = if mean { Op::MeanAxis(axis) } else { Op::SumAxis(axis) };
        Ok(Tensor::from_op(data, shape, op, &[self]))
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, false)
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, true)
    }

    /// Gathers rows of the leading axis (embedding-table lookup).
    pub fn index_select(&self, indices: &[usize]) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(Error::shape("index_select", self.shape(), &[]));
        }
        let rows = self.shape()[0];
        let width = self.len() / rows.max(1);
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(Error::Param(format!("index {i} out of range for {rows} rows")));
            }
            data.extend_from_slice(&self.data()[i * width..(i + 1) * width]);
        }
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        Ok(Tensor::from_op(data, shape, Op::IndexSelect(indices.to_vec()), &[self]))
    }

    fn softmax_impl(&self, axis: usize, log: bool) -> Result<Tensor> {
        check_axis("softmax", self.shape(), axis)?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let max = (0..len).map(|i| x[at(i)]).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = (0..len).map(|i| (x[at(i)] - max).exp()).sum();
                for i in 0..len {
                    y[at(i)] = if log {
                        x[at(i)] - max - sum.ln()
                    } else {
                        (x[at(i)] - max).exp() / sum
                    };
                }
            }
        }
        let op = if log { Op::LogSoftmax(axis) } else { Op::Softmax(axis) };
        Ok(Tensor::from_op(y, self.shape().to_vec(), op, &[self]))
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.softmax_impl(axis, false)
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        self.softmax_impl(axis, true)
    }

    /// Normalizes each last-axis slice, then applies `gamma` and `beta`.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let width = *self
            .shape()
            .last()
            .ok_or_else(|| Error::shape("layer_norm", self.shape(), &[]))?;
        if gamma.shape() != [width] || beta.shape() != [width] {
            return Err(Error::shape("layer_norm", self.shape(), gamma.shape()));
        }
        let rows = self.len() / width.max(1);
        let (g, b) = (gamma.data(), beta.data());
        let mut normalized = vec![0.0; self.len()];
        let mut inv_std = vec![0.0; rows];
        let mut y = vec![0.0; self.len()];
        for r in 0..rows {
            let xs = &self.data()[r * width..(r + 1) * width];
            let mean = xs.iter().sum::<f64>() / width as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            // eps = 0 on a constant slice: define the normalized output as 0
            let inv = if var + eps > 0.0 { 1.0 / (var + eps).sqrt() } else { 0.0 };
            inv_std[r] = inv;
            for c in 0..width {
                let xh = (xs[c] - mean) * inv;
                normalized[r * width + c] = xh;
                y[r * width + c] = xh * g[c] + b[c];
            }
        }
        Ok(Tensor::from_op(
            y,
            self.shape().to_vec(),
            Op::LayerNorm { normalized, inv_std },
            &[self, gamma, beta],
        ))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&self) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + libm::erf(v * FRAC_1_SQRT_2)))
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Gelu, &[self])
    }

    fn apply_mask(&self, mask: Vec<f64>) -> Tensor {
        let data = self.data().iter().zip(&mask).map(|(a, b)| a * b).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Mask(mask), &[self])
    }

    /// Inverted dropout: zero each element with probability `p`, scale the
    /// survivors by `1/(1-p)`. Identity when not training or `p == 0`.
    pub fn dropout(&self, p: f64, training: bool, rng: &mut Rng) -> Result<Tensor> {
        check_probability("dropout", p)?;
        if !training || p == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.len())
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        Ok(self.apply_mask(mask))
    }

    /// Stochastic depth over the leading (sample) axis: each sample's whole
    /// slice is zeroed with probability `p`, survivors scaled by `1/(1-p)`.
    pub fn drop_path(&self, p: f64, training: bool, rng: &mut Rng) -> Result<Tensor> {
        check_probability("drop_path", p)?;
        if !training || p == 0.0 {
            return Ok(self.clone());
        }
        let samples = self.shape().first().copied().unwrap_or(1).max(1);
        let width = self.len() / samples;
        let keep = 1.0 / (1.0 - p);
        let mut mask = Vec::with_capacity(self.len());
        for _ in 0..samples {
            let m = if rng.uniform() < p { 0.0 } else { keep };
            mask.extend(std::iter::repeat_n(m, width));
        }
        Ok(self.apply_mask(mask))
    }
}
