//! Differentiable primitives on [`Var`].
#![allow(clippy::should_implement_trait)]

use super::gemm::{gemm, Layout};
use super::shape::Shape;
use super::tape::{BackwardCtx, Var};
use super::value::Tensor;
use crate::error::{Error, Result};

/// Strides of `shape` as seen from a broadcast `out` shape: 0 on axes
/// where `shape` has extent 1 and `out` does not.
fn broadcast_strides(shape: &Shape, out: &Shape) -> Vec<usize> {
    shape
        .strides()
        .into_iter()
        .zip(shape.dims().iter().zip(out.dims()))
        .map(|(s, (&d, &o))| if d == o { s } else { 0 })
        .collect()
}

/// Visits every flat index of `out` together with the matching flat
/// indices into two broadcast operands.
fn for_each_broadcast(out: &Shape, sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out.rank();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let dims = out.dims();
    let inner = dims[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let mut index = vec![0usize; rank - 1];
    let (mut base_a, mut base_b) = (0usize, 0usize);
    let mut flat = 0usize;
    loop {
        for j in 0..inner {
            f(flat + j, base_a + j * ia, base_b + j * ib);
        }
        flat += inner;
        // odometer over the outer axes
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            index[axis] += 1;
            base_a += sa[axis];
            base_b += sb[axis];
            if index[axis] < dims[axis] {
                break;
            }
            base_a -= sa[axis] * dims[axis];
            base_b -= sb[axis] * dims[axis];
            index[axis] = 0;
        }
    }
}

/// Sums `grad` (shaped like the broadcast output) down to `target`.
pub(crate) fn reduce_to_shape(grad: &Tensor, target: &Shape) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let st = broadcast_strides(target, grad.shape());
    let zeros = vec![0; st.len()];
    let mut out = vec![0.0; target.numel()];
    let g = grad.data();
    for_each_broadcast(grad.shape(), &st, &zeros, |flat, t, _| out[t] += g[flat]);
    Tensor::from_shape(target.clone(), out).expect("reduced shape")
}

/// Expands `x` to `out` by repeating along extent-1 axes.
pub(crate) fn broadcast_to(x: &Tensor, out: &Shape) -> Tensor {
    if x.shape() == out {
        return x.clone();
    }
    let sx = broadcast_strides(x.shape(), out);
    let zeros = vec![0; sx.len()];
    let mut data = vec![0.0; out.numel()];
    let xs = x.data();
    for_each_broadcast(out, &sx, &zeros, |flat, i, _| data[flat] = xs[i]);
    Tensor::from_shape(out.clone(), data).expect("broadcast shape")
}

fn binary_values(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let out = a.shape().broadcast(b.shape())?;
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        let data = ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_shape(out, data);
    }
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![0.0; out.numel()];
    for_each_broadcast(&out, &sa, &sb, |o, i, j| data[o] = f(ad[i], bd[j]));
    Tensor::from_shape(out, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Relu,
    Sigmoid,
    Negate,
    Scale(f64),
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn binary(self, op: BinaryOp, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let out = match op {
            BinaryOp::Add => binary_values(&a, &b, |x, y| x + y)?,
            BinaryOp::Sub => binary_values(&a, &b, |x, y| x - y)?,
            BinaryOp::Mul => binary_values(&a, &b, |x, y| x * y)?,
        };
        Ok(self.tape().record(&[self, other], out, move |ctx: &BackwardCtx<'_>| {
            let (a, b) = (&ctx.inputs[0], &ctx.inputs[1]);
            let g = ctx.grad;
            let ga = ctx.needs_grad[0].then(|| match op {
                BinaryOp::Add | BinaryOp::Sub => reduce_to_shape(g, a.shape()),
                BinaryOp::Mul => {
                    let gb = binary_values(g, b, |x, y| x * y).expect("grad shape");
                    reduce_to_shape(&gb, a.shape())
                }
            });
            let gb = ctx.needs_grad[1].then(|| match op {
                BinaryOp::Add => reduce_to_shape(g, b.shape()),
                BinaryOp::Sub => reduce_to_shape(&g.map(|x| -x), b.shape()),
                BinaryOp::Mul => {
                    let ga = binary_values(g, a, |x, y| x * y).expect("grad shape");
                    reduce_to_shape(&ga, b.shape())
                }
            });
            vec![ga, gb]
        }))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn unary(self, op: UnaryOp) -> Var<'t> {
        let x = self.value();
        let out = match op {
            UnaryOp::Relu => x.map(|v| v.max(0.0)),
            UnaryOp::Sigmoid => x.map(sigmoid),
            UnaryOp::Negate => x.map(|v| -v),
            UnaryOp::Scale(c) => x.map(|v| c * v),
        };
        self.tape().record(&[self], out, move |ctx: &BackwardCtx<'_>| {
            let g = ctx.grad.data();
            let data: Vec<f64> = match op {
                // subgradient 0 at exactly 0
                UnaryOp::Relu => {
                    ctx.inputs[0].data().iter().zip(g).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect()
                }
                UnaryOp::Sigmoid => ctx.output.data().iter().zip(g).map(|(&s, &g)| g * s * (1.0 - s)).collect(),
                UnaryOp::Negate => g.iter().map(|&g| -g).collect(),
                UnaryOp::Scale(c) => g.iter().map(|&g| c * g).collect(),
            };
            vec![Some(Tensor::from_shape(ctx.grad.shape().clone(), data).expect("same shape"))]
        })
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(UnaryOp::Relu)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(UnaryOp::Sigmoid)
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(UnaryOp::Negate)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::Scale(c))
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let x = self.value();
        let out = (*x).clone().reshaped(dims)?;
        if out.shape() == x.shape() {
            return Ok(self);
        }
        Ok(self.tape().record(&[self], out, |ctx: &BackwardCtx<'_>| {
            let g = ctx.grad.clone().reshaped(ctx.inputs[0].dims()).expect("same count");
            vec![Some(g)]
        }))
    }

    /// Concatenates `parts` along `axis`.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        if parts.len() == 1 {
            return Ok(*first);
        }
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape();
        if axis >= base.rank() {
            return Err(Error::shape(format!("concat axis {axis} out of range for {base}")));
        }
        for v in &values[1..] {
            let ok =
                v.shape().rank() == base.rank() && (0..base.rank()).all(|i| i == axis || v.dims()[i] == base.dims()[i]);
            if !ok {
                return Err(Error::shape(format!("concat along axis {axis}: {} disagrees with {base}", v.shape())));
            }
        }
        let extents: Vec<usize> = values.iter().map(|v| v.dims()[axis]).collect();
        let total: usize = extents.iter().sum();
        let out_shape = base.with_dim(axis, total);
        let (outer, _, inner) = base.split_at_axis(axis);
        let mut data = vec![0.0; out_shape.numel()];
        let row = total * inner;
        let mut offset = 0;
        for (v, &e) in values.iter().zip(&extents) {
            let block = e * inner;
            for o in 0..outer {
                data[o * row + offset..o * row + offset + block].copy_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
            offset += block;
        }
        let out = Tensor::from_shape(out_shape, data)?;
        let tape = first.tape();
        Ok(tape.record(parts, out, move |ctx: &BackwardCtx<'_>| {
            let g = ctx.grad.data();
            let mut offset = 0;
            let mut grads = Vec::with_capacity(extents.len());
            for (i, &e) in extents.iter().enumerate() {
                let block = e * inner;
                if ctx.needs_grad[i] {
                    let mut part = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        part.extend_from_slice(&g[o * row + offset..o * row + offset + block]);
                    }
                    let shape = ctx.inputs[i].shape().clone();
                    grads.push(Some(Tensor::from_shape(shape, part).expect("split shape")));
                } else {
                    grads.push(None);
                }
                offset += block;
            }
            grads
        }))
    }

    /// Sub-range `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape().clone();
        if axis >= shape.rank() || len == 0 || start + len > shape.dims()[axis] {
            return Err(Error::shape(format!("narrow({axis}, {start}, {len}) out of range for {shape}")));
        }
        let (outer, extent, inner) = shape.split_at_axis(axis);
        if start == 0 && len == extent {
            return Ok(self);
        }
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let out = Tensor::from_shape(shape.with_dim(axis, len), data)?;
        Ok(self.tape().record(&[self], out, move |ctx: &BackwardCtx<'_>| {
            let mut full = Tensor::zeros_like(&ctx.inputs[0]);
            let g = ctx.grad.data();
            let dst = full.data_mut();
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                dst[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(full)]
        }))
    }

    /// Splits along `axis` into consecutive pieces of the given extents.
    pub fn split(self, axis: usize, sizes: &[usize]) -> Result<Vec<Var<'t>>> {
        let extent = self.shape().dims().get(axis).copied().unwrap_or(0);
        if sizes.iter().sum::<usize>() != extent {
            return Err(Error::shape(format!("split sizes {sizes:?} do not add up to extent {extent} on axis {axis}")));
        }
        let mut start = 0;
        sizes
            .iter()
            .map(|&len| {
                let part = self.narrow(axis, start, len);
                start += len;
                part
            })
            .collect()
    }

    /// Arithmetic mean over `axes`; reduced axes are removed from the shape.
    pub fn mean_axes(self, axes: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape().clone();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.is_empty() {
            return Ok(self);
        }
        if let Some(&bad) = axes.iter().find(|&&a| a >= shape.rank()) {
            return Err(Error::shape(format!("mean axis {bad} out of range for {shape}")));
        }
        let kept: Vec<usize> =
            shape.dims().iter().enumerate().map(|(i, &d)| if axes.contains(&i) { 1 } else { d }).collect();
        let kept = Shape::new(kept)?;
        let count = (shape.numel() / kept.numel()) as f64;
        let summed = reduce_to_shape(&x, &kept);
        let out_dims: Vec<usize> =
            shape.dims().iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, &d)| d).collect();
        let out = summed.map(|v| v / count).reshaped(out_dims)?;
        Ok(self.tape().record(&[self], out, move |ctx: &BackwardCtx<'_>| {
            let g = ctx.grad.map(|v| v / count).reshaped(kept.dims()).expect("kept shape");
            vec![Some(broadcast_to(&g, ctx.inputs[0].shape()))]
        }))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(self) -> Var<'t> {
        let x = self.value();
        let out = Tensor::scalar(x.sum());
        self.tape().record(&[self], out, |ctx: &BackwardCtx<'_>| {
            let g = ctx.grad.item();
            vec![Some(ctx.inputs[0].map(|_| g))]
        })
    }

    /// Matrix product of `(m, k)` by `(k, n)`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (ad, bd) = (a.dims(), b.dims());
        if ad.len() != 2 || bd.len() != 2 || ad[1] != bd[0] {
            return Err(Error::shape(format!("matmul of {} by {}", a.shape(), b.shape())));
        }
        let (m, k, n) = (ad[0], ad[1], bd[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), Layout::Normal, b.data(), Layout::Normal, &mut out, false);
        let out = Tensor::from_vec(vec![m, n], out)?;
        Ok(self.tape().record(&[self, other], out, move |ctx: &BackwardCtx<'_>| {
            let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
            let ga = ctx.needs_grad[0].then(|| {
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g.data(), Layout::Normal, b.data(), Layout::Transposed, &mut da, false);
                Tensor::from_vec(vec![m, k], da).expect("grad shape")
            });
            let gb = ctx.needs_grad[1].then(|| {
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, a.data(), Layout::Transposed, g.data(), Layout::Normal, &mut db, false);
                Tensor::from_vec(vec![k, n], db).expect("grad shape")
            });
            vec![ga, gb]
        }))
    }
}
