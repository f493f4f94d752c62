use rayon::prelude::*;

use super::layer::{Binder, Layer};
use crate::error::{Error, Result};
use crate::tensor::{BackwardCtx, Tensor, Var};

/// Per-channel 3x3 cross-correlation with zero "same" padding.
///
/// `x` is (batch, h, w, c), `kernel` is (3, 3, c), `bias` is (c).
pub fn depthwise_conv2d<'t>(x: Var<'t>, kernel: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let (xv, kv, bv) = (x.value(), kernel.value(), bias.value());
    let xd = xv.dims();
    if xd.len() != 4 || kv.dims() != [3, 3, xd[3]] || bv.dims() != [xd[3]] {
        return Err(Error::shape(format!(
            "depthwise conv2d: input {}, kernel {}, bias {}",
            xv.shape(),
            kv.shape(),
            bv.shape()
        )));
    }
    let (h, w, c) = (xd[1], xd[2], xd[3]);
    let plane = h * w * c;
    let (kdata, bdata) = (kv.data(), bv.data());
    let mut out = vec![0.0; xv.numel()];
    out.par_chunks_mut(plane).zip(xv.data().par_chunks(plane)).for_each(|(y, xs)| {
        for row in y.chunks_mut(c) {
            row.copy_from_slice(bdata);
        }
        for_each_tap(
            h,
            w,
            |dst, src, tap| {
                let (yo, xi, k) = (&mut y[dst..dst + c], &xs[src..src + c], &kdata[tap * c..(tap + 1) * c]);
                for ((o, xv), kv) in yo.iter_mut().zip(xi).zip(k) {
                    *o += xv * kv;
                }
            },
            c,
        );
    });
    let out = Tensor::from_shape(xv.shape().clone(), out)?;
    Ok(x.tape().record(&[x, kernel, bias], out, move |ctx: &BackwardCtx<'_>| {
        let (xv, kv) = (&ctx.inputs[0], &ctx.inputs[1]);
        let dy = ctx.grad.data();
        let kdata = kv.data();
        let (need_x, need_k) = (ctx.needs_grad[0], ctx.needs_grad[1]);
        let mut gx_data = vec![0.0; if need_x { xv.numel() } else { 0 }];
        let dx_slices: Vec<&mut [f64]> = if need_x {
            gx_data.chunks_mut(plane).collect()
        } else {
            (0..xv.dims()[0]).map(|_| Default::default()).collect()
        };
        let per_sample: Vec<Vec<f64>> = dx_slices
            .into_par_iter()
            .zip(dy.par_chunks(plane))
            .zip(xv.data().par_chunks(plane))
            .map(|((dx, dys), xs)| {
                let mut dk = vec![0.0; if need_k { 9 * c } else { 0 }];
                for_each_tap(
                    h,
                    w,
                    |dst, src, tap| {
                        let g = &dys[dst..dst + c];
                        if need_x {
                            let k = &kdata[tap * c..(tap + 1) * c];
                            for ((o, g), k) in dx[src..src + c].iter_mut().zip(g).zip(k) {
                                *o += g * k;
                            }
                        }
                        if need_k {
                            for ((o, g), xv) in dk[tap * c..(tap + 1) * c].iter_mut().zip(g).zip(&xs[src..src + c]) {
                                *o += g * xv;
                            }
                        }
                    },
                    c,
                );
                dk
            })
            .collect();
        let gx = need_x.then(|| Tensor::from_shape(xv.shape().clone(), gx_data).expect("input shape"));
        let gk = ctx.needs_grad[1].then(|| {
            let mut acc = vec![0.0; 9 * c];
            for dk in &per_sample {
                for (a, v) in acc.iter_mut().zip(dk) {
                    *a += v;
                }
            }
            Tensor::from_shape(kv.shape().clone(), acc).expect("kernel shape")
        });
        let gb = ctx.needs_grad[2].then(|| {
            let mut acc = vec![0.0; c];
            for row in dy.chunks(c) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            Tensor::from_vec(vec![c], acc).expect("bias shape")
        });
        vec![gx, gk, gb]
    }))
}

/// Calls `f(out_offset, in_offset, tap)` for every in-bounds (output
/// pixel, kernel tap) pair; offsets index the start of a channel run.
fn for_each_tap(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize), c: usize) {
    for oh in 0..h {
        for ow in 0..w {
            let dst = (oh * w + ow) * c;
            for kh in 0..3 {
                let Some(ih) = (oh + kh).checked_sub(1).filter(|&v| v < h) else { continue };
                for kw in 0..3 {
                    let Some(iw) = (ow + kw).checked_sub(1).filter(|&v| v < w) else { continue };
                    f(dst, (ih * w + iw) * c, kh * 3 + kw);
                }
            }
        }
    }
}

/// One 3x3 filter per channel; channels never mix.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthwiseConv2dLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl DepthwiseConv2dLayer {
    pub fn zeros(channels: usize) -> Self {
        DepthwiseConv2dLayer { kernel: Tensor::zeros(vec![3, 3, channels]), bias: Tensor::zeros(vec![channels]) }
    }

    pub fn forward<'t>(&self, binder: &mut Binder<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let [k, b] = binder.bind_layer(self);
        depthwise_conv2d(x, k, b)
    }
}

impl Layer for DepthwiseConv2dLayer {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("kernel", &self.kernel), ("bias", &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }
}
