use rayon::prelude::*;

use super::batchnorm::{batch_norm, BatchNorm, BatchStats};
use super::dense::affine;
use super::layer::{Binder, Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{BackwardCtx, Tensor, Var};

/// Channel reduction factor of the shared 1x1 transform.
pub const CA_REDUCTION: usize = 64;

/// Coordinate attention: direction-aware pooling, a shared 1x1 transform
/// with batch norm and ReLU, then per-direction sigmoid gates whose outer
/// product rescales the input.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordAttnLayer {
    /// Shared transform, (c, m).
    pub fs_weights: Tensor,
    pub fs_bias: Tensor,
    pub bn: BatchNorm,
    /// Height gate, (m, c).
    pub fh_weights: Tensor,
    pub fh_bias: Tensor,
    /// Width gate, (m, c).
    pub fw_weights: Tensor,
    pub fw_bias: Tensor,
}

impl CoordAttnLayer {
    /// All weights zero, batch norm at identity.
    pub fn zeros(channels: usize, reduced: usize) -> Self {
        CoordAttnLayer {
            fs_weights: Tensor::zeros(vec![channels, reduced]),
            fs_bias: Tensor::zeros(vec![reduced]),
            bn: BatchNorm::identity(reduced),
            fh_weights: Tensor::zeros(vec![reduced, channels]),
            fh_bias: Tensor::zeros(vec![channels]),
            fw_weights: Tensor::zeros(vec![reduced, channels]),
            fw_bias: Tensor::zeros(vec![channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.fs_weights.dims()[0]
    }

    pub fn reduced(&self) -> usize {
        self.fs_weights.dims()[1]
    }

    /// Applies attention to `x` (batch, h, w, c). Train mode also returns
    /// the batch-norm statistics of this batch.
    pub fn forward<'t>(
        &self,
        binder: &mut Binder<'t>,
        x: Var<'t>,
        mode: Mode,
    ) -> Result<(Var<'t>, Option<BatchStats>)> {
        let weights = binder.bind_layer(self);
        coordinate_attention(x, weights, &self.bn.running_mean, &self.bn.running_var, mode)
    }
}

/// Coordinate attention with explicit weights, in the order
/// `[fs_w (c, m), fs_b, gamma, beta, fh_w (m, c), fh_b, fw_w (m, c), fw_b]`.
pub fn coordinate_attention<'t>(
    x: Var<'t>,
    weights: [Var<'t>; 8],
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
) -> Result<(Var<'t>, Option<BatchStats>)> {
    let [fs_w, fs_b, gamma, beta, fh_w, fh_b, fw_w, fw_b] = weights;
    let dims = x.dims();
    let wd = fs_w.dims();
    if dims.len() != 4 || wd.len() != 2 || dims[3] != wd[0] {
        return Err(Error::shape(format!("coordinate attention with shared weights {wd:?} got input {dims:?}")));
    }
    let (b, h, w, c) = (dims[0], dims[1], dims[2], dims[3]);
    let m = wd[1];

    let joint = directional_pool(x)?.reshape(vec![b * (h + w), c])?;
    let shared = affine(joint, fs_w, fs_b)?;
    let (normed, stats) = batch_norm(shared, gamma, beta, running_mean, running_var, mode)?;
    let l = normed.relu().reshape(vec![b, h + w, m])?;
    let parts = l.split(1, &[h, w])?;
    let (l_h, l_w) = (parts[0].reshape(vec![b * h, m])?, parts[1].reshape(vec![b * w, m])?);

    let g_h = affine(l_h, fh_w, fh_b)?.sigmoid().reshape(vec![b, h, c])?;
    let g_w = affine(l_w, fw_w, fw_b)?.sigmoid().reshape(vec![b, w, c])?;
    Ok((coord_gate(x, g_h, g_w)?, stats))
}

/// Mean over width stacked on mean over height: (b, h, w, c) -> (b, h + w, c).
pub fn directional_pool(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let dims = xv.dims();
    if dims.len() != 4 {
        return Err(Error::shape(format!("directional pooling needs (b, h, w, c), got {dims:?}")));
    }
    let (b, h, w, c) = (dims[0], dims[1], dims[2], dims[3]);
    let (plane, pooled) = (h * w * c, (h + w) * c);
    let mut out = vec![0.0; b * pooled];
    out.par_chunks_mut(pooled).zip(xv.data().par_chunks(plane)).for_each(|(o, xs)| {
        let (oh, ow) = o.split_at_mut(h * c);
        for i in 0..h {
            for j in 0..w {
                let px = &xs[(i * w + j) * c..(i * w + j + 1) * c];
                for ((a, bb), v) in oh[i * c..(i + 1) * c].iter_mut().zip(&mut ow[j * c..(j + 1) * c]).zip(px) {
                    *a += v;
                    *bb += v;
                }
            }
        }
        oh.iter_mut().for_each(|v| *v /= w as f64);
        ow.iter_mut().for_each(|v| *v /= h as f64);
    });
    let out = Tensor::from_vec(vec![b, h + w, c], out)?;
    Ok(x.tape().record(&[x], out, move |ctx: &BackwardCtx<'_>| {
        let g = ctx.grad.data();
        let mut dx = vec![0.0; b * plane];
        dx.par_chunks_mut(plane).zip(g.par_chunks(pooled)).for_each(|(d, gs)| {
            let (gh, gw) = gs.split_at(h * c);
            for i in 0..h {
                for j in 0..w {
                    let px = &mut d[(i * w + j) * c..(i * w + j + 1) * c];
                    for ((o, a), bb) in px.iter_mut().zip(&gh[i * c..(i + 1) * c]).zip(&gw[j * c..(j + 1) * c]) {
                        *o = a / w as f64 + bb / h as f64;
                    }
                }
            }
        });
        vec![Some(Tensor::from_shape(ctx.inputs[0].shape().clone(), dx).expect("input shape"))]
    }))
}

/// `out[b, i, j, c] = x[b, i, j, c] * g_h[b, i, c] * g_w[b, j, c]`.
pub fn coord_gate<'t>(x: Var<'t>, g_h: Var<'t>, g_w: Var<'t>) -> Result<Var<'t>> {
    let (xv, hv, wv) = (x.value(), g_h.value(), g_w.value());
    let dims = xv.dims();
    if dims.len() != 4 || hv.dims() != [dims[0], dims[1], dims[3]] || wv.dims() != [dims[0], dims[2], dims[3]] {
        return Err(Error::shape(format!(
            "coordinate gates {} and {} do not fit input {}",
            hv.shape(),
            wv.shape(),
            xv.shape()
        )));
    }
    let (h, w, c) = (dims[1], dims[2], dims[3]);
    let plane = h * w * c;
    let mut out = vec![0.0; xv.numel()];
    out.par_chunks_mut(plane)
        .zip(xv.data().par_chunks(plane))
        .zip(hv.data().par_chunks(h * c).zip(wv.data().par_chunks(w * c)))
        .for_each(|((o, xs), (gh, gw))| {
            for i in 0..h {
                for j in 0..w {
                    let at = (i * w + j) * c;
                    let row = o[at..at + c].iter_mut().zip(&xs[at..at + c]);
                    for ((y, xv), (a, bb)) in row.zip(gh[i * c..(i + 1) * c].iter().zip(&gw[j * c..(j + 1) * c])) {
                        *y = xv * a * bb;
                    }
                }
            }
        });
    let out = Tensor::from_shape(xv.shape().clone(), out)?;
    Ok(x.tape().record(&[x, g_h, g_w], out, move |ctx: &BackwardCtx<'_>| {
        let (xv, hv, wv) = (&ctx.inputs[0], &ctx.inputs[1], &ctx.inputs[2]);
        let g = ctx.grad.data();
        let mut dx = vec![0.0; xv.numel()];
        let mut dh = vec![0.0; hv.numel()];
        let mut dw = vec![0.0; wv.numel()];
        dx.par_chunks_mut(plane)
            .zip(dh.par_chunks_mut(h * c).zip(dw.par_chunks_mut(w * c)))
            .zip(g.par_chunks(plane).zip(xv.data().par_chunks(plane)))
            .zip(hv.data().par_chunks(h * c).zip(wv.data().par_chunks(w * c)))
            .for_each(|(((dx, (dh, dw)), (gs, xs)), (gh, gw))| {
                for i in 0..h {
                    for j in 0..w {
                        let at = (i * w + j) * c;
                        for k in 0..c {
                            let (gv, xk) = (gs[at + k], xs[at + k]);
                            let (a, bb) = (gh[i * c + k], gw[j * c + k]);
                            dx[at + k] = gv * a * bb;
                            dh[i * c + k] += gv * xk * bb;
                            dw[j * c + k] += gv * xk * a;
                        }
                    }
                }
            });
        let (needs, shapes) = (ctx.needs_grad, [xv.shape(), hv.shape(), wv.shape()]);
        [dx, dh, dw]
            .into_iter()
            .zip(shapes)
            .zip(needs)
            .map(|((d, s), n)| n.then(|| Tensor::from_shape(s.clone(), d).expect("operand shape")))
            .collect()
    }))
}

impl Layer for CoordAttnLayer {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("fs_weights", &self.fs_weights),
            ("fs_bias", &self.fs_bias),
            ("bn_gamma", &self.bn.gamma),
            ("bn_beta", &self.bn.beta),
            ("fh_weights", &self.fh_weights),
            ("fh_bias", &self.fh_bias),
            ("fw_weights", &self.fw_weights),
            ("fw_bias", &self.fw_bias),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fs_weights,
            &mut self.fs_bias,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.fh_weights,
            &mut self.fh_bias,
            &mut self.fw_weights,
            &mut self.fw_bias,
        ]
    }

    fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("bn_running_mean", &self.bn.running_mean), ("bn_running_var", &self.bn.running_var)]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        self.bn.buffers_mut()
    }

    fn all_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fs_weights,
            &mut self.fs_bias,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.fh_weights,
            &mut self.fh_bias,
            &mut self.fw_weights,
            &mut self.fw_bias,
            &mut self.bn.running_mean,
            &mut self.bn.running_var,
        ]
    }
}
