use super::layer::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{BackwardCtx, Tensor, Var};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Batch normalization over the rows of an (n, c) matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(vec![channels], 1.0),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::full(vec![channels], 1.0),
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
}

impl Layer for BatchNorm {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("gamma", &self.gamma), ("beta", &self.beta)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("running_mean", &self.running_mean), ("running_var", &self.running_var)]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    fn all_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

/// Normalizes `x` (n, c) per channel. In train mode the batch statistics
/// (biased variance) are used and returned; in infer mode the running
/// statistics are used.
pub fn batch_norm<'t>(
    x: Var<'t>,
    gamma: Var<'t>,
    beta: Var<'t>,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
) -> Result<(Var<'t>, Option<BatchStats>)> {
    let xv = x.value();
    let dims = xv.dims();
    if dims.len() != 2 {
        return Err(Error::shape(format!("batch norm expects (n, c), got {}", xv.shape())));
    }
    let (n, c) = (dims[0], dims[1]);
    let (gv, bv) = (gamma.value(), beta.value());
    if gv.dims() != [c] || bv.dims() != [c] || running_mean.dims() != [c] || running_var.dims() != [c] {
        return Err(Error::shape(format!("batch norm parameters do not match {c} channels")));
    }
    let (mean, var, stats) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            for row in xv.data().chunks(c) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; c];
            for row in xv.data().chunks(c) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= n as f64);
            let stats = BatchStats { mean: mean.clone(), var: var.clone() };
            (mean, var, Some(stats))
        }
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec(), None),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = vec![0.0; n * c];
    for (dst, row) in xhat.chunks_mut(c).zip(xv.data().chunks(c)) {
        for j in 0..c {
            dst[j] = (row[j] - mean[j]) * inv_std[j];
        }
    }
    let mut out = vec![0.0; n * c];
    for (dst, row) in out.chunks_mut(c).zip(xhat.chunks(c)) {
        for j in 0..c {
            dst[j] = gv.data()[j] * row[j] + bv.data()[j];
        }
    }
    let out = Tensor::from_shape(xv.shape().clone(), out)?;
    let y = x.tape().record(&[x, gamma, beta], out, move |ctx: &BackwardCtx<'_>| {
        let dy = ctx.grad.data();
        let gamma = ctx.inputs[1].data();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (g, xh) in dy.chunks(c).zip(xhat.chunks(c)) {
            for j in 0..c {
                sum_dy[j] += g[j];
                sum_dy_xhat[j] += g[j] * xh[j];
            }
        }
        let gx = ctx.needs_grad[0].then(|| {
            let mut dx = vec![0.0; n * c];
            let nf = n as f64;
            for ((d, g), xh) in dx.chunks_mut(c).zip(dy.chunks(c)).zip(xhat.chunks(c)) {
                for j in 0..c {
                    d[j] = match mode {
                        Mode::Train => gamma[j] * inv_std[j] / nf * (nf * g[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]),
                        Mode::Infer => gamma[j] * inv_std[j] * g[j],
                    };
                }
            }
            Tensor::from_vec(vec![n, c], dx).expect("input shape")
        });
        let gg = ctx.needs_grad[1].then(|| Tensor::from_vec(vec![c], sum_dy_xhat.clone()).expect("c"));
        let gb = ctx.needs_grad[2].then(|| Tensor::from_vec(vec![c], sum_dy.clone()).expect("c"));
        vec![gx, gg, gb]
    });
    Ok((y, stats))
}
