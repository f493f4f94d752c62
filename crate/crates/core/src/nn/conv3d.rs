use rayon::prelude::*;

use super::layer::{Binder, Layer};
use crate::error::{Error, Result};
use crate::tensor::gemm::{gemm, Layout};
use crate::tensor::{BackwardCtx, ComplexVar, Tensor, Var};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL * KERNEL;

/// Geometry of a 3x3x3 convolution that is valid spatially and same
/// (one zero plane each side) along depth.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    h: usize,
    w: usize,
    d: usize,
    cin: usize,
    cout: usize,
}

impl Geometry {
    fn new(x: &[usize], k: &[usize]) -> Result<Self> {
        if x.len() != 5 {
            return Err(Error::shape(format!("conv3d input must be (batch, h, w, d, channels), got {x:?}")));
        }
        if k.len() != 5 || k[..3] != [KERNEL; 3] || k[3] != x[4] {
            return Err(Error::shape(format!("conv3d kernel {k:?} does not fit input {x:?}")));
        }
        if x[1] < KERNEL || x[2] < KERNEL {
            return Err(Error::shape(format!("conv3d needs height and width >= 3, got {}x{}", x[1], x[2])));
        }
        Ok(Geometry { batch: x[0], h: x[1], w: x[2], d: x[3], cin: x[4], cout: k[4] })
    }

    fn ho(&self) -> usize {
        self.h - 2
    }

    fn wo(&self) -> usize {
        self.w - 2
    }

    /// Output positions per sample (rows of the im2col matrix).
    fn rows(&self) -> usize {
        self.ho() * self.wo() * self.d
    }

    fn cols(&self) -> usize {
        TAPS * self.cin
    }

    fn in_len(&self) -> usize {
        self.h * self.w * self.d * self.cin
    }

    fn out_len(&self) -> usize {
        self.rows() * self.cout
    }

    fn out_dims(&self) -> Vec<usize> {
        vec![self.batch, self.ho(), self.wo(), self.d, self.cout]
    }

    /// Unfolds one sample into a `rows x (27 * cin)` patch matrix.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (w, d, cin) = (self.w, self.d, self.cin);
        let ncols = self.cols();
        let mut row = 0;
        for ho in 0..self.ho() {
            for wo in 0..self.wo() {
                for dd in 0..d {
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for kh in 0..KERNEL {
                        for kw in 0..KERNEL {
                            let pix = ((ho + kh) * w + wo + kw) * d;
                            for kd in 0..KERNEL {
                                let tap = ((kh * KERNEL + kw) * KERNEL + kd) * cin;
                                let seg = &mut dst[tap..tap + cin];
                                match (dd + kd).checked_sub(1).filter(|&z| z < d) {
                                    Some(z) => {
                                        let src = (pix + z) * cin;
                                        seg.copy_from_slice(&x[src..src + cin]);
                                    }
                                    None => seg.fill(0.0),
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto one input sample.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (w, d, cin) = (self.w, self.d, self.cin);
        let ncols = self.cols();
        let mut row = 0;
        for ho in 0..self.ho() {
            for wo in 0..self.wo() {
                for dd in 0..d {
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for kh in 0..KERNEL {
                        for kw in 0..KERNEL {
                            let pix = ((ho + kh) * w + wo + kw) * d;
                            for kd in 0..KERNEL {
                                let Some(z) = (dd + kd).checked_sub(1).filter(|&z| z < d) else {
                                    continue;
                                };
                                let tap = ((kh * KERNEL + kw) * KERNEL + kd) * cin;
                                let dst = (pix + z) * cin;
                                for (o, g) in dx[dst..dst + cin].iter_mut().zip(&src[tap..tap + cin]) {
                                    *o += g;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// 3x3x3 cross-correlation of `x` (batch, h, w, d, cin) with `kernel`
/// (3, 3, 3, cin, cout) plus `bias` (cout).
///
/// Height and width shrink by 2; depth is zero-padded to keep its extent.
pub fn conv3d<'t>(x: Var<'t>, kernel: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let (xv, kv, bv) = (x.value(), kernel.value(), bias.value());
    let g = Geometry::new(xv.dims(), kv.dims())?;
    if bv.dims() != [g.cout] {
        return Err(Error::shape(format!("conv3d bias {} does not match {} output channels", bv.shape(), g.cout)));
    }
    let (kdata, bdata) = (kv.data(), bv.data());
    let mut out = vec![0.0; g.batch * g.out_len()];
    out.par_chunks_mut(g.out_len()).zip(xv.data().par_chunks(g.in_len())).for_each(|(y, xs)| {
        let mut cols = vec![0.0; g.rows() * g.cols()];
        g.im2col(xs, &mut cols);
        for row in y.chunks_mut(g.cout) {
            row.copy_from_slice(bdata);
        }
        gemm(g.rows(), g.cols(), g.cout, &cols, Layout::Normal, kdata, Layout::Normal, y, true);
    });
    let out = Tensor::from_vec(g.out_dims(), out)?;
    Ok(x.tape().record(&[x, kernel, bias], out, move |ctx: &BackwardCtx<'_>| {
        let (xv, kv) = (&ctx.inputs[0], &ctx.inputs[1]);
        let dy = ctx.grad.data();
        let need_x = ctx.needs_grad[0];
        let need_k = ctx.needs_grad[1];
        let kdata = kv.data();
        let mut gx_data = vec![0.0; if need_x { g.batch * g.in_len() } else { 0 }];
        let dx_slices: Vec<&mut [f64]> = if need_x {
            gx_data.chunks_mut(g.in_len()).collect()
        } else {
            (0..g.batch).map(|_| Default::default()).collect()
        };
        let per_sample: Vec<Option<Vec<f64>>> = dx_slices
            .into_par_iter()
            .zip(dy.par_chunks(g.out_len()))
            .zip(xv.data().par_chunks(g.in_len()))
            .map(|((dx, dys), xs)| {
                let mut cols = vec![0.0; g.rows() * g.cols()];
                let dk = need_k.then(|| {
                    g.im2col(xs, &mut cols);
                    let mut dk = vec![0.0; g.cols() * g.cout];
                    gemm(g.cols(), g.rows(), g.cout, &cols, Layout::Transposed, dys, Layout::Normal, &mut dk, false);
                    dk
                });
                if need_x {
                    gemm(g.rows(), g.cout, g.cols(), dys, Layout::Normal, kdata, Layout::Transposed, &mut cols, false);
                    g.col2im(&cols, dx);
                }
                dk
            })
            .collect();

        let gx = need_x.then(|| Tensor::from_shape(xv.shape().clone(), gx_data).expect("input shape"));
        // fixed reduction order over samples keeps results schedule-independent
        let gk = need_k.then(|| {
            let mut acc = vec![0.0; g.cols() * g.cout];
            for dk in &per_sample {
                for (a, v) in acc.iter_mut().zip(dk.as_deref().unwrap_or_default()) {
                    *a += v;
                }
            }
            Tensor::from_shape(kv.shape().clone(), acc).expect("kernel shape")
        });
        let gb = ctx.needs_grad[2].then(|| {
            let mut acc = vec![0.0; g.cout];
            for row in dy.chunks(g.cout) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            Tensor::from_vec(vec![g.cout], acc).expect("bias shape")
        });
        vec![gx, gk, gb]
    }))
}

/// Complex 3x3x3 cross-correlation:
/// `re = x.re*K.re - x.im*K.im + b.re`, `im = x.re*K.im + x.im*K.re + b.im`.
///
/// Evaluated as one real convolution over the stacked input `[x.re | x.im]`
/// with the block kernel `[[K.re, K.im], [-K.im, K.re]]`, which shares the
/// patch unfolding between all four real products.
pub fn cv_conv3d<'t>(x: ComplexVar<'t>, kernel: ComplexVar<'t>, bias: ComplexVar<'t>) -> Result<ComplexVar<'t>> {
    let kd = kernel.re.dims();
    if kd.len() != 5 {
        return Err(Error::shape(format!("complex conv3d kernel must have rank 5, got {kd:?}")));
    }
    let cout = kd[4];
    let stacked = Var::concat(&[x.re, x.im], 4)?;
    let top = Var::concat(&[kernel.re, kernel.im], 4)?;
    let bottom = Var::concat(&[kernel.im.neg(), kernel.re], 4)?;
    let block = Var::concat(&[top, bottom], 3)?;
    let b = Var::concat(&[bias.re, bias.im], 0)?;
    let y = conv3d(stacked, block, b)?;
    ComplexVar::new(y.narrow(4, 0, cout)?, y.narrow(4, cout, cout)?)
}

/// Real-valued 3D convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl Conv3dLayer {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Conv3dLayer { kernel: Tensor::zeros(vec![KERNEL, KERNEL, KERNEL, cin, cout]), bias: Tensor::zeros(vec![cout]) }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dims()[3]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dims()[4]
    }

    pub fn forward<'t>(&self, binder: &mut Binder<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let [k, b] = binder.bind_layer(self);
        conv3d(x, k, b)
    }
}

impl Layer for Conv3dLayer {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("kernel", &self.kernel), ("bias", &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

/// Complex-valued 3D convolution layer; kernel and bias carry separate
/// real and imaginary tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexConv3dLayer {
    pub kernel_re: Tensor,
    pub kernel_im: Tensor,
    pub bias_re: Tensor,
    pub bias_im: Tensor,
}

impl ComplexConv3dLayer {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        let k = Tensor::zeros(vec![KERNEL, KERNEL, KERNEL, cin, cout]);
        let b = Tensor::zeros(vec![cout]);
        ComplexConv3dLayer { kernel_re: k.clone(), kernel_im: k, bias_re: b.clone(), bias_im: b }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel_re.dims()[3]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel_re.dims()[4]
    }

    pub fn forward<'t>(&self, binder: &mut Binder<'t>, x: ComplexVar<'t>) -> Result<ComplexVar<'t>> {
        let [kr, ki, br, bi] = binder.bind_layer(self);
        cv_conv3d(x, ComplexVar::new(kr, ki)?, ComplexVar::new(br, bi)?)
    }
}

impl Layer for ComplexConv3dLayer {
    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("kernel_re", &self.kernel_re),
            ("kernel_im", &self.kernel_im),
            ("bias_re", &self.bias_re),
            ("bias_im", &self.bias_im),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel_re, &mut self.kernel_im, &mut self.bias_re, &mut self.bias_im]
    }
}
