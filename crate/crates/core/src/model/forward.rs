use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::nn::{global_average_pool, BatchStats, Binder, Mode};
use crate::tensor::{ComplexVar, Tape, Tensor, Var};

/// Output of one forward pass.
pub struct ModelOutput<'t> {
    /// (batch, classes)
    pub logits: Var<'t>,
    /// Batch-norm statistics of the batch, in train mode.
    pub bn_stats: Option<BatchStats>,
}

impl ModelParams {
    /// Both convolutional streams and their fusion.
    ///
    /// `real` is (batch, h, w, descriptor_depth, 1) and `complex` is
    /// (batch, h, w, complex_depth, 1); the result is
    /// (batch, h - 4, w - 4, fused_channels) laid out as
    /// [real stream | complex real parts | complex imaginary parts].
    pub fn streams<'t>(&self, binder: &mut Binder<'t>, real: Var<'t>, complex: ComplexVar<'t>) -> Result<Var<'t>> {
        let c = &self.config;
        let rd = real.dims();
        let cd = complex.dims();
        if rd.len() != 5 || rd[3] != c.descriptor_depth || rd[4] != 1 {
            return Err(Error::shape(format!(
                "real input must be (batch, h, w, {}, 1), got {rd:?}",
                c.descriptor_depth
            )));
        }
        if cd.len() != 5 || cd[3] != c.complex_depth || cd[4] != 1 || cd[..3] != rd[..3] {
            return Err(Error::shape(format!(
                "complex input must be (batch, h, w, {}, 1) matching the real input, got {cd:?}",
                c.complex_depth
            )));
        }
        if rd[1] < 5 || rd[2] < 5 {
            return Err(Error::shape(format!("inputs need at least 5x5 pixels, got {}x{}", rd[1], rd[2])));
        }
        let (b, h, w) = (rd[0], rd[1] - 4, rd[2] - 4);

        let r = self.rv_conv1.forward(binder, real)?.relu();
        let r = self.rv_conv2.forward(binder, r)?.relu();
        let r = r.reshape(vec![b, h, w, c.real_stream_channels()])?;

        let z = self.cv_conv1.forward(binder, complex)?.crelu();
        let z = self.cv_conv2.forward(binder, z)?.crelu();
        let z = z.reshape(&[b, h, w, c.complex_depth * c.filters.1])?.to_real_concat(3)?;

        Var::concat(&[r, z], 3)
    }

    /// Depthwise refinement, attention, pooling and classifier applied to
    /// fused stream features.
    pub fn head<'t>(&self, binder: &mut Binder<'t>, fused: Var<'t>, mode: Mode) -> Result<ModelOutput<'t>> {
        let x = self.depthwise.forward(binder, fused)?.relu();
        let (x, bn_stats) = self.attention.forward(binder, x, mode)?;
        let pooled = global_average_pool(x)?;
        let logits = self.dense.forward(binder, pooled)?;
        Ok(ModelOutput { logits, bn_stats })
    }

    /// Full network on a batch of patch pairs of side `config.patch`.
    pub fn forward<'t>(
        &self,
        binder: &mut Binder<'t>,
        real: Var<'t>,
        complex: ComplexVar<'t>,
        mode: Mode,
    ) -> Result<ModelOutput<'t>> {
        let p = self.config.patch;
        let rd = real.dims();
        if rd.len() != 5 || rd[1] != p || rd[2] != p {
            return Err(Error::shape(format!("expected {p}x{p} patches, got input {rd:?}")));
        }
        let fused = self.streams(binder, real, complex)?;
        self.head(binder, fused, mode)
    }

    /// Inference-mode logits (batch, classes) without gradient tracking.
    pub fn predict(&self, real: &Tensor, complex_re: &Tensor, complex_im: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let mut binder = Binder::frozen(&tape);
        let z = ComplexVar::new(tape.constant(complex_re.clone()), tape.constant(complex_im.clone()))?;
        let out = self.forward(&mut binder, tape.constant(real.clone()), z, Mode::Infer)?;
        let logits = out.logits.value();
        Ok((*logits).clone())
    }

    /// Inference-mode logits for fused stream features.
    pub fn predict_from_features(&self, fused: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let mut binder = Binder::frozen(&tape);
        let out = self.head(&mut binder, tape.constant(fused.clone()), Mode::Infer)?;
        let logits = out.logits.value();
        Ok((*logits).clone())
    }
}

/// Index of the largest logit in each row.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.dims()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
