use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::nn::{ComplexConv3dLayer, Conv3dLayer, CoordAttnLayer, DenseLayer, DepthwiseConv2dLayer, Layer};
use crate::tensor::Tensor;

/// Every parameter tensor of the network, in binding order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub rv_conv1: Conv3dLayer,
    pub rv_conv2: Conv3dLayer,
    pub cv_conv1: ComplexConv3dLayer,
    pub cv_conv2: ComplexConv3dLayer,
    pub depthwise: DepthwiseConv2dLayer,
    pub attention: CoordAttnLayer,
    pub dense: DenseLayer,
}

impl ModelParams {
    /// All weights zero, batch norm at identity.
    pub fn zeros(config: ModelConfig) -> Self {
        let (f1, f2) = config.filters;
        let fused = config.fused_channels();
        ModelParams {
            config,
            rv_conv1: Conv3dLayer::zeros(1, f1),
            rv_conv2: Conv3dLayer::zeros(f1, f2),
            cv_conv1: ComplexConv3dLayer::zeros(1, f1),
            cv_conv2: ComplexConv3dLayer::zeros(f1, f2),
            depthwise: DepthwiseConv2dLayer::zeros(fused),
            attention: CoordAttnLayer::zeros(fused, config.attention_channels()),
            dense: DenseLayer::zeros(fused, config.num_classes),
        }
    }

    /// Glorot-uniform weights, zero biases, identity batch norm.
    ///
    /// Complex kernels draw real and imaginary parts independently with
    /// half the real-valued variance. Deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f1, f2) = config.filters;
        let fused = config.fused_channels();
        let m = config.attention_channels();
        let k = config.num_classes;

        glorot(&mut rng, &mut p.rv_conv1.kernel, 27, 27 * f1, 1.0);
        glorot(&mut rng, &mut p.rv_conv2.kernel, 27 * f1, 27 * f2, 1.0);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        glorot(&mut rng, &mut p.cv_conv1.kernel_re, 27, 27 * f1, half);
        glorot(&mut rng, &mut p.cv_conv1.kernel_im, 27, 27 * f1, half);
        glorot(&mut rng, &mut p.cv_conv2.kernel_re, 27 * f1, 27 * f2, half);
        glorot(&mut rng, &mut p.cv_conv2.kernel_im, 27 * f1, 27 * f2, half);
        // one 3x3 filter per channel
        glorot(&mut rng, &mut p.depthwise.kernel, 9, 9, 1.0);
        glorot(&mut rng, &mut p.attention.fs_weights, fused, m, 1.0);
        glorot(&mut rng, &mut p.attention.fh_weights, m, fused, 1.0);
        glorot(&mut rng, &mut p.attention.fw_weights, m, fused, 1.0);
        glorot(&mut rng, &mut p.dense.weights, fused, k, 1.0);
        p
    }

    fn layers(&self) -> [(&'static str, &dyn Layer); 7] {
        [
            ("rv_conv1", &self.rv_conv1),
            ("rv_conv2", &self.rv_conv2),
            ("cv_conv1", &self.cv_conv1),
            ("cv_conv2", &self.cv_conv2),
            ("depthwise", &self.depthwise),
            ("attention", &self.attention),
            ("dense", &self.dense),
        ]
    }

    /// Trainable tensors in the order a forward pass binds them.
    pub fn trainable(&self) -> Vec<&Tensor> {
        self.layers().into_iter().flat_map(|(_, l)| l.parameters().into_iter().map(|(_, t)| t)).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        out.extend(self.rv_conv1.parameters_mut());
        out.extend(self.rv_conv2.parameters_mut());
        out.extend(self.cv_conv1.parameters_mut());
        out.extend(self.cv_conv2.parameters_mut());
        out.extend(self.depthwise.parameters_mut());
        out.extend(self.attention.parameters_mut());
        out.extend(self.dense.parameters_mut());
        out
    }

    /// Every tensor including batch-norm running statistics, with
    /// qualified names; this is the checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (layer_name, layer) in self.layers() {
            for (name, t) in layer.parameters().into_iter().chain(layer.buffers()) {
                out.push((format!("{layer_name}.{name}"), t));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut tensors: Vec<&mut Tensor> = Vec::new();
        macro_rules! take {
            ($layer:expr) => {{
                tensors.extend($layer.all_mut());
            }};
        }
        take!(self.rv_conv1);
        take!(self.rv_conv2);
        take!(self.cv_conv1);
        take!(self.cv_conv2);
        take!(self.depthwise);
        take!(self.attention);
        take!(self.dense);
        names.into_iter().zip(tensors).collect()
    }

    /// Number of scalars actually allocated, running statistics included.
    pub fn allocated(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn ledger(&self) -> ParameterLedger {
        ParameterLedger {
            rv_stream: self.rv_conv1.param_count() + self.rv_conv2.param_count(),
            cv_stream: self.cv_conv1.param_count() + self.cv_conv2.param_count(),
            dense: self.dense.param_count(),
            depthwise: self.depthwise.param_count(),
            attention: self.attention.param_count(),
        }
    }
}

fn glorot(rng: &mut ChaCha8Rng, t: &mut Tensor, fan_in: usize, fan_out: usize, scale: f64) {
    let limit = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..limit);
    }
}

/// Parameter totals per architectural block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterLedger {
    pub rv_stream: usize,
    pub cv_stream: usize,
    pub dense: usize,
    pub depthwise: usize,
    pub attention: usize,
}

impl ParameterLedger {
    /// Both streams plus the classifier.
    pub fn base(&self) -> usize {
        self.rv_stream + self.cv_stream + self.dense
    }

    pub fn with_depthwise(&self) -> usize {
        self.base() + self.depthwise
    }

    pub fn total(&self) -> usize {
        self.with_depthwise() + self.attention
    }
}

impl std::fmt::Display for ParameterLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "rv-stream {}", self.rv_stream)?;
        writeln!(f, "cv-stream {}", self.cv_stream)?;
        writeln!(f, "dense {}", self.dense)?;
        writeln!(f, "base {}", self.base())?;
        writeln!(f, "depthwise {}", self.depthwise)?;
        writeln!(f, "base+depthwise {}", self.with_depthwise())?;
        writeln!(f, "attention {}", self.attention)?;
        write!(f, "total {}", self.total())
    }
}
