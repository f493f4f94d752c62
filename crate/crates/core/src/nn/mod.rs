//! Network layers: real and complex 3D convolution, depthwise 2D
//! convolution, coordinate attention, batch norm, dense map and loss.

mod attention;
mod batchnorm;
mod conv3d;
mod dense;
mod depthwise;
mod layer;
mod loss;

pub use attention::{coord_gate, coordinate_attention, directional_pool, CoordAttnLayer, CA_REDUCTION};
pub use batchnorm::{batch_norm, BatchNorm, BatchStats, BN_EPSILON, BN_MOMENTUM};
pub use conv3d::{conv3d, cv_conv3d, ComplexConv3dLayer, Conv3dLayer};
pub use dense::{affine, DenseLayer};
pub use depthwise::{depthwise_conv2d, DepthwiseConv2dLayer};
pub use layer::{Binder, Layer, Mode};
pub use loss::{softmax_cross_entropy, softmax_rows};

use crate::tensor::Var;

/// Per-channel mean over height and width of (batch, h, w, c).
pub fn global_average_pool(x: Var<'_>) -> crate::Result<Var<'_>> {
    x.mean_axes(&[1, 2])
}
