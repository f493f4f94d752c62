use crate::error::{Error, Result};
use crate::nn::CA_REDUCTION;

/// Descriptor planes fed to the real-valued stream.
pub const DESCRIPTOR_DEPTH: usize = 12;
/// Upper-triangular coherency elements fed to the complex-valued stream.
pub const COMPLEX_DEPTH: usize = 6;
/// Filters of the first and second 3D convolution in each stream.
pub const STREAM_FILTERS: (usize, usize) = (16, 32);
pub const DEFAULT_PATCH: usize = 15;

/// Architecture hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub patch: usize,
    pub num_classes: usize,
    pub descriptor_depth: usize,
    pub complex_depth: usize,
    pub filters: (usize, usize),
    pub ca_reduction: usize,
}

impl ModelConfig {
    pub fn new(patch: usize, num_classes: usize) -> Result<Self> {
        let config = ModelConfig {
            patch,
            num_classes,
            descriptor_depth: DESCRIPTOR_DEPTH,
            complex_depth: COMPLEX_DEPTH,
            filters: STREAM_FILTERS,
            ca_reduction: CA_REDUCTION,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch < 5 || self.patch.is_multiple_of(2) {
            return Err(Error::usage(format!("patch must be odd and at least 5, got {}", self.patch)));
        }
        if self.num_classes < 2 {
            return Err(Error::usage(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.descriptor_depth == 0 || self.complex_depth == 0 {
            return Err(Error::usage("input depths must be positive"));
        }
        if self.filters.0 == 0 || self.filters.1 == 0 || self.ca_reduction == 0 {
            return Err(Error::usage("filter counts and reduction must be positive"));
        }
        if !self.fused_channels().is_multiple_of(self.ca_reduction) {
            return Err(Error::usage(format!(
                "{} fused channels are not divisible by the attention reduction {}",
                self.fused_channels(),
                self.ca_reduction
            )));
        }
        Ok(())
    }

    /// Spatial extent left after the two valid 3x3 convolutions.
    pub fn feature_size(&self) -> usize {
        self.patch - 4
    }

    pub fn real_stream_channels(&self) -> usize {
        self.descriptor_depth * self.filters.1
    }

    /// Real + imaginary parts of the flattened complex stream.
    pub fn complex_stream_channels(&self) -> usize {
        2 * self.complex_depth * self.filters.1
    }

    pub fn fused_channels(&self) -> usize {
        self.real_stream_channels() + self.complex_stream_channels()
    }

    pub fn attention_channels(&self) -> usize {
        self.fused_channels() / self.ca_reduction
    }
}
