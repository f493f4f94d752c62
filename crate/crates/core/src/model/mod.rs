//! The dual-domain network: assembly, parameter ledger, complexity
//! counting and checkpoints.

pub mod checkpoint;
mod complexity;
mod config;
mod forward;
mod params;

pub use complexity::{count_flops_macs, ComplexityReport, LayerCost, REFERENCE_FLOPS, REFERENCE_MACS};
pub use config::{ModelConfig, COMPLEX_DEPTH, DEFAULT_PATCH, DESCRIPTOR_DEPTH, STREAM_FILTERS};
pub use forward::{argmax_rows, ModelOutput};
pub use params::{ModelParams, ParameterLedger};
