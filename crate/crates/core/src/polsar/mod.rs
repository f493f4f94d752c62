//! PolSAR input handling: coherency rasters, polarimetric descriptors,
//! label maps, stratified sampling, patch datasets and Pauli previews.

mod dataset;
mod descriptors;
mod labels;
mod pauli;
mod raster;
mod split;

pub use dataset::{
    extract_patches, Batch, NormStats, NormalizedScene, PatchDataset, SplitTag, CONSTANT_SPREAD, NUM_COMPLEX,
};
pub use descriptors::{
    compute_descriptors, pixel_descriptors, DescriptorStack, DESCRIPTOR_NAMES, NUM_DESCRIPTORS, SPAN_DB_FLOOR,
    SPAN_FLOOR,
};
pub use labels::LabelMap;
pub use pauli::{pauli_rgb, render_pauli};
pub use raster::{
    load_coherency, write_packed, write_t3_dir, Coherency, CoherencyRaster, LoadedRaster, RasterFormat, PACKED_MAGIC,
    PLANES, PSD_SLACK,
};
pub use split::{samples_per_class, stratified_split, Split};
