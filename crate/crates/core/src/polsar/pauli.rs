use std::path::Path;

use image::RgbImage;

use super::raster::CoherencyRaster;
use crate::error::{Error, Result};

/// Nearest-rank 99th percentile of the values.
fn percentile99(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// False-colour RGB with R = sqrt(T22), G = sqrt(T33), B = sqrt(T11), each
/// channel clipped at its 99th percentile and scaled to 0..=255.
pub fn pauli_rgb(raster: &CoherencyRaster) -> Vec<[u8; 3]> {
    let channels: [Vec<f64>; 3] = [
        raster.pixels().iter().map(|p| p.t22.max(0.0).sqrt()).collect(),
        raster.pixels().iter().map(|p| p.t33.max(0.0).sqrt()).collect(),
        raster.pixels().iter().map(|p| p.t11.max(0.0).sqrt()).collect(),
    ];
    let limits = channels.each_ref().map(|c| percentile99(c));
    (0..raster.len())
        .map(|i| {
            std::array::from_fn(|k| {
                if limits[k] > 0.0 {
                    (channels[k][i].min(limits[k]) / limits[k] * 255.0).round() as u8
                } else {
                    0
                }
            })
        })
        .collect()
}

pub fn render_pauli(raster: &CoherencyRaster, path: &Path) -> Result<()> {
    let rgb: Vec<u8> = pauli_rgb(raster).into_iter().flatten().collect();
    let img =
        RgbImage::from_raw(raster.width() as u32, raster.height() as u32, rgb).expect("one pixel per raster cell");
    img.save(path).map_err(|e| Error::image(path, e))
}
