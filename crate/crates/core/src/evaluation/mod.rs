//! Accuracy metrics, full-scene classification and class-map rendering.

mod confusion;
mod palette;
mod render;
mod scene;

pub use confusion::{metrics, ConfusionMatrix, Metrics};
pub use palette::{parse_hex, Palette, FLEVOLAND_HEX, SAN_FRANCISCO_HEX, UNLABELED};
pub use render::{map_to_image, parse_map, render_map};
pub use scene::{classify_pixels, classify_scene, HEAD_BATCH, TILE_ROWS};

use crate::error::Result;
use crate::polsar::LabelMap;

/// Confusion matrix of `predicted` against `reference` over `pixels`;
/// both maps hold 1-based class ids.
pub fn confusion_at(reference: &LabelMap, predicted: &LabelMap, pixels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    let refs: Vec<usize> = pixels.iter().map(|&p| usize::from(reference.data[p]).wrapping_sub(1)).collect();
    let preds: Vec<usize> = pixels.iter().map(|&p| usize::from(predicted.data[p]).wrapping_sub(1)).collect();
    ConfusionMatrix::from_pairs(k, &refs, &preds)
}
