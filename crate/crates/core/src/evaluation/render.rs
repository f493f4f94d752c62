use std::path::Path;

use image::RgbImage;

use super::palette::Palette;
use crate::error::{Error, Result};
use crate::polsar::LabelMap;

pub fn map_to_image(map: &LabelMap, palette: &Palette) -> Result<RgbImage> {
    let mut rgb = Vec::with_capacity(map.len() * 3);
    for &id in &map.data {
        rgb.extend_from_slice(&palette.color(id)?);
    }
    Ok(RgbImage::from_raw(map.width as u32, map.height as u32, rgb).expect("one colour per pixel"))
}

/// Writes the class map as an 8-bit RGB PNG; unlabeled pixels are black.
pub fn render_map(map: &LabelMap, palette: &Palette, path: &Path) -> Result<()> {
    map_to_image(map, palette)?.save(path).map_err(|e| Error::image(path, e))
}

/// Inverse of [`map_to_image`] for a palette with distinct colours.
pub fn parse_map(img: &RgbImage, palette: &Palette) -> Result<LabelMap> {
    let data = img
        .pixels()
        .map(|p| {
            palette.id_of(p.0).ok_or_else(|| {
                Error::data(format!("colour {:02X}{:02X}{:02X} is not in the palette", p[0], p[1], p[2]))
            })
        })
        .collect::<Result<Vec<u8>>>()?;
    LabelMap::new(img.height() as usize, img.width() as usize, data)
}
