//! Reference class maps: 0 is unlabeled, 1..=K are classes.
//!
//! Read from an 8-bit single-channel image or from a raw grid: an ASCII
//! header line `"<height> <width>\n"` followed by `height * width` bytes.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageReader};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::shape(format!(
                "label map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(LabelMap { height, width, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Largest class id present.
    pub fn max_class(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Labeled-pixel count per class id 1..=k (index 0 is class 1).
    pub fn class_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &v in &self.data {
            if v >= 1 && usize::from(v) <= k {
                counts[usize::from(v) - 1] += 1;
            }
        }
        counts
    }

    pub fn labeled(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "label file not found")));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"\x89PNG") {
            let img = ImageReader::new(std::io::Cursor::new(bytes))
                .with_guessed_format()
                .map_err(|e| Error::io(path, e))?
                .decode()
                .map_err(|e| Error::image(path, e))?;
            if img.color().channel_count() != 1 {
                return Err(Error::format(path, "label image must be single-channel 8-bit"));
            }
            let gray = img.into_luma8();
            let (w, h) = gray.dimensions();
            return LabelMap::new(h as usize, w as usize, gray.into_raw());
        }
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "raw label grid needs a \"height width\" header line"))?;
        let header = std::str::from_utf8(&bytes[..newline]).unwrap_or("");
        let dims: Vec<usize> = header.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        let [h, w] = dims[..] else {
            return Err(Error::format(path, format!("bad raw label header {header:?}")));
        };
        let body = &bytes[newline + 1..];
        if body.len() != h * w {
            return Err(Error::format(
                path,
                format!("raw label grid {h}x{w} needs {} bytes, found {}", h * w, body.len()),
            ));
        }
        LabelMap::new(h, w, body.to_vec())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("dimensions checked at construction");
        img.save(path).map_err(|e| Error::image(path, e))
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut out = format!("{} {}\n", self.height, self.width).into_bytes();
        out.extend_from_slice(&self.data);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
