use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::descriptors::{DescriptorStack, NUM_DESCRIPTORS};
use super::labels::LabelMap;
use super::raster::CoherencyRaster;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Complex channels per pixel: the upper triangle of T.
pub const NUM_COMPLEX: usize = 6;

/// Relative spread below which a descriptor is treated as constant.
pub const CONSTANT_SPREAD: f64 = 1e-9;

/// Normalization fitted on training pixels and reused at inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub descriptor_mean: [f64; NUM_DESCRIPTORS],
    /// Population standard deviation; zero spreads are stored as 1.
    pub descriptor_std: [f64; NUM_DESCRIPTORS],
    /// Mean magnitude per complex channel; zero scales are stored as 1.
    pub complex_scale: [f64; NUM_COMPLEX],
}

impl NormStats {
    /// Two-pass mean and variance over the given pixels.
    pub fn fit(desc: &DescriptorStack, raster: &CoherencyRaster, pixels: &[usize]) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::data("cannot fit normalization on zero pixels"));
        }
        let n = pixels.len() as f64;
        let mut mean = [0.0; NUM_DESCRIPTORS];
        for &p in pixels {
            for (m, v) in mean.iter_mut().zip(desc.pixel(p)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; NUM_DESCRIPTORS];
        for &p in pixels {
            for ((s, v), m) in var.iter_mut().zip(desc.pixel(p)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = [1.0; NUM_DESCRIPTORS];
        for ((sd, s), m) in std.iter_mut().zip(var).zip(&mean) {
            let v = (s / n).sqrt();
            // a constant feature leaves only rounding noise in its spread
            if v > CONSTANT_SPREAD * m.abs() {
                *sd = v;
            }
        }
        let mut scale = [0.0; NUM_COMPLEX];
        for &p in pixels {
            for (s, z) in scale.iter_mut().zip(raster.pixels()[p].upper()) {
                *s += z.norm();
            }
        }
        let scale = scale.map(|s| if s > 0.0 { s / n } else { 1.0 });
        Ok(NormStats { descriptor_mean: mean, descriptor_std: std, complex_scale: scale })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("plain numeric struct serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// A scene with normalization applied, ready for patch extraction.
#[derive(Clone, Debug)]
pub struct NormalizedScene {
    pub height: usize,
    pub width: usize,
    /// `real[pixel * 12 + k]`
    pub real: Vec<f64>,
    /// `re[pixel * 6 + k]`, `im[pixel * 6 + k]`
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl NormalizedScene {
    pub fn new(desc: &DescriptorStack, raster: &CoherencyRaster, stats: &NormStats) -> Result<Self> {
        if desc.height != raster.height() || desc.width != raster.width() {
            return Err(Error::shape(format!(
                "descriptors {}x{} do not match raster {}x{}",
                desc.height,
                desc.width,
                raster.height(),
                raster.width()
            )));
        }
        let n = raster.len();
        let mut real = Vec::with_capacity(n * NUM_DESCRIPTORS);
        for p in 0..n {
            for ((v, m), s) in desc.pixel(p).iter().zip(&stats.descriptor_mean).zip(&stats.descriptor_std) {
                real.push((v - m) / s);
            }
        }
        let mut re = Vec::with_capacity(n * NUM_COMPLEX);
        let mut im = Vec::with_capacity(n * NUM_COMPLEX);
        for px in raster.pixels() {
            for (z, s) in px.upper().iter().zip(&stats.complex_scale) {
                re.push(z.re / s);
                im.push(z.im / s);
            }
        }
        Ok(NormalizedScene { height: raster.height(), width: raster.width(), real, re, im })
    }

    /// Copies the `patch x patch` window centred on `pixel` into the
    /// output slices, replicating edge pixels beyond the border.
    pub fn write_patch(&self, pixel: usize, patch: usize, real: &mut [f64], re: &mut [f64], im: &mut [f64]) {
        let r = (patch / 2) as isize;
        let (row, col) = ((pixel / self.width) as isize, (pixel % self.width) as isize);
        let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        for i in 0..patch {
            let src_row = clamp(row + i as isize - r, self.height);
            for j in 0..patch {
                let src = src_row * self.width + clamp(col + j as isize - r, self.width);
                let dst = i * patch + j;
                real[dst * NUM_DESCRIPTORS..(dst + 1) * NUM_DESCRIPTORS]
                    .copy_from_slice(&self.real[src * NUM_DESCRIPTORS..(src + 1) * NUM_DESCRIPTORS]);
                let (d, s) = (dst * NUM_COMPLEX..(dst + 1) * NUM_COMPLEX, src * NUM_COMPLEX..(src + 1) * NUM_COMPLEX);
                re[d.clone()].copy_from_slice(&self.re[s.clone()]);
                im[d].copy_from_slice(&self.im[s]);
            }
        }
    }

    /// Model inputs for a list of pixels.
    pub fn batch(&self, pixels: &[usize], patch: usize) -> Result<(Tensor, Tensor, Tensor)> {
        let (pr, pc) = (patch * patch * NUM_DESCRIPTORS, patch * patch * NUM_COMPLEX);
        let b = pixels.len();
        let mut real = vec![0.0; b * pr];
        let mut re = vec![0.0; b * pc];
        let mut im = vec![0.0; b * pc];
        for (k, &p) in pixels.iter().enumerate() {
            self.write_patch(
                p,
                patch,
                &mut real[k * pr..(k + 1) * pr],
                &mut re[k * pc..(k + 1) * pc],
                &mut im[k * pc..(k + 1) * pc],
            );
        }
        Ok((
            Tensor::from_vec(vec![b, patch, patch, NUM_DESCRIPTORS, 1], real)?,
            Tensor::from_vec(vec![b, patch, patch, NUM_COMPLEX, 1], re)?,
            Tensor::from_vec(vec![b, patch, patch, NUM_COMPLEX, 1], im)?,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

/// Labeled patches for a set of pixels, stored contiguously.
#[derive(Clone, Debug)]
pub struct PatchDataset {
    pub patch: usize,
    pub pixels: Vec<usize>,
    /// Zero-based class indices.
    pub labels: Vec<usize>,
    pub real: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub stats: NormStats,
    pub split: SplitTag,
    pub seed: u64,
}

/// One mini-batch of model inputs.
#[derive(Clone, Debug)]
pub struct Batch {
    pub real: Tensor,
    pub re: Tensor,
    pub im: Tensor,
    pub labels: Vec<usize>,
}

/// Extracts labeled patches around `pixels`. Without `stats` the
/// normalization is fitted on these pixels (the training case).
#[allow(clippy::too_many_arguments)]
pub fn extract_patches(
    desc: &DescriptorStack,
    raster: &CoherencyRaster,
    labels: &LabelMap,
    pixels: &[usize],
    patch: usize,
    stats: Option<&NormStats>,
    split: SplitTag,
    seed: u64,
) -> Result<PatchDataset> {
    if patch.is_multiple_of(2) {
        return Err(Error::usage(format!("patch size must be odd, got {patch}")));
    }
    if labels.height != raster.height() || labels.width != raster.width() {
        return Err(Error::data(format!(
            "label map {}x{} does not match raster {}x{}",
            labels.height,
            labels.width,
            raster.height(),
            raster.width()
        )));
    }
    let class_of = pixels
        .iter()
        .map(|&p| match labels.data.get(p) {
            Some(&v) if v > 0 => Ok(usize::from(v) - 1),
            Some(_) => Err(Error::data(format!("pixel {p} is unlabeled"))),
            None => Err(Error::data(format!("pixel {p} lies outside the scene"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(desc, raster, pixels)?,
    };
    let scene = NormalizedScene::new(desc, raster, &stats)?;
    let (real, re, im) = scene.batch(pixels, patch)?;
    Ok(PatchDataset {
        patch,
        pixels: pixels.to_vec(),
        labels: class_of,
        real: real.into_data(),
        re: re.into_data(),
        im: im.into_data(),
        stats,
        split,
        seed,
    })
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Gathers the samples at `indices` (positions in this dataset).
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let p = self.patch;
        let (pr, pc) = (p * p * NUM_DESCRIPTORS, p * p * NUM_COMPLEX);
        let gather = |src: &[f64], len: usize| -> Vec<f64> {
            indices.iter().flat_map(|&i| src[i * len..(i + 1) * len].iter().copied()).collect()
        };
        let b = indices.len();
        Batch {
            real: Tensor::from_vec(vec![b, p, p, NUM_DESCRIPTORS, 1], gather(&self.real, pr)).expect("batch dims"),
            re: Tensor::from_vec(vec![b, p, p, NUM_COMPLEX, 1], gather(&self.re, pc)).expect("batch dims"),
            im: Tensor::from_vec(vec![b, p, p, NUM_COMPLEX, 1], gather(&self.im, pc)).expect("batch dims"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
