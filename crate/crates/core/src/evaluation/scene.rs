use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{argmax_rows, ModelParams};
use crate::nn::Binder;
use crate::polsar::{LabelMap, NormalizedScene, NUM_COMPLEX, NUM_DESCRIPTORS};
use crate::tensor::{ComplexVar, Tape, Tensor};

/// Scene rows whose stream features are computed together.
pub const TILE_ROWS: usize = 8;
/// Pixels sent through the head at once.
pub const HEAD_BATCH: usize = 128;

/// Edge-replicated copy of a pixel-major plane stack.
fn pad_planes(src: &[f64], h: usize, w: usize, depth: usize, pad: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; hp * wp * depth];
    out.par_chunks_mut(wp * depth).enumerate().for_each(|(i, row)| {
        let si = i.saturating_sub(pad).min(h - 1);
        for j in 0..wp {
            let sj = j.saturating_sub(pad).min(w - 1);
            let s = (si * w + sj) * depth;
            row[j * depth..(j + 1) * depth].copy_from_slice(&src[s..s + depth]);
        }
    });
    out
}

/// Argmax class (1-based) of every pixel.
///
/// Because the stream convolutions are spatially valid and translation
/// invariant, the stream features of every patch are a window of the
/// features of the whole edge-padded scene. Streams therefore run once per
/// row tile and only the per-pixel head runs per pixel; the result equals
/// classifying each patch independently.
pub fn classify_scene(params: &ModelParams, scene: &NormalizedScene) -> Result<LabelMap> {
    let p = params.config.patch;
    let (h, w, pad) = (scene.height, scene.width, p / 2);
    let wp = w + 2 * pad;
    let real = pad_planes(&scene.real, h, w, NUM_DESCRIPTORS, pad);
    let re = pad_planes(&scene.re, h, w, NUM_COMPLEX, pad);
    let im = pad_planes(&scene.im, h, w, NUM_COMPLEX, pad);
    let (s, c) = (p - 4, params.config.fused_channels());
    let feat_w = wp - 4;

    let mut classes = Vec::with_capacity(h * w);
    for y0 in (0..h).step_by(TILE_ROWS) {
        let rows = TILE_ROWS.min(h - y0);
        let in_rows = rows + p - 1;
        let slice = |v: &[f64], d: usize| v[y0 * wp * d..(y0 + in_rows) * wp * d].to_vec();
        let features = {
            let tape = Tape::new();
            let mut binder = Binder::frozen(&tape);
            let dims = |d: usize| vec![1, in_rows, wp, d, 1];
            let z = ComplexVar::new(
                tape.constant(Tensor::from_vec(dims(NUM_COMPLEX), slice(&re, NUM_COMPLEX))?),
                tape.constant(Tensor::from_vec(dims(NUM_COMPLEX), slice(&im, NUM_COMPLEX))?),
            )?;
            let real = tape.constant(Tensor::from_vec(dims(NUM_DESCRIPTORS), slice(&real, NUM_DESCRIPTORS))?);
            let f = params.streams(&mut binder, real, z)?.value();
            (*f).clone().into_data()
        };
        let pixels: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..w).map(move |x| (r, x))).collect();
        for chunk in pixels.chunks(HEAD_BATCH) {
            let mut windows = vec![0.0; chunk.len() * s * s * c];
            windows.par_chunks_mut(s * s * c).zip(chunk.par_iter()).for_each(|(dst, &(r, x))| {
                for i in 0..s {
                    let src = ((r + i) * feat_w + x) * c;
                    dst[i * s * c..(i + 1) * s * c].copy_from_slice(&features[src..src + s * c]);
                }
            });
            let logits = params.predict_from_features(&Tensor::from_vec(vec![chunk.len(), s, s, c], windows)?)?;
            classes.extend(argmax_rows(&logits).into_iter().map(|k| (k + 1) as u8));
        }
    }
    LabelMap::new(h, w, classes)
}

/// Classifies each pixel from its own extracted patch, `HEAD_BATCH` at a
/// time. Slower reference for [`classify_scene`].
pub fn classify_pixels(params: &ModelParams, scene: &NormalizedScene, pixels: &[usize]) -> Result<Vec<u8>> {
    if let Some(&bad) = pixels.iter().find(|&&p| p >= scene.height * scene.width) {
        return Err(Error::usage(format!("pixel {bad} lies outside the scene")));
    }
    let mut out = Vec::with_capacity(pixels.len());
    for chunk in pixels.chunks(HEAD_BATCH) {
        let (real, re, im) = scene.batch(chunk, params.config.patch)?;
        let logits = params.predict(&real, &re, &im)?;
        out.extend(argmax_rows(&logits).into_iter().map(|k| (k + 1) as u8));
    }
    Ok(out)
}
