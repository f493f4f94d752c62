use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::labels::LabelMap;
use crate::error::{Error, Result};

/// Training pixels drawn per class: `max(1, floor(fraction * labeled / k))`.
pub fn samples_per_class(labeled: usize, k: usize, fraction: f64) -> usize {
    ((fraction * labeled as f64 / k as f64).floor() as usize).max(1)
}

/// Disjoint train/test partition of the labeled pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    /// Row-major pixel indices, grouped by class, ascending within a class.
    pub train: Vec<usize>,
    /// Every other labeled pixel, ascending.
    pub test: Vec<usize>,
    pub per_class: usize,
}

/// Draws the same number of training pixels from each class 1..=k,
/// uniformly without replacement; all other labeled pixels are test pixels.
pub fn stratified_split(labels: &LabelMap, k: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::usage(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    if k < 2 {
        return Err(Error::usage(format!("need at least 2 classes, got {k}")));
    }
    if let Some(bad) = labels.data.iter().find(|&&v| usize::from(v) > k) {
        return Err(Error::data(format!("label {bad} exceeds the class count {k}")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &v) in labels.data.iter().enumerate() {
        if v != 0 {
            members[usize::from(v) - 1].push(i);
        }
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::data(format!("class {} has no labeled pixels", empty + 1)));
    }
    let labeled: usize = members.iter().map(Vec::len).sum();
    let per_class = samples_per_class(labeled, k, fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; labels.len()];
    let mut train = Vec::with_capacity(per_class * k);
    for (c, pixels) in members.iter().enumerate() {
        let take = if pixels.len() < per_class {
            warn!(
                "class {} has only {} labeled pixels, fewer than {per_class}; using all of them",
                c + 1,
                pixels.len()
            );
            pixels.len()
        } else {
            per_class
        };
        let mut chosen: Vec<usize> = sample(&mut rng, pixels.len(), take).into_iter().map(|j| pixels[j]).collect();
        chosen.sort_unstable();
        for &p in &chosen {
            in_train[p] = true;
        }
        train.extend(chosen);
    }
    let test = (0..labels.len()).filter(|&i| labels.data[i] != 0 && !in_train[i]).collect();
    Ok(Split { train, test, per_class })
}
