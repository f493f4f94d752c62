//! The twelve real polarimetric features fed to the real-valued stream.

use rayon::prelude::*;

use super::raster::{Coherency, CoherencyRaster};

pub const NUM_DESCRIPTORS: usize = 12;

/// Feature names in plane order.
pub const DESCRIPTOR_NAMES: [&str; NUM_DESCRIPTORS] = [
    "|T11|", "|T12|", "|T13|", "|T22|", "|T23|", "|T33|", "SPAN dB", "T22/SPAN", "T33/SPAN", "coh12", "coh13", "coh23",
];

/// SPAN at or below this counts as zero power.
pub const SPAN_FLOOR: f64 = 1e-12;
/// Value of the power feature at zero-power pixels.
pub const SPAN_DB_FLOOR: f64 = -120.0;

/// Descriptors of one pixel, plus whether any guard fired.
pub fn pixel_descriptors(t: &Coherency) -> ([f64; NUM_DESCRIPTORS], bool) {
    let span = t.span();
    let mut degenerate = false;
    let (power, r22, r33) = if span > SPAN_FLOOR {
        (10.0 * span.log10(), t.t22 / span, t.t33 / span)
    } else {
        degenerate = true;
        (SPAN_DB_FLOOR, 0.0, 0.0)
    };
    let mut coherence = |z: f64, a: f64, b: f64| {
        let den = (a * b).sqrt();
        if den > 0.0 {
            z / den
        } else {
            degenerate = true;
            0.0
        }
    };
    let c12 = coherence(t.t12.norm(), t.t11, t.t22);
    let c13 = coherence(t.t13.norm(), t.t11, t.t33);
    let c23 = coherence(t.t23.norm(), t.t22, t.t33);
    let d = [
        t.t11.abs(),
        t.t12.norm(),
        t.t13.norm(),
        t.t22.abs(),
        t.t23.norm(),
        t.t33.abs(),
        power,
        r22,
        r33,
        c12,
        c13,
        c23,
    ];
    (d, degenerate)
}

/// Pixel-major descriptor planes: `values[pixel * 12 + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorStack {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    /// Pixels where a zero denominator or zero power was guarded.
    pub degenerate: usize,
}

impl DescriptorStack {
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * NUM_DESCRIPTORS..(index + 1) * NUM_DESCRIPTORS]
    }
}

pub fn compute_descriptors(raster: &CoherencyRaster) -> DescriptorStack {
    let per_pixel: Vec<([f64; NUM_DESCRIPTORS], bool)> = raster.pixels().par_iter().map(pixel_descriptors).collect();
    let degenerate = per_pixel.iter().filter(|(_, d)| *d).count();
    DescriptorStack {
        height: raster.height(),
        width: raster.width(),
        values: per_pixel.iter().flat_map(|(v, _)| *v).collect(),
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix() {
        let t = Coherency { t11: 1.0, t22: 1.0, t33: 1.0, ..Default::default() };
        let (d, degenerate) = pixel_descriptors(&t);
        assert!((d[6] - 10.0 * 3f64.log10()).abs() < 1e-12);
        assert!((d[7] - 1.0 / 3.0).abs() < 1e-15 && (d[8] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(&d[9..], &[0.0; 3]);
        assert!(!degenerate);
    }

    #[test]
    fn single_channel_guards() {
        let t = Coherency { t11: 1.0, ..Default::default() };
        let (d, degenerate) = pixel_descriptors(&t);
        assert_eq!(d[6], 0.0);
        assert_eq!((d[7], d[8]), (0.0, 0.0));
        assert_eq!(&d[9..], &[0.0; 3]);
        assert!(degenerate);
        let (z, _) = pixel_descriptors(&Coherency::default());
        assert_eq!(z[6], SPAN_DB_FLOOR);
    }
}
