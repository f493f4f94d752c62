//! Synthetic PolSAR scenes with known class structure.
//!
//! Each class has a mean coherency matrix; a pixel's matrix is the average
//! of `looks` outer products of circular complex Gaussian vectors with that
//! covariance, i.e. a scaled complex Wishart draw.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polsar::{Coherency, CoherencyRaster, LabelMap};

/// Default looks per pixel.
pub const DEFAULT_LOOKS: u32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    /// Equal-width vertical bands, class 1 on the left.
    Stripes,
    /// Nearest-seed cells with `cells_per_class` seeds per class.
    Voronoi { cells_per_class: usize },
}

/// Mean coherency of one class; off-diagonals are `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub t11: f64,
    pub t22: f64,
    pub t33: f64,
    #[serde(default)]
    pub t12: [f64; 2],
    #[serde(default)]
    pub t13: [f64; 2],
    #[serde(default)]
    pub t23: [f64; 2],
}

impl ClassSpec {
    fn matrix(&self) -> [[Complex64; 3]; 3] {
        let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
        let r = |v: f64| Complex64::new(v, 0.0);
        let (a12, a13, a23) = (c(self.t12), c(self.t13), c(self.t23));
        [[r(self.t11), a12, a13], [a12.conj(), r(self.t22), a23], [a13.conj(), a23.conj(), r(self.t33)]]
    }
}

fn default_looks() -> u32 {
    DEFAULT_LOOKS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_looks")]
    pub looks: u32,
    pub seed: u64,
    pub layout: Layout,
    pub classes: Vec<ClassSpec>,
}

impl Default for SceneSpec {
    /// 128x128, three stripes dominated by T11, T22 and T33 respectively.
    fn default() -> Self {
        let class = |name: &str, d: [f64; 3], t12: [f64; 2], t13: [f64; 2], t23: [f64; 2]| ClassSpec {
            name: name.to_string(),
            t11: d[0],
            t22: d[1],
            t33: d[2],
            t12,
            t13,
            t23,
        };
        SceneSpec {
            height: 128,
            width: 128,
            looks: DEFAULT_LOOKS,
            seed: 2024,
            layout: Layout::Stripes,
            classes: vec![
                class("surface", [1.0, 0.1, 0.05], [0.15, 0.05], [0.0, 0.0], [0.0, 0.0]),
                class("double-bounce", [0.1, 1.0, 0.05], [-0.15, 0.05], [0.0, 0.0], [0.0, 0.0]),
                class("volume", [0.2, 0.2, 1.0], [0.0, 0.0], [0.05, -0.05], [0.05, 0.05]),
            ],
        }
    }
}

impl SceneSpec {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::spec("scene must be at least 1x1"));
        }
        if self.looks == 0 {
            return Err(Error::spec("looks must be positive"));
        }
        let k = self.classes.len();
        if !(1..=255).contains(&k) {
            return Err(Error::spec(format!("need 1..=255 classes, got {k}")));
        }
        if let Layout::Voronoi { cells_per_class: 0 } = self.layout {
            return Err(Error::spec("voronoi layout needs at least one cell per class"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if !is_psd(&c.matrix()) {
                return Err(Error::spec(format!(
                    "class {} ({}) has a mean coherency that is not positive semi-definite",
                    i + 1,
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Class id (1-based) of every pixel.
    pub fn layout_labels(&self) -> Vec<u8> {
        let (h, w, k) = (self.height, self.width, self.classes.len());
        match self.layout {
            Layout::Stripes => (0..h * w).map(|i| ((i % w) * k / w + 1) as u8).collect(),
            Layout::Voronoi { cells_per_class } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x0076_6f72_6f6e_6f69);
                let seeds: Vec<(f64, f64, u8)> = (0..k * cells_per_class)
                    .map(|s| (rng.gen::<f64>() * h as f64, rng.gen::<f64>() * w as f64, (s % k + 1) as u8))
                    .collect();
                (0..h * w)
                    .map(|i| {
                        let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
                        let mut best = (f64::INFINITY, 0u8);
                        for &(sy, sx, c) in &seeds {
                            let d = (sy - y).powi(2) + (sx - x).powi(2);
                            if d < best.0 {
                                best = (d, c);
                            }
                        }
                        best.1
                    })
                    .collect()
            }
        }
    }
}

fn scale_of(a: &[[Complex64; 3]; 3]) -> f64 {
    (0..3).map(|i| a[i][i].re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// Hermitian with every principal minor non-negative (up to rounding).
pub fn is_psd(a: &[[Complex64; 3]; 3]) -> bool {
    let tol = 1e-12 * scale_of(a);
    let d = [a[0][0].re, a[1][1].re, a[2][2].re];
    if (0..3).any(|i| a[i][i].im != 0.0 || d[i] < -tol) {
        return false;
    }
    let minor = |i: usize, j: usize| d[i] * d[j] - a[i][j].norm_sqr();
    let tol2 = tol * scale_of(a);
    if minor(0, 1) < -tol2 || minor(0, 2) < -tol2 || minor(1, 2) < -tol2 {
        return false;
    }
    let det = d[0] * d[1] * d[2] + 2.0 * (a[0][1] * a[1][2] * a[0][2].conj()).re
        - d[0] * a[1][2].norm_sqr()
        - d[1] * a[0][2].norm_sqr()
        - d[2] * a[0][1].norm_sqr();
    det >= -tol2 * scale_of(a)
}

/// Lower-triangular `L` with `L L^H = a` for Hermitian PSD `a`; pivots at
/// or below rounding level are treated as zero.
pub fn cholesky(a: &[[Complex64; 3]; 3]) -> [[Complex64; 3]; 3] {
    let tol = 1e-12 * scale_of(a);
    let zero = Complex64::new(0.0, 0.0);
    let mut l = [[zero; 3]; 3];
    for j in 0..3 {
        let diag = a[j][j].re - (0..j).map(|k| l[j][k].norm_sqr()).sum::<f64>();
        if diag <= tol {
            continue;
        }
        let ljj = diag.sqrt();
        l[j][j] = Complex64::new(ljj, 0.0);
        for i in j + 1..3 {
            let s: Complex64 = (0..j).map(|k| l[i][k] * l[j][k].conj()).sum();
            l[i][j] = (a[i][j] - s) / ljj;
        }
    }
    l
}

/// Draws one pixel: the mean of `looks` outer products `s s^H`, `s = L z`.
fn sample_pixel(l: &[[Complex64; 3]; 3], looks: u32, rng: &mut ChaCha8Rng) -> Coherency {
    let mut t = [[Complex64::new(0.0, 0.0); 3]; 3];
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..looks {
        let z: [Complex64; 3] = std::array::from_fn(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * half, im * half)
        });
        let s: [Complex64; 3] = std::array::from_fn(|i| (0..=i).map(|k| l[i][k] * z[k]).sum());
        for i in 0..3 {
            for j in i..3 {
                t[i][j] += s[i] * s[j].conj();
            }
        }
    }
    let n = f64::from(looks);
    Coherency {
        t11: t[0][0].re / n,
        t22: t[1][1].re / n,
        t33: t[2][2].re / n,
        t12: t[0][1] / n,
        t13: t[0][2] / n,
        t23: t[1][2] / n,
    }
}

/// Samples the scene. Every pixel has its own random stream, so the output
/// does not depend on how the work is scheduled.
pub fn sample_scene(spec: &SceneSpec) -> Result<(CoherencyRaster, LabelMap)> {
    spec.validate()?;
    let factors: Vec<_> = spec.classes.iter().map(|c| cholesky(&c.matrix())).collect();
    let labels = spec.layout_labels();
    let pixels: Vec<Coherency> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            sample_pixel(&factors[usize::from(c) - 1], spec.looks, &mut rng)
        })
        .collect();
    Ok((CoherencyRaster::new(spec.height, spec.width, pixels)?, LabelMap::new(spec.height, spec.width, labels)?))
}
