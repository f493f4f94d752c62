//! Coherency-matrix rasters and their two on-disk formats.
//!
//! `t3-dir`: a directory holding nine little-endian `f32` planes
//! (`T11.bin`, `T22.bin`, `T33.bin`, `T12_real.bin`, `T12_imag.bin`,
//! `T13_real.bin`, `T13_imag.bin`, `T23_real.bin`, `T23_imag.bin`) plus a
//! `config.txt` header in the PolSARpro style:
//!
//! ```text
//! Nrow
//! 128
//! ---------
//! Ncol
//! 128
//! ```
//!
//! `packed`: one file, magic `POLT3\0`, `u32` height, `u32` width, then
//! nine interleaved `f32` per pixel in the plane order above.

use std::fs;
use std::path::Path;

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Plane order shared by both formats.
pub const PLANES: [&str; 9] =
    ["T11", "T22", "T33", "T12_real", "T12_imag", "T13_real", "T13_imag", "T23_real", "T23_imag"];
pub const PACKED_MAGIC: &[u8; 6] = b"POLT3\0";

/// Relative slack allowed on the Hermitian PSD inequalities.
pub const PSD_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterFormat {
    T3Dir,
    Packed,
}

impl RasterFormat {
    /// Directories are read as `t3-dir`, files as `packed`.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            RasterFormat::T3Dir
        } else {
            RasterFormat::Packed
        }
    }
}

/// Upper triangle of one 3x3 coherency matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coherency {
    pub t11: f64,
    pub t22: f64,
    pub t33: f64,
    pub t12: Complex64,
    pub t13: Complex64,
    pub t23: Complex64,
}

impl Coherency {
    pub fn span(&self) -> f64 {
        self.t11 + self.t22 + self.t33
    }

    /// The six upper-triangular entries in row-major order
    /// (T11, T12, T13, T22, T23, T33).
    pub fn upper(&self) -> [Complex64; 6] {
        [
            Complex64::new(self.t11, 0.0),
            self.t12,
            self.t13,
            Complex64::new(self.t22, 0.0),
            self.t23,
            Complex64::new(self.t33, 0.0),
        ]
    }

    /// Diagonal non-negative and every 2x2 principal minor non-negative,
    /// up to [`PSD_SLACK`] relative slack.
    pub fn satisfies_psd_bounds(&self) -> bool {
        let ok = |z: Complex64, a: f64, b: f64| z.norm_sqr() <= a * b * (1.0 + PSD_SLACK) + f64::MIN_POSITIVE;
        self.t11 >= 0.0
            && self.t22 >= 0.0
            && self.t33 >= 0.0
            && ok(self.t12, self.t11, self.t22)
            && ok(self.t13, self.t11, self.t33)
            && ok(self.t23, self.t22, self.t33)
    }

    fn to_f32s(self) -> [f32; 9] {
        [
            self.t11 as f32,
            self.t22 as f32,
            self.t33 as f32,
            self.t12.re as f32,
            self.t12.im as f32,
            self.t13.re as f32,
            self.t13.im as f32,
            self.t23.re as f32,
            self.t23.im as f32,
        ]
    }

    fn from_f32s(v: [f32; 9]) -> Self {
        let f = |i: usize| f64::from(v[i]);
        Coherency {
            t11: f(0),
            t22: f(1),
            t33: f(2),
            t12: Complex64::new(f(3), f(4)),
            t13: Complex64::new(f(5), f(6)),
            t23: Complex64::new(f(7), f(8)),
        }
    }
}

/// Per-pixel coherency matrices in row-major pixel order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherencyRaster {
    height: usize,
    width: usize,
    pixels: Vec<Coherency>,
}

impl CoherencyRaster {
    pub fn new(height: usize, width: usize, pixels: Vec<Coherency>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::shape(format!(
                "raster {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(CoherencyRaster { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[Coherency] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> &Coherency {
        &self.pixels[row * self.width + col]
    }

    /// Clamps negative diagonal entries to zero and returns how many
    /// entries were changed.
    fn clamp_diagonals(&mut self) -> usize {
        let mut clamped = 0;
        for p in &mut self.pixels {
            for v in [&mut p.t11, &mut p.t22, &mut p.t33] {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        clamped
    }

    /// Number of pixels violating the PSD bounds.
    pub fn psd_violations(&self) -> usize {
        self.pixels.iter().filter(|p| !p.satisfies_psd_bounds()).count()
    }
}

/// Result of loading a raster: the data plus how many negative diagonal
/// values were clamped.
#[derive(Clone, Debug)]
pub struct LoadedRaster {
    pub raster: CoherencyRaster,
    pub clamped: usize,
}

pub fn load_coherency(path: &Path, format: RasterFormat) -> Result<LoadedRaster> {
    let mut raster = match format {
        RasterFormat::T3Dir => read_t3_dir(path)?,
        RasterFormat::Packed => read_packed(path)?,
    };
    let clamped = raster.clamp_diagonals();
    if clamped > 0 {
        warn!("{}: clamped {clamped} negative diagonal values to 0", path.display());
    }
    Ok(LoadedRaster { raster, clamped })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
}

fn read_packed(path: &Path) -> Result<CoherencyRaster> {
    let bytes = read_file(path)?;
    if bytes.len() < 14 || &bytes[..6] != PACKED_MAGIC {
        return Err(Error::format(path, "bad magic, expected POLT3"));
    }
    let h = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let body = &bytes[14..];
    if h == 0 || w == 0 || body.len() != h * w * 9 * 4 {
        return Err(Error::format(
            path,
            format!("{h}x{w} raster needs {} data bytes, found {}", h * w * 36, body.len()),
        ));
    }
    let values: Vec<f32> = parse_f32s(body).collect();
    let pixels = values.chunks_exact(9).map(|c| Coherency::from_f32s(c.try_into().expect("9 values"))).collect();
    CoherencyRaster::new(h, w, pixels)
}

pub fn write_packed(raster: &CoherencyRaster, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(14 + raster.len() * 36);
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&(raster.height as u32).to_le_bytes());
    out.extend_from_slice(&(raster.width as u32).to_le_bytes());
    for p in &raster.pixels {
        for v in p.to_f32s() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_config(path: &Path) -> Result<(usize, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let value = |key: &str| -> Result<usize> {
        let at = lines
            .iter()
            .position(|l| l.eq_ignore_ascii_case(key))
            .ok_or_else(|| Error::format(path, format!("missing {key}")))?;
        lines
            .get(at + 1)
            .and_then(|v| v.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| Error::format(path, format!("{key} must be followed by a positive integer")))
    };
    Ok((value("Nrow")?, value("Ncol")?))
}

fn read_t3_dir(dir: &Path) -> Result<CoherencyRaster> {
    let (h, w) = parse_config(&dir.join("config.txt"))?;
    let n = h * w;
    let mut planes = Vec::with_capacity(9);
    for name in PLANES {
        let path = dir.join(format!("{name}.bin"));
        if !path.exists() {
            return Err(Error::format(&path, format!("missing plane {name}")));
        }
        let bytes = read_file(&path)?;
        if bytes.len() != n * 4 {
            return Err(Error::format(
                &path,
                format!("plane {name} has {} bytes, expected {} for {h}x{w}", bytes.len(), n * 4),
            ));
        }
        planes.push(parse_f32s(&bytes).collect::<Vec<f32>>());
    }
    let pixels = (0..n).map(|i| Coherency::from_f32s(std::array::from_fn(|k| planes[k][i]))).collect();
    CoherencyRaster::new(h, w, pixels)
}

pub fn write_t3_dir(raster: &CoherencyRaster, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = format!(
        "Nrow\n{}\n---------\nNcol\n{}\n---------\nPolarCase\nmonostatic\n---------\nPolarType\nfull\n",
        raster.height, raster.width
    );
    let cpath = dir.join("config.txt");
    fs::write(&cpath, config).map_err(|e| Error::io(&cpath, e))?;
    for (k, name) in PLANES.iter().enumerate() {
        let mut bytes = Vec::with_capacity(raster.len() * 4);
        for p in &raster.pixels {
            bytes.extend_from_slice(&p.to_f32s()[k].to_le_bytes());
        }
        let path = dir.join(format!("{name}.bin"));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
