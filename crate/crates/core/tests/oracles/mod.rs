//! Independent reference implementations used by the integration tests.
//! Each one is a direct loop-level transcription with no shared code
//! paths with the library kernels.
#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Valid-spatial, same-depth 3x3x3 convolution, generic over the scalar.
pub fn conv3d_generic<T>(x: &[T], dims: [usize; 5], kernel: &[T], cout: usize, bias: &[T], zero: T) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    let [b, h, w, d, cin] = dims;
    let (ho, wo) = (h - 2, w - 2);
    let xi = |n: usize, i: usize, j: usize, z: usize, c: usize| (((n * h + i) * w + j) * d + z) * cin + c;
    let ki = |a: usize, bb: usize, z: usize, c: usize, o: usize| ((((a * 3 + bb) * 3 + z) * cin + c) * cout) + o;
    let mut out = Vec::with_capacity(b * ho * wo * d * cout);
    for n in 0..b {
        for i in 0..ho {
            for j in 0..wo {
                for z in 0..d {
                    for o in 0..cout {
                        let mut acc = bias[o];
                        for a in 0..3 {
                            for bb in 0..3 {
                                for kz in 0..3 {
                                    let zz = z as isize + kz as isize - 1;
                                    if zz < 0 || zz >= d as isize {
                                        continue;
                                    }
                                    for c in 0..cin {
                                        let v = x[xi(n, i + a, j + bb, zz as usize, c)];
                                        acc = acc + v * kernel[ki(a, bb, kz, c, o)];
                                    }
                                }
                            }
                        }
                        let _ = zero;
                        out.push(acc);
                    }
                }
            }
        }
    }
    out
}

pub fn conv3d(x: &[f64], dims: [usize; 5], kernel: &[f64], cout: usize, bias: &[f64]) -> Vec<f64> {
    conv3d_generic(x, dims, kernel, cout, bias, 0.0)
}

/// Scalar complex-arithmetic convolution.
pub fn complex_conv3d(
    x: &[Complex64],
    dims: [usize; 5],
    kernel: &[Complex64],
    cout: usize,
    bias: &[Complex64],
) -> Vec<Complex64> {
    conv3d_generic(x, dims, kernel, cout, bias, Complex64::new(0.0, 0.0))
}

/// Zero-padded per-channel 3x3 convolution.
pub fn depthwise(x: &[f64], dims: [usize; 4], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let [b, h, w, c] = dims;
    let mut out = vec![0.0; x.len()];
    for n in 0..b {
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let mut acc = bias[ch];
                    for a in 0..3 {
                        for bb in 0..3 {
                            let (ii, jj) = (i as isize + a as isize - 1, j as isize + bb as isize - 1);
                            if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                continue;
                            }
                            acc +=
                                x[((n * h + ii as usize) * w + jj as usize) * c + ch] * kernel[(a * 3 + bb) * c + ch];
                        }
                    }
                    out[((n * h + i) * w + j) * c + ch] = acc;
                }
            }
        }
    }
    out
}

/// Coordinate-attention parameters in plain arrays.
pub struct CaParams<'a> {
    pub fs_w: &'a [f64],
    pub fs_b: &'a [f64],
    pub gamma: &'a [f64],
    pub beta: &'a [f64],
    pub fh_w: &'a [f64],
    pub fh_b: &'a [f64],
    pub fw_w: &'a [f64],
    pub fw_b: &'a [f64],
    pub m: usize,
    /// `Some((mean, var))` selects inference with running statistics.
    pub running: Option<(&'a [f64], &'a [f64])>,
    pub eps: f64,
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight-line coordinate attention:
/// directional average pooling, shared 1x1 transform, batch norm, ReLU,
/// per-direction 1x1 transforms with sigmoid, and the product of both gates.
pub fn coordinate_attention(x: &[f64], dims: [usize; 4], p: &CaParams<'_>) -> Vec<f64> {
    let [b, h, w, c] = dims;
    let m = p.m;
    let at = |n: usize, i: usize, j: usize, ch: usize| x[((n * h + i) * w + j) * c + ch];
    // pooled rows: for each sample, h rows then w rows
    let rows = b * (h + w);
    let mut z = vec![vec![0.0; c]; rows];
    for n in 0..b {
        for i in 0..h {
            for ch in 0..c {
                let s: f64 = (0..w).map(|j| at(n, i, j, ch)).sum();
                z[n * (h + w) + i][ch] = s / w as f64;
            }
        }
        for j in 0..w {
            for ch in 0..c {
                let s: f64 = (0..h).map(|i| at(n, i, j, ch)).sum();
                z[n * (h + w) + h + j][ch] = s / h as f64;
            }
        }
    }
    let mut f = vec![vec![0.0; m]; rows];
    for r in 0..rows {
        for k in 0..m {
            f[r][k] = p.fs_b[k] + (0..c).map(|ch| z[r][ch] * p.fs_w[ch * m + k]).sum::<f64>();
        }
    }
    for k in 0..m {
        let (mean, var) = match p.running {
            Some((rm, rv)) => (rm[k], rv[k]),
            None => {
                let mean = (0..rows).map(|r| f[r][k]).sum::<f64>() / rows as f64;
                let var = (0..rows).map(|r| (f[r][k] - mean).powi(2)).sum::<f64>() / rows as f64;
                (mean, var)
            }
        };
        for row in f.iter_mut() {
            let v = (row[k] - mean) / (var + p.eps).sqrt() * p.gamma[k] + p.beta[k];
            row[k] = v.max(0.0);
        }
    }
    let mut out = vec![0.0; x.len()];
    for n in 0..b {
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let fh = &f[n * (h + w) + i];
                    let fw = &f[n * (h + w) + h + j];
                    let gh = sig(p.fh_b[ch] + (0..m).map(|k| fh[k] * p.fh_w[k * c + ch]).sum::<f64>());
                    let gw = sig(p.fw_b[ch] + (0..m).map(|k| fw[k] * p.fw_w[k * c + ch]).sum::<f64>());
                    out[((n * h + i) * w + j) * c + ch] = at(n, i, j, ch) * gh * gw;
                }
            }
        }
    }
    out
}

/// (oa, aa, kappa, per-class) by explicit loops over a row-major matrix.
pub fn metrics(k: usize, cm: &[u64]) -> (f64, f64, f64, Vec<f64>) {
    let mut total = 0.0;
    let mut diag = 0.0;
    let mut rows = vec![0.0; k];
    let mut cols = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            let v = cm[i * k + j] as f64;
            total += v;
            rows[i] += v;
            cols[j] += v;
            if i == j {
                diag += v;
            }
        }
    }
    let per: Vec<f64> = (0..k).map(|i| cm[i * k + i] as f64 / rows[i]).collect();
    let oa = diag / total;
    let aa = per.iter().sum::<f64>() / k as f64;
    let mut pe = 0.0;
    for i in 0..k {
        pe += rows[i] * cols[i];
    }
    pe /= total * total;
    (oa, aa, (oa - pe) / (1.0 - pe), per)
}

/// Full Hermitian matrix from a Gram product `A A^H`, A of shape 3 x rank.
pub fn random_psd(rng: &mut ChaCha8Rng, rank: usize, scale: f64) -> [[Complex64; 3]; 3] {
    let a: Vec<[Complex64; 3]> = (0..rank)
        .map(|_| std::array::from_fn(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale))
        .collect();
    let mut t = [[Complex64::new(0.0, 0.0); 3]; 3];
    for col in &a {
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] += col[i] * col[j].conj();
            }
        }
    }
    t
}

/// The twelve real features written from the full matrix.
pub fn table1(t: &[[Complex64; 3]; 3]) -> [f64; 12] {
    let span = t[0][0].re + t[1][1].re + t[2][2].re;
    let coh = |i: usize, j: usize| {
        let d = (t[i][i].re * t[j][j].re).sqrt();
        if d > 0.0 {
            t[i][j].norm() / d
        } else {
            0.0
        }
    };
    let (p, r2, r3) =
        if span > 1e-12 { (10.0 * span.log10(), t[1][1].re / span, t[2][2].re / span) } else { (-120.0, 0.0, 0.0) };
    [
        t[0][0].norm(),
        t[0][1].norm(),
        t[0][2].norm(),
        t[1][1].norm(),
        t[1][2].norm(),
        t[2][2].norm(),
        p,
        r2,
        r3,
        coh(0, 1),
        coh(0, 2),
        coh(1, 2),
    ]
}
