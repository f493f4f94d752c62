mod oracles;

use std::fs;
use std::path::Path;

use ddf2pol::polsar::{
    compute_descriptors, extract_patches, load_coherency, pauli_rgb, pixel_descriptors, render_pauli,
    samples_per_class, stratified_split, write_packed, write_t3_dir, Coherency, CoherencyRaster, LabelMap, NormStats,
    NormalizedScene, RasterFormat, SplitTag, NUM_COMPLEX, NUM_DESCRIPTORS, PLANES, SPAN_DB_FLOOR,
};
use ddf2pol::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn from_full(t: &[[Complex64; 3]; 3]) -> Coherency {
    Coherency { t11: t[0][0].re, t22: t[1][1].re, t33: t[2][2].re, t12: t[0][1], t13: t[0][2], t23: t[1][2] }
}

/// Raster whose values are exactly representable as f32.
fn dyadic_raster(h: usize, w: usize, seed: u64) -> CoherencyRaster {
    let mut r = oracles::rng(seed);
    let mut q = || f64::from(r.gen_range(-64i32..64)) / 16.0;
    let pixels = (0..h * w)
        .map(|_| Coherency {
            t11: q().abs() + 1.0,
            t22: q().abs() + 1.0,
            t33: q().abs() + 1.0,
            t12: c(q() / 8.0, q() / 8.0),
            t13: c(q() / 8.0, q() / 8.0),
            t23: c(q() / 8.0, q() / 8.0),
        })
        .collect();
    CoherencyRaster::new(h, w, pixels).unwrap()
}

fn write_packed_by_hand(path: &Path, h: u32, w: u32, pixels: &[[f32; 9]]) {
    let mut bytes = b"POLT3\0".to_vec();
    bytes.extend(h.to_le_bytes());
    bytes.extend(w.to_le_bytes());
    for p in pixels {
        for v in p {
            bytes.extend(v.to_le_bytes());
        }
    }
    fs::write(path, bytes).unwrap();
}

// ------------------------------------------------------------------ raster

#[test]
fn packed_single_pixel_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.polt3");
    write_packed_by_hand(&path, 1, 1, &[[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
    assert_eq!(RasterFormat::detect(&path), RasterFormat::Packed);
    let loaded = load_coherency(&path, RasterFormat::Packed).unwrap();
    assert_eq!(loaded.clamped, 0);
    let px = *loaded.raster.get(0, 0);
    assert_eq!(px.span(), 1.0);
    let (d, _) = pixel_descriptors(&px);
    assert_eq!(d[0], 1.0);
    assert_eq!(d[6], 0.0);
}

#[test]
fn packed_layout_is_pixel_interleaved() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.polt3");
    let a = [1.0, 2.0, 3.0, 0.5, -0.5, 0.25, 0.0, 0.0, 0.125];
    let b = [4.0, 5.0, 6.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0];
    write_packed_by_hand(&path, 1, 2, &[a, b]);
    let r = load_coherency(&path, RasterFormat::Packed).unwrap().raster;
    assert_eq!((r.height(), r.width()), (1, 2));
    let q = r.get(0, 1);
    assert_eq!((q.t11, q.t22, q.t33), (4.0, 5.0, 6.0));
    assert_eq!(q.t13, c(1.0, -1.0));
    assert_eq!(r.get(0, 0).t12, c(0.5, -0.5));
    assert_eq!(r.get(0, 0).t23, c(0.0, 0.125));
}

#[test]
fn packed_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.polt3");
    fs::write(&path, b"NOTPOLT3.........").unwrap();
    assert!(matches!(load_coherency(&path, RasterFormat::Packed), Err(Error::Format { .. })));
    write_packed_by_hand(&path, 2, 2, &[[1.0; 9]; 3]);
    let err = load_coherency(&path, RasterFormat::Packed).unwrap_err();
    assert!(err.to_string().contains("bad.polt3"), "{err}");
}

#[test]
fn both_formats_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let raster = dyadic_raster(5, 7, 3);
    let packed = dir.path().join("r.polt3");
    write_packed(&raster, &packed).unwrap();
    assert_eq!(load_coherency(&packed, RasterFormat::Packed).unwrap().raster, raster);

    let t3 = dir.path().join("T3");
    write_t3_dir(&raster, &t3).unwrap();
    assert_eq!(RasterFormat::detect(&t3), RasterFormat::T3Dir);
    for name in PLANES {
        assert_eq!(fs::metadata(t3.join(format!("{name}.bin"))).unwrap().len(), 5 * 7 * 4);
    }
    let config = fs::read_to_string(t3.join("config.txt")).unwrap();
    assert!(config.starts_with("Nrow\n5\n---------\nNcol\n7\n"));
    assert_eq!(load_coherency(&t3, RasterFormat::T3Dir).unwrap().raster, raster);
}

#[test]
fn t3_plane_of_wrong_size_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let t3 = dir.path().join("T3");
    write_t3_dir(&dyadic_raster(4, 4, 1), &t3).unwrap();
    fs::write(t3.join("T22.bin"), [0u8; 20]).unwrap();
    let err = load_coherency(&t3, RasterFormat::T3Dir).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    let msg = err.to_string();
    assert!(msg.contains("T22"), "{msg}");

    fs::remove_file(t3.join("T33.bin")).unwrap();
    fs::write(t3.join("T22.bin"), [0u8; 64]).unwrap();
    assert!(load_coherency(&t3, RasterFormat::T3Dir).unwrap_err().to_string().contains("T33"));
}

#[test]
fn negative_diagonals_are_clamped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.polt3");
    let mut a = [0.0f32; 9];
    a[0] = 1.0;
    a[1] = -1e-6;
    let mut b = [0.0f32; 9];
    b[2] = -2.0;
    write_packed_by_hand(&path, 1, 2, &[a, b]);
    let loaded = load_coherency(&path, RasterFormat::Packed).unwrap();
    assert_eq!(loaded.clamped, 2);
    assert_eq!(loaded.raster.get(0, 0).t22, 0.0);
    assert_eq!(loaded.raster.get(0, 1).t33, 0.0);
}

// ------------------------------------------------------------- descriptors

#[test]
fn descriptor_examples() {
    let t = Coherency { t11: 2.0, t22: 1.0, t33: 1.0, t12: c(0.6, 0.8), ..Default::default() };
    let (d, degenerate) = pixel_descriptors(&t);
    assert!(!degenerate);
    assert_eq!(d[1], 1.0);
    assert!((d[6] - 10.0 * 4f64.log10()).abs() < 1e-12);
    assert_eq!((d[7], d[8]), (0.25, 0.25));
    assert!((d[9] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    assert_eq!((d[10], d[11]), (0.0, 0.0));

    let (zero, degenerate) = pixel_descriptors(&Coherency::default());
    assert!(degenerate);
    assert_eq!(zero[6], SPAN_DB_FLOOR);
    assert!(zero.iter().all(|v| v.is_finite()));
}

#[test]
fn descriptors_match_oracle_and_bounds_on_many_psd_pixels() {
    let mut r = oracles::rng(2024);
    let mut worst: f64 = 0.0;
    for i in 0..12_000 {
        let rank = 1 + i % 3;
        let scale = 10f64.powi(r.gen_range(-3..=3));
        let full = oracles::random_psd(&mut r, rank, scale);
        let (d, _) = pixel_descriptors(&from_full(&full));
        let want = oracles::table1(&full);
        for k in 0..NUM_DESCRIPTORS {
            let err = (d[k] - want[k]).abs() / want[k].abs().max(1.0);
            worst = worst.max(err);
        }
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(d[..6].iter().all(|&v| v >= 0.0));
        assert!((0.0..=1.0).contains(&d[7]) && (0.0..=1.0).contains(&d[8]));
        assert!(d[7] + d[8] <= 1.0 + 1e-12);
        for coh in &d[9..] {
            assert!((0.0..=1.0 + 1e-9).contains(coh), "coherence {coh} at pixel {i}");
        }
    }
    assert!(worst <= 1e-12, "max relative error {worst}");
}

proptest! {
    #[test]
    fn descriptors_are_scale_covariant(seed in 0u64..100_000, exp in -4i32..4) {
        let mut r = oracles::rng(seed);
        let full = oracles::random_psd(&mut r, 3, 1.0);
        let t = from_full(&full);
        let s = 10f64.powi(exp);
        let scaled = Coherency {
            t11: t.t11 * s, t22: t.t22 * s, t33: t.t33 * s,
            t12: t.t12 * s, t13: t.t13 * s, t23: t.t23 * s,
        };
        let (a, _) = pixel_descriptors(&t);
        let (b, _) = pixel_descriptors(&scaled);
        prop_assert!((b[6] - a[6] - 10.0 * f64::from(exp)).abs() < 1e-9);
        for k in 7..12 {
            prop_assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn descriptor_stack_is_pixel_major() {
    let raster = dyadic_raster(3, 4, 8);
    let stack = compute_descriptors(&raster);
    assert_eq!(stack.values.len(), 12 * NUM_DESCRIPTORS);
    assert_eq!(stack.degenerate, 0);
    for (i, px) in raster.pixels().iter().enumerate() {
        assert_eq!(stack.pixel(i), &pixel_descriptors(px).0);
    }
}

// ------------------------------------------------------------------ labels

#[test]
fn label_maps_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let map = LabelMap::new(3, 4, vec![0, 1, 2, 3, 3, 2, 1, 0, 1, 1, 2, 2]).unwrap();
    let png = dir.path().join("l.png");
    let raw = dir.path().join("l.raw");
    map.save_png(&png).unwrap();
    map.save_raw(&raw).unwrap();
    assert_eq!(LabelMap::load(&png).unwrap(), map);
    assert_eq!(LabelMap::load(&raw).unwrap(), map);
    assert_eq!(map.class_counts(3), vec![4, 4, 2]);
    assert_eq!(map.labeled(), 10);
    assert_eq!(map.max_class(), 3);

    let err = LabelMap::load(&dir.path().join("nope.png")).unwrap_err();
    assert!(err.to_string().contains("nope.png"));
    assert!(matches!(err, Error::Io { .. }));
}

// ------------------------------------------------------------------- split

fn striped_labels(h: usize, w: usize, k: usize) -> LabelMap {
    let data = (0..h * w).map(|i| if i % 7 == 0 { 0 } else { (1 + (i % w) * k / w) as u8 }).collect();
    LabelMap::new(h, w, data).unwrap()
}

#[test]
fn per_class_sample_count_examples() {
    assert_eq!(samples_per_class(207_762, 15, 0.01), 138);
    assert_eq!(samples_per_class(16_384, 3, 0.01), 54);
    assert_eq!(samples_per_class(99, 3, 0.01), 1);
}

#[test]
fn split_is_a_stratified_partition() {
    let labels = striped_labels(40, 30, 3);
    let s = stratified_split(&labels, 3, 0.05, 9).unwrap();
    assert_eq!(s.per_class, samples_per_class(labels.labeled(), 3, 0.05));
    assert_eq!(s.train.len(), 3 * s.per_class);
    for (c, chunk) in s.train.chunks(s.per_class).enumerate() {
        assert!(chunk.iter().all(|&p| usize::from(labels.data[p]) == c + 1));
        assert!(chunk.windows(2).all(|w| w[0] < w[1]));
    }
    let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
    all.sort_unstable();
    let labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels.data[i] != 0).collect();
    assert_eq!(all, labeled);

    assert_eq!(stratified_split(&labels, 3, 0.05, 9).unwrap(), s);
    assert_ne!(stratified_split(&labels, 3, 0.05, 10).unwrap().train, s.train);
}

#[test]
fn small_classes_contribute_everything_they_have() {
    let mut data = vec![1u8; 400];
    data[10] = 2;
    data[20] = 2;
    let labels = LabelMap::new(20, 20, data).unwrap();
    let s = stratified_split(&labels, 2, 0.1, 0).unwrap();
    assert_eq!(s.per_class, 20);
    assert_eq!(s.train.len(), 22);
    assert!(s.train.contains(&10) && s.train.contains(&20));
}

#[test]
fn split_errors() {
    let labels = LabelMap::new(1, 4, vec![1, 1, 3, 0]).unwrap();
    assert!(matches!(stratified_split(&labels, 2, 0.5, 0), Err(Error::Data(_))));
    let err = stratified_split(&labels, 3, 0.5, 0).unwrap_err();
    assert!(err.to_string().contains("class 2"));
    assert!(matches!(stratified_split(&labels, 3, 1.5, 0), Err(Error::Usage(_))));
}

// ----------------------------------------------------------------- patches

#[test]
fn constant_scene_normalizes_to_zero_descriptors() {
    let px = Coherency { t11: 2.0, t22: 1.0, t33: 0.5, t12: c(0.1, 0.2), ..Default::default() };
    let raster = CoherencyRaster::new(6, 6, vec![px; 36]).unwrap();
    let desc = compute_descriptors(&raster);
    let labels = LabelMap::new(6, 6, vec![1; 36]).unwrap();
    let ds = extract_patches(&desc, &raster, &labels, &[0, 14, 35], 5, None, SplitTag::Train, 0).unwrap();
    assert!(ds.real.iter().all(|&v| v.abs() < 1e-12));
    assert_eq!(ds.stats.descriptor_std, [1.0; NUM_DESCRIPTORS]);
    // complex planes are divided by their mean magnitude; zero planes by 1
    for k in 0..ds.re.len() / NUM_COMPLEX {
        let re = &ds.re[k * NUM_COMPLEX..(k + 1) * NUM_COMPLEX];
        let want = [1.0, 0.1 / 0.05f64.sqrt(), 0.0, 1.0, 0.0, 1.0];
        assert!(re.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15), "{re:?}");
    }
    assert_eq!(ds.labels, vec![0, 0, 0]);
}

#[test]
fn patches_are_windows_with_edge_replication() {
    let raster = dyadic_raster(8, 9, 4);
    let desc = compute_descriptors(&raster);
    let stats = NormStats::fit(&desc, &raster, &[0, 5, 40, 71]).unwrap();
    let scene = NormalizedScene::new(&desc, &raster, &stats).unwrap();
    let p = 5;
    let (real, re, im) = scene.batch(&[4 * 9 + 4, 0], p).unwrap();
    assert_eq!(real.dims(), &[2, p, p, NUM_DESCRIPTORS, 1]);
    assert_eq!(re.dims(), &[2, p, p, NUM_COMPLEX, 1]);
    let at = |t: &ddf2pol::tensor::Tensor, depth: usize, b: usize, i: usize, j: usize| {
        let o = ((b * p + i) * p + j) * depth;
        t.data()[o..o + depth].to_vec()
    };
    let src_real = |pix: usize| scene.real[pix * NUM_DESCRIPTORS..(pix + 1) * NUM_DESCRIPTORS].to_vec();
    let src_im = |pix: usize| scene.im[pix * NUM_COMPLEX..(pix + 1) * NUM_COMPLEX].to_vec();
    // interior pixel (4, 4): exact neighbourhood, centre at (2, 2)
    for i in 0..p {
        for j in 0..p {
            let src = (4 + i - 2) * 9 + (4 + j - 2);
            assert_eq!(at(&real, NUM_DESCRIPTORS, 0, i, j), src_real(src));
            assert_eq!(at(&im, NUM_COMPLEX, 0, i, j), src_im(src));
        }
    }
    // corner pixel: rows and columns before the border repeat the edge
    for i in 0..p {
        for j in 0..p {
            let src = i.saturating_sub(2) * 9 + j.saturating_sub(2);
            assert_eq!(at(&real, NUM_DESCRIPTORS, 1, i, j), src_real(src));
        }
    }
}

#[test]
fn normalization_statistics_come_from_the_given_pixels() {
    let mut r = oracles::rng(77);
    let pixels: Vec<Coherency> = (0..400).map(|_| from_full(&oracles::random_psd(&mut r, 3, 1.0))).collect();
    let raster = CoherencyRaster::new(20, 20, pixels).unwrap();
    let desc = compute_descriptors(&raster);
    let train: Vec<usize> = (0..400).step_by(3).collect();
    let stats = NormStats::fit(&desc, &raster, &train).unwrap();

    let n = train.len() as f64;
    for k in 0..NUM_DESCRIPTORS {
        let vals: Vec<f64> = train.iter().map(|&p| desc.pixel(p)[k]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((stats.descriptor_mean[k] - mean).abs() < 1e-12);
        assert!((stats.descriptor_std[k] - sd).abs() < 1e-12);
    }

    let labels = LabelMap::new(20, 20, vec![1; 400]).unwrap();
    let ds = extract_patches(&desc, &raster, &labels, &train, 5, Some(&stats), SplitTag::Test, 0).unwrap();
    assert_eq!(ds.stats, stats);
    // centre taps of the training patches are standardized exactly
    let centre = (2 * 5 + 2) * NUM_DESCRIPTORS;
    let per = 25 * NUM_DESCRIPTORS;
    for k in 0..NUM_DESCRIPTORS {
        let vals: Vec<f64> = (0..train.len()).map(|b| ds.real[b * per + centre + k]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "feature {k}: mean {mean}");
        assert!((var - 1.0).abs() < 1e-9, "feature {k}: var {var}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stats.toml");
    stats.save(&path).unwrap();
    assert_eq!(NormStats::load(&path).unwrap(), stats);
}

#[test]
fn patch_extraction_rejects_bad_inputs() {
    let raster = dyadic_raster(4, 4, 0);
    let desc = compute_descriptors(&raster);
    let labels = LabelMap::new(4, 4, vec![0; 16]).unwrap();
    assert!(matches!(extract_patches(&desc, &raster, &labels, &[3], 5, None, SplitTag::Train, 0), Err(Error::Data(_))));
    let small = LabelMap::new(2, 2, vec![1; 4]).unwrap();
    assert!(extract_patches(&desc, &raster, &small, &[0], 5, None, SplitTag::Train, 0).is_err());
}

// ------------------------------------------------------------------- pauli

#[test]
fn pauli_colours() {
    let only_t11 = Coherency { t11: 4.0, ..Default::default() };
    let zero = Coherency::default();
    let raster = CoherencyRaster::new(1, 2, vec![only_t11, zero]).unwrap();
    let rgb = pauli_rgb(&raster);
    assert_eq!(rgb[0], [0, 0, 255]);
    assert_eq!(rgb[1], [0, 0, 0]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.png");
    let big = dyadic_raster(6, 11, 2);
    render_pauli(&big, &path).unwrap();
    let img = image::open(&path).unwrap().into_rgb8();
    assert_eq!(img.dimensions(), (11, 6));
    assert_eq!(img.get_pixel(3, 2).0, pauli_rgb(&big)[2 * 11 + 3]);
}
