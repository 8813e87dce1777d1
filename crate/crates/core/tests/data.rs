use std::fs;

use odcsa::data::{
    decode, encode_pgm, load_dataset, multiscale_pick, read_gray, read_image, read_mask, resize_sample, save_dataset,
    synth_generate, write_pgm, Sample, SynthConfig,
};
use odcsa::rng::Prng;
use odcsa::{Error, Shape, Tensor4};
use proptest::prelude::*;

fn pgm_bytes(w: usize, h: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

#[test]
fn all_white_pgm_is_full_mask() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.pgm");
    fs::write(&p, pgm_bytes(3, 2, &[255; 6])).unwrap();
    let m = read_mask(&p).unwrap();
    assert_eq!(m.shape(), Shape::new(1, 1, 2, 3));
    assert!(m.data().iter().all(|&v| v == 1.0));
}

#[test]
fn mask_threshold_at_128() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.pgm");
    fs::write(&p, pgm_bytes(4, 1, &[0, 127, 128, 200])).unwrap();
    assert_eq!(read_mask(&p).unwrap().data(), &[0.0, 0.0, 1.0, 1.0]);
    fs::write(&p, b"P2\n2 1\n1\n0 1\n").unwrap();
    assert_eq!(read_mask(&p).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn red_ppm_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("i.ppm");
    fs::write(&p, b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
    let img = read_image(&p).unwrap();
    assert_eq!(img.data(), &[1.0, 0.0, 0.0]);
    assert!(read_mask(&p).is_err(), "colour file is not a mask");
}

#[test]
fn io_failures_name_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.pgm");
    fs::write(&p, b"P5\n8 8\n255\n\x00\x01").unwrap();
    let e = read_gray(&p).unwrap_err();
    assert!(matches!(e, Error::Netpbm { offset: 13, .. }), "{e:?}");
    assert!(e.to_string().contains("byte 13"), "{e}");
    fs::write(&p, b"BM\x00\x00").unwrap();
    assert!(matches!(read_gray(&p).unwrap_err(), Error::Netpbm { offset: 0, .. }));
    assert!(read_gray(&dir.path().join("missing.pgm")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eight_bit_pgm_round_trips(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let mut prng = Prng::new(seed);
        let data: Vec<u8> = (0..w * h).map(|_| prng.below(256) as u8).collect();
        let bytes = pgm_bytes(w, h, &data);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, &bytes).unwrap();
        let map = read_gray(&p).unwrap();
        let q = dir.path().join("b.pgm");
        write_pgm(&map, &q).unwrap();
        prop_assert_eq!(fs::read(&q).unwrap(), bytes);
    }

    #[test]
    fn quantisation_error_bound(values in proptest::collection::vec(0.0f64..=1.0, 1..64)) {
        let n = values.len();
        let map = Tensor4::from_vec(Shape::new(1, 1, 1, n), values.clone()).unwrap();
        let r = decode(&encode_pgm(&map).unwrap(), "mem").unwrap();
        for (v, b) in values.iter().zip(&r.data) {
            prop_assert!((v - *b as f64 / 255.0).abs() <= 1.0 / 510.0 + 1e-15);
        }
    }
}

#[test]
fn out_of_range_probability_rejected() {
    let map = Tensor4::from_vec(Shape::new(1, 1, 1, 2), vec![0.2, 1.5]).unwrap();
    assert!(encode_pgm(&map).unwrap_err().to_string().contains("outside [0, 1]"));
}

fn sample_of(image: Tensor4, mask: Tensor4) -> Sample {
    Sample::new(image, mask, "s").unwrap()
}

#[test]
fn resize_preserves_constants_and_binary_masks() {
    let img = Tensor4::full(Shape::new(1, 3, 64, 64), 0.3);
    let mask = Tensor4::from_fn(Shape::new(1, 1, 64, 64), |_, _, y, x| {
        ((x + 2 * y) % 7 < 3) as u8 as f64
    });
    let s = sample_of(img.clone(), mask);
    for size in [32, 96, 352] {
        let r = resize_sample(&s, size).unwrap();
        assert_eq!(r.image.shape(), Shape::new(1, 3, size, size));
        assert!(r.image.data().iter().all(|&v| v == 0.3));
        assert!(r.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let back = resize_sample(&r, 64).unwrap();
        assert_eq!(back.image, img);
    }
}

#[test]
fn multiscale_frequencies() {
    let mut prng = Prng::new(11);
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..3000 {
        *counts.entry(multiscale_pick(&mut prng, 352)).or_insert(0usize) += 1;
    }
    assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![256, 352, 448]);
    for (&size, &c) in &counts {
        let f = c as f64 / 3000.0;
        assert!((f - 1.0 / 3.0).abs() <= 0.03, "{size}: {f}");
    }
    let mut prng = Prng::new(12);
    let small: std::collections::BTreeSet<usize> = (0..300).map(|_| multiscale_pick(&mut prng, 64)).collect();
    assert_eq!(small.into_iter().collect::<Vec<_>>(), vec![32, 64, 96]);
}

fn cfg(count: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        count,
        size: 64,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn synth_is_deterministic() {
    let a = synth_generate(&cfg(6, 5)).unwrap();
    let b = synth_generate(&cfg(6, 5)).unwrap();
    assert_eq!(a, b);
    let c = synth_generate(&cfg(6, 6)).unwrap();
    assert_ne!(a.samples[0].image, c.samples[0].image);
}

#[test]
fn synth_masks_binary_nonempty_and_rotated_pairs_exact() {
    let d = synth_generate(&cfg(16, 1)).unwrap();
    assert_eq!(d.samples.len(), 16);
    for (s, r) in d.samples.iter().zip(&d.rotated) {
        assert!(s.mask.sum() >= 1.0, "{} empty", s.id);
        assert!(s.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(r.mask, s.mask.rot90());
        assert_eq!(r.image, s.image.rot90());
        assert_eq!(r.id, format!("{}_rot", s.id));
        // foreground is brighter than background on average
        let fg: f64 = (0..64 * 64)
            .filter(|&i| s.mask.data()[i] == 1.0)
            .map(|i| s.image.data()[i])
            .sum::<f64>()
            / s.mask.sum();
        let bg: f64 = (0..64 * 64)
            .filter(|&i| s.mask.data()[i] == 0.0)
            .map(|i| s.image.data()[i])
            .sum::<f64>()
            / (64.0 * 64.0 - s.mask.sum());
        assert!(fg > bg + 0.05, "{}: fg {fg} bg {bg}", s.id);
    }
}

#[test]
fn synth_foreground_fraction_spans_scale_range() {
    for seed in [0, 1, 2, 3] {
        let d = synth_generate(&cfg(64, seed)).unwrap();
        let fractions: Vec<f64> = d.samples.iter().map(|s| s.mask.sum() / (64.0 * 64.0)).collect();
        let lo = fractions.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fractions.iter().copied().fold(0.0, f64::max);
        assert!(lo <= 0.005 && hi >= 0.35, "seed {seed}: [{lo}, {hi}]");
    }
}

#[test]
fn dataset_directory_round_trip() {
    let d = synth_generate(&cfg(4, 9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &d.samples).unwrap();
    assert!(dir.path().join("images/synth_0000.ppm").exists());
    assert!(dir.path().join("masks/synth_0003.pgm").exists());
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded, d.samples);

    fs::remove_file(dir.path().join("masks/synth_0002.pgm")).unwrap();
    let e = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(e.contains("synth_0002.pgm"), "{e}");
}
