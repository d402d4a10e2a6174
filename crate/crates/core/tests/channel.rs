mod common;

use common::{dense, effective_by_terms};
use rand::Rng;
use secirs::channel::{
    cascade, complex_gaussian, derive_seed, read_dataset, rng_from_seed, sample_large_scale, sample_legit,
    sample_wiretap, write_dataset, Dataset, LARGE_SCALE_FLOOR,
};
use secirs::SystemParams;

#[test]
fn complex_gaussian_moments() {
    let mut rng = rng_from_seed(42);
    let n = 200_000;
    let (mut re, mut im, mut re2, mut im2, mut cross) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let z = complex_gaussian(&mut rng);
        re += z.re;
        im += z.im;
        re2 += z.re * z.re;
        im2 += z.im * z.im;
        cross += z.re * z.im;
    }
    let n = n as f64;
    assert!((re / n).abs() < 0.01 && (im / n).abs() < 0.01);
    assert!((re2 / n - 0.5).abs() < 0.01, "real variance {}", re2 / n);
    assert!((im2 / n - 0.5).abs() < 0.01, "imaginary variance {}", im2 / n);
    assert!((cross / n).abs() < 0.01);
}

#[test]
fn large_scale_draws_are_uniform_and_clamped() {
    let n = 100_000;
    let mut sum = 0.0;
    for i in 0..n {
        let (d, r) = sample_large_scale(derive_seed(3, 0, i));
        assert!(d > LARGE_SCALE_FLOOR && d < 1.0 && r > LARGE_SCALE_FLOOR && r < 1.0);
        sum += d;
    }
    let mean = sum / n as f64;
    assert!((0.495..=0.505).contains(&mean), "mean {mean}");
    assert_eq!(sample_large_scale(5), sample_large_scale(5));
}

#[test]
fn wiretap_scaling_moments() {
    let p = SystemParams::reference(4).with_large_scale(0.3, 0.8);
    let mut sum_e = 0.0;
    let mut sum_g = 0.0;
    let n = 20_000;
    for i in 0..n {
        let draw = sample_wiretap(&p, derive_seed(8, 1, i));
        sum_e += draw.h_e(&p).data().iter().map(|z| z.norm_sqr()).sum::<f64>() / 8.0;
        sum_g += draw.g_e(&p).data().iter().map(|z| z.norm_sqr()).sum::<f64>() / 8.0;
    }
    assert!((sum_e / n as f64 - 0.09).abs() < 0.09 * 0.03);
    assert!((sum_g / n as f64 - 0.64).abs() < 0.64 * 0.03);
}

#[test]
fn cascade_matches_rank_one_sum() {
    let mut rng = rng_from_seed(17);
    for k in 0..1000 {
        let n_s = rng.gen_range(0..20);
        let p = SystemParams::reference(n_s);
        let real = sample_legit(&p, derive_seed(17, 2, k));
        let theta: Vec<f64> = (0..n_s).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let phases: Vec<_> = theta.iter().map(|&t| secirs::Complex64::from_polar(1.0, t)).collect();
        let direct = dense(&real.effective(&phases));
        let composed = dense(&cascade(&real).compose(&real.h_b, &phases));
        let oracle = effective_by_terms(&real, &theta);
        let scale: f64 = oracle.iter().flatten().map(|z| z.norm()).fold(1.0, f64::max);
        for (i, row) in oracle.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((direct[i][j] - v).norm() <= 1e-12 * scale);
                assert!((composed[i][j] - v).norm() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn cascaded_planes_are_outer_products() {
    let p = SystemParams::reference(6);
    let real = sample_legit(&p, 4);
    let c = cascade(&real);
    assert_eq!(c.f.len(), 6);
    for (n, f) in c.f.iter().enumerate() {
        for i in 0..2 {
            for j in 0..4 {
                assert_eq!(f.get(i, j), real.g_r.get(i, n) * real.h.get(n, j));
            }
        }
    }
}

#[test]
fn sampling_is_a_function_of_the_seed() {
    let p = SystemParams::reference(5);
    assert_eq!(sample_legit(&p, 99), sample_legit(&p, 99));
    assert_eq!(sample_wiretap(&p, 99), sample_wiretap(&p, 99));
    assert_ne!(sample_legit(&p, 99), sample_legit(&p, 100));
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pairs: Vec<_> = (0..37)
        .map(|i| {
            let (d, r) = sample_large_scale(i);
            let p = SystemParams::reference(7).with_large_scale(d, r);
            (sample_legit(&p, i), p)
        })
        .collect();
    let ds = Dataset::from_pairs(&pairs).unwrap();
    let path = dir.path().join("set.irsd");
    write_dataset(&path, &ds).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, ds);
    for (s, (real, p)) in back.samples.iter().zip(&pairs) {
        assert_eq!(&s.channel, real);
        assert_eq!(s.params(p.n_e), *p);
    }
    let bytes = std::fs::read(&path).unwrap();
    write_dataset(&path, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}
