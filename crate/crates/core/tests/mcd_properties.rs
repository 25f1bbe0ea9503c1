use eegfatigue_core::features::window_features;
use eegfatigue_core::mcd::{
    choose_h, consistency_factor, exact_univariate_mcd, robust_estimate, McdConfig,
};
use eegfatigue_core::stats;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};

/// Minimum sample variance over every h-subset, with that subset's mean.
fn brute_force_mcd(data: &[f64], h: usize) -> (f64, f64) {
    let n = data.len();
    let mut best = (f64::INFINITY, f64::NAN);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != h {
            continue;
        }
        let subset: Vec<f64> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| data[i])
            .collect();
        let mean = subset.iter().sum::<f64>() / h as f64;
        let var = subset.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (h - 1) as f64;
        if var < best.0 {
            best = (var, mean);
        }
    }
    best
}

#[test]
fn exact_search_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in 5..=12 {
        let h = (n + 2) / 2;
        for _ in 0..200 {
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let (var, loc) = brute_force_mcd(&data, h);
            let got = exact_univariate_mcd(&data, h).unwrap();
            assert!(
                (got.raw_scale - var).abs() <= 1e-12,
                "n={n} {data:?}: {} vs {var}",
                got.raw_scale
            );
            assert!(
                (got.location - loc).abs() <= 1e-12,
                "n={n} {data:?}: {} vs {loc}",
                got.location
            );
        }
    }
}

#[test]
fn documented_outlier_example_matches_enumeration() {
    let data = [1.0, 2.0, 3.0, 4.0, 100.0];
    let (var, _) = brute_force_mcd(&data, 3);
    assert_eq!(var, 1.0);
    let got = exact_univariate_mcd(&data, 3).unwrap();
    assert_eq!(
        (got.location, got.raw_scale, got.subset_start),
        (2.0, 1.0, 0)
    );
}

/// c₀ through the truncated normal: with a = Φ⁻¹((1+α)/2) the central α mass
/// of N(0,1) has variance 1 − 2aφ(a)/α.
fn truncated_normal_factor(alpha: f64) -> f64 {
    let z = StdNormal::standard();
    let a = z.inverse_cdf((1.0 + alpha) / 2.0);
    1.0 / (1.0 - 2.0 * a * z.pdf(a) / (2.0 * z.cdf(a) - 1.0))
}

#[test]
fn consistency_factor_matches_truncated_normal_oracle() {
    for i in 0..50 {
        let alpha = 0.5 + 0.49 * i as f64 / 49.0;
        let got = consistency_factor(alpha).unwrap();
        let oracle = truncated_normal_factor(alpha);
        assert!(
            (got - oracle).abs() <= 1e-7 * oracle,
            "alpha={alpha}: {got} vs {oracle}"
        );
    }
    assert!((truncated_normal_factor(0.5) - 7.01).abs() <= 0.01);
}

#[test]
fn consistency_factor_is_nonincreasing_and_at_least_one() {
    let grid: Vec<f64> = (0..50).map(|i| 0.5 + 0.5 * i as f64 / 49.0).collect();
    let values: Vec<f64> = grid
        .iter()
        .map(|&a| consistency_factor(a).unwrap())
        .collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0], "{values:?}");
    }
    assert!(values[..49].iter().all(|&c| c > 1.0));
    assert_eq!(values[49], 1.0);
}

fn normal_sample(seed: u64, n: usize, mean: f64, std: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(mean, std).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

#[test]
fn estimate_is_consistent_at_the_normal_model() {
    let data = normal_sample(7, 10_000, 3.0, 2.0);
    let est = robust_estimate(&data, &McdConfig::default()).unwrap();
    assert!((est.location - 3.0).abs() <= 0.1, "{est:?}");
    assert!((est.scaled_scale - 4.0).abs() <= 0.4, "{est:?}");
}

#[test]
fn estimate_resists_heavy_contamination() {
    let mut data = normal_sample(7, 10_000, 3.0, 2.0);
    for v in data.iter_mut().take(4_000) {
        *v = 1000.0;
    }
    let est = robust_estimate(&data, &McdConfig::default()).unwrap();
    assert!((est.location - 3.0).abs() <= 0.5, "{est:?}");
    assert!(stats::mean(&data).unwrap() > 100.0);
}

#[test]
fn breakdown_with_maximal_contamination() {
    let clean = normal_sample(11, 501, 0.0, 1.0);
    let base = robust_estimate(&clean, &McdConfig::default()).unwrap();
    let h = choose_h(clean.len(), 0.5).unwrap();
    for sign in [1.0, -1.0] {
        let mut dirty = clean.clone();
        for v in dirty.iter_mut().take(clean.len() - h) {
            *v = sign * 1e6;
        }
        let est = robust_estimate(&dirty, &McdConfig::default()).unwrap();
        assert!(
            (est.location - base.location).abs() < 3.0,
            "{sign}: {est:?}"
        );
        assert!(est.scaled_scale < 20.0, "{sign}: {est:?}");
    }
}

#[test]
fn robust_to_classical_ratio_on_gaussian_window() {
    let data = normal_sample(3, 2000, 0.0, 10.0);
    let c0 = consistency_factor(0.5).unwrap();
    let f = window_features(&data, 0.5, c0, 0.0).unwrap();
    let ratio = f.robust_scale / f.variance;
    assert!((0.6..=1.5).contains(&ratio), "{ratio}");
}

#[test]
fn constant_series_has_zero_scale() {
    let est = robust_estimate(&[4.25; 17], &McdConfig::new(0.75).unwrap()).unwrap();
    assert_eq!(est.location, 4.25);
    assert_eq!(est.scaled_scale, 0.0);
}

proptest! {
    #[test]
    fn affine_equivariance(
        data in prop::collection::vec(-100.0f64..100.0, 5..60),
        a in prop_oneof![-20.0f64..-0.1, 0.1f64..20.0],
        b in -500.0f64..500.0,
        alpha in 0.5f64..1.0,
    ) {
        let cfg = McdConfig::new(alpha).unwrap();
        let base = robust_estimate(&data, &cfg).unwrap();
        let moved: Vec<f64> = data.iter().map(|x| a * x + b).collect();
        let est = robust_estimate(&moved, &cfg).unwrap();
        let want_loc = a * base.location + b;
        let want_scale = a * a * base.scaled_scale;
        prop_assert!((est.location - want_loc).abs() <= 1e-9 * want_loc.abs().max(1.0) * a.abs().max(1.0),
            "{} vs {}", est.location, want_loc);
        prop_assert!((est.scaled_scale - want_scale).abs() <= 1e-9 * want_scale.max(1e-9),
            "{} vs {}", est.scaled_scale, want_scale);
    }

    #[test]
    fn permutation_invariance(
        data in prop::collection::vec(-100.0f64..100.0, 2..80),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut shuffled = data.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cfg = McdConfig::default();
        prop_assert_eq!(robust_estimate(&data, &cfg).unwrap(), robust_estimate(&shuffled, &cfg).unwrap());
    }

    #[test]
    fn location_stays_within_data_range(data in prop::collection::vec(-1e6f64..1e6, 2..100)) {
        let est = robust_estimate(&data, &McdConfig::default()).unwrap();
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(est.location >= lo && est.location <= hi);
        prop_assert_eq!(est.scaled_scale, est.consistency_factor * est.raw_scale);
        prop_assert!(est.h >= (data.len() + 2) / 2 && est.h <= data.len());
    }
}
