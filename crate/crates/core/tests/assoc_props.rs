mod common;

use common::moran_oracle;
use maup_core::assoc::{lisa, moran_global, permutation_p_value, standardize, AssocError, SpatialWeights, WeightMode};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..100.0)).collect()
}

#[test]
fn global_i_matches_explicit_neighbor_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (w, h) = (rng.random_range(2..25), rng.random_range(2..25));
        let v = field(&mut rng, w * h);
        for (mode, rs) in [(WeightMode::Binary, false), (WeightMode::RowStandardized, true)] {
            let got = moran_global(&v, &SpatialWeights::queen(w, h, mode)).unwrap();
            let want = moran_oracle(&v, w, h, rs);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{w}x{h} {mode:?}: {got} vs {want}");
        }
    }
}

#[test]
fn checkerboard_and_constant_field() {
    let v: Vec<f64> = (0..9).map(|i| (i % 2) as f64).collect();
    let i = moran_global(&v, &SpatialWeights::queen(3, 3, WeightMode::Binary)).unwrap();
    assert!((i + 0.19).abs() <= 1e-12, "{i}");
    assert!((moran_oracle(&v, 3, 3, false) + 0.19).abs() <= 1e-12);
    let r = moran_global(&[4.0; 9], &SpatialWeights::queen(3, 3, WeightMode::Binary));
    assert_eq!(r, Err(AssocError::ZeroVariance));
}

#[test]
fn lisa_slope_and_mean_track_global_i() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let wts = SpatialWeights::queen(20, 10, WeightMode::RowStandardized);
    let mut ratios = Vec::new();
    for _ in 0..100 {
        // mix smooth and rough fields so I ranges over both signs
        let rough = field(&mut rng, 200);
        let phase = rng.random_range(0.0..6.0);
        let v: Vec<f64> = rough.iter().enumerate().map(|(i, r)| r * rng.random_range(0.0..1.0) + 50.0 * ((i % 20) as f64 * 0.3 + phase).sin()).collect();
        let e = field(&mut rng, 200);
        let ok = vec![true; 200];
        let (pts, summary) = lisa(&v, &e, &ok, &wts).unwrap();
        let gi = moran_global(&v, &wts).unwrap();
        assert!((summary.regression_slope - gi).abs() <= 1e-9, "{} vs {gi}", summary.regression_slope);
        assert!((summary.global_i - gi).abs() <= 1e-12);
        let mean = pts.iter().map(|p| p.lisa).sum::<f64>() / pts.len() as f64;
        ratios.push(mean / gi);
    }
    for r in &ratios {
        assert!((r - ratios[0]).abs() <= 1e-9, "{r} vs {}", ratios[0]);
    }
}

/// Under a random spatial arrangement the observed I should sit inside the central 99%
/// of its own permutation distribution in the vast majority of trials.
#[test]
fn shuffled_fields_are_unremarkable() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let wts = SpatialWeights::queen(12, 10, WeightMode::RowStandardized);
    let mut inside = 0;
    for _ in 0..200 {
        let mut v: Vec<f64> = (0..120).map(|i| (i as f64 * 0.7).sin() * 10.0 + rng.random_range(0.0..5.0)).collect();
        v.shuffle(&mut rng);
        let observed = moran_global(&v, &wts).unwrap();
        let mut dist: Vec<f64> = (0..999)
            .map(|_| {
                let mut p = v.clone();
                p.shuffle(&mut rng);
                moran_global(&p, &wts).unwrap()
            })
            .collect();
        dist.sort_by(f64::total_cmp);
        let (lo, hi) = (dist[4], dist[994]);
        if observed >= lo && observed <= hi {
            inside += 1;
        }
    }
    assert!(inside >= 190, "{inside}/200 inside the central 99%");
}

#[test]
fn permutation_p_value_flags_structure() {
    let wts = SpatialWeights::queen(10, 10, WeightMode::RowStandardized);
    let smooth: Vec<f64> = (0..100).map(|i| (i % 10 + i / 10) as f64).collect();
    let p = permutation_p_value(&smooth, &wts, 499, 1).unwrap();
    assert!(p <= 0.01, "{p}");
    assert_eq!(p, permutation_p_value(&smooth, &wts, 499, 1).unwrap());
}

proptest! {
    #[test]
    fn global_i_ignores_affine_maps(seed in any::<u64>(), a in 0.01f64..100.0, b in -1e3f64..1e3, w in 2usize..15, h in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = field(&mut rng, w * h);
        let moved: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        for mode in [WeightMode::Binary, WeightMode::RowStandardized] {
            let wts = SpatialWeights::queen(w, h, mode);
            let (i0, i1) = (moran_global(&v, &wts).unwrap(), moran_global(&moved, &wts).unwrap());
            prop_assert!((i0 - i1).abs() <= 1e-9, "{i0} vs {i1}");
        }
    }

    #[test]
    fn standardization_round_trip(v in prop::collection::vec(-1e4f64..1e4, 2..400)) {
        prop_assume!(v.iter().any(|&x| x != v[0]));
        let z = standardize(&v);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((var - 1.0).abs() <= 1e-9);
    }
}
