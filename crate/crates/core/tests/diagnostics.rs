mod common;

use num_bigint::BigInt;
use proptest::prelude::*;
use supermix_core::diagnostics::{c_set_measure, in_c_set, log_times, quartiles, rank_sum, ranks, spearman};

proptest! {
    #[test]
    fn spearman_is_one_for_monotone_maps(v in prop::collection::vec(-1e3f64..1e3, 3..50)) {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v.dedup();
        prop_assume!(v.len() >= 3);
        let w: Vec<f64> = v.iter().map(|x| x.powi(3) + 2.0).collect();
        let r: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert!((spearman(&v, &w) - 1.0).abs() < 1e-12);
        prop_assert!((spearman(&v, &r) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranks_sum_to_triangle(v in prop::collection::vec(0u8..10, 1..60)) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let n = v.len() as f64;
        prop_assert!((ranks(&v).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn rank_sum_is_antisymmetric(a in prop::collection::vec(-5.0f64..5.0, 3..30), b in prop::collection::vec(-5.0f64..5.0, 3..30)) {
        let ab = rank_sum(&a, &b);
        let ba = rank_sum(&b, &a);
        prop_assert!((ab.z + ba.z).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-9);
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
    }
}

#[test]
fn c_set_measure_matches_grid_count() {
    for (q, n) in [(7u64, 3u32), (260, 4), (1_000_003, 5), (17, 17)] {
        let g = 2_000_000;
        let hits = (0..g)
            .filter(|i| in_c_set(&BigInt::from(q), n, (*i as f64 + 0.5) / g as f64))
            .count();
        let frac = hits as f64 / g as f64;
        assert!((frac - c_set_measure(n)).abs() < 1e-4, "q={q} n={n}: {frac}");
    }
    assert_eq!(c_set_measure(2), 0.0);
}

#[test]
fn huge_denominators_keep_membership_exact() {
    // {q x} ≈ 0.3 lies outside C_2 = {1/4}; 0.15 lies in C_3 = [1/9, 2/9]
    let q = BigInt::from(10u8).pow(45) + 7;
    let x = 0.3 / 1e45;
    assert!(!in_c_set(&q, 2, x));
    let x = 0.15 / 1e45;
    assert!(in_c_set(&q, 3, x));
}

#[test]
fn rank_sum_detects_shift() {
    let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..40).map(|i| i as f64 + 30.0).collect();
    let r = rank_sum(&a, &b);
    assert!(r.z < -5.0 && r.p_value < 1e-6);
}

#[test]
fn log_times_are_increasing() {
    let t = log_times(36, 130_000);
    // rounding merges a few of the earliest times
    assert!(t.len() > 30 && t.len() <= 36);
    assert_eq!((t[0], *t.last().unwrap()), (1, 130_000));
    assert!(t.windows(2).all(|w| w[0] < w[1]));
    let q = quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(q.median, 3.0);
}
