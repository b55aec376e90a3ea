use nalgebra::{DMatrix, Matrix2, Vector2};
use proptest::prelude::*;
use supermix_core::schrodinger::{
    gordon_block_bound, gordon_check, gordon_defect, iid_trace, localization, periodic_trace, tridiagonal_eigen,
    truncated_spectrum, GordonThreshold, PotentialTrace,
};

fn dense_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i.abs_diff(j) == 1 {
            off[i.min(j)]
        } else {
            0.0
        }
    });
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_match_dense_oracle(diag in prop::collection::vec(-4.0f64..4.0, 2..120)) {
        let off = vec![1.0; diag.len() - 1];
        let s = tridiagonal_eigen(&diag, &off).unwrap();
        let oracle = dense_eigenvalues(&diag, &off);
        for (a, b) in s.eigenvalues.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // H u = λ u for every returned pair
        for (lam, u) in s.eigenvalues.iter().zip(&s.eigenvectors) {
            let n = u.len();
            let mut r = 0.0f64;
            for i in 0..n {
                let mut hu = diag[i] * u[i];
                if i > 0 { hu += u[i - 1]; }
                if i + 1 < n { hu += u[i + 1]; }
                r = r.max((hu - lam * u[i]).abs());
            }
            prop_assert!(r < 1e-8);
        }
    }

    #[test]
    fn block_bound_matches_direct_products(
        block in prop::collection::vec(-2.0f64..2.0, 1..10),
        energy in -4.0f64..4.0,
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let k = block.len();
        let trace = periodic_trace(&block, 4 * k).unwrap();
        let phi = [angle.cos(), angle.sin()];
        let b = gordon_block_bound(&trace, energy, k, phi).unwrap();
        let a = |n: i64| Matrix2::new(energy - trace.at(n), -1.0, 1.0, 0.0);
        let tk = (1..=k as i64).fold(Matrix2::identity(), |acc, n| a(n) * acc);
        let t2k = (1..=2 * k as i64).fold(Matrix2::identity(), |acc, n| a(n) * acc);
        let inv = |n: i64| Matrix2::new(0.0, 1.0, -1.0, energy - trace.at(n));
        let tmk = (-(k as i64) + 1..=0).rev().fold(Matrix2::identity(), |acc, n| inv(n) * acc);
        let v = Vector2::new(phi[0], phi[1]);
        let norms = [(tk * v).norm(), (t2k * v).norm(), (tmk * v).norm()];
        for (ln, n) in b.ln_norms.iter().zip(norms) {
            prop_assert!((ln.exp() - n).abs() <= 1e-9 * n.max(1.0));
        }
        prop_assert!(norms.iter().cloned().fold(0.0, f64::max) >= 0.5);
        prop_assert!(b.satisfied && b.cayley_hamilton_bound);
        prop_assert!(b.cayley_hamilton_residual < 1e-8 * (1.0 + (t2k * v).norm()));
    }
}

#[test]
fn free_spectrum() {
    for n in 1..8usize {
        let size = 2 * n + 1;
        let t = PotentialTrace::from_values(vec![0.0; size], "zero").unwrap();
        let s = truncated_spectrum(&t, n).unwrap();
        let mut want: Vec<f64> = (1..=size)
            .map(|k| 2.0 * (std::f64::consts::PI * k as f64 / (size + 1) as f64).cos())
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in s.eigenvalues.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn periodic_traces_have_no_defect() {
    for k in 1..12 {
        let block: Vec<f64> = (0..k).map(|i| (1.3 * i as f64).cos()).collect();
        let t = periodic_trace(&block, 10 * k).unwrap();
        assert_eq!(gordon_defect(&t, k).unwrap(), 0.0);
        assert_eq!(gordon_defect(&t, 2 * k).unwrap(), 0.0);
    }
}

#[test]
fn iid_traces_fail_gordon() {
    let rule = GordonThreshold::default();
    for seed in 0..20 {
        let t = iid_trace(400, 0.0, 1.0, seed);
        let r = gordon_check(&t, &[10, 20, 40, 80, 160], &rule).unwrap();
        assert!(r.entries.iter().all(|e| !e.pass), "seed {seed}");
    }
}

#[test]
fn localization_of_delta_and_flat() {
    let mut delta = vec![0.0; 51];
    delta[25] = 1.0;
    let l = localization(&delta).unwrap();
    assert!((l.ipr - 1.0).abs() < 1e-15);
    assert_eq!(l.center, 25);
    let flat = vec![1.0 / 51f64.sqrt(); 51];
    assert!((localization(&flat).unwrap().ipr - 1.0 / 51.0).abs() < 1e-14);
}
