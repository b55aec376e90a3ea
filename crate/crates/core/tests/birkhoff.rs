mod common;

use num_bigint::BigInt;
use num_complex::Complex64;
use proptest::prelude::*;
use supermix_core::birkhoff::{
    birkhoff_closed, birkhoff_direct, ceiling_deviation_direct, geometric_sum, Axis, BirkhoffQuery, CeilingBirkhoff,
    Translation,
};
use supermix_core::cfrac::{convergents, PartialQuotients};
use supermix_core::exact::Rotation;
use supermix_core::trig::TrigPolynomial;

fn rotation() -> impl Strategy<Value = Rotation> {
    prop::collection::vec(1u64..40, 6..16).prop_map(|mut a| {
        a.insert(0, 0);
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        Rotation::new(t.last().p.clone(), t.last().q.clone())
    })
}

fn poly() -> impl Strategy<Value = TrigPolynomial> {
    (
        -1.0f64..1.0,
        prop::collection::vec((1i128..80, -1.0f64..1.0, -1.0f64..1.0), 1..6),
    )
        .prop_map(|(c, terms)| {
            TrigPolynomial::from_terms(c, terms.into_iter().map(|(k, re, im)| (k, Complex64::new(re, im))).collect())
                .unwrap()
        })
}

proptest! {
    #[test]
    fn closed_matches_direct(p in poly(), a in rotation(), b in rotation(), m in 0u64..5000, x in 0.0f64..1.0, y in 0.0f64..1.0, on_x in any::<bool>()) {
        let tr = Translation { alpha: a, alpha_prime: b };
        let q = BirkhoffQuery { poly: &p, axis: if on_x { Axis::X } else { Axis::Y }, m: BigInt::from(m), x, y };
        let closed = birkhoff_closed(&q, &tr).unwrap().0;
        let direct = birkhoff_direct(&q, &tr, 5000, 97).unwrap();
        prop_assert!((closed - direct).abs() <= 1e-9 * (1.0 + m as f64 / 1000.0), "{} vs {}", closed, direct);
    }

    #[test]
    fn cocycle(p in poly(), a in rotation(), m in 0u64..1u64 << 40, n in 0u64..1u64 << 40, x in 0.0f64..1.0) {
        let (m, n) = (BigInt::from(m), BigInt::from(n));
        let whole = p.birkhoff(&a, &(&m + &n)).eval(x);
        let parts = p.birkhoff(&a, &m).eval(x) + p.birkhoff(&a, &n).eval(a.translate(x, &m));
        let scale = p.l1_norm() * (1.0 + p.birkhoff(&a, &(&m + &n)).l1_norm());
        prop_assert!((whole - parts).abs() <= 1e-9 * scale);
    }

    #[test]
    fn geometric_factor_is_bounded(a in rotation(), m in 1u64..1u64 << 50, k in 1i64..1000) {
        let g = geometric_sum(&BigInt::from(m), &BigInt::from(k), &a);
        prop_assert!(g.value.norm() <= m as f64 * (1.0 + 1e-12));
    }
}

#[test]
fn convergent_denominators_resonate() {
    // q‖qα‖ ≤ 1/2 at q = q_n when a_{n+1} ≥ 2, so the factor of e(q x) over q
    // steps stays within 2/π of q
    let a: Vec<u64> = vec![0, 2, 5, 1, 9, 3, 30, 2, 7, 11];
    let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
    let rot = Rotation::new(t.last().p.clone(), t.last().q.clone());
    for n in (1..t.len() - 1).filter(|&n| a[n + 1] >= 2) {
        let q = t.q(n);
        let g = geometric_sum(q, q, &rot).value.norm();
        let qf: f64 = q.to_string().parse().unwrap();
        assert!(g <= qf * (1.0 + 1e-12) && g >= 0.6 * qf, "n={n}: {g} vs {qf}");
    }
}

#[test]
fn ceiling_sums_match_direct() {
    let (_, map) = common::small_map();
    for m in [1u64, 7, 65, 400, 3000] {
        let closed = CeilingBirkhoff::new(&map.ceiling, &map.translation, &BigInt::from(m));
        for (x, y) in [(0.1, 0.2), (0.77, 0.31), (0.5, 0.99)] {
            let d = ceiling_deviation_direct(&map.ceiling, &map.translation, x, y, m);
            assert!((closed.deviation(x, y) - d).abs() < 1e-10, "m={m}");
        }
    }
}
