use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use proptest::prelude::*;
use supermix_core::cfrac::{
    best_approx_check, convergents, rational_circle_norm, sandwich_holds, two_sided_error, GrowthSchedule,
    PartialQuotients,
};

fn quotients() -> impl Strategy<Value = Vec<u64>> {
    (0u64..1_000_000, prop::collection::vec(1u64..=1_000_000, 1..12)).prop_map(|(a0, mut rest)| {
        rest.insert(0, a0);
        rest
    })
}

fn small_quotients() -> impl Strategy<Value = Vec<u64>> {
    (0u64..3, prop::collection::vec(1u64..=6, 4..10)).prop_map(|(a0, mut rest)| {
        rest.insert(0, a0);
        rest
    })
}

fn backward_value(a: &[u64]) -> BigRational {
    a.iter()
        .rev()
        .skip(1)
        .fold(BigRational::from_integer(BigInt::from(*a.last().unwrap())), |acc, ai| {
            BigRational::from_integer(BigInt::from(*ai)) + acc.recip()
        })
}

proptest! {
    #[test]
    fn determinant_alternates(a in quotients()) {
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        for n in 1..t.len() {
            let want = if n % 2 == 0 { BigInt::one() } else { -BigInt::one() };
            prop_assert_eq!(t.determinant(n), want);
        }
    }

    #[test]
    fn last_convergent_is_the_value(a in quotients()) {
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        prop_assert_eq!(t.value(), backward_value(&a));
    }

    #[test]
    fn sandwich_and_error_sign(a in quotients()) {
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        let alpha = t.value();
        for n in 0..t.len() - 1 {
            prop_assert!(sandwich_holds(&t, n).unwrap());
            let err = &alpha - BigRational::new(t.p(n).clone(), t.q(n).clone());
            // even convergents sit below, odd ones above
            prop_assert_eq!(err.is_positive(), n % 2 == 0);
            let (lo, hi) = two_sided_error(&t, n).unwrap();
            prop_assert!(lo <= err.abs() && err.abs() <= hi);
        }
    }

    #[test]
    fn best_approximation_against_brute_force(a in small_quotients()) {
        let t = convergents(&PartialQuotients::from_u64(&a).unwrap());
        let alpha = t.value();
        let k_max: u64 = t.last().q.clone().try_into().unwrap();
        let k_max = k_max.min(2000);
        let report = best_approx_check(&t, k_max).unwrap();
        prop_assert!(report.violations.is_empty());
        // brute force: for every convergent below k_max, no smaller k does better
        for n in 1..t.len() {
            let qn: u64 = t.q(n).clone().try_into().unwrap();
            if qn > k_max {
                break;
            }
            let at_qn = rational_circle_norm(&(&alpha * BigRational::from_integer(BigInt::from(qn))));
            for k in 1..qn {
                let v = rational_circle_norm(&(&alpha * BigRational::from_integer(BigInt::from(k))));
                prop_assert!(v >= at_qn, "k={} beats q_{}={}", k, n, qn);
            }
        }
    }
}

#[test]
fn schedules_grow() {
    let q = BigInt::from(17);
    for s in ["cubic", "power:5", "exp-mild"] {
        let g = GrowthSchedule::parse(s).unwrap();
        assert!(g.next_min(&q, 4096).unwrap() > q, "{s}");
    }
}
