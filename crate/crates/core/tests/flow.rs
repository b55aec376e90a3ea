mod common;

use std::sync::OnceLock;

use num_bigint::BigInt;
use proptest::prelude::*;
use supermix_core::cfrac::FrequencyPair;
use supermix_core::exact::circle_norm;
use supermix_core::flow::{FlowMap, FlowPoint, MeasureSampler, SamplingMode};

fn map() -> &'static (FrequencyPair, FlowMap) {
    static M: OnceLock<(FrequencyPair, FlowMap)> = OnceLock::new();
    M.get_or_init(common::small_map)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unit_ceiling_is_a_suspension(x in 0.0f64..1.0, y in 0.0f64..1.0, s in 0.0f64..1.0, t in 0.0f64..1e4) {
        let tr = map().1.translation.clone();
        let unit = FlowMap::unit(tr.clone());
        let got = unit.advance(&FlowPoint { x, y, s }, t).unwrap();
        let total = s + t;
        let k = BigInt::from(total.floor() as u64);
        prop_assert_eq!(&got.fibers, &k);
        prop_assert!(circle_norm(got.point.x - tr.alpha.translate(x, &k)) < 1e-12);
        prop_assert!(circle_norm(got.point.y - tr.alpha_prime.translate(y, &k)) < 1e-12);
        prop_assert!((got.point.s - total.fract()).abs() < 1e-11);
    }

    #[test]
    fn semigroup(x in 0.0f64..1.0, y in 0.0f64..1.0, t1 in -300.0f64..300.0, t2 in -300.0f64..300.0) {
        let m = &map().1;
        let p = FlowPoint::base(x, y);
        let a = m.advance(&p, t1).unwrap();
        let b = m.advance(&a.point, t2).unwrap();
        let c = m.advance(&p, t1 + t2).unwrap();
        prop_assume!(!(a.ambiguous || b.ambiguous || c.ambiguous));
        prop_assert!(m.quotient_distance(&b.point, &c.point) < 1e-9);
    }

    #[test]
    fn forward_then_back_returns(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.0f64..2000.0) {
        let m = &map().1;
        let p = FlowPoint::canonical(m, x, y, 0.3).unwrap();
        let a = m.advance(&p, t).unwrap();
        let b = m.advance_back(&a.point, t).unwrap();
        prop_assume!(!(a.ambiguous || b.ambiguous));
        prop_assert!(m.quotient_distance(&b.point, &p) < 1e-9);
    }
}

#[test]
fn canonical_point_lies_under_the_ceiling() {
    let m = &map().1;
    for (x, y, s) in [(0.2, 0.4, 0.0), (0.9, 0.1, 3.7), (0.5, 0.5, -2.2), (1.3, -0.4, 0.9)] {
        let p = FlowPoint::canonical(m, x, y, s).unwrap();
        assert!((0.0..1.0).contains(&p.x) && (0.0..1.0).contains(&p.y));
        assert!(p.s >= 0.0 && p.s < m.phi(p.x, p.y));
    }
}

#[test]
fn return_distance_at_recurrence_time_is_small() {
    let (pair, m) = map();
    let t = pair.recurrence_time(1);
    let sampler = MeasureSampler {
        seed: 9,
        mode: SamplingMode::Haar,
    };
    let pts = sampler.sample_points(50, m).unwrap();
    let bound = m.deviation_magnitude(&t)
        + pair.rotation().circle_distance(&t)
        + pair.rotation_prime().circle_distance(&t);
    let mut within = 0;
    for p in &pts {
        let r = m.return_distance(p, &t).unwrap();
        if r.distance <= bound + 1e-9 {
            within += 1;
        }
    }
    assert_eq!(within, pts.len());
}
