#![allow(dead_code)]

use supermix_core::birkhoff::Translation;
use supermix_core::ceiling::{build_ceiling, BuildOptions};
use supermix_core::cfrac::{design_pair, FrequencyPair, GrowthSchedule, PartialQuotients};
use supermix_core::flow::FlowMap;
use supermix_core::tolerance::{AmplitudeSchedule, ToleranceSchema};

pub fn small_pair(levels: usize) -> FrequencyPair {
    design_pair(
        &GrowthSchedule::Cubic,
        levels,
        (
            &PartialQuotients::from_u64(&[0, 4]).unwrap(),
            &PartialQuotients::from_u64(&[0, 1]).unwrap(),
        ),
        4096,
    )
    .unwrap()
}

/// A one-level map with a reduced harmonic budget, cheap enough for proptest.
pub fn small_map() -> (FrequencyPair, FlowMap) {
    let pair = small_pair(1);
    let mut tol = ToleranceSchema::default();
    tol.harmonic_budget = 512;
    let c = build_ceiling(
        &pair,
        &BuildOptions {
            levels: 1,
            n0: 17,
            amplitude: AmplitudeSchedule::Poly { power: 4 },
            tol,
        },
    )
    .unwrap();
    let map = FlowMap::new(Translation::from_pair(&pair), c);
    (pair, map)
}
