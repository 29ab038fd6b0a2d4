#![allow(dead_code)]

use mixendpoint::endpoint::*;
use proptest::prelude::*;

pub fn muse() -> LatentDesign {
    DesignConfig::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/fixtures/muse.json")))
        .unwrap()
        .build()
        .unwrap()
}

pub fn cdf_oracle(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Random valid design with K in 2..=4, mixed kinds and all effects positive.
pub fn positive_design() -> impl Strategy<Value = LatentDesign> {
    (2usize..=4)
        .prop_flat_map(|k| {
            (
                proptest::collection::vec(0u8..3, k),
                proptest::collection::vec(0.1f64..0.6, k),
                proptest::collection::vec(0.5f64..3.0, k),
                proptest::collection::vec(-0.4f64..0.8, k * (k - 1) / 2),
            )
        })
        .prop_filter_map("correlation not positive definite", |(kinds, effects, sds, upper)| {
            let outcomes = kinds
                .iter()
                .zip(&effects)
                .zip(&sds)
                .enumerate()
                .map(|(i, ((&kind, &e), &sd))| {
                    let name = format!("y{i}");
                    match kind {
                        0 => OutcomeSpec::continuous(&name, sd, e * sd, 0.0),
                        1 => OutcomeSpec::ordinal(&name, thresholds_from_probs(&[0.3, 0.4, 0.3]).unwrap(), e, 0.0),
                        _ => OutcomeSpec::binary(&name, e - 0.2, -0.2),
                    }
                })
                .collect();
            LatentDesign::from_upper(outcomes, &upper, None, 1.0).ok().filter(|d| d.validate().is_empty())
        })
}
