use mixendpoint::endpoint::*;
use proptest::prelude::*;

fn muse() -> LatentDesign {
    DesignConfig::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/fixtures/muse.json")))
        .unwrap()
        .build()
        .unwrap()
}

fn cdf_oracle(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Quantile by bisection on the erfc-based CDF.
fn quantile_oracle(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn gamma_identity_when_uncorrelated() {
    let d = LatentDesign::from_upper(
        vec![OutcomeSpec::continuous("a", 2.0, 1.0, 0.0), OutcomeSpec::binary("b", 0.3, 0.0)],
        &[0.0],
        None,
        1.0,
    )
    .unwrap();
    assert_eq!(d.build_gamma().unwrap().matrix(), &nalgebra::DMatrix::identity(2, 2));
}

#[test]
fn muse_gamma_entries_are_the_correlations() {
    let d = muse();
    let g = d.build_gamma().unwrap();
    let rho = [0.448, 0.521, 0.003, 0.448, -0.031, 0.066];
    let mut it = rho.iter();
    for i in 0..4 {
        assert_eq!(g.matrix()[(i, i)], 1.0);
        for j in i + 1..4 {
            let r = *it.next().unwrap();
            assert!((g.matrix()[(i, j)] - r).abs() <= 1e-12);
            assert!((g.matrix()[(j, i)] - r).abs() <= 1e-12);
        }
    }
    assert!(d.validate().is_empty(), "{}", d.validate());
}

#[test]
fn gamma_cancels_scale() {
    let d = LatentDesign::from_upper(
        vec![OutcomeSpec::continuous("a", 3.0, 1.0, 0.0), OutcomeSpec::continuous("b", 0.5, 1.0, 0.0)],
        &[0.7],
        None,
        1.0,
    )
    .unwrap();
    assert!((d.build_gamma().unwrap().matrix()[(0, 1)] - 0.7).abs() < 1e-15);
}

#[test]
fn latent_effects_from_proportions() {
    let a = latent_effect_from_proportions(0.97, 0.95).unwrap();
    assert!((a - 0.2359).abs() < 5e-5, "{a}");
    assert!((a - 0.24).abs() <= 0.005);
    let b = latent_effect_from_proportions(0.54, 0.38).unwrap();
    assert!((b - 0.4059).abs() < 5e-5, "{b}");
    assert!((b - 0.40).abs() <= 0.01);
    assert_eq!(latent_effect_from_proportions(0.3, 0.3).unwrap(), 0.0);
    assert!(latent_effect_from_proportions(1.0, 0.5).is_err());
    assert!(latent_effect_from_proportions(0.5, 0.0).is_err());
}

#[test]
fn thresholds_from_category_probabilities() {
    assert_eq!(thresholds_from_probs(&[0.5, 0.5]).unwrap().cuts, vec![0.0]);
    let q = thresholds_from_probs(&[0.25; 4]).unwrap().cuts;
    assert_eq!(q[1], 0.0);
    assert!((q[0] + q[2]).abs() < 1e-15);
    assert!((q[0] - quantile_oracle(0.25)).abs() < 1e-8);
    let t = thresholds_from_probs(&[0.1, 0.2, 0.4, 0.2, 0.1]).unwrap().cuts;
    for (c, p) in t.iter().zip([0.1, 0.3, 0.7, 0.9]) {
        assert!((c - quantile_oracle(p)).abs() < 1e-8);
    }
    assert!(thresholds_from_probs(&[0.5, 0.0, 0.5]).is_err());
    assert!(thresholds_from_probs(&[0.5, 0.4]).is_err());
}

#[test]
fn validation_reports() {
    let bad_rho = LatentDesign::from_upper(
        vec![OutcomeSpec::continuous("a", 1.0, 1.0, 0.0), OutcomeSpec::continuous("b", 1.0, 1.0, 0.0)],
        &[1.2],
        None,
        1.0,
    );
    let msg = match bad_rho {
        Ok(d) => d.validate().to_string(),
        Err(e) => e.to_string(),
    };
    assert!(msg.contains("correlation out of range"), "{msg}");

    let e = OrdinalThresholds::new(vec![0.5, 0.2]).unwrap_err();
    assert!(e.to_string().contains("thresholds not increasing"));
}

#[test]
fn canonical_order_is_restored() {
    let d = LatentDesign::from_upper(
        vec![OutcomeSpec::binary("b", 0.3, 0.0), OutcomeSpec::continuous("c", 1.0, 1.0, 0.0)],
        &[0.25],
        None,
        1.0,
    )
    .unwrap();
    assert_eq!(d.outcome(0).name, "c");
    assert_eq!(d.outcome(1).name, "b");
    assert_eq!(d.permutation(), &[1, 0]);
    assert!((d.correlations()[(0, 1)] - 0.25).abs() < 1e-15);
}

proptest! {
    #[test]
    fn gamma_invariant_to_continuous_scale(s1 in 0.05f64..20.0, s2 in 0.05f64..20.0, rho in -0.8f64..0.8) {
        let make = |a: f64, b: f64| LatentDesign::from_upper(
            vec![OutcomeSpec::continuous("a", a, 1.0, 0.0), OutcomeSpec::continuous("b", b, 0.5, 0.0), OutcomeSpec::binary("c", 0.2, 0.0)],
            &[rho, rho / 2.0, 0.1],
            None,
            1.0,
        ).unwrap();
        let g1 = make(1.0, 1.0).build_gamma().unwrap();
        let g2 = make(s1, s2).build_gamma().unwrap();
        prop_assert!((g1.matrix() - g2.matrix()).amax() < 1e-14);
    }

    #[test]
    fn thresholds_round_trip(raw in proptest::collection::vec(0.02f64..1.0, 2..8)) {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let t = thresholds_from_probs(&p).unwrap();
        prop_assert!(t.cuts.windows(2).all(|w| w[0] < w[1]));
        for (got, want) in category_probabilities(&t, 0.0).iter().zip(&p) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn latent_effect_antisymmetric(a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let f = latent_effect_from_proportions(a, b).unwrap();
        let g = latent_effect_from_proportions(b, a).unwrap();
        prop_assert_eq!(f, -g);
    }
}
