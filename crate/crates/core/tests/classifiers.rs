//! Synthetic classifiers, sampling and the oracles against closed-form
//! Gaussian integrals.

// Reference values keep every digit of the high-precision evaluation.
#![allow(clippy::excessive_precision)]

use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use smoothcert::certify::{DualSolution, DualVariant, NormKind, SmoothingConfig};
use smoothcert::classifiers::{
    analytic_linear_radius, analytic_linear_stats, cap_sentinel, make_synthetic,
    mc_worst_case_probability, sample_class_statistics, sample_statistics, BlackBoxClassifier,
    LinearClassifierSpec, RngSpec, SyntheticSpec,
};
use smoothcert::estimate::gradient_mean;

const PHI_1: f64 = 0.841_344_746_068_542_95;
const DENS_0: f64 = 0.398_942_280_401_432_7;
const DENS_1: f64 = 0.241_970_724_519_143_35;
const PHI_HALF: f64 = 0.691_462_461_274_013_1;

/// Uniform draw on `[lo, hi)` from 53 random bits.
fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn analytic_stats_examples() {
    let cfg = SmoothingConfig::new(1.0, 2).unwrap();
    let spec = LinearClassifierSpec::new(vec![1.0, 0.0], 0.0).unwrap();
    let (y0, y1) = analytic_linear_stats(&spec, &[1.0, 0.0], &cfg).unwrap();
    assert!((y0 - PHI_1).abs() < 1e-14);
    assert!((l2(&y1) - DENS_1).abs() < 1e-14);
    // x lies on the class-0 side, so the gradient of that class points along +w.
    assert!(y1[0] > 0.0 && y1[1] == 0.0);

    let cfg = SmoothingConfig::new(0.5, 2).unwrap();
    let (y0, y1) = analytic_linear_stats(&spec, &[0.0, 3.0], &cfg).unwrap();
    assert_eq!(y0, 0.5);
    assert!((l2(&y1) - DENS_0 / 0.5).abs() < 1e-14);
}

#[test]
fn analytic_stats_are_scale_invariant() {
    let cfg = SmoothingConfig::new(0.7, 3).unwrap();
    let x = [0.3, -0.2, 1.1];
    let a = LinearClassifierSpec::new(vec![0.4, 1.5, -0.3], 0.25).unwrap();
    let b = LinearClassifierSpec::new(a.w.iter().map(|w| 10.0 * w).collect(), 10.0 * a.b).unwrap();
    let (p, g) = analytic_linear_stats(&a, &x, &cfg).unwrap();
    let (q, h) = analytic_linear_stats(&b, &x, &cfg).unwrap();
    assert!((p - q).abs() < 1e-14);
    assert!((l2(&g) * cfg.sigma - l2(&h) * cfg.sigma).abs() < 1e-14);
}

#[test]
fn analytic_radius_examples() {
    let spec = LinearClassifierSpec::new(vec![0.5; 4], 0.0).unwrap();
    // Margin 1: wᵀx = -1.
    let x = [-0.5; 4];
    let cap = cap_sentinel(1.0);
    let cases = [
        (NormKind::L1, 2.0),
        (NormKind::L2, 1.0),
        (NormKind::Linf, 0.5),
    ];
    for (p, want) in cases {
        let got = analytic_linear_radius(&spec, &x, p, None, cap).unwrap();
        assert!((got - want).abs() < 1e-14, "{p:?}: {got}");
    }
    // Mask restricted to two coordinates: margin / ‖P_S w‖₂ = 1 / (1/√2).
    let got = analytic_linear_radius(&spec, &x, NormKind::L2, Some(&[0, 2]), cap).unwrap();
    assert!((got - std::f64::consts::SQRT_2).abs() < 1e-14);
}

#[test]
fn analytic_radius_unbounded_mask_returns_cap() {
    let spec = LinearClassifierSpec::new(vec![1.0, 0.0, 1.0, 0.0], 0.0).unwrap();
    let x = [-0.5, 0.0, -0.5, 0.0];
    let cap = cap_sentinel(0.25);
    assert_eq!(
        analytic_linear_radius(&spec, &x, NormKind::L2, Some(&[1, 3]), cap).unwrap(),
        cap
    );
    assert!(analytic_linear_radius(&spec, &x, NormKind::L2, Some(&[4]), cap).is_err());
}

#[test]
fn stats_and_radius_reject_bad_input() {
    assert!(LinearClassifierSpec::new(vec![0.0, 0.0], 1.0).is_err());
    assert!(LinearClassifierSpec::new(vec![], 1.0).is_err());
    assert!(LinearClassifierSpec::new(vec![f64::NAN], 1.0).is_err());
    let spec = LinearClassifierSpec::new(vec![1.0, 1.0], 0.0).unwrap();
    let cfg = SmoothingConfig::new(1.0, 3).unwrap();
    assert!(analytic_linear_stats(&spec, &[0.0; 3], &cfg).is_err());
}

#[test]
fn mc_oracle_halfspace() {
    let dual = DualSolution {
        c0: 0.0,
        c1: 0.0,
        c2: 0.0,
        variant: DualVariant::Interval {
            lower: f64::NEG_INFINITY,
            upper: 1.0,
        },
        travel_scale: 0.5,
        iterations: 0,
        fallback_used: false,
    };
    let mc = mc_worst_case_probability(&dual, 0.5, 1_000_000, RngSpec::new(5, 0)).unwrap();
    assert!((mc.estimate - PHI_HALF).abs() < 3.0 * mc.stderr, "{mc:?}");
    let expected_se = (PHI_HALF * (1.0 - PHI_HALF) / 1e6).sqrt();
    assert!((mc.stderr - expected_se).abs() < 1e-5);
}

#[test]
fn mc_oracle_zero_measure_set() {
    let dual = DualSolution {
        c0: -1e3,
        c1: 0.0,
        c2: -1.0,
        variant: DualVariant::Full,
        travel_scale: 0.5,
        iterations: 0,
        fallback_used: false,
    };
    assert!(dual.primal_coefficients().is_some());
    let mc = mc_worst_case_probability(&dual, 0.5, 100_000, RngSpec::new(1, 1)).unwrap();
    assert_eq!(mc.estimate, 0.0);
    assert_eq!(mc.stderr, 0.0);
    assert!(mc_worst_case_probability(&dual, 0.5, 0, RngSpec::new(1, 1)).is_err());
}

#[test]
fn synthetic_linear_orientation() {
    let f = make_synthetic(&SyntheticSpec::Linear {
        w: vec![1.0, 0.0],
        b: 0.0,
    })
    .unwrap();
    assert_eq!(f.classify(&[2.0, 0.0]), 0);
    assert_eq!(f.classify(&[-2.0, 0.0]), 1);
    assert_eq!(f.classify(&[0.0, 5.0]), 1);
    assert_eq!(f.num_classes(), 2);
    assert_eq!(f.input_dim(), Some(2));
}

#[test]
fn synthetic_sphere_of_radius_zero_is_constant() {
    let f = make_synthetic(&SyntheticSpec::SphereInterior {
        center: vec![0.0; 2],
        radius: 0.0,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = [uniform(&mut rng, -5.0, 5.0), uniform(&mut rng, -5.0, 5.0)];
        assert_eq!(f.classify(&p), 0);
    }
    assert_eq!(f.classify(&[0.0, 0.0]), 0);
}

#[test]
fn synthetic_slab_flips_at_its_boundaries() {
    let f = make_synthetic(&SyntheticSpec::SlabInterval {
        axis: 1,
        lower: -1.0,
        upper: 1.0,
        dim: Some(2),
    })
    .unwrap();
    let eps = 1e-12;
    assert_eq!(f.classify(&[9.0, -1.0]), 1);
    assert_eq!(f.classify(&[9.0, 1.0]), 1);
    assert_eq!(f.classify(&[9.0, -1.0 - eps]), 0);
    assert_eq!(f.classify(&[9.0, 1.0 + eps]), 0);
    assert_eq!(f.classify(&[9.0, 0.0]), 1);
}

#[test]
fn synthetic_union_of_halfspaces() {
    let f = make_synthetic(&SyntheticSpec::UnionOfHalfspaces {
        halfspaces: vec![
            LinearClassifierSpec::new(vec![1.0, 0.0], -1.0).unwrap(),
            LinearClassifierSpec::new(vec![0.0, 1.0], -1.0).unwrap(),
        ],
    })
    .unwrap();
    assert_eq!(f.classify(&[0.0, 0.0]), 1);
    assert_eq!(f.classify(&[2.0, 0.0]), 1);
    assert_eq!(f.classify(&[2.0, 2.0]), 0);
}

#[test]
fn synthetic_invalid_parameters() {
    let bad = [
        SyntheticSpec::Linear {
            w: vec![0.0],
            b: 0.0,
        },
        SyntheticSpec::SlabInterval {
            axis: 0,
            lower: 1.0,
            upper: -1.0,
            dim: None,
        },
        SyntheticSpec::SlabInterval {
            axis: 3,
            lower: -1.0,
            upper: 1.0,
            dim: Some(2),
        },
        SyntheticSpec::SlabInterval {
            axis: 0,
            lower: f64::NEG_INFINITY,
            upper: 1.0,
            dim: None,
        },
        SyntheticSpec::UnionOfHalfspaces { halfspaces: vec![] },
        SyntheticSpec::SphereInterior {
            center: vec![],
            radius: 1.0,
        },
        SyntheticSpec::SphereInterior {
            center: vec![0.0],
            radius: -1.0,
        },
    ];
    for spec in bad {
        assert!(make_synthetic(&spec).is_err(), "{spec:?}");
    }
}

#[test]
fn synthetic_specs_parse_from_config_text() {
    let spec: SyntheticSpec = serde_json::from_str(
        r#"{"kind": "slab_interval", "axis": 0, "lower": -1.0, "upper": 1.0}"#,
    )
    .unwrap();
    assert_eq!(
        spec,
        SyntheticSpec::SlabInterval {
            axis: 0,
            lower: -1.0,
            upper: 1.0,
            dim: None
        }
    );
}

#[test]
fn sampling_a_constant_classifier() {
    let f = make_synthetic(&SyntheticSpec::SphereInterior {
        center: vec![0.0; 3],
        radius: 0.0,
    })
    .unwrap();
    let cfg = SmoothingConfig::new(1.0, 3).unwrap();
    let n = 200_000;
    let same = sample_statistics(f.as_ref(), &[0.0; 3], 0, &cfg, n, RngSpec::new(4, 0)).unwrap();
    let other = sample_statistics(f.as_ref(), &[0.0; 3], 1, &cfg, n, RngSpec::new(4, 0)).unwrap();
    assert_eq!(same.success_count, n);
    assert_eq!(other.success_count, 0);
    // z = ±w/2 has per-coordinate standard deviation σ/2.
    let se = 0.5 / (n as f64).sqrt();
    for (a, b) in gradient_mean(&same).iter().zip(gradient_mean(&other)) {
        assert!(a.abs() < 4.0 * se);
        assert!((a + b).abs() < 1e-12);
    }
    assert!(sample_statistics(f.as_ref(), &[0.0; 3], 0, &cfg, 1, RngSpec::new(4, 0)).is_err());
    assert!(sample_statistics(f.as_ref(), &[0.0; 2], 0, &cfg, 10, RngSpec::new(4, 0)).is_err());
}

#[test]
fn sampling_reproduces_analytic_linear_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 1_000_000u64;
    for trial in 0..20u64 {
        let d = 1 + (rng.next_u64() % 4) as usize;
        let w: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        if l2(&w) < 1e-3 {
            continue;
        }
        let spec = LinearClassifierSpec::new(w, uniform(&mut rng, -0.5, 0.5)).unwrap();
        let x: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -0.5, 0.5)).collect();
        let sigma = uniform(&mut rng, 0.2, 1.0);
        let cfg = SmoothingConfig::new(sigma, d).unwrap();
        let c = spec.classify(&x);
        let (y0, y1) = analytic_linear_stats(&spec, &x, &cfg).unwrap();
        let b = sample_statistics(&spec, &x, c, &cfg, n, RngSpec::new(trial, 7)).unwrap();
        let p = b.success_count as f64 / n as f64;
        let se_p = (y0 * (1.0 - y0) / n as f64).sqrt();
        assert!((p - y0).abs() < 4.0 * se_p, "trial {trial}: {p} vs {y0}");
        for (got, g) in gradient_mean(&b).iter().zip(&y1) {
            let want = sigma * sigma * g;
            // E[z_i²] = σ²/4 exactly.
            let se = ((sigma * sigma / 4.0 - want * want) / n as f64).sqrt();
            assert!(
                (got - want).abs() < 4.0 * se,
                "trial {trial}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn smoothed_prediction_matches_linear_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..20u64 {
        let d = 3;
        let w: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let spec = LinearClassifierSpec::new(w, 0.0).unwrap();
        let unit: Vec<f64> = spec.w.iter().map(|v| v / l2(&spec.w)).collect();
        // Margin at least σ/4 keeps the majority far from a tie at this n.
        let side = if trial % 2 == 0 { 1.0 } else { -1.0 };
        let t = side * uniform(&mut rng, 0.25, 2.0);
        let x: Vec<f64> = unit.iter().map(|u| t * 0.5 * u).collect();
        let cfg = SmoothingConfig::new(0.5, d).unwrap();
        let tally =
            sample_class_statistics(&spec, &x, &cfg, 20_000, RngSpec::new(trial, 0)).unwrap();
        assert_eq!(tally.majority(), spec.classify(&x), "trial {trial}");
    }
}

#[test]
fn sampling_is_deterministic_and_stream_sensitive() {
    let spec = LinearClassifierSpec::new(vec![1.0, -1.0, 0.5], 0.1).unwrap();
    let cfg = SmoothingConfig::new(0.5, 3).unwrap();
    let x = [0.1, 0.2, 0.3];
    let a = sample_statistics(&spec, &x, 1, &cfg, 5001, RngSpec::new(9, 2)).unwrap();
    let b = sample_statistics(&spec, &x, 1, &cfg, 5001, RngSpec::new(9, 2)).unwrap();
    assert_eq!(a, b);
    for (u, v) in a
        .x_sum
        .iter()
        .zip(&b.x_sum)
        .chain(a.y_sum.iter().zip(&b.y_sum))
    {
        assert_eq!(u.to_bits(), v.to_bits());
    }
    let c = sample_statistics(&spec, &x, 1, &cfg, 5001, RngSpec::new(9, 3)).unwrap();
    assert_ne!(a.x_sum, c.x_sum);
    assert_eq!((a.n1, a.n2), (2501, 2500));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_linear_agrees_with_thresholding(
        w in prop::collection::vec(-2.0f64..2.0, 3),
        b in -1.0f64..1.0,
        x in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        prop_assume!(l2(&w) > 1e-6);
        let spec = LinearClassifierSpec::new(w.clone(), b).unwrap();
        let f = make_synthetic(&SyntheticSpec::Linear { w, b }).unwrap();
        prop_assert_eq!(f.classify(&x), spec.classify(&x));
        prop_assert_eq!(f.classify(&x), usize::from(spec.score(&x) <= 0.0));
    }

    #[test]
    fn merge_is_associative(seeds in prop::array::uniform3(0u64..1000)) {
        let spec = LinearClassifierSpec::new(vec![1.0, 0.5], -0.2).unwrap();
        let cfg = SmoothingConfig::new(0.5, 2).unwrap();
        let part = |s: u64| sample_statistics(&spec, &[0.1, 0.1], 1, &cfg, 64, RngSpec::new(s, 1)).unwrap();
        let (a, b, c) = (part(seeds[0]), part(seeds[1]), part(seeds[2]));
        let mut left = a.clone();
        left.merge(&b).unwrap();
        left.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut right = a.clone();
        right.merge(&bc).unwrap();
        prop_assert_eq!(left.n1, right.n1);
        prop_assert_eq!(left.n2, right.n2);
        prop_assert_eq!(left.success_count, right.success_count);
        for (u, v) in left.x_sum.iter().zip(&right.x_sum).chain(left.y_sum.iter().zip(&right.y_sum)) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn analytic_probability_is_at_least_one_half(
        w in prop::collection::vec(-2.0f64..2.0, 4),
        b in -1.0f64..1.0,
        x in prop::collection::vec(-3.0f64..3.0, 4),
        sigma in 0.1f64..2.0,
    ) {
        prop_assume!(l2(&w) > 1e-6);
        let spec = LinearClassifierSpec::new(w, b).unwrap();
        let cfg = SmoothingConfig::new(sigma, 4).unwrap();
        let (y0, y1) = analytic_linear_stats(&spec, &x, &cfg).unwrap();
        prop_assert!((0.5..=1.0).contains(&y0));
        // The gradient never exceeds the feasibility limit φ(Φ⁻¹(y0))/σ.
        let t = spec.score(&x).abs() / (sigma * l2(&spec.w));
        let limit = (-0.5 * t * t).exp() * DENS_0 / sigma;
        prop_assert!((l2(&y1) - limit).abs() <= 1e-12 * (1.0 + limit));
    }
}
