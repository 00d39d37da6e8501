//! Special functions, quadrature and root finders against high-precision
//! reference values (mpmath at 40 digits).

// Reference values keep every digit of the high-precision evaluation.
#![allow(clippy::excessive_precision)]

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use smoothcert::numerics::{
    bisect_root, gauss_weighted_integral, solve_system, std_normal_cdf, std_normal_pdf,
    std_normal_quantile, QuadratureSpec, SolverSettings,
};
use smoothcert::Error;

#[test]
fn cdf_matches_reference() {
    let cases = [
        (1.0, 0.841_344_746_068_542_95),
        (-5.0, 2.866_515_718_791_939_1e-7),
        (-10.0, 7.619_853_024_160_526e-24),
        (3.3, 0.999_516_575_857_616_22),
        (-37.0, 5.725_571_222_524_577e-300),
    ];
    for (x, want) in cases {
        let got = std_normal_cdf(x);
        // Far in the tail the relative condition number is about x², so
        // rounding the argument alone costs ~1e-13.
        let rel = if x.abs() > 20.0 { 1e-12 } else { 1e-14 };
        assert!(
            (got - want).abs() <= rel * want,
            "Φ({x}) = {got:e}, want {want:e}"
        );
    }
    assert_eq!(std_normal_cdf(0.0), 0.5);
    assert!(std_normal_cdf(-40.0) <= 1e-300);
}

#[test]
fn quantile_matches_reference() {
    let cases = [
        (0.9, 1.281_551_565_544_600_5),
        (0.975, 1.959_963_984_540_054_2),
        (1e-10, -6.361_340_902_404_056),
        (0.841_344_7, 0.999_999_809_611_106_2),
    ];
    for (p, want) in cases {
        let got = std_normal_quantile(p).unwrap();
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "Φ⁻¹({p}) = {got}, want {want}"
        );
    }
    assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    assert!((std_normal_quantile(0.841_344_746_068_542_95).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn quantile_rejects_the_boundary() {
    for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(
            matches!(std_normal_quantile(p), Err(Error::Domain(_))),
            "p = {p}"
        );
    }
}

#[test]
fn pdf_matches_reference() {
    assert_abs_diff_eq!(
        std_normal_pdf(0.0),
        0.398_942_280_401_432_7,
        epsilon = 1e-16
    );
    assert_abs_diff_eq!(
        std_normal_pdf(1.0),
        0.241_970_724_519_143_35,
        epsilon = 1e-16
    );
}

#[test]
fn quadrature_examples() {
    let spec = QuadratureSpec::default();
    assert_abs_diff_eq!(
        gauss_weighted_integral(|_| 1.0, 0.0, &spec).unwrap(),
        1.0,
        epsilon = 1e-10
    );
    assert_abs_diff_eq!(
        gauss_weighted_integral(|x| x, 0.0, &spec).unwrap(),
        0.0,
        epsilon = 1e-10
    );
    assert_abs_diff_eq!(
        gauss_weighted_integral(std_normal_cdf, 0.0, &spec).unwrap(),
        0.5,
        epsilon = 1e-9
    );
    // Second moment about a shifted centre: E[X²] = 1 + μ².
    assert_abs_diff_eq!(
        gauss_weighted_integral(|x| x * x, 1.5, &spec).unwrap(),
        3.25,
        epsilon = 1e-10
    );
}

#[test]
fn quadrature_reports_non_finite_abscissa() {
    let spec = QuadratureSpec::default();
    let err =
        gauss_weighted_integral(|x| if x > 3.0 { f64::NAN } else { 1.0 }, 0.0, &spec).unwrap_err();
    match err {
        Error::NonFinite { abscissa } => assert!(abscissa > 3.0),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn quadrature_spec_validation() {
    assert!(QuadratureSpec::new(1.0, -1.0, 64, 1e-10).is_err());
    assert!(QuadratureSpec::new(-12.0, 12.0, 0, 1e-10).is_err());
    assert!(QuadratureSpec::new(-12.0, 12.0, 64, 1e-3).is_err());
    assert!(QuadratureSpec::new(-12.0, 12.0, 64, 1e-8).is_ok());
}

#[test]
fn newton_examples() {
    let settings = SolverSettings::default();
    let sol = solve_system(|x| Ok(vec![x[0] - 3.0]), &[0.0], &settings).unwrap();
    assert_abs_diff_eq!(sol.point[0], 3.0, epsilon = 1e-10);
    let sol = solve_system(
        |x| Ok(vec![x[0] * x[0] + x[1] - 2.0, x[1] - 1.0]),
        &[2.0, 2.0],
        &settings,
    )
    .unwrap();
    assert_abs_diff_eq!(sol.point[0], 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(sol.point[1], 1.0, epsilon = 1e-9);
    assert!(sol.residual_norm <= settings.residual_tolerance);
}

#[test]
fn newton_reports_no_convergence() {
    // x² + 1 has no real root.
    let err = solve_system(
        |x| Ok(vec![x[0] * x[0] + 1.0]),
        &[0.5],
        &SolverSettings::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoConvergence { .. }), "{err}");
}

#[test]
fn bisection_examples() {
    assert_abs_diff_eq!(
        bisect_root(|x| x - 1.0, 0.0, 2.0, 1e-12).unwrap(),
        1.0,
        epsilon = 1e-12
    );
    let r = bisect_root(|x| std_normal_cdf(1.0 - x) - 0.5, 0.0, 4.0, 1e-12).unwrap();
    assert_abs_diff_eq!(r, 1.0, epsilon = 1e-11);
    assert!(matches!(
        bisect_root(|x| x + 10.0, 0.0, 1.0, 1e-12),
        Err(Error::Bracket { .. })
    ));
}

proptest! {
    #[test]
    fn cdf_symmetry(x in -38.0f64..38.0) {
        prop_assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn cdf_monotone(a in -30.0f64..30.0, h in 0.0f64..5.0) {
        prop_assert!(std_normal_cdf(a + h) >= std_normal_cdf(a));
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-12f64..(1.0 - 1e-12)) {
        let x = std_normal_quantile(p).unwrap();
        prop_assert!((std_normal_cdf(x) - p).abs() <= 1e-12 * p.max(1e-3), "p = {}", p);
    }

    #[test]
    fn density_sections_integrate_below_one(lo in -15.0f64..15.0, width in 0.0f64..30.0, center in -3.0f64..3.0) {
        let spec = QuadratureSpec::default();
        let hi = lo + width;
        let v = gauss_weighted_integral(|x| if x >= lo && x <= hi { 1.0 } else { 0.0 }, center, &spec).unwrap();
        prop_assert!(v <= 1.0 + spec.abs_tolerance);
        prop_assert!(v >= -spec.abs_tolerance);
    }

    #[test]
    fn doubling_panels_is_stable(shift in -2.0f64..2.0, slope in 0.2f64..8.0, offset in -3.0f64..3.0) {
        let coarse = QuadratureSpec::default();
        let fine = QuadratureSpec { panel_count: 2 * coarse.panel_count, ..coarse };
        let g = |x: f64| std_normal_cdf(offset - slope * x);
        let a = gauss_weighted_integral(g, shift, &coarse).unwrap();
        let b = gauss_weighted_integral(g, shift, &fine).unwrap();
        prop_assert!((a - b).abs() < coarse.abs_tolerance, "{} vs {}", a, b);
    }

    #[test]
    fn newton_recovers_known_roots(root in prop::array::uniform2(-3.0f64..3.0), jitter in prop::array::uniform2(-0.5f64..0.5)) {
        let settings = SolverSettings::default();
        let f = |x: &[f64]| {
            Ok(vec![
                (x[0] - root[0]) + 0.3 * (x[1] - root[1]).powi(3),
                (x[1] - root[1]).exp() - 1.0 + 0.2 * (x[0] - root[0]),
            ])
        };
        let start = [root[0] + jitter[0], root[1] + jitter[1]];
        let sol = solve_system(f, &start, &settings).unwrap();
        prop_assert!(sol.residual_norm <= settings.residual_tolerance);
        prop_assert!((sol.point[0] - root[0]).abs() < 1e-8 && (sol.point[1] - root[1]).abs() < 1e-8);
    }
}
