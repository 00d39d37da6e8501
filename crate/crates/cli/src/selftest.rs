//! Oracle self-test: analytic halfspace cases and Monte-Carlo cross-checks.

use std::time::Instant;

use smoothcert::certify::{
    max_gradient_magnitude, zeroth_radius_l2, Certifier, FirstOrderStats, GradientNormBounds,
    IntervalConvention, LinfMode, NormKind, SmoothingConfig,
};
use smoothcert::classifiers::{
    analytic_linear_radius, analytic_linear_stats, mc_worst_case_probability, sample_statistics,
    GaussianStream, LinearClassifierSpec, RngSpec,
};
use smoothcert::estimate::{estimate_q_lower, l2_norm_bounds, linf_norm_bounds};
use smoothcert::numerics::std_normal_quantile;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    pub quick: bool,
    pub convention: IntervalConvention,
}

fn timed(name: &'static str, f: impl FnOnce() -> anyhow::Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e:#}")),
    };
    Check {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn random_linear(seed: u64, dim: usize) -> (LinearClassifierSpec, Vec<f64>) {
    let mut s = GaussianStream::at_draw(RngSpec::new(seed, 0x5e1f), 0, 2 * dim + 1);
    let mut v = vec![0.0; 2 * dim + 1];
    s.fill_normals(&mut v);
    let w = v[..dim].to_vec();
    let x = v[dim..2 * dim].to_vec();
    (LinearClassifierSpec { w, b: v[2 * dim] }, x)
}

pub fn run(opts: SelftestOptions) -> Vec<Check> {
    let certifier = Certifier {
        convention: opts.convention,
        ..Certifier::default()
    };
    let mut checks = vec![
        timed("zeroth-order closed form", || {
            let mut worst: f64 = 0.0;
            for sigma in [0.12, 0.25, 0.5, 1.0] {
                let cfg = SmoothingConfig::new(sigma, 1)?;
                for i in 0..50 {
                    let q = 0.5 + (0.999 - 0.5) * (i as f64 + 0.5) / 50.0;
                    worst = worst
                        .max((zeroth_radius_l2(q, &cfg) - sigma * std_normal_quantile(q)?).abs());
                }
            }
            Ok((worst <= 1e-9, format!("max deviation {worst:.2e}")))
        }),
        timed("halfspace l2 exactness", || {
            let mut worst: f64 = 0.0;
            for (i, d) in [2usize, 4, 16]
                .into_iter()
                .cycle()
                .take(if opts.quick { 3 } else { 10 })
                .enumerate()
            {
                let (spec, x) = random_linear(i as u64, d);
                let cfg = SmoothingConfig::new(0.5, d)?;
                let (q, grad) = analytic_linear_stats(&spec, &x, &cfg)?;
                if q > 0.999 {
                    continue;
                }
                let b = GradientNormBounds::exact(&grad, 1.0 - 1e-6, None);
                let r = certifier.radius_l2_first(q, b.l2_upper, &cfg)?.radius;
                let exact = analytic_linear_radius(&spec, &x, NormKind::L2, None, f64::INFINITY)?;
                worst = worst.max((r - exact).abs() / exact);
            }
            Ok((worst <= 0.02, format!("max relative error {worst:.2e}")))
        }),
        timed("halfspace l1 / linf exactness", || {
            let mut worst: f64 = 0.0;
            let count = if opts.quick { 2 } else { 6 };
            for (i, d) in [2usize, 4].into_iter().cycle().take(count).enumerate() {
                let (spec, x) = random_linear(100 + i as u64, d);
                let cfg = SmoothingConfig::new(0.5, d)?;
                let (q, grad) = analytic_linear_stats(&spec, &x, &cfg)?;
                if q > 0.999 {
                    continue;
                }
                let b = GradientNormBounds::exact(&grad, 1.0 - 1e-6, None);
                let r1 = certifier.radius_l1_first(q, &b, &cfg)?.radius;
                let e1 = analytic_linear_radius(&spec, &x, NormKind::L1, None, f64::INFINITY)?;
                let ri = certifier
                    .radius_linf_first(q, &b, &cfg, LinfMode::ViaL1Bound)?
                    .radius;
                let ei = analytic_linear_radius(&spec, &x, NormKind::Linf, None, f64::INFINITY)?;
                worst = worst.max((r1 - e1).abs() / e1).max((ri - ei).abs() / ei);
            }
            Ok((worst <= 0.05, format!("max relative error {worst:.2e}")))
        }),
        timed("l1 gain over zeroth order", || {
            let spec = LinearClassifierSpec {
                w: vec![0.5; 4],
                b: 0.0,
            };
            let x = vec![-0.5; 4];
            let cfg = SmoothingConfig::new(1.0, 4)?;
            let (q, grad) = analytic_linear_stats(&spec, &x, &cfg)?;
            let b = GradientNormBounds::exact(&grad, 1.0 - 1e-6, None);
            let r1 = certifier.radius_l1_first(q, &b, &cfg)?.radius;
            let r0 = zeroth_radius_l2(q, &cfg);
            Ok((r1 >= 1.5 * r0, format!("ratio {:.4}", r1 / r0)))
        }),
        timed("l2 dominance over zeroth order", || {
            let cfg = SmoothingConfig::new(1.0, 1)?;
            let mut worst = f64::INFINITY;
            let mut edge: f64 = 0.0;
            for q in [0.6, 0.75, 0.9, 0.99] {
                let limit = max_gradient_magnitude(q)?;
                let r0 = zeroth_radius_l2(q, &cfg);
                for frac in [0.25, 0.5, 0.75, 1.0] {
                    let r = certifier.radius_l2_first(q, frac * limit, &cfg)?.radius;
                    worst = worst.min(r - r0);
                    if frac == 1.0 {
                        edge = edge.max((r - r0).abs() / r0);
                    }
                }
            }
            Ok((
                worst >= -1e-6 && edge <= 0.01,
                format!("min gain {worst:.2e}, boundary mismatch {edge:.2e}"),
            ))
        }),
        timed("Monte-Carlo worst-case oracle", || {
            let tuples: &[(f64, f64, f64, f64)] = &[
                (0.8, 0.05, 0.1, 0.4),
                (0.9, 0.0, 0.08, 0.3),
                (0.9, -0.168, 0.05, 1.0),
                (0.7, -0.2, 0.1, 0.5),
                (0.75, 0.1, 0.15, 0.8),
                (0.95, 0.02, 0.03, 0.6),
            ];
            let n = if opts.quick { 200_000 } else { 1_000_000 };
            let used = if opts.quick { &tuples[..3] } else { tuples };
            let mut worst: f64 = 0.0;
            for (i, &(q, m1, m2, r)) in used.iter().enumerate() {
                let stats = FirstOrderStats::exact(q, m1, m2);
                let dual = certifier.solve_dual(&stats, r)?;
                let p = certifier.lower_bound_probability(&stats, r)?;
                let mc = mc_worst_case_probability(&dual, r, n, RngSpec::new(7, i as u64))?;
                worst = worst.max((p - mc.estimate).abs() / mc.stderr.max(1e-12));
            }
            Ok((
                worst <= 3.0,
                format!("max |z| {worst:.2} over {} tuples", used.len()),
            ))
        }),
    ];
    if !opts.quick {
        checks.push(timed("estimator coverage", || {
            let trials = 300;
            let alpha = 0.05;
            let d = 80;
            let mut spec_w = vec![0.0; d];
            spec_w[0] = 1.0;
            let spec = LinearClassifierSpec { w: spec_w, b: 0.0 };
            let mut x = vec![0.0; d];
            x[0] = -0.3;
            let cfg = SmoothingConfig::new(0.5, d)?;
            let (q, grad) = analytic_linear_stats(&spec, &x, &cfg)?;
            let s2 = cfg.sigma * cfg.sigma;
            let true_l2 = s2 * NormKind::L2.of(&grad);
            let true_linf = s2 * NormKind::Linf.of(&grad);
            let (mut cq, mut c2, mut ci) = (0, 0, 0);
            for t in 0..trials {
                let b = sample_statistics(&spec, &x, 1, &cfg, 2000, RngSpec::new(t, 1))?;
                cq += usize::from(estimate_q_lower(b.success_count, b.total(), alpha)? <= q);
                let l2 = l2_norm_bounds(&b, alpha / 2.0)?;
                c2 += usize::from(l2.lower <= true_l2 && true_l2 <= l2.upper);
                let li = linf_norm_bounds(&b, alpha)?;
                ci += usize::from(li.lower <= true_linf && true_linf <= li.upper);
            }
            let n = trials as f64;
            let floor = 1.0 - alpha - 3.0 * (alpha * (1.0 - alpha) / n).sqrt();
            let rates = [cq as f64 / n, c2 as f64 / n, ci as f64 / n];
            Ok((
                rates.iter().all(|&r| r >= floor),
                format!(
                    "coverage q {:.3}, l2 {:.3}, linf {:.3} (floor {floor:.3})",
                    rates[0], rates[1], rates[2]
                ),
            ))
        }));
    }
    checks
}
