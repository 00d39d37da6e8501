//! Certified radii from zeroth- and first-order information.
//!
//! The zeroth-order radius `σ Φ⁻¹(q)` uses only a lower bound on the
//! top-class probability. The first-order radii additionally use bounds on
//! the gradient of the smoothed probability: the worst-case probability
//! along a direction is obtained from a three-constraint dual problem
//! ([`solve_dual`]) and the radius is the distance at which it reaches 1/2.

mod dual;
mod types;

pub use dual::{
    check_feasible, max_gradient_magnitude, DualOptions, FEASIBILITY_SLACK, ORTHOGONAL_FLOOR,
};
pub use types::{
    Certificate, DualSolution, DualVariant, FirstOrderStats, GradientNormBounds, Method, NormKind,
    RadiusOutcome, SmoothingConfig, SubspaceBound, ThreatModel,
};

use serde::{Deserialize, Serialize};

use crate::numerics::{
    solve_system, std_normal_cdf, std_normal_pdf, std_normal_quantile, try_bisect_root,
};
use crate::{Error, Result};
use dual::{interval_probability, prepare, solve_interval, DualEngine, Prepared};

/// How the ℓ∞ radius is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinfMode {
    /// Worst case along the direction aligned with the sign pattern of the
    /// gradient, using an ℓ1 gradient bound.
    ViaL1Bound,
    /// The ℓ2 radius divided by `√d`.
    #[default]
    ViaL2Scaling,
}

/// Labelling of the slab endpoints in the ℓ2 interval system.
///
/// `Standard` is the convention under which a linear classifier reproduces
/// the exact radius. `Mirrored` swaps the endpoints and exists only so the
/// self-test can demonstrate that the halfspace check detects the mistake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalConvention {
    #[default]
    Standard,
    Mirrored,
}

/// Default cap on the scaled search distance.
pub const DEFAULT_R_CAP: f64 = 10.0;

/// Radius computations with shared numerical options.
#[derive(Debug, Clone, Copy)]
pub struct Certifier {
    pub dual: DualOptions,
    /// Search cap in scaled units; radii beyond `σ · r_cap` are reported as
    /// capped.
    pub r_cap: f64,
    /// Tolerance on the scaled radius.
    pub tol: f64,
    pub convention: IntervalConvention,
}

impl Default for Certifier {
    fn default() -> Self {
        Self {
            dual: DualOptions::default(),
            r_cap: DEFAULT_R_CAP,
            tol: 1e-7,
            convention: IntervalConvention::Standard,
        }
    }
}

/// `σ Φ⁻¹(q)` for `q > 1/2`; zero (abstain) otherwise.
pub fn zeroth_radius_l2(q: f64, cfg: &SmoothingConfig) -> f64 {
    if q > 0.5 && q < 1.0 {
        cfg.sigma * std_normal_quantile(q).unwrap_or(0.0)
    } else if q >= 1.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Zeroth-order radius for any threat model.
///
/// The ℓ2 ball of radius `R` contains the ℓ1 ball of radius `R` and the ℓ∞
/// ball of radius `R / √k` in `k` dimensions.
pub fn zeroth_radius(
    threat: ThreatModel,
    q: f64,
    cfg: &SmoothingConfig,
    subspace_dim: Option<usize>,
) -> f64 {
    let r = zeroth_radius_l2(q, cfg);
    match threat {
        ThreatModel::L1 | ThreatModel::L2 | ThreatModel::SubspaceL1 | ThreatModel::SubspaceL2 => r,
        ThreatModel::Linf => r / (cfg.dim as f64).sqrt(),
        ThreatModel::SubspaceLinf => r / (subspace_dim.unwrap_or(cfg.dim) as f64).sqrt(),
    }
}

/// Worst-case dual coefficients at scaled distance `r`.
pub fn solve_dual(stats: &FirstOrderStats, r: f64) -> Result<DualSolution> {
    Certifier::default().solve_dual(stats, r)
}

/// Worst-case smoothed probability at scaled distance `r`.
pub fn lower_bound_probability(stats: &FirstOrderStats, r: f64) -> Result<f64> {
    Certifier::default().lower_bound_probability(stats, r)
}

pub fn directional_radius(
    stats: &FirstOrderStats,
    cfg: &SmoothingConfig,
    tol: f64,
) -> Result<RadiusOutcome> {
    Certifier::with_tol(tol).directional_radius(stats, cfg)
}

pub fn radius_l2_first(q: f64, grad_l2_upper: f64, cfg: &SmoothingConfig) -> Result<RadiusOutcome> {
    Certifier::default().radius_l2_first(q, grad_l2_upper, cfg)
}

pub fn radius_l1_first(
    q: f64,
    bounds: &GradientNormBounds,
    cfg: &SmoothingConfig,
    tol: f64,
) -> Result<RadiusOutcome> {
    Certifier::with_tol(tol).radius_l1_first(q, bounds, cfg)
}

pub fn radius_linf_first(
    q: f64,
    bounds: &GradientNormBounds,
    cfg: &SmoothingConfig,
    tol: f64,
    mode: LinfMode,
) -> Result<RadiusOutcome> {
    Certifier::with_tol(tol).radius_linf_first(q, bounds, cfg, mode)
}

pub fn radius_subspace(
    q: f64,
    bounds: &GradientNormBounds,
    p: NormKind,
    subspace_dim: usize,
    cfg: &SmoothingConfig,
    tol: f64,
) -> Result<RadiusOutcome> {
    Certifier::with_tol(tol).radius_subspace(q, bounds, p, subspace_dim, cfg)
}

impl Certifier {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_cap > 0.0 && self.r_cap.is_finite()) {
            return Err(Error::domain("search cap must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("radius tolerance must be positive"));
        }
        Ok(())
    }

    pub fn solve_dual(&self, stats: &FirstOrderStats, r: f64) -> Result<DualSolution> {
        let prepared = prepare(stats, self.dual.clamp_infeasible)?;
        DualEngine::new(self.dual).solve(&prepared, r)
    }

    pub fn lower_bound_probability(&self, stats: &FirstOrderStats, r: f64) -> Result<f64> {
        if r == 0.0 {
            stats.validate()?;
            return Ok(stats.q);
        }
        let dual = self.solve_dual(stats, r)?;
        dual.probability_at(r, &self.dual.quadrature)
    }

    /// Worst-case probabilities on a grid of distances, reusing each solve as
    /// the starting point of the next.
    pub fn probability_curve(&self, stats: &FirstOrderStats, rs: &[f64]) -> Result<Vec<f64>> {
        let prepared = prepare(stats, self.dual.clamp_infeasible)?;
        let mut engine = DualEngine::new(self.dual);
        rs.iter()
            .map(|&r| {
                if r == 0.0 {
                    Ok(stats.q)
                } else {
                    engine
                        .solve(&prepared, r)?
                        .probability_at(r, &self.dual.quadrature)
                }
            })
            .collect()
    }

    /// Largest distance along the direction encoded by `stats` at which the
    /// worst-case probability stays at or above 1/2, in input units.
    pub fn directional_radius(
        &self,
        stats: &FirstOrderStats,
        cfg: &SmoothingConfig,
    ) -> Result<RadiusOutcome> {
        self.validate()?;
        cfg.validate()?;
        stats.validate()?;
        let q = stats.q;
        if q <= 0.5 {
            return Ok(RadiusOutcome::abstain());
        }
        if q >= 1.0 {
            let mut out = RadiusOutcome::plain(cfg.sigma * self.r_cap);
            out.capped = true;
            return Ok(out);
        }
        let uninformative =
            stats.m1 == 0.0 && stats.m2 == 0.0 && stats.m1_upper.is_none_or(|u| u == 0.0);
        if uninformative {
            let mut out = RadiusOutcome::plain(zeroth_radius_l2(q, cfg));
            out.degenerate = true;
            return Ok(out);
        }
        let prepared = prepare(stats, self.dual.clamp_infeasible)?;
        let scaled = self.search(&prepared, q)?;
        Ok(scaled.scaled(cfg.sigma))
    }

    /// Root of `p(r) = 1/2` on `[0, r_cap]` in scaled units.
    fn search(&self, prepared: &Prepared, q: f64) -> Result<RadiusOutcome> {
        let spec = self.dual.quadrature;
        let mut engine = DualEngine::new(self.dual);
        let mut iterations = 0usize;
        let mut fallback = false;
        let mut eval = |engine: &mut DualEngine, r: f64| -> Result<f64> {
            if r == 0.0 {
                return Ok(q - 0.5);
            }
            let sol = match engine.solve(prepared, r) {
                Ok(sol) => sol,
                Err(_) => {
                    // Continuation can steer into a poor basin; retry cold.
                    *engine = DualEngine::new(self.dual);
                    engine.solve(prepared, r)?
                }
            };
            iterations += sol.iterations;
            fallback |= sol.fallback_used;
            Ok(sol.probability_at(r, &spec)? - 0.5)
        };

        // March outwards so each solve starts close to the previous one;
        // the certified set along a ray is an interval, so the first sign
        // change is the only one.
        let step = 0.5_f64.min(self.r_cap);
        let mut lo = 0.0;
        let mut hi = f64::NAN;
        let mut r = step;
        loop {
            let r_eval = r.min(self.r_cap);
            if eval(&mut engine, r_eval)? < 0.0 {
                hi = r_eval;
                break;
            }
            lo = r_eval;
            if r_eval >= self.r_cap {
                break;
            }
            r += step;
        }
        if hi.is_nan() {
            let mut out = RadiusOutcome::plain(self.r_cap);
            out.capped = true;
            out.iterations = iterations;
            out.fallback_used = fallback;
            return Ok(out);
        }
        let root = try_bisect_root(|r| eval(&mut engine, r), lo, hi, self.tol)?;
        let mut out = RadiusOutcome::plain(root);
        out.iterations = iterations;
        out.fallback_used = fallback;
        Ok(out)
    }

    /// ℓ2 radius from an upper bound on `‖∇g‖₂`.
    ///
    /// With only the gradient norm known, the worst case is a slab
    /// `{w2 ≤ z₁ ≤ w1}` whose Gaussian mass is `q` and whose endpoint
    /// densities differ by `σ · grad_l2_upper`; the radius is the shift at
    /// which the slab mass falls to 1/2.
    pub fn radius_l2_first(
        &self,
        q: f64,
        grad_l2_upper: f64,
        cfg: &SmoothingConfig,
    ) -> Result<RadiusOutcome> {
        self.validate()?;
        cfg.validate()?;
        if !(grad_l2_upper >= 0.0) {
            return Err(Error::domain("gradient norm bound must be non-negative"));
        }
        if q <= 0.5 {
            return Ok(RadiusOutcome::abstain());
        }
        if q >= 1.0 {
            let mut out = RadiusOutcome::plain(cfg.sigma * self.r_cap);
            out.capped = true;
            return Ok(out);
        }
        let limit = max_gradient_magnitude(q)?;
        let m = cfg.sigma * grad_l2_upper;
        if m >= limit && self.convention == IntervalConvention::Standard {
            // Vacuous bound: the halfspace, i.e. the zeroth-order answer.
            let mut out = RadiusOutcome::plain(zeroth_radius_l2(q, cfg));
            out.degenerate = true;
            return Ok(out);
        }
        let m = m.min(limit);
        let directional = match self.convention {
            IntervalConvention::Standard => -m,
            IntervalConvention::Mirrored => m,
        };
        let (w2, w1) = solve_interval(q, directional)?;
        let p = |r: f64| interval_probability(w2, w1, r) - 0.5;
        if p(self.r_cap) > 0.0 {
            let mut out = RadiusOutcome::plain(cfg.sigma * self.r_cap);
            out.capped = true;
            return Ok(out);
        }
        let mut r = try_bisect_root(|r| Ok(p(r)), 0.0, self.r_cap, 1e-13)?;
        let mut iterations = 0;
        if w1.is_finite() && w2.is_finite() {
            // Polish (r, w1, w2) on the joint system.
            let sign = if self.convention == IntervalConvention::Standard {
                1.0
            } else {
                -1.0
            };
            let polished = solve_system(
                |v: &[f64]| {
                    let (r, w1, w2) = (v[0], v[1], v[2]);
                    Ok(vec![
                        std_normal_cdf(w1 - r) - std_normal_cdf(w2 - r) - 0.5,
                        std_normal_cdf(w1) - std_normal_cdf(w2) - q,
                        sign * (std_normal_pdf(w1) - std_normal_pdf(w2)) - m,
                    ])
                },
                &[r, w1, w2],
                &self.dual.solver,
            );
            if let Ok(sol) = polished {
                if (sol.point[0] - r).abs() < 1e-8 {
                    r = sol.point[0];
                    iterations = sol.iterations;
                }
            }
        }
        let mut out = RadiusOutcome::plain(cfg.sigma * r);
        out.iterations = iterations;
        Ok(out)
    }

    /// ℓ1 radius: the worst direction is a signed coordinate axis, along
    /// which the directional derivative is `-‖∇g‖∞`.
    pub fn radius_l1_first(
        &self,
        q: f64,
        bounds: &GradientNormBounds,
        cfg: &SmoothingConfig,
    ) -> Result<RadiusOutcome> {
        bounds.validate()?;
        if q <= 0.5 {
            return Ok(RadiusOutcome::abstain());
        }
        let s = cfg.sigma;
        let stats = self.directional_stats(
            q,
            s * bounds.linf_upper,
            s * bounds.linf_lower,
            s * (bounds.l2_lower.powi(2) - bounds.linf_upper.powi(2))
                .max(0.0)
                .sqrt(),
        )?;
        let direct = self.directional_radius(&stats, cfg)?;
        Ok(at_least(
            direct,
            self.radius_l2_first(q, bounds.l2_upper, cfg)?,
        ))
    }

    /// ℓ∞ radius, either from an ℓ1 gradient bound along the sign-pattern
    /// direction or by scaling the ℓ2 radius.
    pub fn radius_linf_first(
        &self,
        q: f64,
        bounds: &GradientNormBounds,
        cfg: &SmoothingConfig,
        mode: LinfMode,
    ) -> Result<RadiusOutcome> {
        bounds.validate()?;
        if q <= 0.5 {
            return Ok(RadiusOutcome::abstain());
        }
        let sqrt_d = (cfg.dim as f64).sqrt();
        match mode {
            LinfMode::ViaL2Scaling => Ok(self
                .radius_l2_first(q, bounds.l2_upper, cfg)?
                .scaled(1.0 / sqrt_d)),
            LinfMode::ViaL1Bound => {
                let l1_upper = bounds.l1_upper.ok_or_else(|| {
                    Error::domain("the l1-bound linf path requires an l1 upper bound")
                })?;
                let s = cfg.sigma / sqrt_d;
                let d = cfg.dim as f64;
                let stats = self.directional_stats(
                    q,
                    s * l1_upper,
                    s * bounds.l1_lower,
                    s * (d * bounds.l2_lower.powi(2) - l1_upper.powi(2))
                        .max(0.0)
                        .sqrt(),
                )?;
                // The direction (sign pattern)/√d has unit ℓ2 norm and ℓ∞
                // norm 1/√d.
                let direct = self.directional_radius(&stats, cfg)?.scaled(1.0 / sqrt_d);
                let implied = self
                    .radius_l2_first(q, bounds.l2_upper, cfg)?
                    .scaled(1.0 / sqrt_d);
                Ok(at_least(direct, implied))
            }
        }
    }

    /// Radius for perturbations restricted to a coordinate subspace, measured
    /// in the ℓp norm within the subspace.
    pub fn radius_subspace(
        &self,
        q: f64,
        bounds: &GradientNormBounds,
        p: NormKind,
        subspace_dim: usize,
        cfg: &SmoothingConfig,
    ) -> Result<RadiusOutcome> {
        bounds.validate()?;
        if subspace_dim == 0 || subspace_dim > cfg.dim {
            return Err(Error::domain(format!(
                "subspace dimension {subspace_dim} must lie in [1, {}]",
                cfg.dim
            )));
        }
        let sub = bounds.subspace.ok_or_else(|| {
            Error::domain("subspace certification requires a subspace gradient bound")
        })?;
        if q <= 0.5 {
            return Ok(RadiusOutcome::abstain());
        }
        // ℓ∞ balls are handled through the sign-pattern direction of unit
        // ℓ2 norm, which has ℓ∞ norm 1/√k for a k-dimensional subspace.
        let scale = match p {
            NormKind::Linf => 1.0 / (subspace_dim as f64).sqrt(),
            NormKind::L1 | NormKind::L2 => 1.0,
        };
        let s = cfg.sigma * scale;
        let perp = (bounds.l2_lower.powi(2) - (scale * sub.dual_upper).powi(2))
            .max(0.0)
            .sqrt();
        let stats =
            self.directional_stats(q, s * sub.dual_upper, s * sub.dual_lower, cfg.sigma * perp)?;
        let direct = self.directional_radius(&stats, cfg)?.scaled(scale);
        Ok(at_least(
            direct,
            self.radius_l2_first(q, bounds.l2_upper, cfg)?.scaled(scale),
        ))
    }

    /// Directional statistics for a direction whose derivative lies in
    /// `[-upper, -lower]`, with orthogonal lower bound `m2`.
    fn directional_stats(
        &self,
        q: f64,
        upper: f64,
        lower: f64,
        m2: f64,
    ) -> Result<FirstOrderStats> {
        let limit = if q > 0.0 && q < 1.0 {
            max_gradient_magnitude(q)?
        } else {
            0.0
        };
        // Bounds beyond the gradient limit carry no information.
        let m1 = -(upper.min(limit));
        let m1_upper = -(lower.min(upper).min(limit));
        Ok(FirstOrderStats {
            q,
            m1,
            m2,
            m1_upper: Some(m1_upper),
        })
    }
}

/// The larger of two valid radii. Ball inclusions make every ℓ2
/// certificate a certificate for the ℓ1, ℓ∞ and subspace balls it contains,
/// so the directional answer never needs to fall below it.
fn at_least(direct: RadiusOutcome, implied: RadiusOutcome) -> RadiusOutcome {
    if implied.radius > direct.radius && !implied.abstained {
        RadiusOutcome {
            iterations: direct.iterations + implied.iterations,
            fallback_used: direct.fallback_used,
            ..implied
        }
    } else {
        direct
    }
}
