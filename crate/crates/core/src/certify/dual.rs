//! The worst-case dual problem.
//!
//! In the standardized frame `(z₁, z₂)` — `z₁` along the travel direction,
//! `z₂` along the orthogonal gradient component — the worst-case base
//! classifier is the indicator of `{ z₂ + c(z₁) ≥ 0 }` with
//! `c(x) = c0 + c1 x + c2 e^{r x}`, `c2 < 0`. Its coefficients are fixed by
//! the moment constraints
//!
//! ```text
//!   ∫ φ(x) Φ(c(x)) dx   = q
//!   ∫ φ(x) φ(c(x)) dx   = m2
//!   ∫ x φ(x) Φ(c(x)) dx = m1
//! ```
//!
//! and the worst-case probability after travelling `r` is
//! `∫ φ(x - r) Φ(c(x)) dx`.
//!
//! Internally `c` is written as `A + B x + C h(x)` with
//! `h(x) = 2 (e^{rx} - 1 - rx) / r²`, which stays well conditioned as
//! `r → 0`, and `C = -e^s` so that only roots with the correct curvature
//! sign are reachable.

use std::cell::Cell;

use crate::numerics::{
    clamp_level, minimize_convex, std_normal_cdf, std_normal_pdf, std_normal_quantile,
    try_bisect_root, Quadratic, QuadratureSpec, SolverSettings, WeightedNodes,
};
use crate::{Error, Result};

use super::types::{DualSolution, DualVariant, FirstOrderStats};

/// Relative width of the band around the feasibility circle treated as the
/// circle itself.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Below this fraction of the gradient limit the orthogonal moment carries
/// no usable information and the one-dimensional slab worst case is used.
pub const ORTHOGONAL_FLOOR: f64 = 1e-7;

/// Numerical options shared by every dual solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DualOptions {
    pub quadrature: QuadratureSpec,
    pub solver: SolverSettings,
    /// Rescale infeasible statistics onto the feasibility boundary instead
    /// of failing.
    pub clamp_infeasible: bool,
}

/// `φ(Φ⁻¹(q))`: the largest value of `σ ‖∇g‖₂` compatible with `g = q`.
pub fn max_gradient_magnitude(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!(
            "gradient limit requires q in (0, 1), got {q}"
        )));
    }
    Ok(std_normal_pdf(std_normal_quantile(q)?))
}

/// Whether `(m1, m2)` lies inside the disk of achievable gradients.
pub fn check_feasible(stats: &FirstOrderStats) -> bool {
    let limit = if stats.q > 0.0 && stats.q < 1.0 {
        max_gradient_magnitude(stats.q).unwrap_or(0.0)
    } else {
        0.0
    };
    stats.m1.hypot(stats.m2) <= limit * (1.0 + FEASIBILITY_SLACK)
}

/// Level-set function in the stable basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Level {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r: f64,
}

/// `2 (e^{t} - 1 - t) / t²` multiplied back by `x²`, i.e. `h(x)` for `t = r x`.
#[inline]
fn curvature_term(r: f64, x: f64) -> f64 {
    let t = r * x;
    if t.abs() < 1e-3 {
        // Series keeps full relative accuracy where expm1(t) - t cancels.
        x * x * (1.0 + t / 3.0 + t * t / 12.0 + t * t * t / 60.0)
    } else {
        2.0 * (t.exp_m1() - t) / (r * r)
    }
}

impl Level {
    pub fn from_coefficients(c0: f64, c1: f64, c2: f64, r: f64) -> Self {
        Level {
            a: c0 + c2,
            b: c1 + r * c2,
            c: 0.5 * r * r * c2,
            r,
        }
    }

    pub fn coefficients(&self) -> (f64, f64, f64) {
        let c2 = 2.0 * self.c / (self.r * self.r);
        (self.a - c2, self.b - 2.0 * self.c / self.r, c2)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.c == 0.0 {
            self.a + self.b * x
        } else {
            self.a + self.b * x + self.c * curvature_term(self.r, x)
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        self.b + 2.0 * self.c * (self.r * x).exp_m1() / self.r
    }

    /// Abscissae around which `Φ(c(x))` changes quickly.
    fn breaks(&self, lo: f64, hi: f64, panel: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut segments = vec![(lo, hi)];
        // For C < 0 the level function is concave; a positive asymptotic
        // slope means an interior maximum.
        if self.c < 0.0 {
            let arg = 1.0 - self.b * self.r / (2.0 * self.c);
            if arg > 0.0 {
                let peak = arg.ln() / self.r;
                if peak > lo && peak < hi {
                    segments = vec![(lo, peak), (peak, hi)];
                    let top = self.eval(peak);
                    if top > -8.0 && top < 8.0 {
                        let curv = (2.0 * self.c * self.r * (self.r * peak).exp()).abs();
                        grade(&mut out, peak, 1.0 / curv.sqrt().max(1e-300), panel);
                    }
                }
            }
        }
        for (a, b) in segments {
            let (fa, fb) = (self.eval(a), self.eval(b));
            if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
                continue;
            }
            if let Ok(root) = try_bisect_root(
                |x| Ok(self.eval(x)),
                a,
                b,
                1e-12 * (1.0 + a.abs().max(b.abs())),
            ) {
                let slope = self.derivative(root).abs();
                if slope > 0.0 {
                    grade(&mut out, root, 1.0 / slope, panel);
                }
            }
        }
        out
    }

    pub fn nodes(&self, center: f64, spec: &QuadratureSpec) -> Result<WeightedNodes> {
        let lo = center + spec.lower;
        let hi = center + spec.upper;
        let breaks = self.breaks(lo, hi, spec.panel_width());
        WeightedNodes::new(center, spec, &breaks)
    }

    /// `(∫φΦ(c), ∫φφ(c), ∫xφΦ(c))`.
    pub fn moments(&self, spec: &QuadratureSpec) -> Result<[f64; 3]> {
        let nodes = self.nodes(0.0, spec)?;
        let mut acc = [0.0; 3];
        for (&x, &w) in nodes.nodes.iter().zip(&nodes.weights) {
            let c = clamp_level(self.eval(x));
            if !c.is_finite() {
                return Err(Error::NonFinite { abscissa: x });
            }
            let p = std_normal_cdf(c);
            acc[0] += w * p;
            acc[1] += w * std_normal_pdf(c);
            acc[2] += w * x * p;
        }
        Ok(acc)
    }

    pub fn probability(&self, shift: f64, spec: &QuadratureSpec) -> Result<f64> {
        let nodes = self.nodes(shift, spec)?;
        let v = nodes.integrate(|x| std_normal_cdf(clamp_level(self.eval(x))))?;
        Ok(v.clamp(0.0, 1.0))
    }
}

/// Geometric grading of breakpoints around a feature of width `width`.
fn grade(out: &mut Vec<f64>, at: f64, width: f64, panel: f64) {
    if !(width.is_finite() && width > 0.0) || width >= panel {
        return;
    }
    out.push(at);
    let mut w = 0.25 * width;
    while w < panel {
        out.push(at - w);
        out.push(at + w);
        w *= 2.0;
    }
}

impl DualSolution {
    pub(crate) fn level(&self) -> Level {
        Level::from_coefficients(self.c0, self.c1, self.c2, self.travel_scale)
    }

    /// Value of the level function `c(x)`.
    pub fn level_at(&self, x: f64) -> f64 {
        match self.variant {
            DualVariant::Interval { .. } => f64::NAN,
            _ => self.level().eval(x),
        }
    }

    /// Whether `(z₁, z₂)` lies in the worst-case acceptance region.
    pub fn contains(&self, z1: f64, z2: f64) -> bool {
        match self.variant {
            DualVariant::Interval { lower, upper } => z1 >= lower && z1 <= upper,
            _ => z2 + self.level().eval(z1) >= 0.0,
        }
    }

    /// Worst-case probability after travelling `shift` along `z₁`.
    pub fn probability_at(&self, shift: f64, spec: &QuadratureSpec) -> Result<f64> {
        match self.variant {
            DualVariant::Interval { lower, upper } => Ok(interval_probability(lower, upper, shift)),
            _ => self.level().probability(shift, spec),
        }
    }

    /// The three constrained moments `(mass, orthogonal, directional)`.
    pub fn moments(&self, spec: &QuadratureSpec) -> Result<[f64; 3]> {
        match self.variant {
            DualVariant::Interval { lower, upper } => Ok([
                interval_mass(lower, upper),
                0.0,
                std_normal_pdf(lower) - std_normal_pdf(upper),
            ]),
            _ => self.level().moments(spec),
        }
    }
}

fn interval_mass(lower: f64, upper: f64) -> f64 {
    if upper <= 0.0 {
        std_normal_cdf(upper) - std_normal_cdf(lower)
    } else if lower >= 0.0 {
        std_normal_cdf(-lower) - std_normal_cdf(-upper)
    } else {
        1.0 - std_normal_cdf(lower) - std_normal_cdf(-upper)
    }
}

pub(crate) fn interval_probability(lower: f64, upper: f64, shift: f64) -> f64 {
    interval_mass(lower - shift, upper - shift).clamp(0.0, 1.0)
}

/// Slab `[lo, hi]` with Gaussian mass `q` and `φ(lo) - φ(hi) = m1`.
///
/// `m1 ≤ -φ(Φ⁻¹(q))` returns the half-line `(-∞, Φ⁻¹(q)]`.
pub(crate) fn solve_interval(q: f64, m1: f64) -> Result<(f64, f64)> {
    let limit = max_gradient_magnitude(q)?;
    let half_line = std_normal_quantile(q)?;
    let gap = 1.0 - q;
    if m1 <= -limit * (1.0 - 1e-13) {
        return Ok((f64::NEG_INFINITY, half_line));
    }
    if m1 >= limit * (1.0 - 1e-13) {
        return Ok((-half_line, f64::INFINITY));
    }
    // hi is determined by lo through the mass constraint, computed from the
    // upper tail to keep precision when q is close to one.
    let hi_of = |lo: f64| -> Result<f64> {
        let tail = gap - std_normal_cdf(lo);
        if tail <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(-std_normal_quantile(tail)?)
    };
    let g = |lo: f64| -> Result<f64> {
        let hi = hi_of(lo)?;
        Ok(std_normal_pdf(lo) - std_normal_pdf(hi) - m1)
    };
    let upper_lo = -half_line;
    let mut lo_end = -12.0;
    while g(lo_end)? > 0.0 && lo_end > -38.0 {
        lo_end -= 4.0;
    }
    // g is increasing in lo with derivative φ(lo)(hi - lo) > 0.
    let hi_end = upper_lo - 1e-15 * (1.0 + upper_lo.abs());
    let lo = try_bisect_root(g, lo_end, hi_end, 1e-15)?;
    Ok((lo, hi_of(lo)?))
}

/// Orthogonal moments below this fraction of the feasibility limit start
/// the full solve from the scaled slab.
const SLAB_START_FRACTION: f64 = 0.05;

/// Consecutive full-solve failures before the engine stops trying.
const FULL_FAILURE_LIMIT: usize = 3;

/// Solver state for one set of statistics across many travel distances.
pub(crate) struct DualEngine {
    pub opts: DualOptions,
    /// Previous reduced solution for continuation in `r`.
    reduced_warm: Option<Level>,
    /// Previous full solution for continuation in `r`.
    full_warm: Option<Level>,
    /// Consecutive failed full solves. Past [`FULL_FAILURE_LIMIT`] the
    /// statistics are taken to sit at the feasibility boundary and later
    /// travel distances go straight to the relaxation.
    full_failures: usize,
}

/// Statistics after feasibility handling and relaxation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Prepared {
    /// Closed-form slab worst case.
    Interval { lo: f64, hi: f64 },
    /// The feasible set is a single point on the feasibility circle: the
    /// worst case is the halfspace with that gradient.
    Halfspace { c0: f64, c1: f64 },
    /// General case requiring the moment solve.
    General {
        q: f64,
        m1: f64,
        m1_upper: Option<f64>,
        m2: f64,
    },
}

/// Validate statistics and reduce them to one of the solvable cases.
pub(crate) fn prepare(stats: &FirstOrderStats, clamp: bool) -> Result<Prepared> {
    stats.validate()?;
    let q = stats.q;
    if !(q > 0.5 && q < 1.0) {
        return Err(Error::domain(format!(
            "the worst-case solve requires q in (0.5, 1), got {q}"
        )));
    }
    let limit = max_gradient_magnitude(q)?;
    let (mut m1, mut m2, mut m1_upper) = (stats.m1, stats.m2, stats.m1_upper);
    let norm = m1.hypot(m2);
    if norm > limit * (1.0 + FEASIBILITY_SLACK) {
        if !clamp {
            return Err(Error::Infeasible { norm, limit });
        }
        let scale = limit / norm;
        m1 *= scale;
        m2 *= scale;
        m1_upper = m1_upper.map(|u| u.max(m1));
    }
    m2 = m2.min(limit);
    // A directional lower bound below the disk edge at this orthogonal
    // level constrains nothing; raise it to the edge.
    let edge = (limit * limit - m2 * m2).max(0.0).sqrt();
    if m1 < -edge {
        m1 = -edge;
    }
    if let Some(u) = m1_upper.as_mut() {
        *u = u.max(m1);
    }
    if m2 <= ORTHOGONAL_FLOOR * limit {
        // The upper bound on m1 can never bind in one dimension.
        let (lo, hi) = solve_interval(q, m1)?;
        return Ok(Prepared::Interval { lo, hi });
    }
    let norm = m1.hypot(m2);
    let pinned = m1 >= 0.0 || m1_upper.is_some_and(|u| u - m1 <= FEASIBILITY_SLACK * limit);
    if norm >= limit * (1.0 - FEASIBILITY_SLACK) && pinned {
        // Halfspace { u₁ z₁ + u₂ z₂ ≥ -Φ⁻¹(q) } with unit normal u ∝ (m1, m2).
        let (u1, u2) = (m1 / norm, m2 / norm);
        let t = std_normal_quantile(q)?;
        return Ok(Prepared::Halfspace {
            c0: t / u2,
            c1: u1 / u2,
        });
    }
    Ok(Prepared::General {
        q,
        m1,
        m1_upper,
        m2,
    })
}

impl DualEngine {
    pub fn new(opts: DualOptions) -> Self {
        Self {
            opts,
            reduced_warm: None,
            full_warm: None,
            full_failures: 0,
        }
    }

    pub fn solve(&mut self, prepared: &Prepared, r: f64) -> Result<DualSolution> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain(format!(
                "travel distance must be positive, got {r}"
            )));
        }
        match *prepared {
            Prepared::Interval { lo, hi } => Ok(DualSolution {
                c0: f64::NAN,
                c1: 0.0,
                c2: 0.0,
                variant: DualVariant::Interval {
                    lower: lo,
                    upper: hi,
                },
                travel_scale: r,
                iterations: 0,
                fallback_used: false,
            }),
            Prepared::Halfspace { c0, c1 } => Ok(DualSolution {
                c0,
                c1,
                c2: 0.0,
                variant: DualVariant::Full,
                travel_scale: r,
                iterations: 0,
                fallback_used: false,
            }),
            Prepared::General {
                q,
                m1,
                m1_upper,
                m2,
            } => self.solve_general(q, m1, m1_upper, m2, r),
        }
    }

    fn solve_general(
        &mut self,
        q: f64,
        m1: f64,
        m1_upper: Option<f64>,
        m2: f64,
        r: f64,
    ) -> Result<DualSolution> {
        let (reduced, mut iterations) = self.solve_reduced(q, m2, r)?;
        let red_moments = reduced.moments(&self.opts.quadrature)?;
        let e_red = red_moments[2];
        let slack = 1e-10;

        let target = if m1 > e_red + slack {
            Some(m1)
        } else {
            m1_upper.filter(|&u| u < e_red - slack)
        };

        let Some(target) = target else {
            let (c0, c1, c2) = reduced.coefficients();
            return Ok(DualSolution {
                c0,
                c1: if c1.abs() < 1e-12 * (1.0 + c2.abs()) {
                    0.0
                } else {
                    c1
                },
                c2,
                variant: DualVariant::ReducedNoSlope,
                travel_scale: r,
                iterations,
                fallback_used: true,
            });
        };

        let attempt = if self.full_failures >= FULL_FAILURE_LIMIT {
            Err(Error::domain("full dual abandoned for these statistics"))
        } else {
            self.solve_full(q, m2, target, r, &reduced, e_red)
        };
        let (full, it) = match attempt {
            Ok(v) => v,
            Err(err) => {
                // Dropping the directional constraint relaxes the problem,
                // so the reduced worst case is still a valid lower bound.
                // This happens close to the feasibility boundary, where the
                // full dual coefficients diverge.
                log::debug!("full dual failed at r = {r} ({err}); using the reduced relaxation");
                self.full_warm = None;
                self.full_failures += 1;
                let (c0, _, c2) = reduced.coefficients();
                return Ok(DualSolution {
                    c0,
                    c1: 0.0,
                    c2,
                    variant: DualVariant::ReducedNoSlope,
                    travel_scale: r,
                    iterations,
                    fallback_used: true,
                });
            }
        };
        self.full_failures = 0;
        iterations += it;
        let (c0, c1, c2) = full.coefficients();
        let wrong_sign = if target > e_red { c1 < 0.0 } else { c1 > 0.0 };
        if wrong_sign {
            // Cannot happen for a genuine solution of the full system; keep
            // the relaxation, which is always a valid bound.
            log::warn!("full dual returned slope {c1} on the wrong side; using reduced dual");
            let (c0, _, c2) = reduced.coefficients();
            return Ok(DualSolution {
                c0,
                c1: 0.0,
                c2,
                variant: DualVariant::ReducedNoSlope,
                travel_scale: r,
                iterations,
                fallback_used: true,
            });
        }
        Ok(DualSolution {
            c0,
            c1,
            c2,
            variant: DualVariant::Full,
            travel_scale: r,
            iterations,
            fallback_used: false,
        })
    }

    /// Dual objective of the worst-case linear program, scaled so that its
    /// variables stay bounded as `r → 0`.
    ///
    /// With multipliers `θ` the level is `c(x) = (θ0 + θ1 x - H(x)) / θ2`,
    /// `H(x) = 2 (e^{r x} - 1 - r x) / r²`, and the objective
    /// `∫φ θ2 [c Φ(c) + φ(c)] - θ0 q - θ1 m1 - θ2 m2` is convex on `θ2 > 0`.
    /// Its gradient is the moment residual `(mass - q, dir - m1, orth - m2)`.
    /// Only the coordinates listed in `free` are returned.
    #[allow(clippy::too_many_arguments)]
    fn objective(
        spec: &QuadratureSpec,
        q: f64,
        m1: f64,
        m2: f64,
        r: f64,
        theta: [f64; 3],
        free: &[usize],
    ) -> Result<Quadratic> {
        let [t0, t1, t2] = theta;
        if !(t2 > 0.0 && t2.is_finite() && t0.is_finite() && t1.is_finite()) {
            return Err(Error::domain("dual multipliers outside the domain"));
        }
        let level = Self::level_of(theta, r);
        let nodes = level.nodes(0.0, spec)?;
        let mut f = 0.0;
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for (&x, &w) in nodes.nodes.iter().zip(&nodes.weights) {
            let c = level.eval(x);
            if !c.is_finite() {
                return Err(Error::NonFinite { abscissa: x });
            }
            let p = std_normal_cdf(c);
            let d = std_normal_pdf(c);
            f += w * t2 * (c * p + d);
            g[0] += w * p;
            g[1] += w * x * p;
            g[2] += w * d;
            let k = w * d / t2;
            let u = [1.0, x, -c];
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] += k * u[i] * u[j];
                }
            }
        }
        f -= t0 * q + t1 * m1 + t2 * m2;
        g[0] -= q;
        g[1] -= m1;
        g[2] -= m2;
        Ok((
            f,
            free.iter().map(|&i| g[i]).collect(),
            free.iter()
                .map(|&i| free.iter().map(|&j| h[i][j]).collect())
                .collect(),
        ))
    }

    fn level_of(theta: [f64; 3], r: f64) -> Level {
        Level {
            a: theta[0] / theta[2],
            b: theta[1] / theta[2],
            c: -1.0 / theta[2],
            r,
        }
    }

    /// Multipliers reproducing `level` at travel `r`; the level coefficients
    /// vary continuously in `r`, so this also transports warm starts.
    fn theta_of(level: &Level) -> [f64; 3] {
        let t2 = -1.0 / level.c;
        [level.a * t2, level.b * t2, t2]
    }

    /// Minimise the objective over `free`, holding the other multipliers at
    /// their values in `start`.
    fn minimize(
        &self,
        q: f64,
        m1: f64,
        m2: f64,
        r: f64,
        start: [f64; 3],
        free: &[usize],
    ) -> Result<([f64; 3], usize)> {
        let spec = self.opts.quadrature;
        let embed = |v: &[f64]| {
            let mut t = start;
            for (k, &i) in free.iter().enumerate() {
                t[i] = v[k];
            }
            t
        };
        let x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
        let sol = minimize_convex(
            |v: &[f64]| Self::objective(&spec, q, m1, m2, r, embed(v), free),
            &x0,
            &self.opts.solver,
        )?;
        Ok((embed(&sol.point), sol.iterations))
    }

    /// Reduced family: no directional multiplier, i.e. `c1 = 0`, which is
    /// `θ1 = -2/r`.
    fn reduced_level(a: f64, s: f64, r: f64) -> Level {
        let c = -s.exp();
        Level {
            a,
            b: 2.0 * c / r,
            c,
            r,
        }
    }

    fn solve_reduced(&mut self, q: f64, m2: f64, r: f64) -> Result<(Level, usize)> {
        let free = [0usize, 2];
        let pin = |mut t: [f64; 3]| {
            t[1] = -2.0 / r;
            t
        };
        if let Some(warm) = self.reduced_warm {
            let start = pin(Self::theta_of(&warm));
            if let Ok((t, it)) = self.minimize(q, 0.0, m2, r, start, &free) {
                let level = Self::level_of(t, r);
                self.reduced_warm = Some(level);
                return Ok((level, it));
            }
        }
        let (a, s) = self.reduced_nested(q, m2, r)?;
        let nested = Self::reduced_level(a, s, r);
        let level = match self.minimize(q, 0.0, m2, r, pin(Self::theta_of(&nested)), &free) {
            Ok((t, _)) => Self::level_of(t, r),
            Err(err) => {
                let m = nested.moments(&self.opts.quadrature)?;
                if (m[0] - q).abs() <= 1e-9 && (m[1] - m2).abs() <= 1e-9 {
                    nested
                } else {
                    return Err(err);
                }
            }
        };
        self.reduced_warm = Some(level);
        Ok((level, 0))
    }

    /// Robust two-level solve: for each curvature `s` find the offset that
    /// matches the mass, then root-find the orthogonal moment in `s`.
    fn reduced_nested(&self, q: f64, m2: f64, r: f64) -> Result<(f64, f64)> {
        let spec = self.opts.quadrature;
        let last_a = Cell::new(std_normal_quantile(q)?);
        let offset_for = |s: f64| -> Result<(f64, f64)> {
            // mass(A) is increasing with derivative equal to the orthogonal
            // moment; safeguarded Newton inside an expanding bracket.
            let (mut lo, mut hi) = (-60.0_f64, 60.0_f64);
            let mut a = last_a.get().clamp(lo + 1.0, hi - 1.0);
            let mut m = [0.0; 3];
            for _ in 0..200 {
                m = Self::reduced_level(a, s, r).moments(&spec)?;
                let f = m[0] - q;
                if f.abs() <= 1e-14 {
                    break;
                }
                if f > 0.0 {
                    hi = a;
                } else {
                    lo = a;
                }
                let mut next = if m[1] > 0.0 { a - f / m[1] } else { f64::NAN };
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (hi - lo) < 1e-14 * (1.0 + a.abs()) {
                    break;
                }
                a = next;
            }
            last_a.set(a);
            Ok((a, m[1] - m2))
        };
        let g = |s: f64| -> Result<f64> { Ok(offset_for(s)?.1) };
        // The orthogonal moment decreases as the curvature grows.
        let mut s_lo = -2.0;
        let mut s_hi = -2.0;
        let mut g_lo = g(s_lo)?;
        if g_lo > 0.0 {
            let mut gh = g_lo;
            while gh > 0.0 {
                s_lo = s_hi;
                s_hi += 3.0;
                if s_hi > 60.0 {
                    return Err(Error::Bracket {
                        lo: s_lo,
                        hi: s_hi,
                        f_lo: g_lo,
                        f_hi: gh,
                    });
                }
                gh = g(s_hi)?;
            }
        } else {
            while g_lo <= 0.0 {
                s_hi = s_lo;
                s_lo -= 3.0;
                if s_lo < -80.0 {
                    return Err(Error::Bracket {
                        lo: s_lo,
                        hi: s_hi,
                        f_lo: g_lo,
                        f_hi: 0.0,
                    });
                }
                g_lo = g(s_lo)?;
            }
        }
        let s = try_bisect_root(g, s_lo, s_hi, 1e-13)?;
        let (a, _) = offset_for(s)?;
        Ok((a, s))
    }

    /// A steep concave level whose superlevel set is close to the slab worst
    /// case for `(q, m1)` and whose orthogonal moment is roughly `m2`.
    ///
    /// As `m2 → 0` the full solution degenerates to that slab with
    /// coefficients growing like `1/m2`, far from the reduced solution.
    fn slab_level(q: f64, m1: f64, m2: f64, r: f64) -> Option<Level> {
        let (lo, hi) = solve_interval(q, m1).ok()?;
        if !(lo.is_finite() && hi.is_finite() && hi > lo && m2 > 0.0) {
            return None;
        }
        // Unit curvature with roots at both slab ends.
        let c = -1.0;
        let b = -c * (curvature_term(r, hi) - curvature_term(r, lo)) / (hi - lo);
        let a = -b * lo - c * curvature_term(r, lo);
        let unit = Level { a, b, c, r };
        // Near a root with slope s the boundary term contributes φ(root)/|s|.
        let spread = std_normal_pdf(lo) / unit.derivative(lo).abs()
            + std_normal_pdf(hi) / unit.derivative(hi).abs();
        let k = spread / m2;
        k.is_finite().then_some(Level {
            a: k * a,
            b: k * b,
            c: k * c,
            r,
        })
    }

    /// Full three-multiplier solve, started from the previous travel
    /// distance's solution when there is one, and otherwise from the reduced
    /// solution and the scaled slab (feasible points of the same convex
    /// problem). Small orthogonal moments try the slab first.
    fn solve_full(
        &mut self,
        q: f64,
        m2: f64,
        target: f64,
        r: f64,
        reduced: &Level,
        _e_red: f64,
    ) -> Result<(Level, usize)> {
        let free = [0usize, 1, 2];
        let mut starts = Vec::with_capacity(3);
        if let Some(warm) = self.full_warm {
            starts.push(Self::theta_of(&warm));
        }
        let slab = Self::slab_level(q, target, m2, r).map(|l| Self::theta_of(&l));
        let slab_first = m2 <= SLAB_START_FRACTION * max_gradient_magnitude(q)?;
        if slab_first {
            starts.extend(slab);
        }
        starts.push(Self::theta_of(reduced));
        if !slab_first {
            starts.extend(slab);
        }
        let mut last = None;
        for start in starts {
            match self.minimize(q, target, m2, r, start, &free) {
                Ok((t, it)) => {
                    let level = Self::level_of(t, r);
                    self.full_warm = Some(level);
                    return Ok((level, it));
                }
                Err(err) => last = Some(err),
            }
        }
        Err(last.expect("at least one start"))
    }
}
