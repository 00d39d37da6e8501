//! Composite Gauss–Legendre quadrature against a Gaussian weight.
//!
//! Integrals of the form `∫ φ(x - center) g(x) dx` are truncated to
//! `center + [lower, upper]`, split into equal panels and integrated with a
//! fixed 16-point Gauss–Legendre rule per panel. Optional breakpoints refine
//! the partition around steep features of `g`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::special::std_normal_pdf;
use crate::{Error, Result};

/// Number of Gauss–Legendre nodes per panel.
pub const GAUSS_ORDER: usize = 16;

/// Truncation window and panel layout for a Gaussian-weighted integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Lower end of the window, relative to the centre of the weight.
    pub lower: f64,
    /// Upper end of the window, relative to the centre of the weight.
    pub upper: f64,
    pub panel_count: usize,
    /// Target absolute accuracy; used by callers to size breakpoint grading.
    pub abs_tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            lower: -12.0,
            upper: 12.0,
            panel_count: 64,
            abs_tolerance: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn new(lower: f64, upper: f64, panel_count: usize, abs_tolerance: f64) -> Result<Self> {
        let spec = Self {
            lower,
            upper,
            panel_count,
            abs_tolerance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::domain(format!(
                "quadrature window must satisfy lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if self.panel_count < 1 {
            return Err(Error::domain("quadrature needs at least one panel"));
        }
        if !(self.abs_tolerance > 0.0 && self.abs_tolerance <= 1e-6) {
            return Err(Error::domain(format!(
                "quadrature tolerance must lie in (0, 1e-6], got {}",
                self.abs_tolerance
            )));
        }
        Ok(())
    }

    pub fn panel_width(&self) -> f64 {
        (self.upper - self.lower) / self.panel_count as f64
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre_rule() -> &'static ([f64; GAUSS_ORDER], [f64; GAUSS_ORDER]) {
    static RULE: OnceLock<([f64; GAUSS_ORDER], [f64; GAUSS_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_ORDER;
        let mut nodes = [0.0; GAUSS_ORDER];
        let mut weights = [0.0; GAUSS_ORDER];
        for i in 0..n {
            // Tricomi's initial guess, refined by Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature nodes with the Gaussian weight already folded into the weights.
#[derive(Debug, Clone)]
pub struct WeightedNodes {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedNodes {
    /// Build nodes for `∫ φ(x - center) g(x) dx` with optional breakpoints
    /// (absolute abscissae). Breakpoints outside the window are ignored.
    pub fn new(center: f64, spec: &QuadratureSpec, breaks: &[f64]) -> Result<Self> {
        spec.validate()?;
        if !center.is_finite() {
            return Err(Error::domain("quadrature centre must be finite"));
        }
        let a = center + spec.lower;
        let b = center + spec.upper;
        let h = spec.panel_width();
        let mut edges: Vec<f64> = (0..=spec.panel_count).map(|i| a + h * i as f64).collect();
        edges[spec.panel_count] = b;
        edges.extend(
            breaks
                .iter()
                .copied()
                .filter(|t| t.is_finite() && *t > a && *t < b),
        );
        edges.sort_by(|x, y| x.total_cmp(y));
        edges.dedup_by(|x, y| (*x - *y).abs() < 1e-12 * (1.0 + y.abs()));

        let (gx, gw) = gauss_legendre_rule();
        let mut nodes = Vec::with_capacity((edges.len() - 1) * GAUSS_ORDER);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for k in 0..GAUSS_ORDER {
                let x = mid + half * gx[k];
                nodes.push(x);
                weights.push(half * gw[k] * std_normal_pdf(x - center));
            }
        }
        Ok(Self { nodes, weights })
    }

    /// Evaluate the weighted sum, rejecting non-finite integrand values.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut integrand: F) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = integrand(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { abscissa: x });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// `∫ φ(x - center) g(x) dx` over the truncated window.
pub fn gauss_weighted_integral<F: FnMut(f64) -> f64>(
    integrand: F,
    center: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    WeightedNodes::new(center, spec, &[])?.integrate(integrand)
}

/// As [`gauss_weighted_integral`], refining the partition at `breaks`.
pub fn gauss_weighted_integral_with_breaks<F: FnMut(f64) -> f64>(
    integrand: F,
    center: f64,
    spec: &QuadratureSpec,
    breaks: &[f64],
) -> Result<f64> {
    WeightedNodes::new(center, spec, breaks)?.integrate(integrand)
}
