//! Monte-Carlo evaluation of a worst-case set, independent of quadrature.

use serde::{Deserialize, Serialize};

use super::rng::{GaussianStream, RngSpec};
use crate::certify::{DualSolution, DualVariant};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl DualSolution {
    /// The primal form `{ e^{r z₁} ≤ a1 z₁ + a2 z₂ + b }` of the worst-case
    /// set, available when the curvature coefficient is strictly negative.
    pub fn primal_coefficients(&self) -> Option<(f64, f64, f64)> {
        if !matches!(self.variant, DualVariant::Interval { .. }) && self.c2 < 0.0 {
            let a2 = -1.0 / self.c2;
            Some((self.c1 * a2, a2, self.c0 * a2))
        } else {
            None
        }
    }
}

/// Estimate the probability of the worst-case set under `N((r, 0), I)`.
///
/// Membership is tested with the primal inequality whenever it exists; the
/// slab and halfspace limits use their direct descriptions.
pub fn mc_worst_case_probability(
    dual: &DualSolution,
    r: f64,
    n: u64,
    rng: RngSpec,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::domain("need at least one Monte-Carlo draw"));
    }
    if !r.is_finite() {
        return Err(Error::domain("shift must be finite"));
    }
    let primal = dual.primal_coefficients();
    let rate = dual.travel_scale;
    let mut stream = GaussianStream::at_draw(rng, 0, 2);
    let mut z = [0.0; 2];
    let mut hits = 0u64;
    for _ in 0..n {
        stream.fill_normals(&mut z);
        let z1 = z[0] + r;
        let z2 = z[1];
        let inside = match (dual.variant, primal) {
            (DualVariant::Interval { lower, upper }, _) => z1 >= lower && z1 <= upper,
            (_, Some((a1, a2, b))) => (rate * z1).exp() <= a1 * z1 + a2 * z2 + b,
            _ => dual.contains(z1, z2),
        };
        hits += u64::from(inside);
    }
    let p = hits as f64 / n as f64;
    Ok(McEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
    })
}
