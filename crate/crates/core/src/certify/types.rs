//! Value types exchanged by the certification routines.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Isotropic Gaussian smoothing `N(0, σ² I)` on a `dim`-dimensional input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub dim: usize,
}

impl SmoothingConfig {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        let cfg = Self { sigma, dim };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.dim == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Conservative local information about the smoothed classifier, expressed
/// in the two-dimensional frame spanned by a travel direction `v` and the
/// gradient component orthogonal to it.
///
/// `m1` lower-bounds `σ vᵀ∇g` and `m2` lower-bounds `σ ‖∇g - (vᵀ∇g) v‖₂`.
/// When an upper bound on `σ vᵀ∇g` is also known it can be supplied through
/// `m1_upper`; the worst case is then taken over the resulting interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderStats {
    pub q: f64,
    pub m1: f64,
    pub m2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1_upper: Option<f64>,
}

impl FirstOrderStats {
    /// Lower bounds only.
    pub fn new(q: f64, m1: f64, m2: f64) -> Self {
        Self {
            q,
            m1,
            m2,
            m1_upper: None,
        }
    }

    /// Statistics whose directional component is known exactly.
    pub fn exact(q: f64, m1: f64, m2: f64) -> Self {
        Self {
            q,
            m1,
            m2,
            m1_upper: Some(m1),
        }
    }

    pub fn with_m1_upper(mut self, upper: f64) -> Self {
        self.m1_upper = Some(upper);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.q <= 1.0) {
            return Err(Error::domain(format!(
                "q must lie in [0, 1], got {}",
                self.q
            )));
        }
        if !(self.m2 >= 0.0 && self.m2.is_finite()) {
            return Err(Error::domain(format!(
                "m2 must be non-negative, got {}",
                self.m2
            )));
        }
        if !self.m1.is_finite() {
            return Err(Error::domain("m1 must be finite"));
        }
        if let Some(u) = self.m1_upper {
            if !(u.is_finite() && u >= self.m1) {
                return Err(Error::domain(format!(
                    "m1 upper bound {u} is below the lower bound {}",
                    self.m1
                )));
            }
        }
        Ok(())
    }
}

/// Which worst-case family a [`DualSolution`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DualVariant {
    /// All three moment constraints active.
    Full,
    /// The directional constraint is slack; the slope coefficient vanishes.
    ReducedNoSlope,
    /// No orthogonal information: the worst case is the slab
    /// `{lower ≤ z₁ ≤ upper}` (either end may be infinite).
    Interval { lower: f64, upper: f64 },
}

/// Coefficients of the worst-case level set
/// `{ z₂ + c0 + c1 z₁ + c2 e^{r z₁} ≥ 0 }` in the standardized frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub variant: DualVariant,
    /// The scaled travel distance `r` the dual was solved for.
    pub travel_scale: f64,
    /// Newton iterations spent (0 for closed-form cases).
    pub iterations: usize,
    /// Whether the directional constraint had to be dropped: the full system
    /// had the wrong slope sign or could not be solved (near the feasibility
    /// boundary). The result is then a relaxation and still a valid bound.
    pub fallback_used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatModel {
    L1,
    L2,
    Linf,
    SubspaceL1,
    SubspaceL2,
    SubspaceLinf,
}

impl ThreatModel {
    pub const ALL: [ThreatModel; 6] = [
        ThreatModel::L1,
        ThreatModel::L2,
        ThreatModel::Linf,
        ThreatModel::SubspaceL1,
        ThreatModel::SubspaceL2,
        ThreatModel::SubspaceLinf,
    ];

    pub fn is_subspace(self) -> bool {
        matches!(
            self,
            ThreatModel::SubspaceL1 | ThreatModel::SubspaceL2 | ThreatModel::SubspaceLinf
        )
    }

    /// The ℓp exponent of the threat ball.
    pub fn norm(self) -> NormKind {
        match self {
            ThreatModel::L1 | ThreatModel::SubspaceL1 => NormKind::L1,
            ThreatModel::L2 | ThreatModel::SubspaceL2 => NormKind::L2,
            ThreatModel::Linf | ThreatModel::SubspaceLinf => NormKind::Linf,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThreatModel::L1 => "l1",
            ThreatModel::L2 => "l2",
            ThreatModel::Linf => "linf",
            ThreatModel::SubspaceL1 => "subspace_l1",
            ThreatModel::SubspaceL2 => "subspace_l2",
            ThreatModel::SubspaceLinf => "subspace_linf",
        }
    }
}

impl std::str::FromStr for ThreatModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ThreatModel::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| Error::domain(format!("unknown threat model '{s}'")))
    }
}

impl std::fmt::Display for ThreatModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// ℓp exponent of a ball, restricted to the three supported cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl NormKind {
    /// The dual exponent `p'` with `1/p + 1/p' = 1`.
    pub fn dual(self) -> NormKind {
        match self {
            NormKind::L1 => NormKind::Linf,
            NormKind::L2 => NormKind::L2,
            NormKind::Linf => NormKind::L1,
        }
    }

    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZerothOrder,
    FirstOrder,
}

/// A certified radius for one threat model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub threat: ThreatModel,
    /// Radius in input units; zero when abstaining.
    pub radius: f64,
    pub method: Method,
    /// Total failure probability of the statistics behind the radius.
    pub alpha: f64,
    pub abstained: bool,
    /// The worst-case probability stayed above 1/2 up to the search cap.
    #[serde(default)]
    pub capped: bool,
}

impl Certificate {
    pub fn abstain(threat: ThreatModel, method: Method, alpha: f64) -> Self {
        Self {
            threat,
            radius: 0.0,
            method,
            alpha,
            abstained: true,
            capped: false,
        }
    }
}

/// Bound on the masked gradient in the dual norm of a subspace threat model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBound {
    /// Upper bound on `‖P_S ∇g‖_{p'}`.
    pub dual_upper: f64,
    /// Lower bound on `‖P_S ∇g‖_{p'}`; zero when unknown.
    #[serde(default)]
    pub dual_lower: f64,
}

/// Interval bounds on norms of the smoothed-probability gradient `∇g`.
///
/// All values are in units of `‖∇g‖`, i.e. estimator outputs (which bound
/// `σ² ∇g`) divided by `σ²`. Bounds that are not known are reported as the
/// trivial values (`0` for lower bounds, `+∞` for upper bounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientNormBounds {
    pub l2_lower: f64,
    pub l2_upper: f64,
    #[serde(default)]
    pub linf_lower: f64,
    pub linf_upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_upper: Option<f64>,
    #[serde(default)]
    pub l1_lower: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<SubspaceBound>,
}

impl GradientNormBounds {
    /// Bounds from a separately estimated ℓ2 pair and ℓ∞ upper bound.
    pub fn new(l2_lower: f64, l2_upper: f64, linf_upper: f64) -> Self {
        Self {
            l2_lower,
            l2_upper,
            linf_lower: 0.0,
            linf_upper,
            l1_upper: None,
            l1_lower: 0.0,
            subspace: None,
        }
    }

    /// Bounds that pin every norm of `grad` exactly, scaled by `shrink`.
    ///
    /// `mask` pairs the subspace coordinates with the dual norm used for the
    /// subspace bound.
    pub fn exact(grad: &[f64], shrink: f64, mask: Option<(&[usize], NormKind)>) -> Self {
        let l2 = NormKind::L2.of(grad) * shrink;
        let linf = NormKind::Linf.of(grad) * shrink;
        let l1 = NormKind::L1.of(grad) * shrink;
        let subspace = mask.map(|(idx, dual)| {
            let masked: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
            let v = dual.of(&masked) * shrink;
            SubspaceBound {
                dual_upper: v,
                dual_lower: v,
            }
        });
        Self {
            l2_lower: l2,
            l2_upper: l2,
            linf_lower: linf,
            linf_upper: linf,
            l1_upper: Some(l1),
            l1_lower: l1,
            subspace,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let slack = 1e-9;
        let ok = |v: f64| v >= 0.0 && !v.is_nan();
        if !(ok(self.l2_lower) && ok(self.l2_upper) && ok(self.linf_lower) && ok(self.linf_upper)) {
            return Err(Error::domain("gradient norm bounds must be non-negative"));
        }
        if self.l2_lower > self.l2_upper * (1.0 + slack) {
            return Err(Error::domain(format!(
                "l2 lower bound {} exceeds upper bound {}",
                self.l2_lower, self.l2_upper
            )));
        }
        if self.linf_lower > self.linf_upper * (1.0 + slack) {
            return Err(Error::domain("linf lower bound exceeds upper bound"));
        }
        if let Some(u) = self.l1_upper {
            if !ok(u) || self.l1_lower > u * (1.0 + slack) {
                return Err(Error::domain("l1 bounds are inconsistent"));
            }
        }
        if let Some(s) = self.subspace {
            if !(ok(s.dual_upper) && ok(s.dual_lower))
                || s.dual_lower > s.dual_upper * (1.0 + slack)
            {
                return Err(Error::domain("subspace bounds are inconsistent"));
            }
        }
        Ok(())
    }

    /// Apply the norm inequalities `‖y‖∞ ≤ ‖y‖₂ ≤ ‖y‖₁ ≤ √d ‖y‖₂` to
    /// tighten each interval using the others. Every result still contains
    /// the true value whenever the inputs do.
    pub fn tightened(mut self, dim: usize) -> Self {
        let sqrt_d = (dim as f64).sqrt();
        self.linf_upper = self.linf_upper.min(self.l2_upper);
        self.l2_lower = self.l2_lower.max(self.linf_lower);
        if let Some(u) = self.l1_upper {
            self.l1_upper = Some(u.min(sqrt_d * self.l2_upper));
            self.l2_upper = self.l2_upper.min(u);
        }
        self.l1_lower = self.l1_lower.max(self.l2_lower);
        self.linf_lower = self.linf_lower.max(self.l2_lower / sqrt_d);
        self
    }
}

/// Outcome of a radius computation with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusOutcome {
    /// Radius in input units.
    pub radius: f64,
    pub abstained: bool,
    pub capped: bool,
    /// The first-order solver was bypassed in favour of the zeroth-order
    /// answer because the gradient information was uninformative.
    pub degenerate: bool,
    pub fallback_used: bool,
    pub iterations: usize,
}

impl RadiusOutcome {
    pub(crate) fn abstain() -> Self {
        Self {
            radius: 0.0,
            abstained: true,
            capped: false,
            degenerate: false,
            fallback_used: false,
            iterations: 0,
        }
    }

    pub(crate) fn plain(radius: f64) -> Self {
        Self {
            radius,
            abstained: false,
            capped: false,
            degenerate: false,
            fallback_used: false,
            iterations: 0,
        }
    }

    pub(crate) fn scaled(mut self, factor: f64) -> Self {
        self.radius *= factor;
        self
    }
}
