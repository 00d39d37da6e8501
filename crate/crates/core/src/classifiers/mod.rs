//! Black-box classifiers, sampling of the smoothing statistics and oracles.
//!
//! The engine only ever sees class labels: [`BlackBoxClassifier`] maps a
//! point to a label. Synthetic classifiers with known geometry back the
//! tests, and linear classifiers additionally have closed-form smoothed
//! probabilities, gradients and radii.

mod oracle;
mod rng;
mod sampling;

pub use oracle::{mc_worst_case_probability, McEstimate};
pub use rng::{GaussianStream, RngSpec};
pub use sampling::{sample_class_statistics, sample_statistics, ClassTally};

use serde::{Deserialize, Serialize};

use crate::certify::{NormKind, SmoothingConfig, DEFAULT_R_CAP};
use crate::numerics::{std_normal_cdf, std_normal_pdf};
use crate::{Error, Result};

/// A hard-label classifier queried only through its predictions.
pub trait BlackBoxClassifier: Send + Sync {
    fn classify(&self, point: &[f64]) -> usize;
    fn num_classes(&self) -> usize;
    /// Expected input dimension, when the classifier fixes one.
    fn input_dim(&self) -> Option<usize> {
        None
    }
}

/// `f(x) = 1{wᵀx + b ≤ 0}`: class 1 on the non-positive side, class 0
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifierSpec {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearClassifierSpec {
    pub fn new(w: Vec<f64>, b: f64) -> Result<Self> {
        let spec = Self { w, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.is_empty() || self.w.iter().any(|v| !v.is_finite()) || !self.b.is_finite() {
            return Err(Error::domain(
                "linear classifier needs finite, non-empty weights",
            ));
        }
        if NormKind::L2.of(&self.w) == 0.0 {
            return Err(Error::domain("linear classifier weights must be non-zero"));
        }
        Ok(())
    }

    /// `wᵀx + b`.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.w.len() {
            return Err(Error::domain(format!(
                "point has dimension {} but the classifier expects {}",
                x.len(),
                self.w.len()
            )));
        }
        Ok(())
    }
}

impl BlackBoxClassifier for LinearClassifierSpec {
    fn classify(&self, point: &[f64]) -> usize {
        if self.score(point) <= 0.0 {
            1
        } else {
            0
        }
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.w.len())
    }
}

/// Declarative description of a synthetic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    Linear {
        w: Vec<f64>,
        b: f64,
    },
    /// Class 1 when `lower ≤ x[axis] ≤ upper`.
    SlabInterval {
        axis: usize,
        lower: f64,
        upper: f64,
        #[serde(default)]
        dim: Option<usize>,
    },
    /// Class 1 when any `wᵀx + b ≤ 0`.
    UnionOfHalfspaces {
        halfspaces: Vec<LinearClassifierSpec>,
    },
    /// Class 1 strictly inside the ball.
    SphereInterior {
        center: Vec<f64>,
        radius: f64,
    },
}

struct Slab {
    axis: usize,
    lower: f64,
    upper: f64,
    dim: Option<usize>,
}

impl BlackBoxClassifier for Slab {
    fn classify(&self, point: &[f64]) -> usize {
        let inside = point
            .get(self.axis)
            .is_some_and(|&v| v >= self.lower && v <= self.upper);
        usize::from(inside)
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn input_dim(&self) -> Option<usize> {
        self.dim
    }
}

struct Union(Vec<LinearClassifierSpec>);

impl BlackBoxClassifier for Union {
    fn classify(&self, point: &[f64]) -> usize {
        usize::from(self.0.iter().any(|h| h.score(point) <= 0.0))
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn input_dim(&self) -> Option<usize> {
        self.0.first().map(|h| h.w.len())
    }
}

struct Sphere {
    center: Vec<f64>,
    radius_sq: f64,
}

impl BlackBoxClassifier for Sphere {
    fn classify(&self, point: &[f64]) -> usize {
        let d2: f64 = point
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        usize::from(d2 < self.radius_sq)
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.center.len())
    }
}

/// Instantiate a synthetic classifier.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Box<dyn BlackBoxClassifier>> {
    match spec {
        SyntheticSpec::Linear { w, b } => Ok(Box::new(LinearClassifierSpec::new(w.clone(), *b)?)),
        SyntheticSpec::SlabInterval {
            axis,
            lower,
            upper,
            dim,
        } => {
            if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                return Err(Error::domain(
                    "slab needs finite bounds with lower <= upper",
                ));
            }
            if let Some(d) = dim {
                if axis >= d {
                    return Err(Error::domain(format!(
                        "slab axis {axis} out of range for dimension {d}"
                    )));
                }
            }
            Ok(Box::new(Slab {
                axis: *axis,
                lower: *lower,
                upper: *upper,
                dim: *dim,
            }))
        }
        SyntheticSpec::UnionOfHalfspaces { halfspaces } => {
            if halfspaces.is_empty() {
                return Err(Error::domain("union needs at least one halfspace"));
            }
            let d = halfspaces[0].w.len();
            for h in halfspaces {
                h.validate()?;
                if h.w.len() != d {
                    return Err(Error::domain("all halfspaces must share one dimension"));
                }
            }
            Ok(Box::new(Union(halfspaces.clone())))
        }
        SyntheticSpec::SphereInterior { center, radius } => {
            if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("sphere centre must be finite and non-empty"));
            }
            if !(*radius >= 0.0 && radius.is_finite()) {
                return Err(Error::domain("sphere radius must be non-negative"));
            }
            Ok(Box::new(Sphere {
                center: center.clone(),
                radius_sq: radius * radius,
            }))
        }
    }
}

/// Exact smoothed probability and gradient of the predicted class of a
/// linear classifier under `N(0, σ² I)` noise.
pub fn analytic_linear_stats(
    spec: &LinearClassifierSpec,
    x: &[f64],
    cfg: &SmoothingConfig,
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    spec.check_dim(x)?;
    cfg.validate()?;
    let score = spec.score(x);
    let norm = NormKind::L2.of(&spec.w);
    let t = score.abs() / (cfg.sigma * norm);
    let y0 = std_normal_cdf(t);
    // Moving along +w raises the score, which favours class 0.
    let sign = if score > 0.0 { 1.0 } else { -1.0 };
    let scale = std_normal_pdf(t) / cfg.sigma * sign / norm;
    let y1 = spec.w.iter().map(|w| scale * w).collect();
    Ok((y0, y1))
}

/// Exact ℓp radius of the halfspace decision region around `x`, restricted
/// to the coordinates in `mask` when given. Unbounded regions return `cap`.
pub fn analytic_linear_radius(
    spec: &LinearClassifierSpec,
    x: &[f64],
    p: NormKind,
    mask: Option<&[usize]>,
    cap: f64,
) -> Result<f64> {
    spec.validate()?;
    spec.check_dim(x)?;
    let margin = spec.score(x).abs();
    let w: Vec<f64> = match mask {
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= spec.w.len()) {
                return Err(Error::domain(format!("mask index {bad} out of range")));
            }
            idx.iter().map(|&i| spec.w[i]).collect()
        }
        None => spec.w.clone(),
    };
    let dual = p.dual().of(&w);
    if dual == 0.0 {
        return Ok(cap);
    }
    Ok(margin / dual)
}

/// Default cap sentinel in input units for a given `σ`.
pub fn cap_sentinel(sigma: f64) -> f64 {
    sigma * DEFAULT_R_CAP
}
