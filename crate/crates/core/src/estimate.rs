//! High-confidence bounds on the smoothed probability and on gradient norms.
//!
//! Gradient information comes from the random vector
//! `z = w · (1{f(x + w) = c} - 1/2)`, `w ~ N(0, σ² I)`, whose mean is
//! `σ² ∇g(x)` and which is sub-Gaussian with parameter
//! `k = σ² (1/4 + 3/√(8πe))`. Samples are split into two independent halves
//! `X` (size `n1`) and `Y` (size `n2`); the ℓ2 bound uses the unbiased
//! cross product `XᵀY`, the ℓ1 and ℓ∞ bounds use the pooled mean.
//!
//! All norm bounds returned here are bounds on `‖σ² ∇g‖`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::certify::NormKind;
use crate::{Error, Result};

/// Sub-Gaussian parameter of the gradient sample `z`.
pub fn subgaussian_k(sigma: f64) -> f64 {
    let base = 0.25 + 3.0 / (8.0 * std::f64::consts::PI * std::f64::consts::E).sqrt();
    sigma * sigma * base
}

/// Sufficient statistics of a split gradient sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSampleBatch {
    /// Sum of the `z` samples in the first split.
    pub x_sum: Vec<f64>,
    /// Sum of the `z` samples in the second split.
    pub y_sum: Vec<f64>,
    pub n1: u64,
    pub n2: u64,
    /// Number of draws classified as the certified class.
    pub success_count: u64,
    pub sigma: f64,
}

impl GradientSampleBatch {
    pub fn empty(dim: usize, sigma: f64) -> Self {
        Self {
            x_sum: vec![0.0; dim],
            y_sum: vec![0.0; dim],
            n1: 0,
            n2: 0,
            success_count: 0,
            sigma,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_sum.len()
    }

    pub fn total(&self) -> u64 {
        self.n1 + self.n2
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_sum.is_empty() || self.x_sum.len() != self.y_sum.len() {
            return Err(Error::domain(
                "batch vectors must be non-empty and of equal length",
            ));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::domain("both sample splits must be non-empty"));
        }
        if self.success_count > self.n1 + self.n2 {
            return Err(Error::domain("success count exceeds the number of draws"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::domain("batch sigma must be positive"));
        }
        if self.x_sum.iter().chain(&self.y_sum).any(|v| !v.is_finite()) {
            return Err(Error::domain("batch sums must be finite"));
        }
        Ok(())
    }

    /// Accumulate another batch drawn independently with the same `σ`.
    pub fn merge(&mut self, other: &GradientSampleBatch) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::domain("cannot merge batches of different dimension"));
        }
        if other.sigma != self.sigma {
            return Err(Error::domain("cannot merge batches with different sigma"));
        }
        for (a, b) in self.x_sum.iter_mut().zip(&other.x_sum) {
            *a += b;
        }
        for (a, b) in self.y_sum.iter_mut().zip(&other.y_sum) {
            *a += b;
        }
        self.n1 += other.n1;
        self.n2 += other.n2;
        self.success_count += other.success_count;
        Ok(())
    }

    /// Restrict to the coordinates in `mask`.
    pub fn masked(&self, mask: &[usize]) -> Result<GradientSampleBatch> {
        if mask.is_empty() {
            return Err(Error::domain("subspace mask must not be empty"));
        }
        if let Some(&bad) = mask.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::domain(format!(
                "mask index {bad} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(GradientSampleBatch {
            x_sum: mask.iter().map(|&i| self.x_sum[i]).collect(),
            y_sum: mask.iter().map(|&i| self.y_sum[i]).collect(),
            ..self.clone()
        })
    }
}

/// An interval `[lower, upper]` on a non-negative quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Pooled empirical mean of `z`, an unbiased estimate of `σ² ∇g`.
pub fn gradient_mean(batch: &GradientSampleBatch) -> Vec<f64> {
    let n = batch.total().max(1) as f64;
    batch
        .x_sum
        .iter()
        .zip(&batch.y_sum)
        .map(|(x, y)| (x + y) / n)
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Smallest `α` for which the two-split ℓ2 bound is valid in `d` dimensions.
pub fn l2_alpha_floor(dim: usize) -> f64 {
    2.0 * (-(dim as f64) / 16.0).exp()
}

/// The constant `t` of the ℓ2 estimator.
pub fn l2_t_constant(k: f64, dim: usize, n1: u64, n2: u64, alpha: f64) -> f64 {
    (-k * k * std::f64::consts::SQRT_2 * dim as f64 / (n1 as f64 * n2 as f64) * (alpha / 2.0).ln())
        .sqrt()
}

/// The relative slack `ε` of the ℓ2 estimator for a given `XᵀY ± t`.
pub fn l2_epsilon(k: f64, n1: u64, n2: u64, alpha: f64, shifted_cross: f64) -> f64 {
    let (n1, n2) = (n1 as f64, n2 as f64);
    (-k * (n1 + n2) * (alpha / 2.0).ln() / (2.0 * n1 * n2 * shifted_cross)).sqrt()
}

/// Bounds on `‖σ² ∇g‖₂`, each side holding with probability `1 - alpha`.
pub fn l2_norm_bounds(batch: &GradientSampleBatch, alpha: f64) -> Result<NormInterval> {
    batch.validate()?;
    check_alpha(alpha)?;
    let d = batch.dim();
    let floor = l2_alpha_floor(d);
    if alpha < floor {
        return Err(Error::Hypothesis {
            alpha,
            floor,
            dim: d,
        });
    }
    let k = subgaussian_k(batch.sigma);
    let (n1, n2) = (batch.n1, batch.n2);
    let cross: f64 = batch
        .x_sum
        .iter()
        .zip(&batch.y_sum)
        .map(|(x, y)| (x / n1 as f64) * (y / n2 as f64))
        .sum();
    let t = l2_t_constant(k, d, n1, n2, alpha);
    let plus = cross + t;
    let upper = if plus > 0.0 {
        let eps = l2_epsilon(k, n1, n2, alpha, plus);
        plus.sqrt() / ((1.0 + eps * eps).sqrt() - eps)
    } else {
        0.0
    };
    let minus = cross - t;
    let lower = if minus > 0.0 {
        let eps = l2_epsilon(k, n1, n2, alpha, minus);
        minus.sqrt() / ((1.0 + eps * eps).sqrt() + eps)
    } else {
        0.0
    };
    Ok(NormInterval { lower, upper })
}

/// Deviation constant of the ℓ∞ bound.
pub fn linf_t_constant(k: f64, dim: usize, n: u64, alpha: f64) -> f64 {
    (2.0 * k * ((2.0 * dim as f64).ln() - alpha.ln()) / n as f64).sqrt()
}

/// Deviation constant of the ℓ1 bound.
pub fn l1_t_constant(k: f64, dim: usize, n: u64, alpha: f64) -> f64 {
    let d = dim as f64;
    (2.0 * k * d * (d * std::f64::consts::LN_2 - alpha.ln()) / n as f64).sqrt()
}

fn pooled_bounds(batch: &GradientSampleBatch, norm: NormKind, t: f64) -> NormInterval {
    let centre = norm.of(&gradient_mean(batch));
    NormInterval {
        lower: (centre - t).max(0.0),
        upper: centre + t,
    }
}

/// Bounds on `‖σ² ∇g‖∞` holding jointly with probability `1 - alpha`.
pub fn linf_norm_bounds(batch: &GradientSampleBatch, alpha: f64) -> Result<NormInterval> {
    batch.validate()?;
    check_alpha(alpha)?;
    let t = linf_t_constant(
        subgaussian_k(batch.sigma),
        batch.dim(),
        batch.total(),
        alpha,
    );
    Ok(pooled_bounds(batch, NormKind::Linf, t))
}

/// Bounds on `‖σ² ∇g‖₁` holding jointly with probability `1 - alpha`.
///
/// The deviation grows like `d`, so this is only informative in low
/// dimension.
pub fn l1_norm_bounds(batch: &GradientSampleBatch, alpha: f64) -> Result<NormInterval> {
    batch.validate()?;
    check_alpha(alpha)?;
    let t = l1_t_constant(
        subgaussian_k(batch.sigma),
        batch.dim(),
        batch.total(),
        alpha,
    );
    Ok(pooled_bounds(batch, NormKind::L1, t))
}

/// Apply the estimator for the `p` norm to the masked sample.
pub fn subspace_norm_bounds(
    batch: &GradientSampleBatch,
    mask: &[usize],
    p: NormKind,
    alpha: f64,
) -> Result<NormInterval> {
    let sub = batch.masked(mask)?;
    match p {
        NormKind::L1 => l1_norm_bounds(&sub, alpha),
        NormKind::L2 => l2_norm_bounds(&sub, alpha),
        NormKind::Linf => linf_norm_bounds(&sub, alpha),
    }
}

/// One-sided Clopper–Pearson lower confidence bound on a binomial
/// proportion: the true proportion is at least the result with probability
/// at least `1 - alpha`.
pub fn estimate_q_lower(successes: u64, n: u64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::domain("need at least one draw"));
    }
    if successes > n {
        return Err(Error::domain("successes exceed the number of draws"));
    }
    if successes == 0 {
        return Ok(0.0);
    }
    if successes == n {
        return Ok(alpha.powf(1.0 / n as f64));
    }
    Ok(inv_beta_reg(
        successes as f64,
        (n - successes + 1) as f64,
        alpha,
    ))
}

/// How the total failure probability is divided between the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBudget {
    pub alpha_total: f64,
    pub alpha_q: f64,
    pub alpha_l2: f64,
    pub alpha_linf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_subspace: Option<f64>,
}

/// Equal Bonferroni split of `alpha_total`.
pub fn split_alpha(
    alpha_total: f64,
    needs_l1: bool,
    needs_subspace: bool,
) -> Result<ConfidenceBudget> {
    if !(alpha_total > 0.0 && alpha_total < 0.5) {
        return Err(Error::domain(format!(
            "total alpha must lie in (0, 0.5), got {alpha_total}"
        )));
    }
    let parts = 3 + needs_l1 as usize + needs_subspace as usize;
    let share = alpha_total / parts as f64;
    Ok(ConfidenceBudget {
        alpha_total,
        alpha_q: share,
        alpha_l2: share,
        alpha_linf: share,
        alpha_l1: needs_l1.then_some(share),
        alpha_subspace: needs_subspace.then_some(share),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(x: Vec<f64>, y: Vec<f64>, n1: u64, n2: u64) -> GradientSampleBatch {
        GradientSampleBatch {
            x_sum: x,
            y_sum: y,
            n1,
            n2,
            success_count: 0,
            sigma: 1.0,
        }
    }

    #[test]
    fn pooled_mean_arithmetic() {
        let b = batch(vec![2.0, -2.0], vec![4.0, -4.0], 10, 10);
        assert_eq!(gradient_mean(&b), vec![0.3, -0.3]);
        let z = batch(vec![0.0; 3], vec![0.0; 3], 5, 5);
        assert_eq!(gradient_mean(&z), vec![0.0; 3]);
    }

    #[test]
    fn clopper_pearson_edges() {
        assert_eq!(estimate_q_lower(0, 100, 0.01).unwrap(), 0.0);
        let all = estimate_q_lower(100, 100, 0.01).unwrap();
        assert!((all - 0.01f64.powf(0.01)).abs() < 1e-15);
        assert!(estimate_q_lower(5, 4, 0.01).is_err());
    }

    #[test]
    fn alpha_split() {
        let b = split_alpha(0.001, false, false).unwrap();
        assert!((b.alpha_q - 0.001 / 3.0).abs() < 1e-18);
        let b = split_alpha(0.001, true, false).unwrap();
        assert_eq!(b.alpha_l1, Some(0.00025));
        assert!(split_alpha(0.0, false, false).is_err());
        assert!(split_alpha(0.5, false, false).is_err());
    }

    #[test]
    fn l2_hypothesis_floor() {
        let b = batch(vec![0.1; 8], vec![0.1; 8], 100, 100);
        assert!(matches!(
            l2_norm_bounds(&b, 0.001),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn uninformative_cross_product_gives_zero_lower() {
        let b = batch(vec![0.0; 200], vec![0.0; 200], 1000, 1000);
        let iv = l2_norm_bounds(&b, 0.05).unwrap();
        assert_eq!(iv.lower, 0.0);
        assert!(iv.upper > 0.0);
    }

    #[test]
    fn zero_data_linf_and_l1() {
        let b = batch(vec![0.0], vec![0.0], 50, 50);
        let linf = linf_norm_bounds(&b, 0.05).unwrap();
        let l1 = l1_norm_bounds(&b, 0.05).unwrap();
        assert_eq!(linf.lower, 0.0);
        let k = subgaussian_k(1.0);
        let t = (2.0 * k * (2f64.ln() - 0.05f64.ln()) / 100.0).sqrt();
        assert!((linf.upper - t).abs() < 1e-15);
        assert!((l1.upper - linf.upper).abs() < 1e-15);
    }

    #[test]
    fn merge_is_additive() {
        let mut a = batch(vec![1.0, 2.0], vec![3.0, 4.0], 3, 2);
        a.success_count = 4;
        let mut b = batch(vec![0.5, 0.5], vec![0.5, 0.5], 1, 1);
        b.success_count = 1;
        a.merge(&b).unwrap();
        assert_eq!(a.x_sum, vec![1.5, 2.5]);
        assert_eq!((a.n1, a.n2, a.success_count), (4, 3, 5));
        assert!(a.merge(&batch(vec![0.0], vec![0.0], 1, 1)).is_err());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let b = batch(vec![1.0, 2.0], vec![3.0, 4.0], 3, 2);
        assert!(subspace_norm_bounds(&b, &[], NormKind::L2, 0.05).is_err());
    }
}
