//! Monte-Carlo sampling of the smoothing statistics.

use serde::{Deserialize, Serialize};

use super::rng::{GaussianStream, RngSpec};
use super::BlackBoxClassifier;
use crate::certify::SmoothingConfig;
use crate::estimate::GradientSampleBatch;
use crate::{Error, Result};

/// Per-class tallies of one sampling pass.
///
/// Keeping per-class noise sums lets the certified class be chosen after
/// sampling (as the sample majority) without a second pass: for class `c`
/// the split sums of `z = w (1{f = c} - 1/2)` are `S_c - T/2`, where `S_c`
/// sums the noise of draws labelled `c` and `T` sums all noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub sigma: f64,
    pub n1: u64,
    pub n2: u64,
    pub counts: Vec<u64>,
    /// `class_sums[c][split]` is the noise sum over draws labelled `c`.
    pub class_sums: Vec<[Vec<f64>; 2]>,
    pub total_sums: [Vec<f64>; 2],
}

impl ClassTally {
    /// Majority class; ties go to the smaller index.
    pub fn majority(&self) -> usize {
        let mut best = 0;
        for (c, &n) in self.counts.iter().enumerate() {
            if n > self.counts[best] {
                best = c;
            }
        }
        best
    }

    /// The split sample for certifying `class`.
    pub fn batch_for(&self, class: usize) -> Result<GradientSampleBatch> {
        if class >= self.counts.len() {
            return Err(Error::domain(format!("class {class} out of range")));
        }
        let z = |split: usize| -> Vec<f64> {
            self.class_sums[class][split]
                .iter()
                .zip(&self.total_sums[split])
                .map(|(s, t)| s - 0.5 * t)
                .collect()
        };
        Ok(GradientSampleBatch {
            x_sum: z(0),
            y_sum: z(1),
            n1: self.n1,
            n2: self.n2,
            success_count: self.counts[class],
            sigma: self.sigma,
        })
    }
}

/// Draw `n` Gaussian perturbations around `x` and tally labels and noise.
///
/// The first `⌈n/2⌉` draws form split one and the rest split two.
pub fn sample_class_statistics(
    f: &dyn BlackBoxClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
    n: u64,
    rng: RngSpec,
) -> Result<ClassTally> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::domain("need at least two draws to form both splits"));
    }
    let d = x.len();
    if d != cfg.dim {
        return Err(Error::domain(format!(
            "point has dimension {d} but the configuration says {}",
            cfg.dim
        )));
    }
    if let Some(expected) = f.input_dim() {
        if expected != d {
            return Err(Error::domain(format!(
                "point has dimension {d} but the classifier expects {expected}"
            )));
        }
    }
    let classes = f.num_classes();
    if classes < 2 {
        return Err(Error::domain("a classifier needs at least two classes"));
    }
    let n1 = n.div_ceil(2);
    let mut tally = ClassTally {
        sigma: cfg.sigma,
        n1,
        n2: n - n1,
        counts: vec![0; classes],
        class_sums: vec![[vec![0.0; d], vec![0.0; d]]; classes],
        total_sums: [vec![0.0; d], vec![0.0; d]],
    };
    let mut stream = GaussianStream::at_draw(rng, 0, d);
    let mut noise = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for i in 0..n {
        stream.fill_normals(&mut noise);
        for ((w, p), xi) in noise.iter_mut().zip(&mut probe).zip(x) {
            *w *= cfg.sigma;
            *p = xi + *w;
        }
        let label = f.classify(&probe);
        if label >= classes {
            return Err(Error::domain(format!(
                "classifier returned label {label} outside 0..{classes}"
            )));
        }
        let split = usize::from(i >= n1);
        tally.counts[label] += 1;
        for (s, w) in tally.class_sums[label][split].iter_mut().zip(&noise) {
            *s += w;
        }
        for (s, w) in tally.total_sums[split].iter_mut().zip(&noise) {
            *s += w;
        }
    }
    Ok(tally)
}

/// Split sample of `z = w (1{f(x + w) = c} - 1/2)`.
pub fn sample_statistics(
    f: &dyn BlackBoxClassifier,
    x: &[f64],
    c: usize,
    cfg: &SmoothingConfig,
    n: u64,
    rng: RngSpec,
) -> Result<GradientSampleBatch> {
    sample_class_statistics(f, x, cfg, n, rng)?.batch_for(c)
}
