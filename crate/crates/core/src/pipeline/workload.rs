//! Synthetic point sets for benchmarks and self-tests.

use serde::{Deserialize, Serialize};

use super::PointTask;
use crate::certify::ThreatModel;
use crate::classifiers::{BlackBoxClassifier, GaussianStream, RngSpec};
use crate::{Error, Result};

/// Stream reserved for drawing workload points, disjoint from the per-point
/// sampling streams in practice.
const WORKLOAD_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub count: usize,
    pub dim: usize,
    /// Points are drawn from `N(center, spread² I)`.
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Give every `k`-th point the wrong label, to exercise misclassified
    /// points in the curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mislabel_every: Option<usize>,
}

fn default_spread() -> f64 {
    1.0
}

/// Draw `spec.count` points and label them with `f`.
pub fn gaussian_workload(
    spec: &WorkloadSpec,
    f: &dyn BlackBoxClassifier,
    threats: &[ThreatModel],
    subspace_mask: Option<&[usize]>,
) -> Result<Vec<PointTask>> {
    if spec.dim == 0 {
        return Err(Error::domain("workload dimension must be positive"));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::domain(
            "workload spread must be finite and non-negative",
        ));
    }
    if let Some(c) = &spec.center {
        if c.len() != spec.dim {
            return Err(Error::domain("workload centre has the wrong dimension"));
        }
    }
    let classes = f.num_classes();
    let width = spec.count.max(1).to_string().len();
    let mut stream = GaussianStream::at_draw(RngSpec::new(spec.seed, WORKLOAD_STREAM), 0, spec.dim);
    let mut tasks = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut x = vec![0.0; spec.dim];
        stream.fill_normals(&mut x);
        for (j, xi) in x.iter_mut().enumerate() {
            *xi = *xi * spec.spread + spec.center.as_ref().map_or(0.0, |c| c[j]);
        }
        let mut label = f.classify(&x);
        if spec.mislabel_every.is_some_and(|k| k > 0 && i % k == k - 1) {
            label = (label + 1) % classes;
        }
        tasks.push(PointTask {
            point_id: format!("p{i:0width$}"),
            x,
            true_label: label,
            requested_threats: threats.to_vec(),
            subspace_mask: subspace_mask.map(<[usize]>::to_vec),
        });
    }
    Ok(tasks)
}
