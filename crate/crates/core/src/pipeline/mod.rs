//! Per-point orchestration: sample once, estimate, certify every requested
//! threat model, and collect diagnostics.

mod curve;
mod persist;
mod report;
mod workload;

pub use curve::{
    certified_accuracy_curve, curves_from_rows, default_grid, linear_grid, rows_of, run_curves,
    CurvePoint, ThreatCurves,
};
pub use persist::{
    load_run, load_samples, persist_run, persist_samples, RunResults, SCHEMA_VERSION,
};
pub use report::{
    read_certificates_csv, write_certificates_csv, write_curves_csv, write_curves_svg,
    CertificateRow, CSV_COLUMNS,
};
pub use workload::{gaussian_workload, WorkloadSpec};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    zeroth_radius, Certificate, Certifier, DualOptions, GradientNormBounds, IntervalConvention,
    LinfMode, Method, NormKind, RadiusOutcome, SmoothingConfig, SubspaceBound, ThreatModel,
    DEFAULT_R_CAP,
};
use crate::classifiers::{sample_class_statistics, BlackBoxClassifier, RngSpec};
use crate::estimate::{
    estimate_q_lower, l1_norm_bounds, l2_norm_bounds, linf_norm_bounds, split_alpha,
    subspace_norm_bounds, ConfidenceBudget, GradientSampleBatch, NormInterval,
};
use crate::numerics::FRAC_1_SQRT_2PI;
use crate::{Error, Result};

/// Dimension above which the ℓ1 gradient estimator is disabled unless
/// explicitly requested; its deviation term grows linearly in `d`.
pub const L1_AUTO_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: f64,
    #[serde(default = "default_alpha")]
    pub alpha_total: f64,
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_r_cap")]
    pub r_cap: f64,
    #[serde(default)]
    pub linf_mode: LinfMode,
    #[serde(default)]
    pub clamp_infeasible: bool,
    /// Force the ℓ1 estimator on or off; by default it runs only for
    /// `d ≤ 64` and only when the ℓ∞ threat uses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enable_l1: Option<bool>,
    /// Tolerance on scaled radii.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_alpha() -> f64 {
    0.001
}
fn default_samples() -> u64 {
    200_000
}
fn default_r_cap() -> f64 {
    DEFAULT_R_CAP
}
fn default_tol() -> f64 {
    1e-7
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma: 0.25,
            alpha_total: default_alpha(),
            n_samples: default_samples(),
            seed: 0,
            r_cap: default_r_cap(),
            linf_mode: LinfMode::default(),
            clamp_infeasible: false,
            enable_l1: None,
            tol: default_tol(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain("sigma must be positive"));
        }
        if !(self.alpha_total > 0.0 && self.alpha_total < 0.5) {
            return Err(Error::domain("alpha must lie in (0, 0.5)"));
        }
        if self.n_samples < 2 {
            return Err(Error::domain("need at least two samples per point"));
        }
        if !(self.r_cap > 0.0 && self.r_cap.is_finite()) {
            return Err(Error::domain("r_cap must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tolerance must be positive"));
        }
        Ok(())
    }

    fn certifier(&self, convention: IntervalConvention) -> Certifier {
        Certifier {
            dual: DualOptions {
                clamp_infeasible: self.clamp_infeasible,
                ..DualOptions::default()
            },
            r_cap: self.r_cap,
            tol: self.tol,
            convention,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTask {
    pub point_id: String,
    pub x: Vec<f64>,
    pub true_label: usize,
    pub requested_threats: Vec<ThreatModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_mask: Option<Vec<usize>>,
}

/// Per-point solver traces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub solver_iterations: usize,
    pub fallback_used: bool,
    pub capped: bool,
    pub clamped: bool,
    /// Some first-order radius reduced to the zeroth-order answer because
    /// the gradient bounds were uninformative.
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "message", rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    /// An estimator hypothesis failed; the affected bounds were replaced by
    /// trivially valid ones.
    Degraded(String),
    /// A first-order computation failed; the zeroth-order radius was
    /// reported in its place.
    Partial(String),
    /// The point could not be processed at all.
    Failed(String),
}

impl PointStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, PointStatus::Partial(_) | PointStatus::Failed(_))
    }

    pub fn label(&self) -> String {
        match self {
            PointStatus::Ok => "ok".into(),
            PointStatus::Degraded(m) => format!("degraded: {m}"),
            PointStatus::Partial(m) => format!("partial: {m}"),
            PointStatus::Failed(m) => format!("failed: {m}"),
        }
    }
}

/// Certificates for one threat model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatResult {
    pub zeroth: Certificate,
    pub first: Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point_id: String,
    pub predicted: usize,
    pub true_label: usize,
    pub correct: bool,
    pub q_lower: f64,
    /// Gradient norm bounds in units of `‖∇g‖`, after tightening.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<GradientNormBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_dim: Option<usize>,
    pub threats: Vec<ThreatResult>,
    pub diagnostics: PointDiagnostics,
    pub status: PointStatus,
}

impl PointResult {
    pub fn threat(&self, threat: ThreatModel) -> Option<&ThreatResult> {
        self.threats.iter().find(|t| t.zeroth.threat == threat)
    }

    pub fn abstained(&self) -> bool {
        self.threats.iter().all(|t| t.zeroth.abstained) && !self.threats.is_empty()
    }
}

/// Stable 64-bit FNV-1a hash, used to derive each point's RNG stream from
/// its identifier so results do not depend on task order.
pub fn stream_id_for(point_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in point_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Options that only the self-test uses.
#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineHooks {
    pub convention: IntervalConvention,
}

/// Sample, estimate and certify one point.
pub fn certify_point(
    task: &PointTask,
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
) -> PointResult {
    certify_point_with(task, f, config, PipelineHooks::default())
}

pub fn certify_point_with(
    task: &PointTask,
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
    hooks: PipelineHooks,
) -> PointResult {
    match sample_point(task, f, config) {
        Ok((predicted, batch)) => certify_from_batch(task, predicted, &batch, config, hooks),
        Err(err) => failed(task, config, err.to_string()),
    }
}

fn sample_point(
    task: &PointTask,
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
) -> Result<(usize, GradientSampleBatch)> {
    sample_point_on(task, f, config, 0)
}

fn sample_point_on(
    task: &PointTask,
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
    stream_offset: u64,
) -> Result<(usize, GradientSampleBatch)> {
    config.validate()?;
    let cfg = SmoothingConfig::new(config.sigma, task.x.len())?;
    let rng = RngSpec::new(
        config.seed,
        stream_id_for(&task.point_id).wrapping_add(stream_offset),
    );
    let tally = sample_class_statistics(f, &task.x, &cfg, config.n_samples, rng)?;
    let predicted = tally.majority();
    Ok((predicted, tally.batch_for(predicted)?))
}

fn failed(task: &PointTask, config: &RunConfig, message: String) -> PointResult {
    let threats = canonical_threats(&task.requested_threats)
        .into_iter()
        .map(|t| ThreatResult {
            zeroth: Certificate::abstain(t, Method::ZerothOrder, config.alpha_total),
            first: Certificate::abstain(t, Method::FirstOrder, config.alpha_total),
        })
        .collect();
    PointResult {
        point_id: task.point_id.clone(),
        predicted: usize::MAX,
        true_label: task.true_label,
        correct: false,
        q_lower: 0.0,
        bounds: None,
        subspace_dim: None,
        threats,
        diagnostics: PointDiagnostics::default(),
        status: PointStatus::Failed(message),
    }
}

fn canonical_threats(requested: &[ThreatModel]) -> Vec<ThreatModel> {
    let mut out = requested.to_vec();
    out.sort();
    out.dedup();
    out
}

/// A bound on a norm of `σ²∇g`, with the source of failure if the
/// estimator could not be applied.
fn or_trivial(
    result: Result<NormInterval>,
    trivial_upper: f64,
    what: &str,
    notes: &mut Vec<String>,
) -> NormInterval {
    match result {
        Ok(iv) => iv,
        Err(err) => {
            notes.push(format!("{what}: {err}"));
            NormInterval {
                lower: 0.0,
                upper: trivial_upper,
            }
        }
    }
}

/// Certify from an already-collected sample of the predicted class.
pub fn certify_from_batch(
    task: &PointTask,
    predicted: usize,
    batch: &GradientSampleBatch,
    config: &RunConfig,
    hooks: PipelineHooks,
) -> PointResult {
    match certify_inner(task, predicted, batch, config, hooks) {
        Ok(r) => r,
        Err(err) => failed(task, config, err.to_string()),
    }
}

fn certify_inner(
    task: &PointTask,
    predicted: usize,
    batch: &GradientSampleBatch,
    config: &RunConfig,
    hooks: PipelineHooks,
) -> Result<PointResult> {
    config.validate()?;
    batch.validate()?;
    let d = batch.dim();
    if d != task.x.len() {
        return Err(Error::domain("batch dimension does not match the point"));
    }
    let cfg = SmoothingConfig::new(config.sigma, d)?;
    let threats = canonical_threats(&task.requested_threats);
    let wants_subspace = threats.iter().any(|t| t.is_subspace());
    let mask = match (&task.subspace_mask, wants_subspace) {
        (Some(m), true) => {
            let mut m = m.clone();
            m.sort_unstable();
            m.dedup();
            if m.is_empty() || m.iter().any(|&i| i >= d) {
                return Err(Error::domain(
                    "subspace mask must be a non-empty set of valid coordinates",
                ));
            }
            Some(m)
        }
        (None, true) => return Err(Error::domain("subspace threats require a subspace mask")),
        _ => None,
    };
    let mut notes = Vec::new();

    let mut linf_mode = config.linf_mode;
    let wants_linf = threats.contains(&ThreatModel::Linf);
    let l1_allowed = config.enable_l1.unwrap_or(d <= L1_AUTO_MAX_DIM);
    if wants_linf && linf_mode == LinfMode::ViaL1Bound && !l1_allowed {
        log::warn!(
            "point {}: l1 gradient estimation needs O(d) more samples than l2; using the l2 scaling path for d = {d}",
            task.point_id
        );
        notes.push(format!(
            "l1 estimator disabled for d = {d}; linf via l2 scaling"
        ));
        linf_mode = LinfMode::ViaL2Scaling;
    }
    let needs_l1 = wants_linf && linf_mode == LinfMode::ViaL1Bound;
    let budget: ConfidenceBudget = split_alpha(config.alpha_total, needs_l1, wants_subspace)?;

    let q_lower = estimate_q_lower(batch.success_count, batch.total(), budget.alpha_q)?;
    let sigma2 = config.sigma * config.sigma;
    // ‖∇g‖₂ ≤ φ(0)/σ for every smoothed classifier; in σ²-units that is
    // σ φ(0). Any upper bound can be capped at this value.
    let absolute = config.sigma * FRAC_1_SQRT_2PI;

    // Each side of the ℓ2 interval holds at 1 - α separately; splitting the
    // share makes the pair hold jointly.
    let l2 = or_trivial(
        l2_norm_bounds(batch, budget.alpha_l2 / 2.0),
        absolute,
        "l2 estimator",
        &mut notes,
    );
    let linf = or_trivial(
        linf_norm_bounds(batch, budget.alpha_linf),
        absolute,
        "linf estimator",
        &mut notes,
    );
    let l1 = budget.alpha_l1.map(|a| {
        or_trivial(
            l1_norm_bounds(batch, a),
            absolute * (d as f64).sqrt(),
            "l1 estimator",
            &mut notes,
        )
    });

    let to_units = |v: f64| v / sigma2;
    let mut bounds = GradientNormBounds {
        l2_lower: to_units(l2.lower),
        l2_upper: to_units(l2.upper.min(absolute)),
        linf_lower: to_units(linf.lower),
        linf_upper: to_units(linf.upper.min(absolute)),
        l1_upper: l1.map(|iv| to_units(iv.upper.min(absolute * (d as f64).sqrt()))),
        l1_lower: l1.map_or(0.0, |iv| to_units(iv.lower)),
        subspace: None,
    };
    if bounds.l2_lower > bounds.l2_upper || bounds.linf_lower > bounds.linf_upper {
        notes.push("estimated norm intervals are mutually inconsistent".into());
    }
    bounds = bounds.tightened(d);
    bounds.l2_lower = bounds.l2_lower.min(bounds.l2_upper);
    bounds.linf_lower = bounds.linf_lower.min(bounds.linf_upper);
    bounds.l1_lower = bounds
        .l1_upper
        .map_or(bounds.l1_lower, |u| bounds.l1_lower.min(u));

    // Subspace bounds per dual norm, each intersected with what the
    // full-space bounds already imply for the projection.
    let subspace_threats: Vec<ThreatModel> = threats
        .iter()
        .copied()
        .filter(|t| t.is_subspace())
        .collect();
    let sub_alpha = budget
        .alpha_subspace
        .map(|a| a / subspace_threats.len().max(1) as f64);
    let mut subspace_bounds = Vec::new();
    if let (Some(mask), Some(alpha)) = (&mask, sub_alpha) {
        let ds = mask.len() as f64;
        for &t in &subspace_threats {
            let dual = t.norm().dual();
            let alpha = if dual == NormKind::L2 {
                alpha / 2.0
            } else {
                alpha
            };
            let implied = match dual {
                NormKind::L2 => bounds.l2_upper,
                NormKind::Linf => bounds.linf_upper,
                NormKind::L1 => ds.sqrt() * bounds.l2_upper,
            };
            let est = match subspace_norm_bounds(batch, mask, dual, alpha) {
                Ok(iv) => NormInterval {
                    lower: to_units(iv.lower),
                    upper: to_units(iv.upper),
                },
                Err(err) => {
                    notes.push(format!("{t} estimator: {err}"));
                    NormInterval {
                        lower: 0.0,
                        upper: implied,
                    }
                }
            };
            let upper = est.upper.min(implied);
            subspace_bounds.push((
                t,
                SubspaceBound {
                    dual_upper: upper,
                    dual_lower: est.lower.min(upper),
                },
            ));
        }
    }

    let certifier = config.certifier(hooks.convention);
    let mut diag = PointDiagnostics::default();
    let mut failures = Vec::new();
    let mut results = Vec::new();
    let d_s = mask.as_ref().map(|m| m.len());
    for &threat in &threats {
        let zeroth_r = zeroth_radius(threat, q_lower, &cfg, d_s);
        let abstain = q_lower <= 0.5;
        let zeroth = Certificate {
            threat,
            radius: if abstain { 0.0 } else { zeroth_r },
            method: Method::ZerothOrder,
            alpha: config.alpha_total,
            abstained: abstain,
            capped: false,
        };
        let outcome: Result<RadiusOutcome> = if abstain {
            Ok(RadiusOutcome {
                radius: 0.0,
                abstained: true,
                capped: false,
                degenerate: false,
                fallback_used: false,
                iterations: 0,
            })
        } else {
            match threat {
                ThreatModel::L2 => certifier.radius_l2_first(q_lower, bounds.l2_upper, &cfg),
                ThreatModel::L1 => certifier.radius_l1_first(q_lower, &bounds, &cfg),
                ThreatModel::Linf => certifier.radius_linf_first(q_lower, &bounds, &cfg, linf_mode),
                t => {
                    let sub = subspace_bounds
                        .iter()
                        .find(|(s, _)| *s == t)
                        .map(|(_, b)| *b);
                    let b = GradientNormBounds {
                        subspace: sub,
                        ..bounds
                    };
                    certifier.radius_subspace(q_lower, &b, t.norm(), d_s.unwrap_or(d), &cfg)
                }
            }
        };
        let first = match outcome {
            Ok(o) => {
                diag.solver_iterations += o.iterations;
                diag.fallback_used |= o.fallback_used;
                diag.capped |= o.capped;
                diag.degenerate |= o.degenerate;
                Certificate {
                    threat,
                    radius: if o.abstained { 0.0 } else { o.radius },
                    method: Method::FirstOrder,
                    alpha: config.alpha_total,
                    abstained: o.abstained,
                    capped: o.capped,
                }
            }
            Err(err) => {
                failures.push(format!("{threat}: {err}"));
                Certificate {
                    method: Method::FirstOrder,
                    ..zeroth
                }
            }
        };
        results.push(ThreatResult { zeroth, first });
    }
    if config.clamp_infeasible {
        let limit = if q_lower > 0.0 && q_lower < 1.0 {
            crate::certify::max_gradient_magnitude(q_lower)?
        } else {
            0.0
        };
        diag.clamped =
            config.sigma * bounds.l2_lower > limit * (1.0 + crate::certify::FEASIBILITY_SLACK);
    }
    let status = if !failures.is_empty() {
        PointStatus::Partial(failures.join("; "))
    } else if notes.iter().any(|n| n.contains("estimator")) {
        PointStatus::Degraded(
            notes
                .iter()
                .filter(|n| n.contains("estimator"))
                .cloned()
                .collect::<Vec<_>>()
                .join("; "),
        )
    } else {
        PointStatus::Ok
    };
    diag.notes = notes;
    Ok(PointResult {
        point_id: task.point_id.clone(),
        predicted,
        true_label: task.true_label,
        correct: predicted == task.true_label,
        q_lower,
        bounds: Some(bounds),
        subspace_dim: d_s,
        threats: results,
        diagnostics: diag,
        status,
    })
}

/// A sampled point, stored so certification can be rerun offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub task: PointTask,
    pub predicted: usize,
    pub batch: GradientSampleBatch,
}

/// Sample one point. `stream_offset` shifts the RNG stream so several
/// independent batches of the same point can be drawn and merged later.
pub fn sample_task(
    task: &PointTask,
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
    stream_offset: u64,
) -> Result<SampleRecord> {
    let (predicted, batch) = sample_point_on(task, f, config, stream_offset)?;
    Ok(SampleRecord {
        task: task.clone(),
        predicted,
        batch,
    })
}

/// Sample every task on `jobs` workers; records are sorted by point id.
pub fn sample_tasks(
    tasks: &[PointTask],
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
    stream_offset: u64,
    jobs: usize,
) -> Result<Vec<SampleRecord>> {
    check_unique(tasks.iter().map(|t| t.point_id.as_str()))?;
    let pool = pool(jobs)?;
    let mut out: Vec<SampleRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| sample_task(t, f, config, stream_offset))
            .collect::<Result<_>>()
    })?;
    out.sort_by(|a, b| a.task.point_id.cmp(&b.task.point_id));
    Ok(out)
}

/// Merge records that share a point id. Records of one point must agree on
/// the task and the predicted class.
pub fn merge_records(records: Vec<SampleRecord>) -> Result<Vec<SampleRecord>> {
    let mut merged: Vec<SampleRecord> = Vec::new();
    let mut records = records;
    records.sort_by(|a, b| a.task.point_id.cmp(&b.task.point_id));
    for r in records {
        match merged.last_mut() {
            Some(last) if last.task.point_id == r.task.point_id => {
                if last.task != r.task {
                    return Err(Error::domain(format!(
                        "records for '{}' describe different tasks",
                        r.task.point_id
                    )));
                }
                if last.predicted != r.predicted {
                    return Err(Error::domain(format!(
                        "records for '{}' disagree on the predicted class",
                        r.task.point_id
                    )));
                }
                last.batch.merge(&r.batch)?;
            }
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

/// Certify previously sampled points.
pub fn certify_records(
    records: &[SampleRecord],
    config: &RunConfig,
    jobs: usize,
    hooks: PipelineHooks,
) -> Result<RunResults> {
    config.validate()?;
    check_unique(records.iter().map(|r| r.task.point_id.as_str()))?;
    for r in records {
        if (r.batch.sigma - config.sigma).abs() > 1e-15 * config.sigma {
            return Err(Error::domain(format!(
                "record '{}' was sampled at sigma = {} but the run uses {}",
                r.task.point_id, r.batch.sigma, config.sigma
            )));
        }
    }
    let pool = pool(jobs)?;
    let mut points: Vec<PointResult> = pool.install(|| {
        records
            .par_iter()
            .map(|r| certify_from_batch(&r.task, r.predicted, &r.batch, config, hooks))
            .collect()
    });
    points.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    Ok(RunResults {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        points,
    })
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut ids: Vec<&str> = ids.collect();
    ids.sort_unstable();
    match ids.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(Error::domain(format!("duplicate point id '{}'", w[0]))),
        None => Ok(()),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::domain(format!("cannot build worker pool: {e}")))
}

/// Certify every task on a pool of `jobs` workers. Results are sorted by
/// point id; they do not depend on the number of workers.
pub fn run(
    tasks: &[PointTask],
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
    jobs: usize,
) -> Result<RunResults> {
    run_with(tasks, f, config, jobs, PipelineHooks::default())
}

pub fn run_with(
    tasks: &[PointTask],
    f: &dyn BlackBoxClassifier,
    config: &RunConfig,
    jobs: usize,
    hooks: PipelineHooks,
) -> Result<RunResults> {
    config.validate()?;
    check_unique(tasks.iter().map(|t| t.point_id.as_str()))?;
    let pool = pool(jobs)?;
    let mut points: Vec<PointResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| certify_point_with(t, f, config, hooks))
            .collect()
    });
    points.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    Ok(RunResults {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        points,
    })
}
