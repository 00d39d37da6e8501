//! Run configuration files and flag overrides.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use smoothcert::certify::{LinfMode, ThreatModel};
use smoothcert::classifiers::{make_synthetic, BlackBoxClassifier, SyntheticSpec};
use smoothcert::pipeline::{gaussian_workload, PointTask, RunConfig, WorkloadSpec};

/// Contents of a TOML run file. Every scalar can be overridden on the command
/// line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub threats: Option<Vec<String>>,
    pub subspace_mask: Option<Vec<usize>>,
    pub linf_mode: Option<LinfMode>,
    pub clamp_infeasible: Option<bool>,
    pub r_cap: Option<f64>,
    pub enable_l1: Option<bool>,
    pub tol: Option<f64>,
    pub jobs: Option<usize>,
    pub classifier: Option<SyntheticSpec>,
    #[serde(default)]
    pub points: Vec<PointEntry>,
    pub workload: Option<WorkloadSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointEntry {
    pub id: String,
    pub x: Vec<f64>,
    pub label: usize,
    pub threats: Option<Vec<String>>,
    pub subspace_mask: Option<Vec<usize>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Noise level of the smoothing distribution.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Total failure probability.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise draws per point.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated threat models, e.g. `l2,l1,subspace-l2`.
    #[arg(long, value_delimiter = ',')]
    pub threats: Option<Vec<String>>,
    /// Comma-separated coordinates of the subspace.
    #[arg(long, value_delimiter = ',')]
    pub subspace_mask: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub linf_mode: Option<LinfModeArg>,
    #[arg(long)]
    pub clamp_infeasible: bool,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LinfModeArg {
    ViaL1Bound,
    ViaL2Scaling,
}

impl From<LinfModeArg> for LinfMode {
    fn from(m: LinfModeArg) -> Self {
        match m {
            LinfModeArg::ViaL1Bound => LinfMode::ViaL1Bound,
            LinfModeArg::ViaL2Scaling => LinfMode::ViaL2Scaling,
        }
    }
}

/// Everything a run needs, validated.
pub struct Resolved {
    pub run: RunConfig,
    pub jobs: usize,
    pub classifier: Box<dyn BlackBoxClassifier>,
    pub tasks: Vec<PointTask>,
}

pub fn read_file(path: &Path) -> Result<FileConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn parse_threats(names: &[String]) -> Result<Vec<ThreatModel>> {
    if names.is_empty() {
        bail!("the threat list is empty");
    }
    names
        .iter()
        .map(|n| n.parse::<ThreatModel>().map_err(anyhow::Error::from))
        .collect()
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Merge file and flags into a run configuration without building tasks.
pub fn run_config(file: &FileConfig, flags: &Overrides) -> Result<RunConfig> {
    let base = RunConfig::default();
    let run = RunConfig {
        sigma: flags.sigma.or(file.sigma).unwrap_or(base.sigma),
        alpha_total: flags.alpha.or(file.alpha).unwrap_or(base.alpha_total),
        n_samples: flags.samples.or(file.samples).unwrap_or(base.n_samples),
        seed: flags.seed.or(file.seed).unwrap_or(base.seed),
        r_cap: file.r_cap.unwrap_or(base.r_cap),
        linf_mode: flags
            .linf_mode
            .map(LinfMode::from)
            .or(file.linf_mode)
            .unwrap_or(base.linf_mode),
        clamp_infeasible: flags.clamp_infeasible || file.clamp_infeasible.unwrap_or(false),
        enable_l1: file.enable_l1,
        tol: file.tol.unwrap_or(base.tol),
    };
    run.validate()?;
    Ok(run)
}

pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Resolved> {
    let run = run_config(file, flags)?;
    let spec = file
        .classifier
        .as_ref()
        .context("the config has no [classifier] section")?;
    let classifier = make_synthetic(spec)?;
    let threats = parse_threats(
        flags
            .threats
            .as_deref()
            .or(file.threats.as_deref())
            .unwrap_or(&["l2".to_string()]),
    )?;
    let mask = flags
        .subspace_mask
        .clone()
        .or_else(|| file.subspace_mask.clone());

    let mut tasks = Vec::new();
    for p in &file.points {
        let point_threats = match &p.threats {
            Some(t) => parse_threats(t)?,
            None => threats.clone(),
        };
        tasks.push(PointTask {
            point_id: p.id.clone(),
            x: p.x.clone(),
            true_label: p.label,
            requested_threats: point_threats,
            subspace_mask: p.subspace_mask.clone().or_else(|| mask.clone()),
        });
    }
    if let Some(w) = &file.workload {
        tasks.extend(gaussian_workload(
            w,
            classifier.as_ref(),
            &threats,
            mask.as_deref(),
        )?);
    }
    if tasks.is_empty() {
        bail!("the config defines no points: add [[points]] entries or a [workload] section");
    }
    for t in &tasks {
        if t.x.is_empty() {
            bail!("point '{}' has an empty input vector", t.point_id);
        }
        if let Some(d) = classifier.input_dim() {
            if t.x.len() != d {
                bail!(
                    "point '{}' has dimension {} but the classifier expects {d}",
                    t.point_id,
                    t.x.len()
                );
            }
        }
        if t.true_label >= classifier.num_classes() {
            bail!(
                "point '{}' has label {} outside the classifier's classes",
                t.point_id,
                t.true_label
            );
        }
        if t.requested_threats.iter().any(|th| th.is_subspace()) {
            match &t.subspace_mask {
                Some(m) if !m.is_empty() && m.iter().all(|&i| i < t.x.len()) => {}
                Some(_) => bail!("point '{}' has an invalid subspace mask", t.point_id),
                None => bail!(
                    "point '{}' requests a subspace threat but no subspace_mask is set",
                    t.point_id
                ),
            }
        }
    }
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.point_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        bail!("duplicate point id '{}'", w[0]);
    }
    let jobs = flags.jobs.or(file.jobs).unwrap_or_else(default_jobs);
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    Ok(Resolved {
        run,
        jobs,
        classifier,
        tasks,
    })
}
