//! Subcommand implementations. Each returns the process exit code.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use smoothcert::certify::IntervalConvention;
use smoothcert::pipeline::{
    certify_records, curves_from_rows, load_samples, merge_records, persist_run, persist_samples,
    read_certificates_csv, run_with, sample_tasks, write_certificates_csv, write_curves_csv,
    write_curves_svg, PipelineHooks, RunResults,
};

use crate::config::{self, Overrides};
use crate::selftest::{self, SelftestOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 2;

fn prepare_out_dir(out: &Path) -> Result<()> {
    if out.exists() && !out.is_dir() {
        bail!("{} exists and is not a directory", out.display());
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn write_run(results: &RunResults, out: &Path) -> Result<i32> {
    let csv_path = out.join("certificates.csv");
    let mut w = create(&csv_path)?;
    write_certificates_csv(results, &mut w)?;
    w.flush()?;
    persist_run(results, &out.join("run.json"))?;
    let failures = results.failures();
    log::info!(
        "certified {} points ({} with failures) into {}",
        results.points.len(),
        failures,
        out.display()
    );
    for p in results.points.iter().filter(|p| p.status.is_failure()) {
        eprintln!("point {}: {}", p.point_id, p.status.label());
    }
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn certify(
    config_path: &Path,
    flags: &Overrides,
    out: &Path,
    batches: &[PathBuf],
) -> Result<i32> {
    let file = config::read_file(config_path)?;
    if batches.is_empty() {
        let resolved = config::resolve(&file, flags)?;
        prepare_out_dir(out)?;
        let results = run_with(
            &resolved.tasks,
            resolved.classifier.as_ref(),
            &resolved.run,
            resolved.jobs,
            PipelineHooks::default(),
        )?;
        return write_run(&results, out);
    }
    let run = config::run_config(&file, flags)?;
    let jobs = flags.jobs.or(file.jobs).unwrap_or(1).max(1);
    let mut records = Vec::new();
    for b in batches {
        records.extend(load_samples(b)?);
    }
    if records.is_empty() {
        bail!("the batch files contain no records");
    }
    let records = merge_records(records)?;
    prepare_out_dir(out)?;
    let results = certify_records(&records, &run, jobs, PipelineHooks::default())?;
    write_run(&results, out)
}

pub fn sample(
    config_path: &Path,
    flags: &Overrides,
    out: &Path,
    stream_offset: u64,
) -> Result<i32> {
    let file = config::read_file(config_path)?;
    let resolved = config::resolve(&file, flags)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let records = sample_tasks(
        &resolved.tasks,
        resolved.classifier.as_ref(),
        &resolved.run,
        stream_offset,
        resolved.jobs,
    )?;
    persist_samples(&records, out)?;
    log::info!("sampled {} points into {}", records.len(), out.display());
    Ok(EXIT_OK)
}

pub fn curve(input: &Path, out: &Path, grid_points: usize, max_radius: Option<f64>) -> Result<i32> {
    if grid_points < 2 {
        bail!("--grid-points must be at least 2");
    }
    if let Some(m) = max_radius {
        if !(m > 0.0 && m.is_finite()) {
            bail!("--max-radius must be positive");
        }
    }
    let file = File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    let rows =
        read_certificates_csv(file).with_context(|| format!("cannot parse {}", input.display()))?;
    if rows.is_empty() {
        bail!("{} contains no certificate rows", input.display());
    }
    let curves = curves_from_rows(&rows, grid_points, max_radius);
    if curves.is_empty() {
        bail!("{} contains no radius columns", input.display());
    }
    prepare_out_dir(out)?;
    for c in &curves {
        let stem = format!("curve_{}", c.threat.as_str());
        let mut w = create(&out.join(format!("{stem}.csv")))?;
        write_curves_csv(c, &mut w)?;
        w.flush()?;
        let mut w = create(&out.join(format!("{stem}.svg")))?;
        write_curves_svg(std::slice::from_ref(c), &mut w)?;
        w.flush()?;
    }
    log::info!("wrote {} curves into {}", curves.len(), out.display());
    Ok(EXIT_OK)
}

pub fn selftest(quick: bool, flip_interval_labels: bool) -> Result<i32> {
    let opts = SelftestOptions {
        quick,
        convention: if flip_interval_labels {
            IntervalConvention::Mirrored
        } else {
            IntervalConvention::Standard
        },
    };
    let checks = selftest::run(opts);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        println!(
            "{:<width$}  {}  {:>7.2}s  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        );
    }
    println!(
        "{}",
        if all {
            "all checks passed"
        } else {
            "some checks failed"
        }
    );
    Ok(if all { EXIT_OK } else { EXIT_PARTIAL })
}
