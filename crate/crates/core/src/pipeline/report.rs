//! CSV and SVG reports.

use std::fmt::Write as _;
use std::io::Write;

use super::{PointResult, RunResults, ThreatCurves};
use crate::certify::{Method, ThreatModel};
use crate::{Error, Result};

/// Column order of the certificate report.
pub const CSV_COLUMNS: [&str; 20] = [
    "point_id",
    "predicted",
    "correct",
    "q_lb",
    "grad_l2_lb",
    "grad_l2_ub",
    "grad_linf_ub",
    "radius_zeroth_l2",
    "radius_first_l1",
    "radius_first_l2",
    "radius_first_linf",
    "radius_first_subspace",
    "abstained",
    "capped",
    "fallback_used",
    "radius_zeroth_l1",
    "radius_zeroth_linf",
    "radius_zeroth_subspace",
    "subspace_threat",
    "status",
];

fn io(err: std::io::Error) -> Error {
    Error::Io {
        path: "<report>".into(),
        source: err,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn radius(p: &PointResult, threat: ThreatModel, method: Method) -> Option<f64> {
    p.threat(threat).map(|t| match method {
        Method::ZerothOrder => t.zeroth.radius,
        Method::FirstOrder => t.first.radius,
    })
}

/// The subspace columns report the first subspace threat of the point in
/// the order ℓ1, ℓ2, ℓ∞.
fn subspace_threat(p: &PointResult) -> Option<ThreatModel> {
    [
        ThreatModel::SubspaceL1,
        ThreatModel::SubspaceL2,
        ThreatModel::SubspaceLinf,
    ]
    .into_iter()
    .find(|&t| p.threat(t).is_some())
}

fn subspace_radius(p: &PointResult, method: Method) -> Option<f64> {
    subspace_threat(p).and_then(|t| radius(p, t, method))
}

/// Write one row per point. The first line is a `#` comment naming the
/// schema; empty cells mark threat models that were not requested.
pub fn write_certificates_csv<W: Write>(results: &RunResults, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# smoothcert certificates v{} sigma={} alpha={} samples={} seed={}",
        results.schema_version,
        results.config.sigma,
        results.config.alpha_total,
        results.config.n_samples,
        results.config.seed
    )
    .map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for p in &results.points {
        let b = p.bounds.as_ref();
        let any_first =
            |f: fn(&crate::certify::Certificate) -> bool| p.threats.iter().any(|t| f(&t.first));
        let predicted = if p.predicted == usize::MAX {
            String::new()
        } else {
            p.predicted.to_string()
        };
        w.write_record([
            p.point_id.clone(),
            predicted,
            p.correct.to_string(),
            p.q_lower.to_string(),
            opt(b.map(|b| b.l2_lower)),
            opt(b.map(|b| b.l2_upper)),
            opt(b.map(|b| b.linf_upper)),
            opt(radius(p, ThreatModel::L2, Method::ZerothOrder)),
            opt(radius(p, ThreatModel::L1, Method::FirstOrder)),
            opt(radius(p, ThreatModel::L2, Method::FirstOrder)),
            opt(radius(p, ThreatModel::Linf, Method::FirstOrder)),
            opt(subspace_radius(p, Method::FirstOrder)),
            p.abstained().to_string(),
            any_first(|c| c.capped).to_string(),
            p.diagnostics.fallback_used.to_string(),
            opt(radius(p, ThreatModel::L1, Method::ZerothOrder)),
            opt(radius(p, ThreatModel::Linf, Method::ZerothOrder)),
            opt(subspace_radius(p, Method::ZerothOrder)),
            subspace_threat(p).map_or_else(String::new, |t| t.as_str().to_string()),
            p.status.label(),
        ])?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Curve table for one threat model: `radius,zeroth_acc,first_acc`.
pub fn write_curves_csv<W: Write>(curves: &ThreatCurves, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["radius", "zeroth_acc", "first_acc"])?;
    for (z, f) in curves.zeroth.iter().zip(&curves.first) {
        w.write_record([
            z.radius.to_string(),
            z.certified_accuracy.to_string(),
            f.certified_accuracy.to_string(),
        ])?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// One row of a certificates report, as read back by [`read_certificates_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    pub point_id: String,
    pub correct: bool,
    pub abstained: bool,
    /// `(threat, zeroth radius, first-order radius)` for every threat model
    /// with both cells present.
    pub radii: Vec<(ThreatModel, f64, f64)>,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: "<certificates>".into(),
        line: line as usize,
        column: 0,
        message: message.into(),
    }
}

/// Parse a report written by [`write_certificates_csv`]. Lines starting with
/// `#` are skipped.
pub fn read_certificates_csv<R: std::io::Read>(input: R) -> Result<Vec<CertificateRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column '{name}'")))
    };
    let need = |name: &str| col(name);
    let id = need("point_id")?;
    let correct = need("correct")?;
    let abstained = need("abstained")?;
    let sub_threat = col("subspace_threat").ok();
    let pairs = [
        (Some(ThreatModel::L1), "radius_zeroth_l1", "radius_first_l1"),
        (Some(ThreatModel::L2), "radius_zeroth_l2", "radius_first_l2"),
        (
            Some(ThreatModel::Linf),
            "radius_zeroth_linf",
            "radius_first_linf",
        ),
        (None, "radius_zeroth_subspace", "radius_first_subspace"),
    ];
    let mut cols = Vec::new();
    for (t, z, f) in pairs {
        if let (Ok(z), Ok(f)) = (col(z), col(f)) {
            cols.push((t, z, f));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let boolean = |i: usize| -> Result<bool> {
            rec[i]
                .parse()
                .map_err(|_| parse_err(line, format!("expected true/false, found '{}'", &rec[i])))
        };
        let number = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                return Ok(None);
            }
            rec[i]
                .parse()
                .map(Some)
                .map_err(|_| parse_err(line, format!("expected a number, found '{}'", &rec[i])))
        };
        let mut radii = Vec::new();
        for &(t, z, f) in &cols {
            let threat = match t {
                Some(t) => t,
                None => match sub_threat.map(|i| &rec[i]).filter(|s| !s.is_empty()) {
                    Some(s) => s
                        .parse()
                        .map_err(|e: Error| parse_err(line, e.to_string()))?,
                    None => continue,
                },
            };
            if let (Some(zr), Some(fr)) = (number(z)?, number(f)?) {
                radii.push((threat, zr, fr));
            }
        }
        rows.push(CertificateRow {
            point_id: rec[id].to_string(),
            correct: boolean(correct)?,
            abstained: boolean(abstained)?,
            radii,
        });
    }
    Ok(rows)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Render the curves as a standalone SVG. The output depends only on the
/// curve values, so identical runs give byte-identical files.
pub fn write_curves_svg<W: Write>(curves: &[ThreatCurves], mut out: W) -> Result<()> {
    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 170.0, 20.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let x_max = curves
        .iter()
        .flat_map(|c| c.zeroth.iter().chain(&c.first))
        .map(|p| p.radius)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let sx = |r: f64| left + plot_w * r / x_max;
    let sy = |a: f64| top + plot_h * (1.0 - a);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let a = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{a:.2}</text>"#,
            left - 6.0,
            sy(a) + 4.0
        );
        let r = x_max * a;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{r:.3}</text>"#,
            sx(r),
            top + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">radius</text>"#,
        left + plot_w / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">certified accuracy</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let mut legend_y = top + 10.0;
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for (pts, dash, label) in [(&c.zeroth, "6 4", "zeroth"), (&c.first, "none", "first")] {
            let path: Vec<String> = pts
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p.radius), sy(p.certified_accuracy)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" stroke-dasharray="{dash}" points="{}"/>"#,
                path.join(" ")
            );
            let lx = width - right + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{colour}" stroke-width="1.5" stroke-dasharray="{dash}"/>"#,
                lx + 24.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{} {label}</text>"#,
                lx + 30.0,
                legend_y + 4.0,
                c.threat
            );
            legend_y += 16.0;
        }
    }
    s.push_str("</svg>\n");
    out.write_all(s.as_bytes()).map_err(io)
}
