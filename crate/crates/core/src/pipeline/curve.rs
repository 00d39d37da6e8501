//! Certified-accuracy curves.

use serde::{Deserialize, Serialize};

use super::{CertificateRow, RunResults};
use crate::certify::{Certificate, Method, ThreatModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: f64,
    pub certified_accuracy: f64,
    pub method: Method,
}

/// Fraction of points that are correctly classified, not abstained, and
/// certified at radius at least `R`, for each `R` in `grid`.
///
/// Every certificate is expected to come from the same method; the method
/// of the first one labels the curve.
pub fn certified_accuracy_curve(points: &[(bool, Certificate)], grid: &[f64]) -> Vec<CurvePoint> {
    let method = points.first().map_or(Method::FirstOrder, |(_, c)| c.method);
    let n = points.len();
    grid.iter()
        .map(|&r| {
            let hits = points
                .iter()
                .filter(|(correct, c)| *correct && !c.abstained && c.radius >= r)
                .count();
            CurvePoint {
                radius: r,
                certified_accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
                method,
            }
        })
        .collect()
}

/// `count` evenly spaced radii on `[0, 1.6 · max_radius]`.
pub fn default_grid(max_radius: f64, count: usize) -> Vec<f64> {
    let top = if max_radius.is_finite() && max_radius > 0.0 {
        1.6 * max_radius
    } else {
        1.0
    };
    linear_grid(top, count)
}

/// `count` evenly spaced radii on `[0, top]`.
pub fn linear_grid(top: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| top * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Zeroth- and first-order curves for one threat model on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatCurves {
    pub threat: ThreatModel,
    pub zeroth: Vec<CurvePoint>,
    pub first: Vec<CurvePoint>,
}

/// Curves for every threat model present in the rows. Each threat model
/// gets its own grid spanning 1.6 times its largest finite radius, unless
/// `top` fixes the upper end.
pub fn curves_from_rows(
    rows: &[CertificateRow],
    grid_points: usize,
    top: Option<f64>,
) -> Vec<ThreatCurves> {
    let mut threats: Vec<ThreatModel> = rows
        .iter()
        .flat_map(|r| r.radii.iter().map(|t| t.0))
        .collect();
    threats.sort();
    threats.dedup();
    threats
        .into_iter()
        .map(|threat| {
            let mut zeroth = Vec::new();
            let mut first = Vec::new();
            for row in rows {
                if let Some(&(_, z, f)) = row.radii.iter().find(|t| t.0 == threat) {
                    let cert = |radius, method| Certificate {
                        threat,
                        radius,
                        method,
                        alpha: 0.0,
                        abstained: row.abstained,
                        capped: false,
                    };
                    zeroth.push((row.correct, cert(z, Method::ZerothOrder)));
                    first.push((row.correct, cert(f, Method::FirstOrder)));
                }
            }
            let max = zeroth
                .iter()
                .chain(&first)
                .map(|(_, c)| c.radius)
                .filter(|r| r.is_finite())
                .fold(0.0, f64::max);
            let grid = match top {
                Some(t) => linear_grid(t, grid_points),
                None => default_grid(max, grid_points),
            };
            ThreatCurves {
                threat,
                zeroth: certified_accuracy_curve(&zeroth, &grid),
                first: certified_accuracy_curve(&first, &grid),
            }
        })
        .collect()
}

/// Rows of the certificate report for an in-memory run.
pub fn rows_of(results: &RunResults) -> Vec<CertificateRow> {
    results
        .points
        .iter()
        .map(|p| CertificateRow {
            point_id: p.point_id.clone(),
            correct: p.correct,
            abstained: p.abstained(),
            radii: p
                .threats
                .iter()
                .map(|t| (t.zeroth.threat, t.zeroth.radius, t.first.radius))
                .collect(),
        })
        .collect()
}

pub fn run_curves(results: &RunResults, grid_points: usize) -> Vec<ThreatCurves> {
    curves_from_rows(&rows_of(results), grid_points, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cert(radius: f64, abstained: bool) -> Certificate {
        Certificate {
            threat: ThreatModel::L2,
            radius,
            method: Method::ZerothOrder,
            alpha: 0.001,
            abstained,
            capped: false,
        }
    }

    #[test]
    fn counts_by_hand() {
        let pts = [
            (true, cert(1.0, false)),
            (true, cert(0.5, false)),
            (false, cert(2.0, false)),
            (true, cert(0.0, true)),
        ];
        let c = certified_accuracy_curve(&pts, &[0.0, 0.5, 0.75, 1.0, 1.5]);
        let acc: Vec<f64> = c.iter().map(|p| p.certified_accuracy).collect();
        assert_eq!(acc, vec![0.5, 0.5, 0.25, 0.25, 0.0]);
        assert!(c.iter().all(|p| p.method == Method::ZerothOrder));
    }

    #[test]
    fn grid_shape() {
        let g = default_grid(1.0, 5);
        assert_eq!(g, vec![0.0, 0.4, 0.8, 1.2000000000000002, 1.6]);
        assert_eq!(default_grid(0.0, 3), vec![0.0, 0.5, 1.0]);
    }
}
