//! Damped Newton for small nonlinear systems and convex minimisation, and
//! bracketed scalar roots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Convergence threshold on the max-norm of the residual.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    /// Relative central-difference step for the Jacobian.
    pub jacobian_step: f64,
    /// Smallest step fraction tried by the backtracking line search.
    pub damping_floor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-10,
            max_iterations: 100,
            jacobian_step: 1e-6,
            damping_floor: 1.0 / 1024.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tolerance > 0.0 && self.residual_tolerance <= 1e-8) {
            return Err(Error::domain("residual tolerance must lie in (0, 1e-8]"));
        }
        if self.max_iterations < 50 {
            return Err(Error::domain("max_iterations must be at least 50"));
        }
        if !(self.jacobian_step > 0.0 && self.damping_floor > 0.0 && self.damping_floor <= 1.0) {
            return Err(Error::domain(
                "jacobian step and damping floor must be positive",
            ));
        }
        Ok(())
    }
}

/// Converged point of [`solve_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter()
        .map(|x| {
            if x.is_finite() {
                x.abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Solve `F(x) = 0` by damped Newton with a finite-difference Jacobian.
///
/// Each step is halved until the max-norm residual decreases; if the step
/// fraction would drop below the damping floor the solve fails.
pub fn solve_system<F>(
    mut residual: F,
    initial: &[f64],
    settings: &SolverSettings,
) -> Result<Solution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let step = settings.jacobian_step;
    newton(
        |x: &[f64], want_jacobian: bool| {
            let fx = residual(x)?;
            if !want_jacobian {
                return Ok((fx, None));
            }
            let n = x.len();
            let mut jac = DMatrix::<f64>::zeros(fx.len(), n);
            let mut probe = x.to_vec();
            for j in 0..n {
                let h = step * x[j].abs().max(1.0);
                probe[j] = x[j] + h;
                let fp = residual(&probe)?;
                probe[j] = x[j] - h;
                let fm = residual(&probe)?;
                probe[j] = x[j];
                for i in 0..fx.len().min(fp.len()).min(fm.len()) {
                    jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            Ok((fx, Some(jac)))
        },
        initial,
        settings,
    )
}

fn newton<E>(mut eval: E, initial: &[f64], settings: &SolverSettings) -> Result<Solution>
where
    E: FnMut(&[f64], bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)>,
{
    settings.validate()?;
    let n = initial.len();
    if n == 0 {
        return Err(Error::domain("empty system"));
    }
    let mut x = initial.to_vec();
    let (mut fx, mut jac) = eval(&x, true)?;
    if fx.len() != n {
        return Err(Error::domain("residual dimension does not match unknowns"));
    }
    let mut norm = max_norm(&fx);
    if !norm.is_finite() {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: norm,
        });
    }
    for iter in 0..settings.max_iterations {
        if norm <= settings.residual_tolerance {
            return Ok(Solution {
                point: x,
                iterations: iter,
                residual_norm: norm,
            });
        }
        let j = match jac.take() {
            Some(j) => j,
            None => eval(&x, true)?.1.expect("jacobian requested"),
        };
        let rhs = DVector::from_iterator(n, fx.iter().map(|v| -v));
        let delta = match j.lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    residual: norm,
                })
            }
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            // A trial point may leave the region where the residual is
            // defined; treat that like a failed decrease.
            let accepted = match eval(&trial, false) {
                Ok((ft, _)) => {
                    let nt = max_norm(&ft);
                    if nt < norm {
                        x = trial;
                        fx = ft;
                        norm = nt;
                        true
                    } else {
                        false
                    }
                }
                Err(_) => false,
            };
            if accepted {
                break;
            }
            lambda *= 0.5;
            if lambda < settings.damping_floor {
                return Err(Error::NoConvergence {
                    iterations: iter + 1,
                    residual: norm,
                });
            }
        }
    }
    if norm <= settings.residual_tolerance {
        return Ok(Solution {
            point: x,
            iterations: settings.max_iterations,
            residual_norm: norm,
        });
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iterations,
        residual: norm,
    })
}

/// Iterations over which [`minimize_convex`] must make progress.
const STALL_WINDOW: usize = 10;

/// Objective value, gradient and Hessian of a smooth function.
pub type Quadratic = (f64, Vec<f64>, Vec<Vec<f64>>);

/// Minimise a smooth convex function by Newton's method with Armijo
/// backtracking on the objective, which converges globally where Newton on
/// the gradient residual can stall. Near-singular Hessians are regularised
/// Levenberg-style.
///
/// `eval(x)` returns `(f, ∇f, ∇²f)`; an error or non-finite value marks `x`
/// as outside the domain and rejects the trial step. Convergence is on the
/// max-norm of the gradient, which `residual_norm` reports.
pub fn minimize_convex<F>(
    mut eval: F,
    initial: &[f64],
    settings: &SolverSettings,
) -> Result<Solution>
where
    F: FnMut(&[f64]) -> Result<Quadratic>,
{
    settings.validate()?;
    let n = initial.len();
    let mut x = initial.to_vec();
    let (mut f, mut g, mut h) = eval(&x)?;
    if g.len() != n || h.len() != n || h.iter().any(|row| row.len() != n) {
        return Err(Error::domain(
            "gradient or Hessian shape does not match the unknowns",
        ));
    }
    let mut norm = max_norm(&g);
    if !(f.is_finite() && norm.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: norm,
        });
    }
    let fail = |iterations: usize, residual: f64| Error::NoConvergence {
        iterations,
        residual,
    };
    // Progress checkpoint: (iteration, f, gradient norm).
    let mut checkpoint = (0usize, f, norm);
    for iter in 0..settings.max_iterations {
        if norm <= settings.residual_tolerance {
            return Ok(Solution {
                point: x,
                iterations: iter,
                residual_norm: norm,
            });
        }
        let hm = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]));
        let gv = DVector::from_column_slice(&g);
        let scale = (0..n)
            .map(|i| hm[(i, i)].abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut shift = 0.0;
        let step = loop {
            let m = &hm + DMatrix::identity(n, n) * shift;
            if let Some(ch) = m.cholesky() {
                let d = ch.solve(&(-&gv));
                if d.iter().all(|v| v.is_finite()) && d.dot(&gv) < 0.0 {
                    break d;
                }
            }
            shift = if shift == 0.0 {
                1e-12 * scale
            } else {
                10.0 * shift
            };
            if shift > 1e12 * scale {
                return Err(fail(iter, norm));
            }
        };
        let slope = step.dot(&gv);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if let Ok((ft, gt, ht)) = eval(&trial) {
                let nt = max_norm(&gt);
                // Near the optimum the predicted decrease drops below the
                // evaluation noise of f; a full step that shrinks the
                // gradient is then accepted on that evidence alone.
                let noise = 1e-13 * (1.0 + f.abs());
                let armijo = ft <= f + 1e-4 * t * slope;
                let quiet = t == 1.0 && nt < 0.5 * norm && ft <= f + noise;
                if ft.is_finite() && nt.is_finite() && (armijo || quiet) {
                    x = trial;
                    (f, g, h) = (ft, gt, ht);
                    norm = nt;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(fail(iter + 1, norm));
            }
        }
        // A start that neither halves the gradient nor lowers f beyond its
        // noise over a whole window is stuck; let the caller move on.
        if iter + 1 - checkpoint.0 >= STALL_WINDOW {
            let (_, f0, n0) = checkpoint;
            if norm > 0.5 * n0 && f > f0 - 1e-10 * (1.0 + f0.abs()) {
                return Err(fail(iter + 1, norm));
            }
            checkpoint = (iter + 1, f, norm);
        }
    }
    if norm <= settings.residual_tolerance {
        return Ok(Solution {
            point: x,
            iterations: settings.max_iterations,
            residual_norm: norm,
        });
    }
    Err(fail(settings.max_iterations, norm))
}

/// Find a root of a continuous `f` on `[lo, hi]`, which must bracket a sign
/// change. Terminates once the bracket is narrower than `tol`.
pub fn bisect_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    try_bisect_root(|x| Ok(f(x)), lo, hi, tol)
}

/// Fallible variant of [`bisect_root`].
///
/// Uses the Illinois modification of regula falsi, falling back to plain
/// bisection whenever the interpolated point makes too little progress, so
/// the bracket always shrinks at least geometrically.
pub fn try_bisect_root<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("bisection tolerance must be positive"));
    }
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let mut side = 0i8;
    for _ in 0..400 {
        if b - a <= tol {
            break;
        }
        let width = b - a;
        let mut c = (a * fb - b * fa) / (fb - fa);
        // Keep interpolation strictly inside and away from the endpoints.
        let guard = 0.05 * width;
        if !(c.is_finite()) || c <= a + guard || c >= b - guard {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if !fc.is_finite() {
            return Err(Error::NonFinite { abscissa: c });
        }
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        // Guarantee geometric shrinkage when interpolation stalls.
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            side = 0;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_solves_coupled_system() {
        // x² + y² = 4, x = y  →  x = y = √2.
        let sol = solve_system(
            |v| Ok(vec![v[0] * v[0] + v[1] * v[1] - 4.0, v[0] - v[1]]),
            &[1.0, 0.5],
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((sol.point[0] - 2f64.sqrt()).abs() < 1e-10);
        assert!((sol.point[1] - 2f64.sqrt()).abs() < 1e-10);
        assert!(sol.residual_norm <= 1e-10);
    }

    #[test]
    fn newton_reports_failure() {
        // No real root.
        let err = solve_system(
            |v| Ok(vec![v[0] * v[0] + 1.0]),
            &[0.3],
            &SolverSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn convex_minimiser_finds_the_optimum() {
        // f = e^x + x²/2 - 2x: f' = e^x + x - 2 vanishes at x = 2 - W(e²).
        let sol = minimize_convex(
            |v| {
                Ok((
                    v[0].exp() + 0.5 * v[0] * v[0] - 2.0 * v[0],
                    vec![v[0].exp() + v[0] - 2.0],
                    vec![vec![v[0].exp() + 1.0]],
                ))
            },
            &[3.0],
            &SolverSettings::default(),
        )
        .unwrap();
        // |x - x*| ≤ |f'| / min f'' ≤ the gradient tolerance.
        assert!((sol.point[0] - 0.442_854_401_002_388_6).abs() <= 1e-10);
    }

    #[test]
    fn convex_minimiser_gives_up_on_a_noise_floor() {
        // The gradient carries noise far above the tolerance, so no start can
        // converge; the stall window must end the search early.
        let mut calls = 0usize;
        let err = minimize_convex(
            |v| {
                calls += 1;
                let noise = 1e-8 * (1e10 * v[0]).cos();
                Ok((v[0] * v[0], vec![2.0 * v[0] + noise], vec![vec![2.0]]))
            },
            &[1.0],
            &SolverSettings::default(),
        )
        .unwrap_err();
        match err {
            Error::NoConvergence { iterations, .. } => {
                assert!(iterations <= 2 * STALL_WINDOW, "{iterations}")
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(calls < 45 * 2 * STALL_WINDOW);
    }

    #[test]
    fn settings_invariants() {
        let s = SolverSettings {
            residual_tolerance: 1e-6,
            ..SolverSettings::default()
        };
        assert!(s.validate().is_err());
        let s = SolverSettings {
            max_iterations: 10,
            ..SolverSettings::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn bisection_finds_cubic_root() {
        let r = bisect_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn bisection_requires_bracket() {
        assert!(matches!(
            bisect_root(|x| x * x + 1.0, -1.0, 1.0, 1e-10),
            Err(Error::Bracket { .. })
        ));
    }
}
