//! First-order certification for Gaussian randomized smoothing.
//!
//! A smoothed classifier `g(x) = P[f(x + w) = c]`, `w ~ N(0, σ²I)`, can be
//! certified not only from a lower bound on its value but also from bounds on
//! the norms of its gradient. Using both pieces of information tightens the
//! worst-case analysis: the adversarial base classifier must now match two
//! moments instead of one, and the resulting certified radii grow.
//!
//! The crate is organised in layers:
//!
//! * [`numerics`] — normal distribution special functions, Gauss–Legendre
//!   quadrature against the Gaussian weight, and damped Newton / bisection
//!   root finders.
//! * [`certify`] — the dual worst-case problem, its lower-bound probability
//!   and the certified radii for ℓ1, ℓ2, ℓ∞ and subspace threat models.
//! * [`estimate`] — high-probability bounds on the gradient norms and on the
//!   top-class probability from Monte-Carlo samples.
//! * [`classifiers`] — the black-box classifier interface, synthetic
//!   classifiers with closed-form smoothing, deterministic sampling and a
//!   Monte-Carlo oracle for the worst-case set.
//! * [`pipeline`] — per-point orchestration, certified-accuracy curves,
//!   persistence and report writers.

// Negated comparisons such as `!(x > 0.0)` deliberately reject NaN along
// with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod classifiers;
pub mod error;
pub mod estimate;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
