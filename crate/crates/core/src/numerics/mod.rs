//! Numerical building blocks: normal special functions, Gaussian-weighted
//! quadrature and root finding.

mod quadrature;
mod solve;
mod special;

pub use quadrature::{
    gauss_legendre_rule, gauss_weighted_integral, gauss_weighted_integral_with_breaks,
    QuadratureSpec, WeightedNodes, GAUSS_ORDER,
};
pub use solve::{
    bisect_root, minimize_convex, solve_system, try_bisect_root, Quadratic, Solution,
    SolverSettings,
};
pub use special::{
    clamp_level, std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_upper_quantile,
    FRAC_1_SQRT_2PI, LEVEL_CLAMP,
};
