//! Numerical tolerances shared by every module.
//!
//! One record, threaded through the constructions; the defaults below are
//! the only place the numbers are written down.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Lattice comparisons, measured in (1, tau) basis coordinates.
    pub lattice: f64,
    /// Requested theta-series truncation error.
    pub tail: f64,
    /// Highest theta derivative the evaluator will produce.
    pub max_derivative: usize,
    /// Working strip half-width as a multiple of Im tau.
    pub strip_factor: f64,
    /// Trapezoid nodes for contour quadrature (power of two).
    pub contour_nodes: usize,
    /// Default contour radius.
    pub contour_radius: f64,
    /// Relative node-doubling discrepancy that marks a contour unreliable.
    pub contour_doubling: f64,
    /// Singular-value rank threshold relative to the largest singular value.
    pub rank: f64,
    /// Laurent coefficient treated as zero, relative to the Cauchy bound.
    pub zero_coefficient: f64,
    /// Residual for principal-part matching against the pole pair.
    pub principal_match: f64,
    /// Gap sigma_{k+1}/sigma_k declaring a rank drop.
    pub kernel_gap: f64,
    /// Nilpotency guard: ||A^n|| < nilpotent * max(1, ||A||)^n.
    pub nilpotent: f64,
    /// Sylvester residual bound for admissibility.
    pub sylvester: f64,
    /// Gamma invertibility: maximum condition number.
    pub gamma_condition: f64,
    /// Gamma invertibility: minimum sigma_min / ||Gamma||.
    pub gamma_sigma: f64,
    /// Singular values of Gamma below this (relative to its reference scale) are zero.
    pub gamma_floor: f64,
    /// Side constraint relative tolerance.
    pub side_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lattice: 1e-9,
            tail: 1e-12,
            max_derivative: 8,
            strip_factor: 3.0,
            contour_nodes: 128,
            contour_radius: 0.1,
            contour_doubling: 1e-8,
            rank: 1e-8,
            zero_coefficient: 1e-7,
            principal_match: 1e-7,
            kernel_gap: 1e-6,
            nilpotent: 1e-10,
            sylvester: 1e-10,
            gamma_condition: 1e12,
            gamma_sigma: 1e-10,
            gamma_floor: 1e-13,
            side_relative: 1e-6,
        }
    }
}
