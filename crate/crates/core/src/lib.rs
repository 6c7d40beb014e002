//! Proximal operators through the lens of Hamilton-Jacobi PDEs.
//!
//! The value of a proximal problem, S(x,t) = min_y { ||x-y||^2/(2t) + J(y) },
//! is the viscosity solution of a quadratic-Hamiltonian HJ equation with
//! initial data J. This crate implements the machinery that connects the two:
//!
//! * [`priors`] — analytic prior families J with closed-form S, gradients,
//!   and proximal maps (the ground-truth generators).
//! * [`hj`] — forward Lax-Oleinik evaluation of S for arbitrary priors and
//!   backward-viscosity recovery of the minimal prior J_BVS.
//! * [`minorants`] — piecewise affine/quadratic minorants of J_BVS built from
//!   sample triplets {x_k, S(x_k,t), grad S(x_k,t)}.
//! * [`maxplus`] — L-infinity approximation-error diagnostics and the
//!   K^(-2/n) scaling law for minorant families.
//! * [`icnn`] — an input-convex network (softplus activation, nonnegative
//!   inner weights) with built-in reverse-mode differentiation.
//! * [`train`] — dataset synthesis and the two-stage training pipeline that
//!   learns the convex potential and its conjugate.
//! * [`recover`] — prior recovery (direct conjugate and invert methods),
//!   scoring, and cross-section extraction.
//!
//! Shared numeric plumbing (vectors, grids, splittable RNG, the multi-start
//! quasi-Newton inner solver, datasets) lives in [`rng`], [`linalg`],
//! [`grid`], [`solver`], and [`dataset`].

pub mod config;
pub mod dataset;
pub mod grid;
pub mod hj;
pub mod icnn;
pub mod linalg;
pub mod maxplus;
pub mod minorants;
pub mod priors;
pub mod recover;
pub mod rng;
pub mod solver;
pub mod train;

mod error;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// A point in R^n. Plain dense storage; all entries must be finite.
pub type Point = Vec<f64>;

/// The proximal / HJ time scale. Strictly positive by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeParam(f64);

impl TimeParam {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(TimeParam(t))
        } else {
            Err(Error::InvalidArgument(format!(
                "time parameter must be finite and > 0, got {t}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Validates that a point is nonempty and has only finite entries.
pub fn check_point(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument(
            "point must have dimension >= 1".into(),
        ));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "point contains non-finite entry {bad}"
        )));
    }
    Ok(())
}
