//! Sampling lattices for brute-force oracles.
//!
//! Grids are only constructed for dim <= 3; they exist to cross-check the
//! variational solvers, not to scale.

use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    points_per_axis: usize,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points_per_axis: usize) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || dim != upper.len() {
            return Err(Error::invalid(
                "grid bounds must be nonempty and same length",
            ));
        }
        if dim > 3 {
            return Err(Error::Unsupported(format!(
                "grids are brute-force oracles, dim {dim} > 3 unsupported"
            )));
        }
        if points_per_axis < 2 {
            return Err(Error::invalid("points_per_axis must be >= 2"));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad axis bounds [{lo}, {hi}]")));
            }
        }
        Ok(Grid {
            dim,
            lower,
            upper,
            points_per_axis,
        })
    }

    /// Symmetric cube [-a, a]^dim.
    pub fn symmetric(dim: usize, a: f64, points_per_axis: usize) -> Result<Self> {
        Grid::new(vec![-a; dim], vec![a; dim], points_per_axis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Largest axis spacing; the resolution bound used by oracle tolerances.
    pub fn spacing(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) / (self.points_per_axis - 1) as f64)
            .fold(0.0, f64::max)
    }

    pub fn node(&self, mut flat: usize) -> Point {
        let m = self.points_per_axis;
        let mut idx = vec![0usize; self.dim];
        // Row-major with axis 0 slowest so flat order is lexicographic order.
        for ax in (0..self.dim).rev() {
            idx[ax] = flat % m;
            flat /= m;
        }
        idx.iter()
            .enumerate()
            .map(|(ax, &i)| {
                self.lower[ax] + (self.upper[ax] - self.lower[ax]) * i as f64 / (m - 1) as f64
            })
            .collect()
    }
}

/// Exhaustive minimum of `f` over grid nodes. Deterministic; ties keep the
/// lexicographically smallest node (strict-improvement scan in node order).
pub fn grid_minimize(f: &dyn Fn(&[f64]) -> f64, grid: &Grid) -> Result<(Point, f64)> {
    let mut best_val = f64::INFINITY;
    let mut best_node = grid.node(0);
    for flat in 0..grid.total_points() {
        let node = grid.node(flat);
        let v = f(&node);
        if !v.is_finite() && !(v == f64::INFINITY) {
            return Err(Error::numeric("objective returned NaN/-inf on grid", &node));
        }
        if v < best_val {
            best_val = v;
            best_node = node;
        }
    }
    if best_val == f64::INFINITY {
        return Err(Error::numeric(
            "objective is +inf on the whole grid",
            &best_node,
        ));
    }
    Ok((best_node, best_val))
}
