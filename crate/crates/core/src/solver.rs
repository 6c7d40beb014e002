//! Multi-start damped BFGS with backtracking line search.
//!
//! The inner problems here are sums of a quadratic and a prior-like term with
//! few basins, so a handful of restarts seeded at the query point and inside
//! the data box is enough. Nonsmooth terms are handled by the exact/smooth
//! split: descent (line search and gradients) runs on a smoothed surrogate,
//! while every reported value comes from the exact objective.

use crate::linalg::{axpy, dist_sq, dot, norm, sub};
use crate::rng::SplitRng;
use crate::{Error, Point, Result, TimeParam};

/// Objective with an optional smooth surrogate for descent.
pub trait Objective {
    /// Exact value; all reported minima use this.
    fn value(&self, y: &[f64]) -> f64;

    /// Surrogate evaluated inside the line search. Defaults to the exact value.
    fn smooth_value(&self, y: &[f64]) -> f64 {
        self.value(y)
    }

    /// Gradient of the surrogate. Defaults to central differences.
    fn smooth_grad(&self, y: &[f64]) -> Vec<f64> {
        central_diff(&|p| self.smooth_value(p), y)
    }
}

/// Gradient callback used by [`FnObjective`].
pub type GradFn<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// Plain-closure adapter.
pub struct FnObjective<'a> {
    pub f: &'a dyn Fn(&[f64]) -> f64,
    pub grad: Option<GradFn<'a>>,
}

impl Objective for FnObjective<'_> {
    fn value(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }

    fn smooth_grad(&self, y: &[f64]) -> Vec<f64> {
        match self.grad {
            Some(g) => g(y),
            None => central_diff(&|p| (self.f)(p), y),
        }
    }
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        p[i] = x[i] + h;
        let fp = f(&p);
        p[i] = x[i] - h;
        let fm = f(&p);
        p[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference gradient with caller-chosen step.
pub fn finite_diff_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Point> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let fp = f(&p);
        p[i] = x[i] - h;
        let fm = f(&p);
        p[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric("non-finite value in finite differences", &p));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Total number of starts: the warm start plus restarts sampled in the box.
    pub restarts: usize,
    /// Halfwidth of the restart-sampling box, centered at the warm start.
    pub box_halfwidth: f64,
    pub seed: u64,
    /// Stop when the surrogate gradient norm drops below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Abort with `UnboundedConjugate` if an iterate leaves this box
    /// (per-axis absolute bound). Used by the backward sup.
    pub escape_halfwidth: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            restarts: 8,
            box_halfwidth: 4.0,
            seed: 0,
            grad_tol: 1e-9,
            max_iters: 500,
            escape_halfwidth: None,
        }
    }
}

impl SolveOptions {
    pub fn convex() -> Self {
        SolveOptions {
            restarts: 1,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub argmin: Point,
    /// Exact objective at `argmin`.
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Minimizes `obj` from several starts, keeping the best exact value.
pub fn minimize_multistart(
    obj: &dyn Objective,
    start: &[f64],
    opts: &SolveOptions,
) -> Result<Minimum> {
    if opts.restarts < 1 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    let n = start.len();
    let mut rng = SplitRng::new(opts.seed).derive(0x5eed);
    let mut best: Option<Minimum> = None;
    let mut total_iters = 0usize;
    for r in 0..opts.restarts {
        let x0: Point = if r == 0 {
            start.to_vec()
        } else {
            (0..n)
                .map(|i| start[i] + rng.uniform(-opts.box_halfwidth, opts.box_halfwidth))
                .collect()
        };
        let m = bfgs_descend(obj, &x0, opts)?;
        total_iters += m.iterations;
        let better = match &best {
            None => true,
            Some(b) => m.value < b.value,
        };
        if better {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = total_iters;
    Ok(best)
}

fn bfgs_descend(obj: &dyn Objective, x0: &[f64], opts: &SolveOptions) -> Result<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = obj.smooth_value(&x);
    if fx.is_nan() {
        return Err(Error::numeric("objective is NaN at start", &x));
    }
    let mut g = obj.smooth_grad(&x);
    // Inverse-Hessian approximation, row-major.
    let mut h: Vec<f64> = identity(n);
    let mut iters = 0usize;
    let mut best_x = x.clone();
    let mut best_exact = obj.value(&x);

    while iters < opts.max_iters {
        let gnorm = norm(&g);
        if !gnorm.is_finite() {
            return Err(Error::numeric("gradient is non-finite", &x));
        }
        if gnorm <= opts.grad_tol {
            break;
        }
        iters += 1;

        // d = -H g
        let mut d = vec![0.0; n];
        for i in 0..n {
            d[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Reset to steepest descent if curvature info went bad.
            h = identity(n);
            for i in 0..n {
                d[i] = -g[i];
            }
            slope = -dot(&g, &g);
        }

        // Backtracking Armijo search on the surrogate.
        let mut alpha = 1.0f64;
        let c1 = 1e-4;
        let mut accepted = false;
        let mut xn = x.clone();
        let mut fxn = fx;
        for _bt in 0..60 {
            xn.copy_from_slice(&x);
            axpy(&mut xn, alpha, &d);
            let ft = obj.smooth_value(&xn);
            if ft.is_nan() {
                return Err(Error::numeric("objective is NaN during line search", &xn));
            }
            if ft <= fx + c1 * alpha * slope && ft.is_finite() {
                fxn = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break; // stalled at a kink or at numerical floor
        }

        if let Some(b) = opts.escape_halfwidth {
            if xn.iter().any(|v| v.abs() > b) {
                return Err(Error::UnboundedConjugate { point: xn });
            }
        }

        let gn = obj.smooth_grad(&xn);
        let s = sub(&xn, &x);
        let yv = sub(&gn, &g);
        let sy = dot(&s, &yv);
        // Damped update: skip when curvature is not usefully positive.
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            bfgs_update(&mut h, &s, &yv, sy, n);
        }
        x = xn;
        fx = fxn;
        g = gn;

        let exact_here = obj.value(&x);
        if exact_here < best_exact {
            best_exact = exact_here;
            best_x = x.clone();
        }
    }

    // Final exact value at the last iterate may beat the tracked best when the
    // surrogate and exact functions cross; keep whichever is lower.
    let exact_final = obj.value(&x);
    if exact_final < best_exact {
        best_exact = exact_final;
        best_x = x;
    }
    if best_exact.is_nan() {
        return Err(Error::numeric(
            "exact objective is NaN at solution",
            &best_x,
        ));
    }
    let gfinal = norm(&obj.smooth_grad(&best_x));
    Ok(Minimum {
        argmin: best_x,
        value: best_exact,
        grad_norm: gfinal,
        iterations: iters,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// BFGS inverse-Hessian update: H <- (I - r s y^T) H (I - r y s^T) + r s s^T.
fn bfgs_update(h: &mut [f64], s: &[f64], yv: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    // hy = H y
    let mut hy = vec![0.0; n];
    for i in 0..n {
        hy[i] = dot(&h[i * n..(i + 1) * n], yv);
    }
    let yhy = dot(yv, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}

/// Minimizes y -> ||x - y||^2 / (2t) + f(y) by multi-start BFGS.
///
/// The warm start is `x` itself; further restarts are sampled in the data
/// box around it. The reported value always comes from the exact objective,
/// and never exceeds the objective at `x`.
pub fn minimize_quadratic_plus(
    f: &dyn Objective,
    x: &[f64],
    t: TimeParam,
    opts: &SolveOptions,
) -> Result<Minimum> {
    crate::check_point(x)?;
    let t = t.get();
    struct Combined<'a> {
        f: &'a dyn Objective,
        x: &'a [f64],
        t: f64,
    }
    impl Objective for Combined<'_> {
        fn value(&self, y: &[f64]) -> f64 {
            dist_sq(self.x, y) / (2.0 * self.t) + self.f.value(y)
        }
        fn smooth_value(&self, y: &[f64]) -> f64 {
            dist_sq(self.x, y) / (2.0 * self.t) + self.f.smooth_value(y)
        }
        fn smooth_grad(&self, y: &[f64]) -> Vec<f64> {
            let mut g = self.f.smooth_grad(y);
            for i in 0..y.len() {
                g[i] += (y[i] - self.x[i]) / self.t;
            }
            g
        }
    }
    let combined = Combined { f, x, t };
    let at_start = combined.value(x);
    if !at_start.is_finite() {
        return Err(Error::numeric("objective non-finite at query point", x));
    }
    let mut m = minimize_multistart(&combined, x, opts)?;
    // The start point is always a candidate.
    if at_start < m.value {
        m.value = at_start;
        m.argmin = x.to_vec();
    }
    Ok(m)
}

/// Golden-section refinement of a 1-D minimum inside [lo, hi].
pub fn golden_section_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sq;

    fn opts(seed: u64) -> SolveOptions {
        SolveOptions {
            seed,
            ..SolveOptions::default()
        }
    }

    #[test]
    fn zero_prior_returns_query_point() {
        let f = FnObjective {
            f: &|_y: &[f64]| 0.0,
            grad: Some(&|y: &[f64]| vec![0.0; y.len()]),
        };
        let m = minimize_quadratic_plus(&f, &[1.3, -0.4], TimeParam::new(0.7).unwrap(), &opts(1))
            .unwrap();
        assert!(m.value.abs() < 1e-12);
        assert!(dist_sq(&m.argmin, &[1.3, -0.4]).sqrt() < 1e-6);
    }

    #[test]
    fn l1_prior_soft_threshold() {
        // f = |y|, x = 2, t = 1: minimum at y = 1 with value 0.5 + 1 = 1.5.
        let delta = 1e-10f64;
        let smooth =
            move |y: &[f64]| -> f64 { y.iter().map(|v| (v * v + delta * delta).sqrt()).sum() };
        struct L1 {
            delta: f64,
        }
        impl Objective for L1 {
            fn value(&self, y: &[f64]) -> f64 {
                y.iter().map(|v| v.abs()).sum()
            }
            fn smooth_value(&self, y: &[f64]) -> f64 {
                y.iter()
                    .map(|v| (v * v + self.delta * self.delta).sqrt())
                    .sum()
            }
            fn smooth_grad(&self, y: &[f64]) -> Vec<f64> {
                y.iter()
                    .map(|v| v / (v * v + self.delta * self.delta).sqrt())
                    .collect()
            }
        }
        let _ = smooth;
        let f = L1 { delta };
        let m =
            minimize_quadratic_plus(&f, &[2.0], TimeParam::new(1.0).unwrap(), &opts(3)).unwrap();
        assert!((m.value - 1.5).abs() < 1e-9, "value {}", m.value);
        assert!((m.argmin[0] - 1.0).abs() < 1e-7, "argmin {}", m.argmin[0]);
    }

    #[test]
    fn negative_abs_needs_restarts() {
        // f = -|y|, x = 0.5, t = 1: global min at y = 1.5 with value -1.
        struct NegAbs;
        impl Objective for NegAbs {
            fn value(&self, y: &[f64]) -> f64 {
                -y[0].abs()
            }
            fn smooth_value(&self, y: &[f64]) -> f64 {
                let d = 1e-10;
                -((y[0] * y[0] + d * d).sqrt())
            }
            fn smooth_grad(&self, y: &[f64]) -> Vec<f64> {
                let d = 1e-10;
                vec![-y[0] / (y[0] * y[0] + d * d).sqrt()]
            }
        }
        let m = minimize_quadratic_plus(&NegAbs, &[0.5], TimeParam::new(1.0).unwrap(), &opts(11))
            .unwrap();
        assert!((m.value - (-1.0)).abs() < 1e-9, "value {}", m.value);
        assert!((m.argmin[0] - 1.5).abs() < 1e-6, "argmin {}", m.argmin[0]);
    }

    #[test]
    fn value_never_exceeds_value_at_start() {
        struct Bumpy;
        impl Objective for Bumpy {
            fn value(&self, y: &[f64]) -> f64 {
                (3.0 * y[0]).sin() + 0.1 * y[0]
            }
        }
        for s in 0..5 {
            let x = [0.3 * s as f64 - 0.7];
            let m =
                minimize_quadratic_plus(&Bumpy, &x, TimeParam::new(1.0).unwrap(), &opts(s as u64))
                    .unwrap();
            let at_start = norm_sq(&[0.0]) + (3.0 * x[0]).sin() + 0.1 * x[0];
            assert!(m.value <= at_start + 1e-12);
        }
    }

    #[test]
    fn finite_diff_gradient_quadratic() {
        let g = finite_diff_gradient(&|y| norm_sq(y) / 2.0, &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_gradient_softplus_at_zero() {
        let beta = 5.0;
        let sp = move |y: &[f64]| ((beta * y[0]).exp().ln_1p()) / beta;
        let g = finite_diff_gradient(&sp, &[0.0], 1e-6).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-6, "{}", g[0]);
    }

    #[test]
    fn finite_diff_gradient_l1_off_kink() {
        let g =
            finite_diff_gradient(&|y| y.iter().map(|v| v.abs()).sum(), &[2.0, -3.0], 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn nan_objective_is_reported_with_point() {
        struct Bad;
        impl Objective for Bad {
            fn value(&self, y: &[f64]) -> f64 {
                if y[0] > 0.5 {
                    f64::NAN
                } else {
                    y[0] * y[0]
                }
            }
        }
        let err = minimize_quadratic_plus(&Bad, &[2.0], TimeParam::new(1.0).unwrap(), &opts(0));
        assert!(err.is_err());
    }

    #[test]
    fn golden_section_refines_kink() {
        let (x, v) = golden_section_min(&|y| (y - 0.123).abs(), -1.0, 1.0, 80);
        assert!((x - 0.123).abs() < 1e-12);
        assert!(v < 1e-12);
    }
}
