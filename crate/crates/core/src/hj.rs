//! Forward and backward Hamilton-Jacobi machinery.
//!
//! Forward: S(x,t) = min_y { ||x-y||^2/(2t) + J(y) } by multi-start descent.
//! Backward: J_BVS(y) = sup_x { S(x,t) - ||x-y||^2/(2t) }, equivalently the
//! convex conjugate t J_BVS(y) + ||y||^2/2 = sup_x { <x,y> - psi(x,t) }.

use crate::linalg::{dist_sq, dot, norm, norm_sq};
use crate::priors::{Prior, KINK_SMOOTHING};
use crate::solver::{
    golden_section_min, minimize_multistart, minimize_quadratic_plus, FnObjective, Minimum,
    Objective, SolveOptions,
};
use crate::{grid, Error, Point, Result, TimeParam};
use std::collections::HashMap;
use std::sync::RwLock;

/// Result of a forward Lax-Oleinik evaluation.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// S(x,t) evaluated exactly at the minimizer.
    pub value: f64,
    /// Selected global minimizer y*.
    pub minimizer: Point,
    /// (x - y*)/t, the gradient of S at x when S is differentiable there.
    pub grad_estimate: Point,
}

/// Default solver options for a prior: one start for convex inner problems,
/// eight for nonconvex ones, restart box matching the data box.
pub fn default_forward_options(prior: &Prior, t: TimeParam, box_halfwidth: f64) -> SolveOptions {
    let convex_inner = match prior {
        Prior::L1 | Prior::Zero => true,
        Prior::ConcaveQuadratic { curvature, .. } => t.get() < 1.0 / (2.0 * curvature),
        _ => false,
    };
    SolveOptions {
        restarts: if convex_inner { 1 } else { 8 },
        box_halfwidth,
        seed: 0x00f0_ecab,
        grad_tol: 1e-9,
        max_iters: 500,
        escape_halfwidth: None,
    }
}

/// Evaluates S(x,t) for an arbitrary prior via the variational formula.
pub fn forward_solve(prior: &Prior, x: &[f64], t: TimeParam) -> Result<ForwardResult> {
    forward_solve_with(prior, x, t, &default_forward_options(prior, t, 4.0))
}

pub fn forward_solve_with(
    prior: &Prior,
    x: &[f64],
    t: TimeParam,
    opts: &SolveOptions,
) -> Result<ForwardResult> {
    let obj = prior.objective();
    let m: Minimum = minimize_quadratic_plus(&obj, x, t, opts)?;
    let grad_estimate = x
        .iter()
        .zip(&m.argmin)
        .map(|(xi, yi)| (xi - yi) / t.get())
        .collect();
    Ok(ForwardResult {
        value: m.value,
        minimizer: m.argmin,
        grad_estimate,
    })
}

/// Residual of the characteristics identity
/// S(x,t) = (t/2) ||grad S||^2 + J(x - t grad S) at a differentiable x.
///
/// With y* = x - t grad S the Lax-Oleinik formula gives
/// ||x - y*||^2/(2t) = (t/2)||grad S||^2, which fixes the normalization of
/// the quadratic term; see the unit test that rules out the 1/(2t) variant.
pub fn characteristics_residual(prior: &Prior, x: &[f64], t: TimeParam) -> Result<f64> {
    let nd = prior.s_nondiff_distance(x, t)?;
    if nd < 1e-8 {
        return Err(Error::Nondifferentiable(format!(
            "x within {nd:.2e} of the non-differentiability set of S"
        )));
    }
    let s = prior.eval_s_closed(x, t)?;
    let g = prior.eval_grad_s_closed(x, t)?;
    let tv = t.get();
    let y: Point = x.iter().zip(&g).map(|(xi, gi)| xi - tv * gi).collect();
    let rhs = 0.5 * tv * norm_sq(&g) + prior.eval_j(&y)?;
    Ok((s - rhs).abs())
}

/// Provider of the solution surface S(.,t) for the backward problem: either
/// an analytic prior or a learned convex potential psi.
pub trait SolutionSurface: Sync {
    fn s(&self, x: &[f64], t: f64) -> Result<f64>;

    /// Surrogate for descent; defaults to the exact value.
    fn smooth_s(&self, x: &[f64], t: f64) -> Result<f64> {
        self.s(x, t)
    }

    /// Gradient of the surrogate; `None` falls back to finite differences.
    fn smooth_grad_s(&self, _x: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// psi(x,t) = ||x||^2/2 - t S(x,t).
    fn psi(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(norm_sq(x) / 2.0 - t * self.s(x, t)?)
    }

    fn smooth_psi(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(norm_sq(x) / 2.0 - t * self.smooth_s(x, t)?)
    }

    fn smooth_grad_psi(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let gs = self.smooth_grad_s(x, t)?;
        Some(x.iter().zip(&gs).map(|(xi, gi)| xi - t * gi).collect())
    }
}

/// Closed-form surface of an analytic prior.
pub struct ClosedSurface<'a> {
    pub prior: &'a Prior,
}

impl SolutionSurface for ClosedSurface<'_> {
    fn s(&self, x: &[f64], t: f64) -> Result<f64> {
        self.prior.eval_s_closed(x, TimeParam::new(t)?)
    }

    fn smooth_s(&self, x: &[f64], t: f64) -> Result<f64> {
        let d = KINK_SMOOTHING;
        match self.prior {
            Prior::NegL1 | Prior::NegAbs1D => {
                let n = x.len() as f64;
                Ok(-n * t / 2.0 - x.iter().map(|v| (v * v + d * d).sqrt()).sum::<f64>())
            }
            _ => self.s(x, t),
        }
    }

    fn smooth_grad_s(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let d = KINK_SMOOTHING;
        match self.prior {
            Prior::NegL1 | Prior::NegAbs1D => {
                Some(x.iter().map(|v| -v / (v * v + d * d).sqrt()).collect())
            }
            _ => self
                .prior
                .eval_grad_s_closed(x, TimeParam::new(t).ok()?)
                .ok(),
        }
    }
}

/// Surface induced by a trained convex potential: S(x,t) = (||x||^2/2 -
/// psi_theta(x)) / t, with exact reverse-mode gradients. The potential is
/// treated as frozen at the stored t.
pub struct LearnedPsiSurface<'a> {
    pub model: &'a crate::icnn::IcnnModel,
}

impl SolutionSurface for LearnedPsiSurface<'_> {
    fn s(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok((norm_sq(x) / 2.0 - self.model.forward(x)?) / t)
    }

    fn smooth_grad_s(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let g = self.model.input_gradient(x).ok()?;
        Some(x.iter().zip(&g).map(|(xi, gi)| (xi - gi) / t).collect())
    }

    fn psi(&self, x: &[f64], _t: f64) -> Result<f64> {
        self.model.forward(x)
    }

    fn smooth_grad_psi(&self, x: &[f64], _t: f64) -> Option<Vec<f64>> {
        self.model.input_gradient(x).ok()
    }
}

/// Generic callable surface, used by tests and oracles.
pub struct FnSurface<'a> {
    pub s: &'a (dyn Fn(&[f64], f64) -> f64 + Sync),
}

impl SolutionSurface for FnSurface<'_> {
    fn s(&self, x: &[f64], t: f64) -> Result<f64> {
        let v = (self.s)(x, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numeric("surface returned non-finite S", x))
        }
    }
}

/// A backward-recovery query: the surface, a search box that must contain the
/// data box inflated by the surface's slope scale, and restart policy.
pub struct BackwardQuery<'a> {
    pub surface: &'a dyn SolutionSurface,
    /// Per-axis absolute bound of the search box for the sup.
    pub halfwidth: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl<'a> BackwardQuery<'a> {
    /// Search box sized so a maximizer x = y + t * (slope of S) cannot touch
    /// the boundary for y in the data box: halfwidth = a + 2 t L.
    pub fn sized(surface: &'a dyn SolutionSurface, a: f64, t: TimeParam, lipschitz: f64) -> Self {
        BackwardQuery {
            surface,
            halfwidth: a + 2.0 * t.get() * lipschitz,
            restarts: 4,
            seed: 0xbac_c0de,
        }
    }
}

/// Estimates a Lipschitz constant of S(.,t) as the max sampled slope.
pub fn estimate_s_lipschitz(
    surface: &dyn SolutionSurface,
    dim: usize,
    a: f64,
    t: TimeParam,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let pts = crate::rng::uniform_box_sample(dim, a, samples.max(2), seed)?;
    let mut lip: f64 = 1.0;
    for p in &pts {
        let g = match surface.smooth_grad_s(p, t.get()) {
            Some(g) => g,
            None => crate::solver::finite_diff_gradient(
                &|q| surface.smooth_s(q, t.get()).unwrap_or(f64::NAN),
                p,
                1e-5,
            )?,
        };
        lip = lip.max(norm(&g));
    }
    Ok(lip)
}

struct NegPhi<'a> {
    surface: &'a dyn SolutionSurface,
    y: &'a [f64],
    t: f64,
}

impl Objective for NegPhi<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.surface.s(x, self.t) {
            Ok(s) => -(s - dist_sq(x, self.y) / (2.0 * self.t)),
            Err(_) => f64::NAN,
        }
    }
    fn smooth_value(&self, x: &[f64]) -> f64 {
        match self.surface.smooth_s(x, self.t) {
            Ok(s) => -(s - dist_sq(x, self.y) / (2.0 * self.t)),
            Err(_) => f64::NAN,
        }
    }
    fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
        let gs = match self.surface.smooth_grad_s(x, self.t) {
            Some(g) => g,
            None => crate::solver::finite_diff_gradient(
                &|q| self.surface.smooth_s(q, self.t).unwrap_or(f64::NAN),
                x,
                1e-6,
            )
            .unwrap_or_else(|_| vec![f64::NAN; x.len()]),
        };
        x.iter()
            .zip(self.y)
            .zip(&gs)
            .map(|((xi, yi), gi)| -(gi - (xi - yi) / self.t))
            .collect()
    }
}

/// J_BVS(y) via the sup representation.
///
/// The escape box grows with ||y||: a maximizer satisfies x = y + (t * slope
/// of S), so |x| <= ||y|| + t L stays strictly inside halfwidth + ||y||
/// whenever the configured halfwidth covers 2 t L. Genuinely unbounded sups
/// still run off through any finite box and are reported as such.
pub fn backward_solve(q: &BackwardQuery, y: &[f64], t: TimeParam) -> Result<f64> {
    crate::check_point(y)?;
    let tv = t.get();
    let hw = q.halfwidth + norm(y);
    let obj = NegPhi {
        surface: q.surface,
        y,
        t: tv,
    };
    let opts = SolveOptions {
        restarts: q.restarts,
        box_halfwidth: q.halfwidth,
        seed: q.seed,
        grad_tol: 1e-10,
        max_iters: 500,
        escape_halfwidth: Some(hw),
    };
    let m = minimize_multistart(&obj, y, &opts)?;
    Ok(-m.value)
}

struct NegConjugate<'a> {
    surface: &'a dyn SolutionSurface,
    y: &'a [f64],
    t: f64,
}

impl Objective for NegConjugate<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.surface.psi(x, self.t) {
            Ok(psi) => -(dot(x, self.y) - psi),
            Err(_) => f64::NAN,
        }
    }
    fn smooth_value(&self, x: &[f64]) -> f64 {
        match self.surface.smooth_psi(x, self.t) {
            Ok(psi) => -(dot(x, self.y) - psi),
            Err(_) => f64::NAN,
        }
    }
    fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
        let gp = match self.surface.smooth_grad_psi(x, self.t) {
            Some(g) => g,
            None => crate::solver::finite_diff_gradient(
                &|q| self.surface.smooth_psi(q, self.t).unwrap_or(f64::NAN),
                x,
                1e-6,
            )
            .unwrap_or_else(|_| vec![f64::NAN; x.len()]),
        };
        gp.iter().zip(self.y).map(|(gi, yi)| gi - yi).collect()
    }
}

/// J_BVS(y) via the conjugate form (sup of <x,y> - psi(x,t), then unwrap).
/// Identical maximizer as the sup form; separate evaluation path.
pub fn backward_solve_conjugate(q: &BackwardQuery, y: &[f64], t: TimeParam) -> Result<f64> {
    crate::check_point(y)?;
    let tv = t.get();
    let hw = q.halfwidth + norm(y);
    let obj = NegConjugate {
        surface: q.surface,
        y,
        t: tv,
    };
    let opts = SolveOptions {
        restarts: q.restarts,
        box_halfwidth: q.halfwidth,
        seed: q.seed,
        grad_tol: 1e-10,
        max_iters: 500,
        escape_halfwidth: Some(hw),
    };
    let m = minimize_multistart(&obj, y, &opts)?;
    let sup = -m.value;
    Ok((sup - norm_sq(y) / 2.0) / tv)
}

type BitsKey = Vec<u64>;

/// Memoizing wrapper: J_BVS evaluations keyed by the exact bits of y.
/// Readers and writers may be concurrent; entries are idempotent.
pub struct BackwardSolver<'a> {
    pub query: BackwardQuery<'a>,
    pub t: TimeParam,
    memo: RwLock<HashMap<BitsKey, f64>>,
}

impl<'a> BackwardSolver<'a> {
    pub fn new(query: BackwardQuery<'a>, t: TimeParam) -> Self {
        BackwardSolver {
            query,
            t,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn jbvs(&self, y: &[f64]) -> Result<f64> {
        let key: BitsKey = y.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.memo.read().expect("memo poisoned").get(&key) {
            return Ok(*v);
        }
        let v = backward_solve(&self.query, y, self.t)?;
        self.memo.write().expect("memo poisoned").insert(key, v);
        Ok(v)
    }

    pub fn cached_len(&self) -> usize {
        self.memo.read().expect("memo poisoned").len()
    }
}

/// Memo-backed numeric J_BVS evaluator that owns its surface.
pub struct NumericJbvs<'a> {
    surface: ClosedSurface<'a>,
    t: TimeParam,
    halfwidth: f64,
    restarts: usize,
    seed: u64,
    memo: RwLock<HashMap<BitsKey, f64>>,
}

impl<'a> NumericJbvs<'a> {
    pub fn new(prior: &'a Prior, t: TimeParam, a: f64) -> Result<Self> {
        let surface = ClosedSurface { prior };
        let dim = prior.fixed_dim().unwrap_or(1);
        let lip = estimate_s_lipschitz(&surface, dim, a, t, 16, 29)?;
        Ok(NumericJbvs {
            surface,
            t,
            halfwidth: a + 2.0 * t.get() * lip,
            restarts: 4,
            seed: 0xbac_c0de,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        let key: BitsKey = y.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.memo.read().expect("memo poisoned").get(&key) {
            return Ok(*v);
        }
        let q = BackwardQuery {
            surface: &self.surface,
            halfwidth: self.halfwidth,
            restarts: self.restarts,
            seed: self.seed,
        };
        let v = backward_solve(&q, y, self.t)?;
        self.memo.write().expect("memo poisoned").insert(key, v);
        Ok(v)
    }
}

/// Ground-truth J_BVS for a prior family, preferring derivations over
/// numerics: the 1-D negative-absolute closed form, separability for the
/// negative l1 norm, J itself when every point is reachable (convex l1,
/// smooth concave quadratic in its valid time range, zero), and the numeric
/// backward sup otherwise (min-plus).
pub enum JbvsTruth<'a> {
    Closed(&'a Prior, TimeParam),
    EqualsPrior(&'a Prior),
    SeparableNegAbs(TimeParam),
    Numeric(NumericJbvs<'a>),
}

impl<'a> JbvsTruth<'a> {
    pub fn for_prior(prior: &'a Prior, t: TimeParam, a: f64) -> Result<Self> {
        Ok(match prior {
            Prior::NegAbs1D | Prior::Zero => JbvsTruth::Closed(prior, t),
            Prior::NegL1 => JbvsTruth::SeparableNegAbs(t),
            // Every point is reachable: prox_tJ is onto for convex l1 and for
            // the smooth (sub-critical t) concave quadratic, so J_BVS = J.
            Prior::L1 => JbvsTruth::EqualsPrior(prior),
            Prior::ConcaveQuadratic { curvature, .. } => {
                if t.get() < 1.0 / (2.0 * curvature) {
                    JbvsTruth::EqualsPrior(prior)
                } else {
                    return Err(Error::Unsupported(
                        "t too large for the concave family".into(),
                    ));
                }
            }
            _ => JbvsTruth::Numeric(NumericJbvs::new(prior, t, a)?),
        })
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        match self {
            JbvsTruth::Closed(p, t) => p.eval_jbvs_closed(y, *t),
            JbvsTruth::EqualsPrior(p) => p.eval_j(y),
            JbvsTruth::SeparableNegAbs(t) => Ok(y
                .iter()
                .map(|&v| crate::priors::neg_abs_jbvs_1d(v, t.get()))
                .sum()),
            JbvsTruth::Numeric(n) => n.eval(y),
        }
    }
}

/// |inf_y { ||x-y||^2/(2t) + J_BVS(y) } - S(x,t)| with J_BVS computed by
/// `backward_solve`. Grid scan plus local polish on the inf.
pub fn roundtrip_check(prior: &Prior, x: &[f64], t: TimeParam, g: &grid::Grid) -> Result<f64> {
    let surface = ClosedSurface { prior };
    let lip = estimate_s_lipschitz(&surface, x.len(), 4.0, t, 16, 17)?;
    let query = BackwardQuery::sized(&surface, 4.0 + norm(x), t, lip);
    let solver = BackwardSolver::new(query, t);
    roundtrip_check_with(&solver, prior, x, t, g)
}

/// Same as [`roundtrip_check`] but reusing a memoized solver across calls.
pub fn roundtrip_check_with(
    solver: &BackwardSolver,
    prior: &Prior,
    x: &[f64],
    t: TimeParam,
    g: &grid::Grid,
) -> Result<f64> {
    let tv = t.get();
    let s_true = prior.eval_s_closed(x, t)?;
    let objective = |y: &[f64]| -> f64 {
        match solver.jbvs(y) {
            Ok(j) => dist_sq(x, y) / (2.0 * tv) + j,
            Err(_) => f64::NAN,
        }
    };
    let (node, node_val) = grid::grid_minimize(&objective, g)?;
    let mut best = node_val;
    if g.dim() == 1 {
        let h = g.spacing();
        let f1 = |u: f64| objective(&[u]);
        let (_, v) = golden_section_min(&f1, node[0] - h, node[0] + h, 90);
        best = best.min(v);
    } else {
        let f = FnObjective {
            f: &objective,
            grad: None,
        };
        let opts = SolveOptions {
            restarts: 1,
            box_halfwidth: g.spacing(),
            seed: 23,
            grad_tol: 1e-9,
            max_iters: 200,
            escape_halfwidth: None,
        };
        if let Ok(m) = minimize_multistart(&f, &node, &opts) {
            best = best.min(m.value);
        }
    }
    Ok((best - s_true).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitRng;

    fn t(v: f64) -> TimeParam {
        TimeParam::new(v).unwrap()
    }

    #[test]
    fn forward_zero_prior() {
        let r = forward_solve(&Prior::Zero, &[0.4, -1.0], t(1.0)).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!(dist_sq(&r.minimizer, &[0.4, -1.0]).sqrt() < 1e-6);
        assert!(norm(&r.grad_estimate) < 1e-6);
    }

    #[test]
    fn forward_neg_abs_golden() {
        let r = forward_solve(&Prior::NegAbs1D, &[2.0], t(1.0)).unwrap();
        assert!((r.value - (-2.5)).abs() < 1e-9, "value {}", r.value);
        assert!(
            (r.minimizer[0] - 3.0).abs() < 1e-6,
            "minimizer {}",
            r.minimizer[0]
        );
        assert!((r.grad_estimate[0] - (-1.0)).abs() < 1e-6);
    }

    #[test]
    fn forward_min_plus_matches_grid_oracle() {
        let p = Prior::min_plus_default(2).unwrap();
        let r = forward_solve(&p, &[3.0, 0.0], t(1.0)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7, "value {}", r.value);
        let g = grid::Grid::symmetric(2, 6.0, 301).unwrap();
        let x = [3.0, 0.0];
        let (_, gv) =
            grid::grid_minimize(&|y| dist_sq(&x, y) / 2.0 + p.eval_j(y).unwrap(), &g).unwrap();
        assert!((r.value - gv).abs() < 2.0 * g.spacing());
    }

    #[test]
    fn characteristics_residual_golden() {
        assert!(characteristics_residual(&Prior::Zero, &[0.7, 0.1], t(1.0)).unwrap() < 1e-12);
        assert!(characteristics_residual(&Prior::NegAbs1D, &[2.0], t(1.0)).unwrap() < 1e-9);
        assert!(characteristics_residual(&Prior::L1, &[2.0, 3.0], t(1.0)).unwrap() < 1e-7);
    }

    #[test]
    fn characteristics_normalization_is_t_over_two() {
        // At t = 2 the (t/2)||grad S||^2 version vanishes on the negative
        // absolute value family; the 1/(2t) variant does not.
        let p = Prior::NegAbs1D;
        let tv = 2.0;
        let x = [1.5];
        let s = p.eval_s_closed(&x, t(tv)).unwrap();
        let g = p.eval_grad_s_closed(&x, t(tv)).unwrap();
        let y = [x[0] - tv * g[0]];
        let with_t_over_2 = (s - (0.5 * tv * norm_sq(&g) + p.eval_j(&y).unwrap())).abs();
        let with_1_over_2t = (s - (norm_sq(&g) / (2.0 * tv) + p.eval_j(&y).unwrap())).abs();
        assert!(
            with_t_over_2 < 1e-12,
            "t/2 version residual {with_t_over_2}"
        );
        assert!(
            with_1_over_2t > 0.5,
            "1/(2t) version should not vanish at t=2"
        );
        assert!(characteristics_residual(&p, &x, t(tv)).unwrap() < 1e-12);
    }

    #[test]
    fn residual_refuses_nondifferentiable_points() {
        assert!(matches!(
            characteristics_residual(&Prior::NegAbs1D, &[0.0], t(1.0)),
            Err(Error::Nondifferentiable(_))
        ));
    }

    fn solver_for<'a>(surface: &'a ClosedSurface<'a>) -> BackwardSolver<'a> {
        let q = BackwardQuery {
            surface,
            halfwidth: 6.0,
            restarts: 4,
            seed: 7,
        };
        BackwardSolver::new(q, t(1.0))
    }

    #[test]
    fn backward_golden_neg_abs() {
        let p = Prior::NegAbs1D;
        let surface = ClosedSurface { prior: &p };
        let solver = solver_for(&surface);
        assert!((solver.jbvs(&[0.0]).unwrap() - (-0.5)).abs() < 1e-7);
        assert!((solver.jbvs(&[-3.0]).unwrap() - (-3.0)).abs() < 1e-7);
        assert!((solver.jbvs(&[2.0]).unwrap() - (-2.0)).abs() < 1e-7);
    }

    #[test]
    fn backward_zero_prior_is_zero() {
        let p = Prior::Zero;
        let surface = ClosedSurface { prior: &p };
        let q = BackwardQuery {
            surface: &surface,
            halfwidth: 8.0,
            restarts: 2,
            seed: 1,
        };
        for y in [[0.0, 0.0], [1.5, -2.0]] {
            assert!(backward_solve(&q, &y, t(1.0)).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn backward_matches_closed_piecewise_form() {
        let p = Prior::NegAbs1D;
        let surface = ClosedSurface { prior: &p };
        let solver = solver_for(&surface);
        let mut rng = SplitRng::new(3);
        for _ in 0..50 {
            let y = rng.uniform(-4.0, 4.0);
            let got = solver.jbvs(&[y]).unwrap();
            let want = p.eval_jbvs_closed(&[y], t(1.0)).unwrap();
            assert!((got - want).abs() < 1e-6, "y={y}: {got} vs {want}");
        }
    }

    #[test]
    fn conjugate_and_sup_forms_agree() {
        let p = Prior::NegAbs1D;
        let surface = ClosedSurface { prior: &p };
        let q = BackwardQuery {
            surface: &surface,
            halfwidth: 6.0,
            restarts: 4,
            seed: 7,
        };
        let mut rng = SplitRng::new(4);
        for _ in 0..50 {
            let y = [rng.uniform(-3.0, 3.0)];
            let a = backward_solve(&q, &y, t(1.0)).unwrap();
            let b = backward_solve_conjugate(&q, &y, t(1.0)).unwrap();
            assert!((a - b).abs() < 1e-7, "sup {a} vs conjugate {b} at {}", y[0]);
        }
    }

    #[test]
    fn backward_lower_bounds_prior_and_matches_on_reachable_set() {
        let p = Prior::NegAbs1D;
        let surface = ClosedSurface { prior: &p };
        let solver = solver_for(&surface);
        let mut rng = SplitRng::new(9);
        for _ in 0..200 {
            let y = rng.uniform(-4.0, 4.0);
            let jb = solver.jbvs(&[y]).unwrap();
            let j = p.eval_j(&[y]).unwrap();
            assert!(jb <= j + 1e-7, "J_BVS {jb} should lower-bound J {j} at {y}");
            if y.abs() >= 1.0 {
                assert!((jb - j).abs() < 1e-6, "equality on |y| >= t failed at {y}");
            }
        }
    }

    #[test]
    fn unbounded_conjugate_is_detected() {
        // S growing faster than the quadratic makes the sup diverge.
        let s = |x: &[f64], _t: f64| norm_sq(x) * norm_sq(x);
        let surface = FnSurface { s: &s };
        let q = BackwardQuery {
            surface: &surface,
            halfwidth: 50.0,
            restarts: 1,
            seed: 2,
        };
        let r = backward_solve(&q, &[1.0], t(1.0));
        assert!(matches!(r, Err(Error::UnboundedConjugate { .. })), "{r:?}");
    }

    #[test]
    fn roundtrip_zero_and_neg_abs() {
        let g1 = grid::Grid::new(vec![-8.0], vec![8.0], 801).unwrap();
        let r = roundtrip_check(&Prior::Zero, &[0.3], t(1.0), &g1).unwrap();
        assert!(r < 1e-6, "zero roundtrip {r}");
        let r = roundtrip_check(&Prior::NegAbs1D, &[0.3], t(1.0), &g1).unwrap();
        assert!(r <= 1e-4, "neg-abs roundtrip {r}");
        let r = roundtrip_check(&Prior::L1, &[2.0], t(1.0), &g1).unwrap();
        assert!(r <= 1e-4, "l1 roundtrip {r}");
    }

    #[test]
    fn forward_grad_estimate_matches_finite_differences() {
        let p = Prior::min_plus_default(2).unwrap();
        let x = [2.3, -1.1];
        let r = forward_solve(&p, &x, t(1.0)).unwrap();
        let fd = crate::solver::finite_diff_gradient(
            &|q| {
                forward_solve(&p, q, t(1.0))
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            },
            &x,
            1e-5,
        )
        .unwrap();
        for (a, b) in r.grad_estimate.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-4, "grad {a} vs fd {b}");
        }
    }

    #[test]
    fn learned_surface_backward_recovers_zero_prior() {
        // psi_theta = ||x||^2/2 exactly via the mu-offset with nulled params:
        // the backward sup of the induced surface is the zero prior.
        let cfg = crate::icnn::IcnnConfig {
            input_dim: 2,
            layers: 2,
            hidden: 4,
            beta: 5.0,
            mu: 1.0,
        };
        let mut m = crate::icnn::IcnnModel::init(cfg, 1).unwrap();
        m.set_params(vec![0.0; m.param_count()]).unwrap();
        let surface = LearnedPsiSurface { model: &m };
        let q = BackwardQuery {
            surface: &surface,
            halfwidth: 10.0,
            restarts: 2,
            seed: 3,
        };
        for y in [[0.4, -1.2], [2.0, 0.0]] {
            let sup_form = backward_solve(&q, &y, t(1.0)).unwrap();
            let conj_form = backward_solve_conjugate(&q, &y, t(1.0)).unwrap();
            assert!(sup_form.abs() < 1e-8, "sup-form J_BVS {sup_form}");
            assert!(conj_form.abs() < 1e-8, "conjugate-form J_BVS {conj_form}");
        }
    }

    #[test]
    fn memoization_caches_by_bits() {
        let p = Prior::NegAbs1D;
        let surface = ClosedSurface { prior: &p };
        let solver = solver_for(&surface);
        let _ = solver.jbvs(&[0.25]).unwrap();
        let _ = solver.jbvs(&[0.25]).unwrap();
        assert_eq!(solver.cached_len(), 1);
    }
}
