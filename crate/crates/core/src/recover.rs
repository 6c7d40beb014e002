//! Prior recovery and evaluation.
//!
//! The direct method reads the prior straight off the trained conjugate
//! network: J(x) = phi_G(x) - ||x||^2/2. The invert baseline instead solves
//! grad psi(x*) = y for each query by concave ascent on <x,y> - psi(x).

use crate::hj::NumericJbvs;
use crate::icnn::IcnnModel;
use crate::linalg::{dot, norm, norm_sq};
use crate::minorants::MinorantModel;
use crate::solver::{minimize_multistart, Objective, SolveOptions};
use crate::{Error, Point, Result, TimeParam};

/// A recovered prior: the method plus whatever model backs it.
pub enum RecoveredPrior<'a> {
    /// J(x) = phi_G(x) - ||x||^2/2 (divided by t when `general_t` is set).
    DirectConjugate {
        phi_g: &'a IcnnModel,
        t: TimeParam,
        general_t: bool,
    },
    /// Conjugate ascent against the first-stage potential.
    InvertLpn {
        psi: &'a IcnnModel,
        t: TimeParam,
        halfwidth: f64,
    },
    /// Piecewise quadratic minorant evaluation.
    MinorantPqm { model: &'a MinorantModel },
    /// Numeric backward sup against a closed-form surface.
    BackwardNumeric { solver: &'a NumericJbvs<'a> },
}

impl RecoveredPrior<'_> {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            RecoveredPrior::DirectConjugate {
                phi_g,
                t,
                general_t,
            } => eval_direct(phi_g, x, *t, *general_t),
            RecoveredPrior::InvertLpn { psi, t, halfwidth } => eval_invert(psi, x, *t, *halfwidth),
            RecoveredPrior::MinorantPqm { model } => model.eval(x),
            RecoveredPrior::BackwardNumeric { solver } => solver.eval(x),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            RecoveredPrior::DirectConjugate { .. } => "direct",
            RecoveredPrior::InvertLpn { .. } => "invert",
            RecoveredPrior::MinorantPqm { .. } => "minorant_pqm",
            RecoveredPrior::BackwardNumeric { .. } => "backward_numeric",
        }
    }
}

/// Direct recovery from the conjugate network. With `general_t` the bracketed
/// quantity is divided by t, matching the conjugate identity
/// t J_BVS(y) + ||y||^2/2 = psi*(y); the default (`false`) is the t = 1
/// convention in which phi_G absorbs no time factor.
pub fn eval_direct(phi_g: &IcnnModel, x: &[f64], t: TimeParam, general_t: bool) -> Result<f64> {
    let v = phi_g.forward(x)? - norm_sq(x) / 2.0;
    Ok(if general_t { v / t.get() } else { v })
}

struct NegInvertObjective<'a> {
    psi: &'a IcnnModel,
    y: &'a [f64],
}

impl Objective for NegInvertObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.psi.forward(x) {
            Ok(p) => -(dot(x, self.y) - p),
            Err(_) => f64::NAN,
        }
    }
    fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
        match self.psi.input_gradient(x) {
            Ok(g) => g.iter().zip(self.y).map(|(gi, yi)| gi - yi).collect(),
            Err(_) => vec![f64::NAN; x.len()],
        }
    }
}

/// Invert baseline: finds x* with grad psi(x*) = y by maximizing the concave
/// map x -> <x,y> - psi(x), then returns (<x*,y> - psi(x*) - ||y||^2/2)/t.
/// Ascent escaping the search box means y is not in the range of the learned
/// proximal map.
pub fn eval_invert(psi: &IcnnModel, y: &[f64], t: TimeParam, halfwidth: f64) -> Result<f64> {
    crate::check_point(y)?;
    let obj = NegInvertObjective { psi, y };
    let base = SolveOptions {
        restarts: 1,
        box_halfwidth: halfwidth,
        seed: 0x17e7,
        grad_tol: 1e-10,
        max_iters: 500,
        escape_halfwidth: Some(halfwidth),
    };
    let sup = match minimize_multistart(&obj, y, &base) {
        Ok(m) if m.grad_norm <= 1e-6 * (1.0 + norm(y)) => -m.value,
        Ok(stalled) => {
            // Stalled ascent: retry from scattered starts before accepting.
            let multi = SolveOptions {
                restarts: 6,
                ..base
            };
            let m = minimize_multistart(&obj, y, &multi).map(|m| {
                if m.value < stalled.value {
                    m
                } else {
                    stalled
                }
            })?;
            -m.value
        }
        Err(Error::UnboundedConjugate { point }) => {
            return Err(Error::OutOfRange(format!(
                "invert ascent left the search box at {point:?}: y is not in the range of the learned proximal map"
            )));
        }
        Err(e) => return Err(e),
    };
    Ok((sup - norm_sq(y) / 2.0) / t.get())
}

/// Fresh in-range evaluation points for prior scoring: uniform draws from
/// the data box mapped through the learned proximal map (the gradient of the
/// trained potential). The conjugate network only ever sees training inputs
/// from that range, so scoring elsewhere would measure extrapolation rather
/// than recovery; these are also exactly the points where the backward
/// theory guarantees J_BVS agrees with the data-generating prior.
pub fn in_range_eval_points(
    psi: &IcnnModel,
    a: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    let pts = crate::rng::uniform_box_sample(psi.input_dim(), a, count, seed)?;
    pts.iter().map(|p| psi.input_gradient(p)).collect()
}

/// Mean squared error of a recovered prior against ground truth over the
/// evaluation points.
pub fn score_mse(
    rp: &dyn Fn(&[f64]) -> Result<f64>,
    truth: &dyn Fn(&[f64]) -> Result<f64>,
    eval_points: &[Point],
) -> Result<f64> {
    if eval_points.is_empty() {
        return Err(Error::invalid("score_mse needs a nonempty point set"));
    }
    let mut acc = 0.0;
    for p in eval_points {
        let d = rp(p)? - truth(p)?;
        acc += d * d;
    }
    Ok(acc / eval_points.len() as f64)
}

/// Samples a function along a line: rows (s, f(origin + s * unit(direction)))
/// for `samples` values of s uniformly spanning [-halfwidth, halfwidth].
pub fn cross_section(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    origin: &[f64],
    direction: &[f64],
    halfwidth: f64,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    crate::check_point(origin)?;
    if direction.len() != origin.len() {
        return Err(Error::DimensionMismatch {
            expected: origin.len(),
            got: direction.len(),
        });
    }
    let dn = norm(direction);
    if dn == 0.0 || !dn.is_finite() {
        return Err(Error::invalid("cross-section direction must be nonzero"));
    }
    if samples < 2 {
        return Err(Error::invalid("cross-section needs at least 2 samples"));
    }
    if !(halfwidth.is_finite() && halfwidth > 0.0) {
        return Err(Error::invalid("cross-section halfwidth must be > 0"));
    }
    let unit: Vec<f64> = direction.iter().map(|d| d / dn).collect();
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        let s = -halfwidth + 2.0 * halfwidth * i as f64 / (samples - 1) as f64;
        let p: Point = origin.iter().zip(&unit).map(|(o, u)| o + s * u).collect();
        rows.push((s, f(&p)?));
    }
    Ok(rows)
}
