//! Brute-force oracle agreement and analytic property checks that cut across
//! modules.

use hjprox::grid::{grid_minimize, Grid};
use hjprox::hj::{backward_solve, backward_solve_conjugate, BackwardQuery, ClosedSurface};
use hjprox::icnn::{IcnnConfig, Loss};
use hjprox::linalg::dist_sq;
use hjprox::priors::Prior;
use hjprox::rng::SplitRng;
use hjprox::solver::{minimize_quadratic_plus, FnObjective, SolveOptions};
use hjprox::train::{self, TrainConfig};
use hjprox::TimeParam;

fn t1() -> TimeParam {
    TimeParam::new(1.0).unwrap()
}

fn families(dim: usize) -> Vec<Prior> {
    let mut v = vec![
        Prior::L1,
        Prior::NegL1,
        Prior::concave_quadratic(0.25, 1e-2).unwrap(),
        Prior::Zero,
    ];
    if dim == 1 {
        v.push(Prior::NegAbs1D);
        v.push(Prior::min_plus(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap());
    } else {
        v.push(Prior::min_plus_default(dim).unwrap());
    }
    v
}

#[test]
fn closed_s_matches_grid_oracle() {
    let t = t1();
    let mut rng = SplitRng::new(41);
    for (dim, points, nodes) in [(1usize, 100usize, 4001usize), (2, 25, 201)] {
        let g = Grid::symmetric(dim, 9.0, nodes).unwrap();
        // Within twice the grid-resolution bound; the objective's slope on
        // the search box stays below ~10 for every family here.
        let tol = 2.0 * g.spacing() * 10.0;
        for prior in families(dim) {
            for _ in 0..points {
                let x: Vec<f64> = (0..dim).map(|_| rng.uniform(-4.0, 4.0)).collect();
                let closed = prior.eval_s_closed(&x, t).unwrap();
                let (_, brute) = grid_minimize(
                    &|y| dist_sq(&x, y) / (2.0 * t.get()) + prior.eval_j(y).unwrap(),
                    &g,
                )
                .unwrap();
                assert!(
                    (closed - brute).abs() <= tol,
                    "{} dim {dim}: closed {closed} vs grid {brute} at {x:?}",
                    prior.kind_name()
                );
                // The grid can only overshoot the true minimum.
                assert!(brute >= closed - 1e-9);
            }
        }
    }
}

#[test]
fn backward_potential_is_midpoint_convex() {
    // t J_BVS(y) + ||y||^2/2 is convex (unit-constant semiconvexity of the
    // backward solution); checked on the closed form.
    let p = Prior::NegAbs1D;
    let t = t1();
    let mut rng = SplitRng::new(42);
    let pot = |y: f64| t.get() * p.eval_jbvs_closed(&[y], t).unwrap() + y * y / 2.0;
    for _ in 0..1000 {
        let y1 = rng.uniform(-5.0, 5.0);
        let y2 = rng.uniform(-5.0, 5.0);
        let lam = rng.next_f64();
        let lhs = pot(lam * y1 + (1.0 - lam) * y2);
        let rhs = lam * pot(y1) + (1.0 - lam) * pot(y2);
        assert!(
            lhs <= rhs + 1e-6,
            "midpoint violation at {y1},{y2}: {lhs} > {rhs}"
        );
    }
}

#[test]
fn conjugate_and_sup_routes_agree_on_200_points() {
    let p = Prior::NegAbs1D;
    let surface = ClosedSurface { prior: &p };
    let q = BackwardQuery {
        surface: &surface,
        halfwidth: 7.0,
        restarts: 4,
        seed: 7,
    };
    let mut rng = SplitRng::new(43);
    for _ in 0..200 {
        let y = [rng.uniform(-4.0, 4.0)];
        let a = backward_solve(&q, &y, t1()).unwrap();
        let b = backward_solve_conjugate(&q, &y, t1()).unwrap();
        assert!((a - b).abs() < 1e-7, "sup {a} vs conjugate {b} at {}", y[0]);
    }
}

#[test]
fn solver_self_consistency_and_convex_grid_agreement() {
    let t = t1();
    let mut rng = SplitRng::new(44);
    // Convex objective with a kink: f(y) = |y_0| + (y_1 - 1)^2.
    let f = |y: &[f64]| y[0].abs() + (y[1] - 1.0) * (y[1] - 1.0);
    let obj = FnObjective { f: &f, grad: None };
    let g = Grid::symmetric(2, 5.0, 201).unwrap();
    for _ in 0..20 {
        let x: Vec<f64> = (0..2).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let m = minimize_quadratic_plus(&obj, &x, t, &SolveOptions::convex()).unwrap();
        // Value is the exact objective recomputed at the argmin.
        let recomputed = dist_sq(&x, &m.argmin) / (2.0 * t.get()) + f(&m.argmin);
        assert!((m.value - recomputed).abs() <= 1e-10);
        let (_, brute) = grid_minimize(&|y| dist_sq(&x, y) / (2.0 * t.get()) + f(y), &g).unwrap();
        let tol = 2.0 * g.spacing() * 6.0;
        assert!(
            (m.value - brute).abs() <= tol,
            "solver {} vs grid {brute}",
            m.value
        );
    }
}

#[test]
fn fenchel_young_holds_for_trained_potential() {
    // With G_k = <x_k, y_k> - psi(y_k) and x_k = grad psi(y_k), convexity
    // gives psi(y) + G_k >= <x_k, y> for every y.
    let ds = train::synthesize_dataset(&Prior::L1, 2, t1(), 256, 4.0, 8).unwrap();
    let cfg = TrainConfig {
        total_steps: 300,
        decay_every: 300,
        batch_size: 64,
        loss: Loss::Mse,
        seed: 5,
        ..TrainConfig::default()
    };
    let net = IcnnConfig {
        input_dim: 2,
        layers: 2,
        hidden: 16,
        beta: 5.0,
        mu: 0.0,
    };
    let (psi, _) = train::train_first_lpn(&ds, &net, &cfg).unwrap();
    let cds = train::build_conjugate_dataset(&psi, &ds).unwrap();
    let mut rng = SplitRng::new(45);
    for _ in 0..500 {
        let i = rng.below(cds.pairs.len());
        let (xk, gk) = &cds.pairs[i];
        let y: Vec<f64> = (0..2).map(|_| rng.uniform(-4.0, 4.0)).collect();
        let lhs = psi.forward(&y).unwrap() + gk;
        let rhs: f64 = xk.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(lhs >= rhs - 1e-9, "Fenchel-Young violated: {lhs} < {rhs}");
    }
}
