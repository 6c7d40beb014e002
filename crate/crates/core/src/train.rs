//! Dataset synthesis and the two-stage training pipeline.
//!
//! Stage one regresses the convex potential psi(x,t) = ||x||^2/2 - t S(x,t)
//! on sampled solution triplets (so the network's convexity matches the
//! target's). Stage two evaluates the trained potential's Legendre transform
//! at its own gradient points and fits a second convex network to those
//! conjugate values; the prior is then read off as phi_G(x) - ||x||^2/2.

use crate::dataset::{Dataset, SampleTriplet};
use crate::hj;
use crate::icnn::{IcnnConfig, IcnnModel, Loss};
use crate::linalg::dot;
use crate::priors::Prior;
use crate::rng::SplitRng;
use crate::{Error, Point, Result, TimeParam};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTarget {
    /// Regress psi values (default).
    Psi,
    /// Match the network's input gradient to the proximal points y_k.
    Prox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub loss: Loss,
    #[serde(default = "default_loss_target")]
    pub loss_target: LossTarget,
    pub seed: u64,
    /// Optional multiplier shrinking total_steps and decay_every
    /// proportionally (0.05 reproduces the CI desk scale).
    #[serde(default)]
    pub desk_scale: Option<f64>,
}

fn default_loss_target() -> LossTarget {
    LossTarget::Psi
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            decay_factor: 0.1,
            decay_every: 100_000,
            total_steps: 500_000,
            batch_size: 1024,
            loss: Loss::Mse,
            loss_target: LossTarget::Psi,
            seed: 0,
            desk_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config("lr0 must be > 0".into()));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must be in (0, 1]".into()));
        }
        if self.decay_every < 1 {
            return Err(Error::Config("decay_every must be >= 1".into()));
        }
        if self.total_steps > 0 && self.total_steps < self.decay_every {
            return Err(Error::Config("total_steps must be >= decay_every".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(s) = self.desk_scale {
            if !(s.is_finite() && s > 0.0 && s <= 1.0) {
                return Err(Error::Config("desk_scale must be in (0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Applies desk_scale to the step counts; a no-op without one.
    pub fn effective(&self) -> TrainConfig {
        match self.desk_scale {
            None => self.clone(),
            Some(s) => TrainConfig {
                total_steps: ((self.total_steps as f64 * s).round() as usize).max(1),
                decay_every: ((self.decay_every as f64 * s).round() as usize).max(1),
                desk_scale: None,
                ..self.clone()
            },
        }
    }

    /// lr0 * decay_factor^floor(step / decay_every).
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr0 * self.decay_factor.powi((step / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub type LossHistory = Vec<TrainRecord>;

/// Adam with the usual defaults; the learning rate arrives per step from the
/// schedule.
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Draws sample triplets from a prior's solution surface, rejecting points
/// within 1e-6 of the non-differentiability set (the derived y_k needs a
/// gradient at x_k). Closed forms where available; brute-force forward
/// solves only in low dimension.
pub fn synthesize_dataset(
    prior: &Prior,
    dim: usize,
    t: TimeParam,
    n: usize,
    a: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    if let Some(d) = prior.fixed_dim() {
        if d != dim {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: dim,
            });
        }
    }
    let closed = prior.has_closed_s();
    if !closed && dim > 3 {
        return Err(Error::Unsupported(
            "prior without closed-form S: datasets limited to dim <= 3 (brute-force forward)"
                .into(),
        ));
    }
    let mut rng = SplitRng::new(seed).derive(0xda7a);
    let mut samples = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while samples.len() < n {
        attempts += 1;
        if attempts > 50 * n + 1000 {
            return Err(Error::numeric("rejection sampling stalled", &[]));
        }
        let x: Point = (0..dim).map(|_| rng.uniform(-a, a)).collect();
        if closed && prior.sample_exclusion_distance(&x, t)? < 1e-6 {
            continue;
        }
        let (s, g) = if closed {
            (
                prior.eval_s_closed(&x, t)?,
                prior.eval_grad_s_closed(&x, t)?,
            )
        } else {
            let r = hj::forward_solve(prior, &x, t)?;
            (r.value, r.grad_estimate)
        };
        samples.push(SampleTriplet::new(x, s, g, t)?);
    }
    Dataset::new(t, dim, a, seed, samples)
}

fn run_training(
    mut model: IcnnModel,
    inputs: &[Point],
    value_targets: &[f64],
    prox_targets: Option<&[Point]>,
    cfg: &TrainConfig,
) -> Result<(IcnnModel, LossHistory)> {
    cfg.validate()?;
    let cfg = cfg.effective();
    let n = inputs.len();
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    let mut history = Vec::with_capacity(cfg.total_steps);
    if cfg.total_steps == 0 {
        return Ok((model, history));
    }
    let mut adam = Adam::new(model.param_count());
    let shuffle_rng = SplitRng::new(cfg.seed).derive(0xba7c);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut cursor = n; // force shuffle at step 0
    let mut epoch = 0u64;
    let batch_size = cfg.batch_size.min(n);
    for step in 0..cfg.total_steps {
        if cursor + batch_size > n {
            let mut r = shuffle_rng.derive(epoch);
            r.shuffle(&mut perm);
            epoch += 1;
            cursor = 0;
        }
        let idx = &perm[cursor..cursor + batch_size];
        cursor += batch_size;

        let (grad, loss_val) = match prox_targets {
            None => {
                let batch: Vec<(Point, f64)> = idx
                    .iter()
                    .map(|&i| (inputs[i].clone(), value_targets[i]))
                    .collect();
                model.param_gradient_with_loss(&batch, cfg.loss)?
            }
            Some(pt) => {
                let batch: Vec<(Point, Point)> = idx
                    .iter()
                    .map(|&i| (inputs[i].clone(), pt[i].clone()))
                    .collect();
                model.prox_loss_gradient(&batch)?
            }
        };
        if !loss_val.is_finite() || loss_val > 1e6 {
            return Err(Error::TrainingDiverged {
                step,
                loss: loss_val,
            });
        }
        let lr = cfg.lr_at(step);
        adam.update(model.params_mut(), &grad.d_params, lr);
        model.project_weights();
        history.push(TrainRecord {
            step,
            lr,
            loss: loss_val,
        });
    }
    Ok((model, history))
}

/// Trains the first network on psi targets (or on proximal points when
/// `cfg.loss_target` is `Prox`).
pub fn train_first_lpn(
    ds: &Dataset,
    net: &IcnnConfig,
    cfg: &TrainConfig,
) -> Result<(IcnnModel, LossHistory)> {
    if net.input_dim != ds.dim {
        return Err(Error::DimensionMismatch {
            expected: ds.dim,
            got: net.input_dim,
        });
    }
    let model = IcnnModel::init(*net, cfg.seed)?;
    let inputs: Vec<Point> = ds.samples.iter().map(|s| s.x.clone()).collect();
    match cfg.loss_target {
        LossTarget::Psi => {
            let targets = ds.psi_targets();
            run_training(model, &inputs, &targets, None, cfg)
        }
        LossTarget::Prox => {
            let prox: Vec<Point> = ds.samples.iter().map(|s| s.y(ds.t)).collect();
            run_training(model, &inputs, &[], Some(&prox), cfg)
        }
    }
}

/// Conjugate pairs (x_k, G_k) evaluated from a trained potential:
/// x_k = grad psi(y_i), G_k = <x_k, y_i> - psi(y_i) at the original points.
#[derive(Debug, Clone)]
pub struct ConjugateDataset {
    pub pairs: Vec<(Point, f64)>,
    /// Identifier of the first-stage model these values came from.
    pub provenance: String,
}

pub fn build_conjugate_dataset(model: &IcnnModel, ds: &Dataset) -> Result<ConjugateDataset> {
    if model.input_dim() != ds.dim {
        return Err(Error::DimensionMismatch {
            expected: ds.dim,
            got: model.input_dim(),
        });
    }
    let mut pairs = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let x = model.input_gradient(&s.x)?;
        let g = dot(&x, &s.x) - model.forward(&s.x)?;
        pairs.push((x, g));
    }
    Ok(ConjugateDataset {
        pairs,
        provenance: format!("psi-seed{}-n{}", model.seed, ds.len()),
    })
}

/// Trains the conjugate network phi_G on (x_k, G_k) pairs (MSE).
pub fn train_second_lpn(
    cds: &ConjugateDataset,
    net: &IcnnConfig,
    cfg: &TrainConfig,
) -> Result<(IcnnModel, LossHistory)> {
    if cds.pairs.is_empty() {
        return Err(Error::invalid("empty conjugate dataset"));
    }
    if net.input_dim != cds.pairs[0].0.len() {
        return Err(Error::DimensionMismatch {
            expected: cds.pairs[0].0.len(),
            got: net.input_dim,
        });
    }
    let model = IcnnModel::init(*net, cfg.seed.wrapping_add(1))?;
    let inputs: Vec<Point> = cds.pairs.iter().map(|(x, _)| x.clone()).collect();
    let targets: Vec<f64> = cds.pairs.iter().map(|(_, g)| *g).collect();
    // The conjugate stage always regresses values under MSE; `loss` and
    // `loss_target` only steer the first stage.
    let cfg = TrainConfig {
        loss: Loss::Mse,
        loss_target: LossTarget::Psi,
        ..cfg.clone()
    };
    run_training(model, &inputs, &targets, None, &cfg)
}
