//! Input-convex network with built-in reverse-mode differentiation.
//!
//! Architecture (hidden layers z_1..z_L, softplus activation g with
//! sharpness beta):
//!
//!   a_1 = H_0 y + b_0                    z_1 = g(a_1)
//!   a_k+1 = W_k z_k + H_k y + b_k        z_k+1 = g(a_k+1)
//!   f(y) = w . z_L + u . y + c + (mu/2) ||y||^2
//!
//! Convexity in y holds because every W_k and the head vector w are
//! elementwise nonnegative while g is convex and nondecreasing. The
//! passthrough matrices H_k, the affine head (u, c), and the biases are
//! unconstrained; they never break convexity. The optional mu-offset adds
//! explicit strong convexity and defaults to off.

use crate::linalg::{dot, norm, norm_sq};
use crate::rng::SplitRng;
use crate::{Error, Point, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ICNNCKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Samples per parallel gradient chunk. Chunked accumulation is reduced in
/// chunk order, so results are identical at any thread count.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcnnConfig {
    pub input_dim: usize,
    /// Number of hidden layers (2 in the experiment protocol).
    pub layers: usize,
    pub hidden: usize,
    /// Softplus sharpness (5 in the experiment protocol).
    pub beta: f64,
    /// Strong-convexity offset (mu/2)||y||^2 added to the output; 0 disables.
    #[serde(default)]
    pub mu: f64,
}

impl IcnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.layers < 1 || self.hidden < 1 {
            return Err(Error::invalid("icnn dims must be >= 1"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("softplus beta must be > 0"));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid("mu must be >= 0"));
        }
        Ok(())
    }
}

/// Flat parameter layout:
/// H_0 (h x n), b_0 (h), then for k = 1..L-1: W_k (h x h), H_k (h x n),
/// b_k (h), then w (h), u (n), c (1). Row-major matrices.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    h: usize,
    l: usize,
}

impl Layout {
    fn block_offset(&self, k: usize) -> usize {
        let first = self.h * self.n + self.h;
        let per = self.h * self.h + self.h * self.n + self.h;
        if k == 0 {
            0
        } else {
            first + (k - 1) * per
        }
    }

    /// W_k exists for k >= 1.
    fn w_mat(&self, k: usize) -> std::ops::Range<usize> {
        let off = self.block_offset(k);
        off..off + self.h * self.h
    }

    fn h_mat(&self, k: usize) -> std::ops::Range<usize> {
        let off = self.block_offset(k) + if k == 0 { 0 } else { self.h * self.h };
        off..off + self.h * self.n
    }

    fn bias(&self, k: usize) -> std::ops::Range<usize> {
        let r = self.h_mat(k);
        r.end..r.end + self.h
    }

    fn w_out(&self) -> std::ops::Range<usize> {
        let off = self.block_offset(self.l);
        off..off + self.h
    }

    fn u_vec(&self) -> std::ops::Range<usize> {
        let r = self.w_out();
        r.end..r.end + self.n
    }

    fn c_idx(&self) -> usize {
        self.u_vec().end
    }

    fn total(&self) -> usize {
        self.c_idx() + 1
    }
}

#[derive(Debug, Clone)]
pub struct IcnnModel {
    cfg: IcnnConfig,
    pub seed: u64,
    params: Vec<f64>,
    layout: Layout,
    nonneg_ok: bool,
}

/// Gradient bundle: input gradient (batch mean for batched losses) and the
/// flat parameter gradient in canonical layout order.
#[derive(Debug, Clone)]
pub struct TapeGradient {
    pub d_input: Point,
    pub d_params: Vec<f64>,
}

/// Per-sample forward tape: activations, their sigmoids (shared with the
/// backward sweep so the exp calls happen once), and adjoint scratch.
struct Tape {
    z: Vec<Vec<f64>>,
    sig: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

impl Tape {
    fn new(layers: usize, hidden: usize) -> Self {
        Tape {
            z: (0..layers).map(|_| vec![0.0; hidden]).collect(),
            sig: (0..layers).map(|_| vec![0.0; hidden]).collect(),
            d: (0..layers).map(|_| vec![0.0; hidden]).collect(),
        }
    }
}

/// softplus and its derivative from one exp evaluation.
#[inline]
fn softplus_pair(a: f64, beta: f64) -> (f64, f64) {
    let ba = beta * a;
    if ba > 0.0 {
        let e = (-ba).exp();
        (a + e.ln_1p() / beta, 1.0 / (1.0 + e))
    } else {
        let e = ba.exp();
        (e.ln_1p() / beta, e / (1.0 + e))
    }
}

impl IcnnModel {
    /// Seed-deterministic initialization: passthroughs and biases from a
    /// scaled uniform, constrained blocks from its absolute value so the
    /// model starts feasible.
    pub fn init(cfg: IcnnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout {
            n: cfg.input_dim,
            h: cfg.hidden,
            l: cfg.layers,
        };
        let mut params = vec![0.0; layout.total()];
        let mut rng = SplitRng::new(seed).derive(0x1c44);
        let n_scale = 1.0 / (cfg.input_dim as f64).sqrt();
        let h_scale = 1.0 / (cfg.hidden as f64).sqrt();
        for k in 0..cfg.layers {
            if k >= 1 {
                for i in layout.w_mat(k) {
                    params[i] = rng.uniform(-h_scale, h_scale).abs();
                }
            }
            for i in layout.h_mat(k) {
                params[i] = rng.uniform(-n_scale, n_scale);
            }
            let bias_scale = if k == 0 { n_scale } else { h_scale };
            for i in layout.bias(k) {
                params[i] = rng.uniform(-bias_scale, bias_scale);
            }
        }
        for i in layout.w_out() {
            params[i] = rng.uniform(-h_scale, h_scale).abs();
        }
        for i in layout.u_vec() {
            params[i] = rng.uniform(-n_scale, n_scale);
        }
        params[layout.c_idx()] = 0.0;
        Ok(IcnnModel {
            cfg,
            seed,
            params,
            layout,
            nonneg_ok: true,
        })
    }

    pub fn config(&self) -> &IcnnConfig {
        self.cfg_ref()
    }

    fn cfg_ref(&self) -> &IcnnConfig {
        &self.cfg
    }

    pub fn input_dim(&self) -> usize {
        self.cfg.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replaces the parameter vector, revalidating the weight invariant.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.layout.total() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.layout.total(),
                params.len()
            )));
        }
        self.params = params;
        self.nonneg_ok = self.weights_nonnegative();
        Ok(())
    }

    /// Raw mutable access for the optimizer; the caller must project (or
    /// otherwise restore the invariant) before the next public forward.
    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        self.nonneg_ok = false;
        &mut self.params
    }

    fn weights_nonnegative(&self) -> bool {
        for k in 1..self.cfg.layers {
            if self.params[self.layout.w_mat(k)].iter().any(|&v| v < 0.0) {
                return false;
            }
        }
        !self.params[self.layout.w_out()].iter().any(|&v| v < 0.0)
    }

    /// Clamps every constrained weight at zero. Idempotent.
    pub fn project_weights(&mut self) {
        for k in 1..self.cfg.layers {
            for i in self.layout.w_mat(k) {
                if self.params[i] < 0.0 {
                    self.params[i] = 0.0;
                }
            }
        }
        for i in self.layout.w_out() {
            if self.params[i] < 0.0 {
                self.params[i] = 0.0;
            }
        }
        self.nonneg_ok = true;
    }

    fn check_input(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.cfg.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.input_dim,
                got: y.len(),
            });
        }
        if !self.nonneg_ok {
            return Err(Error::invalid(
                "weight nonnegativity violated; call project_weights after raw updates",
            ));
        }
        Ok(())
    }

    fn forward_tape(&self, y: &[f64], tape: &mut Tape) -> f64 {
        let Layout { n, h, l } = self.layout;
        let p = &self.params;
        let beta = self.cfg.beta;
        for k in 0..l {
            let hr = self.layout.h_mat(k).start;
            let br = self.layout.bias(k).start;
            // Split tapes so z[k-1] stays readable while writing layer k.
            let (zdone, zrest) = tape.z.split_at_mut(k);
            let zk = &mut zrest[0];
            let sk = &mut tape.sig[k];
            for r in 0..h {
                let row = hr + r * n;
                let mut acc = p[br + r] + dot(&p[row..row + n], y);
                if k >= 1 {
                    let wr = self.layout.w_mat(k).start + r * h;
                    acc += dot(&p[wr..wr + h], &zdone[k - 1]);
                }
                let (z, s) = softplus_pair(acc, beta);
                zk[r] = z;
                sk[r] = s;
            }
        }
        let w = self.layout.w_out().start;
        let u = self.layout.u_vec().start;
        let mut out = p[self.layout.c_idx()];
        for r in 0..h {
            out += p[w + r] * tape.z[l - 1][r];
        }
        for c in 0..n {
            out += p[u + c] * y[c];
        }
        out + 0.5 * self.cfg.mu * norm_sq(y)
    }

    /// Network output. Deterministic; errors on dimension mismatch or a
    /// violated weight invariant.
    pub fn forward(&self, y: &[f64]) -> Result<f64> {
        self.check_input(y)?;
        let mut tape = Tape::new(self.cfg.layers, self.cfg.hidden);
        Ok(self.forward_tape(y, &mut tape))
    }

    /// Output without the weight-invariant gate. Exists for finite-difference
    /// probes over raw parameters, where perturbed weights may dip below
    /// zero; everything else should call [`IcnnModel::forward`].
    pub fn forward_unchecked(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.cfg.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.input_dim,
                got: y.len(),
            });
        }
        let mut tape = Tape::new(self.cfg.layers, self.cfg.hidden);
        Ok(self.forward_tape(y, &mut tape))
    }

    /// Backward sweep filling the adjoints tape.d[k] = dL/da_k given the
    /// output adjoint, reusing the sigmoids cached by the forward pass.
    fn backward_adjoints(&self, tape: &mut Tape, dout: f64) {
        let Layout { n: _, h, l } = self.layout;
        let p = &self.params;
        let w = self.layout.w_out().start;
        for r in 0..h {
            tape.d[l - 1][r] = dout * p[w + r] * tape.sig[l - 1][r];
        }
        for k in (0..l - 1).rev() {
            let wr = self.layout.w_mat(k + 1).start;
            let (dk_part, dkp1_part) = tape.d.split_at_mut(k + 1);
            let dk = &mut dk_part[k];
            let dkp1 = &dkp1_part[0];
            dk.iter_mut().for_each(|v| *v = 0.0);
            for (rr, &drr) in dkp1.iter().enumerate() {
                if drr == 0.0 {
                    continue;
                }
                let row = &p[wr + rr * h..wr + rr * h + h];
                for (dv, &wv) in dk.iter_mut().zip(row) {
                    *dv += wv * drr;
                }
            }
            for (dv, &sv) in dk.iter_mut().zip(tape.sig[k].iter()) {
                *dv *= sv;
            }
        }
    }

    /// Exact reverse-mode gradient of the output with respect to the input.
    /// When the model plays the psi role this is the learned proximal map.
    pub fn input_gradient(&self, y: &[f64]) -> Result<Point> {
        self.check_input(y)?;
        let mut tape = Tape::new(self.cfg.layers, self.cfg.hidden);
        let _ = self.forward_tape(y, &mut tape);
        Ok(self.input_gradient_from_tape(y, &mut tape))
    }

    /// Input gradient without the weight-invariant gate; see
    /// [`IcnnModel::forward_unchecked`].
    pub fn input_gradient_unchecked(&self, y: &[f64]) -> Result<Point> {
        if y.len() != self.cfg.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.input_dim,
                got: y.len(),
            });
        }
        let mut tape = Tape::new(self.cfg.layers, self.cfg.hidden);
        let _ = self.forward_tape(y, &mut tape);
        Ok(self.input_gradient_from_tape(y, &mut tape))
    }

    fn input_gradient_from_tape(&self, y: &[f64], tape: &mut Tape) -> Point {
        let Layout { n, h, l } = self.layout;
        self.backward_adjoints(tape, 1.0);
        let p = &self.params;
        let mut g = vec![0.0; n];
        for k in 0..l {
            let hr = self.layout.h_mat(k).start;
            for r in 0..h {
                let row = hr + r * n;
                let dr = tape.d[k][r];
                for c in 0..n {
                    g[c] += dr * p[row + c];
                }
            }
        }
        let u = self.layout.u_vec().start;
        for c in 0..n {
            g[c] += p[u + c] + self.cfg.mu * y[c];
        }
        g
    }

    /// Accumulates parameter gradients for one sample with output adjoint
    /// `dout` into `gp`, and the input gradient into `gy`.
    fn accumulate_param_grad(
        &self,
        y: &[f64],
        tape: &mut Tape,
        dout: f64,
        gp: &mut [f64],
        gy: &mut [f64],
    ) {
        let Layout { n, h, l } = self.layout;
        self.backward_adjoints(tape, dout);
        let p = &self.params;
        // Head.
        let w = self.layout.w_out().start;
        let u = self.layout.u_vec().start;
        for r in 0..h {
            gp[w + r] += dout * tape.z[l - 1][r];
        }
        for c in 0..n {
            gp[u + c] += dout * y[c];
            gy[c] += dout * (p[u + c] + self.cfg.mu * y[c]);
        }
        gp[self.layout.c_idx()] += dout;
        // Blocks.
        for k in 0..l {
            let hr = self.layout.h_mat(k).start;
            let br = self.layout.bias(k).start;
            for r in 0..h {
                let dr = tape.d[k][r];
                if dr == 0.0 {
                    continue;
                }
                gp[br + r] += dr;
                let row = hr + r * n;
                for c in 0..n {
                    gp[row + c] += dr * y[c];
                    gy[c] += dr * p[row + c];
                }
                if k >= 1 {
                    let wr = self.layout.w_mat(k).start + r * h;
                    let dst = &mut gp[wr..wr + h];
                    for (g, &zv) in dst.iter_mut().zip(tape.z[k - 1].iter()) {
                        *g += dr * zv;
                    }
                }
            }
        }
    }

    /// Gradient of the mean batch loss with respect to all parameters
    /// (reverse mode), plus the mean input gradient of the loss.
    pub fn param_gradient(&self, batch: &[(Point, f64)], loss: Loss) -> Result<TapeGradient> {
        Ok(self.param_gradient_with_loss(batch, loss)?.0)
    }

    /// Same as [`IcnnModel::param_gradient`] but also returns the loss value.
    /// Parallel over fixed-size chunks reduced in order: bit-identical
    /// results at any thread count.
    pub fn param_gradient_with_loss(
        &self,
        batch: &[(Point, f64)],
        loss: Loss,
    ) -> Result<(TapeGradient, f64)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for (y, _) in batch {
            self.check_input(y)?;
        }
        let b = batch.len() as f64;
        let np = self.params.len();
        let n = self.cfg.input_dim;
        let chunks: Vec<(Vec<f64>, Vec<f64>, f64)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut gp = vec![0.0; np];
                let mut gy = vec![0.0; n];
                let mut tape = Tape::new(self.cfg.layers, self.cfg.hidden);
                let mut loss_sum = 0.0;
                for (y, target) in chunk {
                    let out = self.forward_tape(y, &mut tape);
                    let (lval, dout) = match loss {
                        Loss::Mse => ((out - target) * (out - target), 2.0 * (out - target) / b),
                        Loss::L1 => ((out - target).abs(), (out - target).signum() / b),
                    };
                    loss_sum += lval;
                    self.accumulate_param_grad(y, &mut tape, dout, &mut gp, &mut gy);
                }
                (gp, gy, loss_sum)
            })
            .collect();
        let mut d_params = vec![0.0; np];
        let mut d_input = vec![0.0; n];
        let mut loss_sum = 0.0;
        for (gp, gy, ls) in chunks {
            for (a, v) in d_params.iter_mut().zip(&gp) {
                *a += v;
            }
            for (a, v) in d_input.iter_mut().zip(&gy) {
                *a += v;
            }
            loss_sum += ls;
        }
        for v in &mut d_input {
            *v /= b;
        }
        let loss_val = loss_sum / b;
        if !loss_val.is_finite() {
            return Err(Error::numeric("non-finite batch loss", &[]));
        }
        Ok((TapeGradient { d_input, d_params }, loss_val))
    }

    /// Gradient-matching loss: mean ||grad_y f(y_i) - p_i||^2 over the batch,
    /// with the parameter gradient computed through a directional central
    /// difference of the value backprop (the residual direction r gives
    /// d/dtheta <grad f, r> = d/ds grad_theta f(y + s r) at s = 0).
    pub fn prox_loss_gradient(&self, batch: &[(Point, Point)]) -> Result<(TapeGradient, f64)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for (y, p) in batch {
            self.check_input(y)?;
            if p.len() != self.cfg.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.cfg.input_dim,
                    got: p.len(),
                });
            }
        }
        let b = batch.len() as f64;
        let np = self.params.len();
        let n = self.cfg.input_dim;
        let chunks: Vec<(Vec<f64>, f64)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut gp = vec![0.0; np];
                let mut gplus = vec![0.0; np];
                let mut gminus = vec![0.0; np];
                let mut tape = Tape::new(self.cfg.layers, self.cfg.hidden);
                let mut gy0 = vec![0.0; n];
                let mut loss_sum = 0.0;
                for (y, ptarget) in chunk {
                    let _ = self.forward_tape(y, &mut tape);
                    let grad = self.input_gradient_from_tape(y, &mut tape);
                    let r: Vec<f64> = grad
                        .iter()
                        .zip(ptarget)
                        .map(|(g, p)| 2.0 * (g - p) / b)
                        .collect();
                    loss_sum += grad
                        .iter()
                        .zip(ptarget)
                        .map(|(g, p)| (g - p) * (g - p))
                        .sum::<f64>();
                    let rn = norm(&r);
                    if rn < 1e-300 {
                        continue;
                    }
                    let eps = 1e-5 * (1.0 + norm(y)) / rn;
                    let yp: Vec<f64> = y.iter().zip(&r).map(|(a, b)| a + eps * b).collect();
                    let ym: Vec<f64> = y.iter().zip(&r).map(|(a, b)| a - eps * b).collect();
                    gplus.iter_mut().for_each(|v| *v = 0.0);
                    gminus.iter_mut().for_each(|v| *v = 0.0);
                    let _ = self.forward_tape(&yp, &mut tape);
                    self.accumulate_param_grad(&yp, &mut tape, 1.0, &mut gplus, &mut gy0);
                    let _ = self.forward_tape(&ym, &mut tape);
                    self.accumulate_param_grad(&ym, &mut tape, 1.0, &mut gminus, &mut gy0);
                    let inv = 1.0 / (2.0 * eps);
                    for i in 0..np {
                        gp[i] += (gplus[i] - gminus[i]) * inv;
                    }
                }
                (gp, loss_sum)
            })
            .collect();
        let mut d_params = vec![0.0; np];
        let mut loss_sum = 0.0;
        for (gp, ls) in chunks {
            for (a, v) in d_params.iter_mut().zip(&gp) {
                *a += v;
            }
            loss_sum += ls;
        }
        let loss_val = loss_sum / b;
        if !loss_val.is_finite() {
            return Err(Error::numeric("non-finite prox loss", &[]));
        }
        Ok((
            TapeGradient {
                d_input: vec![0.0; n],
                d_params,
            },
            loss_val,
        ))
    }

    /// Binary checkpoint: magic, version, shape header, seed, and the flat
    /// parameter array in little-endian IEEE-754.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.cfg.layers as u32).to_le_bytes())?;
        w.write_all(&(self.cfg.hidden as u32).to_le_bytes())?;
        w.write_all(&(self.cfg.input_dim as u32).to_le_bytes())?;
        w.write_all(&self.cfg.beta.to_le_bytes())?;
        w.write_all(&self.cfg.mu.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Config("not an icnn checkpoint (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        r.read_exact(&mut b4)?;
        let layers = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let hidden = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let input_dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let beta = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let mu = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let cfg = IcnnConfig {
            input_dim,
            layers,
            hidden,
            beta,
            mu,
        };
        cfg.validate()?;
        let layout = Layout {
            n: input_dim,
            h: hidden,
            l: layers,
        };
        if count != layout.total() {
            return Err(Error::Config(format!(
                "checkpoint parameter count {count} does not match shape ({})",
                layout.total()
            )));
        }
        let mut params = vec![0.0; count];
        for p in &mut params {
            r.read_exact(&mut b8)?;
            *p = f64::from_le_bytes(b8);
        }
        let mut m = IcnnModel {
            cfg,
            seed,
            params,
            layout,
            nonneg_ok: false,
        };
        m.nonneg_ok = m.weights_nonnegative();
        Ok(m)
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::DependencyMissing(format!(
                "checkpoint {}",
                path.display()
            )));
        }
        IcnnModel::load(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lerp;

    fn small(seed: u64) -> IcnnModel {
        IcnnModel::init(
            IcnnConfig {
                input_dim: 2,
                layers: 2,
                hidden: 8,
                beta: 5.0,
                mu: 0.0,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_passthrough_gives_constant_output() {
        let mut m = small(1);
        let mut p = m.params().to_vec();
        // Zero all H_k and u: output must not depend on y.
        for k in 0..2 {
            for i in m.layout.h_mat(k) {
                p[i] = 0.0;
            }
        }
        for i in m.layout.u_vec() {
            p[i] = 0.0;
        }
        m.set_params(p).unwrap();
        let a = m.forward(&[0.0, 0.0]).unwrap();
        let b = m.forward(&[3.0, -2.0]).unwrap();
        assert!((a - b).abs() < 1e-15);
        let g = m.input_gradient(&[1.0, 1.0]).unwrap();
        assert!(norm(&g) < 1e-15);
    }

    #[test]
    fn output_is_continuous() {
        let m = small(2);
        let a = m.forward(&[0.0, 0.0]).unwrap();
        let b = m.forward(&[1e-9, 0.0]).unwrap();
        assert!((a - b).abs() <= 1e-7);
    }

    #[test]
    fn convexity_midpoint_random_models() {
        let mut rng = SplitRng::new(7);
        for seed in 0..5 {
            let m = small(seed);
            for _ in 0..200 {
                let y1: Point = (0..2).map(|_| rng.uniform(-4.0, 4.0)).collect();
                let y2: Point = (0..2).map(|_| rng.uniform(-4.0, 4.0)).collect();
                let lam = rng.next_f64();
                let ym = lerp(&y1, &y2, lam);
                let lhs = m.forward(&ym).unwrap();
                let rhs = lam * m.forward(&y1).unwrap() + (1.0 - lam) * m.forward(&y2).unwrap();
                assert!(lhs <= rhs + 1e-9, "midpoint violation: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = small(3);
        let mut rng = SplitRng::new(9);
        for _ in 0..20 {
            let y: Point = (0..2).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let g = m.input_gradient(&y).unwrap();
            let fd =
                crate::solver::finite_diff_gradient(&|p| m.forward(p).unwrap(), &y, 1e-6).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                let rel = (a - b).abs() / (1.0 + b.abs());
                assert!(rel < 1e-5, "grad {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn gradient_monotone_for_convex_net() {
        let m = small(4);
        let mut rng = SplitRng::new(11);
        for _ in 0..500 {
            let y1: Point = (0..2).map(|_| rng.uniform(-4.0, 4.0)).collect();
            let y2: Point = (0..2).map(|_| rng.uniform(-4.0, 4.0)).collect();
            let g1 = m.input_gradient(&y1).unwrap();
            let g2 = m.input_gradient(&y2).unwrap();
            let inner: f64 = g1
                .iter()
                .zip(&g2)
                .zip(y1.iter().zip(&y2))
                .map(|((a, b), (p, q))| (a - b) * (p - q))
                .sum();
            assert!(inner >= -1e-9, "gradient monotonicity violated: {inner}");
        }
    }

    #[test]
    fn param_gradient_zero_at_exact_fit_mse() {
        let m = small(5);
        let y = vec![0.7, -0.3];
        let target = m.forward(&y).unwrap();
        let g = m.param_gradient(&[(y, target)], Loss::Mse).unwrap();
        assert!(g.d_params.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn l1_loss_gradient_flips_sign_across_target() {
        let m = small(6);
        let y = vec![0.2, 0.4];
        let out = m.forward(&y).unwrap();
        let above = m
            .param_gradient(&[(y.clone(), out - 1.0)], Loss::L1)
            .unwrap();
        let below = m.param_gradient(&[(y, out + 1.0)], Loss::L1).unwrap();
        for (a, b) in above.d_params.iter().zip(&below.d_params) {
            assert!(
                (a + b).abs() < 1e-12,
                "L1 gradient should flip sign: {a} vs {b}"
            );
        }
    }

    #[test]
    fn param_gradient_matches_directional_differences() {
        let m = small(8);
        let mut rng = SplitRng::new(21);
        let batch: Vec<(Point, f64)> = (0..6)
            .map(|_| {
                let y: Point = (0..2).map(|_| rng.uniform(-2.0, 2.0)).collect();
                let t = rng.uniform(-1.0, 1.0);
                (y, t)
            })
            .collect();
        for loss in [Loss::Mse, Loss::L1] {
            let (g, _) = m.param_gradient_with_loss(&batch, loss).unwrap();
            for trial in 0..20 {
                let mut dir: Vec<f64> = (0..m.param_count())
                    .map(|i| rng.f64_at((trial * 131 + i) as u64) - 0.5)
                    .collect();
                let dn = norm(&dir);
                dir.iter_mut().for_each(|v| *v /= dn);
                let eps = 1e-6;
                let eval = |shift: f64| -> f64 {
                    let mut mm = m.clone();
                    let p: Vec<f64> = mm
                        .params()
                        .iter()
                        .zip(&dir)
                        .map(|(a, d)| a + shift * d)
                        .collect();
                    mm.set_params(p).unwrap();
                    let mut acc = 0.0;
                    for (y, t) in &batch {
                        let out = mm.forward_unchecked(y).unwrap();
                        acc += match loss {
                            Loss::Mse => (out - t) * (out - t),
                            Loss::L1 => (out - t).abs(),
                        };
                    }
                    acc / batch.len() as f64
                };
                let num = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let ana = dot(&g.d_params, &dir);
                let rel = (num - ana).abs() / (1.0 + ana.abs());
                assert!(rel < 1e-4, "{loss:?}: directional {num} vs analytic {ana}");
            }
        }
    }

    #[test]
    fn prox_loss_gradient_matches_directional_differences() {
        let m = small(13);
        let mut rng = SplitRng::new(31);
        let batch: Vec<(Point, Point)> = (0..4)
            .map(|_| {
                let y: Point = (0..2).map(|_| rng.uniform(-2.0, 2.0)).collect();
                let p: Point = (0..2).map(|_| rng.uniform(-1.0, 1.0)).collect();
                (y, p)
            })
            .collect();
        let (g, loss0) = m.prox_loss_gradient(&batch).unwrap();
        assert!(loss0 > 0.0);
        for trial in 0..10 {
            let mut dir: Vec<f64> = (0..m.param_count())
                .map(|i| rng.f64_at((trial * 977 + i) as u64) - 0.5)
                .collect();
            let dn = norm(&dir);
            dir.iter_mut().for_each(|v| *v /= dn);
            let eps = 1e-6;
            let eval = |shift: f64| -> f64 {
                let mut mm = m.clone();
                let p: Vec<f64> = mm
                    .params()
                    .iter()
                    .zip(&dir)
                    .map(|(a, d)| a + shift * d)
                    .collect();
                mm.set_params(p).unwrap();
                let mut acc = 0.0;
                for (y, ptarget) in &batch {
                    let grad = mm.input_gradient_unchecked(y).unwrap();
                    acc += grad
                        .iter()
                        .zip(ptarget)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                }
                acc / batch.len() as f64
            };
            let num = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let ana = dot(&g.d_params, &dir);
            let rel = (num - ana).abs() / (1.0 + ana.abs());
            assert!(rel < 1e-4, "prox loss directional {num} vs analytic {ana}");
        }
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let mut m = small(10);
        let mut p = m.params().to_vec();
        let wi = m.layout.w_mat(1).start;
        p[wi] = -0.3;
        m.set_params(p).unwrap();
        assert!(
            m.forward(&[0.0, 0.0]).is_err(),
            "negative weight must be caught"
        );
        m.project_weights();
        assert_eq!(m.params()[wi], 0.0);
        let before = m.params().to_vec();
        m.project_weights();
        assert_eq!(before, m.params());
        assert!(m.forward(&[0.0, 0.0]).is_ok());
    }

    #[test]
    fn softplus_second_derivative_is_continuous_near_zero() {
        let beta = 5.0;
        let h = 1e-4;
        let sp = |x: f64| softplus_pair(x, beta).0;
        let second = |x: f64| (sp(x + h) - 2.0 * sp(x) + sp(x - h)) / (h * h);
        let jump = (second(h) - second(-h)).abs();
        assert!(jump < 1e-3, "softplus curvature jump {jump}");
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let m = small(77);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = IcnnModel::load(&mut buf.as_slice()).unwrap();
        assert_eq!(m.params(), back.params());
        assert_eq!(m.config(), back.config());
        assert_eq!(m.seed, back.seed);
    }

    #[test]
    fn same_seed_same_init() {
        let a = small(123);
        let b = small(123);
        assert_eq!(a.params(), b.params());
        let c = small(124);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn empty_batch_rejected() {
        let m = small(1);
        assert!(m.param_gradient(&[], Loss::Mse).is_err());
    }
}
