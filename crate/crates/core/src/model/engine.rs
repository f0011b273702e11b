//! Row-wise transformer evaluation and backpropagation.
//!
//! Every token row is computed by the same routines whether it is evaluated
//! incrementally against a key/value cache (sampling, batched log ψ) or as
//! part of a recorded forward pass used for gradients, so all paths produce
//! bit-identical numbers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use super::encoding::{block_inputs, spin_input, write_sinusoidal, TokenPosition, TokenSequence};
use super::params::{LayerLayout, Linear, Norm};
use super::TqsModel;
use crate::error::{Error, Result};
use crate::family::CouplingVector;

/// ln(1e-30): conditional probabilities are clamped here before use.
pub const LOG_FLOOR: f64 = -69.077_552_789_821_37;
const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, Default)]
pub(crate) struct LayerKv {
    pub k: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct KvCache {
    pub layers: Vec<LayerKv>,
    pub rows: usize,
}

impl KvCache {
    pub fn new(n_layers: usize) -> Self {
        Self {
            layers: vec![LayerKv::default(); n_layers],
            rows: 0,
        }
    }

    pub fn truncate(&mut self, rows: usize, d: usize) {
        for l in &mut self.layers {
            l.k.truncate(rows * d);
            l.v.truncate(rows * d);
        }
        self.rows = rows;
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerTape {
    pub x_in: Vec<f64>,
    pub q: Vec<f64>,
    /// `[row][head][key]`, key stride = total rows
    pub probs: Vec<f64>,
    pub ctx: Vec<f64>,
    pub xhat1: Vec<f64>,
    pub inv1: Vec<f64>,
    pub x1: Vec<f64>,
    pub ff_pre: Vec<f64>,
    pub xhat2: Vec<f64>,
    pub inv2: Vec<f64>,
}

impl LayerTape {
    fn new(rows: usize, d: usize, heads: usize, ff: usize) -> Self {
        Self {
            x_in: vec![0.0; rows * d],
            q: vec![0.0; rows * d],
            probs: vec![0.0; rows * heads * rows],
            ctx: vec![0.0; rows * d],
            xhat1: vec![0.0; rows * d],
            inv1: vec![0.0; rows],
            x1: vec![0.0; rows * d],
            ff_pre: vec![0.0; rows * ff],
            xhat2: vec![0.0; rows * d],
            inv2: vec![0.0; rows],
        }
    }
}

/// Everything a backward pass over one sequence needs.
#[derive(Clone, Debug)]
pub(crate) struct Tape {
    pub rows: usize,
    pub block_len: usize,
    pub inputs: Vec<Vec<f64>>,
    pub layers: Vec<LayerTape>,
    pub kv: KvCache,
    pub hidden: Vec<f64>,
    /// Per output position: amplitude logits and phase pre-activations.
    pub logits: Vec<f64>,
    pub phase_pre: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub phases: Vec<f64>,
}

impl Tape {
    pub fn outputs(&self) -> usize {
        self.rows - self.block_len + 1
    }
}

struct RowRec<'a> {
    tape: &'a mut LayerTape,
    row: usize,
    stride: usize,
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], out: &mut [f64], xhat: &mut [f64]) -> f64 {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * inv;
        out[i] = gamma[i] * xhat[i] + beta[i];
    }
    inv
}

/// `grad_in = inv · (dx̂ − mean(dx̂) − x̂ · mean(dx̂ ⊙ x̂))` with dx̂ = dout ⊙ γ.
fn layer_norm_back(
    gamma: &[f64],
    xhat: &[f64],
    inv: f64,
    dout: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
    din: &mut [f64],
) {
    let d = dout.len();
    let mut mean_dx = 0.0;
    let mut mean_dxx = 0.0;
    for i in 0..d {
        dgamma[i] += dout[i] * xhat[i];
        dbeta[i] += dout[i];
        let dxh = dout[i] * gamma[i];
        mean_dx += dxh;
        mean_dxx += dxh * xhat[i];
    }
    mean_dx /= d as f64;
    mean_dxx /= d as f64;
    for i in 0..d {
        let dxh = dout[i] * gamma[i];
        din[i] = inv * (dxh - mean_dx - xhat[i] * mean_dxx);
    }
}

fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Log-softmax with the probability floor applied.
pub(crate) fn log_softmax_floor(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - lse).max(LOG_FLOOR);
    }
}

impl TqsModel {
    #[inline]
    fn lin(&self, p: &Linear, x: &[f64], y: &mut [f64]) {
        let data = self.params.data();
        let w = &data[p.w..p.w + p.n_in * p.n_out];
        y[..p.n_out].copy_from_slice(&data[p.b..p.b + p.n_out]);
        for (i, &xi) in x[..p.n_in].iter().enumerate() {
            let row = &w[i * p.n_out..(i + 1) * p.n_out];
            for (yo, wo) in y[..p.n_out].iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
    }

    fn lin_back(&self, p: &Linear, x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        for (i, &xi) in x[..p.n_in].iter().enumerate() {
            let g = &mut grad[p.w + i * p.n_out..p.w + (i + 1) * p.n_out];
            for (go, d) in g.iter_mut().zip(dy) {
                *go += xi * d;
            }
        }
        for (go, d) in grad[p.b..p.b + p.n_out].iter_mut().zip(dy) {
            *go += d;
        }
        if let Some(dx) = dx {
            let w = &self.params.data()[p.w..p.w + p.n_in * p.n_out];
            for (i, dxi) in dx[..p.n_in].iter_mut().enumerate() {
                let row = &w[i * p.n_out..(i + 1) * p.n_out];
                *dxi += row.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    fn norm_params(&self, n: &Norm) -> (&[f64], &[f64]) {
        let d = self.config.d_model;
        let data = self.params.data();
        (&data[n.g..n.g + d], &data[n.b..n.b + d])
    }

    fn embed_row(&self, input: &[f64], position: TokenPosition, out: &mut [f64]) -> Result<()> {
        let d = self.config.d_model;
        self.lin(&self.layout.embed, input, out);
        match position {
            TokenPosition::Slot(k) => {
                if k >= self.config.n_slots() {
                    return Err(Error::ContextOverflow {
                        position: k,
                        max: self.config.n_slots(),
                    });
                }
                let slot = &self.params.data()[self.layout.slots + k * d..self.layout.slots + (k + 1) * d];
                for (o, s) in out.iter_mut().zip(slot) {
                    *o += s;
                }
            }
            TokenPosition::Site(site) => {
                if site >= self.config.max_context {
                    return Err(Error::ContextOverflow {
                        position: site,
                        max: self.config.max_context,
                    });
                }
                let mut pe = vec![0.0; d];
                write_sinusoidal(site, &mut pe);
                for (o, s) in out.iter_mut().zip(&pe) {
                    *o += s;
                }
            }
        }
        Ok(())
    }

    fn project_kv(&self, lay: &LayerLayout, x: &[f64], q: &mut [f64], kv: &mut LayerKv) {
        let d = self.config.d_model;
        let mut tmp = vec![0.0; d];
        self.lin(&lay.q, x, q);
        self.lin(&lay.k, x, &mut tmp);
        kv.k.extend_from_slice(&tmp);
        self.lin(&lay.v, x, &mut tmp);
        kv.v.extend_from_slice(&tmp);
    }

    /// Attention over the first `n_keys` cached rows, then the residual,
    /// normalization and feed-forward parts of the block.
    #[allow(clippy::too_many_arguments)]
    fn attend_ffn(
        &self,
        lay: &LayerLayout,
        x: &[f64],
        q: &[f64],
        kv: &LayerKv,
        n_keys: usize,
        out: &mut [f64],
        mut rec: Option<RowRec<'_>>,
    ) {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = vec![0.0; d];
        let mut probs = vec![0.0; n_keys];
        for h in 0..heads {
            let qh = &q[h * dh..(h + 1) * dh];
            let mut mx = f64::NEG_INFINITY;
            for (j, p) in probs.iter_mut().enumerate() {
                let kj = &kv.k[j * d + h * dh..j * d + (h + 1) * dh];
                let s = qh.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                *p = s;
                mx = mx.max(s);
            }
            let mut sum = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - mx).exp();
                sum += *p;
            }
            let ch = &mut ctx[h * dh..(h + 1) * dh];
            for (j, p) in probs.iter_mut().enumerate() {
                *p /= sum;
                let vj = &kv.v[j * d + h * dh..j * d + (h + 1) * dh];
                for (c, v) in ch.iter_mut().zip(vj) {
                    *c += *p * v;
                }
            }
            if let Some(r) = rec.as_mut() {
                let base = (r.row * heads + h) * r.stride;
                r.tape.probs[base..base + n_keys].copy_from_slice(&probs);
            }
        }

        let mut y = vec![0.0; d];
        self.lin(&lay.o, &ctx, &mut y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi;
        }
        let (g1, b1) = self.norm_params(&lay.ln1);
        let mut x1 = vec![0.0; d];
        let mut xhat1 = vec![0.0; d];
        let inv1 = layer_norm(&y, g1, b1, &mut x1, &mut xhat1);

        let ff = self.config.d_ff();
        let mut f = vec![0.0; ff];
        self.lin(&lay.ff1, &x1, &mut f);
        let g: Vec<f64> = f.iter().map(|&v| v.max(0.0)).collect();
        let mut y2 = vec![0.0; d];
        self.lin(&lay.ff2, &g, &mut y2);
        for (yi, xi) in y2.iter_mut().zip(&x1) {
            *yi += xi;
        }
        let (g2, b2) = self.norm_params(&lay.ln2);
        let mut xhat2 = vec![0.0; d];
        let inv2 = layer_norm(&y2, g2, b2, out, &mut xhat2);

        if let Some(r) = rec {
            let t = r.tape;
            let row = r.row;
            t.x_in[row * d..(row + 1) * d].copy_from_slice(x);
            t.q[row * d..(row + 1) * d].copy_from_slice(q);
            t.ctx[row * d..(row + 1) * d].copy_from_slice(&ctx);
            t.xhat1[row * d..(row + 1) * d].copy_from_slice(&xhat1);
            t.inv1[row] = inv1;
            t.x1[row * d..(row + 1) * d].copy_from_slice(&x1);
            t.ff_pre[row * ff..(row + 1) * ff].copy_from_slice(&f);
            t.xhat2[row * d..(row + 1) * d].copy_from_slice(&xhat2);
            t.inv2[row] = inv2;
        }
    }

    /// Runs the coupling block (which attends within itself only) and returns
    /// the final hidden state of its last row.
    pub(crate) fn run_block(
        &self,
        inputs: &[Vec<f64>],
        kv: &mut KvCache,
        mut tape: Option<&mut Tape>,
    ) -> Result<Vec<f64>> {
        let d = self.config.d_model;
        let nb = inputs.len();
        debug_assert_eq!(kv.rows, 0);
        let mut xs = vec![0.0; nb * d];
        for (r, input) in inputs.iter().enumerate() {
            self.embed_row(input, TokenPosition::Slot(r), &mut xs[r * d..(r + 1) * d])?;
        }
        let mut qs = vec![0.0; nb * d];
        let mut outs = vec![0.0; nb * d];
        for (l, lay) in self.layout.layers.iter().enumerate() {
            let layer_kv = &mut kv.layers[l];
            for r in 0..nb {
                self.project_kv(lay, &xs[r * d..(r + 1) * d], &mut qs[r * d..(r + 1) * d], layer_kv);
            }
            for r in 0..nb {
                let rec = tape.as_deref_mut().map(|t| RowRec {
                    stride: t.rows,
                    tape: &mut t.layers[l],
                    row: r,
                });
                self.attend_ffn(
                    lay,
                    &xs[r * d..(r + 1) * d],
                    &qs[r * d..(r + 1) * d],
                    &kv.layers[l],
                    nb,
                    &mut outs[r * d..(r + 1) * d],
                    rec,
                );
            }
            if !finite(&outs) {
                return Err(Error::NumericFailure {
                    layer: Some(l),
                    what: "coupling-block activations",
                });
            }
            core::mem::swap(&mut xs, &mut outs);
        }
        kv.rows = nb;
        if let Some(t) = tape {
            t.hidden[..nb * d].copy_from_slice(&xs);
        }
        Ok(xs[(nb - 1) * d..].to_vec())
    }

    /// Appends one spin token (causally attending to everything before it)
    /// and returns its final hidden state.
    pub(crate) fn run_spin(
        &self,
        site: usize,
        value: u8,
        kv: &mut KvCache,
        mut tape: Option<&mut Tape>,
    ) -> Result<Vec<f64>> {
        let d = self.config.d_model;
        let row = kv.rows;
        let mut x = vec![0.0; d];
        self.embed_row(&spin_input(&self.config, value), TokenPosition::Site(site), &mut x)?;
        let mut q = vec![0.0; d];
        let mut out = vec![0.0; d];
        for (l, lay) in self.layout.layers.iter().enumerate() {
            self.project_kv(lay, &x, &mut q, &mut kv.layers[l]);
            let rec = tape.as_deref_mut().map(|t| RowRec {
                stride: t.rows,
                tape: &mut t.layers[l],
                row,
            });
            self.attend_ffn(lay, &x, &q, &kv.layers[l], row + 1, &mut out, rec);
            if !finite(&out) {
                return Err(Error::NumericFailure {
                    layer: Some(l),
                    what: "spin-token activations",
                });
            }
            core::mem::swap(&mut x, &mut out);
        }
        kv.rows += 1;
        if let Some(t) = tape {
            t.hidden[row * d..(row + 1) * d].copy_from_slice(&x);
        }
        Ok(x)
    }

    /// Amplitude head (log-softmax, floored) and phase head (π·softsign).
    pub(crate) fn heads(
        &self,
        hidden: &[f64],
        log_probs: &mut [f64],
        phases: &mut [f64],
        logits: &mut [f64],
        phase_pre: &mut [f64],
    ) -> Result<()> {
        self.lin(&self.layout.amp, hidden, logits);
        log_softmax_floor(logits, log_probs);
        self.lin(&self.layout.phase, hidden, phase_pre);
        for (p, u) in phases.iter_mut().zip(phase_pre.iter()) {
            *p = PI * softsign(*u);
        }
        if !finite(logits) || !finite(phase_pre) {
            return Err(Error::NumericFailure {
                layer: None,
                what: "output heads",
            });
        }
        Ok(())
    }

    pub(crate) fn head_row(&self, hidden: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let dl = self.config.local_dim;
        let mut lp = vec![0.0; dl];
        let mut ph = vec![0.0; dl];
        let mut logits = vec![0.0; dl];
        let mut pre = vec![0.0; dl];
        self.heads(hidden, &mut lp, &mut ph, &mut logits, &mut pre)?;
        Ok((lp, ph))
    }

    /// Forward pass over `j` and a spin prefix, recording everything needed
    /// for backpropagation.
    pub(crate) fn taped_forward(&self, j: &CouplingVector, prefix: &[u8]) -> Result<Tape> {
        let inputs = block_inputs(&self.config, j)?;
        if prefix.len() > j.n {
            return Err(Error::Shape {
                what: "spin prefix",
                expected: j.n,
                found: prefix.len(),
            });
        }
        self.taped_forward_inputs(inputs, prefix)
    }

    pub(crate) fn taped_forward_seq(&self, seq: &TokenSequence) -> Result<Tape> {
        if seq.block_len != self.config.n_slots() {
            return Err(Error::Shape {
                what: "coupling block",
                expected: self.config.n_slots(),
                found: seq.block_len,
            });
        }
        let mut prefix = Vec::with_capacity(seq.spin_count());
        for (i, t) in seq.tokens.iter().enumerate() {
            if t.input.len() != self.config.input_width() {
                return Err(Error::Shape {
                    what: "token width",
                    expected: self.config.input_width(),
                    found: t.input.len(),
                });
            }
            match t.position {
                TokenPosition::Slot(k) if i < seq.block_len && k == i => {}
                TokenPosition::Site(site) if i >= seq.block_len && site == i - seq.block_len => {
                    let v = t.input[..self.config.local_dim]
                        .iter()
                        .position(|&x| x == 1.0)
                        .ok_or(Error::Config("spin token is not one-hot".into()))?;
                    prefix.push(v as u8);
                }
                _ => return Err(Error::Config("coupling tokens must precede spin tokens".into())),
            }
        }
        let inputs = seq.tokens[..seq.block_len].iter().map(|t| t.input.clone()).collect();
        self.taped_forward_inputs(inputs, &prefix)
    }

    fn taped_forward_inputs(&self, inputs: Vec<Vec<f64>>, prefix: &[u8]) -> Result<Tape> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let nb = inputs.len();
        let rows = nb + prefix.len();
        let outputs = prefix.len() + 1;
        let dl = cfg.local_dim;
        let mut tape = Tape {
            rows,
            block_len: nb,
            inputs: Vec::with_capacity(rows),
            layers: (0..cfg.n_layers)
                .map(|_| LayerTape::new(rows, d, cfg.n_heads, cfg.d_ff()))
                .collect(),
            kv: KvCache::new(cfg.n_layers),
            hidden: vec![0.0; rows * d],
            logits: vec![0.0; outputs * dl],
            phase_pre: vec![0.0; outputs * dl],
            log_probs: vec![0.0; outputs * dl],
            phases: vec![0.0; outputs * dl],
        };
        let mut kv = KvCache::new(cfg.n_layers);
        self.run_block(&inputs, &mut kv, Some(&mut tape))?;
        tape.inputs = inputs;
        for (site, &v) in prefix.iter().enumerate() {
            self.run_spin(site, v, &mut kv, Some(&mut tape))?;
            tape.inputs.push(spin_input(cfg, v));
        }
        for t in 0..outputs {
            let row = nb - 1 + t;
            let hidden = tape.hidden[row * d..(row + 1) * d].to_vec();
            let r = t * dl..(t + 1) * dl;
            let (lp, rest) = (&mut tape.log_probs[r.clone()], &mut tape.phases[r.clone()]);
            self.heads(
                &hidden,
                lp,
                rest,
                &mut tape.logits[r.clone()],
                &mut tape.phase_pre[r],
            )?;
        }
        tape.kv = kv;
        Ok(tape)
    }

    /// Accumulates ∂loss/∂θ into `grad` given cotangents of the raw
    /// per-position log-probabilities and phases.
    pub(crate) fn backward(&self, tape: &Tape, d_lp: &[f64], d_ph: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let d = cfg.d_model;
        let dl = cfg.local_dim;
        let ff = cfg.d_ff();
        let heads = cfg.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let rows = tape.rows;
        let nb = tape.block_len;
        let mut dx = vec![0.0; rows * d];

        for t in 0..tape.outputs() {
            let row = nb - 1 + t;
            let hidden = &tape.hidden[row * d..(row + 1) * d];
            let logits = &tape.logits[t * dl..(t + 1) * dl];
            let lp = &tape.log_probs[t * dl..(t + 1) * dl];
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
            let dz: Vec<f64> = (0..dl)
                .map(|v| if lp[v] <= LOG_FLOOR { 0.0 } else { d_lp[t * dl + v] })
                .collect();
            let sum_dz: f64 = dz.iter().sum();
            let dlogit: Vec<f64> = (0..dl)
                .map(|v| dz[v] - (logits[v] - m).exp() / z * sum_dz)
                .collect();
            self.lin_back(&self.layout.amp, hidden, &dlogit, grad, Some(&mut dx[row * d..(row + 1) * d]));
            let du: Vec<f64> = (0..dl)
                .map(|v| {
                    let u = tape.phase_pre[t * dl + v];
                    let s = 1.0 + u.abs();
                    d_ph[t * dl + v] * PI / (s * s)
                })
                .collect();
            self.lin_back(&self.layout.phase, hidden, &du, grad, Some(&mut dx[row * d..(row + 1) * d]));
        }

        let mut dxin = vec![0.0; rows * d];
        let mut dctx = vec![0.0; rows * d];
        let mut dq = vec![0.0; rows * d];
        let mut dk = vec![0.0; rows * d];
        let mut dv = vec![0.0; rows * d];
        let mut tmp = vec![0.0; d];
        let mut dg = vec![0.0; ff];
        for (l, lay) in self.layout.layers.iter().enumerate().rev() {
            let lt = &tape.layers[l];
            let kv = &tape.kv.layers[l];
            dctx.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..rows {
                let dout = &dx[r * d..(r + 1) * d];
                let (g2, _) = self.norm_params(&lay.ln2);
                let mut dy2 = vec![0.0; d];
                {
                    let (dgam, dbet) = split_norm_grad(grad, &lay.ln2, d);
                    layer_norm_back(g2, &lt.xhat2[r * d..(r + 1) * d], lt.inv2[r], dout, dgam, dbet, &mut dy2);
                }
                let mut dx1 = dy2.clone();
                let f = &lt.ff_pre[r * ff..(r + 1) * ff];
                let g: Vec<f64> = f.iter().map(|&v| v.max(0.0)).collect();
                dg.iter_mut().for_each(|v| *v = 0.0);
                self.lin_back(&lay.ff2, &g, &dy2, grad, Some(&mut dg));
                let df: Vec<f64> = dg.iter().zip(f).map(|(a, &b)| if b > 0.0 { *a } else { 0.0 }).collect();
                self.lin_back(&lay.ff1, &lt.x1[r * d..(r + 1) * d], &df, grad, Some(&mut dx1));
                let (g1, _) = self.norm_params(&lay.ln1);
                {
                    let (dgam, dbet) = split_norm_grad(grad, &lay.ln1, d);
                    layer_norm_back(g1, &lt.xhat1[r * d..(r + 1) * d], lt.inv1[r], &dx1, dgam, dbet, &mut tmp);
                }
                dxin[r * d..(r + 1) * d].copy_from_slice(&tmp);
                self.lin_back(&lay.o, &lt.ctx[r * d..(r + 1) * d], &tmp, grad, Some(&mut dctx[r * d..(r + 1) * d]));
            }

            dq.iter_mut().for_each(|v| *v = 0.0);
            dk.iter_mut().for_each(|v| *v = 0.0);
            dv.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..rows {
                let n_keys = if r < nb { nb } else { r + 1 };
                for h in 0..heads {
                    let base = (r * heads + h) * rows;
                    let probs = &lt.probs[base..base + n_keys];
                    let dc = &dctx[r * d + h * dh..r * d + (h + 1) * dh];
                    let mut dp = vec![0.0; n_keys];
                    for j in 0..n_keys {
                        let vj = &kv.v[j * d + h * dh..j * d + (h + 1) * dh];
                        dp[j] = dc.iter().zip(vj).map(|(a, b)| a * b).sum();
                        let dvj = &mut dv[j * d + h * dh..j * d + (h + 1) * dh];
                        for (o, c) in dvj.iter_mut().zip(dc) {
                            *o += probs[j] * c;
                        }
                    }
                    let mean: f64 = probs.iter().zip(&dp).map(|(p, g)| p * g).sum();
                    let qh = &lt.q[r * d + h * dh..r * d + (h + 1) * dh];
                    for j in 0..n_keys {
                        let ds = probs[j] * (dp[j] - mean) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &kv.k[j * d + h * dh..j * d + (h + 1) * dh];
                        let dqh = &mut dq[r * d + h * dh..r * d + (h + 1) * dh];
                        for (o, k) in dqh.iter_mut().zip(kj) {
                            *o += ds * k;
                        }
                        let dkj = &mut dk[j * d + h * dh..j * d + (h + 1) * dh];
                        for (o, q) in dkj.iter_mut().zip(qh) {
                            *o += ds * q;
                        }
                    }
                }
            }
            for r in 0..rows {
                let x = &lt.x_in[r * d..(r + 1) * d];
                let dxr = &mut dxin[r * d..(r + 1) * d];
                self.lin_back(&lay.q, x, &dq[r * d..(r + 1) * d], grad, Some(&mut *dxr));
                self.lin_back(&lay.k, x, &dk[r * d..(r + 1) * d], grad, Some(&mut *dxr));
                self.lin_back(&lay.v, x, &dv[r * d..(r + 1) * d], grad, Some(dxr));
            }
            core::mem::swap(&mut dx, &mut dxin);
        }

        for r in 0..rows {
            let dxr = &dx[r * d..(r + 1) * d];
            self.lin_back(&self.layout.embed, &tape.inputs[r], dxr, grad, None);
            if r < nb {
                let slot = &mut grad[self.layout.slots + r * d..self.layout.slots + (r + 1) * d];
                for (o, g) in slot.iter_mut().zip(dxr) {
                    *o += g;
                }
            }
        }
    }
}

fn split_norm_grad<'a>(grad: &'a mut [f64], n: &Norm, d: usize) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(n.b, n.g + d);
    let (a, b) = grad[n.g..n.g + 2 * d].split_at_mut(d);
    (a, b)
}
