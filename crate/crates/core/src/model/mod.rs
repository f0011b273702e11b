//! The transformer quantum state ψ(s | J).
//!
//! The network reads the couplings `J` and system size as a short block of
//! conditioning tokens, then the spins one token per site, and predicts each
//! spin's conditional distribution and phase from everything before it.

mod encoding;
mod engine;
mod params;

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

pub use encoding::{encode_inputs, sinusoidal, Token, TokenPosition, TokenSequence};
pub use engine::LOG_FLOOR;
pub use params::{ParamEntry, ParameterStore};

use crate::error::{Error, Result};
use crate::family::CouplingVector;
use crate::rng;
use crate::spin::SpinConfig;
use crate::wavefunction::LogPsi;
use engine::KvCache;
use params::{build_layout, layout_matches, Layout};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Local Hilbert-space dimension d.
    pub local_dim: usize,
    /// Number of coupling tokens (parameters drawn from a prior).
    pub n_couplings: usize,
    pub max_context: usize,
}

impl ModelConfig {
    /// 2 layers, width 16, 2 heads.
    pub fn small(n_couplings: usize) -> Self {
        Self {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            local_dim: 2,
            n_couplings,
            max_context: 128,
        }
    }

    /// 8 layers, width 32, 8 heads.
    pub fn large(n_couplings: usize) -> Self {
        Self {
            n_layers: 8,
            d_model: 32,
            n_heads: 8,
            ..Self::small(n_couplings)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be at least 1".into()));
        }
        if self.d_model < 4 {
            return Err(Error::Config("d_model must be at least 4".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config("d_model must be divisible by n_heads".into()));
        }
        if self.local_dim < 2 || self.local_dim > u8::MAX as usize {
            return Err(Error::Config("local_dim must be in 2..=255".into()));
        }
        if self.max_context == 0 {
            return Err(Error::Config("max_context must be positive".into()));
        }
        Ok(())
    }

    /// Coupling channels plus the size and parity channels.
    pub fn n_param_channels(&self) -> usize {
        self.n_couplings + 2
    }

    pub fn input_width(&self) -> usize {
        self.local_dim + self.n_param_channels()
    }

    /// Learnable position slots: one per coupling plus the size token.
    pub fn n_slots(&self) -> usize {
        self.n_couplings + 1
    }

    pub fn d_ff(&self) -> usize {
        self.d_model
    }
}

/// Constraint applied to the conditionals before use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mask {
    #[default]
    None,
    /// Zero total magnetization: no value may occur more than n/2 times.
    U1,
}

impl Mask {
    pub fn check(self, n: usize, local_dim: usize) -> Result<()> {
        match self {
            Mask::None => Ok(()),
            Mask::U1 if local_dim != 2 => Err(Error::Config("U(1) mask requires spin-½".into())),
            Mask::U1 if n % 2 != 0 => Err(Error::InvalidSize {
                what: "U(1) mask (odd n)",
                n,
            }),
            Mask::U1 => Ok(()),
        }
    }

    /// Whether value `v` may follow a prefix with the given value counts.
    pub fn allows(self, counts: &[usize], n: usize, v: usize) -> bool {
        match self {
            Mask::None => true,
            Mask::U1 => counts[v] < n / 2,
        }
    }

    /// Renormalizes `lp` over the allowed values in place; forbidden values
    /// get −∞.
    pub fn apply(self, counts: &[usize], n: usize, lp: &mut [f64]) {
        if self == Mask::None {
            return;
        }
        let allowed: Vec<bool> = (0..lp.len()).map(|v| self.allows(counts, n, v)).collect();
        if allowed.iter().all(|&a| a) {
            return;
        }
        let lse = logsumexp(lp.iter().zip(&allowed).filter(|(_, &a)| a).map(|(x, _)| *x));
        for (x, a) in lp.iter_mut().zip(&allowed) {
            *x = if *a { *x - lse } else { f64::NEG_INFINITY };
        }
    }

    /// Pulls a cotangent on masked log-probabilities back to raw ones.
    fn pull_back(self, counts: &[usize], n: usize, raw: &[f64], d_masked: &mut [f64]) {
        if self == Mask::None {
            return;
        }
        let allowed: Vec<bool> = (0..raw.len()).map(|v| self.allows(counts, n, v)).collect();
        if allowed.iter().all(|&a| a) {
            return;
        }
        let lse = logsumexp(raw.iter().zip(&allowed).filter(|(_, &a)| a).map(|(x, _)| *x));
        let total: f64 = d_masked.iter().zip(&allowed).filter(|(_, &a)| a).map(|(g, _)| g).sum();
        for v in 0..raw.len() {
            d_masked[v] = if allowed[v] {
                d_masked[v] - (raw[v] - lse).exp() * total
            } else {
                0.0
            };
        }
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-position conditional log-probabilities and phases, `[position][value]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub local_dim: usize,
    pub cond_log_probs: Vec<f64>,
    pub cond_phases: Vec<f64>,
}

impl ModelOutput {
    pub fn positions(&self) -> usize {
        self.cond_log_probs.len() / self.local_dim
    }

    pub fn log_probs(&self, t: usize) -> &[f64] {
        &self.cond_log_probs[t * self.local_dim..(t + 1) * self.local_dim]
    }

    pub fn phases(&self, t: usize) -> &[f64] {
        &self.cond_phases[t * self.local_dim..(t + 1) * self.local_dim]
    }
}

/// ∂loss/∂(outputs), same layout as [`ModelOutput`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputCotangent {
    pub d_log_probs: Vec<f64>,
    pub d_phases: Vec<f64>,
}

impl OutputCotangent {
    pub fn zeros_like(out: &ModelOutput) -> Self {
        Self {
            d_log_probs: vec![0.0; out.cond_log_probs.len()],
            d_phases: vec![0.0; out.cond_phases.len()],
        }
    }
}

/// Incremental autoregressive evaluation state for one partial string.
#[derive(Clone, Debug)]
pub struct DecoderState {
    kv: KvCache,
    n: usize,
    mask: Mask,
    prefix: Vec<u8>,
    counts: Vec<usize>,
    raw_log_probs: Vec<f64>,
    log_probs: Vec<f64>,
    phases: Vec<f64>,
}

impl DecoderState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prefix(&self) -> &[u8] {
        &self.prefix
    }

    pub fn is_complete(&self) -> bool {
        self.prefix.len() == self.n
    }

    /// Masked conditional log-probabilities of the next spin.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
}

#[derive(Clone, Debug)]
pub struct TqsModel {
    config: ModelConfig,
    layout: Layout,
    params: ParameterStore,
}

impl TqsModel {
    /// Freshly initialized model: affine maps uniform in ±fan_in^(−½),
    /// position slots normal(0, 0.02), layer norms at identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (mut params, layout) = build_layout(&config);
        let mut rng = rng::stream(seed, &[0x1417]);
        let slot_dist = Normal::new(0.0, 0.02).expect("valid normal");
        let entries = params.entries().to_vec();
        for e in &entries {
            let values = params.get_mut(&e.name).expect("entry exists");
            if e.name == "pos.slots" {
                for v in values.iter_mut() {
                    *v = slot_dist.sample(&mut rng);
                }
            } else if e.name.contains(".ln") {
                let fill = if e.name.ends_with(".weight") { 1.0 } else { 0.0 };
                values.iter_mut().for_each(|v| *v = fill);
            } else {
                let fan_in = if e.shape.len() == 2 {
                    e.shape[0]
                } else {
                    let w = alloc::format!("{}.weight", e.name.trim_end_matches(".bias"));
                    entries.iter().find(|x| x.name == w).map_or(1, |x| x.shape[0])
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in values.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Wraps an existing parameter store, checking its layout.
    pub fn from_parts(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        let layout = layout_matches(&config, &params)
            .ok_or_else(|| Error::Config("parameter arrays do not match the model configuration".into()))?;
        if !params.all_finite() {
            return Err(Error::NumericFailure {
                layer: None,
                what: "non-finite parameters",
            });
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterStore {
        self.params
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidSize { what: "system", n });
        }
        if n > self.config.max_context {
            return Err(Error::ContextOverflow {
                position: n - 1,
                max: self.config.max_context,
            });
        }
        Ok(())
    }

    fn output_of(&self, tape: &engine::Tape) -> ModelOutput {
        ModelOutput {
            local_dim: self.config.local_dim,
            cond_log_probs: tape.log_probs.clone(),
            cond_phases: tape.phases.clone(),
        }
    }

    /// Runs the network over a token sequence. Output position t is the
    /// distribution of spin t+1 given the couplings and spins 1..=t.
    pub fn forward(&self, seq: &TokenSequence) -> Result<ModelOutput> {
        let tape = self.taped_forward_seq(seq)?;
        Ok(self.output_of(&tape))
    }

    /// [`forward`](Self::forward) on `encode_inputs(j, prefix)`.
    pub fn forward_prefix(&self, j: &CouplingVector, prefix: &[u8]) -> Result<ModelOutput> {
        let tape = self.taped_forward(j, prefix)?;
        Ok(self.output_of(&tape))
    }

    /// Next-spin conditional log-probabilities and phases after `prefix`.
    pub fn conditionals(&self, j: &CouplingVector, prefix: &[u8], mask: Mask) -> Result<(Vec<f64>, Vec<f64>)> {
        if prefix.len() >= j.n {
            return Err(Error::Shape {
                what: "conditional prefix",
                expected: j.n - 1,
                found: prefix.len(),
            });
        }
        let mut st = self.start(j, mask)?;
        for &v in prefix {
            self.advance(&mut st, v)?;
        }
        Ok((st.log_probs, st.phases))
    }

    /// Begins incremental decoding at the couplings `j`.
    pub fn start(&self, j: &CouplingVector, mask: Mask) -> Result<DecoderState> {
        self.check_n(j.n)?;
        mask.check(j.n, self.config.local_dim)?;
        let inputs = encoding::block_inputs(&self.config, j)?;
        let mut kv = KvCache::new(self.config.n_layers);
        let hidden = self.run_block(&inputs, &mut kv, None)?;
        let (raw, phases) = self.head_row(&hidden)?;
        let counts = vec![0; self.config.local_dim];
        let mut log_probs = raw.clone();
        mask.apply(&counts, j.n, &mut log_probs);
        Ok(DecoderState {
            kv,
            n: j.n,
            mask,
            prefix: Vec::with_capacity(j.n),
            counts,
            raw_log_probs: raw,
            log_probs,
            phases,
        })
    }

    /// Appends spin `v` and refreshes the next conditional.
    pub fn advance(&self, st: &mut DecoderState, v: u8) -> Result<()> {
        if st.is_complete() {
            return Err(Error::Shape {
                what: "decoder prefix",
                expected: st.n,
                found: st.n + 1,
            });
        }
        if v as usize >= self.config.local_dim {
            return Err(Error::Config(alloc::format!("spin value {v} outside local dimension")));
        }
        let site = st.prefix.len();
        st.prefix.push(v);
        st.counts[v as usize] += 1;
        if st.is_complete() {
            st.raw_log_probs.clear();
            st.log_probs.clear();
            st.phases.clear();
            return Ok(());
        }
        let hidden = self.run_spin(site, v, &mut st.kv, None)?;
        let (raw, phases) = self.head_row(&hidden)?;
        st.log_probs.clone_from(&raw);
        st.mask.apply(&st.counts, st.n, &mut st.log_probs);
        st.raw_log_probs = raw;
        st.phases = phases;
        Ok(())
    }

    /// log ψ(s | J): half the summed conditional log-probabilities and the
    /// summed conditional phases.
    pub fn log_psi(&self, j: &CouplingVector, s: &SpinConfig, mask: Mask) -> Result<LogPsi> {
        Ok(self.log_psi_batch(j, core::slice::from_ref(s), mask)?[0])
    }

    /// log ψ for many configurations, sharing work between common prefixes.
    pub fn log_psi_batch(&self, j: &CouplingVector, configs: &[SpinConfig], mask: Mask) -> Result<Vec<LogPsi>> {
        let n = j.n;
        for c in configs {
            if c.len() != n {
                return Err(Error::Shape {
                    what: "spin configuration",
                    expected: n,
                    found: c.len(),
                });
            }
        }
        if configs.is_empty() {
            return Ok(Vec::new());
        }
        let mut order: Vec<usize> = (0..configs.len()).collect();
        order.sort_by(|&a, &b| configs[a].cmp(&configs[b]));

        struct Frame {
            lp: Vec<f64>,
            ph: Vec<f64>,
            cum_lp: f64,
            cum_ph: f64,
            counts: Vec<usize>,
        }
        let root = self.start(j, mask)?;
        let nb = root.kv.rows;
        let d = self.config.d_model;
        let mut kv = root.kv;
        let mut frames = vec![Frame {
            lp: root.log_probs,
            ph: root.phases,
            cum_lp: 0.0,
            cum_ph: 0.0,
            counts: root.counts,
        }];
        let mut out = vec![
            LogPsi {
                log_amp: 0.0,
                phase: 0.0
            };
            configs.len()
        ];
        let mut prev: Option<&SpinConfig> = None;
        for &idx in &order {
            let c = configs[idx].values();
            let keep = prev.map_or(0, |p| p.common_prefix(&configs[idx])).min(n - 1);
            frames.truncate(keep + 1);
            kv.truncate(nb + keep, d);
            for k in keep..n - 1 {
                let f = &frames[k];
                let v = c[k] as usize;
                let cum_lp = f.cum_lp + f.lp[v];
                let cum_ph = f.cum_ph + f.ph[v];
                let mut counts = f.counts.clone();
                counts[v] += 1;
                let hidden = self.run_spin(k, c[k], &mut kv, None)?;
                let (mut lp, ph) = self.head_row(&hidden)?;
                mask.apply(&counts, n, &mut lp);
                frames.push(Frame {
                    lp,
                    ph,
                    cum_lp,
                    cum_ph,
                    counts,
                });
            }
            let last = &frames[n - 1];
            let v = c[n - 1] as usize;
            out[idx] = LogPsi {
                log_amp: 0.5 * (last.cum_lp + last.lp[v]),
                phase: last.cum_ph + last.ph[v],
            };
            prev = Some(&configs[idx]);
        }
        Ok(out)
    }

    /// ∂loss/∂θ for a loss defined on the outputs of several sequences.
    ///
    /// `loss` receives the outputs and returns the loss value together with
    /// its cotangent for every output.
    pub fn gradient<F>(&self, seqs: &[TokenSequence], loss: F) -> Result<(f64, ParameterStore)>
    where
        F: FnOnce(&[ModelOutput]) -> Result<(f64, Vec<OutputCotangent>)>,
    {
        let tapes = seqs
            .iter()
            .map(|s| self.taped_forward_seq(s))
            .collect::<Result<Vec<_>>>()?;
        let outputs: Vec<ModelOutput> = tapes.iter().map(|t| self.output_of(t)).collect();
        let (value, cots) = loss(&outputs)?;
        if cots.len() != tapes.len() {
            return Err(Error::Shape {
                what: "output cotangents",
                expected: tapes.len(),
                found: cots.len(),
            });
        }
        let mut grad = self.params.zeros_like();
        for (tape, cot) in tapes.iter().zip(&cots) {
            let len = tape.log_probs.len();
            if cot.d_log_probs.len() != len || cot.d_phases.len() != len {
                return Err(Error::Shape {
                    what: "output cotangent",
                    expected: len,
                    found: cot.d_log_probs.len(),
                });
            }
            self.backward(tape, &cot.d_log_probs, &cot.d_phases, grad.data_mut());
        }
        if !grad.all_finite() {
            return Err(Error::NumericFailure {
                layer: None,
                what: "gradient",
            });
        }
        Ok((value, grad))
    }

    /// Accumulates ∂/∂θ of Σₖ (a_k·log|ψ(s_k)| + b_k·φ(s_k)) into `grad`,
    /// where `weights[k] = (a_k, b_k)`.
    pub fn accumulate_log_psi_gradient(
        &self,
        j: &CouplingVector,
        configs: &[SpinConfig],
        weights: &[(f64, f64)],
        mask: Mask,
        grad: &mut ParameterStore,
    ) -> Result<()> {
        if configs.len() != weights.len() {
            return Err(Error::Shape {
                what: "gradient weights",
                expected: configs.len(),
                found: weights.len(),
            });
        }
        if !grad.same_layout(&self.params) {
            return Err(Error::Config("gradient store layout mismatch".into()));
        }
        self.check_n(j.n)?;
        mask.check(j.n, self.config.local_dim)?;
        let dl = self.config.local_dim;
        for (c, &(a, b)) in configs.iter().zip(weights) {
            if c.len() != j.n {
                return Err(Error::Shape {
                    what: "spin configuration",
                    expected: j.n,
                    found: c.len(),
                });
            }
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let s = c.values();
            let tape = self.taped_forward(j, &s[..j.n - 1])?;
            let mut d_lp = vec![0.0; j.n * dl];
            let mut d_ph = vec![0.0; j.n * dl];
            let mut counts = vec![0; dl];
            for (t, &v) in s.iter().enumerate() {
                let r = t * dl..(t + 1) * dl;
                d_lp[t * dl + v as usize] = 0.5 * a;
                d_ph[t * dl + v as usize] = b;
                mask.pull_back(&counts, j.n, &tape.log_probs[r.clone()], &mut d_lp[r]);
                counts[v as usize] += 1;
            }
            self.backward(&tape, &d_lp, &d_ph, grad.data_mut());
        }
        if !grad.all_finite() {
            return Err(Error::NumericFailure {
                layer: None,
                what: "gradient",
            });
        }
        Ok(())
    }
}

/// A model bound to one coupling vector and mask, usable wherever a
/// [`WaveFunction`](crate::wavefunction::WaveFunction) is expected.
#[derive(Clone, Copy, Debug)]
pub struct BoundModel<'a> {
    pub model: &'a TqsModel,
    pub couplings: &'a CouplingVector,
    pub mask: Mask,
}

impl crate::wavefunction::WaveFunction for BoundModel<'_> {
    fn n(&self) -> usize {
        self.couplings.n
    }

    fn log_psi_batch(&self, configs: &[SpinConfig]) -> Result<Vec<LogPsi>> {
        self.model.log_psi_batch(self.couplings, configs, self.mask)
    }
}
