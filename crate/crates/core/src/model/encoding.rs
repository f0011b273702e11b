//! Input tokens and positional encodings.
//!
//! Coupling tokens carry one parameter value each in its own channel, the size
//! token carries ln n and an even-parity flag, and spin tokens are one-hot in
//! the first `d` channels. Couplings and the size token form the "coupling
//! block" and use learnable position slots; spins use sinusoidal encodings of
//! their site index.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::family::CouplingVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenPosition {
    /// Learnable slot index (coupling block).
    Slot(usize),
    /// Lattice site, 0-based (spins).
    Site(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub input: Vec<f64>,
    pub position: TokenPosition,
}

/// Coupling block followed by spin tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    /// Number of coupling-block tokens (couplings + size token).
    pub block_len: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spin_count(&self) -> usize {
        self.tokens.len() - self.block_len
    }
}

/// Token input vectors of the coupling block for `j`.
pub(crate) fn block_inputs(cfg: &ModelConfig, j: &CouplingVector) -> Result<Vec<Vec<f64>>> {
    if j.values.len() != cfg.n_couplings {
        return Err(Error::Shape {
            what: "coupling vector",
            expected: cfg.n_couplings,
            found: j.values.len(),
        });
    }
    if j.n == 0 {
        return Err(Error::InvalidSize {
            what: "model input",
            n: 0,
        });
    }
    let w = cfg.input_width();
    let d = cfg.local_dim;
    let mut out = Vec::with_capacity(cfg.n_slots());
    for (k, &value) in j.values.iter().enumerate() {
        let mut t = vec![0.0; w];
        t[d + k] = value;
        out.push(t);
    }
    let mut size = vec![0.0; w];
    size[d + cfg.n_couplings] = (j.n as f64).ln();
    size[d + cfg.n_couplings + 1] = if j.n % 2 == 0 { 1.0 } else { 0.0 };
    out.push(size);
    Ok(out)
}

pub(crate) fn spin_input(cfg: &ModelConfig, value: u8) -> Vec<f64> {
    let mut t = vec![0.0; cfg.input_width()];
    t[value as usize] = 1.0;
    t
}

/// Tokens for the couplings `j` followed by the spins of `prefix`.
pub fn encode_inputs(cfg: &ModelConfig, j: &CouplingVector, prefix: &[u8]) -> Result<TokenSequence> {
    if prefix.len() > j.n {
        return Err(Error::Shape {
            what: "spin prefix",
            expected: j.n,
            found: prefix.len(),
        });
    }
    if let Some(&v) = prefix.iter().find(|&&v| v as usize >= cfg.local_dim) {
        return Err(Error::Config(alloc::format!("spin value {v} outside local dimension")));
    }
    let mut tokens: Vec<Token> = block_inputs(cfg, j)?
        .into_iter()
        .enumerate()
        .map(|(k, input)| Token {
            input,
            position: TokenPosition::Slot(k),
        })
        .collect();
    let block_len = tokens.len();
    tokens.extend(prefix.iter().enumerate().map(|(site, &v)| Token {
        input: spin_input(cfg, v),
        position: TokenPosition::Site(site),
    }));
    Ok(TokenSequence { tokens, block_len })
}

/// Sinusoidal encoding of a 1D position: entry 2k is sin(p/10000^(2k/d)),
/// entry 2k+1 the matching cosine.
pub fn sinusoidal(position: usize, d_model: usize, max_context: usize) -> Result<Vec<f64>> {
    if position >= max_context {
        return Err(Error::ContextOverflow {
            position,
            max: max_context,
        });
    }
    let mut pe = vec![0.0; d_model];
    write_sinusoidal(position, &mut pe);
    Ok(pe)
}

pub(crate) fn write_sinusoidal(position: usize, out: &mut [f64]) {
    let d = out.len() as f64;
    let p = position as f64;
    for i in (0..out.len()).step_by(2) {
        let freq = 10000f64.powf(-(i as f64) / d);
        out[i] = (p * freq).sin();
        if i + 1 < out.len() {
            out[i + 1] = (p * freq).cos();
        }
    }
}
