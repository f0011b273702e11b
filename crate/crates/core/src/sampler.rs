//! Autoregressive sampling that tracks unique strings with multiplicities.
//!
//! Instead of drawing `N_batch` strings one by one, partial strings carry a
//! count which is split multinomially among the children at each site. Work
//! therefore scales with the number of distinct strings, not with `N_batch`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::family::CouplingVector;
use crate::model::{BoundModel, DecoderState};
use crate::rng::{self, Rng};
use crate::spin::SpinConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_batch: u64,
    pub n_unique: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(n_batch: u64, n_unique: usize, seed: u64) -> Result<Self> {
        let c = Self {
            n_batch,
            n_unique,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_unique < 1 {
            return Err(Error::Config("n_unique must be at least 1".into()));
        }
        if (self.n_unique as u64) > self.n_batch {
            return Err(Error::Config("n_unique must not exceed n_batch".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Distinct configurations with multiplicities summing to `n_batch`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniqueBatch {
    entries: Vec<(SpinConfig, u64)>,
    n_batch: u64,
    pub couplings: CouplingVector,
}

impl UniqueBatch {
    /// Merges duplicate configurations and drops zero counts. Entries end up
    /// sorted by configuration.
    pub fn from_counts(
        couplings: CouplingVector,
        counts: impl IntoIterator<Item = (SpinConfig, u64)>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<SpinConfig, u64> = BTreeMap::new();
        for (s, c) in counts {
            if s.len() != couplings.n {
                return Err(Error::Shape {
                    what: "batch configuration",
                    expected: couplings.n,
                    found: s.len(),
                });
            }
            if c > 0 {
                *merged.entry(s).or_insert(0) += c;
            }
        }
        let entries: Vec<_> = merged.into_iter().collect();
        let n_batch = entries.iter().map(|e| e.1).sum();
        if n_batch == 0 {
            return Err(Error::Empty("sample batch"));
        }
        Ok(Self {
            entries,
            n_batch,
            couplings,
        })
    }

    pub fn entries(&self) -> &[(SpinConfig, u64)] {
        &self.entries
    }

    pub fn configs(&self) -> Vec<SpinConfig> {
        self.entries.iter().map(|e| e.0.clone()).collect()
    }

    pub fn n_batch(&self) -> u64 {
        self.n_batch
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// count / n_batch per entry.
    pub fn weights(&self) -> Vec<f64> {
        let total = self.n_batch as f64;
        self.entries.iter().map(|e| e.1 as f64 / total).collect()
    }
}

/// Σₖ (countₖ / N_batch)·f(sₖ).
pub fn expectation<F>(batch: &UniqueBatch, mut f: F) -> Complex64
where
    F: FnMut(&SpinConfig) -> Complex64,
{
    let total = batch.n_batch as f64;
    batch
        .entries
        .iter()
        .map(|(s, c)| f(s) * (*c as f64 / total))
        .sum()
}

/// Anything with autoregressive conditionals over a fixed number of sites.
pub trait Autoregressive {
    type State: Clone;

    fn n(&self) -> usize;
    fn local_dim(&self) -> usize;
    fn root(&self) -> Result<Self::State>;
    /// Conditional log-probabilities of the next value.
    fn next_log_probs<'a>(&self, state: &'a Self::State) -> &'a [f64];
    fn extend(&self, state: &mut Self::State, value: u8) -> Result<()>;
}

impl Autoregressive for BoundModel<'_> {
    type State = DecoderState;

    fn n(&self) -> usize {
        self.couplings.n
    }

    fn local_dim(&self) -> usize {
        self.model.config().local_dim
    }

    fn root(&self) -> Result<DecoderState> {
        self.model.start(self.couplings, self.mask)
    }

    fn next_log_probs<'a>(&self, state: &'a DecoderState) -> &'a [f64] {
        state.log_probs()
    }

    fn extend(&self, state: &mut DecoderState, value: u8) -> Result<()> {
        self.model.advance(state, value)
    }
}

fn probabilities(lp: &[f64]) -> Vec<f64> {
    let p: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
    let z: f64 = p.iter().sum();
    p.into_iter().map(|x| x / z).collect()
}

/// Splits `count` among the values by sequential binomial draws.
pub(crate) fn split_counts(rng: &mut Rng, count: u64, p: &[f64]) -> Vec<u64> {
    let mut out = alloc::vec![0; p.len()];
    let mut left = count;
    let mut mass = 1.0;
    for (v, &pv) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if v + 1 == p.len() {
            out[v] = left;
            break;
        }
        let q = if mass > 0.0 { (pv / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out[v] = k;
        left -= k;
        mass -= pv;
    }
    out
}

fn categorical(rng: &mut Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, &pv) in p.iter().enumerate() {
        acc += pv;
        if u < acc {
            return v;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Draws `cfg.n_batch` strings from `model`, keeping at most `cfg.n_unique`
/// partial strings.
///
/// Counts are split multinomially among children while the number of
/// partial strings stays within the cap. The first site at which splitting
/// would exceed it ends branching for good: from then on every partial
/// string passes its whole count to a single child drawn from its
/// conditional.
pub fn sample_unique<M: Autoregressive>(
    model: &M,
    couplings: &CouplingVector,
    cfg: &SamplerConfig,
) -> Result<UniqueBatch> {
    cfg.validate()?;
    let n = model.n();
    if n != couplings.n {
        return Err(Error::Shape {
            what: "sampler system size",
            expected: couplings.n,
            found: n,
        });
    }
    let mut partials: Vec<(M::State, Vec<u8>, u64)> = alloc::vec![(model.root()?, Vec::new(), cfg.n_batch)];
    let mut branching = true;
    for site in 0..n {
        let probs: Vec<Vec<f64>> = partials
            .iter()
            .map(|(st, _, _)| probabilities(model.next_log_probs(st)))
            .collect();
        let mut plan: Vec<Vec<u64>> = Vec::new();
        if branching {
            let mut rng = rng::stream(cfg.seed, &[site as u64, 0]);
            plan = partials
                .iter()
                .zip(&probs)
                .map(|((_, _, c), p)| split_counts(&mut rng, *c, p))
                .collect();
            let children: usize = plan.iter().map(|s| s.iter().filter(|&&k| k > 0).count()).sum();
            if children > cfg.n_unique {
                branching = false;
            }
        }
        if !branching {
            let mut rng = rng::stream(cfg.seed, &[site as u64, 1]);
            plan = partials
                .iter()
                .zip(&probs)
                .map(|((_, _, c), p)| {
                    let mut split = alloc::vec![0; p.len()];
                    split[categorical(&mut rng, p)] = *c;
                    split
                })
                .collect();
        }
        let mut next = Vec::with_capacity(partials.len());
        for ((st, prefix, _), split) in partials.into_iter().zip(plan) {
            let live: Vec<usize> = (0..split.len()).filter(|&v| split[v] > 0).collect();
            let last = live.len();
            let mut parent = Some(st);
            for (i, v) in live.into_iter().enumerate() {
                let mut child = if i + 1 == last {
                    parent.take().expect("parent state")
                } else {
                    parent.as_ref().expect("parent state").clone()
                };
                model.extend(&mut child, v as u8)?;
                let mut p = prefix.clone();
                p.push(v as u8);
                next.push((child, p, split[v]));
            }
        }
        partials = next;
    }
    UniqueBatch::from_counts(
        couplings.clone(),
        partials
            .into_iter()
            .map(|(_, s, c)| (SpinConfig::from_raw(s), c)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Fixed per-site distribution independent of the prefix.
    #[derive(Clone)]
    pub(crate) struct Iid {
        pub n: usize,
        pub p: Vec<f64>,
    }

    impl Autoregressive for Iid {
        type State = Vec<f64>;
        fn n(&self) -> usize {
            self.n
        }
        fn local_dim(&self) -> usize {
            self.p.len()
        }
        fn root(&self) -> Result<Vec<f64>> {
            Ok(self.p.iter().map(|x| x.ln()).collect())
        }
        fn next_log_probs<'a>(&self, s: &'a Vec<f64>) -> &'a [f64] {
            s
        }
        fn extend(&self, _: &mut Vec<f64>, _: u8) -> Result<()> {
            Ok(())
        }
    }

    fn j(n: usize) -> CouplingVector {
        CouplingVector {
            n,
            names: vec!["h"],
            values: vec![1.0],
        }
    }

    #[test]
    fn deterministic_distribution_gives_one_entry() {
        let m = Iid { n: 5, p: vec![1.0, 0.0] };
        let b = sample_unique(&m, &j(5), &SamplerConfig::new(1000, 10, 1).unwrap()).unwrap();
        assert_eq!(b.entries(), &[(SpinConfig::zeros(5), 1000)]);
    }

    #[test]
    fn uniform_two_sites() {
        let m = Iid { n: 2, p: vec![0.5, 0.5] };
        let b = sample_unique(&m, &j(2), &SamplerConfig::new(1_000_000, 4, 3).unwrap()).unwrap();
        assert_eq!(b.len(), 4);
        let sigma = (1e6f64 * 0.25 * 0.75).sqrt();
        for (_, c) in b.entries() {
            assert!((*c as f64 - 250_000.0).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn cap_is_respected_and_counts_conserved() {
        let m = Iid { n: 12, p: vec![0.5, 0.5] };
        for cap in [1, 7, 100] {
            let b = sample_unique(&m, &j(12), &SamplerConfig::new(100_000, cap, 9).unwrap()).unwrap();
            assert!(b.len() <= cap);
            assert_eq!(b.entries().iter().map(|e| e.1).sum::<u64>(), 100_000);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::new(10, 0, 0).is_err());
        assert!(SamplerConfig::new(10, 11, 0).is_err());
    }

    #[test]
    fn expectation_examples() {
        let b = UniqueBatch::from_counts(
            j(2),
            vec![(SpinConfig::parse("00").unwrap(), 3), (SpinConfig::parse("11").unwrap(), 1)],
        )
        .unwrap();
        assert_eq!(expectation(&b, |_| Complex64::new(1.0, 0.0)).re, 1.0);
        let m = expectation(&b, |s| Complex64::new(s.magnetization(), 0.0));
        assert_eq!(m.re, 0.5);
    }
}
