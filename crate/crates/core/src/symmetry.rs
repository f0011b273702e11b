//! Explicit symmetrization over small discrete groups and U(1) masking.
//!
//! For a group {Tᵏ} of order m the symmetrized state is
//! P̃(s) = (1/m)·Σₖ P(Tᵏs) and φ̃(s) = Arg Σₖ ψ(Tᵏs₀), with s₀ the orbit
//! member of smallest binary value. Only the ω = 1 sector is supported.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::family::CouplingVector;
use crate::model::{BoundModel, Mask, TqsModel};
use crate::rng;
use crate::sampler::{sample_unique, SamplerConfig, UniqueBatch};
use crate::spin::SpinConfig;
use crate::wavefunction::{LogPsi, WaveFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SymmetryKind {
    /// v ↦ d−1−v on every site.
    SpinFlip,
    /// Site i ↦ n−1−i.
    Reflection,
}

impl SymmetryKind {
    pub fn name(self) -> &'static str {
        match self {
            SymmetryKind::SpinFlip => "spin_flip",
            SymmetryKind::Reflection => "reflection",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "spin_flip" => Ok(SymmetryKind::SpinFlip),
            "reflection" => Ok(SymmetryKind::Reflection),
            other => Err(Error::Config(alloc::format!("unknown symmetry {other:?}"))),
        }
    }

    fn apply(self, s: &mut [u8], d: u8) {
        match self {
            SymmetryKind::SpinFlip => s.iter_mut().for_each(|v| *v = d - 1 - *v),
            SymmetryKind::Reflection => s.reverse(),
        }
    }
}

/// Abelian group generated by commuting involutions; element k applies the
/// generators whose bit is set in k.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymmetryGroup {
    generators: Vec<SymmetryKind>,
    local_dim: u8,
}

impl SymmetryGroup {
    pub fn trivial() -> Self {
        Self {
            generators: Vec::new(),
            local_dim: 2,
        }
    }

    pub fn new(mut generators: Vec<SymmetryKind>) -> Result<Self> {
        generators.sort();
        if generators.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("repeated symmetry generator".into()));
        }
        Ok(Self {
            generators,
            local_dim: 2,
        })
    }

    /// Like [`new`](Self::new) but for a sector with eigenvalue ω, which
    /// must be 1.
    pub fn with_sector(generators: Vec<SymmetryKind>, omega: Complex64) -> Result<Self> {
        if (omega - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::Config("only the ω = 1 symmetry sector is supported".into()));
        }
        Self::new(generators)
    }

    pub fn spin_flip() -> Self {
        Self::new(vec![SymmetryKind::SpinFlip]).expect("valid group")
    }

    pub fn reflection() -> Self {
        Self::new(vec![SymmetryKind::Reflection]).expect("valid group")
    }

    pub fn flip_reflection() -> Self {
        Self::new(vec![SymmetryKind::SpinFlip, SymmetryKind::Reflection]).expect("valid group")
    }

    pub fn generators(&self) -> &[SymmetryKind] {
        &self.generators
    }

    pub fn order(&self) -> usize {
        1 << self.generators.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.generators.is_empty()
    }

    /// Tᵏs for k = 0..m, duplicates kept.
    pub fn orbit(&self, s: &SpinConfig) -> Vec<SpinConfig> {
        (0..self.order())
            .map(|k| {
                let mut v = s.values().to_vec();
                for (b, g) in self.generators.iter().enumerate() {
                    if k >> b & 1 == 1 {
                        g.apply(&mut v, self.local_dim);
                    }
                }
                SpinConfig::from_raw(v)
            })
            .collect()
    }

    /// Orbit member with the smallest binary value (s₁ most significant).
    pub fn canonical_rep(&self, s: &SpinConfig) -> SpinConfig {
        self.orbit(s).into_iter().min().expect("orbit is nonempty")
    }
}

/// Values allowed after `prefix` so that neither value exceeds n/2.
pub fn u1_mask(prefix: &[u8], n: usize) -> Result<Vec<bool>> {
    Mask::U1.check(n, 2)?;
    if prefix.len() >= n {
        return Err(Error::Shape {
            what: "U(1) prefix",
            expected: n - 1,
            found: prefix.len(),
        });
    }
    let mut counts = [0usize; 2];
    for &v in prefix {
        if v > 1 {
            return Err(Error::Config(alloc::format!("spin value {v} outside local dimension")));
        }
        counts[v as usize] += 1;
    }
    Ok((0..2).map(|v| Mask::U1.allows(&counts, n, v)).collect())
}

/// Symmetrized log ψ̃ of one configuration with the base values it was built from.
#[derive(Clone, Debug)]
pub struct SymmetricEval {
    pub log_psi: LogPsi,
    /// Orbit of the canonical representative with base log ψ.
    pub orbit: Vec<(SpinConfig, LogPsi)>,
}

impl SymmetricEval {
    /// Cotangents on each orbit member's (log|ψ|, φ) given cotangents
    /// (a, b) on the symmetrized (log|ψ̃|, φ̃).
    pub fn pull_back(&self, a: f64, b: f64) -> Vec<(SpinConfig, (f64, f64))> {
        if self.orbit.len() == 1 {
            return vec![(self.orbit[0].0.clone(), (a, b))];
        }
        let m = self
            .orbit
            .iter()
            .map(|o| o.1.log_amp)
            .fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return self.orbit.iter().map(|o| (o.0.clone(), (0.0, 0.0))).collect();
        }
        let terms: Vec<Complex64> = self
            .orbit
            .iter()
            .map(|o| Complex64::from_polar((o.1.log_amp - m).exp(), o.1.phase))
            .collect();
        let sum: Complex64 = terms.iter().sum();
        let p: Vec<f64> = self.orbit.iter().map(|o| (2.0 * (o.1.log_amp - m)).exp()).collect();
        let z: f64 = p.iter().sum();
        self.orbit
            .iter()
            .zip(terms.iter().zip(&p))
            .map(|(o, (t, pk))| {
                let r = if sum.norm() > 0.0 { t / sum } else { Complex64::new(0.0, 0.0) };
                (o.0.clone(), (a * pk / z + b * r.im, b * r.re))
            })
            .collect()
    }
}

/// The base model wrapped with a symmetry group and an optional U(1) mask.
#[derive(Clone, Debug)]
pub struct SymmetrizedModel<'a> {
    pub model: &'a TqsModel,
    pub group: SymmetryGroup,
    pub mask: Mask,
}

impl<'a> SymmetrizedModel<'a> {
    pub fn new(model: &'a TqsModel, group: SymmetryGroup, mask: Mask) -> Self {
        Self { model, group, mask }
    }

    pub fn base(&self, j: &'a CouplingVector) -> BoundModel<'a> {
        BoundModel {
            model: self.model,
            couplings: j,
            mask: self.mask,
        }
    }

    /// Symmetrized values together with the orbit data behind them.
    pub fn evaluate(&self, j: &CouplingVector, configs: &[SpinConfig]) -> Result<Vec<SymmetricEval>> {
        if self.group.is_trivial() {
            let logs = self.model.log_psi_batch(j, configs, self.mask)?;
            return Ok(configs
                .iter()
                .zip(logs)
                .map(|(s, l)| SymmetricEval {
                    log_psi: l,
                    orbit: vec![(s.clone(), l)],
                })
                .collect());
        }
        let orbits: Vec<Vec<SpinConfig>> = configs
            .iter()
            .map(|s| self.group.orbit(&self.group.canonical_rep(s)))
            .collect();
        let mut index: BTreeMap<SpinConfig, usize> = BTreeMap::new();
        let mut unique: Vec<SpinConfig> = Vec::new();
        for o in orbits.iter().flatten() {
            index.entry(o.clone()).or_insert_with(|| {
                unique.push(o.clone());
                unique.len() - 1
            });
        }
        let logs = self.model.log_psi_batch(j, &unique, self.mask)?;
        let ln_m = (self.group.order() as f64).ln();
        Ok(orbits
            .into_iter()
            .map(|orbit| {
                let base: Vec<(SpinConfig, LogPsi)> = orbit
                    .into_iter()
                    .map(|o| {
                        let l = logs[index[&o]];
                        (o, l)
                    })
                    .collect();
                let mx = base.iter().map(|b| b.1.log_amp).fold(f64::NEG_INFINITY, f64::max);
                let log_psi = if mx == f64::NEG_INFINITY {
                    LogPsi {
                        log_amp: f64::NEG_INFINITY,
                        phase: 0.0,
                    }
                } else {
                    let p: f64 = base.iter().map(|b| (2.0 * (b.1.log_amp - mx)).exp()).sum();
                    let s: Complex64 = base
                        .iter()
                        .map(|b| Complex64::from_polar((b.1.log_amp - mx).exp(), b.1.phase))
                        .sum();
                    LogPsi {
                        log_amp: mx + 0.5 * (p.ln() - ln_m),
                        phase: s.arg(),
                    }
                };
                SymmetricEval { log_psi, orbit: base }
            })
            .collect())
    }

    pub fn log_psi(&self, j: &CouplingVector, s: &SpinConfig) -> Result<LogPsi> {
        Ok(self.evaluate(j, core::slice::from_ref(s))?[0].log_psi)
    }

    /// Samples the base model, then spreads each entry's count uniformly at
    /// random over its m group images.
    pub fn sample(&self, j: &CouplingVector, cfg: &SamplerConfig) -> Result<UniqueBatch> {
        let base = sample_unique(&self.base(j), j, cfg)?;
        if self.group.is_trivial() {
            return Ok(base);
        }
        let m = self.group.order();
        let uniform = vec![1.0 / m as f64; m];
        let mut rng = rng::stream(cfg.seed, &[u64::MAX]);
        let mut out = Vec::with_capacity(base.len() * m);
        for (s, c) in base.entries() {
            let split = crate::sampler::split_counts(&mut rng, *c, &uniform);
            for (img, k) in self.group.orbit(s).into_iter().zip(split) {
                out.push((img, k));
            }
        }
        UniqueBatch::from_counts(j.clone(), out)
    }

    pub fn bind(&'a self, j: &'a CouplingVector) -> BoundSymmetrized<'a> {
        BoundSymmetrized { sym: self, couplings: j }
    }
}

/// A symmetrized model at fixed couplings, usable as a [`WaveFunction`].
#[derive(Clone, Copy, Debug)]
pub struct BoundSymmetrized<'a> {
    pub sym: &'a SymmetrizedModel<'a>,
    pub couplings: &'a CouplingVector,
}

impl WaveFunction for BoundSymmetrized<'_> {
    fn n(&self) -> usize {
        self.couplings.n
    }

    fn log_psi_batch(&self, configs: &[SpinConfig]) -> Result<Vec<LogPsi>> {
        Ok(self
            .sym
            .evaluate(self.couplings, configs)?
            .into_iter()
            .map(|e| e.log_psi)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(b: &str) -> SpinConfig {
        SpinConfig::parse(b).unwrap()
    }

    #[test]
    fn orbits() {
        assert_eq!(SymmetryGroup::spin_flip().orbit(&s("0110")), vec![s("0110"), s("1001")]);
        assert_eq!(SymmetryGroup::reflection().orbit(&s("001")), vec![s("001"), s("100")]);
        let o = SymmetryGroup::flip_reflection().orbit(&s("0010"));
        assert_eq!(o, vec![s("0010"), s("1101"), s("0100"), s("1011")]);
    }

    #[test]
    fn canonical_representatives() {
        let g = SymmetryGroup::spin_flip();
        assert_eq!(g.canonical_rep(&s("1001")), s("0110"));
        assert_eq!(g.canonical_rep(&s("0110")), s("0110"));
        assert_eq!(SymmetryGroup::reflection().canonical_rep(&s("0000")), s("0000"));
    }

    #[test]
    fn u1_examples() {
        assert_eq!(u1_mask(&[0, 0], 4).unwrap(), vec![false, true]);
        assert_eq!(u1_mask(&[0, 1], 4).unwrap(), vec![true, true]);
        assert!(matches!(u1_mask(&[], 5), Err(Error::InvalidSize { .. })));
    }

    #[test]
    fn nontrivial_sector_rejected() {
        assert!(SymmetryGroup::with_sector(vec![SymmetryKind::SpinFlip], Complex64::new(-1.0, 0.0)).is_err());
        assert!(SymmetryGroup::with_sector(vec![SymmetryKind::SpinFlip], Complex64::new(1.0, 0.0)).is_ok());
    }
}
