//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/tfi"
//! symmetries = ["spin_flip"]
//!
//! [model]
//! preset = "small"
//!
//! [family]
//! model = "tfi"
//! sizes = [4, 6, 8, 10, 12]
//! fixed = { J = 1.0 }
//! prior = { h = [0.5, 1.5] }
//!
//! [trainer]
//! iterations = 20000
//!
//! [sampler]
//! n_batch = 1000000
//! n_unique = 100
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use tqs_core::family::{HamiltonianFamily, Interval, ModelKind, ParamSpec};
use tqs_core::symmetry::SymmetryKind;
use tqs_core::trainer::TrainConfig;
use tqs_core::{CouplingVector, ModelConfig, SamplerConfig};

use crate::error::{CliError, CliResult};

pub const DEFAULT_N_BATCH: u64 = 1_000_000;
pub const DEFAULT_N_UNIQUE: usize = 100;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub symmetries: Vec<String>,
    #[serde(default)]
    pub u1: bool,
    pub model: Option<ModelSection>,
    pub family: Option<FamilySection>,
    pub trainer: Option<TrainerSection>,
    pub sampler: Option<SamplerSection>,
    pub fine_tune: Option<FineTuneSection>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "small" (2 layers, width 16) or "large" (8 layers, width 32).
    pub preset: Option<String>,
    pub n_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub max_context: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub model: String,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default)]
    pub prior: BTreeMap<String, [f64; 2]>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub iterations: u64,
    pub i_warmup: Option<u64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub scale_cap: Option<f64>,
    pub finetune_offset: Option<f64>,
    pub energy_shift: Option<f64>,
    pub clip_norm: Option<f64>,
    /// Write the checkpoint every this many steps (0 or absent: only at the end).
    pub checkpoint_every: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_batch: Option<u64>,
    pub n_unique: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FineTuneSection {
    pub n: usize,
    pub couplings: BTreeMap<String, f64>,
}

fn missing(key: &str) -> CliError {
    CliError::usage(format!("missing required key `{key}`"))
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {}", e.message())))
    }

    pub fn family(&self) -> CliResult<HamiltonianFamily> {
        self.family.as_ref().ok_or_else(|| missing("family"))?.build()
    }

    pub fn model_config(&self, n_couplings: usize) -> CliResult<ModelConfig> {
        let sec = self.model.clone().unwrap_or_default();
        let mut cfg = match sec.preset.as_deref().unwrap_or("small") {
            "small" => ModelConfig::small(n_couplings),
            "large" => ModelConfig::large(n_couplings),
            other => return Err(CliError::usage(format!("unknown model.preset {other:?}"))),
        };
        if let Some(v) = sec.n_layers {
            cfg.n_layers = v;
        }
        if let Some(v) = sec.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = sec.n_heads {
            cfg.n_heads = v;
        }
        if let Some(v) = sec.max_context {
            cfg.max_context = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn symmetry_kinds(&self) -> CliResult<Vec<SymmetryKind>> {
        Ok(self
            .symmetries
            .iter()
            .map(|s| SymmetryKind::from_name(s))
            .collect::<Result<_, _>>()?)
    }

    /// Sampler settings with command-line overrides applied.
    pub fn sampler(&self, n_batch: Option<u64>, n_unique: Option<usize>, seed: u64) -> CliResult<SamplerConfig> {
        let sec = self.sampler.as_ref();
        let nb = n_batch
            .or(sec.and_then(|s| s.n_batch))
            .unwrap_or(DEFAULT_N_BATCH);
        let nu = n_unique
            .or(sec.and_then(|s| s.n_unique))
            .unwrap_or(DEFAULT_N_UNIQUE);
        Ok(SamplerConfig::new(nb, nu, seed)?)
    }

    pub fn train_config(&self, sampler: SamplerConfig) -> CliResult<TrainConfig> {
        let sec = self.trainer.as_ref().ok_or_else(|| missing("trainer"))?;
        let mut cfg = TrainConfig::new(sec.iterations, sampler);
        if let Some(v) = sec.i_warmup {
            cfg.i_warmup = v;
        }
        if let Some(v) = sec.beta1 {
            cfg.beta1 = v;
        }
        if let Some(v) = sec.beta2 {
            cfg.beta2 = v;
        }
        if let Some(v) = sec.eps {
            cfg.eps = v;
        }
        if let Some(v) = sec.scale_cap {
            cfg.scale_cap = v;
        }
        if let Some(v) = sec.finetune_offset {
            cfg.finetune_offset = v;
        }
        if let Some(v) = sec.energy_shift {
            cfg.energy_shift = v;
        }
        cfg.clip_norm = sec.clip_norm;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn checkpoint_every(&self) -> u64 {
        self.trainer
            .as_ref()
            .and_then(|t| t.checkpoint_every)
            .unwrap_or(0)
    }

    /// The fine-tune target point, expressed in `family`'s coupling order.
    pub fn fine_tune_point(&self, family: &HamiltonianFamily) -> CliResult<CouplingVector> {
        let sec = self.fine_tune.as_ref().ok_or_else(|| missing("fine_tune"))?;
        let names = family.coupling_names();
        for key in sec.couplings.keys() {
            if !names.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "fine_tune.couplings.{key} is not a varying parameter of the family"
                )));
            }
        }
        let values = names
            .iter()
            .map(|name| {
                sec.couplings
                    .get(*name)
                    .copied()
                    .ok_or_else(|| missing(&format!("fine_tune.couplings.{name}")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        Ok(family.couplings(sec.n, values)?)
    }
}

impl FamilySection {
    pub fn build(&self) -> CliResult<HamiltonianFamily> {
        let kind = ModelKind::from_name(&self.model)?;
        let names = kind.param_names();
        for key in self.fixed.keys().chain(self.prior.keys()) {
            if !names.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "unknown parameter `{key}` for model {}",
                    kind.name()
                )));
            }
        }
        let mut specs = Vec::with_capacity(names.len());
        for name in names {
            let spec = match (self.fixed.get(*name), self.prior.get(*name)) {
                (Some(v), None) => ParamSpec::Fixed(*v),
                (None, Some([lo, hi])) => ParamSpec::Prior(Interval::new(*lo, *hi)?),
                (Some(_), Some(_)) => {
                    return Err(CliError::usage(format!(
                        "parameter `{name}` is both fixed and drawn from a prior"
                    )))
                }
                (None, None) => return Err(missing(&format!("family.fixed.{name} or family.prior.{name}"))),
            };
            specs.push(spec);
        }
        Ok(HamiltonianFamily::new(kind, specs, self.sizes.clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        [family]
        model = "tfi"
        sizes = [4, 6]
        fixed = { J = 1.0 }
        prior = { h = [0.5, 1.5] }
        [trainer]
        iterations = 10
    "#;

    #[test]
    fn minimal_config_builds() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let fam = cfg.family().unwrap();
        assert_eq!(fam.coupling_names(), vec!["h"]);
        assert_eq!(cfg.model_config(1).unwrap(), ModelConfig::small(1));
        let s = cfg.sampler(None, Some(50), cfg.seed).unwrap();
        assert_eq!((s.n_batch, s.n_unique, s.seed), (DEFAULT_N_BATCH, 50, 3));
        assert_eq!(cfg.train_config(s).unwrap().iterations, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(err.message.contains("bogus"), "{}", err.message);
        let nested = MINIMAL.replace("iterations = 10", "iterations = 10\nlearning_rate = 1");
        assert!(RunConfig::parse(&nested).is_err());
    }

    #[test]
    fn missing_sections_are_named() {
        let cfg = RunConfig::parse("seed = 1\n[trainer]\niterations = 5\n").unwrap();
        assert!(cfg.family().unwrap_err().message.contains("`family`"));
        let no_j = MINIMAL.replace("fixed = { J = 1.0 }", "");
        let err = RunConfig::parse(&no_j).unwrap().family().unwrap_err();
        assert!(err.message.contains("family.fixed.J"), "{}", err.message);
    }
}
