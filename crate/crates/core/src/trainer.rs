//! Variational training over a Hamiltonian family.
//!
//! Each iteration draws one (n, J) from the family, samples the model there,
//! and follows the baseline-subtracted energy gradient scaled by
//! 1/|Ē(J)|, so every family member contributes on a comparable scale.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::family::{CouplingVector, HamiltonianFamily};
use crate::hamiltonian::{local_energies, PauliHamiltonian};
use crate::model::{Mask, ModelConfig, ParameterStore, TqsModel};
use crate::rng;
use crate::sampler::{SamplerConfig, UniqueBatch};
use crate::spin::SpinConfig;
use crate::symmetry::{SymmetrizedModel, SymmetryGroup, SymmetryKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Pretrain,
    Finetune,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pretrain => "pretrain",
            Mode::Finetune => "finetune",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Mode::Pretrain),
            "finetune" => Ok(Mode::Finetune),
            other => Err(Error::Config(alloc::format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub i_warmup: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub scale_cap: f64,
    pub finetune_offset: f64,
    /// Added to Ē before forming the 1/|Ē| scale.
    pub energy_shift: f64,
    /// Global-norm gradient clip; off when `None`.
    pub clip_norm: Option<f64>,
    pub sampler: SamplerConfig,
}

impl TrainConfig {
    pub fn new(iterations: u64, sampler: SamplerConfig) -> Self {
        Self {
            iterations,
            i_warmup: 4000,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            scale_cap: 5.0,
            finetune_offset: 1e5,
            energy_shift: 0.0,
            clip_norm: None,
            sampler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_cap > 0.0) {
            return Err(Error::Config("scale_cap must be positive".into()));
        }
        if self.i_warmup == 0 {
            return Err(Error::Config("i_warmup must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        self.sampler.validate()
    }
}

/// Pretrain: 5·d_e^(−½)·min(step^(−¾), step·i_warmup^(−1.75)).
/// Finetune: 5·d_e^(−½)·(step + offset)^(−¾).
pub fn learning_rate(step: u64, d_model: usize, mode: Mode, cfg: &TrainConfig) -> Result<f64> {
    if step == 0 {
        return Err(Error::Domain("learning-rate step must be at least 1"));
    }
    let base = 5.0 / (d_model as f64).sqrt();
    let s = step as f64;
    Ok(match mode {
        Mode::Pretrain => base * s.powf(-0.75).min(s * (cfg.i_warmup as f64).powf(-1.75)),
        Mode::Finetune => base * (s + cfg.finetune_offset).powf(-0.75),
    })
}

/// min(1/|x|, cap).
pub fn energy_scale(re_energy: f64, cap: f64) -> f64 {
    let a = re_energy.abs();
    if a == 0.0 {
        cap
    } else {
        (1.0 / a).min(cap)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub mode: Mode,
    pub adam_m: ParameterStore,
    pub adam_v: ParameterStore,
}

impl TrainState {
    pub fn new(params: &ParameterStore, mode: Mode) -> Self {
        Self {
            step: 0,
            mode,
            adam_m: params.zeros_like(),
            adam_v: params.zeros_like(),
        }
    }
}

/// Everything needed to resume training or evaluate the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub family: HamiltonianFamily,
    pub symmetries: Vec<SymmetryKind>,
    pub u1: bool,
    pub params: ParameterStore,
    pub state: TrainState,
    /// Seeds of every training stage that produced these parameters.
    pub seeds: Vec<u64>,
}

impl Checkpoint {
    pub fn model(&self) -> Result<TqsModel> {
        TqsModel::from_parts(self.model_config, self.params.clone())
    }

    pub fn group(&self) -> Result<SymmetryGroup> {
        SymmetryGroup::new(self.symmetries.clone())
    }

    pub fn mask(&self) -> Mask {
        if self.u1 {
            Mask::U1
        } else {
            Mask::None
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnergyGradient {
    pub gradient: ParameterStore,
    pub energy: Complex64,
    /// Σ w·|E_loc − Ē|².
    pub variance: f64,
    /// Samples dropped because ψ(s) underflowed.
    pub degenerate: usize,
}

/// Batch energy Ē and the gradient of the surrogate
/// 2·Σₖ wₖ·Re[(E_loc(sₖ) − Ē)·log ψ*(sₖ)], with E_loc held constant.
///
/// With `baseline = false` the Ē subtraction is skipped.
pub fn energy_gradient(
    sym: &SymmetrizedModel<'_>,
    h: &PauliHamiltonian,
    j: &CouplingVector,
    batch: &UniqueBatch,
    baseline: bool,
) -> Result<EnergyGradient> {
    let configs = batch.configs();
    let weights = batch.weights();
    energy_gradient_weighted(sym, h, j, &configs, &weights, baseline)
}

/// [`energy_gradient`] with explicit weights (e.g. exact probabilities).
pub fn energy_gradient_weighted(
    sym: &SymmetrizedModel<'_>,
    h: &PauliHamiltonian,
    j: &CouplingVector,
    configs: &[SpinConfig],
    weights: &[f64],
    baseline: bool,
) -> Result<EnergyGradient> {
    let eloc = local_energies(h, configs, &sym.bind(j))?;
    let mut kept: Vec<(usize, Complex64)> = Vec::with_capacity(configs.len());
    for (k, e) in eloc.into_iter().enumerate() {
        match e {
            Ok(e) if weights[k] > 0.0 => kept.push((k, e)),
            Ok(_) => {}
            Err(Error::DegenerateSample) => {}
            Err(other) => return Err(other),
        }
    }
    let degenerate = configs.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::DegenerateSample);
    }
    let total: f64 = kept.iter().map(|&(k, _)| weights[k]).sum();
    let energy: Complex64 = kept.iter().map(|&(k, e)| e * (weights[k] / total)).sum();
    if !energy.re.is_finite() || !energy.im.is_finite() {
        return Err(Error::NumericFailure {
            layer: None,
            what: "batch energy",
        });
    }
    let variance = kept
        .iter()
        .map(|&(k, e)| (e - energy).norm_sqr() * weights[k] / total)
        .sum();

    let kept_configs: Vec<SpinConfig> = kept.iter().map(|&(k, _)| configs[k].clone()).collect();
    let evals = sym.evaluate(j, &kept_configs)?;
    let mut cot: BTreeMap<SpinConfig, (f64, f64)> = BTreeMap::new();
    for (eval, &(k, e)) in evals.iter().zip(&kept) {
        let delta = if baseline { e - energy } else { e };
        let w = 2.0 * weights[k] / total;
        for (s, (a, b)) in eval.pull_back(w * delta.re, w * delta.im) {
            let slot = cot.entry(s).or_insert((0.0, 0.0));
            slot.0 += a;
            slot.1 += b;
        }
    }
    let (cfgs, ws): (Vec<SpinConfig>, Vec<(f64, f64)>) = cot.into_iter().unzip();
    let mut gradient = sym.model.params().zeros_like();
    sym.model
        .accumulate_log_psi_gradient(j, &cfgs, &ws, sym.mask, &mut gradient)?;
    Ok(EnergyGradient {
        gradient,
        energy,
        variance,
        degenerate,
    })
}

/// One logged training iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub couplings: CouplingVector,
    pub energy: Complex64,
    pub scale: f64,
    pub lr: f64,
    /// |Im Ē| exceeded 1e-2·|Re Ē|.
    pub imag_warning: bool,
    pub degenerate: usize,
}

/// Where training samples its Hamiltonians.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Family(&'a HamiltonianFamily),
    /// A single point, built with the family's fixed parameters.
    Point(&'a HamiltonianFamily, &'a CouplingVector),
}

const MAX_ATTEMPTS: u64 = 16;

/// Samples (n, J), estimates the gradient and applies one Adam update.
///
/// All randomness derives from `(seed, step, attempt)`, so resuming from a
/// saved state reproduces the uninterrupted run exactly.
pub fn train_step(
    model: &mut TqsModel,
    target: Target<'_>,
    group: &SymmetryGroup,
    mask: Mask,
    state: &mut TrainState,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StepLog> {
    if !state.adam_m.same_layout(model.params()) || !state.adam_v.same_layout(model.params()) {
        return Err(Error::Config("optimizer state does not match the model".into()));
    }
    let step = state.step + 1;
    let mut attempt = 0;
    let (j, grad) = loop {
        let mut rng = rng::stream(seed, &[step, attempt]);
        let (family, j) = match target {
            Target::Family(f) => (f, f.sample_couplings(&mut rng)?),
            Target::Point(f, j) => (f, j.clone()),
        };
        let h = family.hamiltonian(&j)?;
        let sym = SymmetrizedModel::new(model, group.clone(), mask);
        let scfg = cfg
            .sampler
            .with_seed(rng::derive_seed(seed, &[step, attempt, 1]));
        let batch = sym.sample(&j, &scfg)?;
        match energy_gradient(&sym, &h, &j, &batch, true) {
            Ok(g) => break (j, g),
            Err(Error::DegenerateSample) if attempt + 1 < MAX_ATTEMPTS => attempt += 1,
            Err(e) => return Err(e),
        }
    };
    let re = grad.energy.re + cfg.energy_shift;
    let scale = energy_scale(re, cfg.scale_cap);
    let lr = learning_rate(step, model.config().d_model, state.mode, cfg)?;
    let mut g = grad.gradient;
    let mut factor = scale;
    if let Some(c) = cfg.clip_norm {
        let norm = g.l2_norm() * scale;
        if norm > c {
            factor *= c / norm;
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(step.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step.min(i32::MAX as u64) as i32);
    {
        let gd = g.data_mut();
        let m = state.adam_m.data_mut();
        let v = state.adam_v.data_mut();
        let p = model.params_mut().data_mut();
        for i in 0..p.len() {
            let gi = gd[i] * factor;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            p[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
        gd.iter_mut().for_each(|x| *x = 0.0);
    }
    if !model.params().all_finite() {
        return Err(Error::NumericFailure {
            layer: None,
            what: "parameters after update",
        });
    }
    state.step = step;
    Ok(StepLog {
        step,
        couplings: j,
        energy: grad.energy,
        scale,
        lr,
        imag_warning: grad.energy.im.abs() > 1e-2 * grad.energy.re.abs(),
        degenerate: grad.degenerate,
    })
}

/// Runs steps until `state.step` reaches `cfg.iterations`, calling `on_step`
/// after each one.
#[allow(clippy::too_many_arguments)]
pub fn run<F>(
    model: &mut TqsModel,
    target: Target<'_>,
    group: &SymmetryGroup,
    mask: Mask,
    state: &mut TrainState,
    cfg: &TrainConfig,
    seed: u64,
    mut on_step: F,
) -> Result<()>
where
    F: FnMut(&StepLog, &TqsModel, &TrainState) -> Result<()>,
{
    cfg.validate()?;
    while state.step < cfg.iterations {
        let log = train_step(model, target, group, mask, state, cfg, seed)?;
        on_step(&log, model, state)?;
    }
    Ok(())
}

/// Trains a fresh or resumed checkpoint on its family.
pub fn pretrain<F>(ckpt: &mut Checkpoint, cfg: &TrainConfig, seed: u64, on_step: F) -> Result<()>
where
    F: FnMut(&StepLog, &TqsModel, &TrainState) -> Result<()>,
{
    let mut model = ckpt.model()?;
    let group = ckpt.group()?;
    if ckpt.state.step == 0 {
        ckpt.state = TrainState::new(model.params(), Mode::Pretrain);
        ckpt.seeds.push(seed);
    }
    let family = ckpt.family.clone();
    run(
        &mut model,
        Target::Family(&family),
        &group,
        ckpt.mask(),
        &mut ckpt.state,
        cfg,
        seed,
        on_step,
    )?;
    ckpt.params = model.into_params();
    Ok(())
}

/// Continues training at the single point `j` with the fine-tune schedule.
/// The optimizer state and step counter start afresh.
pub fn fine_tune<F>(ckpt: &mut Checkpoint, j: &CouplingVector, cfg: &TrainConfig, seed: u64, on_step: F) -> Result<()>
where
    F: FnMut(&StepLog, &TqsModel, &TrainState) -> Result<()>,
{
    if j.values.len() != ckpt.family.n_couplings() {
        return Err(Error::Shape {
            what: "fine-tune couplings",
            expected: ckpt.family.n_couplings(),
            found: j.values.len(),
        });
    }
    if j.n > ckpt.model_config.max_context || j.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("fine-tune point cannot be encoded".into()));
    }
    let mut model = ckpt.model()?;
    let group = ckpt.group()?;
    if cfg.iterations == 0 {
        return Ok(());
    }
    let mut state = TrainState::new(model.params(), Mode::Finetune);
    let family = ckpt.family.clone();
    run(
        &mut model,
        Target::Point(&family, j),
        &group,
        ckpt.mask(),
        &mut state,
        cfg,
        seed,
        on_step,
    )?;
    ckpt.params = model.into_params();
    ckpt.state = state;
    ckpt.seeds.push(seed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::new(10, SamplerConfig::new(1000, 10, 0).unwrap())
    }

    #[test]
    fn schedule_values() {
        let c = cfg();
        let lr = learning_rate(4000, 32, Mode::Pretrain, &c).unwrap();
        assert!((lr - 1.757e-3).abs() < 1e-6);
        let a = 4000f64.powf(-0.75);
        let b = 4000.0 * 4000f64.powf(-1.75);
        assert!((a - b).abs() < 1e-15);
        let ft = learning_rate(1, 32, Mode::Finetune, &c).unwrap();
        assert_eq!(ft, 5.0 / 32f64.sqrt() * 100001f64.powf(-0.75));
        assert!(matches!(learning_rate(0, 32, Mode::Pretrain, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(energy_scale(-0.1, 5.0), 5.0);
        assert_eq!(energy_scale(-4.0, 5.0), 0.25);
    }
}
