use num_complex::Complex64;
use rand::Rng;
use tqs_core::family::{HamiltonianFamily, Interval};
use tqs_core::hamiltonian::{build_tfi, build_xyz, PauliHamiltonian};
use tqs_core::model::{Mask, ModelConfig, TqsModel};
use tqs_core::sampler::SamplerConfig;
use tqs_core::spin::enumerate;
use tqs_core::symmetry::{SymmetrizedModel, SymmetryGroup};
use tqs_core::trainer::{
    energy_gradient_weighted, fine_tune, run, Checkpoint, Mode, Target, TrainConfig, TrainState,
};
use tqs_core::{CouplingVector, Pauli, PauliTerm, SpinConfig};

fn tfi(h: f64, n: usize) -> CouplingVector {
    CouplingVector {
        n,
        names: vec!["h"],
        values: vec![h],
    }
}

fn exact_weights(sym: &SymmetrizedModel<'_>, j: &CouplingVector) -> (Vec<SpinConfig>, Vec<f64>) {
    let configs: Vec<_> = enumerate(j.n).collect();
    let w = sym
        .evaluate(j, &configs)
        .unwrap()
        .iter()
        .map(|e| e.log_psi.log_prob().exp())
        .collect();
    (configs, w)
}

/// ⟨E⟩ by enumeration.
fn exact_energy(sym: &SymmetrizedModel<'_>, h: &PauliHamiltonian, j: &CouplingVector) -> f64 {
    let (configs, w) = exact_weights(sym, j);
    let g = energy_gradient_weighted(sym, h, j, &configs, &w, true).unwrap();
    g.energy.re
}

fn check_energy_gradient(model: &TqsModel, group: SymmetryGroup, h: &PauliHamiltonian, j: &CouplingVector, seed: u64) {
    let sym = SymmetrizedModel::new(model, group.clone(), Mask::None);
    let (configs, w) = exact_weights(&sym, j);
    let g = energy_gradient_weighted(&sym, h, j, &configs, &w, true).unwrap();
    assert!(g.energy.im.abs() < 1e-12);
    let mut r = tqs_core::rng::stream(seed, &[]);
    let step = 1e-5;
    for _ in 0..20 {
        let k = r.random_range(0..model.params().len());
        let mut p = model.clone();
        p.params_mut().data_mut()[k] += step;
        let up = exact_energy(&SymmetrizedModel::new(&p, group.clone(), Mask::None), h, j);
        p.params_mut().data_mut()[k] -= 2.0 * step;
        let down = exact_energy(&SymmetrizedModel::new(&p, group.clone(), Mask::None), h, j);
        let fd = (up - down) / (2.0 * step);
        let an = g.gradient.data()[k];
        let scale = fd.abs().max(an.abs()).max(1e-4);
        assert!((fd - an).abs() <= 1e-5 * scale, "coord {k}: fd {fd} analytic {an}");
    }
}

#[test]
fn surrogate_gradient_is_the_energy_gradient() {
    let model = TqsModel::new(ModelConfig::small(1), 31).unwrap();
    check_energy_gradient(&model, SymmetryGroup::trivial(), &build_tfi(4, 1.0, 0.8).unwrap(), &tfi(0.8, 4), 1);
    check_energy_gradient(&model, SymmetryGroup::flip_reflection(), &build_tfi(4, 1.0, 1.2).unwrap(), &tfi(1.2, 4), 2);
    let xyz = build_xyz(4, 1.0, 0.2, 0.7, 0.3).unwrap();
    check_energy_gradient(&model, SymmetryGroup::trivial(), &xyz, &tfi(0.3, 4), 3);
    // A Hamiltonian with complex matrix elements.
    let complex = PauliHamiltonian::new(
        4,
        vec![
            PauliTerm::new(0.7, vec![(0, Pauli::X), (1, Pauli::Y)]).unwrap(),
            PauliTerm::new(-0.4, vec![(1, Pauli::Y), (2, Pauli::Z)]).unwrap(),
            PauliTerm::new(0.9, vec![(2, Pauli::X), (3, Pauli::X)]).unwrap(),
            PauliTerm::new(-0.5, vec![(3, Pauli::Y)]).unwrap(),
        ],
    )
    .unwrap();
    check_energy_gradient(&model, SymmetryGroup::trivial(), &complex, &tfi(0.5, 4), 4);
}

#[test]
fn baseline_does_not_bias_the_gradient() {
    let model = TqsModel::new(ModelConfig::small(1), 32).unwrap();
    let j = tfi(0.9, 4);
    let h = build_tfi(4, 1.0, 0.9).unwrap();
    for group in [SymmetryGroup::trivial(), SymmetryGroup::spin_flip()] {
        let sym = SymmetrizedModel::new(&model, group, Mask::None);
        let (configs, w) = exact_weights(&sym, &j);
        let a = energy_gradient_weighted(&sym, &h, &j, &configs, &w, true).unwrap();
        let b = energy_gradient_weighted(&sym, &h, &j, &configs, &w, false).unwrap();
        for (x, y) in a.gradient.data().iter().zip(b.gradient.data()) {
            assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn eigenstate_has_zero_gradient_and_variance() {
    // Uniform amplitudes and zero phases: the ground state of −Σ Xᵢ.
    let mut model = TqsModel::new(ModelConfig::small(1), 33).unwrap();
    for name in ["amp.weight", "amp.bias", "phase.weight", "phase.bias"] {
        model.params_mut().get_mut(name).unwrap().fill(0.0);
    }
    let j = tfi(1.0, 4);
    let h = build_tfi(4, 0.0, 1.0).unwrap();
    let sym = SymmetrizedModel::new(&model, SymmetryGroup::trivial(), Mask::None);
    let (configs, w) = exact_weights(&sym, &j);
    let g = energy_gradient_weighted(&sym, &h, &j, &configs, &w, true).unwrap();
    assert!((g.energy - Complex64::new(-4.0, 0.0)).norm() < 1e-12);
    assert!(g.variance < 1e-20);
    assert!(g.gradient.data().iter().all(|x| x.abs() < 1e-8));
}

#[test]
fn real_hamiltonian_and_zero_phase_give_real_energy() {
    let mut model = TqsModel::new(ModelConfig::small(1), 34).unwrap();
    for name in ["phase.weight", "phase.bias"] {
        model.params_mut().get_mut(name).unwrap().fill(0.0);
    }
    let j = tfi(0.7, 6);
    let sym = SymmetrizedModel::new(&model, SymmetryGroup::trivial(), Mask::None);
    let cfg = SamplerConfig::new(10_000, 64, 1).unwrap();
    let batch = sym.sample(&j, &cfg).unwrap();
    let g = tqs_core::trainer::energy_gradient(&sym, &build_tfi(6, 1.0, 0.7).unwrap(), &j, &batch, true).unwrap();
    assert_eq!(g.energy.im, 0.0);
}

fn family() -> HamiltonianFamily {
    HamiltonianFamily::tfi(1.0, Interval::new(0.5, 1.5).unwrap(), vec![4, 6]).unwrap()
}

fn fresh(seed: u64) -> Checkpoint {
    let model = TqsModel::new(ModelConfig::small(1), seed).unwrap();
    Checkpoint {
        model_config: *model.config(),
        family: family(),
        symmetries: vec![],
        u1: false,
        state: TrainState::new(model.params(), Mode::Pretrain),
        params: model.into_params(),
        seeds: vec![],
    }
}

#[test]
fn training_is_deterministic_and_resumable() {
    let cfg = TrainConfig::new(12, SamplerConfig::new(10_000, 32, 0).unwrap());
    let mut a = fresh(1);
    tqs_core::trainer::pretrain(&mut a, &cfg, 5, |_, _, _| Ok(())).unwrap();
    let mut b = fresh(1);
    tqs_core::trainer::pretrain(&mut b, &cfg, 5, |_, _, _| Ok(())).unwrap();
    assert_eq!(a, b);

    let mut c = fresh(1);
    let half = TrainConfig { iterations: 5, ..cfg };
    tqs_core::trainer::pretrain(&mut c, &half, 5, |_, _, _| Ok(())).unwrap();
    assert_eq!(c.state.step, 5);
    tqs_core::trainer::pretrain(&mut c, &cfg, 5, |_, _, _| Ok(())).unwrap();
    assert_eq!(c, a);

    let mut z = fresh(2);
    let before = z.clone();
    let zero = TrainConfig { iterations: 0, ..cfg };
    tqs_core::trainer::pretrain(&mut z, &zero, 5, |_, _, _| Ok(())).unwrap();
    assert_eq!(z.params, before.params);
}

#[test]
fn logged_scale_matches_energy() {
    let cfg = TrainConfig::new(20, SamplerConfig::new(10_000, 32, 0).unwrap());
    let mut model = TqsModel::new(ModelConfig::small(1), 3).unwrap();
    let mut st = TrainState::new(model.params(), Mode::Pretrain);
    let fam = family();
    run(&mut model, Target::Family(&fam), &SymmetryGroup::trivial(), Mask::None, &mut st, &cfg, 1, |log, _, _| {
        assert_eq!(log.scale, (1.0 / log.energy.re.abs()).min(5.0));
        assert!(fam.contains(&log.couplings));
        Ok(())
    })
    .unwrap();
}

#[test]
fn fine_tune_zero_iterations_is_identity_and_rejects_bad_points() {
    let mut c = fresh(4);
    let before = c.clone();
    let cfg = TrainConfig::new(0, SamplerConfig::new(1000, 10, 0).unwrap());
    fine_tune(&mut c, &tfi(1.75, 6), &cfg, 1, |_, _, _| Ok(())).unwrap();
    assert_eq!(c, before);
    assert!(fine_tune(&mut c, &tfi(1.0, 500), &cfg, 1, |_, _, _| Ok(())).is_err());
    assert!(fine_tune(&mut c, &tfi(f64::NAN, 6), &cfg, 1, |_, _, _| Ok(())).is_err());
}

#[test]
fn fine_tuning_uses_its_own_schedule_and_point() {
    let mut c = fresh(5);
    let cfg = TrainConfig::new(3, SamplerConfig::new(1000, 10, 0).unwrap());
    let target = tfi(1.75, 6);
    let mut seen = vec![];
    fine_tune(&mut c, &target, &cfg, 9, |log, _, _| {
        seen.push((log.step, log.couplings.clone(), log.lr));
        Ok(())
    })
    .unwrap();
    assert_eq!(c.state.mode, Mode::Finetune);
    assert_eq!(c.seeds, vec![9]);
    for (k, (step, j, lr)) in seen.into_iter().enumerate() {
        assert_eq!(step, k as u64 + 1);
        assert_eq!(j, target);
        assert_eq!(lr, 5.0 / 4.0 * (step as f64 + 1e5).powf(-0.75));
    }
}
