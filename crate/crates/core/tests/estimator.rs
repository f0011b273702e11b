use tqs_core::estimator::{log_likelihood, predict, LikelihoodModel, MeasurementSet};
use tqs_core::family::{HamiltonianFamily, Interval};
use tqs_core::model::{Mask, ModelConfig, TqsModel};
use tqs_core::oracle::{generate_measurements, ExactFamily};
use tqs_core::symmetry::{SymmetrizedModel, SymmetryGroup};
use tqs_core::{CouplingVector, Result, SpinConfig};

fn family(n: usize) -> HamiltonianFamily {
    HamiltonianFamily::tfi(1.0, Interval::new(0.5, 1.5).unwrap(), vec![n]).unwrap()
}

fn data(h: f64, n: usize, count: usize, seed: u64) -> MeasurementSet {
    let ex = ExactFamily::new(family(n));
    let st = ex.ground_state(&family(n).couplings(n, vec![h]).unwrap()).unwrap();
    generate_measurements(&st, count, seed).unwrap()
}

#[test]
fn exact_likelihood_peaks_near_truth() {
    let fam = family(10);
    let ex = ExactFamily::new(fam.clone());
    let meas = data(1.0, 10, 1000, 1);
    let at = |h: f64| log_likelihood(&ex, &meas, &fam.couplings(10, vec![h]).unwrap()).unwrap();
    assert!(at(1.0) > at(0.6));
    assert!(at(1.0) > at(1.4));
}

#[test]
fn likelihood_identities() {
    let model = TqsModel::new(ModelConfig::small(1), 3).unwrap();
    let sym = SymmetrizedModel::new(&model, SymmetryGroup::trivial(), Mask::None);
    let j = CouplingVector {
        n: 5,
        names: vec!["h"],
        values: vec![0.9],
    };
    let s = SpinConfig::parse("01101").unwrap();
    let one = MeasurementSet::new(5, vec![s.clone()], "").unwrap();
    let l = log_likelihood(&sym, &one, &j).unwrap();
    assert_eq!(l, 2.0 * model.log_psi(&j, &s, Mask::None).unwrap().log_amp);

    let recs: Vec<_> = ["00000", "01101", "11111", "01101", "10000"]
        .iter()
        .map(|b| SpinConfig::parse(b).unwrap())
        .collect();
    let mut rev = recs.clone();
    rev.reverse();
    let a = log_likelihood(&sym, &MeasurementSet::new(5, recs, "").unwrap(), &j).unwrap();
    let b = log_likelihood(&sym, &MeasurementSet::new(5, rev, "").unwrap(), &j).unwrap();
    assert!((a - b).abs() < 1e-12);

    let empty = MeasurementSet::new(5, vec![], "").unwrap();
    assert!(log_likelihood(&sym, &empty, &j).is_err());

    let masked = SymmetrizedModel::new(&model, SymmetryGroup::trivial(), Mask::U1);
    let j6 = j.with_n(6);
    let bad = MeasurementSet::new(6, vec![SpinConfig::zeros(6)], "").unwrap();
    assert_eq!(log_likelihood(&masked, &bad, &j6).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn oracle_predictions_converge_to_the_truth() {
    let fam = family(10);
    let ex = ExactFamily::new(fam.clone());
    let bounds = [Interval::new(0.5, 1.5).unwrap()];
    for h in [0.7, 1.0, 1.3] {
        let meas = data(h, 10, 10_000, 7);
        let r = predict(&ex, &fam, &meas, &bounds).unwrap();
        assert!(r.converged);
        assert!((r.j_hat.values[0] - h).abs() <= 0.02, "h={h}: {}", r.j_hat.values[0]);
        assert_eq!(r, predict(&ex, &fam, &meas, &bounds).unwrap());
    }
}

#[test]
fn single_record_and_degenerate_box() {
    let fam = family(10);
    let ex = ExactFamily::new(fam.clone());
    let meas = data(1.0, 10, 1, 2);
    let r = predict(&ex, &fam, &meas, &[Interval::new(0.5, 1.5).unwrap()]).unwrap();
    assert!(r.j_hat.values[0].is_finite() && r.log_likelihood.is_finite());
    let r = predict(&ex, &fam, &meas, &[Interval::new(1.0, 1.0).unwrap()]).unwrap();
    assert_eq!(r.j_hat.values[0], 1.0);
    assert_eq!(r.evaluations, 1);
    // Boxes reaching outside the prior are clamped to it.
    let r = predict(&ex, &fam, &meas, &[Interval::new(0.0, 3.0).unwrap()]).unwrap();
    assert!((0.5..=1.5).contains(&r.j_hat.values[0]));
}

struct Shifted<'a>(&'a ExactFamily, f64);

impl LikelihoodModel for Shifted<'_> {
    fn log_probs(&self, j: &CouplingVector, configs: &[SpinConfig]) -> Result<Vec<f64>> {
        Ok(self.0.log_probs(j, configs)?.into_iter().map(|x| x + self.1).collect())
    }
}

#[test]
fn constant_offsets_do_not_move_the_argmax() {
    let fam = family(8);
    let ex = ExactFamily::new(fam.clone());
    let meas = data(1.2, 8, 300, 5);
    let b = [Interval::new(0.5, 1.5).unwrap()];
    let a = predict(&ex, &fam, &meas, &b).unwrap();
    let s = predict(&Shifted(&ex, -3.25), &fam, &meas, &b).unwrap();
    assert!((a.j_hat.values[0] - s.j_hat.values[0]).abs() < 1e-6);
}

#[test]
fn more_measurements_do_not_hurt() {
    let fam = family(8);
    let ex = ExactFamily::new(fam.clone());
    let b = [Interval::new(0.5, 1.5).unwrap()];
    let mut medians = vec![];
    for count in [1, 10, 100, 1000] {
        let mut errs: Vec<f64> = (0..10)
            .map(|seed| {
                let m = data(1.0, 8, count, 100 + seed);
                (predict(&ex, &fam, &m, &b).unwrap().j_hat.values[0] - 1.0).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        medians.push(0.5 * (errs[4] + errs[5]));
    }
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}
