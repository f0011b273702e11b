use std::collections::BTreeMap;

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tqs_core::hamiltonian::{build_tfi, build_xyz, local_energies, PauliHamiltonian};
use tqs_core::oracle::{ed_ground_state, ff_tfi_energy, generate_measurements, ExactState};
use tqs_core::spin::enumerate;
use tqs_core::{Pauli, SpinConfig};

/// Dense Ĥ from Kronecker products of 2×2 Pauli matrices.
fn kron_matrix(h: &PauliHamiltonian) -> Vec<Complex64> {
    let n = h.n();
    let dim = 1 << n;
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let pauli = |p: Option<Pauli>| -> [Complex64; 4] {
        match p {
            None => [one, zero, zero, one],
            Some(Pauli::X) => [zero, one, one, zero],
            Some(Pauli::Y) => [zero, -i, i, zero],
            Some(Pauli::Z) => [one, zero, zero, -one],
        }
    };
    let mut out = vec![zero; dim * dim];
    for term in h.terms() {
        let mut m = vec![one];
        let mut size = 1;
        for site in 0..n {
            let p = term.factors().iter().find(|f| f.0 == site).map(|f| f.1);
            let s = pauli(p);
            let mut next = vec![zero; size * size * 4];
            for a in 0..size {
                for b in 0..size {
                    for x in 0..2 {
                        for y in 0..2 {
                            next[(a * 2 + x) * size * 2 + b * 2 + y] = m[a * size + b] * s[x * 2 + y];
                        }
                    }
                }
            }
            m = next;
            size *= 2;
        }
        for (o, v) in out.iter_mut().zip(m) {
            *o += v * term.coefficient;
        }
    }
    out
}

#[test]
fn connected_configs_match_kronecker_construction() {
    for n in [2, 3, 5, 8, 10] {
        for h in [
            build_tfi(n, 1.0, 0.7).unwrap(),
            build_xyz(n, 1.0, 0.2, 0.5, 0.3).unwrap(),
        ] {
            let dense = kron_matrix(&h);
            let dim = 1 << n;
            let mut from_conn = vec![Complex64::new(0.0, 0.0); dim * dim];
            for s in enumerate(n) {
                for (t, e) in h.connected_configs(&s).unwrap() {
                    from_conn[s.index() * dim + t.index()] = e;
                }
            }
            for (a, b) in dense.iter().zip(&from_conn) {
                assert!((a - b).norm() <= 1e-12);
            }
            for r in 0..dim {
                for c in 0..dim {
                    assert!((from_conn[r * dim + c] - from_conn[c * dim + r].conj()).norm() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn term_counts_for_all_sizes() {
    for n in 2..=64 {
        assert_eq!(build_tfi(n, 1.0, 0.5).unwrap().terms().len(), 2 * n - 1);
        assert_eq!(build_xyz(n, 1.0, 0.2, 0.5, 0.1).unwrap().terms().len(), 3 * (n - 1) + n);
    }
}

#[test]
fn xyz_small_cases() {
    let iso = ed_ground_state(&build_xyz(2, 1.0, 0.0, 1.0, 0.0).unwrap()).unwrap();
    assert!((iso.energy + 3.0).abs() < 1e-12);
    let field = ed_ground_state(&build_xyz(2, 0.0, 0.2, 1.0, 1.0).unwrap()).unwrap();
    assert!((field.energy + 2.0).abs() < 1e-12);
}

#[test]
fn ed_agrees_with_free_fermions() {
    for n in 2..=14 {
        for h in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let ed = ed_ground_state(&build_tfi(n, 1.0, h).unwrap()).unwrap().energy;
            let ff = ff_tfi_energy(n, 1.0, h).unwrap();
            assert!((ed - ff).abs() <= 1e-10, "n={n} h={h}: {ed} vs {ff}");
        }
    }
}

#[test]
fn exact_states_are_normalized_eigenvectors_with_flat_local_energy() {
    for (n, h) in [(2, 1.0), (6, 0.5), (10, 1.0)] {
        let ham = build_tfi(n, 1.0, h).unwrap();
        let st = ed_ground_state(&ham).unwrap();
        let norm: f64 = st.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let configs: Vec<_> = enumerate(n).collect();
        for e in local_energies(&ham, &configs, &st).unwrap() {
            assert!((e.unwrap() - Complex64::new(st.energy, 0.0)).norm() <= 1e-9);
        }
    }
    let st = ed_ground_state(&build_tfi(2, 1.0, 1.0).unwrap()).unwrap();
    for s in enumerate(2) {
        let e = tqs_core::hamiltonian::local_energy(&build_tfi(2, 1.0, 1.0).unwrap(), &s, &st).unwrap();
        assert!((e.re + 5f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn sampled_batch_energy_of_an_eigenstate_is_exact() {
    let ham = build_tfi(8, 1.0, 0.7).unwrap();
    let st = ed_ground_state(&ham).unwrap();
    let meas = generate_measurements(&st, 5000, 3).unwrap();
    let j = tqs_core::CouplingVector {
        n: 8,
        names: vec!["h"],
        values: vec![0.7],
    };
    let counts = meas.counts().into_iter().map(|(s, c)| (s, c as u64));
    let batch = tqs_core::UniqueBatch::from_counts(j, counts).unwrap();
    let e = tqs_core::observables::batch_energy(&ham, &batch, &st).unwrap();
    assert!((e.re - st.energy).abs() < 1e-9 && e.im.abs() < 1e-9);
}

#[test]
fn large_chain_free_fermion_values() {
    assert!((ff_tfi_energy(40, 1.0, 1e-12).unwrap() + 39.0).abs() < 1e-9);
    let e = ff_tfi_energy(40, 1.0, 1.0).unwrap();
    // Open-chain critical energy per site approaches −4/π.
    assert!((e / 40.0 + 4.0 / std::f64::consts::PI).abs() < 0.02);
}

#[test]
fn measurement_frequencies_follow_the_state() {
    let st = ed_ground_state(&build_tfi(6, 1.0, 0.8).unwrap()).unwrap();
    let total = 100_000;
    let m = generate_measurements(&st, total, 11).unwrap();
    assert_eq!(m, generate_measurements(&st, total, 11).unwrap());
    let counts = m.counts();
    let p = st.probabilities();
    let mut stat = 0.0;
    let mut cells = 0;
    for (k, &pk) in p.iter().enumerate() {
        let e = pk * total as f64;
        let o = *counts.get(&SpinConfig::from_index(k, 6)).unwrap_or(&0) as f64;
        let sigma = (total as f64 * pk * (1.0 - pk)).sqrt();
        assert!((o - e).abs() <= 5.0 * sigma + 1e-9);
        if e >= 5.0 {
            stat += (o - e) * (o - e) / e;
            cells += 1;
        }
    }
    let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(pval > 1e-3);
}

#[test]
fn symmetric_classical_state_gives_binomial_split() {
    let st = ed_ground_state(&build_tfi(4, 1.0, 0.0).unwrap()).unwrap();
    // Lanczos lands somewhere in the two-fold ground space; symmetrize it.
    let mut amps = vec![Complex64::new(0.0, 0.0); 16];
    amps[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[15] = amps[0];
    let cat = ExactState {
        n: 4,
        energy: st.energy,
        amplitudes: amps,
    };
    let total = 10_000;
    let m = generate_measurements(&cat, total, 3).unwrap();
    let counts: BTreeMap<_, _> = m.counts();
    assert_eq!(counts.len(), 2);
    let up = counts[&SpinConfig::zeros(4)] as f64;
    assert!((up - 5000.0).abs() < 5.0 * 50.0);
    assert!((st.energy + 3.0).abs() < 1e-12);
}
