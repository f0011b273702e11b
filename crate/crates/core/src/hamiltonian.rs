//! Spin-chain Hamiltonians as sums of real-weighted Pauli strings.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spin::SpinConfig;
use crate::wavefunction::{LogPsi, WaveFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// `coefficient · ⊗ σ^{axis}_{site}`. Pauli strings are Hermitian, so a real
/// coefficient keeps every term Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    factors: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    /// Factors are sorted by site; repeated sites are rejected.
    pub fn new(coefficient: f64, mut factors: Vec<(usize, Pauli)>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Empty("Pauli term factors"));
        }
        factors.sort_by_key(|&(site, _)| site);
        if factors.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("Pauli term repeats a site".into()));
        }
        Ok(Self {
            coefficient,
            factors,
        })
    }

    pub fn factors(&self) -> &[(usize, Pauli)] {
        &self.factors
    }
}

/// All terms that flip the same set of sites, with their diagonal parts.
#[derive(Clone, Debug)]
struct FlipGroup {
    flips: Vec<usize>,
    // (coefficient, Y sites, Z sites) per term
    terms: Vec<(f64, Vec<usize>, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub struct PauliHamiltonian {
    n: usize,
    terms: Vec<PauliTerm>,
    groups: Vec<FlipGroup>,
}

impl PauliHamiltonian {
    /// Drops zero-coefficient terms and checks sites against `n`.
    pub fn new(n: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize {
                what: "Hamiltonian",
                n,
            });
        }
        let terms: Vec<PauliTerm> = terms.into_iter().filter(|t| t.coefficient != 0.0).collect();
        for t in &terms {
            if !t.coefficient.is_finite() {
                return Err(Error::NumericFailure {
                    layer: None,
                    what: "Hamiltonian coefficient",
                });
            }
            if let Some(&(site, _)) = t.factors.iter().find(|(site, _)| *site >= n) {
                return Err(Error::Shape {
                    what: "Pauli term site",
                    expected: n,
                    found: site,
                });
            }
        }

        let mut by_flips: BTreeMap<Vec<usize>, FlipGroup> = BTreeMap::new();
        for t in &terms {
            let flips: Vec<usize> = t
                .factors
                .iter()
                .filter(|(_, p)| *p != Pauli::Z)
                .map(|&(s, _)| s)
                .collect();
            let ys = t
                .factors
                .iter()
                .filter(|(_, p)| *p == Pauli::Y)
                .map(|&(s, _)| s)
                .collect();
            let zs = t
                .factors
                .iter()
                .filter(|(_, p)| *p == Pauli::Z)
                .map(|&(s, _)| s)
                .collect();
            by_flips
                .entry(flips.clone())
                .or_insert_with(|| FlipGroup {
                    flips,
                    terms: Vec::new(),
                })
                .terms
                .push((t.coefficient, ys, zs));
        }
        Ok(Self {
            n,
            terms,
            groups: by_flips.into_values().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    fn check(&self, s: &SpinConfig) -> Result<()> {
        if s.len() != self.n {
            return Err(Error::Shape {
                what: "spin configuration",
                expected: self.n,
                found: s.len(),
            });
        }
        Ok(())
    }

    /// Every s′ with ⟨s|Ĥ|s′⟩ ≠ 0, exactly once, with the matrix element.
    ///
    /// Matrix elements are coefficient × iᵏ with k accumulated exactly:
    /// X contributes 1, Y contributes −i on |0⟩ and +i on |1⟩, Z contributes ±1.
    pub fn connected_configs(&self, s: &SpinConfig) -> Result<Vec<(SpinConfig, Complex64)>> {
        self.check(s)?;
        let mut out = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut elem = Complex64::new(0.0, 0.0);
            for (coef, ys, zs) in &g.terms {
                // power of i
                let mut k = 0u8;
                for &site in ys {
                    k += if s.values()[site] == 0 { 3 } else { 1 };
                }
                for &site in zs {
                    if s.values()[site] != 0 {
                        k += 2;
                    }
                }
                elem += match k % 4 {
                    0 => Complex64::new(*coef, 0.0),
                    1 => Complex64::new(0.0, *coef),
                    2 => Complex64::new(-*coef, 0.0),
                    _ => Complex64::new(0.0, -*coef),
                };
            }
            if elem.re == 0.0 && elem.im == 0.0 {
                continue;
            }
            let mut t = s.clone();
            for &site in &g.flips {
                let v = &mut t.values_mut()[site];
                *v ^= 1;
            }
            out.push((t, elem));
        }
        Ok(out)
    }

    /// Dense 2ⁿ×2ⁿ matrix in index order, row-major, assembled from
    /// [`connected_configs`](Self::connected_configs).
    pub fn dense_matrix(&self) -> Result<Vec<Complex64>> {
        if self.n > 14 {
            return Err(Error::SizeLimit { n: self.n, max: 14 });
        }
        let dim = 1usize << self.n;
        let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
        for row in 0..dim {
            let s = SpinConfig::from_index(row, self.n);
            for (t, e) in self.connected_configs(&s)? {
                m[row * dim + t.index()] += e;
            }
        }
        Ok(m)
    }
}

/// Transverse-field Ising chain, open boundaries:
/// Ĥ = −J Σᵢ ZᵢZᵢ₊₁ − h Σᵢ Xᵢ.
pub fn build_tfi(n: usize, j: f64, h: f64) -> Result<PauliHamiltonian> {
    if n < 2 {
        return Err(Error::InvalidSize { what: "TFI chain", n });
    }
    let mut terms = Vec::with_capacity(2 * n - 1);
    for i in 0..n - 1 {
        terms.push(PauliTerm::new(-j, vec![(i, Pauli::Z), (i + 1, Pauli::Z)])?);
    }
    for i in 0..n {
        terms.push(PauliTerm::new(-h, vec![(i, Pauli::X)])?);
    }
    PauliHamiltonian::new(n, terms)
}

/// Heisenberg XYZ chain in a longitudinal field, open boundaries:
/// Ĥ = J Σᵢ [(1+γ) XᵢXᵢ₊₁ + (1−γ) YᵢYᵢ₊₁ + Δ ZᵢZᵢ₊₁] + h Σᵢ Zᵢ.
pub fn build_xyz(n: usize, j: f64, gamma: f64, delta: f64, h: f64) -> Result<PauliHamiltonian> {
    if n < 2 {
        return Err(Error::InvalidSize { what: "XYZ chain", n });
    }
    let mut terms = Vec::with_capacity(4 * n);
    for i in 0..n - 1 {
        terms.push(PauliTerm::new(j * (1.0 + gamma), vec![(i, Pauli::X), (i + 1, Pauli::X)])?);
        terms.push(PauliTerm::new(j * (1.0 - gamma), vec![(i, Pauli::Y), (i + 1, Pauli::Y)])?);
        terms.push(PauliTerm::new(j * delta, vec![(i, Pauli::Z), (i + 1, Pauli::Z)])?);
    }
    for i in 0..n {
        terms.push(PauliTerm::new(h, vec![(i, Pauli::Z)])?);
    }
    PauliHamiltonian::new(n, terms)
}

/// E_loc(s) = Σ_{s′} Ĥ(s,s′)·ψ(s′)/ψ(s).
pub fn local_energy<W: WaveFunction + ?Sized>(
    h: &PauliHamiltonian,
    s: &SpinConfig,
    psi: &W,
) -> Result<Complex64> {
    local_energies(h, core::slice::from_ref(s), psi)?
        .pop()
        .expect("one local energy per sample")
}

/// Local energies of many samples with one batched wave-function call.
///
/// The outer `Result` reports failures of the evaluator itself; each inner
/// entry is `Err(DegenerateSample)` when ψ(s) underflowed.
pub fn local_energies<W: WaveFunction + ?Sized>(
    h: &PauliHamiltonian,
    samples: &[SpinConfig],
    psi: &W,
) -> Result<Vec<Result<Complex64>>> {
    let mut configs: Vec<SpinConfig> = Vec::new();
    let mut index: BTreeMap<SpinConfig, usize> = BTreeMap::new();
    let mut intern = |c: SpinConfig, configs: &mut Vec<SpinConfig>| -> usize {
        *index.entry(c.clone()).or_insert_with(|| {
            configs.push(c);
            configs.len() - 1
        })
    };
    let mut plan = Vec::with_capacity(samples.len());
    for s in samples {
        let own = intern(s.clone(), &mut configs);
        let conn: Vec<(usize, Complex64)> = h
            .connected_configs(s)?
            .into_iter()
            .map(|(t, e)| (intern(t, &mut configs), e))
            .collect();
        plan.push((own, conn));
    }
    let logs: Vec<LogPsi> = psi.log_psi_batch(&configs)?;
    Ok(plan
        .into_iter()
        .map(|(own, conn)| {
            let base = logs[own];
            if !base.log_amp.is_finite() {
                return Err(Error::DegenerateSample);
            }
            let mut e = Complex64::new(0.0, 0.0);
            for (k, elem) in conn {
                e += elem * base.ratio_to(&logs[k]);
            }
            Ok(e)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::enumerate;

    fn elems(h: &PauliHamiltonian, s: &str) -> BTreeMap<SpinConfig, Complex64> {
        h.connected_configs(&SpinConfig::parse(s).unwrap())
            .unwrap()
            .into_iter()
            .collect()
    }

    #[test]
    fn tfi_term_counts() {
        let h = build_tfi(3, 1.0, 1.0).unwrap();
        assert_eq!(h.terms().len(), 5);
        let h = build_tfi(40, 1.0, 0.5).unwrap();
        let zz = h.terms().iter().filter(|t| t.factors().len() == 2).count();
        assert_eq!((zz, h.terms().len() - zz), (39, 40));
        // h = 0 drops the field terms
        assert_eq!(build_tfi(2, 1.0, 0.0).unwrap().terms().len(), 1);
        assert!(matches!(build_tfi(1, 1.0, 1.0), Err(Error::InvalidSize { .. })));
    }

    #[test]
    fn tfi_n3_terms_match_definition() {
        let h = build_tfi(3, 1.0, 1.0).unwrap();
        let t = h.terms();
        assert_eq!(t[0].factors(), &[(0, Pauli::Z), (1, Pauli::Z)]);
        assert_eq!(t[1].factors(), &[(1, Pauli::Z), (2, Pauli::Z)]);
        for (k, term) in t[2..].iter().enumerate() {
            assert_eq!(term.factors(), &[(k, Pauli::X)]);
        }
        assert!(t.iter().all(|x| x.coefficient == -1.0));
    }

    #[test]
    fn xyz_coefficients() {
        let h = build_xyz(2, 1.0, 0.2, 0.5, 0.0).unwrap();
        let c: Vec<f64> = h.terms().iter().map(|t| t.coefficient).collect();
        assert_eq!(c, vec![1.2, 0.8, 0.5]);
        let h = build_xyz(2, 0.0, 0.2, 1.0, 1.0).unwrap();
        assert_eq!(h.terms().len(), 2);
        assert!(h.terms().iter().all(|t| t.factors()[0].1 == Pauli::Z));
    }

    #[test]
    fn tfi_connected_n2() {
        let h = build_tfi(2, 1.0, 1.0).unwrap();
        let e = elems(&h, "00");
        assert_eq!(e.len(), 3);
        for s in ["00", "10", "01"] {
            assert_eq!(e[&SpinConfig::parse(s).unwrap()], Complex64::new(-1.0, 0.0));
        }
    }

    #[test]
    fn diagonal_only_when_field_vanishes() {
        let h = build_tfi(3, 1.0, 0.0).unwrap();
        let e = elems(&h, "010");
        assert_eq!(e.len(), 1);
        assert_eq!(e[&SpinConfig::parse("010").unwrap()], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn yy_element_is_product_of_single_site_elements() {
        // Y|0> = i|1>, so <11|Y⊗Y|00> = i·i = −1
        let h = PauliHamiltonian::new(
            2,
            vec![PauliTerm::new(0.8, vec![(0, Pauli::Y), (1, Pauli::Y)]).unwrap()],
        )
        .unwrap();
        let e = elems(&h, "00");
        assert_eq!(e[&SpinConfig::parse("11").unwrap()], Complex64::new(-0.8, 0.0));
        let e = elems(&h, "01");
        assert_eq!(e[&SpinConfig::parse("10").unwrap()], Complex64::new(0.8, 0.0));
        // a single Y is anti-symmetric imaginary
        let y = PauliHamiltonian::new(1, vec![PauliTerm::new(1.0, vec![(0, Pauli::Y)]).unwrap()]).unwrap();
        let m = y.dense_matrix().unwrap();
        assert_eq!(m[1], Complex64::new(0.0, -1.0));
        assert_eq!(m[2], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let h = build_tfi(3, 1.0, 1.0).unwrap();
        assert!(matches!(
            h.connected_configs(&SpinConfig::parse("01").unwrap()),
            Err(Error::Shape { .. })
        ));
    }

    struct Constant(usize);
    impl WaveFunction for Constant {
        fn n(&self) -> usize {
            self.0
        }
        fn log_psi_batch(&self, c: &[SpinConfig]) -> Result<Vec<LogPsi>> {
            Ok(c.iter()
                .map(|s| LogPsi {
                    log_amp: -0.1 * s.index() as f64,
                    phase: 0.3 * s.count(1) as f64,
                })
                .collect())
        }
    }

    #[test]
    fn local_energy_of_diagonal_hamiltonian() {
        let h = build_tfi(4, 1.0, 0.0).unwrap();
        let e = local_energy(&h, &SpinConfig::zeros(4), &Constant(4)).unwrap();
        assert_eq!(e, Complex64::new(-3.0, 0.0));
    }

    #[test]
    fn hermitian_dense_matrix() {
        let h = build_xyz(4, 1.0, 0.2, -0.4, 0.3).unwrap();
        let m = h.dense_matrix().unwrap();
        let dim = 16;
        for r in 0..dim {
            for c in 0..dim {
                assert!((m[r * dim + c] - m[c * dim + r].conj()).norm() < 1e-12);
            }
        }
        assert_eq!(enumerate(4).count(), 16);
    }
}
