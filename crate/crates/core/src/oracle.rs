//! Reference solvers: exact diagonalization for small chains, the free-fermion
//! solution of the open transverse-field Ising chain, and synthetic
//! measurements drawn from exact states.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::estimator::{LikelihoodModel, MeasurementSet};
use crate::family::{CouplingVector, HamiltonianFamily};
use crate::hamiltonian::PauliHamiltonian;
use crate::linalg::symmetric_eigen;
use crate::rng;
use crate::spin::SpinConfig;
use crate::wavefunction::{LogPsi, WaveFunction};

/// Largest chain handled by exact diagonalization.
pub const ED_MAX_N: usize = 16;
const RESIDUAL_TOL: f64 = 1e-10;
const KRYLOV_DIM: usize = 80;
const MAX_RESTARTS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactState {
    pub n: usize,
    pub energy: f64,
    /// Indexed by [`SpinConfig::index`]; unit norm.
    pub amplitudes: Vec<Complex64>,
}

impl ExactState {
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

impl WaveFunction for ExactState {
    fn n(&self) -> usize {
        self.n
    }

    fn log_psi_batch(&self, configs: &[SpinConfig]) -> Result<Vec<LogPsi>> {
        configs
            .iter()
            .map(|s| {
                if s.len() != self.n {
                    return Err(Error::Shape {
                        what: "spin configuration",
                        expected: self.n,
                        found: s.len(),
                    });
                }
                let a = self.amplitudes[s.index()];
                Ok(LogPsi {
                    log_amp: a.norm().ln(),
                    phase: a.arg(),
                })
            })
            .collect()
    }
}

/// Ĥ in compressed-row form over the full computational basis.
struct SparseOperator {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Complex64>,
}

impl SparseOperator {
    fn new(h: &PauliHamiltonian) -> Result<Self> {
        let n = h.n();
        let dim = 1usize << n;
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for idx in 0..dim {
            for (t, e) in h.connected_configs(&SpinConfig::from_index(idx, n))? {
                cols.push(t.index() as u32);
                vals.push(e);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { row_ptr, cols, vals })
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yr = acc;
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair of Ĥ by restarted Lanczos with full reorthogonalization.
pub fn ed_ground_state(h: &PauliHamiltonian) -> Result<ExactState> {
    let n = h.n();
    if n > ED_MAX_N {
        return Err(Error::SizeLimit { n, max: ED_MAX_N });
    }
    let dim = 1usize << n;
    let op = SparseOperator::new(h)?;
    let mut r = rng::stream(0x0ed0_5eed, &[n as u64]);
    let mut x: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    let mut hx = vec![Complex64::new(0.0, 0.0); dim];
    let m_max = KRYLOV_DIM.min(dim);
    for _ in 0..MAX_RESTARTS {
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut basis: Vec<Vec<Complex64>> = vec![x.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        loop {
            let k = basis.len() - 1;
            op.apply(&basis[k], &mut w);
            let a = dot(&basis[k], &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
            }
            let b = norm(&w);
            if basis.len() == m_max || b < 1e-13 * (1.0 + a.abs()) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|v| v / b).collect());
        }
        let m = alpha.len();
        let mut t = vec![0.0; m * m];
        for i in 0..m {
            t[i * m + i] = alpha[i];
            if i + 1 < m {
                t[i * m + i + 1] = beta[i];
                t[(i + 1) * m + i] = beta[i];
            }
        }
        let (_, vecs) = symmetric_eigen(&t, m);
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (i, v) in basis.iter().enumerate() {
            let c = vecs[i * m];
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += vi * c;
            }
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut hx);
        let e = dot(&x, &hx).re;
        let res = hx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b * e).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if res <= RESIDUAL_TOL {
            let big = x
                .iter()
                .cloned()
                .fold(Complex64::new(0.0, 0.0), |acc, v| if v.norm() > acc.norm() { v } else { acc });
            let gauge = big.conj() / big.norm();
            x.iter_mut().for_each(|v| *v *= gauge);
            return Ok(ExactState {
                n,
                energy: e,
                amplitudes: x,
            });
        }
    }
    Err(Error::NumericFailure {
        layer: None,
        what: "Lanczos did not converge",
    })
}

/// Ground energy of the open chain −J·Σ ZᵢZᵢ₊₁ − h·Σ Xᵢ from its free-fermion
/// single-particle energies: minus the sum of singular values of the
/// bidiagonal matrix with h on the diagonal and J above it.
pub fn ff_tfi_energy(n: usize, j: f64, h: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSize { what: "TFI chain", n });
    }
    // Eigenvalues of [[0, M], [Mᵀ, 0]] are ±σ, which keeps small σ accurate.
    let d = 2 * n;
    let mut b = vec![0.0; d * d];
    for i in 0..n {
        b[i * d + n + i] = h;
        b[(n + i) * d + i] = h;
        if i + 1 < n {
            b[i * d + n + i + 1] = j;
            b[(n + i + 1) * d + i] = j;
        }
    }
    let (w, _) = symmetric_eigen(&b, d);
    Ok(-0.5 * w.iter().map(|x| x.abs()).sum::<f64>())
}

/// `count` independent draws from |amplitudes|².
pub fn generate_measurements(state: &ExactState, count: usize, seed: u64) -> Result<MeasurementSet> {
    if count == 0 {
        return Err(Error::Domain("measurement count must be positive"));
    }
    let p = state.probabilities();
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for x in &p {
        acc += x;
        cdf.push(acc);
    }
    let mut r = rng::stream(seed, &[0x6d65_6173]);
    let records = (0..count)
        .map(|_| {
            let u: f64 = r.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(p.len() - 1);
            SpinConfig::from_index(k, state.n)
        })
        .collect();
    MeasurementSet::new(state.n, records, alloc::format!("exact state seed={seed}"))
}

/// Exact ground-state probabilities of a family, usable in place of a
/// trained model for likelihood evaluation. Results are cached per (n, J).
#[derive(Debug)]
pub struct ExactFamily {
    pub family: HamiltonianFamily,
    cache: RefCell<BTreeMap<(usize, Vec<u64>), Vec<f64>>>,
}

impl ExactFamily {
    pub fn new(family: HamiltonianFamily) -> Self {
        Self {
            family,
            cache: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn ground_state(&self, j: &CouplingVector) -> Result<ExactState> {
        ed_ground_state(&self.family.hamiltonian(j)?)
    }
}

impl LikelihoodModel for ExactFamily {
    fn log_probs(&self, j: &CouplingVector, configs: &[SpinConfig]) -> Result<Vec<f64>> {
        let key = (j.n, j.values.iter().map(|v| v.to_bits()).collect());
        if !self.cache.borrow().contains_key(&key) {
            let lp = self
                .ground_state(j)?
                .probabilities()
                .into_iter()
                .map(|p| p.ln())
                .collect();
            self.cache.borrow_mut().insert(key.clone(), lp);
        }
        let cache = self.cache.borrow();
        let lp = &cache[&key];
        Ok(configs.iter().map(|s| lp[s.index()]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_tfi, build_xyz};

    #[test]
    fn two_site_values() {
        let s5 = 5f64.sqrt();
        assert!((ed_ground_state(&build_tfi(2, 1.0, 1.0).unwrap()).unwrap().energy + s5).abs() < 1e-12);
        assert!((ff_tfi_energy(2, 1.0, 1.0).unwrap() + s5).abs() < 1e-12);
        assert!((ed_ground_state(&build_xyz(2, 1.0, 0.0, 1.0, 0.0).unwrap()).unwrap().energy + 3.0).abs() < 1e-12);
    }

    #[test]
    fn classical_limit() {
        let st = ed_ground_state(&build_tfi(6, 1.0, 0.0).unwrap()).unwrap();
        assert!((st.energy + 5.0).abs() < 1e-12);
        let p = st.probabilities();
        assert!((p[0] + p[63] - 1.0).abs() < 1e-10);
        assert!((ff_tfi_energy(40, 1.0, 0.0).unwrap() + 39.0).abs() < 1e-10);
    }

    #[test]
    fn size_limit() {
        assert!(matches!(
            ed_ground_state(&build_tfi(17, 1.0, 1.0).unwrap()),
            Err(Error::SizeLimit { .. })
        ));
    }

    #[test]
    fn polarized_state_measurements() {
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[0] = Complex64::new(1.0, 0.0);
        let st = ExactState {
            n: 3,
            energy: 0.0,
            amplitudes: amps,
        };
        let m = generate_measurements(&st, 50, 1).unwrap();
        assert!(m.records.iter().all(|r| *r == SpinConfig::zeros(3)));
    }
}
