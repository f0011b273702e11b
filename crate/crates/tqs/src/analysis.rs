//! Repeated-batch evaluation of a trained model at one parameter point.

use tqs_core::family::ModelKind;
use tqs_core::model::Mask;
use tqs_core::observables::{batch_energy, binder_cumulant, magnetization_moments, Summary};
use tqs_core::oracle::{ed_ground_state, ff_tfi_energy, ED_MAX_N};
use tqs_core::rng::derive_seed;
use tqs_core::{CouplingVector, HamiltonianFamily, Result, SamplerConfig, SymmetrizedModel, SymmetryGroup, TqsModel};

/// Per-repeat estimates at one point; index k used seed `seeds[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimates {
    pub seeds: Vec<u64>,
    pub energy: Vec<f64>,
    pub abs_m: Vec<f64>,
    pub m2: Vec<f64>,
    pub m4: Vec<f64>,
}

impl PointEstimates {
    /// U_N per repeat.
    pub fn binder(&self) -> Result<Vec<f64>> {
        self.m2
            .iter()
            .zip(&self.m4)
            .map(|(&m2, &m4)| binder_cumulant(m2, m4))
            .collect()
    }

    /// √⟨m²⟩ per repeat.
    pub fn rms_m(&self) -> Vec<f64> {
        self.m2.iter().map(|x| x.sqrt()).collect()
    }

    pub fn energy_summary(&self) -> Result<Summary> {
        Summary::of(&self.energy)
    }
}

/// A model plus the symmetry settings it was trained with.
pub struct Evaluator<'a> {
    pub model: &'a TqsModel,
    pub group: SymmetryGroup,
    pub mask: Mask,
    pub family: &'a HamiltonianFamily,
}

impl<'a> Evaluator<'a> {
    /// `repeats` independent unique-string batches; batch k is seeded with
    /// derive_seed(seed, path ++ [k]).
    pub fn estimate(
        &self,
        j: &CouplingVector,
        sampler: &SamplerConfig,
        repeats: usize,
        seed: u64,
        path: &[u64],
    ) -> Result<PointEstimates> {
        let h = self.family.hamiltonian(j)?;
        let sym = SymmetrizedModel::new(self.model, self.group.clone(), self.mask);
        let psi = sym.bind(j);
        let mut out = PointEstimates {
            seeds: Vec::with_capacity(repeats),
            energy: Vec::with_capacity(repeats),
            abs_m: Vec::with_capacity(repeats),
            m2: Vec::with_capacity(repeats),
            m4: Vec::with_capacity(repeats),
        };
        let mut full_path = path.to_vec();
        full_path.push(0);
        for k in 0..repeats {
            *full_path.last_mut().unwrap() = k as u64;
            let s = derive_seed(seed, &full_path);
            let batch = sym.sample(j, &sampler.with_seed(s))?;
            let e = batch_energy(&h, &batch, &psi)?;
            let m = magnetization_moments(&batch);
            out.seeds.push(s);
            out.energy.push(e.re);
            out.abs_m.push(m.abs_m);
            out.m2.push(m.m2);
            out.m4.push(m.m4);
        }
        Ok(out)
    }
}

/// Exact ground energy when an oracle covers the point: the free-fermion
/// solution for TFI, exact diagonalization up to [`ED_MAX_N`] otherwise.
pub fn reference_energy(family: &HamiltonianFamily, j: &CouplingVector) -> Result<Option<f64>> {
    let p = family.full_params(j)?;
    match family.kind {
        ModelKind::Tfi => ff_tfi_energy(j.n, p[0], p[1]).map(Some),
        _ if j.n <= ED_MAX_N => Ok(Some(ed_ground_state(&family.hamiltonian(j)?)?.energy)),
        _ => Ok(None),
    }
}

/// |(E − E₀)/E₀|.
pub fn relative_error(e: f64, e0: f64) -> f64 {
    ((e - e0) / e0).abs()
}
