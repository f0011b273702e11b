//! Transformer quantum states: one autoregressive transformer representing the
//! ground states ψ(s, J) of a whole family of 1D spin-chain Hamiltonians.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece:
//! Pauli-string Hamiltonians, the transformer ansatz with hand-written
//! backpropagation, unique-string autoregressive sampling, explicit
//! symmetrization, the variational trainer, maximum-likelihood parameter
//! estimation, finite-size-scaling analysis and exact reference solvers.
//! File formats, configuration and the command-line tool live in the `tqs`
//! crate.

#![no_std]

// Float math comes from `num_traits::Float` (backed by libm). When some other
// crate in the build links std, the inherent f64 methods win and those imports
// are reported unused, hence the `allow(unused_imports)` next to each of them.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimator;
pub mod family;
pub mod hamiltonian;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod spin;
pub mod symmetry;
pub mod trainer;
pub mod wavefunction;

pub use error::{Error, Result};
pub use family::{CouplingVector, HamiltonianFamily, Interval, ModelKind, ParamSpec};
pub use hamiltonian::{Pauli, PauliHamiltonian, PauliTerm};
pub use model::{ModelConfig, ModelOutput, ParameterStore, TqsModel};
pub use sampler::{SamplerConfig, UniqueBatch};
pub use spin::SpinConfig;
pub use symmetry::{SymmetrizedModel, SymmetryGroup, SymmetryKind};
pub use wavefunction::{LogPsi, WaveFunction};
