//! Hamiltonian families: a model, fixed parameters, uniform priors over the
//! varying parameters, and a set of system sizes.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hamiltonian::{build_tfi, build_xyz, PauliHamiltonian};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Tfi,
    Xyz,
}

impl ModelKind {
    /// Parameter names in canonical order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Tfi => &["J", "h"],
            ModelKind::Xyz => &["J", "gamma", "delta", "h"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tfi => "tfi",
            ModelKind::Xyz => "xyz",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tfi" => Ok(ModelKind::Tfi),
            "xyz" => Ok(ModelKind::Xyz),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }

    /// Builds Ĥ from all parameters in canonical order.
    pub fn build(self, n: usize, params: &[f64]) -> Result<PauliHamiltonian> {
        let expected = self.param_names().len();
        if params.len() != expected {
            return Err(Error::Shape {
                what: "model parameters",
                expected,
                found: params.len(),
            });
        }
        match self {
            ModelKind::Tfi => build_tfi(n, params[0], params[1]),
            ModelKind::Xyz => build_xyz(n, params[0], params[1], params[2], params[3]),
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Config(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamSpec {
    Fixed(f64),
    Prior(Interval),
}

/// The physical parameters the network is conditioned on, plus the size.
///
/// Only parameters with a prior appear here; fixed parameters belong to the
/// family.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingVector {
    pub n: usize,
    pub names: Vec<&'static str>,
    pub values: Vec<f64>,
}

impl CouplingVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|&k| k == name)
            .map(|i| self.values[i])
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self {
            n,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianFamily {
    pub kind: ModelKind,
    /// One spec per entry of `kind.param_names()`.
    pub params: Vec<ParamSpec>,
    pub sizes: Vec<usize>,
}

impl HamiltonianFamily {
    pub fn new(kind: ModelKind, params: Vec<ParamSpec>, sizes: Vec<usize>) -> Result<Self> {
        if params.len() != kind.param_names().len() {
            return Err(Error::Shape {
                what: "family parameter specs",
                expected: kind.param_names().len(),
                found: params.len(),
            });
        }
        if sizes.is_empty() {
            return Err(Error::Config("family size set is empty".into()));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidSize {
                what: "family size set",
                n,
            });
        }
        Ok(Self {
            kind,
            params,
            sizes,
        })
    }

    /// TFI with J fixed and h uniform on `h_range`.
    pub fn tfi(j: f64, h_range: Interval, sizes: Vec<usize>) -> Result<Self> {
        Self::new(
            ModelKind::Tfi,
            alloc::vec![ParamSpec::Fixed(j), ParamSpec::Prior(h_range)],
            sizes,
        )
    }

    /// Names of the prior-distributed parameters, which the network sees.
    pub fn coupling_names(&self) -> Vec<&'static str> {
        self.kind
            .param_names()
            .iter()
            .zip(&self.params)
            .filter(|(_, p)| matches!(p, ParamSpec::Prior(_)))
            .map(|(&name, _)| name)
            .collect()
    }

    pub fn n_couplings(&self) -> usize {
        self.priors().count()
    }

    pub fn priors(&self) -> impl Iterator<Item = Interval> + '_ {
        self.params.iter().filter_map(|p| match p {
            ParamSpec::Prior(iv) => Some(*iv),
            ParamSpec::Fixed(_) => None,
        })
    }

    pub fn couplings(&self, n: usize, values: Vec<f64>) -> Result<CouplingVector> {
        if values.len() != self.n_couplings() {
            return Err(Error::Shape {
                what: "coupling values",
                expected: self.n_couplings(),
                found: values.len(),
            });
        }
        Ok(CouplingVector {
            n,
            names: self.coupling_names(),
            values,
        })
    }

    /// Whether every coupling lies inside its prior and n is in the size set.
    pub fn contains(&self, j: &CouplingVector) -> bool {
        self.sizes.contains(&j.n)
            && self
                .priors()
                .zip(&j.values)
                .all(|(iv, &v)| iv.contains(v))
    }

    /// All parameters in canonical order: fixed values merged with `j`.
    pub fn full_params(&self, j: &CouplingVector) -> Result<Vec<f64>> {
        if j.values.len() != self.n_couplings() {
            return Err(Error::Shape {
                what: "coupling values",
                expected: self.n_couplings(),
                found: j.values.len(),
            });
        }
        let mut varying = j.values.iter();
        Ok(self
            .params
            .iter()
            .map(|p| match p {
                ParamSpec::Fixed(v) => *v,
                ParamSpec::Prior(_) => *varying.next().expect("length checked"),
            })
            .collect())
    }

    /// Ĥ(J) for this family; deterministic in `j`.
    pub fn hamiltonian(&self, j: &CouplingVector) -> Result<PauliHamiltonian> {
        self.kind.build(j.n, &self.full_params(j)?)
    }

    /// Independent uniform draws for every prior and a uniform size.
    pub fn sample_couplings<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CouplingVector> {
        if self.sizes.is_empty() {
            return Err(Error::Config("family size set is empty".into()));
        }
        let n = self.sizes[rng.random_range(0..self.sizes.len())];
        let values = self
            .priors()
            .map(|iv| {
                if iv.width() == 0.0 {
                    iv.lo
                } else {
                    iv.lo + iv.width() * rng.random::<f64>()
                }
            })
            .collect();
        self.couplings(n, values)
    }

    /// Human-readable canonical description, one `key=value` per line.
    pub fn describe(&self) -> alloc::string::String {
        use core::fmt::Write;
        let mut s = alloc::string::String::new();
        let _ = writeln!(s, "family.model={}", self.kind.name());
        for (name, p) in self.kind.param_names().iter().zip(&self.params) {
            match p {
                ParamSpec::Fixed(v) => {
                    let _ = writeln!(s, "family.fixed.{name}={v:?}");
                }
                ParamSpec::Prior(iv) => {
                    let _ = writeln!(s, "family.prior.{name}={:?},{:?}", iv.lo, iv.hi);
                }
            }
        }
        let sizes: Vec<alloc::string::String> = self.sizes.iter().map(|n| format!("{n}")).collect();
        let _ = writeln!(s, "family.sizes={}", sizes.join(","));
        s
    }
}
