//! Maximum-likelihood estimation of couplings from computational-basis
//! measurements.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::family::{CouplingVector, HamiltonianFamily, Interval};
use crate::spin::SpinConfig;
use crate::symmetry::SymmetrizedModel;

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub n: usize,
    pub records: Vec<SpinConfig>,
    /// Free-form provenance, e.g. the generating model and seed.
    pub note: String,
}

impl MeasurementSet {
    pub fn new(n: usize, records: Vec<SpinConfig>, note: impl Into<String>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.len() != n) {
            return Err(Error::Shape {
                what: "measurement record",
                expected: n,
                found: r.len(),
            });
        }
        Ok(Self {
            n,
            records,
            note: note.into(),
        })
    }

    /// Distinct records with their multiplicities.
    pub fn counts(&self) -> BTreeMap<SpinConfig, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.clone()).or_insert(0) += 1;
        }
        m
    }

    /// The first `k` records.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            n: self.n,
            records: self.records[..k.min(self.records.len())].to_vec(),
            note: self.note.clone(),
        }
    }
}

/// Anything that assigns log P(s | J) to complete configurations.
pub trait LikelihoodModel {
    fn log_probs(&self, j: &CouplingVector, configs: &[SpinConfig]) -> Result<Vec<f64>>;
}

impl LikelihoodModel for SymmetrizedModel<'_> {
    fn log_probs(&self, j: &CouplingVector, configs: &[SpinConfig]) -> Result<Vec<f64>> {
        Ok(self
            .evaluate(j, configs)?
            .into_iter()
            .map(|e| e.log_psi.log_prob())
            .collect())
    }
}

/// Σₖ log P(sₖ | J), one model evaluation per distinct record. May be −∞.
pub fn log_likelihood<M: LikelihoodModel + ?Sized>(
    model: &M,
    meas: &MeasurementSet,
    j: &CouplingVector,
) -> Result<f64> {
    if meas.records.is_empty() {
        return Err(Error::Domain("empty measurement set"));
    }
    if meas.n != j.n {
        return Err(Error::Shape {
            what: "measurement size",
            expected: j.n,
            found: meas.n,
        });
    }
    let counts = meas.counts();
    let configs: Vec<SpinConfig> = counts.keys().cloned().collect();
    let lp = model.log_probs(j, &configs)?;
    Ok(counts
        .values()
        .zip(lp)
        .map(|(&c, l)| if c == 0 { 0.0 } else { c as f64 * l })
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

pub const NM_TOLERANCE: f64 = 1e-9;
pub const NM_MAX_ITER: usize = 10_000;

/// Minimizes `f` over a box with the Nelder–Mead simplex.
///
/// The simplex starts at the box centre with edges of 10% of each width;
/// coefficients are reflection 1, expansion 2, contraction ½ and shrink ½.
/// Every candidate is clamped into the box. Iteration stops once both the
/// spread of function values and the largest vertex distance from the best
/// vertex fall below `tol`. Zero-width dimensions stay fixed.
pub fn nelder_mead<F>(mut f: F, bounds: &[Interval], tol: f64, max_iter: usize) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let free: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i].width() > 0.0).collect();
    let center: Vec<f64> = bounds.iter().map(|b| b.center()).collect();
    let mut evaluations = 0;
    let mut eval = |y: &[f64], evaluations: &mut usize| -> f64 {
        let mut x = center.clone();
        for (k, &i) in free.iter().enumerate() {
            x[i] = bounds[i].clamp(y[k]);
        }
        *evaluations += 1;
        let v = f(&x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let k = free.len();
    let clamp = |y: Vec<f64>| -> Vec<f64> { y.iter().zip(&free).map(|(v, &i)| bounds[i].clamp(*v)).collect() };
    let full = |y: &[f64]| -> Vec<f64> {
        let mut x = center.clone();
        for (kk, &i) in free.iter().enumerate() {
            x[i] = bounds[i].clamp(y[kk]);
        }
        x
    };
    if k == 0 {
        let value = eval(&[], &mut evaluations);
        return NelderMeadResult {
            x: center.clone(),
            value,
            iterations: 0,
            evaluations,
            converged: true,
        };
    }
    let y0: Vec<f64> = free.iter().map(|&i| center[i]).collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    let f0 = eval(&y0, &mut evaluations);
    simplex.push((y0.clone(), f0));
    for (d, &i) in free.iter().enumerate() {
        let mut y = y0.clone();
        y[d] += 0.1 * bounds[i].width();
        let y = clamp(y);
        let fy = eval(&y, &mut evaluations);
        simplex.push((y, fy));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[k].1;
        let f_spread = if best == worst { 0.0 } else { (worst - best).abs() };
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(y, _)| y.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread < tol && x_spread < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut c = vec![0.0; k];
        for (y, _) in &simplex[..k] {
            for d in 0..k {
                c[d] += y[d] / k as f64;
            }
        }
        let toward = |from: &[f64], t: f64| -> Vec<f64> { clamp((0..k).map(|d| c[d] + t * (from[d] - c[d])).collect()) };
        let xr = toward(&simplex[k].0, -1.0);
        let fr = eval(&xr, &mut evaluations);
        if fr < best {
            let xe = toward(&xr, 2.0);
            let fe = eval(&xe, &mut evaluations);
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[k - 1].1 {
            simplex[k] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst {
            let xc = toward(&xr, 0.5);
            let fc = eval(&xc, &mut evaluations);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = toward(&simplex[k].0, 0.5);
            let fc = eval(&xc, &mut evaluations);
            let ok = fc < worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[k] = (xc, fc);
            continue;
        }
        let xb = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let y = clamp((0..k).map(|d| xb[d] + 0.5 * (v.0[d] - xb[d])).collect());
            let fy = eval(&y, &mut evaluations);
            *v = (y, fy);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NelderMeadResult {
        x: full(&simplex[0].0),
        value: simplex[0].1,
        iterations,
        evaluations,
        converged,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    pub j_hat: CouplingVector,
    pub log_likelihood: f64,
    pub n_measure: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximum-likelihood couplings for `meas` within `search_box`, which is
/// intersected with the family's priors.
pub fn predict<M: LikelihoodModel + ?Sized>(
    model: &M,
    family: &HamiltonianFamily,
    meas: &MeasurementSet,
    search_box: &[Interval],
) -> Result<PredictionResult> {
    if meas.records.is_empty() {
        return Err(Error::Domain("empty measurement set"));
    }
    let priors: Vec<Interval> = family.priors().collect();
    if search_box.len() != priors.len() {
        return Err(Error::Shape {
            what: "search box",
            expected: priors.len(),
            found: search_box.len(),
        });
    }
    let bounds: Vec<Interval> = search_box
        .iter()
        .zip(&priors)
        .map(|(b, p)| {
            let lo = p.clamp(b.lo);
            let hi = p.clamp(b.hi);
            Interval::new(lo.min(hi), lo.max(hi))
        })
        .collect::<Result<_>>()?;
    let mut failure: Option<Error> = None;
    let res = nelder_mead(
        |x| {
            if failure.is_some() {
                return f64::INFINITY;
            }
            let j = match family.couplings(meas.n, x.to_vec()) {
                Ok(j) => j,
                Err(e) => {
                    failure = Some(e);
                    return f64::INFINITY;
                }
            };
            match log_likelihood(model, meas, &j) {
                Ok(l) => -l,
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            }
        },
        &bounds,
        NM_TOLERANCE,
        NM_MAX_ITER,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(PredictionResult {
        j_hat: family.couplings(meas.n, res.x)?,
        log_likelihood: -res.value,
        n_measure: meas.records.len(),
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_in_box() {
        let b = [Interval::new(-2.0, 2.0).unwrap(), Interval::new(0.0, 4.0).unwrap()];
        let r = nelder_mead(|x| (x[0] - 0.3).powi(2) + 2.0 * (x[1] - 3.1).powi(2), &b, 1e-12, 10_000);
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-5 && (r.x[1] - 3.1).abs() < 1e-5);
    }

    #[test]
    fn optimum_outside_box_is_clamped() {
        let b = [Interval::new(0.5, 1.5).unwrap()];
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &b, 1e-9, 10_000);
        assert!((r.x[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_box_takes_one_evaluation() {
        let b = [Interval::new(1.0, 1.0).unwrap()];
        let r = nelder_mead(|x| x[0], &b, 1e-9, 10_000);
        assert_eq!((r.x[0], r.evaluations), (1.0, 1));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let b = [Interval::new(-1.0, 1.0).unwrap()];
        let r = nelder_mead(|x| x[0].abs(), &b, 0.0, 5);
        assert!(!r.converged);
        assert_eq!(r.iterations, 5);
    }
}
