//! Magnetization moments, Binder cumulants, crossings and scaling fits.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{local_energies, PauliHamiltonian};
use crate::sampler::{expectation, UniqueBatch};
use crate::wavefunction::WaveFunction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub m: f64,
    pub abs_m: f64,
    pub m2: f64,
    pub m4: f64,
}

/// Count-weighted ⟨m⟩, ⟨|m|⟩, ⟨m²⟩, ⟨m⁴⟩ with m = (n₀ − n₁)/n.
pub fn magnetization_moments(batch: &UniqueBatch) -> Moments {
    let re = |f: &dyn Fn(f64) -> f64| expectation(batch, |s| f(s.magnetization()).into()).re;
    Moments {
        m: re(&|m| m),
        abs_m: re(&|m: f64| m.abs()),
        m2: re(&|m| m * m),
        m4: re(&|m| m * m * m * m),
    }
}

/// Count-weighted mean of E_loc over a batch. Samples whose amplitude
/// underflowed are dropped and the remaining weights renormalized.
pub fn batch_energy<W: WaveFunction + ?Sized>(
    h: &PauliHamiltonian,
    batch: &UniqueBatch,
    psi: &W,
) -> Result<Complex64> {
    let el = local_energies(h, &batch.configs(), psi)?;
    let mut total = Complex64::new(0.0, 0.0);
    let mut weight = 0.0;
    for (e, w) in el.into_iter().zip(batch.weights()) {
        match e {
            Ok(e) => {
                total += e * w;
                weight += w;
            }
            Err(Error::DegenerateSample) => {}
            Err(e) => return Err(e),
        }
    }
    if weight == 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(total / weight)
}

/// U = 1 − ⟨m⁴⟩ / (3⟨m²⟩²).
pub fn binder_cumulant(m2: f64, m4: f64) -> Result<f64> {
    if !(m2 > 0.0) {
        return Err(Error::UndefinedCumulant);
    }
    Ok(1.0 - m4 / (3.0 * m2 * m2))
}

/// Value at fraction `q ∈ [0, 1]` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 0.5)
}

/// Median with 10th and 90th percentiles of repeated estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self {
            median: percentile(values, 0.5)?,
            p10: percentile(values, 0.1)?,
            p90: percentile(values, 0.9)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub h_c: f64,
    /// max − min over pairwise crossings.
    pub spread: f64,
    /// Per size pair, the crossing or `None` when the curves do not cross.
    pub pairs: Vec<(usize, usize, Option<f64>)>,
}

fn pair_crossing(a: &[(f64, f64)], b: &[(f64, f64)]) -> Option<f64> {
    let d: Vec<(f64, f64)> = a.iter().zip(b).map(|(x, y)| (x.0, x.1 - y.1)).collect();
    let mut hits = Vec::new();
    for (i, &(h, di)) in d.iter().enumerate() {
        if di == 0.0 {
            hits.push(h);
            continue;
        }
        if let Some(&(h2, dn)) = d.get(i + 1) {
            if dn != 0.0 && (di < 0.0) != (dn < 0.0) {
                hits.push(h + di / (di - dn) * (h2 - h));
            }
        }
    }
    median(&hits).ok()
}

/// Locates where U_N(h) curves of different sizes cross.
///
/// Each size pair contributes the median of its sign changes of U_a − U_b,
/// located by linear interpolation; the result is the median over pairs.
pub fn find_crossing(curves: &[(usize, Vec<(f64, f64)>)]) -> Result<Crossing> {
    if curves.len() < 2 {
        return Err(Error::Config("at least two sizes are needed for a crossing".into()));
    }
    let grid: Vec<f64> = curves[0].1.iter().map(|p| p.0).collect();
    if grid.len() < 2 {
        return Err(Error::Config("each curve needs at least two points".into()));
    }
    if curves.iter().any(|c| c.1.len() != grid.len() || c.1.iter().zip(&grid).any(|(p, h)| p.0 != *h)) {
        return Err(Error::Config("curves must share the same h grid".into()));
    }
    let mut pairs = Vec::new();
    let mut hits = Vec::new();
    for a in 0..curves.len() {
        for b in a + 1..curves.len() {
            let x = pair_crossing(&curves[a].1, &curves[b].1);
            if let Some(h) = x {
                hits.push(h);
            }
            pairs.push((curves[a].0, curves[b].0, x));
        }
    }
    if hits.is_empty() {
        return Err(Error::NoCrossing);
    }
    let lo = hits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = hits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Crossing {
        h_c: median(&hits)?,
        spread: hi - lo,
        pairs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FssFit {
    /// d log Ω / d log N, equal to −β/ν for Ω = √⟨m²⟩.
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub sizes: Vec<usize>,
}

/// Least-squares line through (log N, log value).
pub fn fss_fit(sizes: &[usize], values: &[f64]) -> Result<FssFit> {
    if sizes.len() != values.len() {
        return Err(Error::Shape {
            what: "scaling values",
            expected: sizes.len(),
            found: values.len(),
        });
    }
    if sizes.len() < 3 {
        return Err(Error::Config("scaling fit needs at least three sizes".into()));
    }
    if values.iter().any(|v| !(*v > 0.0)) || sizes.contains(&0) {
        return Err(Error::Domain("scaling fit needs positive sizes and values"));
    }
    let x: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("scaling fit needs distinct sizes"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let slope_std_error = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(FssFit {
        slope,
        intercept,
        slope_std_error,
        sizes: sizes.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::CouplingVector;
    use crate::spin::{enumerate, SpinConfig};
    use alloc::vec;

    fn j(n: usize) -> CouplingVector {
        CouplingVector {
            n,
            names: vec!["h"],
            values: vec![1.0],
        }
    }

    #[test]
    fn polarized_batch() {
        let b = UniqueBatch::from_counts(j(4), vec![(SpinConfig::zeros(4), 10)]).unwrap();
        let m = magnetization_moments(&b);
        assert_eq!((m.abs_m, m.m2, m.m4), (1.0, 1.0, 1.0));
        assert!((binder_cumulant(m.m2, m.m4).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_n4_moments() {
        let b = UniqueBatch::from_counts(j(4), enumerate(4).map(|s| (s, 1))).unwrap();
        let m = magnetization_moments(&b);
        assert!((m.m2 - 0.25).abs() < 1e-15);
        assert!((m.m4 - 0.15625).abs() < 1e-15);
        assert!((binder_cumulant(m.m2, m.m4).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(binder_cumulant(1.0, 3.0).unwrap(), 0.0);
        assert!(matches!(binder_cumulant(0.0, 0.0), Err(Error::UndefinedCumulant)));
    }

    #[test]
    fn straight_lines_cross() {
        let grid = [0.5, 0.8, 1.1, 1.4];
        let a: Vec<_> = grid.iter().map(|&h| (h, 2.0 * (h - 1.0))).collect();
        let b: Vec<_> = grid.iter().map(|&h| (h, -(h - 1.0))).collect();
        let c = find_crossing(&[(8, a.clone()), (12, b)]).unwrap();
        assert!((c.h_c - 1.0).abs() < 1e-12 && c.spread == 0.0);
        let shifted: Vec<_> = a.iter().map(|p| (p.0, p.1 + 10.0)).collect();
        assert!(matches!(find_crossing(&[(8, a), (12, shifted)]), Err(Error::NoCrossing)));
    }

    #[test]
    fn injected_curves_cross_at_their_common_point() {
        let grid: Vec<f64> = (0..11).map(|k| 0.8 + 0.05 * k as f64).collect();
        let curves: Vec<(usize, Vec<(f64, f64)>)> = [(8, -0.5), (12, -0.9), (16, -1.4)]
            .iter()
            .map(|&(n, slope)| (n, grid.iter().map(|&h| (h, 0.4 + slope * (h - 1.1))).collect()))
            .collect();
        let c = find_crossing(&curves).unwrap();
        assert!((c.h_c - 1.1).abs() < 1e-12, "{}", c.h_c);
        assert!(c.spread < 1e-12);
        assert_eq!(c.pairs.len(), 3);
    }

    #[test]
    fn exact_power_law() {
        let sizes = [8, 12, 16, 24];
        let v: Vec<f64> = sizes.iter().map(|&n| (n as f64).powf(-0.125)).collect();
        let f = fss_fit(&sizes, &v).unwrap();
        assert!((f.slope + 0.125).abs() < 1e-12);
        assert!(f.slope_std_error < 1e-12);
        assert!(fss_fit(&sizes[..2], &v[..2]).is_err());
        assert!(matches!(fss_fit(&[1, 2, 3], &[1.0, 0.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn percentiles() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(median(&v).unwrap(), 3.0);
        assert_eq!(percentile(&v, 0.1).unwrap(), 1.4);
    }
}
