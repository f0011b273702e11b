use std::collections::BTreeMap;
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use tqs_core::model::{BoundModel, Mask, ModelConfig, TqsModel};
use tqs_core::sampler::{sample_unique, SamplerConfig};
use tqs_core::spin::enumerate;
use tqs_core::{CouplingVector, SpinConfig};

fn tfi(h: f64, n: usize) -> CouplingVector {
    CouplingVector {
        n,
        names: vec!["h"],
        values: vec![h],
    }
}

/// Pearson χ² p-value of observed counts against expected probabilities,
/// pooling cells with expected count below 5.
fn chi_square_p(counts: &BTreeMap<SpinConfig, u64>, probs: &[(SpinConfig, f64)], total: f64) -> f64 {
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for (s, p) in probs {
        let e = p * total;
        let o = *counts.get(s).unwrap_or(&0) as f64;
        if e < 5.0 {
            pool_obs += o;
            pool_exp += e;
        } else {
            stat += (o - e) * (o - e) / e;
            cells += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp) * (pool_obs - pool_exp) / pool_exp.max(1e-12);
        cells += 1;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn unique_sampler_matches_enumerated_distribution() {
    for n in [2, 4, 6] {
        let model = TqsModel::new(ModelConfig::small(1), n as u64).unwrap();
        let j = tfi(0.8, n);
        let bound = BoundModel {
            model: &model,
            couplings: &j,
            mask: Mask::None,
        };
        let configs: Vec<_> = enumerate(n).collect();
        let logs = model.log_psi_batch(&j, &configs, Mask::None).unwrap();
        let probs: Vec<_> = configs
            .iter()
            .cloned()
            .zip(logs.iter().map(|l| l.log_prob().exp()))
            .collect();
        let mut worst: f64 = 1.0;
        for seed in 0..20 {
            let cfg = SamplerConfig::new(20_000, 1 << n, seed).unwrap();
            let b = sample_unique(&bound, &j, &cfg).unwrap();
            let counts: BTreeMap<_, _> = b.entries().iter().cloned().collect();
            worst = worst.min(chi_square_p(&counts, &probs, 20_000.0));
        }
        // 20 tests at 1e-3 each: the family-wise false alarm rate is 2%.
        assert!(worst > 1e-3, "n={n}: p={worst}");
    }
}

#[test]
fn sampler_is_deterministic() {
    let model = TqsModel::new(ModelConfig::small(1), 3).unwrap();
    let j = tfi(1.0, 12);
    let bound = BoundModel {
        model: &model,
        couplings: &j,
        mask: Mask::None,
    };
    let cfg = SamplerConfig::new(1_000_000, 100, 42).unwrap();
    let a = sample_unique(&bound, &j, &cfg).unwrap();
    let b = sample_unique(&bound, &j, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.len() <= 100);
    assert_eq!(a.n_batch(), 1_000_000);
}

#[test]
fn prefix_marginals_are_consistent() {
    let model = TqsModel::new(ModelConfig::small(1), 9).unwrap();
    let j = tfi(1.3, 8);
    let bound = BoundModel {
        model: &model,
        couplings: &j,
        mask: Mask::None,
    };
    let total = 1_000_000u64;
    let b = sample_unique(&bound, &j, &SamplerConfig::new(total, 256, 5).unwrap()).unwrap();
    for prefix in [vec![0u8], vec![1, 0], vec![0, 1, 1]] {
        let count: u64 = b
            .entries()
            .iter()
            .filter(|(s, _)| s.values().starts_with(&prefix))
            .map(|e| e.1)
            .sum();
        let mut lp = 0.0;
        for k in 0..prefix.len() {
            lp += model.conditionals(&j, &prefix[..k], Mask::None).unwrap().0[prefix[k] as usize];
        }
        let p = lp.exp();
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        assert!((count as f64 - total as f64 * p).abs() < 5.0 * sigma);
    }
}

#[test]
fn cost_tracks_unique_strings_not_batch_size() {
    let model = TqsModel::new(ModelConfig::small(1), 4).unwrap();
    let j = tfi(1.0, 16);
    let bound = BoundModel {
        model: &model,
        couplings: &j,
        mask: Mask::None,
    };
    let time = |n_batch: u64| {
        let t = Instant::now();
        for seed in 0..5 {
            sample_unique(&bound, &j, &SamplerConfig::new(n_batch, 200, seed).unwrap()).unwrap();
        }
        t.elapsed().as_secs_f64()
    };
    time(10_000);
    let small = time(10_000);
    let large = time(1_000_000);
    assert!(large / small < 2.0 && small / large < 2.0, "{small} vs {large}");
}
