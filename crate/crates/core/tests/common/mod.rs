#![allow(dead_code)]

use labelshift::{DiscreteDistribution, SimplexVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Three overlapping components on atoms 0..6 with Δ* = 0.45.
pub fn benchmark_components() -> Vec<DiscreteDistribution> {
    [
        [0.40, 0.30, 0.15, 0.10, 0.05, 0.0],
        [0.05, 0.15, 0.40, 0.30, 0.10, 0.0],
        [0.05, 0.05, 0.10, 0.15, 0.30, 0.35],
    ]
    .iter()
    .map(|p| DiscreteDistribution::on_range(p.to_vec()).unwrap())
    .collect()
}

pub fn sv(v: &[f64]) -> SimplexVector {
    SimplexVector::new(v.to_vec()).unwrap()
}

/// Normalized exponentials: uniform on the simplex.
pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> SimplexVector {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    SimplexVector::normalize(raw).unwrap()
}

/// `k` random distributions on `0..m`; each atom is zeroed with probability
/// `sparsity`, keeping at least one atom per component.
pub fn random_components(
    rng: &mut ChaCha8Rng,
    k: usize,
    m: usize,
    sparsity: f64,
) -> Vec<DiscreteDistribution> {
    (0..k)
        .map(|_| {
            let mut raw: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.gen::<f64>() < sparsity {
                        0.0
                    } else {
                        -(1.0 - rng.gen::<f64>()).ln()
                    }
                })
                .collect();
            if raw.iter().all(|&v| v == 0.0) {
                raw[rng.gen_range(0..m)] = 1.0;
            }
            let total: f64 = raw.iter().sum();
            DiscreteDistribution::on_range(raw.into_iter().map(|v| v / total).collect()).unwrap()
        })
        .collect()
}
