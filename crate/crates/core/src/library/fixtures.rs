use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{init_library, ClassFeatureSet, Feature, PrototypeLibrary};
use crate::config::EngineConfig;

pub fn config(classes: usize, k_proto: usize, m_wander: usize, dim: usize) -> EngineConfig {
    EngineConfig {
        feature_dim: dim,
        classes,
        k_time: classes,
        k_proto,
        m_wander,
        ..EngineConfig::default()
    }
}

/// Gaussian clusters centered at `3·e_c`, spread `0.3`.
pub fn clustered_sets(classes: usize, per_class: usize, dim: usize, seed: u64, tag: &str) -> Vec<ClassFeatureSet<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    (0..classes)
        .map(|c| ClassFeatureSet {
            class_index: c,
            features: (0..per_class)
                .map(|i| {
                    let v = (0..dim)
                        .map(|d| if d == c % dim { 3.0 } else { 0.0 } + noise.sample(&mut rng))
                        .collect();
                    Feature::new(format!("{tag}c{c}-{i:03}"), v)
                })
                .collect(),
        })
        .collect()
}

pub fn random_library(classes: usize, k: usize, m: usize, dim: usize, seed: u64) -> (PrototypeLibrary<f64>, EngineConfig) {
    let cfg = config(classes, k, m, dim);
    let sets = clustered_sets(classes, k + m + 5, dim, seed, "");
    (init_library(&sets, &cfg).unwrap().0, cfg)
}

/// One class per entry; each class gets exactly the given vectors.
pub fn library_from(points: &[Vec<Vec<f64>>], m_wander: usize) -> (PrototypeLibrary<f64>, EngineConfig) {
    let dim = points[0][0].len();
    let cfg = config(points.len(), points[0].len() - m_wander, m_wander, dim);
    let sets: Vec<_> = points
        .iter()
        .enumerate()
        .map(|(c, pts)| ClassFeatureSet {
            class_index: c,
            features: pts
                .iter()
                .enumerate()
                .map(|(i, v)| Feature::new(format!("p{c}-{i}"), v.clone()))
                .collect(),
        })
        .collect();
    (init_library(&sets, &cfg).unwrap().0, cfg)
}

/// Central-difference check of `grad` against `f` at `x`.
pub fn assert_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) {
    let h = 1e-5;
    for i in 0..x.len() {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        let numeric = (f(&a) - f(&b)) / (2.0 * h);
        let scale = numeric.abs().max(grad[i].abs()).max(1e-6);
        assert!(
            (numeric - grad[i]).abs() / scale < 1e-4,
            "component {i}: analytic {} vs numeric {numeric}",
            grad[i]
        );
    }
}
