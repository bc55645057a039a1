//! Synthetic multimodal survival data.
//!
//! Each latent class `c` has a distinct random mean direction `R_c`. All
//! classes also share a progression axis `A`, and a sample's position on it
//! is its latent severity `z = c + u` with `u ~ U(-1/2, 1/2)`:
//!
//! ```text
//! x        = s·(R_c + g·z·A) + N(0, σ²·I)        split into modality blocks
//! log T    = log median_c − κ·u + τ·N(0, 1)
//! ```
//!
//! With the default medians halving per class and `κ = ln 2`, survival time
//! falls continuously with severity. Censored samples report a time drawn
//! uniformly below their latent event time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Modality};
use crate::error::{Error, Result, Violation};
use crate::scalar::{cast, Scalar};
use crate::types::FeatureRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub samples_per_class: usize,
    pub modality_names: Vec<String>,
    pub modality_dims: Vec<usize>,
    /// Class-mean offset `s` in units of the noise scale.
    pub separation: f64,
    pub noise_scale: f64,
    /// Weight `g` of the shared severity axis relative to the class offsets.
    pub progression: f64,
    pub censoring_rate: f64,
    /// Median survival per latent class; its length sets the class count.
    pub median_months: Vec<f64>,
    /// Log-time slope `κ` of within-class severity.
    pub severity_coupling: f64,
    pub time_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 2026,
            samples_per_class: 200,
            modality_names: vec!["pathology".into(), "genomic".into()],
            modality_dims: vec![8, 8],
            separation: 5.0,
            noise_scale: 1.0,
            progression: 1.0,
            censoring_rate: 0.25,
            median_months: vec![96.0, 48.0, 24.0, 12.0],
            severity_coupling: std::f64::consts::LN_2,
            time_noise: 0.15,
        }
    }
}

impl SynthSpec {
    pub fn classes(&self) -> usize {
        self.median_months.len()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::ConfigFormat(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.samples_per_class == 0 {
            v.push(Violation::new("samples_per_class", 0, "must be positive"));
        }
        if self.modality_dims.is_empty() || self.modality_dims.contains(&0) {
            v.push(Violation::new(
                "modality_dims",
                format!("{:?}", self.modality_dims),
                "needs at least one block, all positive",
            ));
        }
        if self.modality_names.len() != self.modality_dims.len() {
            v.push(Violation::new(
                "modality_names",
                self.modality_names.len(),
                "one name per modality block",
            ));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            v.push(Violation::new("separation", self.separation, "must be finite and nonnegative"));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            v.push(Violation::new("noise_scale", self.noise_scale, "must be positive"));
        }
        if !self.progression.is_finite() {
            v.push(Violation::new("progression", self.progression, "must be finite"));
        }
        if !(0.0..1.0).contains(&self.censoring_rate) {
            v.push(Violation::new("censoring_rate", self.censoring_rate, "must lie in [0,1)"));
        }
        if self.median_months.is_empty() || self.median_months.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            v.push(Violation::new(
                "median_months",
                format!("{:?}", self.median_months),
                "needs at least one class, all positive",
            ));
        }
        if !self.severity_coupling.is_finite() {
            v.push(Violation::new("severity_coupling", self.severity_coupling, "must be finite"));
        }
        if !(self.time_noise >= 0.0 && self.time_noise.is_finite()) {
            v.push(Violation::new("time_noise", self.time_noise, "must be nonnegative"));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

/// A generated dataset plus the latent variables behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput<T> {
    pub dataset: Dataset<T>,
    pub latent_class: Vec<usize>,
    /// Severity `z = c + u` per record.
    pub severity: Vec<f64>,
    /// Latent event time before censoring.
    pub latent_time: Vec<f64>,
}

impl<T: Scalar> SynthOutput<T> {
    /// Record indices split per latent class: the first `train_per_class`
    /// samples of each class, then the rest.
    pub fn split_per_class(&self, train_per_class: usize) -> (Vec<usize>, Vec<usize>) {
        let mut seen = vec![0usize; self.latent_class.iter().max().map_or(0, |&c| c + 1)];
        let (mut train, mut rest) = (Vec::new(), Vec::new());
        for (i, &c) in self.latent_class.iter().enumerate() {
            if seen[c] < train_per_class {
                train.push(i);
            } else {
                rest.push(i);
            }
            seen[c] += 1;
        }
        (train, rest)
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Draws a dataset; a pure function of `spec`.
pub fn generate_synthetic<T: Scalar>(spec: &SynthSpec) -> Result<SynthOutput<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim: usize = spec.modality_dims.iter().sum();
    let axis = unit_gaussian(&mut rng, dim);
    let offsets: Vec<Vec<f64>> = (0..spec.classes()).map(|_| unit_gaussian(&mut rng, dim)).collect();

    let n = spec.classes() * spec.samples_per_class;
    let mut records = Vec::with_capacity(n);
    let mut latent_class = Vec::with_capacity(n);
    let mut severity = Vec::with_capacity(n);
    let mut latent_time = Vec::with_capacity(n);
    for (c, offset) in offsets.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let u: f64 = rng.random_range(-0.5..0.5);
            let z = c as f64 + u;
            let x: Vec<f64> = (0..dim)
                .map(|j| {
                    let noise: f64 = rng.sample(StandardNormal);
                    spec.separation * spec.noise_scale * (offset[j] + spec.progression * z * axis[j])
                        + spec.noise_scale * noise
                })
                .collect();
            let eps: f64 = rng.sample(StandardNormal);
            let t = (spec.median_months[c].ln() - spec.severity_coupling * u + spec.time_noise * eps).exp();
            let censored = rng.random_bool(spec.censoring_rate);
            let observed = if censored { rng.random_range(0.0..1.0) * t } else { t };

            let mut blocks = Vec::with_capacity(spec.modality_dims.len());
            let mut start = 0;
            for &d in &spec.modality_dims {
                blocks.push(x[start..start + d].iter().map(|&v| cast::<T>(v)).collect());
                start += d;
            }
            records.push(FeatureRecord {
                sample_id: format!("s{:05}", records.len()),
                modality_blocks: blocks,
                fused: None,
                event_time: cast(observed),
                censored,
                time_bin: None,
            });
            latent_class.push(c);
            severity.push(z);
            latent_time.push(t);
        }
    }
    let modalities = spec
        .modality_names
        .iter()
        .zip(&spec.modality_dims)
        .map(|(name, &d)| Modality::new(name.clone(), d))
        .collect();
    Ok(SynthOutput {
        dataset: Dataset::new(modalities, records)?,
        latent_class,
        severity,
        latent_time,
    })
}
