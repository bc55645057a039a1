//! Engine configuration and its validation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};

/// Where fused features are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationPolicy {
    /// Normalize once when features are encoded; prototypes live in the
    /// same normalized space.
    AtEncoding,
    /// Normalize only the features handed to library initialization.
    InitOnly,
}

impl NormalizationPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationPolicy::AtEncoding => "at-encoding",
            NormalizationPolicy::InitOnly => "init-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "at-encoding" => Some(NormalizationPolicy::AtEncoding),
            "init-only" => Some(NormalizationPolicy::InitOnly),
            _ => None,
        }
    }
}

/// Library evolution strategy applied every `update_period_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateStrategy {
    Ema,
    Basic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Fused feature dimension D.
    pub feature_dim: usize,
    /// Number of survival-risk classes C; must equal `k_time`.
    pub classes: usize,
    pub k_proto: usize,
    pub m_wander: usize,
    pub k_time: usize,
    /// PMDSim power exponent m.
    pub power: f64,
    /// EMA decay applied to the old prototype.
    pub lambda: f64,
    /// Wandering band half-width as a fraction of the mean center distance.
    pub epsilon_fraction: f64,
    pub alpha_sim: f64,
    pub beta_sim: f64,
    pub gamma_sim: f64,
    /// Average-dissimilarity threshold for basic replacement.
    pub theta: f64,
    pub sigma_center: f64,
    pub alpha_loss: f64,
    pub beta_loss: f64,
    pub update_period_epochs: usize,
    pub top_f_sources: usize,
    /// Representative features per class and update; `None` means `k_proto`.
    pub top_k_representatives: Option<usize>,
    pub normalization: NormalizationPolicy,
    pub update_strategy: UpdateStrategy,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            feature_dim: 16,
            classes: 4,
            k_proto: 40,
            m_wander: 5,
            k_time: 4,
            power: 2.0,
            lambda: 0.1,
            epsilon_fraction: 0.10,
            alpha_sim: 0.4,
            beta_sim: 0.4,
            gamma_sim: 0.2,
            theta: 2.0,
            sigma_center: 1.0,
            alpha_loss: 0.4,
            beta_loss: 0.5,
            update_period_epochs: 1,
            top_f_sources: 3,
            top_k_representatives: None,
            normalization: NormalizationPolicy::AtEncoding,
            update_strategy: UpdateStrategy::Ema,
        }
    }
}

impl EngineConfig {
    pub fn representatives(&self) -> usize {
        self.top_k_representatives.unwrap_or(self.k_proto)
    }

    /// Prototypes per class in the effective (typical + wandering) set.
    pub fn effective_per_class(&self) -> usize {
        self.k_proto + self.m_wander
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigFormat(e.to_string()))
    }

    /// Short stable digest of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Checks every configuration invariant, reporting all violations at once.
pub fn validate_config(cfg: &EngineConfig) -> Result<()> {
    let mut v = Vec::new();
    for (name, value) in [
        ("feature_dim", cfg.feature_dim),
        ("classes", cfg.classes),
        ("k_proto", cfg.k_proto),
        ("k_time", cfg.k_time),
        ("update_period_epochs", cfg.update_period_epochs),
        ("top_f_sources", cfg.top_f_sources),
    ] {
        if value == 0 {
            v.push(Violation::new(name, value, "must be positive"));
        }
    }
    if let Some(0) = cfg.top_k_representatives {
        v.push(Violation::new("top_k_representatives", 0, "must be positive"));
    }
    if cfg.classes != cfg.k_time {
        v.push(Violation::new(
            "classes",
            cfg.classes,
            format!("class count must equal k_time ({})", cfg.k_time),
        ));
    }
    if !(cfg.power.is_finite() && cfg.power > 0.0) {
        v.push(Violation::new("power", cfg.power, "m must be a positive real"));
    }
    if !(cfg.lambda > 0.0 && cfg.lambda < 0.5) {
        v.push(Violation::new("lambda", cfg.lambda, "λ out of (0,0.5)"));
    }
    if !(cfg.epsilon_fraction.is_finite() && cfg.epsilon_fraction >= 0.0) {
        v.push(Violation::new(
            "epsilon_fraction",
            cfg.epsilon_fraction,
            "must be a nonnegative real",
        ));
    }
    let weights = [
        ("alpha_sim", cfg.alpha_sim),
        ("beta_sim", cfg.beta_sim),
        ("gamma_sim", cfg.gamma_sim),
    ];
    for (name, w) in weights {
        if !(w.is_finite() && w >= 0.0) {
            v.push(Violation::new(name, w, "fusion weight must be nonnegative"));
        }
    }
    let sum = cfg.alpha_sim + cfg.beta_sim + cfg.gamma_sim;
    if !((sum - 1.0).abs() <= 1e-9) {
        v.push(Violation::new(
            "alpha_sim+beta_sim+gamma_sim",
            sum,
            "fusion weights do not sum to 1",
        ));
    }
    if cfg.theta.is_nan() || cfg.theta <= 0.0 {
        v.push(Violation::new("theta", cfg.theta, "threshold must be positive"));
    }
    if !(cfg.sigma_center.is_finite() && cfg.sigma_center >= 0.0) {
        v.push(Violation::new(
            "sigma_center",
            cfg.sigma_center,
            "must be a nonnegative real",
        ));
    }
    for (name, w) in [("alpha_loss", cfg.alpha_loss), ("beta_loss", cfg.beta_loss)] {
        if !(0.0..=1.0).contains(&w) {
            v.push(Violation::new(name, w, "loss weight out of [0,1]"));
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn violations(cfg: &EngineConfig) -> Vec<Violation> {
        match validate_config(cfg) {
            Err(Error::InvalidConfig(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = EngineConfig::default();
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!((cfg.alpha_sim, cfg.beta_sim, cfg.gamma_sim), (0.4, 0.4, 0.2));
        assert_eq!(cfg.power, 2.0);
        validate_config(&cfg).unwrap();
    }

    #[test]
    fn lambda_out_of_range() {
        let cfg = EngineConfig {
            lambda: 0.6,
            ..Default::default()
        };
        let v = violations(&cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "lambda");
        assert!(v[0].message.contains("λ out of (0,0.5)"));
        assert_eq!(v[0].observed, "0.6");
    }

    #[test]
    fn fusion_weights_must_sum_to_one() {
        let cfg = EngineConfig {
            gamma_sim: 0.1,
            ..Default::default()
        };
        let v = violations(&cfg);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("fusion weights do not sum to 1"));
    }

    #[test]
    fn all_violations_enumerated() {
        let cfg = EngineConfig {
            lambda: 0.0,
            classes: 3,
            power: -1.0,
            beta_loss: 1.5,
            ..Default::default()
        };
        let fields: Vec<_> = violations(&cfg).into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["classes", "power", "lambda", "beta_loss"]);
    }

    #[test]
    fn infinite_theta_is_allowed() {
        let cfg = EngineConfig {
            theta: f64::INFINITY,
            ..Default::default()
        };
        validate_config(&cfg).unwrap();
        assert_eq!(EngineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let cfg = EngineConfig::default();
        let back = EngineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let other = EngineConfig {
            lambda: 0.05,
            ..Default::default()
        };
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = EngineConfig::from_toml("lambda = 0.15\nupdate_strategy = \"basic\"\n").unwrap();
        assert_eq!(cfg.lambda, 0.15);
        assert_eq!(cfg.update_strategy, UpdateStrategy::Basic);
        assert_eq!(cfg.k_proto, 40);
        assert!(EngineConfig::from_toml("bogus = 1").is_err());
    }
}
