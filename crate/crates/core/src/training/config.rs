use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::model::params::{DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM, DEFAULT_HIDDEN, DEFAULT_SEED};

/// Optimization hyperparameters. Defaults: batch 32, Adam at lr 0.01 with
/// β = (0.9, 0.999), ε = 1e-8, 50 epochs over 3-second chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub chunk_seconds: f64,
    pub seed: u64,
    pub use_batchnorm: bool,
    pub frontend: FeatureKind,
    pub hidden: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    /// Global gradient-norm clip; off unless set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 50,
            chunk_seconds: 3.0,
            seed: DEFAULT_SEED,
            use_batchnorm: false,
            frontend: FeatureKind::Mel,
            hidden: DEFAULT_HIDDEN,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_epsilon: DEFAULT_BN_EPSILON,
            clip_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1");
        }
        if self.batch_size == 0 || (self.use_batchnorm && self.batch_size < 2) {
            return bad("batch_size must be ≥ 1 (≥ 2 with batch-norm)");
        }
        if !(self.chunk_seconds > 0.0) {
            return bad("chunk_seconds must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.bn_epsilon > 0.0) {
            return bad("bn_momentum must be in [0, 1] and bn_epsilon positive");
        }
        if let Some(c) = self.clip_grad_norm {
            if !(c > 0.0) {
                return bad("clip_grad_norm must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_parse_from_partial_toml() {
        TrainConfig::default().validate().unwrap();
        let c: TrainConfig = toml::from_str("epochs = 3\nuse_batchnorm = true\nfrontend = \"external\"").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.frontend, FeatureKind::External);
        assert!(toml::from_str::<TrainConfig>("epoch = 3").is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = TrainConfig::default();
        c.beta2 = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            use_batchnorm: true,
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
