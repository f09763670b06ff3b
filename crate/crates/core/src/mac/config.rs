use serde::{Deserialize, Serialize};

use crate::datamodel::AttributeSchema;
use crate::error::{Error, Result};

use super::AdamConfig;

/// Network shape. Defaults: 512-wide trunk and branches, dropout 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct MacConfig {
    pub input_dim: usize,
    pub trunk_width: usize,
    pub branch_width: usize,
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    /// Weight of the old running statistic in the batch-norm moving average.
    pub bn_momentum: f64,
    pub schema: AttributeSchema,
}

impl MacConfig {
    pub fn new(input_dim: usize, schema: AttributeSchema) -> Self {
        Self {
            input_dim,
            trunk_width: 512,
            branch_width: 512,
            dropout_rate: 0.5,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
            schema,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.trunk_width == 0 || self.branch_width == 0 {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.bn_epsilon <= 0.0 || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("invalid batch-norm settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Per-epoch linear decay; `None` means `learning_rate / epochs`.
    pub lr_decay: Option<f64>,
    /// Lower bound of the decayed rate as a fraction of `learning_rate`.
    pub lr_floor_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            lr_decay: None,
            lr_floor_fraction: 0.1,
            batch_size: 1024,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    /// Learning rate used during epoch `epoch` (0-based): `lr - decay * epoch`,
    /// never below `lr_floor_fraction * lr`.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let decay = self.lr_decay.unwrap_or(self.learning_rate / self.epochs as f64);
        (self.learning_rate - decay * epoch as f64).max(self.lr_floor_fraction * self.learning_rate)
    }
}

/// Monte-Carlo dropout settings: `m` passes, weighting `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReliabilityConfig {
    pub num_passes: usize,
    pub alpha: f64,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        Self {
            num_passes: 100,
            alpha: 0.5,
        }
    }
}

impl ReliabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_passes < 2 {
            return Err(Error::Config(format!("num_passes must be >= 2, got {}", self.num_passes)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}
