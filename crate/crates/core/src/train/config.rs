use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::DEFAULT_VOCAB_SIZE;
use crate::error::{Error, Result};
use crate::nn::{NetworkConfig, StyleMode};
use crate::objective::LossWeights;

/// How the learning rate behaves after the constant phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    /// Multiply by the decay factor once per epoch.
    PerEpoch,
    /// Multiply by the decay factor once, then hold.
    Single,
}

/// Flat training configuration; also the on-disk config file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    /// Epochs trained at `lr_initial` before decay starts.
    pub lr_constant_epochs: usize,
    pub lr_phase2_decay: f64,
    pub lr_decay: LrDecay,
    pub beta1: f64,
    pub beta2: f64,
    pub g_steps_per_d_step: usize,
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub style_mode: StyleMode,
    pub components_enabled: bool,
    pub seed: u64,
    pub styles_count: usize,
    pub vocab_size: u16,
    pub base_channels: usize,
    pub max_channels: usize,
    pub disc_base_channels: usize,
    pub style_embedding_dim: usize,
    pub final_dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 40,
            lr_initial: 0.001,
            lr_constant_epochs: 20,
            lr_phase2_decay: 0.5,
            lr_decay: LrDecay::PerEpoch,
            beta1: 0.5,
            beta2: 0.999,
            g_steps_per_d_step: 2,
            lambda_p: 100.0,
            lambda_c: 15.0,
            lambda_s: 1.0,
            style_mode: StyleMode::Onehot,
            components_enabled: true,
            seed: 0,
            styles_count: 7,
            vocab_size: DEFAULT_VOCAB_SIZE,
            base_channels: 64,
            max_channels: 512,
            disc_base_channels: 64,
            style_embedding_dim: 128,
            final_dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Applies a `key=value` override using the config-file syntax.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("round trip");
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        table.insert(key.to_string(), parsed);
        *self = Self::from_toml(&toml::to_string(&table).expect("table serializes"))?;
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_p: self.lambda_p,
            lambda_c: self.lambda_c,
            lambda_s: self.lambda_s,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            styles: self.styles_count,
            style_mode: self.style_mode,
            style_embedding_dim: self.style_embedding_dim,
            components_enabled: self.components_enabled,
            vocab_size: self.vocab_size,
            base_channels: self.base_channels,
            max_channels: self.max_channels,
            disc_base_channels: self.disc_base_channels,
            final_dropout: self.final_dropout,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr_initial.is_finite() && self.lr_initial >= 0.0) {
            return bad("lr_initial must be finite and non-negative");
        }
        if !(self.lr_phase2_decay > 0.0 && self.lr_phase2_decay <= 1.0) {
            return bad("lr_phase2_decay must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must be in [0, 1)");
        }
        if self.g_steps_per_d_step == 0 {
            return bad("g_steps_per_d_step must be at least 1");
        }
        self.weights().validate()?;
        self.network().validate()
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch == 0 || epoch > self.epochs {
            return Err(Error::range("epoch", epoch as i64, 1, self.epochs as i64));
        }
        if epoch <= self.lr_constant_epochs {
            return Ok(self.lr_initial);
        }
        Ok(match self.lr_decay {
            LrDecay::PerEpoch => {
                self.lr_initial * self.lr_phase2_decay.powi((epoch - self.lr_constant_epochs) as i32)
            }
            LrDecay::Single => self.lr_initial * self.lr_phase2_decay,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(1).unwrap(), 0.001);
        assert_eq!(cfg.lr_at(20).unwrap(), 0.001);
        assert_eq!(cfg.lr_at(21).unwrap(), 0.0005);
        assert_eq!(cfg.lr_at(22).unwrap(), 0.00025);
        assert!(matches!(cfg.lr_at(0), Err(Error::Range { .. })));
        assert!(matches!(cfg.lr_at(41), Err(Error::Range { .. })));
        let single = TrainConfig {
            lr_decay: LrDecay::Single,
            ..TrainConfig::default()
        };
        assert_eq!(single.lr_at(22).unwrap(), 0.0005);
        assert_eq!(single.lr_at(40).unwrap(), 0.0005);
    }

    #[test]
    fn schedule_is_non_increasing() {
        for decay in [LrDecay::PerEpoch, LrDecay::Single] {
            let cfg = TrainConfig {
                lr_decay: decay,
                ..TrainConfig::default()
            };
            let lrs: Vec<f64> = (1..=40).map(|e| cfg.lr_at(e).unwrap()).collect();
            assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = TrainConfig {
            seed: 9,
            style_mode: StyleMode::Embedding,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(TrainConfig::from_toml("batch_size = 4\nbogus = 1\n").is_err());
        let partial = TrainConfig::from_toml("batch_size = 4\nstyle_mode = \"disabled\"\n").unwrap();
        assert_eq!(partial.batch_size, 4);
        assert_eq!(partial.network().condition_len(), 768);
    }

    #[test]
    fn overrides() {
        let mut cfg = TrainConfig::default();
        cfg.set("epochs", "3").unwrap();
        cfg.set("style_mode", "embedding").unwrap();
        cfg.set("components_enabled", "false").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.style_mode, StyleMode::Embedding);
        assert!(!cfg.components_enabled);
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("batch_size", "0").is_err());
    }
}
