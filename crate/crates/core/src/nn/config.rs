use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::components::DEFAULT_VOCAB_SIZE;
use crate::error::{Error, Result};

/// How the style label enters the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleMode {
    /// Unit basis vector of length `styles`.
    Onehot,
    /// Learned dense vector per style.
    Embedding,
    /// No style branch and no style classification loss (single-style models).
    Disabled,
}

impl fmt::Display for StyleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StyleMode::Onehot => "onehot",
            StyleMode::Embedding => "embedding",
            StyleMode::Disabled => "disabled",
        })
    }
}

impl FromStr for StyleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onehot" | "one-hot" => Ok(StyleMode::Onehot),
            "embedding" => Ok(StyleMode::Embedding),
            "disabled" | "none" => Ok(StyleMode::Disabled),
            _ => Err(Error::Config(format!(
                "unknown style mode {s:?} (expected onehot, embedding or disabled)"
            ))),
        }
    }
}

/// Architecture hyper-parameters shared by the generator and discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub styles: usize,
    pub style_mode: StyleMode,
    pub style_embedding_dim: usize,
    pub components_enabled: bool,
    pub vocab_size: u16,
    pub component_embedding_dim: usize,
    pub component_hidden: usize,
    /// Channels of the first encoder layer; doubles per layer up to `max_channels`.
    pub base_channels: usize,
    pub max_channels: usize,
    /// Number of encoder (and decoder) layers; the image side is `2^depth`.
    pub depth: usize,
    /// Channels of the first discriminator layer (doubled twice).
    pub disc_base_channels: usize,
    pub final_dropout: bool,
    pub dropout_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            styles: 7,
            style_mode: StyleMode::Onehot,
            style_embedding_dim: 128,
            components_enabled: true,
            vocab_size: DEFAULT_VOCAB_SIZE,
            component_embedding_dim: 128,
            component_hidden: 256,
            base_channels: 64,
            max_channels: 512,
            depth: 8,
            disc_base_channels: 64,
            final_dropout: true,
            dropout_rate: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn image_side(&self) -> usize {
        1 << self.depth
    }

    /// Output channels of encoder layer `layer` (1-based).
    pub fn encoder_channels(&self, layer: usize) -> usize {
        (self.base_channels << (layer - 1)).min(self.max_channels)
    }

    /// Output channels of decoder layer `layer` (1-based); mirrors the encoder.
    pub fn decoder_channels(&self, layer: usize) -> usize {
        if layer == self.depth {
            1
        } else {
            self.encoder_channels(self.depth - layer)
        }
    }

    pub fn image_feature_len(&self) -> usize {
        self.encoder_channels(self.depth)
    }

    pub fn style_vector_len(&self) -> usize {
        match self.style_mode {
            StyleMode::Onehot => self.styles,
            StyleMode::Embedding => self.style_embedding_dim,
            StyleMode::Disabled => 0,
        }
    }

    pub fn component_feature_len(&self) -> usize {
        if self.components_enabled {
            self.component_hidden
        } else {
            0
        }
    }

    /// Length of `[v_i | v_s | v_c]`.
    pub fn condition_len(&self) -> usize {
        self.image_feature_len() + self.style_vector_len() + self.component_feature_len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.depth < 2 || self.depth > 12 {
            return bad("depth must be in [2, 12]");
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return bad("channel widths must satisfy 0 < base_channels <= max_channels");
        }
        if self.disc_base_channels == 0 {
            return bad("disc_base_channels must be positive");
        }
        if self.styles == 0 {
            return bad("styles must be positive");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.components_enabled && (self.component_hidden == 0 || self.component_embedding_dim == 0) {
            return bad("component encoder widths must be positive");
        }
        if self.style_mode == StyleMode::Embedding && self.style_embedding_dim == 0 {
            return bad("style_embedding_dim must be positive");
        }
        Ok(())
    }
}
