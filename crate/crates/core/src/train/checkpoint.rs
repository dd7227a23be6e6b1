use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::NetworkConfig;

const FORMAT: &str = "brushgan-checkpoint";
const VERSION: u32 = 1;

/// Position in the training schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// 1-based epoch currently being trained.
    pub epoch: usize,
    /// Index of the next batch within `epoch`.
    pub batch_index: usize,
    /// Completed training steps.
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || Error::Checkpoint("corrupt rng state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    train_config: TrainConfig,
    network: NetworkConfig,
    progress: Progress,
    rng: RngState,
    g_updates: u64,
    d_updates: u64,
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub train_config: TrainConfig,
    pub network: NetworkConfig,
    pub progress: Progress,
    pub rng: RngState,
    pub g_updates: u64,
    pub d_updates: u64,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Writes to a temporary sibling and renames it into place, so a failed
    /// write leaves any previous file at `path` untouched.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            train_config: self.train_config.clone(),
            network: self.network.clone(),
            progress: self.progress,
            rng: self.rng.clone(),
            g_updates: self.g_updates,
            d_updates: self.d_updates,
        };
        let meta = HashMap::from([(
            "brushgan".to_string(),
            serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?,
        )]);
        let bytes = safetensors::serialize(self.tensors.iter(), Some(meta))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        if let Err(e) = std::fs::write(&tmp, &bytes) {
            let _ = std::fs::remove_file(&tmp);
            return Err(e.into());
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let (_, meta) = safetensors::SafeTensors::read_metadata(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let raw = meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get("brushgan"))
            .ok_or_else(|| Error::Checkpoint(format!("{} has no brushgan header", path.display())))?;
        let header: Header =
            serde_json::from_str(raw).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                header.format, header.version
            )));
        }
        let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?
            .into_iter()
            .collect();
        Ok(Self {
            train_config: header.train_config,
            network: header.network,
            progress: header.progress,
            rng: header.rng,
            g_updates: header.g_updates,
            d_updates: header.d_updates,
            tensors,
        })
    }

    /// Tensors whose names start with `prefix`, with the prefix removed.
    pub fn group(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        self.tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|n| (n.to_string(), v.clone())))
            .collect()
    }

    /// Fails unless the stored architecture equals `expected`.
    pub fn require_network(&self, expected: &NetworkConfig) -> Result<()> {
        if &self.network != expected {
            return Err(Error::Config(format!(
                "checkpoint network configuration {:?} does not match requested {:?}",
                self.network, expected
            )));
        }
        Ok(())
    }
}
