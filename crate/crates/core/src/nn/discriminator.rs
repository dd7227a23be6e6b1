use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;

use super::config::{NetworkConfig, StyleMode};
use super::layers::{BatchNorm2d, Conv2d, Forward, Linear};
use super::params::ParamStore;
use crate::error::{Error, Result};

const KERNEL: usize = 5;
const STRIDES: [usize; 3] = [1, 2, 2];

pub struct DiscriminatorOutput {
    /// `(batch,)` real/fake logits.
    pub realness: Tensor,
    /// `(batch, styles)` style logits; absent when the style branch is disabled.
    pub style_logits: Option<Tensor>,
}

/// Pair discriminator with an auxiliary style classifier sharing the three
/// convolution blocks.
#[derive(Clone, Debug)]
pub struct Discriminator {
    config: NetworkConfig,
    params: ParamStore,
    buffers: ParamStore,
    blocks: Vec<(Conv2d, BatchNorm2d)>,
    realness_head: Linear,
    style_head: Option<Linear>,
}

impl Discriminator {
    pub fn new(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut buffers = ParamStore::new();
        let mut blocks = Vec::with_capacity(3);
        let mut c_in = 2;
        for (i, stride) in STRIDES.iter().enumerate() {
            let c_out = config.disc_base_channels << i;
            let name = format!("disc.conv.{}", i + 1);
            let conv = Conv2d::new(&mut params, &name, c_in, c_out, KERNEL, *stride, rng)?;
            let bn = BatchNorm2d::new(&mut params, &mut buffers, &format!("{name}.bn"), c_out, rng)?;
            blocks.push((conv, bn));
            c_in = c_out;
        }
        let features = Self::feature_len(config);
        let realness_head = Linear::new(&mut params, "disc.head.real", features, 1, rng)?;
        let style_head = if config.style_mode == StyleMode::Disabled {
            None
        } else {
            Some(Linear::new(&mut params, "disc.head.style", features, config.styles, rng)?)
        };
        Ok(Self {
            config: config.clone(),
            params,
            buffers,
            blocks,
            realness_head,
            style_head,
        })
    }

    fn feature_len(config: &NetworkConfig) -> usize {
        let side = config.image_side() / 4;
        (config.disc_base_channels << 2) * side * side
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn buffers(&self) -> &ParamStore {
        &self.buffers
    }

    /// Outputs of the three shared blocks.
    pub fn trunk_layers(&self, source: &Tensor, image: &Tensor, fwd: &mut Forward) -> Result<Vec<Tensor>> {
        let side = self.config.image_side();
        for (what, t) in [("source", source), ("image", image)] {
            let d = t.dims();
            if d.len() != 4 || d[1] != 1 || d[2] != side || d[3] != side {
                return Err(Error::Shape(format!(
                    "discriminator {what} must be (batch, 1, {side}, {side}), got {d:?}"
                )));
            }
        }
        if source.dim(0)? != image.dim(0)? {
            return Err(Error::Shape("discriminator pair batch sizes differ".into()));
        }
        let mut h = Tensor::cat(&[source, image], 1)?;
        let mut out = Vec::with_capacity(3);
        for (conv, bn) in &self.blocks {
            h = bn.forward(&conv.forward(&h)?, fwd)?.relu()?;
            out.push(h.clone());
        }
        Ok(out)
    }

    pub fn forward(&self, source: &Tensor, image: &Tensor, fwd: &mut Forward) -> Result<DiscriminatorOutput> {
        let trunk = self
            .trunk_layers(source, image, fwd)?
            .pop()
            .expect("three blocks");
        let features = trunk.flatten_from(1)?;
        let realness = self.realness_head.forward(&features)?.squeeze(1)?;
        let style_logits = self
            .style_head
            .as_ref()
            .map(|h| h.forward(&features))
            .transpose()?;
        Ok(DiscriminatorOutput {
            realness,
            style_logits,
        })
    }

    pub fn style_head(&self) -> Option<&Linear> {
        self.style_head.as_ref()
    }
}
