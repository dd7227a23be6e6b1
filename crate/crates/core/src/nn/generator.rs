use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;

use super::config::{NetworkConfig, StyleMode};
use super::layers::{dropout, leaky_relu, BatchNorm2d, Conv2d, ConvTranspose2d, Embedding, Forward, Lstm};
use super::params::ParamStore;
use crate::components::ComponentSequence;
use crate::data::StyleLabel;
use crate::error::{Error, Result};

const KERNEL: usize = 5;
const LEAKY_SLOPE: f64 = 0.2;

/// Activations of encoder layers `1..depth`, consumed by the decoder's skip connections.
#[derive(Clone, Debug)]
pub struct SkipStack(pub Vec<Tensor>);

impl SkipStack {
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.0.iter().map(|t| t.dims().to_vec()).collect()
    }

    pub fn zeros_like(&self) -> Result<Self> {
        Ok(Self(
            self.0
                .iter()
                .map(|t| t.zeros_like())
                .collect::<candle_core::Result<_>>()?,
        ))
    }
}

/// Eight stride-2 convolutions, each followed by batch norm and LeakyReLU(0.2).
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    layers: Vec<(Conv2d, BatchNorm2d)>,
    side: usize,
}

impl ImageEncoder {
    fn new(
        cfg: &NetworkConfig,
        params: &mut ParamStore,
        buffers: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(cfg.depth);
        let mut c_in = 1;
        for l in 1..=cfg.depth {
            let c_out = cfg.encoder_channels(l);
            let name = format!("gen.enc.{l}");
            let conv = Conv2d::new(params, &name, c_in, c_out, KERNEL, 2, rng)?;
            let bn = BatchNorm2d::new(params, buffers, &format!("{name}.bn"), c_out, rng)?;
            layers.push((conv, bn));
            c_in = c_out;
        }
        Ok(Self {
            layers,
            side: cfg.image_side(),
        })
    }

    /// Returns the flattened innermost feature `(batch, channels)` and the
    /// outer layer activations.
    pub fn forward(&self, x: &Tensor, fwd: &mut Forward) -> Result<(Tensor, SkipStack)> {
        let dims = x.dims();
        if dims.len() != 4 || dims[1] != 1 || dims[2] != self.side || dims[3] != self.side {
            return Err(Error::Shape(format!(
                "image encoder expects (batch, 1, {0}, {0}), got {dims:?}",
                self.side
            )));
        }
        let mut h = x.clone();
        let mut skips = Vec::with_capacity(self.layers.len() - 1);
        for (i, (conv, bn)) in self.layers.iter().enumerate() {
            h = leaky_relu(&bn.forward(&conv.forward(&h)?, fwd)?, LEAKY_SLOPE)?;
            if i + 1 < self.layers.len() {
                skips.push(h.clone());
            }
        }
        Ok((h.flatten_from(1)?, SkipStack(skips)))
    }
}

/// Embedding table followed by an LSTM; the last hidden state is the feature.
#[derive(Clone, Debug)]
pub struct ComponentEncoder {
    embedding: Embedding,
    lstm: Lstm,
    vocab_size: u16,
}

impl ComponentEncoder {
    fn new(cfg: &NetworkConfig, params: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            embedding: Embedding::new(
                params,
                "gen.comp.embedding",
                cfg.vocab_size as usize,
                cfg.component_embedding_dim,
                rng,
            )?,
            lstm: Lstm::new(
                params,
                "gen.comp.lstm",
                cfg.component_embedding_dim,
                cfg.component_hidden,
                rng,
            )?,
            vocab_size: cfg.vocab_size,
        })
    }

    pub fn forward(&self, seqs: &[&ComponentSequence]) -> Result<Tensor> {
        if seqs.is_empty() {
            return Err(Error::InvalidSequence("empty batch".into()));
        }
        let t_max = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * t_max);
        let mut lengths = Vec::with_capacity(seqs.len());
        for seq in seqs {
            if seq.is_empty() {
                return Err(Error::InvalidSequence("empty component sequence".into()));
            }
            for id in seq.ids() {
                if id.get() > self.vocab_size {
                    return Err(Error::range(
                        "component id",
                        id.get() as i64,
                        1,
                        self.vocab_size as i64,
                    ));
                }
                ids.push(id.index() as u32);
            }
            // padded steps are masked out inside the LSTM
            ids.extend(std::iter::repeat_n(0u32, t_max - seq.len()));
            lengths.push(seq.len());
        }
        let emb = self
            .embedding
            .rows(&ids)?
            .reshape((seqs.len(), t_max, self.embedding.dim()))?;
        self.lstm.final_hidden(&emb, &lengths)
    }
}

#[derive(Clone, Debug)]
pub enum StyleEncoder {
    Onehot { styles: usize },
    Embedding { table: Embedding, styles: usize },
    Disabled,
}

impl StyleEncoder {
    fn new(cfg: &NetworkConfig, params: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(match cfg.style_mode {
            StyleMode::Onehot => StyleEncoder::Onehot { styles: cfg.styles },
            StyleMode::Embedding => StyleEncoder::Embedding {
                table: Embedding::new(params, "gen.style.embedding", cfg.styles, cfg.style_embedding_dim, rng)?,
                styles: cfg.styles,
            },
            StyleMode::Disabled => StyleEncoder::Disabled,
        })
    }

    /// `(batch, len)` style vectors, or `None` when the branch is disabled.
    pub fn forward(&self, styles: &[StyleLabel]) -> Result<Option<Tensor>> {
        let check = |n: usize| {
            styles.iter().try_for_each(|s| {
                StyleLabel::new(s.get(), n).map(|_| ())
            })
        };
        match self {
            StyleEncoder::Onehot { styles: n } => {
                check(*n)?;
                let mut data = vec![0f32; styles.len() * n];
                for (row, s) in styles.iter().enumerate() {
                    data[row * n + s.index()] = 1.0;
                }
                Ok(Some(Tensor::from_vec(data, (styles.len(), *n), &Device::Cpu)?))
            }
            StyleEncoder::Embedding { table, styles: n } => {
                check(*n)?;
                let ids: Vec<u32> = styles.iter().map(|s| s.index() as u32).collect();
                Ok(Some(table.rows(&ids)?))
            }
            StyleEncoder::Disabled => Ok(None),
        }
    }
}

/// Mirror of the encoder: transposed convolutions with batch norm and ReLU,
/// and a final tanh layer preceded by optional dropout.
#[derive(Clone, Debug)]
pub struct Decoder {
    layers: Vec<(ConvTranspose2d, Option<BatchNorm2d>)>,
    condition_len: usize,
    dropout_rate: f64,
}

impl Decoder {
    fn new(
        cfg: &NetworkConfig,
        params: &mut ParamStore,
        buffers: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(cfg.depth);
        for l in 1..=cfg.depth {
            let c_in = if l == 1 {
                cfg.condition_len()
            } else {
                2 * cfg.decoder_channels(l - 1)
            };
            let c_out = cfg.decoder_channels(l);
            let name = format!("gen.dec.{l}");
            let deconv = ConvTranspose2d::new(params, &name, c_in, c_out, KERNEL, rng)?;
            let bn = if l < cfg.depth {
                Some(BatchNorm2d::new(params, buffers, &format!("{name}.bn"), c_out, rng)?)
            } else {
                None
            };
            layers.push((deconv, bn));
        }
        Ok(Self {
            layers,
            condition_len: cfg.condition_len(),
            dropout_rate: if cfg.final_dropout { cfg.dropout_rate } else { 0.0 },
        })
    }

    /// All layer outputs, outermost last.
    pub fn forward_layers(
        &self,
        condition: &Tensor,
        skips: &SkipStack,
        fwd: &mut Forward,
    ) -> Result<Vec<Tensor>> {
        let (b, len) = condition.dims2()?;
        if len != self.condition_len {
            return Err(Error::Shape(format!(
                "decoder expects a condition of length {}, got {len}",
                self.condition_len
            )));
        }
        let depth = self.layers.len();
        if skips.0.len() != depth - 1 {
            return Err(Error::Shape(format!(
                "decoder expects {} skip activations, got {}",
                depth - 1,
                skips.0.len()
            )));
        }
        let mut outputs = Vec::with_capacity(depth);
        let mut h = condition.reshape((b, len, 1, 1))?;
        for (i, (deconv, bn)) in self.layers.iter().enumerate() {
            let layer = i + 1;
            if layer > 1 {
                let skip = &skips.0[depth - layer];
                if skip.dims() != h.dims() {
                    return Err(Error::Shape(format!(
                        "skip for decoder layer {layer} has shape {:?}, expected {:?}",
                        skip.dims(),
                        h.dims()
                    )));
                }
                h = Tensor::cat(&[&h, skip], 1)?;
            }
            h = match bn {
                Some(bn) => bn.forward(&deconv.forward(&h)?, fwd)?.relu()?,
                None => {
                    let h = dropout(&h, self.dropout_rate, fwd)?;
                    deconv.forward(&h)?.tanh()?
                }
            };
            outputs.push(h.clone());
        }
        Ok(outputs)
    }

    pub fn forward(&self, condition: &Tensor, skips: &SkipStack, fwd: &mut Forward) -> Result<Tensor> {
        Ok(self
            .forward_layers(condition, skips, fwd)?
            .pop()
            .expect("decoder has at least one layer"))
    }
}

/// Batched generator input.
pub struct GeneratorInput<'a> {
    /// `(batch, 1, side, side)` source glyphs.
    pub source: Tensor,
    pub styles: &'a [StyleLabel],
    pub components: &'a [&'a ComponentSequence],
}

pub struct GeneratorOutput {
    pub image: Tensor,
    /// Encoder feature of the source, `(batch, image_feature_len)`.
    pub image_feature: Tensor,
}

/// Image encoder, component encoder, style vector and decoder.
#[derive(Clone, Debug)]
pub struct Generator {
    config: NetworkConfig,
    params: ParamStore,
    buffers: ParamStore,
    pub encoder: ImageEncoder,
    pub component_encoder: Option<ComponentEncoder>,
    pub style_encoder: StyleEncoder,
    pub decoder: Decoder,
}

impl Generator {
    pub fn new(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut buffers = ParamStore::new();
        let encoder = ImageEncoder::new(config, &mut params, &mut buffers, rng)?;
        let component_encoder = if config.components_enabled {
            Some(ComponentEncoder::new(config, &mut params, rng)?)
        } else {
            None
        };
        let style_encoder = StyleEncoder::new(config, &mut params, rng)?;
        let decoder = Decoder::new(config, &mut params, &mut buffers, rng)?;
        Ok(Self {
            config: config.clone(),
            params,
            buffers,
            encoder,
            component_encoder,
            style_encoder,
            decoder,
        })
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

    pub fn encode_image(&self, x: &Tensor, fwd: &mut Forward) -> Result<(Tensor, SkipStack)> {
        self.encoder.forward(x, fwd)
    }

    pub fn encode_components(&self, seqs: &[&ComponentSequence]) -> Result<Option<Tensor>> {
        self.component_encoder
            .as_ref()
            .map(|e| e.forward(seqs))
            .transpose()
    }

    pub fn style_vectors(&self, styles: &[StyleLabel]) -> Result<Option<Tensor>> {
        self.style_encoder.forward(styles)
    }

    /// Concatenates `[v_i | v_s | v_c]`, skipping disabled branches.
    pub fn condition(
        &self,
        image_feature: &Tensor,
        style: Option<&Tensor>,
        components: Option<&Tensor>,
    ) -> Result<Tensor> {
        let mut parts = vec![image_feature];
        parts.extend(style);
        parts.extend(components);
        Ok(Tensor::cat(&parts, 1)?)
    }

    pub fn forward(&self, input: &GeneratorInput, fwd: &mut Forward) -> Result<GeneratorOutput> {
        let b = input.source.dim(0)?;
        if input.styles.len() != b || input.components.len() != b {
            return Err(Error::Shape(format!(
                "batch of {b} images with {} styles and {} component sequences",
                input.styles.len(),
                input.components.len()
            )));
        }
        let (v_i, skips) = self.encode_image(&input.source, fwd)?;
        let v_s = self.style_vectors(input.styles)?;
        let v_c = self.encode_components(input.components)?;
        let cond = self.condition(&v_i, v_s.as_ref(), v_c.as_ref())?;
        let image = self.decoder.forward(&cond, &skips, fwd)?;
        Ok(GeneratorOutput {
            image,
            image_feature: v_i,
        })
    }
}
