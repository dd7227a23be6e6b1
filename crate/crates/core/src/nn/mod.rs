//! Generator (image encoder, component encoder, style vector, decoder) and
//! the pair discriminator with its auxiliary style classifier.

mod config;
mod conv;
mod discriminator;
mod generator;
pub mod layers;
mod params;

use candle_core::{Device, Tensor};

pub use config::{NetworkConfig, StyleMode};
pub use discriminator::{Discriminator, DiscriminatorOutput};
pub use generator::{
    ComponentEncoder, Decoder, Generator, GeneratorInput, GeneratorOutput, ImageEncoder, SkipStack,
    StyleEncoder,
};
pub use layers::Forward;
pub use params::{Init, ParamStore};

use crate::data::GlyphImage;
use crate::error::{Error, Result};

/// Stacks glyphs into a `(batch, 1, 256, 256)` tensor.
pub fn glyph_batch<'a>(images: impl IntoIterator<Item = &'a GlyphImage>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        data.extend_from_slice(img.pixels());
        n += 1;
    }
    let side = GlyphImage::SIZE;
    Ok(Tensor::from_vec(data, (n, 1, side, side), &Device::Cpu)?)
}

/// Splits a `(batch, 1, 256, 256)` tensor back into glyphs, clamping to `[-1, 1]`.
pub fn tensor_to_glyphs(t: &Tensor) -> Result<Vec<GlyphImage>> {
    let (b, c, h, w) = t.dims4()?;
    if c != 1 || h != GlyphImage::SIZE || w != GlyphImage::SIZE {
        return Err(Error::Shape(format!("expected (batch, 1, 256, 256), got {:?}", t.dims())));
    }
    let flat = t.flatten_all()?.to_vec1::<f32>()?;
    flat.chunks_exact(h * w)
        .take(b)
        .map(|px| GlyphImage::from_pixels(px.iter().map(|v| v.clamp(-1.0, 1.0)).collect()))
        .collect()
}
