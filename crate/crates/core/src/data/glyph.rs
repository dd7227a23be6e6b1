use std::io::{Read, Write};
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, ExtendedColorType, GrayImage, ImageBuffer, ImageDecoder, ImageReader, Luma};

use crate::error::{Error, Result};

/// Side length of every model-facing glyph image.
pub const GLYPH_SIZE: usize = 256;

const CACHE_MAGIC: &[u8; 4] = b"BGI1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Monochrome,
    Gray8,
    Gray16,
}

/// A decoded bitmap before normalization. Intensities are in `[0, 1]` with
/// 0 = ink and 1 = paper.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGlyphImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    bit_depth: BitDepth,
}

impl RawGlyphImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, bit_depth: BitDepth) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("degenerate size {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidImage("intensity outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            bit_depth,
        })
    }

    /// Filled with a single intensity.
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], BitDepth::Gray8)
    }

    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let pixels = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self::new(w as usize, h as usize, pixels, BitDepth::Gray8)
    }

    /// Decodes a PNG (or any format the codec recognizes) into single-channel intensities.
    pub fn load(path: &Path) -> Result<Self> {
        let decoder = ImageReader::open(path)?
            .with_guessed_format()?
            .into_decoder()?;
        let bit_depth = match decoder.original_color_type() {
            ExtendedColorType::L1 | ExtendedColorType::La1 => BitDepth::Monochrome,
            ExtendedColorType::L16 | ExtendedColorType::La16 => BitDepth::Gray16,
            _ => BitDepth::Gray8,
        };
        let img = DynamicImage::from_decoder(decoder)?.to_luma32f();
        let (w, h) = img.dimensions();
        let pixels = img.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(w as usize, h as usize, pixels, bit_depth)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }
}

/// A `256×256` single-channel image with intensities in `[-1, 1]`
/// (-1 = full ink, +1 = paper).
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphImage {
    pixels: Vec<f32>,
}

impl GlyphImage {
    pub const SIZE: usize = GLYPH_SIZE;
    pub const LEN: usize = GLYPH_SIZE * GLYPH_SIZE;

    pub fn from_pixels(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != Self::LEN {
            return Err(Error::Shape(format!(
                "glyph image needs {} pixels, got {}",
                Self::LEN,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
            return Err(Error::InvalidImage(format!("value {bad} outside [-1, 1]")));
        }
        Ok(Self { pixels })
    }

    pub fn constant(value: f32) -> Self {
        assert!((-1.0..=1.0).contains(&value));
        Self {
            pixels: vec![value; Self::LEN],
        }
    }

    pub fn blank() -> Self {
        Self::constant(1.0)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * Self::SIZE + col]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            pixels: self.pixels.iter().map(|&v| f(v).clamp(-1.0, 1.0)).collect(),
        }
    }

    /// Real-valued 8-bit scale, `-1 → 0`, `+1 → 255`, without rounding.
    pub fn to_intensity_255(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|&v| (v as f64 + 1.0) * 127.5)
            .collect()
    }

    pub fn to_gray_image(&self) -> GrayImage {
        let buf = self
            .pixels
            .iter()
            .map(|&v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::from_raw(Self::SIZE as u32, Self::SIZE as u32, buf)
            .expect("buffer length matches glyph size")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image().save(path)?;
        Ok(())
    }

    /// Lossless little-endian f32 dump used by the normalized-image cache.
    pub fn write_cache(&self, mut out: impl Write) -> Result<()> {
        out.write_all(CACHE_MAGIC)?;
        for v in &self.pixels {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::InvalidImage("not a cached glyph tensor".into()));
        }
        let mut bytes = vec![0u8; Self::LEN * 4];
        input.read_exact(&mut bytes)?;
        let pixels = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_pixels(pixels)
    }
}

/// Scaled size of a `width×height` image whose long side becomes `target`,
/// rounding the short side half-up.
pub fn scaled_dimensions(width: usize, height: usize, target: usize) -> (usize, usize) {
    let long = width.max(height);
    let scale = |side: usize| ((2 * side * target + long) / (2 * long)).max(1);
    if width >= height {
        (target, scale(height))
    } else {
        (scale(width), target)
    }
}

// Kernel weights do not sum to exactly one in f32, so flat regions come
// back a few ulps off the range ends.
fn snap_unit(v: f32) -> f32 {
    const TOL: f32 = 1e-5;
    if v >= 1.0 - TOL {
        1.0
    } else if v <= TOL {
        0.0
    } else {
        v
    }
}

/// Scales the long side to 256 with a 3-lobe Lanczos kernel, centers the
/// result on a white canvas and maps intensities linearly to `[-1, 1]`.
/// When padding is odd the extra pixel goes to the right/bottom.
pub fn normalize_ground_truth(raw: &RawGlyphImage) -> Result<GlyphImage> {
    let (w, h) = (raw.width, raw.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidImage("zero-sized image".into()));
    }
    let (nw, nh) = scaled_dimensions(w, h, GLYPH_SIZE);
    let scaled: Vec<f32> = if (nw, nh) == (w, h) {
        raw.pixels.clone()
    } else {
        let src: ImageBuffer<Luma<f32>, Vec<f32>> =
            ImageBuffer::from_raw(w as u32, h as u32, raw.pixels.clone())
                .ok_or_else(|| Error::InvalidImage("buffer size".into()))?;
        imageops::resize(&src, nw as u32, nh as u32, FilterType::Lanczos3).into_raw()
    };
    let x0 = (GLYPH_SIZE - nw) / 2;
    let y0 = (GLYPH_SIZE - nh) / 2;
    let mut pixels = vec![1.0f32; GlyphImage::LEN];
    for row in 0..nh {
        let dst = &mut pixels[(y0 + row) * GLYPH_SIZE + x0..][..nw];
        for (d, &s) in dst.iter_mut().zip(&scaled[row * nw..(row + 1) * nw]) {
            *d = 2.0 * snap_unit(s) - 1.0;
        }
    }
    GlyphImage::from_pixels(pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ink(width: usize, height: usize) -> RawGlyphImage {
        RawGlyphImage::filled(width, height, 0.0).unwrap()
    }

    fn content_columns(img: &GlyphImage) -> Vec<usize> {
        (0..GLYPH_SIZE)
            .filter(|&c| (0..GLYPH_SIZE).any(|r| img.get(r, c) < 1.0))
            .collect()
    }

    fn content_rows(img: &GlyphImage) -> Vec<usize> {
        (0..GLYPH_SIZE)
            .filter(|&r| (0..GLYPH_SIZE).any(|c| img.get(r, c) < 1.0))
            .collect()
    }

    #[test]
    fn scaled_dims() {
        assert_eq!(scaled_dimensions(100, 140, 256), (183, 256));
        assert_eq!(scaled_dimensions(140, 100, 256), (256, 183));
        assert_eq!(scaled_dimensions(140, 140, 256), (256, 256));
        assert_eq!(scaled_dimensions(1, 1000, 256), (1, 256));
        // 70*256/140 = 128 exactly
        assert_eq!(scaled_dimensions(140, 70, 256), (256, 128));
    }

    #[test]
    fn tall_input_is_centered_horizontally() {
        // 140 rows by 100 columns
        let img = normalize_ground_truth(&ink(100, 140)).unwrap();
        let cols = content_columns(&img);
        assert_eq!(cols.first(), Some(&36));
        assert_eq!(cols.len(), 183);
        assert_eq!(cols.last(), Some(&218));
        assert_eq!(content_rows(&img).len(), 256);
        for r in 0..GLYPH_SIZE {
            for c in (0..36).chain(220..256) {
                assert_eq!(img.get(r, c), 1.0);
            }
        }
    }

    #[test]
    fn wide_input_is_centered_vertically() {
        let img = normalize_ground_truth(&ink(140, 100)).unwrap();
        let rows = content_rows(&img);
        assert_eq!(rows.len(), 183);
        assert_eq!(rows[0], 36);
        assert_eq!(content_columns(&img).len(), 256);
    }

    #[test]
    fn white_stays_white() {
        let img = normalize_ground_truth(&RawGlyphImage::filled(140, 140, 1.0).unwrap()).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn no_rebinarization() {
        // a hard edge produces intermediate gray levels after upsampling
        let mut px = vec![1.0f32; 140 * 140];
        for r in 0..140 {
            for c in 0..70 {
                px[r * 140 + c] = 0.0;
            }
        }
        let raw = RawGlyphImage::new(140, 140, px, BitDepth::Monochrome).unwrap();
        let img = normalize_ground_truth(&raw).unwrap();
        assert!(img.pixels().iter().any(|&v| v > -0.99 && v < 0.99));
        assert!(img.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn degenerate_image_rejected() {
        assert!(matches!(
            RawGlyphImage::new(0, 5, vec![], BitDepth::Gray8),
            Err(Error::InvalidImage(_))
        ));
    }

    #[test]
    fn cache_round_trip() {
        let img = GlyphImage::from_pixels(
            (0..GlyphImage::LEN).map(|i| ((i % 7) as f32 / 3.0) - 1.0).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        img.write_cache(&mut buf).unwrap();
        assert_eq!(GlyphImage::read_cache(buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn eight_bit_mapping() {
        let g = GlyphImage::constant(-1.0).to_gray_image();
        assert!(g.as_raw().iter().all(|&v| v == 0));
        let g = GlyphImage::constant(1.0).to_gray_image();
        assert!(g.as_raw().iter().all(|&v| v == 255));
    }
}
