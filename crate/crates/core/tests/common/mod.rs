//! Synthetic glyphs and samples shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::path::Path;

use brushgan::data::{GlyphImage, RawGlyphImage, StyleLabel, TrainingSample};
use brushgan::{CharacterCode, ComponentSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_VOCAB: u16 = 40;

/// First `n` characters of the CJK block, used as toy character codes.
pub fn toy_chars(n: usize) -> Vec<CharacterCode> {
    (0..n as u32)
        .map(|i| CharacterCode::new(char::from_u32(0x4E00 + i).unwrap()))
        .collect()
}

/// Deterministic rectangle strokes for character `index`, as fractions of the box.
fn strokes(index: usize) -> Vec<(f32, f32, f32, f32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + index as u64);
    let n = rng.random_range(2..5);
    (0..n)
        .map(|_| {
            let horizontal = rng.random_bool(0.5);
            let a = rng.random_range(0.15..0.75f32);
            let b = rng.random_range(0.15..0.75f32);
            let len = rng.random_range(0.2..0.6f32);
            if horizontal {
                (a, b, (a + len).min(0.9), b + 0.06)
            } else {
                (a, b, a + 0.06, (b + len).min(0.9))
            }
        })
        .collect()
}

/// Black strokes on white, `width×height`, intensities in `[0, 1]`. `weight`
/// thickens strokes and `shear` slants them, standing in for a brush style.
pub fn stroke_raw(index: usize, width: usize, height: usize, weight: f32, shear: f32) -> RawGlyphImage {
    let mut px = vec![1.0f32; width * height];
    for (x0, y0, x1, y1) in strokes(index) {
        for r in 0..height {
            let y = r as f32 / height as f32;
            let dx = shear * (y - 0.5);
            for c in 0..width {
                let x = c as f32 / width as f32 - dx;
                let inside = x >= x0 - weight && x <= x1 + weight && y >= y0 - weight && y <= y1 + weight;
                if inside {
                    px[r * width + c] = 0.0;
                }
            }
        }
    }
    RawGlyphImage::new(width, height, px, brushgan::data::BitDepth::Gray8).unwrap()
}

pub fn source_glyph(index: usize) -> GlyphImage {
    brushgan::data::normalize_ground_truth(&stroke_raw(index, 256, 256, 0.0, 0.0)).unwrap()
}

pub fn target_glyph(index: usize, style: u16) -> GlyphImage {
    let weight = 0.01 * style as f32;
    let shear = 0.08 * (style as f32 - 1.0);
    brushgan::data::normalize_ground_truth(&stroke_raw(index, 140, 140, weight, shear)).unwrap()
}

pub fn components(index: usize) -> ComponentSequence {
    let a = (index % (TOY_VOCAB as usize - 1)) as u16 + 1;
    let b = ((index * 7 + 3) % (TOY_VOCAB as usize - 1)) as u16 + 1;
    let len = 1 + index % 3;
    ComponentSequence::from_raw(&[a, b, a.max(b)][..len], TOY_VOCAB).unwrap()
}

/// `n` samples cycling through `styles` styles.
pub fn toy_samples(n: usize, styles: usize) -> Vec<TrainingSample> {
    let chars = toy_chars(n);
    (0..n)
        .map(|i| {
            let style = (i % styles) as u16 + 1;
            TrainingSample {
                character: chars[i],
                style: StyleLabel::new(style, styles).unwrap(),
                source: source_glyph(i),
                target: target_glyph(i, style),
                components: components(i),
            }
        })
        .collect()
}

pub fn save_raw_png(raw: &RawGlyphImage, path: &Path) {
    let buf: Vec<u8> = raw
        .pixels()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    image::GrayImage::from_raw(raw.width() as u32, raw.height() as u32, buf)
        .unwrap()
        .save(path)
        .unwrap();
}

/// Writes `<root>/<style>/<HEX>.png` ground truth (140 px long side) for every
/// style and character, plus `<root>/source/<HEX>.png` at 256×256.
pub fn write_toy_corpus(root: &Path, styles: u16, chars: &[CharacterCode]) {
    for (i, ch) in chars.iter().enumerate() {
        let src = root.join("source");
        std::fs::create_dir_all(&src).unwrap();
        save_raw_png(&stroke_raw(i, 256, 256, 0.0, 0.0), &src.join(format!("{}.png", ch.hex())));
        for s in 1..=styles {
            let dir = root.join(s.to_string());
            std::fs::create_dir_all(&dir).unwrap();
            let (w, h) = if i % 2 == 0 { (140, 120) } else { (110, 140) };
            let raw = stroke_raw(i, w, h, 0.01 * s as f32, 0.08 * (s as f32 - 1.0));
            save_raw_png(&raw, &dir.join(format!("{}.png", ch.hex())));
        }
    }
}

/// Narrow 256×256 networks that train in a few seconds per step on one core.
pub fn toy_config(styles: usize) -> brushgan::train::TrainConfig {
    brushgan::train::TrainConfig {
        batch_size: 4,
        epochs: 2,
        styles_count: styles,
        vocab_size: TOY_VOCAB,
        base_channels: 4,
        max_channels: 32,
        disc_base_channels: 2,
        style_embedding_dim: 16,
        final_dropout: false,
        ..brushgan::train::TrainConfig::default()
    }
}
