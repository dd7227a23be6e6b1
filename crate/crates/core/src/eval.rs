//! MSE / SSIM between ground-truth and generated glyphs, and per-style reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::components::ComponentSequence;
use crate::data::{GlyphImage, StyleLabel, TrainingSample};
use crate::error::{Error, Result};
use crate::nn::{glyph_batch, tensor_to_glyphs, Forward, Generator, GeneratorInput};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 255.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub mse: f64,
    pub ssim: f64,
}

/// Mean squared difference on the 0–255 scale, divided by 255.
pub fn mse(y: &GlyphImage, y_hat: &GlyphImage) -> f64 {
    let a = y.to_intensity_255();
    let b = y_hat.to_intensity_255();
    let sum: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
    sum / a.len() as f64 / DYNAMIC_RANGE
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter over the fully-overlapping ("valid") window positions.
fn filter_valid(img: &[f64], side: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out = side - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; side * out];
    for r in 0..side {
        let line = &img[r * side..(r + 1) * side];
        for c in 0..out {
            rows[r * out + c] = w.iter().zip(&line[c..c + SSIM_WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut res = vec![0.0; out * out];
    for r in 0..out {
        for c in 0..out {
            res[r * out + c] = (0..SSIM_WINDOW).map(|k| w[k] * rows[(r + k) * out + c]).sum();
        }
    }
    res
}

/// Mean single-scale SSIM (11×11 Gaussian window, σ = 1.5, K1 = 0.01,
/// K2 = 0.03, dynamic range 255).
pub fn ssim(y: &GlyphImage, y_hat: &GlyphImage) -> f64 {
    ssim_map(&y.to_intensity_255(), &y_hat.to_intensity_255(), GlyphImage::SIZE)
        .iter()
        .sum::<f64>()
        / ((GlyphImage::SIZE - SSIM_WINDOW + 1).pow(2)) as f64
}

fn ssim_map(a: &[f64], b: &[f64], side: usize) -> Vec<f64> {
    let w = gaussian_window();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE).powi(2);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(a, side, &w);
    let mu_b = filter_valid(b, side, &w);
    let aa = filter_valid(&prod(a, a), side, &w);
    let bb = filter_valid(&prod(b, b), side, &w);
    let ab = filter_valid(&prod(a, b), side, &w);
    (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .collect()
}

pub fn metric_pair(y: &GlyphImage, y_hat: &GlyphImage) -> MetricPair {
    MetricPair {
        mse: mse(y, y_hat),
        ssim: ssim(y, y_hat),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StyleMetrics {
    pub mean: MetricPair,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_style: BTreeMap<StyleLabel, StyleMetrics>,
    pub overall: MetricPair,
    /// Test pairs that could not be evaluated (e.g. missing images).
    pub excluded: usize,
}

impl EvalReport {
    /// Aggregates per-sample metrics; `overall` is the sample-weighted mean.
    pub fn from_samples(metrics: impl IntoIterator<Item = (StyleLabel, MetricPair)>) -> Self {
        let mut sums: BTreeMap<StyleLabel, (f64, f64, usize)> = BTreeMap::new();
        for (s, m) in metrics {
            let e = sums.entry(s).or_default();
            e.0 += m.mse;
            e.1 += m.ssim;
            e.2 += 1;
        }
        let per_style: BTreeMap<_, _> = sums
            .into_iter()
            .map(|(s, (mse, ssim, n))| {
                (
                    s,
                    StyleMetrics {
                        mean: MetricPair {
                            mse: mse / n as f64,
                            ssim: ssim / n as f64,
                        },
                        samples: n,
                    },
                )
            })
            .collect();
        let total: usize = per_style.values().map(|m| m.samples).sum();
        let overall = if total == 0 {
            MetricPair::default()
        } else {
            let w = |f: fn(&MetricPair) -> f64| {
                per_style
                    .values()
                    .map(|m| f(&m.mean) * m.samples as f64)
                    .sum::<f64>()
                    / total as f64
            };
            MetricPair {
                mse: w(|m| m.mse),
                ssim: w(|m| m.ssim),
            }
        };
        Self {
            per_style,
            overall,
            excluded: 0,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.per_style.values().map(|m| m.samples).sum()
    }

    pub fn format_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<8}{:>10}{:>10}{:>10}", "Style", "Samples", "MSE", "SSIM").unwrap();
        for (s, m) in &self.per_style {
            writeln!(
                out,
                "{:<8}{:>10}{:>10.4}{:>10.4}",
                s.get(),
                m.samples,
                m.mean.mse,
                m.mean.ssim
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<8}{:>10}{:>10.4}{:>10.4}",
            "mean",
            self.sample_count(),
            self.overall.mse,
            self.overall.ssim
        )
        .unwrap();
        out
    }

    /// Tab-separated `style samples mse ssim` rows with full precision.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("style\tsamples\tmse\tssim\n");
        for (s, m) in &self.per_style {
            writeln!(out, "{}\t{}\t{}\t{}", s.get(), m.samples, m.mean.mse, m.mean.ssim).unwrap();
        }
        writeln!(
            out,
            "all\t{}\t{}\t{}",
            self.sample_count(),
            self.overall.mse,
            self.overall.ssim
        )
        .unwrap();
        out
    }
}

/// Runs the generator in inference mode on `(source, style, components)` triples.
pub fn generate(
    generator: &Generator,
    items: &[(&GlyphImage, StyleLabel, &ComponentSequence)],
    batch_size: usize,
) -> Result<Vec<GlyphImage>> {
    if generator.config().image_side() != GlyphImage::SIZE {
        return Err(Error::Shape(format!(
            "generator works on {0}x{0} images",
            generator.config().image_side()
        )));
    }
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch_size.max(1)) {
        let source = glyph_batch(chunk.iter().map(|(g, _, _)| *g))?;
        let styles: Vec<StyleLabel> = chunk.iter().map(|(_, s, _)| *s).collect();
        let comps: Vec<&ComponentSequence> = chunk.iter().map(|(_, _, c)| *c).collect();
        let input = GeneratorInput {
            source,
            styles: &styles,
            components: &comps,
        };
        let y = generator.forward(&input, &mut Forward::eval())?;
        out.extend(tensor_to_glyphs(&y.image)?);
    }
    Ok(out)
}

/// Generates every test sample with dropout off and aggregates metrics per style.
pub fn evaluate(generator: &Generator, samples: &[TrainingSample], batch_size: usize) -> Result<EvalReport> {
    let items: Vec<_> = samples
        .iter()
        .map(|s| (&s.source, s.style, &s.components))
        .collect();
    let generated = generate(generator, &items, batch_size)?;
    Ok(EvalReport::from_samples(
        samples
            .iter()
            .zip(&generated)
            .map(|(s, g)| (s.style, metric_pair(&s.target, g))),
    ))
}
