//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use brushgan::GlyphImage;

const SIDE: usize = 256;

/// −log σ(x) evaluated directly; accurate for the magnitudes sampled here.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    (1.0 + (-x).exp()).ln()
}

pub fn softmax_nll(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    -((logits[label] - m).exp() / z).ln()
}

/// Reference SSIM: full 2-D Gaussian window evaluated directly at every
/// valid position, with weighted moments taken around the local mean.
pub fn reference_ssim(a: &GlyphImage, b: &GlyphImage) -> f64 {
    let to8 = |g: &GlyphImage| -> Vec<f64> {
        g.pixels().iter().map(|&v| (f64::from(v) + 1.0) / 2.0 * 255.0).collect()
    };
    let (x, y) = (to8(a), to8(b));
    let win = 11;
    let sigma: f64 = 1.5;
    let mut kernel = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            kernel[i * win + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let out = SIDE - win + 1;
    let mut acc = 0.0;
    for r in 0..out {
        for c in 0..out {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kernel[i * win + j];
                    let p = (r + i) * SIDE + c + j;
                    mx += k * x[p];
                    my += k * y[p];
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kernel[i * win + j];
                    let p = (r + i) * SIDE + c + j;
                    let (dx, dy) = (x[p] - mx, y[p] - my);
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cov += k * dx * dy;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    acc / (out * out) as f64
}

pub fn reference_mse(a: &GlyphImage, b: &GlyphImage) -> f64 {
    let mut sum = 0.0;
    for i in 0..GlyphImage::LEN {
        let d = (f64::from(a.pixels()[i]) - f64::from(b.pixels()[i])) * 127.5;
        sum += d * d;
    }
    sum / GlyphImage::LEN as f64 / 255.0
}
