//! Pixel, constancy, adversarial and style-classification losses and their
//! weighted combination.
//!
//! The L1 terms are reduced by the mean so the weights do not depend on
//! image resolution. Adversarial and classification terms are evaluated in
//! f64 with overflow-free formulations.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::data::StyleLabel;
use crate::error::{Error, Result};
use crate::nn::{Forward, ImageEncoder};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_p: 100.0,
            lambda_c: 15.0,
            lambda_s: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_p, self.lambda_c, self.lambda_s]
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Unweighted loss terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub d_adv: f64,
    pub g_adv: f64,
    pub pixel: f64,
    pub constancy: f64,
    pub category_real: f64,
    pub category_fake: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub d_adv: f64,
    pub g_adv: f64,
    pub pixel: f64,
    pub constancy: f64,
    pub category_real: f64,
    pub category_fake: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    /// Full style-classification loss (real and generated terms).
    pub fn category(&self) -> f64 {
        self.category_real + self.category_fake
    }

    pub fn is_finite(&self) -> bool {
        [
            self.d_adv,
            self.g_adv,
            self.pixel,
            self.constancy,
            self.category_real,
            self.category_fake,
            self.total_g,
            self.total_d,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Generator total: adversarial + λp·pixel + λc·constancy + λs·fake-pair category.
/// Discriminator total: adversarial + λs·real-pair category.
pub fn total_losses(parts: &LossParts, w: &LossWeights) -> LossReport {
    LossReport {
        d_adv: parts.d_adv,
        g_adv: parts.g_adv,
        pixel: parts.pixel,
        constancy: parts.constancy,
        category_real: parts.category_real,
        category_fake: parts.category_fake,
        total_g: parts.g_adv
            + w.lambda_p * parts.pixel
            + w.lambda_c * parts.constancy
            + w.lambda_s * parts.category_fake,
        total_d: parts.d_adv + w.lambda_s * parts.category_real,
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Mean absolute difference between target and generated images.
pub fn pixel_loss(y: &Tensor, y_hat: &Tensor) -> Result<Tensor> {
    same_shape(y, y_hat, "pixel loss")?;
    Ok((y - y_hat)?.abs()?.mean_all()?)
}

/// Mean absolute difference between two batches of encoder features.
pub fn feature_l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "constancy loss")?;
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Encodes both images with the same encoder and compares their features.
pub fn constancy_loss(
    encoder: &ImageEncoder,
    x: &Tensor,
    y_hat: &Tensor,
    fwd: &mut Forward,
) -> Result<Tensor> {
    let (vx, _) = encoder.forward(x, fwd)?;
    let (vy, _) = encoder.forward(y_hat, fwd)?;
    feature_l1(&vx, &vy)
}

/// `log(1 + y)` for `y ≥ 0`, accurate when `y` is tiny.
fn log1p(y: &Tensor) -> Result<Tensor> {
    let u = (y + 1.0)?;
    let den = (&u - 1.0)?;
    let exact = den.eq(0.0)?;
    let safe_den = exact.where_cond(&den.ones_like()?, &den)?;
    let ratio = u.log()?.mul(&y.div(&safe_den)?)?;
    Ok(exact.where_cond(y, &ratio)?)
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: &Tensor) -> Result<Tensor> {
    Ok((x.relu()? + log1p(&x.abs()?.neg()?.exp()?)?)?)
}

/// Batch means of the discriminator loss `−[log σ(real) + log(1 − σ(fake))]`
/// and the non-saturating generator loss `−log σ(fake)`.
pub fn adversarial_terms(d_real: &Tensor, d_fake: &Tensor) -> Result<(Tensor, Tensor)> {
    let real = d_real.to_dtype(DType::F64)?;
    let fake = d_fake.to_dtype(DType::F64)?;
    let d_loss = (softplus(&real.neg()?)?.mean_all()? + softplus(&fake)?.mean_all()?)?;
    let g_loss = softplus(&fake.neg()?)?.mean_all()?;
    Ok((d_loss, g_loss))
}

/// Generator-only term `−log σ(fake)`, averaged.
pub fn generator_adversarial_term(d_fake: &Tensor) -> Result<Tensor> {
    Ok(softplus(&d_fake.to_dtype(DType::F64)?.neg()?)?.mean_all()?)
}

/// Scalar convenience over [`adversarial_terms`].
pub fn adversarial_terms_scalar(d_real: f64, d_fake: f64) -> Result<(f64, f64)> {
    let r = Tensor::new(&[d_real], &Device::Cpu)?;
    let f = Tensor::new(&[d_fake], &Device::Cpu)?;
    let (d, g) = adversarial_terms(&r, &f)?;
    Ok((d.to_scalar::<f64>()?, g.to_scalar::<f64>()?))
}

/// Mean softmax cross-entropy of `(batch, styles)` logits against labels.
pub fn style_cross_entropy(logits: &Tensor, labels: &[StyleLabel]) -> Result<Tensor> {
    let (b, n) = logits.dims2()?;
    if labels.len() != b {
        return Err(Error::Shape(format!("{b} logit rows for {} labels", labels.len())));
    }
    for s in labels {
        StyleLabel::new(s.get(), n)?;
    }
    let logits = logits.to_dtype(DType::F64)?;
    let host = logits.to_vec2::<f64>()?;
    let mut label_mask = vec![0f64; b * n];
    let mut max_mask = vec![0f64; b * n];
    for (row, (vals, s)) in host.iter().zip(labels).enumerate() {
        label_mask[row * n + s.index()] = 1.0;
        let arg = vals
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if *v > vals[best] { j } else { best });
        max_mask[row * n + arg] = 1.0;
    }
    let dev = logits.device();
    let label_mask = Tensor::from_vec(label_mask, (b, n), dev)?;
    let max_mask = Tensor::from_vec(max_mask, (b, n), dev)?;
    let picked = logits.mul(&label_mask)?.sum(D::Minus1)?;
    let max = logits.mul(&max_mask)?.sum_keepdim(D::Minus1)?;
    // log Σ exp(l - max) = log1p(Σ_{j ≠ argmax} exp(l_j - max))
    let rest = logits
        .broadcast_sub(&max)?
        .exp()?
        .mul(&(1.0 - &max_mask)?)?
        .sum(D::Minus1)?;
    let ce = ((log1p(&rest)? + max.squeeze(D::Minus1)?)? - picked)?;
    Ok(ce.mean_all()?)
}

/// Sum of the real-pair and generated-pair classification losses for label `s`.
pub fn category_loss(real_logits: &[f64], fake_logits: &[f64], s: StyleLabel) -> Result<f64> {
    if real_logits.len() != fake_logits.len() {
        return Err(Error::Shape("logit vectors differ in length".into()));
    }
    let n = real_logits.len();
    let real = Tensor::from_slice(real_logits, (1, n), &Device::Cpu)?;
    let fake = Tensor::from_slice(fake_logits, (1, n), &Device::Cpu)?;
    let a = style_cross_entropy(&real, &[s])?.to_scalar::<f64>()?;
    let b = style_cross_entropy(&fake, &[s])?.to_scalar::<f64>()?;
    Ok(a + b)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn style(v: u16) -> StyleLabel {
        StyleLabel::from_raw(v).unwrap()
    }

    #[test]
    fn adversarial_at_zero() {
        let (d, g) = adversarial_terms_scalar(0.0, 0.0).unwrap();
        assert_eq!(d, 2.0 * std::f64::consts::LN_2);
        assert_eq!(g, std::f64::consts::LN_2);
    }

    #[test]
    fn adversarial_perfect_discriminator() {
        let (d, g) = adversarial_terms_scalar(1e4, -1e4).unwrap();
        assert_eq!(d, 0.0);
        assert!((g - 1e4).abs() < 1e-9);
        let (d, g) = adversarial_terms_scalar(-1e4, 1e4).unwrap();
        assert!(d.is_finite() && g.is_finite());
    }

    #[test]
    fn uniform_category() {
        let z = [0.0; 7];
        let v = category_loss(&z, &z, style(3)).unwrap();
        assert!((v - 2.0 * 7f64.ln()).abs() < 1e-15, "{v}");
    }

    #[test]
    fn perfect_category() {
        let mut l = [-1e4; 7];
        l[1] = 1e4;
        assert_eq!(category_loss(&l, &l, style(2)).unwrap(), 0.0);
        let bad = category_loss(&l, &l, style(3)).unwrap();
        assert!(bad.is_finite() && bad > 1e4);
    }

    #[test]
    fn category_label_out_of_range() {
        let z = [0.0; 7];
        assert!(matches!(
            category_loss(&z, &z, style(8)),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn pixel_extremes() {
        let white = Tensor::ones((1, 1, 4, 4), DType::F32, &Device::Cpu).unwrap();
        let black = white.neg().unwrap();
        assert_eq!(scalar(&pixel_loss(&white, &white).unwrap()).unwrap(), 0.0);
        assert_eq!(scalar(&pixel_loss(&white, &black).unwrap()).unwrap(), 2.0);
        let small = Tensor::ones((1, 1, 2, 2), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(pixel_loss(&white, &small), Err(Error::Shape(_))));
    }

    #[test]
    fn totals() {
        let w = LossWeights::default();
        let zero = total_losses(&LossParts::default(), &w);
        assert_eq!((zero.total_g, zero.total_d), (0.0, 0.0));
        let p = LossParts {
            pixel: 0.5,
            ..Default::default()
        };
        assert_eq!(total_losses(&p, &w).total_g, 50.0);
        let p = LossParts {
            category_real: 1.0,
            category_fake: 2.0,
            d_adv: 0.5,
            ..Default::default()
        };
        let r = total_losses(&p, &w);
        assert_eq!(r.total_d, 1.5);
        assert_eq!(r.total_g, 2.0);
        assert_eq!(r.category(), 3.0);
    }

    #[test]
    fn log1p_precision() {
        let y = Tensor::new(&[0.0f64, 1e-20, 1e-10, 1.0], &Device::Cpu).unwrap();
        let v = log1p(&y).unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1e-20);
        assert!((v[2] - 1e-10f64.ln_1p()).abs() / 1e-10 < 1e-12);
        assert!((v[3] - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
