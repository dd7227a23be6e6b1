//! Convolutions as im2col plus one matmul per batch item, with hand-written
//! gradients. The built-in CPU kernels are several times slower on the small
//! channel counts used here, and their backward pass always pays for an
//! input gradient through a transposed convolution.

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor};
use gemm::Parallelism;

use crate::error::{Error, Result};

/// Sliding-window geometry shared by a convolution and its adjoint. The
/// "lower" side is the larger image, the "upper" side the strided result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    lower_c: usize,
    h: usize,
    w: usize,
    upper_c: usize,
    ho: usize,
    wo: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.lower_c * self.k * self.k
    }

    fn col_len(&self) -> usize {
        self.ho * self.wo
    }

    /// Output columns `ox` whose tap `kj` lands inside `0..len`.
    fn valid(&self, kj: usize, len: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let kj = kj as isize;
        let lo = (p - kj).max(0);
        let lo = (lo + s - 1) / s;
        let hi = (len as isize - 1 + p - kj).div_euclid(s) + 1;
        (lo.min(out as isize) as usize, hi.clamp(0, out as isize) as usize)
    }

    fn im2col(&self, img: &[f32], cols: &mut [f32]) {
        let (k, s, n) = (self.k, self.stride, self.col_len());
        for c in 0..self.lower_c {
            let plane = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..k {
                let (y0, y1) = self.valid(ki, self.h, self.ho);
                for kj in 0..k {
                    let (x0, x1) = self.valid(kj, self.w, self.wo);
                    let row = &mut cols[((c * k + ki) * k + kj) * n..][..n];
                    for oy in 0..self.ho {
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        if oy < y0 || oy >= y1 || x0 >= x1 {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[(oy * s + ki - self.pad) * self.w..][..self.w];
                        dst[..x0].fill(0.0);
                        dst[x1..].fill(0.0);
                        let ix0 = x0 * s + kj - self.pad;
                        if s == 1 {
                            dst[x0..x1].copy_from_slice(&src[ix0..ix0 + x1 - x0]);
                        } else {
                            for (d, ox) in dst[x0..x1].iter_mut().zip(0..) {
                                *d = src[ix0 + ox * s];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatter-adds columns back into a zeroed image.
    fn col2im(&self, cols: &[f32], img: &mut [f32]) {
        let (k, s, n) = (self.k, self.stride, self.col_len());
        img.fill(0.0);
        for c in 0..self.lower_c {
            let plane = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..k {
                let (y0, y1) = self.valid(ki, self.h, self.ho);
                for kj in 0..k {
                    let (x0, x1) = self.valid(kj, self.w, self.wo);
                    if x0 >= x1 {
                        continue;
                    }
                    let row = &cols[((c * k + ki) * k + kj) * n..][..n];
                    for oy in y0..y1 {
                        let src = &row[oy * self.wo + x0..oy * self.wo + x1];
                        let dst = &mut plane[(oy * s + ki - self.pad) * self.w..][..self.w];
                        let ix0 = x0 * s + kj - self.pad;
                        for (v, ox) in src.iter().zip(0..) {
                            dst[ix0 + ox * s] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `dst (m x n) (+)= a (m x k) * b (k x n)`, all row-major; `*_t` reads the
/// stored matrix transposed.
#[allow(clippy::too_many_arguments)]
fn matmul(dst: &mut [f32], accumulate: bool, a: &[f32], a_t: bool, b: &[f32], b_t: bool, m: usize, n: usize, k: usize) {
    assert!(dst.len() >= m * n && a.len() >= m * k && b.len() >= k * n);
    let (a_cs, a_rs) = if a_t { (m as isize, 1) } else { (1, k as isize) };
    let (b_cs, b_rs) = if b_t { (k as isize, 1) } else { (1, n as isize) };
    // SAFETY: the bounds above cover every element gemm touches with these strides.
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            dst.as_mut_ptr(),
            1,
            n as isize,
            accumulate,
            a.as_ptr(),
            a_cs,
            a_rs,
            b.as_ptr(),
            b_cs,
            b_rs,
            1.0,
            1.0,
            false,
            false,
            false,
            Parallelism::None,
        );
    }
}

fn f32_slice<'a>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [f32]> {
    let CpuStorage::F32(v) = s else {
        candle_core::bail!("convolution expects f32 storage")
    };
    match l.contiguous_offsets() {
        Some((a, b)) => Ok(&v[a..b]),
        None => candle_core::bail!("convolution expects contiguous inputs"),
    }
}

/// `(x: lower, w: (Cu, Cl, K, K)) -> upper`
struct Forward(Geometry);
/// `(u: upper, w: (Cu, Cl, K, K)) -> lower`
struct Adjoint(Geometry);
/// `(lower, upper) -> dW: (Cu, Cl, K, K)`
struct WeightGrad(Geometry);

impl CustomOp2 for Forward {
    fn name(&self) -> &'static str {
        "conv2d-im2col"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.0;
        let (x, w) = (f32_slice(s1, l1)?, f32_slice(s2, l2)?);
        let b = l1.dims()[0];
        let (lower, upper) = (g.lower_c * g.h * g.w, g.upper_c * g.col_len());
        let mut cols = vec![0.0; g.col_rows() * g.col_len()];
        let mut out = vec![0.0; b * upper];
        for i in 0..b {
            g.im2col(&x[i * lower..(i + 1) * lower], &mut cols);
            matmul(&mut out[i * upper..], false, w, false, &cols, false, g.upper_c, g.col_len(), g.col_rows());
        }
        Ok((CpuStorage::F32(out), Shape::from((b, g.upper_c, g.ho, g.wo))))
    }

    fn bwd(&self, x: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let gx = match x.track_op() {
            true => Some(grad.apply_op2_no_bwd(w, &Adjoint(self.0))?),
            false => None,
        };
        let gw = match w.track_op() {
            true => Some(x.apply_op2_no_bwd(&grad, &WeightGrad(self.0))?),
            false => None,
        };
        Ok((gx, gw))
    }
}

impl CustomOp2 for Adjoint {
    fn name(&self) -> &'static str {
        "conv2d-adjoint-col2im"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.0;
        let (u, w) = (f32_slice(s1, l1)?, f32_slice(s2, l2)?);
        let b = l1.dims()[0];
        let (lower, upper) = (g.lower_c * g.h * g.w, g.upper_c * g.col_len());
        let mut cols = vec![0.0; g.col_rows() * g.col_len()];
        let mut out = vec![0.0; b * lower];
        for i in 0..b {
            matmul(&mut cols, false, w, true, &u[i * upper..], false, g.col_rows(), g.col_len(), g.upper_c);
            g.col2im(&cols, &mut out[i * lower..(i + 1) * lower]);
        }
        Ok((CpuStorage::F32(out), Shape::from((b, g.lower_c, g.h, g.w))))
    }

    fn bwd(&self, u: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let gu = match u.track_op() {
            true => Some(grad.apply_op2_no_bwd(w, &Forward(self.0))?),
            false => None,
        };
        let gw = match w.track_op() {
            true => Some(grad.apply_op2_no_bwd(u, &WeightGrad(self.0))?),
            false => None,
        };
        Ok((gu, gw))
    }
}

impl CustomOp2 for WeightGrad {
    fn name(&self) -> &'static str {
        "conv2d-weight-grad"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.0;
        let (lo, up) = (f32_slice(s1, l1)?, f32_slice(s2, l2)?);
        let b = l1.dims()[0];
        let (lower, upper) = (g.lower_c * g.h * g.w, g.upper_c * g.col_len());
        let mut cols = vec![0.0; g.col_rows() * g.col_len()];
        let mut out = vec![0.0; g.upper_c * g.col_rows()];
        for i in 0..b {
            g.im2col(&lo[i * lower..(i + 1) * lower], &mut cols);
            matmul(&mut out, i > 0, &up[i * upper..], false, &cols, true, g.upper_c, g.col_rows(), g.col_len());
        }
        Ok((CpuStorage::F32(out), Shape::from((g.upper_c, g.lower_c, g.k, g.k))))
    }
}

fn shape_error(what: &str, x: &Tensor, w: &Tensor) -> Error {
    Error::Shape(format!("{what} input {:?} with kernel {:?}", x.dims(), w.dims()))
}

/// Cross-correlation of `x: (B, C, H, W)` with `w: (O, C, K, K)`, zero padding
/// `pad` on every side.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (_, c, h, wd) = x.dims4()?;
    let (o, wc, k, k2) = w.dims4()?;
    if wc != c || k != k2 || stride == 0 {
        return Err(shape_error("conv2d", x, w));
    }
    if h + 2 * pad < k || wd + 2 * pad < k {
        return Err(Error::Shape(format!("conv2d input {:?} smaller than kernel {k}", x.dims())));
    }
    let g = Geometry {
        lower_c: c,
        h,
        w: wd,
        upper_c: o,
        ho: (h + 2 * pad - k) / stride + 1,
        wo: (wd + 2 * pad - k) / stride + 1,
        k,
        stride,
        pad,
    };
    Ok(x.contiguous()?.apply_op2(&w.contiguous()?, Forward(g))?)
}

/// Stride-2 transposed convolution of `x: (B, C, H, W)` with `w: (C, O, K, K)`,
/// padding `K / 2` and one row/column of output padding, so the result is
/// `(B, O, 2H, 2W)`.
pub fn conv_transpose2d_x2(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (_, c, h, wd) = x.dims4()?;
    let (wc, o, k, k2) = w.dims4()?;
    if wc != c || k != k2 || k % 2 == 0 {
        return Err(shape_error("transposed conv", x, w));
    }
    let g = Geometry {
        lower_c: o,
        h: 2 * h,
        w: 2 * wd,
        upper_c: c,
        ho: h,
        wo: wd,
        k,
        stride: 2,
        pad: k / 2,
    };
    Ok(x.contiguous()?.apply_op2(&w.contiguous()?, Adjoint(g))?)
}
#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let v: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f32 {
        (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap()
    }

    #[test]
    fn conv_matches_direct() {
        for (stride, h) in [(1, 9), (2, 8), (2, 9), (2, 2), (2, 1)] {
            let x = seeded(&[2, 3, h, h + 1], 1);
            let w = seeded(&[4, 3, 5, 5], 2);
            let ours = conv2d(&x, &w, stride, 2).unwrap();
            let direct = x.conv2d(&w, 2, stride, 1, 1).unwrap();
            assert_eq!(ours.dims(), direct.dims());
            assert!(max_diff(&ours, &direct) < 1e-5, "stride {stride} h {h}");
        }
    }

    #[test]
    fn transposed_matches_direct() {
        for (h, w_) in [(1, 1), (2, 2), (3, 5), (8, 8)] {
            for k in [3, 5] {
                let x = seeded(&[2, 3, h, w_], 11);
                let w = seeded(&[3, 4, k, k], 12);
                let ours = conv_transpose2d_x2(&x, &w).unwrap();
                let direct = x.conv_transpose2d(&w, k / 2, 1, 2, 1).unwrap();
                assert_eq!(ours.dims(), direct.dims());
                assert!(max_diff(&ours, &direct) < 1e-5, "h {h} k {k}");
            }
        }
    }

    #[test]
    fn transposed_gradients_match_direct() {
        let x = Var::from_tensor(&seeded(&[2, 2, 4, 3], 13)).unwrap();
        let w = Var::from_tensor(&seeded(&[2, 3, 5, 5], 14)).unwrap();
        let probe = seeded(&[2, 3, 8, 6], 15);
        let ours = conv_transpose2d_x2(&x, &w).unwrap().mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        let direct = x
            .conv_transpose2d(&w, 2, 1, 2, 1)
            .unwrap()
            .mul(&probe)
            .unwrap()
            .sum_all()
            .unwrap()
            .backward()
            .unwrap();
        for v in [&x, &w] {
            assert!(max_diff(ours.get(v).unwrap(), direct.get(v).unwrap()) < 1e-4);
        }
    }

    #[test]
    fn gradients_match_direct() {
        let x = Var::from_tensor(&seeded(&[2, 2, 6, 6], 5)).unwrap();
        let w = Var::from_tensor(&seeded(&[3, 2, 5, 5], 6)).unwrap();
        let probe = seeded(&[2, 3, 3, 3], 7);
        let ours = conv2d(&x, &w, 2, 2).unwrap().mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        let direct = x.conv2d(&w, 2, 2, 1, 1).unwrap().mul(&probe).unwrap().sum_all().unwrap().backward().unwrap();
        for v in [&x, &w] {
            assert!(max_diff(ours.get(v).unwrap(), direct.get(v).unwrap()) < 1e-4);
        }
    }
}
