use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Init, ParamStore};
use crate::error::Result;

/// Weight standard deviation for convolution, deconvolution and linear layers.
pub const WEIGHT_STD: f64 = 0.02;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Per-call forward settings.
pub struct Forward<'r> {
    training: bool,
    track_stats: bool,
    momentum: f64,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> Forward<'r> {
    /// Inference: running batch-norm statistics, no dropout.
    pub fn eval() -> Self {
        Self {
            training: false,
            track_stats: false,
            momentum: BN_MOMENTUM,
            rng: None,
        }
    }

    /// Training: batch statistics (folded into the running averages) and dropout.
    pub fn train(rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            training: true,
            track_stats: true,
            momentum: BN_MOMENTUM,
            rng: Some(rng),
        }
    }

    /// Training-mode normalization that leaves running averages untouched.
    pub fn train_untracked(rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            training: true,
            track_stats: false,
            momentum: BN_MOMENTUM,
            rng: Some(rng),
        }
    }

    /// Batch `index` (0-based) of a statistics re-estimation pass: running
    /// averages become the plain mean over all batches seen so far, and
    /// dropout is skipped.
    pub fn calibrate(index: usize) -> Forward<'static> {
        Forward {
            training: true,
            track_stats: true,
            momentum: 1.0 / (index as f64 + 1.0),
            rng: None,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn without_tracking(&mut self) -> Forward<'_> {
        Forward {
            training: self.training,
            track_stats: false,
            momentum: self.momentum,
            rng: self.rng.as_deref_mut(),
        }
    }

    fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        self.rng.as_deref_mut()
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

/// Inverted dropout; identity outside training and during calibration.
pub fn dropout(x: &Tensor, rate: f64, fwd: &mut Forward) -> Result<Tensor> {
    if !fwd.is_training() || rate <= 0.0 {
        return Ok(x.clone());
    }
    let Some(rng) = fwd.rng() else {
        return Ok(x.clone());
    };
    let keep = 1.0 - rate;
    let scale = (1.0 / keep) as f32;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.dims(), x.device())?;
    Ok(x.mul(&mask)?)
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = params.create(
            format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            Init::Normal { std: WEIGHT_STD },
            rng,
        )?;
        let bias = params.create(format!("{name}.bias"), &[c_out], Init::Const(0.0), rng)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = super::conv::conv2d(x, self.weight.as_tensor(), self.stride, self.padding)?;
        let b = self.bias.as_tensor().reshape((1, (), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

/// Stride-2 transposed convolution that exactly doubles the spatial size.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    weight: Var,
    bias: Var,
}

impl ConvTranspose2d {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = params.create(
            format!("{name}.weight"),
            &[c_in, c_out, kernel, kernel],
            Init::Normal { std: WEIGHT_STD },
            rng,
        )?;
        let bias = params.create(format!("{name}.bias"), &[c_out], Init::Const(0.0), rng)?;
        Ok(Self {
            weight,
            bias,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = super::conv::conv_transpose2d_x2(x, self.weight.as_tensor())?;
        let b = self.bias.as_tensor().reshape((1, (), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm2d {
    pub fn new(
        params: &mut ParamStore,
        buffers: &mut ParamStore,
        name: &str,
        channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            gamma: params.create(format!("{name}.gamma"), &[channels], Init::Const(1.0), rng)?,
            beta: params.create(format!("{name}.beta"), &[channels], Init::Const(0.0), rng)?,
            running_mean: buffers.create(
                format!("{name}.running_mean"),
                &[channels],
                Init::Const(0.0),
                rng,
            )?,
            running_var: buffers.create(
                format!("{name}.running_var"),
                &[channels],
                Init::Const(1.0),
                rng,
            )?,
        })
    }

    pub fn forward(&self, x: &Tensor, fwd: &mut Forward) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let (mean, var) = if fwd.training {
            let n = (b * h * w) as f64;
            // reduce the contiguous spatial axis first; multi-axis reductions are slow
            let per_channel = |t: &Tensor| -> Result<Tensor> {
                Ok((t.reshape((b, c, h * w))?.sum(2)?.sum(0)? / n)?)
            };
            let mean = per_channel(x)?;
            let var = per_channel(&x.broadcast_sub(&mean.reshape((1, c, 1, 1))?)?.sqr()?)?;
            if fwd.track_stats {
                let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                let m = mean.detach();
                let v = (var.detach() * unbiased)?;
                let mo = fwd.momentum;
                let rm = ((self.running_mean.as_tensor().detach() * (1.0 - mo))? + (m * mo)?)?;
                let rv = ((self.running_var.as_tensor().detach() * (1.0 - mo))? + (v * mo)?)?;
                self.running_mean.set(&rm)?;
                self.running_var.set(&rv)?;
            }
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().clone(),
                self.running_var.as_tensor().clone(),
            )
        };
        // y = x·scale + shift with per-channel scale = γ/√(σ²+ε), shift = β − μ·scale
        let scale = self.gamma.as_tensor().div(&(var + BN_EPS)?.sqrt()?)?;
        let shift = (self.beta.as_tensor() - mean.mul(&scale)?)?;
        Ok(x
            .broadcast_mul(&scale.reshape((1, c, 1, 1))?)?
            .broadcast_add(&shift.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    weight: Var,
    bias: Var,
}

impl Linear {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: params.create(
                format!("{name}.weight"),
                &[d_out, d_in],
                Init::Normal { std: WEIGHT_STD },
                rng,
            )?,
            bias: params.create(format!("{name}.bias"), &[d_out], Init::Const(0.0), rng)?,
        })
    }

    /// `x`: (batch, d_in) → (batch, d_out)
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight.as_tensor().t()?)?;
        Ok(y.broadcast_add(self.bias.as_tensor())?)
    }

    pub fn weight(&self) -> &Var {
        &self.weight
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    table: Var,
}

impl Embedding {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            table: params.create(
                format!("{name}.table"),
                &[rows, dim],
                Init::Normal { std: 1.0 },
                rng,
            )?,
        })
    }

    pub fn rows(&self, ids: &[u32]) -> Result<Tensor> {
        let ids = Tensor::from_slice(ids, ids.len(), &Device::Cpu)?;
        Ok(self.table.as_tensor().embedding(&ids)?)
    }

    pub fn dim(&self) -> usize {
        self.table.dims()[1]
    }
}

/// Single-layer unidirectional LSTM (gate order input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct Lstm {
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    hidden: usize,
}

impl Lstm {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            w_ih: params.create(
                format!("{name}.w_ih"),
                &[4 * hidden, d_in],
                Init::Uniform { bound },
                rng,
            )?,
            w_hh: params.create(
                format!("{name}.w_hh"),
                &[4 * hidden, hidden],
                Init::Uniform { bound },
                rng,
            )?,
            bias: params.create(format!("{name}.bias"), &[4 * hidden], Init::Uniform { bound }, rng)?,
            hidden,
        })
    }

    /// Runs padded inputs `(batch, time, d_in)` and returns each row's hidden
    /// state after its last valid step.
    pub fn final_hidden(&self, inputs: &Tensor, lengths: &[usize]) -> Result<Tensor> {
        let (b, t_max, _) = inputs.dims3()?;
        let dev = inputs.device();
        let mut h = Tensor::zeros((b, self.hidden), DType::F32, dev)?;
        let mut c = Tensor::zeros((b, self.hidden), DType::F32, dev)?;
        let w_ih = self.w_ih.as_tensor().t()?;
        let w_hh = self.w_hh.as_tensor().t()?;
        let x_proj = inputs
            .reshape((b * t_max, ()))?
            .matmul(&w_ih)?
            .broadcast_add(self.bias.as_tensor())?
            .reshape((b, t_max, 4 * self.hidden))?;
        for t in 0..t_max {
            let gates = (x_proj.narrow(1, t, 1)?.squeeze(1)? + h.matmul(&w_hh)?)?;
            let chunks = gates.chunk(4, D::Minus1)?;
            let i = sigmoid(&chunks[0])?;
            let f = sigmoid(&chunks[1])?;
            let g = chunks[2].tanh()?;
            let o = sigmoid(&chunks[3])?;
            let c_new = ((f * &c)? + (i * g)?)?;
            let h_new = (o * c_new.tanh()?)?;
            if lengths.iter().all(|&l| l > t) {
                h = h_new;
                c = c_new;
            } else {
                let mask: Vec<f32> = lengths.iter().map(|&l| (l > t) as u8 as f32).collect();
                let mask = Tensor::from_vec(mask, (b, 1), dev)?;
                let inv = (1.0 - &mask)?;
                h = (h_new.broadcast_mul(&mask)? + h.broadcast_mul(&inv)?)?;
                c = (c_new.broadcast_mul(&mask)? + c.broadcast_mul(&inv)?)?;
            }
        }
        Ok(h)
    }
}
