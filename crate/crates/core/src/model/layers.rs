use candle_core::{DType, Device, Module, Result, Tensor};

use crate::grid::interp_weights;

use super::Init;

/// How batch normalization behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Running statistics, no updates.
    Eval,
    /// Batch statistics; running statistics updated.
    Train,
    /// Batch statistics; running statistics left untouched.
    TrainFrozen,
}

/// Supplies a named tensor of a given shape, either freshly initialized or loaded.
pub trait ParamSource {
    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor>;
}

pub struct Conv {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        src: &mut dyn ParamSource,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = src.tensor(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::He { fan_in })?;
        let bias = if bias {
            Some(src.tensor(&format!("{name}.bias"), &[c_out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Same as [`Conv::new`] but with all-zero weights.
    pub fn zeroed(src: &mut dyn ParamSource, name: &str, c_in: usize, c_out: usize, kernel: usize, padding: usize) -> Result<Self> {
        let weight = src.tensor(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::Zeros)?;
        let bias = Some(src.tensor(&format!("{name}.bias"), &[c_out], Init::Zeros)?);
        Ok(Self {
            weight,
            bias,
            stride: 1,
            padding,
        })
    }
}

impl Module for Conv {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?),
            None => Ok(y),
        }
    }
}

pub struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    running_mean: candle_core::Var,
    running_var: candle_core::Var,
    momentum: f64,
    eps: f64,
}

pub const RUNNING_MEAN: &str = "running_mean";
pub const RUNNING_VAR: &str = "running_var";

impl BatchNorm {
    pub fn new(src: &mut dyn ParamSource, name: &str, channels: usize) -> Result<Self> {
        let gamma = src.tensor(&format!("{name}.weight"), &[channels], Init::Ones)?;
        let beta = src.tensor(&format!("{name}.bias"), &[channels], Init::Zeros)?;
        let mean = src.tensor(&format!("{name}.{RUNNING_MEAN}"), &[channels], Init::Zeros)?;
        let var = src.tensor(&format!("{name}.{RUNNING_VAR}"), &[channels], Init::Ones)?;
        Ok(Self {
            gamma,
            beta,
            running_mean: candle_core::Var::from_tensor(&mean)?,
            running_var: candle_core::Var::from_tensor(&var)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        let c = self.gamma.dim(0)?;
        let shape = (1, c, 1, 1);
        let (mean, var) = match mode {
            NormMode::Eval => (
                self.running_mean.as_tensor().reshape(shape)?,
                self.running_var.as_tensor().reshape(shape)?,
            ),
            NormMode::Train | NormMode::TrainFrozen => {
                let mean = x.mean_keepdim((0, 2, 3))?;
                let var = x.broadcast_sub(&mean)?.sqr()?.mean_keepdim((0, 2, 3))?;
                if mode == NormMode::Train {
                    let (n, _, h, w) = x.dims4()?;
                    let count = (n * h * w) as f64;
                    let unbiased = (var.detach().flatten_all()? * (count / (count - 1.0).max(1.0)))?;
                    let m = self.momentum;
                    let new_mean = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().flatten_all()? * m)?)?;
                    let new_var = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased * m)?)?;
                    self.running_mean.set(&new_mean)?;
                    self.running_var.set(&new_var)?;
                }
                (mean, var)
            }
        };
        let inv = (var + self.eps)?.sqrt()?.recip()?;
        let scale = self.gamma.reshape(shape)?.broadcast_mul(&inv)?;
        x.broadcast_sub(&mean)?.broadcast_mul(&scale)?.broadcast_add(&self.beta.reshape(shape)?)
    }
}

/// Conv followed by batch norm and optional ReLU.
pub struct ConvBn {
    conv: Conv,
    bn: BatchNorm,
}

impl ConvBn {
    pub fn new(src: &mut dyn ParamSource, name: &str, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv::new(src, &format!("{name}.conv"), c_in, c_out, kernel, stride, kernel / 2, false)?,
            bn: BatchNorm::new(src, &format!("{name}.bn"), c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: NormMode, relu: bool) -> Result<Tensor> {
        let y = self.bn.forward(&self.conv.forward(x)?, mode)?;
        if relu {
            y.relu()
        } else {
            Ok(y)
        }
    }
}

/// Bilinear interpolation matrix (`dst × src`, half-pixel centers).
pub fn interp_matrix(src: usize, dst: usize, dtype: DType, dev: &Device) -> Result<Tensor> {
    let mut m = vec![0f64; dst * src];
    for (i, (i0, i1, w)) in interp_weights(src, dst).into_iter().enumerate() {
        m[i * src + i0] += 1.0 - w;
        m[i * src + i1] += w;
    }
    Tensor::from_vec(m, (dst, src), dev)?.to_dtype(dtype)
}

/// Bilinear resize of an `(n, c, h, w)` tensor, expressed as two matrix products so it
/// is differentiable.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let ah = interp_matrix(h, out_h, x.dtype(), x.device())?;
    let awt = interp_matrix(w, out_w, x.dtype(), x.device())?.t()?;
    ah.broadcast_matmul(&x.broadcast_matmul(&awt)?)
}

/// Max and min over the 3×3 neighborhood, with edge replication at the border
/// (equivalent to pooling over the clipped window).
fn window_extrema(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let (_, _, h, w) = x.dims4()?;
    let p = x.pad_with_same(2, 1, 1)?.pad_with_same(3, 1, 1)?;
    let mut hi: Option<Tensor> = None;
    let mut lo: Option<Tensor> = None;
    for dy in 0..3 {
        let row = p.narrow(2, dy, h)?;
        for dx in 0..3 {
            let v = row.narrow(3, dx, w)?;
            hi = Some(match hi {
                Some(t) => t.maximum(&v)?,
                None => v.clone(),
            });
            lo = Some(match lo {
                Some(t) => t.minimum(&v)?,
                None => v,
            });
        }
    }
    Ok((hi.expect("nine views"), lo.expect("nine views")))
}

/// Fixed morphological gradient: 3×3 max-pool minus 3×3 min-pool, same size.
pub fn boundary_enhance(s_hat: &Tensor) -> Result<Tensor> {
    let (hi, lo) = window_extrema(s_hat)?;
    hi - lo
}

/// 3×3 stride-2 max pooling with padding 1 (for even inputs, output is half size).
pub fn max_pool_3x3_s2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (hi, _) = window_extrema(x)?;
    hi.reshape((n, c, h / 2, 2, w / 2, 2))?
        .narrow(3, 0, 1)?
        .narrow(5, 0, 1)?
        .reshape((n, c, h / 2, w / 2))
}
