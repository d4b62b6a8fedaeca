//! Segmentation, edge and edge-consistency losses.
//!
//! All maps are `(n, 1, H, W)` tensors. `valid` holds 1 for pixels that count
//! and 0 for ignored ones. Probabilities are clamped to `[EPS, 1 - EPS]`.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::model::ModelOutputs;

pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mu1: 1.0,
            mu2: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.5,
            tau: 0.5,
        }
    }
}

impl LossWeights {
    pub fn check(&self) -> Result<(), LossError> {
        let all = [self.mu1, self.mu2, self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LossError::Config("weights must be finite and nonnegative".into()));
        }
        if self.lambda1 <= 0.0 {
            return Err(LossError::Config("lambda1 must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(LossError::Config("tau must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("invalid loss weights: {0}")]
    Config(String),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("every pixel is ignored")]
    AllIgnored,
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
}

/// Scalar values of the three terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg: f64,
    pub edge: f64,
    pub consist: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.seg.is_finite() && self.edge.is_finite() && self.consist.is_finite() && self.total.is_finite()
    }
}

/// A differentiable loss value plus the images whose edge target was single-class
/// and therefore fell back to unweighted cross entropy.
pub struct Weighted {
    pub value: Tensor,
    pub degenerate: Vec<usize>,
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), LossError> {
    if a.dims() != b.dims() {
        return Err(LossError::Shape(a.dims().to_vec(), b.dims().to_vec()));
    }
    Ok(())
}

fn clamp(p: &Tensor) -> candle_core::Result<Tensor> {
    p.clamp(EPS, 1.0 - EPS)
}

/// Per-pixel `-(t ln p + (1 - t) ln(1 - p))`, split into the positive and negative parts.
fn log_terms(p: &Tensor, t: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
    let p = clamp(p)?;
    let pos = (t * p.log()?)?.neg()?;
    let neg = ((1.0 - t)? * (1.0 - &p)?.log()?)?.neg()?;
    Ok((pos, neg))
}

/// `mu1 * mean BCE + mu2 * (1 - Dice)` over valid pixels of the whole batch.
pub fn seg_loss(s_hat: &Tensor, s: &Tensor, valid: &Tensor, mu1: f64, mu2: f64) -> Result<Tensor, LossError> {
    same_shape(s_hat, s)?;
    same_shape(s_hat, valid)?;
    let n_valid = valid.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if n_valid == 0.0 {
        return Err(LossError::AllIgnored);
    }
    let (pos, neg) = log_terms(s_hat, s)?;
    let bce = ((pos + neg)? * valid)?.sum_all()?.affine(1.0 / n_valid, 0.0)?;
    let p = (clamp(s_hat)? * valid)?;
    let inter = (&p * s)?.sum_all()?;
    let denom = ((p.sum_all()? + (s * valid)?.sum_all()?)? + EPS)?;
    let dice = (1.0 - (inter * 2.0)?.div(&denom)?)?;
    Ok(((bce * mu1)? + (dice * mu2)?)?)
}

/// Class-balancing weights `(w_pos, w_neg)` from the valid pixels of one binary
/// target, or `None` when the target is single-class there.
pub fn wce_weights(target: &[f64], valid: &[f64]) -> Option<(f64, f64)> {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (&t, &v) in target.iter().zip(valid) {
        if v > 0.5 {
            if t > 0.5 {
                pos += 1.0;
            } else {
                neg += 1.0;
            }
        }
    }
    if pos == 0.0 || neg == 0.0 {
        None
    } else {
        let total = pos + neg;
        Some((neg / total, pos / total))
    }
}

/// Class-balanced cross entropy, weights computed per image, averaged over the
/// images that have at least one valid pixel.
pub fn edge_loss(e_hat: &Tensor, e: &Tensor, valid: &Tensor) -> Result<Weighted, LossError> {
    same_shape(e_hat, e)?;
    same_shape(e_hat, valid)?;
    let (n, _, h, w) = e_hat.dims4()?;
    let hw = h * w;
    let target = e.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    let keep = valid.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    let mut w_pos = vec![0f64; n * hw];
    let mut w_neg = vec![0f64; n * hw];
    let mut degenerate = Vec::new();
    let mut counted = 0usize;
    for b in 0..n {
        let range = b * hw..(b + 1) * hw;
        let n_valid = keep[range.clone()].iter().filter(|&&v| v > 0.5).count();
        if n_valid == 0 {
            continue;
        }
        counted += 1;
        let (wp, wn) = wce_weights(&target[range.clone()], &keep[range.clone()]).unwrap_or_else(|| {
            degenerate.push(b);
            (1.0, 1.0)
        });
        for i in range {
            if keep[i] > 0.5 {
                w_pos[i] = wp / n_valid as f64;
                w_neg[i] = wn / n_valid as f64;
            }
        }
    }
    if counted == 0 {
        return Err(LossError::AllIgnored);
    }
    let dev = e_hat.device();
    let dtype = e_hat.dtype();
    let w_pos = Tensor::from_vec(w_pos, e_hat.shape(), dev)?.to_dtype(dtype)?;
    let w_neg = Tensor::from_vec(w_neg, e_hat.shape(), dev)?.to_dtype(dtype)?;
    let (pos, neg) = log_terms(e_hat, e)?;
    let sum = ((pos * w_pos)? + (neg * w_neg)?)?.sum_all()?;
    Ok(Weighted {
        value: sum.affine(1.0 / counted as f64, 0.0)?,
        degenerate,
    })
}

/// Edge loss of `e_hat_prime` against `e_hat` binarized at `tau`. The binarized
/// target carries no gradient.
pub fn consistency_loss(e_hat_prime: &Tensor, e_hat: &Tensor, tau: f64, valid: &Tensor) -> Result<Weighted, LossError> {
    let target = e_hat.detach().ge(tau)?.to_dtype(e_hat.dtype())?;
    edge_loss(e_hat_prime, &target, valid)
}

/// Total loss tensor and its scalar breakdown.
pub struct TotalLoss {
    pub total: Tensor,
    pub breakdown: LossBreakdown,
    /// Images whose edge or consistency target fell back to unweighted cross entropy.
    pub degenerate: usize,
}

pub fn total_loss(out: &ModelOutputs, s: &Tensor, e: &Tensor, valid: &Tensor, w: &LossWeights) -> Result<TotalLoss, LossError> {
    let seg = seg_loss(&out.s_hat, s, valid, w.mu1, w.mu2)?;
    let edge = edge_loss(&out.e_hat, e, valid)?;
    let consist = consistency_loss(&out.e_hat_prime, &out.e_hat, w.tau, valid)?;
    let total = (((&seg * w.lambda1)? + (&edge.value * w.lambda2)?)? + (&consist.value * w.lambda3)?)?;
    let scalar = |t: &Tensor| -> Result<f64, LossError> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
    let breakdown = LossBreakdown {
        seg: scalar(&seg)?,
        edge: scalar(&edge.value)?,
        consist: scalar(&consist.value)?,
        total: scalar(&total)?,
    };
    Ok(TotalLoss {
        total,
        breakdown,
        degenerate: edge.degenerate.len() + consist.degenerate.len(),
    })
}
