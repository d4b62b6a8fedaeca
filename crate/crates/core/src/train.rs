//! Two-phase training on a rendered dataset.
//!
//! Phase 1 trains everything except the encoder; phase 2 trains all weights at a
//! lower rate. Each phase restarts its own stepwise-decayed learning rate.

use std::fmt::Write as _;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Mask;
use crate::loss::{total_loss, LossBreakdown, LossError, LossWeights};
use crate::model::{images_to_tensor, masks_to_tensor, save_checkpoint, tensor_to_map, Mode, Model, ModelError, NetworkConfig, Params};
use crate::render::{stream_rng, Dataset, RenderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub batch_size: usize,
    pub phase1_lr: f64,
    pub phase2_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub rng_seed: u64,
    /// Train-set Dice and a checkpoint are recorded every this many steps.
    pub checkpoint_every: usize,
    /// Samples used for intermediate train-set Dice (all when unset). The final
    /// evaluation always uses the whole set.
    pub dice_subset: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase1_steps: 1000,
            phase2_steps: 1000,
            batch_size: 32,
            phase1_lr: 1.0e-3,
            phase2_lr: 3.0e-4,
            decay_factor: 0.9,
            decay_every: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rng_seed: 0,
            checkpoint_every: 100,
            dice_subset: None,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), TrainError> {
        let problem = if self.phase1_steps == 0 || self.phase2_steps == 0 {
            "steps must be positive"
        } else if self.batch_size == 0 {
            "batch_size must be at least 1"
        } else if !(self.phase1_lr > 0.0 && self.phase2_lr > 0.0) {
            "learning rates must be positive"
        } else if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_every == 0 {
            "decay_factor must lie in (0, 1] and decay_every be positive"
        } else if self.checkpoint_every == 0 {
            "checkpoint_every must be positive"
        } else {
            return Ok(());
        };
        Err(TrainError::Config(problem.into()))
    }

    pub fn total_steps(&self) -> usize {
        self.phase1_steps + self.phase2_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Encoder frozen.
    One,
    /// Everything trainable.
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

/// Learning rate at `step` (counted from 0 within `phase`).
pub fn lr_at(step: usize, phase: Phase, cfg: &TrainConfig) -> f64 {
    let base = match phase {
        Phase::One => cfg.phase1_lr,
        Phase::Two => cfg.phase2_lr,
    };
    base * cfg.decay_factor.powi((step / cfg.decay_every) as i32)
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at step {step} (phase {phase}): {breakdown:?}")]
    NonFiniteLoss { step: usize, phase: u8, breakdown: LossBreakdown },
    #[error(transparent)]
    Data(#[from] RenderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

impl From<candle_core::Error> for TrainError {
    fn from(e: candle_core::Error) -> Self {
        TrainError::Model(ModelError::Candle(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// Global step, counted across both phases.
    pub step: usize,
    pub phase: u8,
    pub lr: f64,
    pub seg: f64,
    pub edge: f64,
    pub consist: f64,
    pub total: f64,
    pub train_dice: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
    /// Mean Dice over the whole training set after the last step.
    pub final_train_dice: Option<f64>,
}

pub const HISTORY_HEADER: &str = "step,phase,lr,seg,edge,consist,total,train_dice";

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.rows {
            let dice = r.train_dice.map(|d| format!("{d:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{:e},{:.6},{:.6},{:.6},{:.6},{}",
                r.step, r.phase, r.lr, r.seg, r.edge, r.consist, r.total, dice
            );
        }
        out
    }
}

/// Progress notification emitted after every optimizer step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub step: usize,
    pub total_steps: usize,
    pub phase: Phase,
    pub breakdown: LossBreakdown,
}

/// Stream index of the batch-order generator.
const ORDER_STREAM: u64 = 0x6261_7463_6865_7321;

/// Endless shuffled cycling over `0..k`: each pass is a fresh permutation.
struct BatchOrder {
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    pos: usize,
}

impl BatchOrder {
    fn new(k: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, ORDER_STREAM);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        Self { rng, perm, pos: 0 }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.perm.len() {
                self.perm.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.perm[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// A batch as tensors: images, masks, edges and the valid-pixel mask.
struct Batch {
    x: Tensor,
    s: Tensor,
    e: Tensor,
    valid: Tensor,
}

fn load_batch(ds: &Dataset, indices: &[usize], device: &Device) -> Result<Batch, TrainError> {
    let samples = indices
        .par_iter()
        .map(|&i| {
            let (img, mask, edge) = ds.load_sample(i)?;
            let valid = ds.ignore_for(&mask).map(|&ign| !ign);
            Ok((img, mask, edge, valid))
        })
        .collect::<Result<Vec<_>, RenderError>>()?;
    let imgs: Vec<_> = samples.iter().map(|s| &s.0).collect();
    let masks: Vec<_> = samples.iter().map(|s| &s.1).collect();
    let edges: Vec<_> = samples.iter().map(|s| &s.2).collect();
    let valid: Vec<_> = samples.iter().map(|s| &s.3).collect();
    Ok(Batch {
        x: images_to_tensor(&imgs, device, DType::F32)?,
        s: masks_to_tensor(&masks, device, DType::F32)?,
        e: masks_to_tensor(&edges, device, DType::F32)?,
        valid: masks_to_tensor(&valid, device, DType::F32)?,
    })
}

/// Dice between `pred >= 0.5` and `target` restricted to `valid`; 1 when both are empty.
pub fn masked_dice(pred: &Mask, target: &Mask, valid: &Mask) -> f64 {
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for ((&p, &t), &v) in pred.as_slice().iter().zip(target.as_slice()).zip(valid.as_slice()) {
        if v {
            tp += (p && t) as usize;
            np += p as usize;
            ng += t as usize;
        }
    }
    if np + ng == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (np + ng) as f64
    }
}

/// Mean Dice of the model's segmentation over the given samples.
pub fn train_set_dice(model: &Model, ds: &Dataset, indices: &[usize], batch_size: usize) -> Result<f64, TrainError> {
    let device = model.params().device().clone();
    let mut sum = 0.0;
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = load_batch(ds, chunk, &device)?;
        let out = model.forward(&batch.x)?;
        for b in 0..chunk.len() {
            let pred = tensor_to_map(&out.s_hat, b)?.threshold(0.5);
            let target = tensor_to_map(&batch.s, b)?.threshold(0.5);
            let valid = tensor_to_map(&batch.valid, b)?.threshold(0.5);
            sum += masked_dice(&pred, &target, &valid);
        }
    }
    Ok(sum / indices.len() as f64)
}

fn adam(vars: Vec<candle_core::Var>, lr: f64, cfg: &TrainConfig) -> Result<AdamW, TrainError> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: 0.0,
        },
    )?)
}

/// Trains a freshly initialized network on `ds`. When `checkpoint` is given the
/// parameters are saved there every `checkpoint_every` steps and at the end.
pub fn train(
    ds: &Dataset,
    net_cfg: &NetworkConfig,
    weights: &LossWeights,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
    progress: &mut dyn FnMut(&StepInfo),
) -> Result<(Params, TrainHistory), TrainError> {
    let params = Params::init(net_cfg, cfg.rng_seed, &Device::Cpu, DType::F32)?;
    train_from(params, ds, weights, cfg, checkpoint, progress)
}

/// Same as [`train`], starting from the given parameters.
pub fn train_from(
    params: Params,
    ds: &Dataset,
    weights: &LossWeights,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
    progress: &mut dyn FnMut(&StepInfo),
) -> Result<(Params, TrainHistory), TrainError> {
    cfg.check()?;
    weights.check()?;
    let k = ds.len();
    if k < cfg.batch_size {
        return Err(TrainError::Config(format!(
            "dataset has {k} samples, fewer than batch_size {}",
            cfg.batch_size
        )));
    }
    let input_size = ds.manifest.config.out_size;
    let device = params.device().clone();
    let model = Model::new(params)?;
    let mut order = BatchOrder::new(k, cfg.rng_seed);
    let subset: Vec<usize> = (0..cfg.dice_subset.unwrap_or(k).min(k)).collect();
    let mut history = TrainHistory::default();
    let total_steps = cfg.total_steps();
    let mut global = 0usize;
    let mut degenerate = 0usize;

    for phase in [Phase::One, Phase::Two] {
        let (steps, mode, vars) = match phase {
            Phase::One => (cfg.phase1_steps, Mode::TrainFrozenEncoder, model.params().trainable(false)),
            Phase::Two => (cfg.phase2_steps, Mode::Train, model.params().trainable(true)),
        };
        let mut opt = adam(vars, lr_at(0, phase, cfg), cfg)?;
        for step in 0..steps {
            let lr = lr_at(step, phase, cfg);
            opt.set_learning_rate(lr);
            let batch = load_batch(ds, &order.next_batch(cfg.batch_size), &device)?;
            let out = model.forward_with(&batch.x, mode)?;
            let loss = total_loss(&out, &batch.s, &batch.e, &batch.valid, weights)?;
            if !loss.breakdown.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step: global,
                    phase: phase.number(),
                    breakdown: loss.breakdown,
                });
            }
            if loss.degenerate > 0 && degenerate == 0 {
                log::warn!("single-class edge target at step {global}; falling back to unweighted cross entropy");
            }
            degenerate += loss.degenerate;
            opt.backward_step(&loss.total)?;
            global += 1;
            let record = global % cfg.checkpoint_every == 0 && global != total_steps;
            let train_dice = if record { Some(train_set_dice(&model, ds, &subset, cfg.batch_size)?) } else { None };
            if record {
                if let Some(path) = checkpoint {
                    save_checkpoint(model.params(), input_size, path)?;
                }
            }
            history.rows.push(HistoryRow {
                step: global,
                phase: phase.number(),
                lr,
                seg: loss.breakdown.seg,
                edge: loss.breakdown.edge,
                consist: loss.breakdown.consist,
                total: loss.breakdown.total,
                train_dice,
            });
            progress(&StepInfo {
                step: global,
                total_steps,
                phase,
                breakdown: loss.breakdown,
            });
        }
    }
    if degenerate > 0 {
        log::warn!("{degenerate} single-class edge targets used unweighted cross entropy");
    }
    let all: Vec<usize> = (0..k).collect();
    let final_dice = train_set_dice(&model, ds, &all, cfg.batch_size)?;
    if let Some(last) = history.rows.last_mut() {
        last.train_dice = Some(final_dice);
    }
    history.final_train_dice = Some(final_dice);
    if let Some(path) = checkpoint {
        save_checkpoint(model.params(), input_size, path)?;
    }
    Ok((model.into_params(), history))
}
