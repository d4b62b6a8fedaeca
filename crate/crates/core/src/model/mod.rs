//! Edge-enhanced UNet.
//!
//! A 5-level encoder–decoder produces the segmentation `s_hat`. Every encoder
//! stage also feeds an edge-detection head; the five stage maps are fused by a
//! per-pixel softmax attention into `e_hat`. A fixed morphological gradient of
//! `s_hat` gives `e_hat_prime`.

mod checkpoint;
mod layers;

use std::collections::BTreeMap;
use std::path::PathBuf;

use candle_core::{DType, Device, Module, Tensor, Var};
use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use layers::{boundary_enhance, max_pool_3x3_s2, resize_bilinear, NormMode};
use layers::{Conv, ConvBn, ParamSource};

use crate::render::stream_rng;

pub const DEPTH: usize = 5;
/// Prefix of every parameter in the freezable encoder partition.
pub const ENCODER_PREFIX: &str = "encoder.";

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// 34-layer residual encoder (BasicBlock stages of 3, 4, 6, 3).
    Resnet34,
    /// Two 3×3 convs per level; for tests and CPU-scale runs.
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub depth: usize,
    pub encoder: EncoderKind,
    pub in_channels: usize,
    pub base_width: usize,
    pub use_pretrained_encoder: bool,
    /// Safetensors file holding `encoder.*` arrays.
    pub pretrained_path: Option<PathBuf>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            depth: DEPTH,
            encoder: EncoderKind::Resnet34,
            in_channels: 3,
            base_width: 64,
            use_pretrained_encoder: false,
            pretrained_path: None,
        }
    }
}

impl NetworkConfig {
    pub fn small(base_width: usize) -> Self {
        Self {
            encoder: EncoderKind::Small,
            base_width,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.depth != DEPTH {
            return Err(ModelError::Config(format!("depth must be {DEPTH}, got {}", self.depth)));
        }
        if self.base_width < 8 {
            return Err(ModelError::Config(format!("base_width must be >= 8, got {}", self.base_width)));
        }
        if self.in_channels != 3 {
            return Err(ModelError::Config(format!("in_channels must be 3, got {}", self.in_channels)));
        }
        Ok(())
    }

    /// Channel counts of the five encoder feature maps (strides 2..32).
    pub fn stage_widths(&self) -> [usize; DEPTH] {
        let b = self.base_width;
        match self.encoder {
            EncoderKind::Resnet34 => [b, b, 2 * b, 4 * b, 8 * b],
            EncoderKind::Small => [b, 2 * b, 4 * b, 8 * b, 8 * b],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("input {height}x{width} is not divisible by 32")]
    Shape { height: usize, width: usize },
    #[error("checkpoint mismatch for `{name}`: {reason}")]
    CheckpointMismatch { name: String, reason: String },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
}

/// Initialization rule for a named parameter.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Kaiming-uniform for ReLU networks.
    He { fan_in: usize },
    Zeros,
    Ones,
}

/// All trainable weights plus batch-norm running statistics, keyed by name.
#[derive(Clone)]
pub struct Params {
    pub cfg: NetworkConfig,
    vars: BTreeMap<String, Var>,
    device: Device,
    dtype: DType,
}

impl std::fmt::Debug for Params {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Params")
            .field("cfg", &self.cfg)
            .field("tensors", &self.vars.len())
            .finish()
    }
}

struct Initializer<'a> {
    seed: u64,
    device: &'a Device,
    dtype: DType,
    vars: BTreeMap<String, Var>,
    pretrained: Option<BTreeMap<String, Tensor>>,
    mismatch: Option<(String, String)>,
}

fn name_stream(name: &str) -> u64 {
    let digest = crate::io::sha256_hex(name.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

impl ParamSource for Initializer<'_> {
    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> candle_core::Result<Tensor> {
        if let Some(t) = self.pretrained.as_mut().and_then(|p| p.remove(name)) {
            if t.dims() != shape {
                self.mismatch.get_or_insert((name.to_string(), format!("shape {:?} vs expected {shape:?}", t.dims())));
            }
            let var = Var::from_tensor(&t.to_dtype(self.dtype)?.to_device(self.device)?.copy()?)?;
            let out = var.as_tensor().clone();
            self.vars.insert(name.to_string(), var);
            return Ok(out);
        }
        let n: usize = shape.iter().product();
        let values: Vec<f32> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::He { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut rng = stream_rng(self.seed, name_stream(name));
                (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect()
            }
        };
        let t = Tensor::from_vec(values, shape, self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }
}

struct Loader<'a> {
    vars: &'a BTreeMap<String, Var>,
}

impl ParamSource for Loader<'_> {
    fn tensor(&mut self, name: &str, shape: &[usize], _: Init) -> candle_core::Result<Tensor> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| candle_core::Error::Msg(format!("missing parameter `{name}`")))?;
        if var.dims() != shape {
            return Err(candle_core::Error::Msg(format!(
                "parameter `{name}` has shape {:?}, expected {shape:?}",
                var.dims()
            )));
        }
        Ok(var.as_tensor().clone())
    }
}

impl Params {
    /// Random initialization, deterministic in `seed`. Each tensor draws from
    /// its own stream keyed by name.
    pub fn init(cfg: &NetworkConfig, seed: u64, device: &Device, dtype: DType) -> Result<Self, ModelError> {
        cfg.check()?;
        let pretrained = match (&cfg.use_pretrained_encoder, &cfg.pretrained_path) {
            (true, Some(path)) => Some(checkpoint::load_encoder_arrays(path)?),
            _ => None,
        };
        let mut init = Initializer {
            seed,
            device,
            dtype,
            vars: BTreeMap::new(),
            pretrained,
            mismatch: None,
        };
        Net::build(cfg, &mut init)?;
        if let Some((name, reason)) = init.mismatch {
            return Err(ModelError::CheckpointMismatch { name, reason });
        }
        if let Some(name) = init.pretrained.and_then(|left| left.into_keys().next()) {
            return Err(ModelError::CheckpointMismatch {
                name,
                reason: "not an encoder parameter of this configuration".into(),
            });
        }
        let vars = init.vars;
        Ok(Self {
            cfg: cfg.clone(),
            vars,
            device: device.clone(),
            dtype,
        })
    }

    pub(crate) fn from_tensors(cfg: NetworkConfig, tensors: BTreeMap<String, Tensor>, device: &Device) -> Result<Self, ModelError> {
        cfg.check()?;
        let dtype = tensors.values().next().map(Tensor::dtype).unwrap_or(DType::F32);
        let mut vars = BTreeMap::new();
        for (name, t) in tensors {
            vars.insert(name, Var::from_tensor(&t.to_device(device)?)?);
        }
        let params = Self {
            cfg,
            vars,
            device: device.clone(),
            dtype,
        };
        // Every expected tensor present with the right shape, and nothing extra.
        let mut expected = Initializer {
            seed: 0,
            device,
            dtype,
            vars: BTreeMap::new(),
            pretrained: None,
            mismatch: None,
        };
        Net::build(&params.cfg, &mut expected)?;
        for (name, var) in &expected.vars {
            match params.vars.get(name) {
                None => {
                    return Err(ModelError::CheckpointMismatch {
                        name: name.clone(),
                        reason: "missing".into(),
                    })
                }
                Some(v) if v.dims() != var.dims() => {
                    return Err(ModelError::CheckpointMismatch {
                        name: name.clone(),
                        reason: format!("shape {:?} vs expected {:?}", v.dims(), var.dims()),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = params.vars.keys().find(|k| !expected.vars.contains_key(*k)) {
            return Err(ModelError::CheckpointMismatch {
                name: extra.clone(),
                reason: "unexpected tensor".into(),
            });
        }
        Ok(params)
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.vars.get(name).map(Var::as_tensor)
    }

    pub(crate) fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    /// True for batch-norm running statistics, which are never optimized.
    pub fn is_buffer(name: &str) -> bool {
        name.ends_with(layers::RUNNING_MEAN) || name.ends_with(layers::RUNNING_VAR)
    }

    pub fn is_encoder(name: &str) -> bool {
        name.starts_with(ENCODER_PREFIX)
    }

    /// Trainable variables, optionally excluding the encoder partition.
    pub fn trainable(&self, include_encoder: bool) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(name, _)| !Self::is_buffer(name) && (include_encoder || !Self::is_encoder(name)))
            .map(|(_, v)| v.clone())
            .collect()
    }

    /// Number of scalar trainable parameters.
    pub fn parameter_count(&self) -> usize {
        self.vars
            .iter()
            .filter(|(name, _)| !Self::is_buffer(name))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// SHA-256 over names, shapes and little-endian values of the selected tensors.
    pub fn hash_where(&self, keep: impl Fn(&str) -> bool) -> Result<String, ModelError> {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (name, var) in self.vars.iter().filter(|(n, _)| keep(n)) {
            hasher.update(name.as_bytes());
            for d in var.dims() {
                hasher.update((*d as u64).to_le_bytes());
            }
            let values = var.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            for v in values {
                hasher.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }

    pub fn hash(&self) -> Result<String, ModelError> {
        self.hash_where(|_| true)
    }

    pub fn encoder_hash(&self) -> Result<String, ModelError> {
        self.hash_where(Self::is_encoder)
    }

    /// Independent copy of every tensor.
    pub fn deep_clone(&self) -> Result<Self, ModelError> {
        let mut vars = BTreeMap::new();
        for (name, var) in &self.vars {
            vars.insert(name.clone(), Var::from_tensor(&var.as_tensor().copy()?.detach())?);
        }
        Ok(Self {
            cfg: self.cfg.clone(),
            vars,
            device: self.device.clone(),
            dtype: self.dtype,
        })
    }
}

/// Network outputs, each `(n, 1, H, W)` in `[0, 1]`.
pub struct ModelOutputs {
    pub s_hat: Tensor,
    pub e_hat: Tensor,
    pub e_hat_prime: Tensor,
    pub stage_edges: Vec<Tensor>,
}

struct BasicBlock {
    a: ConvBn,
    b: ConvBn,
    down: Option<ConvBn>,
}

impl BasicBlock {
    fn new(src: &mut dyn ParamSource, name: &str, c_in: usize, c_out: usize, stride: usize) -> candle_core::Result<Self> {
        let down = if stride != 1 || c_in != c_out {
            Some(ConvBn::new(src, &format!("{name}.down"), c_in, c_out, 1, stride)?)
        } else {
            None
        };
        Ok(Self {
            a: ConvBn::new(src, &format!("{name}.a"), c_in, c_out, 3, stride)?,
            b: ConvBn::new(src, &format!("{name}.b"), c_out, c_out, 3, 1)?,
            down,
        })
    }

    fn forward(&self, x: &Tensor, mode: NormMode) -> candle_core::Result<Tensor> {
        let y = self.b.forward(&self.a.forward(x, mode, true)?, mode, false)?;
        let skip = match &self.down {
            Some(d) => d.forward(x, mode, false)?,
            None => x.clone(),
        };
        (y + skip)?.relu()
    }
}

enum Encoder {
    Resnet { stem: ConvBn, layers: Vec<Vec<BasicBlock>> },
    Small { stages: Vec<(ConvBn, ConvBn)> },
}

impl Encoder {
    fn build(cfg: &NetworkConfig, src: &mut dyn ParamSource) -> candle_core::Result<Self> {
        let widths = cfg.stage_widths();
        match cfg.encoder {
            EncoderKind::Resnet34 => {
                let stem = ConvBn::new(src, "encoder.stem", cfg.in_channels, widths[0], 7, 2)?;
                let mut layers = Vec::new();
                let mut c_in = widths[0];
                for (i, blocks) in [3usize, 4, 6, 3].into_iter().enumerate() {
                    let c_out = widths[i + 1];
                    let mut layer = Vec::new();
                    for j in 0..blocks {
                        let stride = if i > 0 && j == 0 { 2 } else { 1 };
                        layer.push(BasicBlock::new(src, &format!("encoder.layer{}.{j}", i + 1), c_in, c_out, stride)?);
                        c_in = c_out;
                    }
                    layers.push(layer);
                }
                Ok(Encoder::Resnet { stem, layers })
            }
            EncoderKind::Small => {
                let mut stages = Vec::new();
                let mut c_in = cfg.in_channels;
                for (i, &w) in widths.iter().enumerate() {
                    stages.push((
                        ConvBn::new(src, &format!("encoder.stage{}.down", i + 1), c_in, w, 3, 2)?,
                        ConvBn::new(src, &format!("encoder.stage{}.conv", i + 1), w, w, 3, 1)?,
                    ));
                    c_in = w;
                }
                Ok(Encoder::Small { stages })
            }
        }
    }

    fn forward(&self, x: &Tensor, mode: NormMode) -> candle_core::Result<Vec<Tensor>> {
        let mut feats = Vec::with_capacity(DEPTH);
        match self {
            Encoder::Resnet { stem, layers } => {
                let mut h = stem.forward(x, mode, true)?;
                feats.push(h.clone());
                h = max_pool_3x3_s2(&h)?;
                for layer in layers {
                    for block in layer {
                        h = block.forward(&h, mode)?;
                    }
                    feats.push(h.clone());
                }
            }
            Encoder::Small { stages } => {
                let mut h = x.clone();
                for (down, conv) in stages {
                    h = conv.forward(&down.forward(&h, mode, true)?, mode, true)?;
                    feats.push(h.clone());
                }
            }
        }
        Ok(feats)
    }
}

struct UpStage {
    a: ConvBn,
    b: ConvBn,
}

struct Net {
    encoder: Encoder,
    up: Vec<UpStage>,
    head_conv: Conv,
    head_out: Conv,
    ed: Vec<Conv>,
    fuse_a: Conv,
    fuse_b: Conv,
}

const FUSION_HIDDEN: usize = 8;

impl Net {
    fn build(cfg: &NetworkConfig, src: &mut dyn ParamSource) -> candle_core::Result<Self> {
        let widths = cfg.stage_widths();
        let encoder = Encoder::build(cfg, src)?;
        // Up-stage i merges the running decoder map with encoder level 3-i.
        let mut up = Vec::new();
        let mut c_dec = widths[4];
        for i in 0..DEPTH - 1 {
            let skip = widths[3 - i];
            up.push(UpStage {
                a: ConvBn::new(src, &format!("decoder.up{}.a", i + 1), c_dec + skip, skip, 3, 1)?,
                b: ConvBn::new(src, &format!("decoder.up{}.b", i + 1), skip, skip, 3, 1)?,
            });
            c_dec = skip;
        }
        let head_w = (c_dec / 2).max(8);
        let head_conv = Conv::new(src, "decoder.head.conv", c_dec, head_w, 3, 1, 1, true)?;
        let head_out = Conv::new(src, "decoder.head.out", head_w, 1, 1, 1, 0, true)?;
        let ed = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| Conv::new(src, &format!("edge.ed{}", i + 1), w, 1, 1, 1, 0, true))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let fuse_a = Conv::new(src, "fusion.a", DEPTH, FUSION_HIDDEN, 3, 1, 1, true)?;
        let fuse_b = Conv::zeroed(src, "fusion.b", FUSION_HIDDEN, DEPTH, 3, 1)?;
        Ok(Self {
            encoder,
            up,
            head_conv,
            head_out,
            ed,
            fuse_a,
            fuse_b,
        })
    }
}

/// Per-pixel attention weights over the five stage logits: softmax across
/// channels. The conv stack runs at half resolution and the weights are
/// bilinearly upsampled, which keeps them summing to one.
fn attention_weights(net: &Net, logits: &Tensor) -> candle_core::Result<Tensor> {
    let (_, _, h, w) = logits.dims4()?;
    let coarse = if h % 2 == 0 && w % 2 == 0 { logits.avg_pool2d(2)? } else { logits.clone() };
    let hidden = net.fuse_a.forward(&coarse)?.relu()?;
    let weights = candle_nn::ops::softmax(&net.fuse_b.forward(&hidden)?, 1)?;
    resize_bilinear(&weights, h, w)
}

/// A network bound to its parameters.
pub struct Model {
    params: Params,
    net: Net,
}

/// Training-time options for [`Model::forward_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train,
    /// Encoder weights and statistics held fixed; no gradient reaches the encoder.
    TrainFrozenEncoder,
}

impl Model {
    pub fn new(params: Params) -> Result<Self, ModelError> {
        let net = Net::build(&params.cfg, &mut Loader { vars: &params.vars })?;
        Ok(Self { params, net })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn into_params(self) -> Params {
        self.params
    }

    pub fn forward(&self, x: &Tensor) -> Result<ModelOutputs, ModelError> {
        self.forward_with(x, Mode::Eval)
    }

    /// `x` is `(n, 3, H, W)` RGB in `[0, 1]`; H and W must be multiples of 32.
    pub fn forward_with(&self, x: &Tensor, mode: Mode) -> Result<ModelOutputs, ModelError> {
        let (_, _, h, w) = x.dims4()?;
        if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
            return Err(ModelError::Shape { height: h, width: w });
        }
        let x = x.to_dtype(self.params.dtype)?;
        let (enc_mode, dec_mode) = match mode {
            Mode::Eval => (NormMode::Eval, NormMode::Eval),
            Mode::Train => (NormMode::Train, NormMode::Train),
            Mode::TrainFrozenEncoder => (NormMode::TrainFrozen, NormMode::Train),
        };
        let x = normalize(&x)?;
        let mut feats = self.net.encoder.forward(&x, enc_mode)?;
        if mode == Mode::TrainFrozenEncoder {
            feats = feats.into_iter().map(|f| f.detach()).collect();
        }

        let mut d = feats[4].clone();
        for (i, stage) in self.net.up.iter().enumerate() {
            let skip = &feats[3 - i];
            let (_, _, sh, sw) = skip.dims4()?;
            let merged = Tensor::cat(&[&d.upsample_nearest2d(sh, sw)?, skip], 1)?;
            d = stage.b.forward(&stage.a.forward(&merged, dec_mode, true)?, dec_mode, true)?;
        }
        let s_logit = self.net.head_out.forward(&self.net.head_conv.forward(&d)?.relu()?)?;
        let s_logit = resize_bilinear(&s_logit, h, w)?;
        let s_hat = candle_nn::ops::sigmoid(&s_logit)?;

        let stage_logits = feats
            .iter()
            .zip(&self.net.ed)
            .map(|(f, ed)| resize_bilinear(&ed.forward(f)?, h, w))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let stacked = Tensor::cat(&stage_logits, 1)?;
        let weights = attention_weights(&self.net, &stacked)?;
        let fused = (weights * &stacked)?.sum_keepdim(1)?;
        let e_hat = candle_nn::ops::sigmoid(&fused)?;
        let stage_edges = stage_logits
            .iter()
            .map(candle_nn::ops::sigmoid)
            .collect::<candle_core::Result<Vec<_>>>()?;
        let e_hat_prime = boundary_enhance(&s_hat)?;
        Ok(ModelOutputs {
            s_hat,
            e_hat,
            e_hat_prime,
            stage_edges,
        })
    }

    /// Attention weights the fusion block assigns to the given stage logits.
    pub fn fusion_weights(&self, stage_logits: &Tensor) -> Result<Tensor, ModelError> {
        Ok(attention_weights(&self.net, stage_logits)?)
    }

    /// Fuses five full-resolution stage logit maps `(n, 5, H, W)` into an edge map.
    pub fn fuse_edges(&self, stage_logits: &Tensor) -> Result<Tensor, ModelError> {
        if stage_logits.dim(1)? != DEPTH {
            return Err(ModelError::Candle(candle_core::Error::Msg(format!(
                "expected {DEPTH} stage maps, got {}",
                stage_logits.dim(1)?
            ))));
        }
        let w = attention_weights(&self.net, stage_logits)?;
        Ok(candle_nn::ops::sigmoid(&(w * stage_logits)?.sum_keepdim(1)?)?)
    }
}

fn normalize(x: &Tensor) -> candle_core::Result<Tensor> {
    let dev = x.device();
    let dtype = x.dtype();
    let mean = Tensor::new(&IMAGENET_MEAN, dev)?.to_dtype(dtype)?.reshape((1, 3, 1, 1))?;
    let std = Tensor::new(&IMAGENET_STD, dev)?.to_dtype(dtype)?.reshape((1, 3, 1, 1))?;
    x.broadcast_sub(&mean)?.broadcast_div(&std)
}

/// Packs RGB images of one size into an `(n, 3, H, W)` tensor in `[0, 1]`.
pub fn images_to_tensor(images: &[&RgbImage], device: &Device, dtype: DType) -> candle_core::Result<Tensor> {
    let (w, h) = images[0].dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        assert_eq!(img.dimensions(), (w as u32, h as u32), "batch images share one size");
        let raw = img.as_raw();
        for c in 0..3 {
            data.extend((0..h * w).map(|i| raw[i * 3 + c] as f32 / 255.0));
        }
    }
    Tensor::from_vec(data, (images.len(), 3, h, w), device)?.to_dtype(dtype)
}

/// Packs masks into an `(n, 1, H, W)` tensor of zeros and ones.
pub fn masks_to_tensor(masks: &[&crate::grid::Mask], device: &Device, dtype: DType) -> candle_core::Result<Tensor> {
    let (w, h) = masks[0].dims();
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        data.extend(m.as_slice().iter().map(|&b| if b { 1f32 } else { 0.0 }));
    }
    Tensor::from_vec(data, (masks.len(), 1, h, w), device)?.to_dtype(dtype)
}

/// Extracts map `i` of an `(n, 1, H, W)` tensor.
pub fn tensor_to_map(t: &Tensor, i: usize) -> candle_core::Result<crate::grid::Map> {
    let (_, _, h, w) = t.dims4()?;
    let values = t.get(i)?.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    Ok(crate::grid::Map::from_vec(w, h, values))
}
