use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use super::{ModelError, NetworkConfig, Params};
use crate::io;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

const KEY_FORMAT: &str = "yoho_format_version";
const KEY_NETWORK: &str = "network_config";
const KEY_INPUT: &str = "input_size";

fn ckpt_err(path: &Path, reason: impl std::fmt::Display) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Writes every tensor (weights and running statistics) to a safetensors file,
/// together with the network configuration and the training input size `(H, W)`.
pub fn save_checkpoint(params: &Params, input_size: (usize, usize), path: &Path) -> Result<(), ModelError> {
    let dtype = match params.dtype() {
        DType::F64 => Dtype::F64,
        _ => Dtype::F32,
    };
    let mut buffers: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, var) in params.vars() {
        let flat = var.as_tensor().flatten_all()?;
        let bytes = if dtype == Dtype::F64 {
            flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect()
        } else {
            flat.to_dtype(DType::F32)?.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect()
        };
        buffers.push((name.clone(), var.dims().to_vec(), bytes));
    }
    let views = buffers
        .iter()
        .map(|(name, shape, bytes)| Ok((name.as_str(), TensorView::new(dtype, shape.clone(), bytes).map_err(|e| ckpt_err(path, e))?)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let metadata = HashMap::from([
        (KEY_FORMAT.to_string(), CHECKPOINT_FORMAT_VERSION.to_string()),
        (KEY_NETWORK.to_string(), serde_json::to_string(&params.cfg).expect("config serializes")),
        (KEY_INPUT.to_string(), format!("{}x{}", input_size.0, input_size.1)),
    ]);
    let bytes = safetensors::tensor::serialize(views, Some(metadata)).map_err(|e| ckpt_err(path, e))?;
    io::write_atomic(path, &bytes)?;
    Ok(())
}

fn read_tensors(path: &Path, bytes: &[u8], keep: impl Fn(&str) -> bool) -> Result<BTreeMap<String, Tensor>, ModelError> {
    let st = SafeTensors::deserialize(bytes).map_err(|e| ckpt_err(path, e))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        if !keep(&name) {
            continue;
        }
        let data = view.data();
        let t = match view.dtype() {
            Dtype::F32 => {
                let v: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                Tensor::from_vec(v, view.shape(), &Device::Cpu)?
            }
            Dtype::F64 => {
                let v: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                Tensor::from_vec(v, view.shape(), &Device::Cpu)?
            }
            other => return Err(ckpt_err(path, format!("tensor `{name}` has unsupported dtype {other:?}"))),
        };
        out.insert(name, t);
    }
    Ok(out)
}

/// Loads a checkpoint written by [`save_checkpoint`]; returns the parameters and
/// the recorded input size.
pub fn load_checkpoint(path: &Path, device: &Device) -> Result<(Params, (usize, usize)), ModelError> {
    let bytes = io::read(path)?;
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| ckpt_err(path, e))?;
    let info = meta.metadata().clone().unwrap_or_default();
    let version = info.get(KEY_FORMAT).ok_or_else(|| ckpt_err(path, "missing format version"))?;
    if version != &CHECKPOINT_FORMAT_VERSION.to_string() {
        return Err(ckpt_err(path, format!("unsupported format version {version}")));
    }
    let cfg: NetworkConfig = info
        .get(KEY_NETWORK)
        .ok_or_else(|| ckpt_err(path, "missing network config"))
        .and_then(|raw| serde_json::from_str(raw).map_err(|e| ckpt_err(path, e)))?;
    let input = info
        .get(KEY_INPUT)
        .and_then(|raw| raw.split_once('x'))
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
        .ok_or_else(|| ckpt_err(path, "missing or malformed input size"))?;
    let tensors = read_tensors(path, &bytes, |_| true)?;
    Ok((Params::from_tensors(cfg, tensors, device)?, input))
}

/// Encoder arrays (`encoder.*`) from any safetensors file.
pub(super) fn load_encoder_arrays(path: &Path) -> Result<BTreeMap<String, Tensor>, ModelError> {
    let bytes = io::read(path)?;
    let arrays = read_tensors(path, &bytes, Params::is_encoder)?;
    if arrays.is_empty() {
        return Err(ckpt_err(path, "no encoder arrays"));
    }
    Ok(arrays)
}
