//! Safetensors checkpoints in the Hugging Face GPT-2 layout.
//!
//! Tensor names follow `tensor_map.md`; a leading `transformer.` prefix is
//! accepted. F32, F16 and BF16 tensors are widened to f32.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use safetensors::tensor::{Metadata, SafeTensorError, TensorInfo};
use safetensors::{Dtype, SafeTensors};
use serde::Deserialize;
use straighten_core::model::TensorSource;
use straighten_core::{Model, ModelConfig};

use crate::error::{read, read_string, Error, Result};

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const CONFIG_FILE: &str = "config.json";
pub const CACHE_ENV: &str = "STRAIGHTEN_CACHE_DIR";
const PREFIX: &str = "transformer.";

pub struct SafetensorsFile {
    path: PathBuf,
    bytes: Vec<u8>,
    header_len: usize,
    tensors: HashMap<String, TensorInfo>,
}

impl SafetensorsFile {
    pub fn open(path: &Path) -> Result<Self> {
        Self::from_bytes(path, read(path)?)
    }

    pub fn from_bytes(path: &Path, bytes: Vec<u8>) -> Result<Self> {
        let fail = |message: String| Error::Checkpoint { path: path.to_path_buf(), message };
        let (header_len, metadata): (usize, Metadata) = match SafeTensors::read_metadata(&bytes) {
            Ok(m) => m,
            Err(SafeTensorError::MetadataIncompleteBuffer) => return Err(fail(describe_truncation(&bytes))),
            Err(e) => return Err(fail(format!("invalid safetensors header: {e:?}"))),
        };
        let tensors = metadata.tensors().into_iter().map(|(k, v)| (k, v.clone())).collect();
        Ok(Self { path: path.to_path_buf(), bytes, header_len, tensors })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    fn info(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.get(name).or_else(|| self.tensors.get(&format!("{PREFIX}{name}")))
    }

    pub fn shape(&self, name: &str) -> Option<&[usize]> {
        self.info(name).map(|i| i.shape.as_slice())
    }

    pub fn read_f32(&self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        let Some(info) = self.info(name) else {
            return Ok(None);
        };
        let start = 8 + self.header_len + info.data_offsets.0;
        let raw = &self.bytes[start..8 + self.header_len + info.data_offsets.1];
        let data = match info.dtype {
            Dtype::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            Dtype::F16 => raw.chunks_exact(2).map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32()).collect(),
            Dtype::BF16 => raw.chunks_exact(2).map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32()).collect(),
            other => {
                return Err(Error::Checkpoint {
                    path: self.path.clone(),
                    message: format!("tensor {name}: unsupported dtype {other:?}"),
                })
            }
        };
        Ok(Some((info.shape.clone(), data)))
    }

    /// Architecture read off tensor shapes. The head count is not stored in
    /// the weights, so it comes from the published preset with the same width.
    pub fn infer_config(&self) -> Result<ModelConfig> {
        let fail = |m: String| Error::Checkpoint { path: self.path.clone(), message: m };
        let wte = self.shape("wte.weight").ok_or_else(|| fail("missing tensor wte.weight".into()))?;
        let wpe = self.shape("wpe.weight").ok_or_else(|| fail("missing tensor wpe.weight".into()))?;
        let (&[vocab_size, d_model], &[context_window, _]) = (wte, wpe) else {
            return Err(fail("embedding tensors are not matrices".into()));
        };
        let n_layers = (0..).take_while(|l| self.shape(&format!("h.{l}.ln_1.weight")).is_some()).count();
        let n_heads = ["gpt2", "gpt2-medium", "gpt2-large", "gpt2-xl"]
            .iter()
            .filter_map(|p| ModelConfig::preset(p))
            .find(|c| c.d_model == d_model)
            .map(|c| c.n_heads)
            .ok_or_else(|| fail(format!("no preset with width {d_model}; supply {CONFIG_FILE} for the head count")))?;
        Ok(ModelConfig { n_layers, d_model, n_heads, vocab_size, context_window })
    }
}

impl TensorSource for SafetensorsFile {
    fn fetch(&mut self, name: &str) -> straighten_core::Result<Option<(Vec<usize>, Vec<f32>)>> {
        self.read_f32(name).map_err(|e| straighten_core::Error::Config(e.to_string()))
    }
}

/// Names the first tensor whose bytes extend past the end of a short file.
fn describe_truncation(bytes: &[u8]) -> String {
    #[derive(Deserialize)]
    struct Entry {
        data_offsets: Option<(usize, usize)>,
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("length checked by the header parser")) as usize;
    let available = bytes.len().saturating_sub(8 + header_len);
    let header: HashMap<String, serde_json::Value> =
        serde_json::from_slice(&bytes[8..8 + header_len]).unwrap_or_default();
    let mut entries: Vec<(String, usize, usize)> = header
        .into_iter()
        .filter_map(|(k, v)| {
            let e: Entry = serde_json::from_value(v).ok()?;
            e.data_offsets.map(|(s, t)| (k, s, t))
        })
        .collect();
    entries.sort_by_key(|e| e.1);
    match entries.iter().find(|e| e.2 > available) {
        Some((name, _, end)) => format!("tensor {name} is truncated: needs {end} data bytes, file has {available}"),
        None => format!("data section length {available} does not match the header"),
    }
}

#[derive(Deserialize)]
struct HfConfig {
    n_layer: usize,
    n_embd: usize,
    n_head: usize,
    vocab_size: usize,
    n_positions: Option<usize>,
    n_ctx: Option<usize>,
    activation_function: Option<String>,
    layer_norm_epsilon: Option<f64>,
}

/// Reads a Hugging Face GPT-2 `config.json`.
pub fn read_config(path: &Path) -> Result<ModelConfig> {
    let text = read_string(path)?;
    let c: HfConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let fail = |m: String| Error::Checkpoint { path: path.to_path_buf(), message: m };
    if let Some(act) = c.activation_function.as_deref() {
        if act != "gelu_new" {
            return Err(fail(format!("activation {act:?} is not the tanh GELU this implementation computes")));
        }
    }
    if let Some(eps) = c.layer_norm_epsilon {
        if (eps - 1e-5).abs() > 1e-12 {
            return Err(fail(format!("layer_norm_epsilon {eps} differs from the fixed 1e-5")));
        }
    }
    let context_window = c.n_positions.or(c.n_ctx).ok_or_else(|| fail("missing n_positions".into()))?;
    let config = ModelConfig { n_layers: c.n_layer, d_model: c.n_embd, n_heads: c.n_head, vocab_size: c.vocab_size, context_window };
    config.validate()?;
    Ok(config)
}

/// Checkpoint files behind a model argument: a directory holding
/// `model.safetensors` (and optionally `config.json`), a `.safetensors` file,
/// or a name looked up under the cache directory.
pub fn resolve(spec: &str) -> Result<(PathBuf, Option<PathBuf>)> {
    let direct = PathBuf::from(spec);
    let dir = if direct.is_file() {
        let config = direct.with_file_name(CONFIG_FILE);
        return Ok((direct, config.is_file().then_some(config)));
    } else if direct.is_dir() {
        direct
    } else {
        let cached = cache_dir().join(spec);
        if !cached.is_dir() {
            return Err(Error::Config(format!(
                "model {spec:?} is neither a path nor present in the cache directory {}",
                cache_dir().display()
            )));
        }
        cached
    };
    let weights = dir.join(WEIGHTS_FILE);
    let config = dir.join(CONFIG_FILE);
    Ok((weights, config.is_file().then_some(config)))
}

/// `$STRAIGHTEN_CACHE_DIR`, else `~/.cache/straighten`.
pub fn cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("straighten")
}

/// Loads and shape-checks a model.
pub fn load_model(spec: &str) -> Result<Model> {
    let (weights, config) = resolve(spec)?;
    let mut file = SafetensorsFile::open(&weights)?;
    let config = match config {
        Some(path) => read_config(&path)?,
        None => file.infer_config()?,
    };
    Model::from_source(config, &mut file).map_err(|e| Error::Checkpoint { path: weights.clone(), message: e.to_string() })
}
