//! On-disk checkpoint archives.
//!
//! An archive is a directory holding `manifest.json` and one blob per tensor.
//! Each blob starts with a single ASCII header line
//!
//! ```text
//! name=<tensor name> dtype=f32 shape=16,3,3,3 layout=row-major endianness=little
//! ```
//!
//! followed by the raw little-endian element bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamStore, SlotKind};
use super::{ArchSpec, Network};
use crate::corpus::Domain;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub arch: ArchSpec,
    /// Domains trained on, in order. Append-only across stages.
    pub stage_history: Vec<Domain>,
    pub seed: u64,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: String,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    #[serde(flatten)]
    manifest: CheckpointManifest,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointArchive<T> {
    pub params: ParamStore<T>,
    pub manifest: CheckpointManifest,
}

impl<T: Scalar> CheckpointArchive<T> {
    pub fn from_network(net: &Network<T>, stage_history: Vec<Domain>, seed: u64, epoch: usize) -> Self {
        CheckpointArchive {
            params: net.params().clone(),
            manifest: CheckpointManifest {
                arch: net.spec().clone(),
                stage_history,
                seed,
                epoch,
                metrics: BTreeMap::new(),
            },
        }
    }

    /// Rebuilds the network, checking every tensor name and shape against the architecture.
    pub fn to_network(&self) -> Result<Network<T>> {
        let mut net = Network::build(self.manifest.arch.clone(), self.manifest.seed)?;
        for (name, slot) in self.params.iter() {
            if net.params().slot(name).is_none() {
                return Err(Error::ShapeMismatch(format!("`{name}` is not part of {}", self.manifest.arch.id)));
            }
            net.params_mut().set(name, slot.tensor.clone())?;
        }
        if net.params().len() != self.params.len() {
            let missing: Vec<&str> = net.params().names().filter(|n| self.params.get(n).is_none()).collect();
            return Err(Error::ShapeMismatch(format!("checkpoint lacks {missing:?}")));
        }
        Ok(net)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = Vec::with_capacity(self.params.len());
        for (name, slot) in self.params.iter() {
            let file = format!("{name}.bin");
            let path = dir.join(&file);
            fs::write(&path, encode_blob(name, &slot.tensor)).map_err(|e| Error::io(&path, e))?;
            let kind = match slot.kind {
                SlotKind::Param => "param",
                SlotKind::Buffer => "buffer",
            };
            tensors.push(TensorEntry { name: name.to_string(), kind: kind.to_string(), file });
        }
        let body = ManifestFile { manifest: self.manifest.clone(), tensors };
        let json = serde_json::to_string_pretty(&body).expect("manifest serializes");
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let body: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        let reference = Network::<T>::build(body.manifest.arch.clone(), body.manifest.seed)?;
        let mut params = reference.params().clone();
        for entry in &body.tensors {
            let blob_path = dir.join(&entry.file);
            let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
            let (name, tensor) = decode_blob::<T>(&bytes).map_err(|d| Error::format(&blob_path, d))?;
            if name != entry.name {
                return Err(Error::format(&blob_path, format!("header names `{name}`, manifest `{}`", entry.name)));
            }
            params.set(&name, tensor)?;
        }
        if body.tensors.len() != params.len() {
            return Err(Error::format(&path, format!("{} tensors listed, architecture has {}", body.tensors.len(), params.len())));
        }
        Ok(CheckpointArchive { params, manifest: body.manifest })
    }
}

/// Serializes one tensor in the blob format.
pub fn encode_blob<T: Scalar>(name: &str, tensor: &Tensor<T>) -> Vec<u8> {
    let shape: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
    let header = format!(
        "name={name} dtype={} shape={} layout=row-major endianness=little\n",
        T::DTYPE,
        shape.join(",")
    );
    let mut out = Vec::with_capacity(header.len() + tensor.numel() * T::BYTES);
    out.extend_from_slice(header.as_bytes());
    for &v in tensor.data() {
        v.write_le(&mut out);
    }
    out
}

/// Parses a blob, converting `f32`/`f64` payloads to `T`.
pub fn decode_blob<T: Scalar>(bytes: &[u8]) -> std::result::Result<(String, Tensor<T>), String> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or("missing header line")?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| "header is not UTF-8")?;
    let mut fields = BTreeMap::new();
    for part in header.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("malformed header field `{part}`"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("header lacks `{k}`"));
    if get("layout")? != "row-major" || get("endianness")? != "little" {
        return Err("only row-major little-endian blobs are supported".into());
    }
    let shape: Vec<usize> = match get("shape")? {
        "" => Vec::new(),
        s => s.split(',').map(|d| d.parse().map_err(|_| format!("bad dimension `{d}`"))).collect::<std::result::Result<_, _>>()?,
    };
    let payload = &bytes[nl + 1..];
    let n: usize = shape.iter().product();
    let data: Vec<T> = match get("dtype")? {
        "f32" => {
            if payload.len() != n * 4 {
                return Err(format!("expected {} payload bytes, found {}", n * 4, payload.len()));
            }
            payload.chunks_exact(4).map(|c| T::lit(f32::read_le(c) as f64)).collect()
        }
        "f64" => {
            if payload.len() != n * 8 {
                return Err(format!("expected {} payload bytes, found {}", n * 8, payload.len()));
            }
            payload.chunks_exact(8).map(|c| T::lit(f64::read_le(c))).collect()
        }
        other => return Err(format!("unsupported dtype `{other}`")),
    };
    let tensor = Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?;
    Ok((get("name")?.to_string(), tensor))
}
