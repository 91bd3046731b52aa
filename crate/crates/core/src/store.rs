//! Checkpoint persistence and corpus export.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! <path>/meta.json            kind, format version, digest, metadata, tensor index
//! <path>/tensors/<name>.f32   little-endian f32 payload, row-major
//! ```
//!
//! The digest is SHA-256 over all payloads concatenated in name order, so any
//! flipped payload byte is caught on load. Metadata (including timestamps)
//! sits outside the digest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Manifest, SliceRecord, Split, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::label::{lesion_flag, render_png, write_iism, ClassCatalog, LabelMap};
use crate::nn::{Param, Scalar};

pub const FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const TENSOR_DIR: &str = "tensors";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Vae,
    Diffusion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedTensor {
            name: name.to_string(),
            shape,
            data,
        }
    }

    fn payload(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub format_version: u32,
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: CheckpointKind,
    format_version: u32,
    digest: String,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn new(
        kind: CheckpointKind,
        metadata: serde_json::Value,
        tensors: Vec<NamedTensor>,
    ) -> Self {
        Checkpoint {
            kind,
            format_version: FORMAT_VERSION,
            metadata,
            tensors,
        }
    }

    pub fn digest(&self) -> String {
        let mut sorted: Vec<&NamedTensor> = self.tensors.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let mut h = Sha256::new();
        for t in sorted {
            h.update(t.payload());
        }
        hex::encode(h.finalize())
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind:?} checkpoint, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn epoch(&self) -> Option<u64> {
        self.metadata.get("epoch").and_then(|e| e.as_u64())
    }

    /// Copies the stored tensor of the same name into `param`.
    pub fn load_into<F: Scalar>(&self, param: &mut Param<F>) -> Result<()> {
        let t = self.tensor(&param.name)?;
        if t.shape != param.shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` has shape {:?}, model expects {:?}",
                t.name, t.shape, param.shape
            )));
        }
        for (dst, &v) in param.value.iter_mut().zip(&t.data) {
            *dst = F::from_f64_lossy(v as f64);
        }
        Ok(())
    }

    fn validate_names(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.tensors {
            let ok = !t.name.is_empty()
                && t.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
            if !ok {
                return Err(Error::Checkpoint(format!(
                    "invalid tensor name `{}`",
                    t.name
                )));
            }
            if !seen.insert(&t.name) {
                return Err(Error::Checkpoint(format!(
                    "duplicate tensor name `{}`",
                    t.name
                )));
            }
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` data does not match its shape",
                    t.name
                )));
            }
        }
        Ok(())
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes into a temporary sibling directory, then renames it over `path`.
pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.validate_names()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(path);
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    let tensor_dir = tmp.join(TENSOR_DIR);
    std::fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;
    for t in &ckpt.tensors {
        write_file(&tensor_dir.join(format!("{}.f32", t.name)), &t.payload())?;
    }
    let meta = Meta {
        kind: ckpt.kind,
        format_version: ckpt.format_version,
        digest: ckpt.digest(),
        metadata: ckpt.metadata.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    write_file(&tmp.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let meta_path = path.join(META_FILE);
    let text = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let raw: serde_json::Value = serde_json::from_slice(&text)?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let meta: Meta = serde_json::from_value(raw)?;
    let mut tensors = Vec::with_capacity(meta.tensors.len());
    for entry in meta.tensors {
        let file = path.join(TENSOR_DIR).join(format!("{}.f32", entry.name));
        let bytes = match std::fs::read(&file) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingTensor(entry.name))
            }
            Err(e) => return Err(Error::io(&file, e)),
        };
        let expected = entry.shape.iter().product::<usize>() * 4;
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` has {} bytes, shape {:?} needs {expected}",
                entry.name,
                bytes.len(),
                entry.shape
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor {
            name: entry.name,
            shape: entry.shape,
            data,
        });
    }
    let ckpt = Checkpoint {
        kind: meta.kind,
        format_version: meta.format_version,
        metadata: meta.metadata,
        tensors,
    };
    ckpt.validate_names()?;
    let actual = ckpt.digest();
    if actual != meta.digest {
        return Err(Error::DigestMismatch {
            expected: meta.digest,
            actual,
        });
    }
    Ok(ckpt)
}

pub const EXPORT_PATIENT: &str = "synthetic";

/// Writes masks as IISM1 files plus RGB renders and a manifest:
///
/// ```text
/// <out>/synthetic/<i>.iism
/// <out>/renders/<i>.png
/// <out>/manifest.jsonl
/// ```
pub fn export_corpus(
    masks: &[LabelMap],
    out_dir: &Path,
    catalog: &ClassCatalog,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let size = masks
        .first()
        .map(|m| (m.height(), m.width()))
        .unwrap_or((0, 0));
    let renders = out_dir.join("renders");
    if !masks.is_empty() {
        std::fs::create_dir_all(&renders).map_err(|e| Error::io(&renders, e))?;
    }
    let mut records = Vec::with_capacity(masks.len());
    for (i, m) in masks.iter().enumerate() {
        if (m.height(), m.width()) != size {
            return Err(Error::Shape(format!(
                "mask {i} differs in size from mask 0"
            )));
        }
        let rel = format!("{EXPORT_PATIENT}/{i:05}.iism");
        write_iism(&out_dir.join(&rel), m, catalog.len())?;
        write_file(
            &renders.join(format!("{i:05}.png")),
            &render_png(m, catalog)?,
        )?;
        records.push(SliceRecord {
            patient_id: EXPORT_PATIENT.to_string(),
            slice_index: i as u32,
            path: rel,
            lesion: lesion_flag(m, catalog),
            split: Split::Test,
        });
    }
    let manifest = Manifest::new(catalog.clone(), size, records, out_dir)?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Groups checkpoint directories named `epoch<N>` under `dir` by epoch.
pub fn list_epochs(dir: &Path) -> Result<BTreeMap<u64, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(n) = name.strip_prefix("epoch").and_then(|s| s.parse().ok()) {
            out.insert(n, entry.path());
        }
    }
    Ok(out)
}
