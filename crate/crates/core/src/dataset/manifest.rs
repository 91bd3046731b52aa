use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_slices, split_patients, SplitRatios};
use crate::error::{Error, Result};
use crate::label::{lesion_flag, read_label_file, ClassCatalog};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const MANIFEST_FORMAT: &str = "iism-manifest";
const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceRecord {
    pub patient_id: String,
    pub slice_index: u32,
    /// Relative to the manifest's root directory, `/`-separated.
    pub path: String,
    pub lesion: u8,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    catalog: ClassCatalog,
    height: usize,
    width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub catalog: ClassCatalog,
    pub height: usize,
    pub width: usize,
    pub records: Vec<SliceRecord>,
    /// Directory record paths are resolved against. Not serialized.
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(
        catalog: ClassCatalog,
        size: (usize, usize),
        records: Vec<SliceRecord>,
        root: impl Into<PathBuf>,
    ) -> Result<Self> {
        let m = Manifest {
            catalog,
            height: size.0,
            width: size.1,
            records,
            root: root.into(),
        };
        m.check_consistency()?;
        Ok(m)
    }

    /// Unique `(patient, slice)` keys and no patient in more than one split.
    pub fn check_consistency(&self) -> Result<()> {
        let mut keys = HashSet::new();
        let mut splits: HashMap<&str, Split> = HashMap::new();
        for r in &self.records {
            if !keys.insert((r.patient_id.as_str(), r.slice_index)) {
                return Err(Error::Format(format!(
                    "duplicate record for patient {} slice {}",
                    r.patient_id, r.slice_index
                )));
            }
            if r.lesion > 1 {
                return Err(Error::Format(format!(
                    "lesion flag must be 0 or 1, got {}",
                    r.lesion
                )));
            }
            match splits.insert(r.patient_id.as_str(), r.split) {
                Some(prev) if prev != r.split => {
                    return Err(Error::Split(format!(
                        "patient {} appears in both {prev} and {}",
                        r.patient_id, r.split
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn resolve(&self, record: &SliceRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].split == split)
            .collect()
    }

    pub fn patients(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.patient_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn lesion_prevalence(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.lesion == 1).count() as f64 / self.records.len() as f64
    }

    /// Header line followed by one JSON object per record.
    pub fn to_jsonl(&self) -> Result<String> {
        let header = Header {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            catalog: self.catalog.clone(),
            height: self.height,
            width: self.width,
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Format("manifest is empty".into()))?,
        )?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest {} v{}",
                header.format, header.version
            )));
        }
        let records = lines
            .map(serde_json::from_str)
            .collect::<Result<Vec<SliceRecord>, _>>()?;
        Manifest::new(header.catalog, (header.height, header.width), records, root)
    }

    /// SHA-256 of the serialized manifest.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_jsonl()?.as_bytes())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest file; record paths resolve against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::from_jsonl(&text, root)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: SplitRatios,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestSpec {
    pub split: SplitSpec,
    /// Cranial-height band `(lo, hi)` applied per patient, if any.
    pub selection: Option<(f64, f64)>,
    /// Required slice size; defaults to the size of the first file read.
    pub image_size: Option<(usize, usize)>,
}

fn ingest_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Scans `root/<patient>/<slice>.{iism,png}`, recomputes lesion flags from the
/// pixels, assigns patient-level splits and writes `root/manifest.jsonl`.
pub fn build_manifest(
    root: &Path,
    catalog: &ClassCatalog,
    spec: &ManifestSpec,
) -> Result<Manifest> {
    let mut volumes: BTreeMap<String, BTreeMap<u32, PathBuf>> = BTreeMap::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let dir = entry.path();
        if !dir.is_dir() {
            continue;
        }
        let patient = entry.file_name().to_string_lossy().into_owned();
        let mut slices = BTreeMap::new();
        for file in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = file.map_err(|e| Error::io(&dir, e))?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext != "iism" && ext != "png" {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let index: u32 = stem
                .parse()
                .map_err(|_| ingest_error(&path, "file name must be a slice index"))?;
            if slices.insert(index, path.clone()).is_some() {
                return Err(ingest_error(&path, "duplicate slice index"));
            }
        }
        if !slices.is_empty() {
            volumes.insert(patient, slices);
        }
    }

    if volumes.is_empty() {
        let size = spec.image_size.unwrap_or((0, 0));
        let manifest = Manifest::new(catalog.clone(), size, Vec::new(), root)?;
        manifest.write(&root.join(MANIFEST_FILE))?;
        return Ok(manifest);
    }

    let patients: Vec<String> = volumes.keys().cloned().collect();
    let assignment = split_patients(&patients, &spec.split.ratios, spec.split.seed)?;
    let mut size = spec.image_size;
    let mut records = Vec::new();
    for (patient, slices) in &volumes {
        let keep = match spec.selection {
            Some((lo, hi)) => select_slices(slices.len(), lo, hi)?,
            None => 0..slices.len(),
        };
        for (pos, (&index, path)) in slices.iter().enumerate() {
            if !keep.contains(&pos) {
                continue;
            }
            let map = read_label_file(path, catalog.len())?;
            let dims = (map.height(), map.width());
            match size {
                None => size = Some(dims),
                Some(expected) if expected != dims => {
                    return Err(ingest_error(
                        path,
                        format!(
                            "slice is {}x{}, expected {}x{}",
                            dims.0, dims.1, expected.0, expected.1
                        ),
                    ))
                }
                _ => {}
            }
            let rel = path.strip_prefix(root).unwrap_or(path);
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            records.push(SliceRecord {
                patient_id: patient.clone(),
                slice_index: index,
                path: rel,
                lesion: lesion_flag(&map, catalog),
                split: assignment[patient],
            });
        }
    }
    let manifest = Manifest::new(catalog.clone(), size.unwrap_or((0, 0)), records, root)?;
    manifest.write(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}
