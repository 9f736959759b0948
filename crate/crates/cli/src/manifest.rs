//! JSON manifests naming the frames of a sequence and the bursts of a dataset.
//! Relative paths resolve against the manifest's own directory.

use std::path::{Path, PathBuf};

use aerorecog_core::imgcore::{load_image, Image};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlightMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub id: String,
    pub frames: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<FlightMetadata>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub label: String,
    /// Path of the burst's `SequenceManifest`.
    pub sequence: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub bursts: Vec<DatasetEntry>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::ManifestInvalid(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl SequenceManifest {
    /// Reads a manifest and resolves its frame paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut m: SequenceManifest = read_json(path)?;
        let base = base_dir(path);
        for f in &mut m.frames {
            *f = resolve(&base, f);
        }
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.frames.len() < 2 {
            return Err(bad(format!(
                "sequence {} lists {} frames, need at least 2",
                self.id,
                self.frames.len()
            )));
        }
        if let Some(f) = self.frames.iter().find(|f| !f.is_file()) {
            return Err(bad(format!("frame {} does not exist", f.display())));
        }
        Ok(())
    }

    /// Loads every frame; all must share the first frame's size.
    pub fn load_frames(&self) -> Result<Vec<Image>, CliError> {
        let mut out: Vec<Image> = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let img = load_image(f).map_err(|e| bad(format!("{}: {e}", f.display())))?;
            if let Some(first) = out.first() {
                if first.dims() != img.dims() {
                    return Err(bad(format!(
                        "{} is {}x{}, first frame is {}x{}",
                        f.display(),
                        img.width(),
                        img.height(),
                        first.width(),
                        first.height()
                    )));
                }
            }
            out.push(img);
        }
        if let Some(res) = self.metadata.as_ref().and_then(|m| m.resolution) {
            if res != out[0].dims() {
                return Err(bad(format!(
                    "metadata resolution {res:?} disagrees with frames"
                )));
            }
        }
        Ok(out)
    }
}

impl DatasetManifest {
    /// Reads a dataset and resolves each burst's manifest path.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut m: DatasetManifest = read_json(path)?;
        let base = base_dir(path);
        for b in &mut m.bursts {
            b.sequence = resolve(&base, &b.sequence);
        }
        if m.bursts.is_empty() {
            return Err(bad("dataset lists no bursts"));
        }
        Ok(m)
    }
}
