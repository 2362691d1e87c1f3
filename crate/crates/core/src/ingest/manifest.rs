use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ground_truth::{load_ground_truth, GroundTruth};
use crate::ingest::json::{check_version, read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// On-disk manifest document. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub entries: Vec<EntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDoc {
    pub video_id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub split: Split,
    pub label: Option<usize>,
    pub detections: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

/// A validated dataset listing with every path resolved and present on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Loads and merges every distinct ground-truth file the entries reference.
    pub fn load_ground_truth(&self) -> Result<GroundTruth> {
        let mut gt = GroundTruth {
            classes: self.classes.clone(),
            ..Default::default()
        };
        let paths: BTreeSet<&PathBuf> = self.entries.iter().filter_map(|e| e.ground_truth.as_ref()).collect();
        for p in paths {
            let part = load_ground_truth(p)?;
            gt.merge(part).map_err(|e| Error::validation(p, e.to_string()))?;
        }
        Ok(gt)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let doc: ManifestDoc = read_json(path)?;
    check_version(doc.format_version, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Option<String>| -> Result<Option<PathBuf>> {
        match p {
            None => Ok(None),
            Some(rel) => {
                let full = base.join(rel);
                if !full.exists() {
                    return Err(Error::MissingFile(full));
                }
                Ok(Some(full))
            }
        }
    };
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(doc.entries.len());
    for e in &doc.entries {
        if !seen.insert(e.video_id.clone()) {
            return Err(Error::validation(path, format!("video {:?} listed twice", e.video_id)));
        }
        let label =
            match &e.label {
                None if e.split == Split::Train => {
                    return Err(Error::validation(
                        path,
                        format!("train video {:?} has no label", e.video_id),
                    ))
                }
                None => None,
                Some(name) => Some(doc.classes.iter().position(|c| c == name).ok_or_else(|| {
                    Error::validation(path, format!("video {:?}: unknown label {name:?}", e.video_id))
                })?),
            };
        entries.push(ManifestEntry {
            video_id: e.video_id.clone(),
            split: e.split,
            label,
            detections: resolve(&e.detections)?,
            frames: resolve(&e.frames)?,
            features: resolve(&e.features)?,
            ground_truth: resolve(&e.ground_truth)?,
        });
    }
    Ok(Manifest {
        classes: doc.classes,
        entries,
    })
}

pub fn save_manifest(path: impl AsRef<Path>, doc: &ManifestDoc) -> Result<()> {
    write_json(path.as_ref(), doc)
}
