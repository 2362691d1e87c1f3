use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Tube};
use crate::ingest::json::{check_version, parse_json, read_json, to_canonical_json, write_json};

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub class_id: usize,
    pub tube: Tube,
}

/// Ground-truth action tubes for a set of videos plus the class catalogue.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub classes: Vec<String>,
    pub videos: BTreeMap<String, Vec<GtInstance>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtDoc {
    format_version: u32,
    classes: Vec<String>,
    videos: Vec<GtVideoDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtVideoDoc {
    video_id: String,
    tubes: Vec<GtTubeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtTubeDoc {
    class: String,
    boxes: Vec<BBox>,
}

impl GroundTruth {
    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn num_instances(&self) -> usize {
        self.videos.values().map(Vec::len).sum()
    }

    /// Instances of one class, keyed by video.
    pub fn class_tubes(&self, class_id: usize) -> BTreeMap<&str, Vec<&Tube>> {
        self.videos
            .iter()
            .map(|(v, inst)| {
                (
                    v.as_str(),
                    inst.iter()
                        .filter(|g| g.class_id == class_id)
                        .map(|g| &g.tube)
                        .collect(),
                )
            })
            .collect()
    }

    /// Merges another file's annotations; class catalogues must agree.
    pub fn merge(&mut self, other: GroundTruth) -> Result<()> {
        if self.classes.is_empty() {
            self.classes = other.classes.clone();
        } else if self.classes != other.classes {
            return Err(Error::Config(format!(
                "class catalogues differ: {:?} vs {:?}",
                self.classes, other.classes
            )));
        }
        for (video, inst) in other.videos {
            self.videos.entry(video).or_default().extend(inst);
        }
        Ok(())
    }

    /// Keeps only the listed videos.
    pub fn restrict_to<'a>(&self, videos: impl IntoIterator<Item = &'a str>) -> GroundTruth {
        let keep: std::collections::BTreeSet<&str> = videos.into_iter().collect();
        GroundTruth {
            classes: self.classes.clone(),
            videos: self
                .videos
                .iter()
                .filter(|(v, _)| keep.contains(v.as_str()))
                .map(|(v, i)| (v.clone(), i.clone()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&self.doc())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let doc: GtDoc = parse_json(text, path)?;
        Self::from_doc(doc, path)
    }

    fn doc(&self) -> GtDoc {
        GtDoc {
            format_version: 1,
            classes: self.classes.clone(),
            videos: self
                .videos
                .iter()
                .map(|(v, inst)| GtVideoDoc {
                    video_id: v.clone(),
                    tubes: inst
                        .iter()
                        .map(|g| GtTubeDoc {
                            class: self.classes[g.class_id].clone(),
                            boxes: g.tube.boxes().to_vec(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn from_doc(doc: GtDoc, path: &Path) -> Result<Self> {
        check_version(doc.format_version, path)?;
        let mut gt = GroundTruth {
            classes: doc.classes,
            videos: BTreeMap::new(),
        };
        for (i, c) in gt.classes.iter().enumerate() {
            if gt.classes[..i].contains(c) {
                return Err(Error::validation(path, format!("duplicate class name {c:?}")));
            }
        }
        for video in doc.videos {
            if gt.videos.contains_key(&video.video_id) {
                return Err(Error::validation(
                    path,
                    format!("video {:?} listed twice", video.video_id),
                ));
            }
            let mut inst = Vec::with_capacity(video.tubes.len());
            for (t, tube) in video.tubes.into_iter().enumerate() {
                let class_id = gt.class_id(&tube.class).ok_or_else(|| {
                    Error::validation(
                        path,
                        format!("video {:?} tube {t}: unknown class {:?}", video.video_id, tube.class),
                    )
                })?;
                let tube = Tube::new(tube.boxes)
                    .map_err(|e| Error::validation(path, format!("video {:?} tube {t}: {e}", video.video_id)))?;
                inst.push(GtInstance { class_id, tube });
            }
            gt.videos.insert(video.video_id, inst);
        }
        Ok(gt)
    }
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let doc: GtDoc = read_json(path)?;
    GroundTruth::from_doc(doc, path)
}

pub fn save_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    write_json(path.as_ref(), &gt.doc())
}
