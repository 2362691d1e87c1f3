use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ingest::json::{check_version, parse_json, read_json, to_canonical_json, write_json};

/// Per-frame actor detections of one video, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub video_id: String,
    pub num_frames: usize,
    boxes: Vec<BBox>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionDoc {
    format_version: u32,
    video_id: String,
    num_frames: usize,
    boxes: Vec<BBox>,
}

impl DetectionSet {
    pub fn new(video_id: impl Into<String>, num_frames: usize, boxes: Vec<BBox>) -> Result<Self> {
        if num_frames == 0 {
            return Err(Error::Config("num_frames must be positive".into()));
        }
        for (i, b) in boxes.iter().enumerate() {
            b.validate()
                .map_err(|e| Error::InvalidBox(format!("detection {i}: {e}")))?;
            if b.frame >= num_frames {
                return Err(Error::InvalidBox(format!(
                    "detection {i}: frame {} >= num_frames {num_frames}",
                    b.frame
                )));
            }
        }
        Ok(DetectionSet {
            video_id: video_id.into(),
            num_frames,
            boxes,
        })
    }

    pub fn empty(video_id: impl Into<String>, num_frames: usize) -> Self {
        DetectionSet {
            video_id: video_id.into(),
            num_frames,
            boxes: Vec::new(),
        }
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&BBox) -> bool) {
        self.boxes.retain(|b| keep(b));
    }

    /// Detections grouped by frame; each entry keeps the insertion index.
    pub fn by_frame(&self) -> Vec<Vec<(usize, BBox)>> {
        let mut frames = vec![Vec::new(); self.num_frames];
        for (i, b) in self.boxes.iter().enumerate() {
            frames[b.frame].push((i, *b));
        }
        frames
    }

    /// Removes the detections at the given insertion indices.
    pub fn remove_indices(&mut self, indices: &[usize]) {
        let mut drop = vec![false; self.boxes.len()];
        for &i in indices {
            drop[i] = true;
        }
        let mut i = 0;
        self.boxes.retain(|_| {
            let keep = !drop[i];
            i += 1;
            keep
        });
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&self.doc())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let doc: DetectionDoc = parse_json(text, path)?;
        Self::from_doc(doc, path)
    }

    fn doc(&self) -> DetectionDoc {
        DetectionDoc {
            format_version: 1,
            video_id: self.video_id.clone(),
            num_frames: self.num_frames,
            boxes: self.boxes.clone(),
        }
    }

    fn from_doc(doc: DetectionDoc, path: &Path) -> Result<Self> {
        check_version(doc.format_version, path)?;
        DetectionSet::new(doc.video_id, doc.num_frames, doc.boxes).map_err(|e| Error::validation(path, e.to_string()))
    }
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let doc: DetectionDoc = read_json(path)?;
    DetectionSet::from_doc(doc, path)
}

pub fn save_detections(path: impl AsRef<Path>, set: &DetectionSet) -> Result<()> {
    write_json(path.as_ref(), &set.doc())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("det.json")
    }

    #[test]
    fn minimal_file() {
        let text = r#"{"format_version":1,"video_id":"v","num_frames":1,
            "boxes":[{"frame":0,"x1":1,"y1":2,"x2":3,"y2":4,"score":0.5}]}"#;
        let d = DetectionSet::from_json(text, p()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.boxes()[0], BBox::scored(0, 1.0, 2.0, 3.0, 4.0, 0.5).unwrap());
    }

    #[test]
    fn frame_at_num_frames_is_rejected() {
        let text = r#"{"format_version":1,"video_id":"v","num_frames":2,
            "boxes":[{"frame":2,"x1":1,"y1":2,"x2":3,"y2":4,"score":0.5}]}"#;
        let err = DetectionSet::from_json(text, p()).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("frame 2"), "{err}");
    }

    #[test]
    fn malformed_reports_line() {
        let text = "{\n\"format_version\": 1,\n\"video_id\": \n}";
        match DetectionSet::from_json(text, p()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_version_and_fields_rejected() {
        let text = r#"{"format_version":2,"video_id":"v","num_frames":1,"boxes":[]}"#;
        assert!(DetectionSet::from_json(text, p()).is_err());
        let text = r#"{"format_version":1,"video_id":"v","num_frames":1,"boxes":[],"x":1}"#;
        assert!(DetectionSet::from_json(text, p()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        let set = DetectionSet::new("clip", 3, vec![BBox::scored(2, 0.5, 1.0, 9.25, 7.0, 0.875).unwrap()]).unwrap();
        save_detections(&path, &set).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = load_detections(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_json(), text);
    }

    fn arb_set() -> impl Strategy<Value = DetectionSet> {
        (1usize..6).prop_flat_map(|n| {
            prop::collection::vec(
                (
                    0..n,
                    -100.0..100.0f64,
                    -100.0..100.0f64,
                    0.0..50.0f64,
                    0.0..50.0f64,
                    0.0..=1.0f64,
                ),
                0..8,
            )
            .prop_map(move |raw| {
                let boxes = raw
                    .into_iter()
                    .map(|(f, x, y, w, h, s)| BBox::scored(f, x, y, x + w, y + h, s).unwrap())
                    .collect();
                DetectionSet::new("v", n, boxes).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn canonical_roundtrip(set in arb_set()) {
            let text = set.to_json();
            let back = DetectionSet::from_json(&text, p()).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_json(), text);
        }

        #[test]
        fn malformed_never_panics(text in "\\PC{0,80}") {
            let _ = DetectionSet::from_json(&text, p());
        }
    }
}
