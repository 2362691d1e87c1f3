//! Dynamic-programming box linking baseline.
//!
//! Over the frames that hold detections, one box per frame is chosen to
//! maximize `sum score(b_t) + lambda * sum iou(b_t, b_t+1)`. Frames without
//! detections are filled by linear interpolation between the neighbouring
//! selected boxes, and the ends are padded by replication.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, BBox, Tube};
use crate::ingest::DetectionSet;
use crate::linking::ProposalSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViterbiConfig {
    pub pairwise_weight: f64,
    pub num_tubes: usize,
}

impl Default for ViterbiConfig {
    fn default() -> Self {
        ViterbiConfig {
            pairwise_weight: 1.0,
            num_tubes: 20,
        }
    }
}

impl ViterbiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pairwise_weight >= 0.0 && self.pairwise_weight.is_finite()) {
            return Err(Error::Config("pairwise_weight must be >= 0".into()));
        }
        if self.num_tubes == 0 {
            return Err(Error::Config("num_tubes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Optimal path over the frames that contain detections.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    /// Selected detection per non-empty frame, in frame order.
    pub boxes: Vec<BBox>,
    /// Insertion index of each selected detection in the input set.
    pub indices: Vec<usize>,
    pub objective: f64,
}

/// Exact DP. Ties prefer the lowest insertion index, both for the final box
/// and for every back-pointer.
pub fn viterbi_path(d: &DetectionSet, pairwise_weight: f64) -> Result<ViterbiPath> {
    let layers: Vec<Vec<(usize, BBox)>> = d.by_frame().into_iter().filter(|f| !f.is_empty()).collect();
    if layers.is_empty() {
        return Err(Error::EmptyDetections);
    }
    let mut value: Vec<f64> = layers[0].iter().map(|(_, b)| b.score).collect();
    let mut back: Vec<Vec<usize>> = vec![Vec::new()];
    for t in 1..layers.len() {
        let (prev, cur) = (&layers[t - 1], &layers[t]);
        let mut next = Vec::with_capacity(cur.len());
        let mut ptr = Vec::with_capacity(cur.len());
        for (_, b) in cur {
            let mut best_i = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (i, (_, a)) in prev.iter().enumerate() {
                let v = value[i] + pairwise_weight * box_iou(a, b);
                if v > best_v {
                    best_v = v;
                    best_i = i;
                }
            }
            next.push(best_v + b.score);
            ptr.push(best_i);
        }
        value = next;
        back.push(ptr);
    }
    let mut j = 0;
    for (i, &v) in value.iter().enumerate() {
        if v > value[j] {
            j = i;
        }
    }
    let objective = value[j];
    let mut picks = vec![0; layers.len()];
    for t in (0..layers.len()).rev() {
        picks[t] = j;
        if t > 0 {
            j = back[t][j];
        }
    }
    let (indices, boxes) = picks.iter().zip(&layers).map(|(&p, layer)| layer[p]).unzip();
    Ok(ViterbiPath {
        boxes,
        indices,
        objective,
    })
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Expands a sparse path to one box per frame of the video.
fn fill_frames(path: &[BBox], num_frames: usize) -> Result<Tube> {
    let mut boxes = Vec::with_capacity(num_frames);
    let mut k = 0;
    for f in 0..num_frames {
        while k + 1 < path.len() && path[k + 1].frame <= f {
            k += 1;
        }
        let a = &path[k];
        let b = if f <= a.frame || k + 1 == path.len() {
            a.at_frame(f)
        } else {
            let next = &path[k + 1];
            let t = (f - a.frame) as f64 / (next.frame - a.frame) as f64;
            BBox {
                frame: f,
                x1: lerp(a.x1, next.x1, t),
                y1: lerp(a.y1, next.y1, t),
                x2: lerp(a.x2, next.x2, t),
                y2: lerp(a.y2, next.y2, t),
                score: lerp(a.score, next.score, t),
            }
        };
        boxes.push(b);
    }
    Tube::new(boxes)
}

/// Full-span tube from the optimal path.
pub fn viterbi_link(d: &DetectionSet, cfg: &ViterbiConfig) -> Result<Tube> {
    cfg.validate()?;
    let path = viterbi_path(d, cfg.pairwise_weight)?;
    fill_frames(&path.boxes, d.num_frames)
}

/// Repeated linking; the boxes of each extracted path are removed before the
/// next pass. Stops after `num_tubes` tubes or when no detections remain.
pub fn extract_k_tubes(d: &DetectionSet, cfg: &ViterbiConfig) -> Result<ProposalSet> {
    cfg.validate()?;
    let mut remaining = d.clone();
    let mut out = ProposalSet::default();
    while out.tubes.len() < cfg.num_tubes && !remaining.is_empty() {
        let path = viterbi_path(&remaining, cfg.pairwise_weight)?;
        out.tubes.push(fill_frames(&path.boxes, d.num_frames)?);
        out.degenerate.push(false);
        remaining.remove_indices(&path.indices);
    }
    Ok(out)
}
