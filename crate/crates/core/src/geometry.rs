//! Axis-aligned boxes, tubes and overlap measures.
//!
//! Coordinates are continuous: a box covers `[x1, x2] x [y1, y2]` and its area
//! is `(x2 - x1) * (y2 - y1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scored rectangle on one video frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub frame: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(default = "unit_score")]
    pub score: f64,
}

fn unit_score() -> f64 {
    1.0
}

impl BBox {
    /// Builds an unscored box (score 1.0), checking invariants.
    pub fn new(frame: usize, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::scored(frame, x1, y1, x2, y2, 1.0)
    }

    pub fn scored(frame: usize, x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Result<Self> {
        let b = BBox {
            frame,
            x1,
            y1,
            x2,
            y2,
            score,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinate in {self:?}")));
        }
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(Error::InvalidBox(format!(
                "corners out of order: ({}, {}, {}, {})",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidBox(format!("score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Same box moved to another frame.
    pub fn at_frame(mut self, frame: usize) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(frame: usize, cx: f64, cy: f64, w: f64, h: f64, score: f64) -> Self {
        BBox {
            frame,
            x1: cx - 0.5 * w,
            y1: cy - 0.5 * h,
            x2: cx + 0.5 * w,
            y2: cy + 0.5 * h,
            score,
        }
    }
}

/// Intersection over union of two boxes; frame indices are ignored.
///
/// Any pair involving a zero-area box has IoU 0.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let area_a = a.area();
    let area_b = b.area();
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Clips a box to `[0, width] x [0, height]`.
///
/// A box entirely outside the image collapses to a zero-area box on the
/// nearest border.
pub fn clamp_box(b: &BBox, width: f64, height: f64) -> BBox {
    BBox {
        frame: b.frame,
        x1: b.x1.clamp(0.0, width),
        y1: b.y1.clamp(0.0, height),
        x2: b.x2.clamp(0.0, width),
        y2: b.y2.clamp(0.0, height),
        score: b.score,
    }
}

/// A time-ordered sequence of boxes covering consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Tube {
    boxes: Vec<BBox>,
}

impl Tube {
    pub fn new(boxes: Vec<BBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::InvalidTube("tube has no boxes".into()));
        }
        for b in &boxes {
            b.validate()?;
        }
        for pair in boxes.windows(2) {
            if pair[1].frame != pair[0].frame + 1 {
                return Err(Error::InvalidTube(format!(
                    "frames not consecutive: {} followed by {}",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        Ok(Tube { boxes })
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn into_boxes(self) -> Vec<BBox> {
        self.boxes
    }

    pub fn start(&self) -> usize {
        self.boxes[0].frame
    }

    /// Last covered frame (inclusive).
    pub fn end(&self) -> usize {
        self.boxes[self.boxes.len() - 1].frame
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn covers(&self, frame: usize) -> bool {
        frame >= self.start() && frame <= self.end()
    }

    pub fn box_at(&self, frame: usize) -> Option<&BBox> {
        if self.covers(frame) {
            Some(&self.boxes[frame - self.start()])
        } else {
            None
        }
    }

    /// Mean box score.
    pub fn mean_score(&self) -> f64 {
        self.boxes.iter().map(|b| b.score).sum::<f64>() / self.boxes.len() as f64
    }
}

impl<'de> Deserialize<'de> for Tube {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let boxes = Vec::<BBox>::deserialize(deserializer)?;
        Tube::new(boxes).map_err(serde::de::Error::custom)
    }
}

/// Spatiotemporal IoU: per-frame box IoU averaged over the union of the two
/// frame spans. Frames covered by only one tube contribute 0.
pub fn tube_iou(a: &Tube, b: &Tube) -> f64 {
    let union_start = a.start().min(b.start());
    let union_end = a.end().max(b.end());
    let span = (union_end - union_start + 1) as f64;
    let lo = a.start().max(b.start());
    let hi = a.end().min(b.end());
    if lo > hi {
        return 0.0;
    }
    let overlap: f64 = (lo..=hi)
        .map(|f| box_iou(&a.boxes[f - a.start()], &b.boxes[f - b.start()]))
        .sum();
    overlap / span
}
