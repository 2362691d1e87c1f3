//! Single-target appearance tracking.
//!
//! [`SimilarityMatcher`] is the seat for an appearance similarity function.
//! The bundled [`NccMatcher`] resamples a fixed-resolution grayscale patch
//! inside a box and scores candidates by normalized cross-correlation over an
//! exhaustive multi-scale translation search. [`track`] propagates a seed box
//! through the video with a template fixed at the seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ingest::VideoFrames;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Side length R of the resampled template patch.
    pub patch_resolution: usize,
    /// Search radius as a fraction of the previous box diagonal.
    pub search_radius_fraction: f64,
    pub scale_set: Vec<f64>,
    /// Translation step in pixels.
    pub translation_stride: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            patch_resolution: 32,
            search_radius_fraction: 0.5,
            scale_set: vec![0.96, 1.0, 1.04],
            translation_stride: 1,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_resolution < 4 {
            return Err(Error::Config(format!(
                "patch_resolution must be >= 4, got {}",
                self.patch_resolution
            )));
        }
        if !(self.search_radius_fraction > 0.0 && self.search_radius_fraction.is_finite()) {
            return Err(Error::Config("search_radius_fraction must be positive".into()));
        }
        if !self.scale_set.contains(&1.0) {
            return Err(Error::Config("scale_set must contain 1.0".into()));
        }
        if self.scale_set.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("scales must be positive".into()));
        }
        if self.translation_stride == 0 {
            return Err(Error::Config("translation_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Grayscale copy of a video, the representation the matcher searches.
#[derive(Debug, Clone)]
pub struct GrayVideo {
    width: usize,
    height: usize,
    frames: Vec<Vec<f64>>,
}

impl GrayVideo {
    pub fn from_frames(frames: &VideoFrames) -> Self {
        GrayVideo {
            width: frames.width(),
            height: frames.height(),
            frames: (0..frames.num_frames()).map(|f| frames.gray(f)).collect(),
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn contains(&self, b: &BBox) -> bool {
        const EPS: f64 = 1e-9;
        b.x1 >= -EPS && b.y1 >= -EPS && b.x2 <= self.width as f64 + EPS && b.y2 <= self.height as f64 + EPS
    }
}

/// Zero-mean, unit-norm R x R appearance patch.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceTemplate {
    pub patch: Vec<f64>,
    pub resolution: usize,
    pub source_box: BBox,
    /// Set when the source region had no intensity variation; the patch is
    /// then all zeros.
    pub degenerate: bool,
}

pub trait SimilarityMatcher {
    fn extract_template(&self, video: &GrayVideo, b: &BBox) -> Result<AppearanceTemplate>;

    /// Best-matching box near `center` on `frame` and its similarity in [-1, 1].
    fn locate(
        &self,
        template: &AppearanceTemplate,
        video: &GrayVideo,
        frame: usize,
        center: &BBox,
    ) -> Result<(BBox, f64)>;
}

/// Per-axis sample positions of an R-point grid, split into clamped pixel
/// indices and interpolation weights.
struct Axis {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

impl Axis {
    /// Cell-centre samples over `[start, start + len]`, offset by `shift`
    /// whole pixels, on an axis with `size` pixels.
    fn new(start: f64, len: f64, r: usize, shift: i64, size: usize) -> Axis {
        let mut axis = Axis {
            lo: Vec::with_capacity(r),
            hi: Vec::with_capacity(r),
            frac: Vec::with_capacity(r),
        };
        let max = size as i64 - 1;
        for i in 0..r {
            // Pixel centres sit at integer + 0.5.
            let pos = start + (i as f64 + 0.5) * len / r as f64 - 0.5;
            let base = pos.floor();
            let idx = base as i64 + shift;
            axis.lo.push(idx.clamp(0, max) as usize);
            axis.hi.push((idx + 1).clamp(0, max) as usize);
            axis.frac.push(pos - base);
        }
        axis
    }
}

/// Bilinearly resampled R x R patch (row index = y).
fn sample_patch(plane: &[f64], width: usize, xs: &Axis, ys: &Axis, out: &mut [f64]) {
    let r = xs.lo.len();
    for j in 0..r {
        let (r0, r1, fy) = (ys.lo[j] * width, ys.hi[j] * width, ys.frac[j]);
        for i in 0..r {
            let (c0, c1, fx) = (xs.lo[i], xs.hi[i], xs.frac[i]);
            let top = plane[r0 + c0] + fx * (plane[r0 + c1] - plane[r0 + c0]);
            let bottom = plane[r1 + c0] + fx * (plane[r1 + c1] - plane[r1 + c0]);
            out[j * r + i] = top + fy * (bottom - top);
        }
    }
}

/// Multi-scale normalized cross-correlation matcher.
#[derive(Debug, Clone)]
pub struct NccMatcher {
    cfg: TrackerConfig,
}

struct Candidate {
    dx: i64,
    dy: i64,
    scale: f64,
    score: f64,
}

impl Candidate {
    /// Preference order: score, then smaller translation, then scale nearer
    /// 1.0, then (dy, dx) for full determinism.
    fn beats(&self, other: &Candidate) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        let (m1, m2) = (
            self.dx * self.dx + self.dy * self.dy,
            other.dx * other.dx + other.dy * other.dy,
        );
        if m1 != m2 {
            return m1 < m2;
        }
        let (s1, s2) = ((self.scale - 1.0).abs(), (other.scale - 1.0).abs());
        if s1 != s2 {
            return s1 < s2;
        }
        if self.scale != other.scale {
            return self.scale < other.scale;
        }
        (self.dy, self.dx) < (other.dy, other.dx)
    }
}

impl NccMatcher {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(NccMatcher { cfg })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }
}

impl SimilarityMatcher for NccMatcher {
    fn extract_template(&self, video: &GrayVideo, b: &BBox) -> Result<AppearanceTemplate> {
        if b.area() <= 0.0 {
            return Err(Error::ZeroAreaBox);
        }
        if b.frame >= video.num_frames() {
            return Err(Error::InvalidBox(format!("frame {} beyond video", b.frame)));
        }
        let r = self.cfg.patch_resolution;
        let xs = Axis::new(b.x1, b.width(), r, 0, video.width);
        let ys = Axis::new(b.y1, b.height(), r, 0, video.height);
        let mut patch = vec![0.0; r * r];
        sample_patch(&video.frames[b.frame], video.width, &xs, &ys, &mut patch);
        let mean = patch.iter().sum::<f64>() / patch.len() as f64;
        patch.iter_mut().for_each(|v| *v -= mean);
        let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
        let degenerate = norm < 1e-9;
        if degenerate {
            patch.iter_mut().for_each(|v| *v = 0.0);
        } else {
            patch.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(AppearanceTemplate {
            patch,
            resolution: r,
            source_box: *b,
            degenerate,
        })
    }

    fn locate(
        &self,
        template: &AppearanceTemplate,
        video: &GrayVideo,
        frame: usize,
        center: &BBox,
    ) -> Result<(BBox, f64)> {
        if frame >= video.num_frames() {
            return Err(Error::InvalidBox(format!("frame {frame} beyond video")));
        }
        let r = template.resolution;
        let n = (r * r) as f64;
        let plane = &video.frames[frame];
        let (cx, cy) = center.center();
        let radius = self.cfg.search_radius_fraction * center.diagonal();
        let stride = self.cfg.translation_stride as i64;
        let steps = (radius / stride as f64).floor() as i64;
        let mut patch = vec![0.0; r * r];
        let mut best: Option<Candidate> = None;

        for &scale in &self.cfg.scale_set {
            let (w, h) = (center.width() * scale, center.height() * scale);
            let (x0, y0) = (cx - 0.5 * w, cy - 0.5 * h);
            for sy in -steps..=steps {
                let dy = sy * stride;
                let ys = Axis::new(y0, h, r, dy, video.height);
                for sx in -steps..=steps {
                    let dx = sx * stride;
                    if ((dx * dx + dy * dy) as f64) > radius * radius {
                        continue;
                    }
                    let cand = BBox::from_center(frame, cx + dx as f64, cy + dy as f64, w, h, 0.0);
                    if !video.contains(&cand) {
                        continue;
                    }
                    let xs = Axis::new(x0, w, r, dx, video.width);
                    sample_patch(plane, video.width, &xs, &ys, &mut patch);
                    let (mut sum, mut sq, mut dot) = (0.0, 0.0, 0.0);
                    for (p, t) in patch.iter().zip(&template.patch) {
                        sum += p;
                        sq += p * p;
                        dot += p * t;
                    }
                    let var = sq - sum * sum / n;
                    let score = if var > 1e-18 {
                        (dot / var.sqrt()).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    };
                    let c = Candidate { dx, dy, scale, score };
                    if best.as_ref().is_none_or(|b| c.beats(b)) {
                        best = Some(c);
                    }
                }
            }
        }
        let best = best.ok_or(Error::SearchOutsideFrame { frame })?;
        let b = BBox::from_center(
            frame,
            cx + best.dx as f64,
            cy + best.dy as f64,
            center.width() * best.scale,
            center.height() * best.scale,
            best.score.max(0.0),
        );
        Ok((b, best.score))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    /// One box per frame in traversal order, starting with the seed.
    pub boxes: Vec<BBox>,
    /// The seed template had no texture; the seed box was replicated.
    pub degenerate: bool,
    /// Frames where no candidate fitted inside the image and the previous box
    /// was carried over.
    pub lost_frames: usize,
}

/// Tracks `seed` to the first (backward) or last (forward) frame.
///
/// The template is extracted once from the seed and never updated; every step
/// searches around the previous box.
pub fn track<M: SimilarityMatcher + ?Sized>(
    matcher: &M,
    video: &GrayVideo,
    seed: &BBox,
    direction: Direction,
) -> Result<TrackResult> {
    if seed.frame >= video.num_frames() {
        return Err(Error::InvalidBox(format!("seed frame {} beyond video", seed.frame)));
    }
    let frames: Vec<usize> = match direction {
        Direction::Forward => (seed.frame + 1..video.num_frames()).collect(),
        Direction::Backward => (0..seed.frame).rev().collect(),
    };
    let template = match matcher.extract_template(video, seed) {
        Ok(t) if !t.degenerate => Some(t),
        Ok(_) | Err(Error::ZeroAreaBox) => None,
        Err(e) => return Err(e),
    };
    let mut boxes = Vec::with_capacity(frames.len() + 1);
    boxes.push(*seed);
    let Some(template) = template else {
        boxes.extend(frames.iter().map(|&f| seed.at_frame(f)));
        return Ok(TrackResult {
            boxes,
            degenerate: true,
            lost_frames: 0,
        });
    };
    let mut lost_frames = 0;
    let mut prev = *seed;
    for f in frames {
        let next = match matcher.locate(&template, video, f, &prev) {
            Ok((b, _)) => b,
            Err(Error::SearchOutsideFrame { .. }) => {
                lost_frames += 1;
                prev.at_frame(f)
            }
            Err(e) => return Err(e),
        };
        boxes.push(next);
        prev = next;
    }
    Ok(TrackResult {
        boxes,
        degenerate: false,
        lost_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::box_iou;
    use crate::tensor::Tensor;

    /// Smooth texture inside `b`, defined in box-normalized coordinates, on a
    /// flat background.
    fn render(width: usize, height: usize, boxes: &[BBox]) -> VideoFrames {
        let mut data = Vec::with_capacity(boxes.len() * width * height);
        for b in boxes {
            for y in 0..height {
                for x in 0..width {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let v = if px > b.x1 && px < b.x2 && py > b.y1 && py < b.y2 {
                        let u = (px - b.x1) / b.width();
                        let w = (py - b.y1) / b.height();
                        0.5 + 0.2 * (7.0 * u).sin() * (5.0 * w + 1.0).cos() + 0.15 * (11.0 * u * w).sin()
                    } else {
                        0.3 + 0.02 * ((x * 7 + y * 13) % 5) as f64
                    };
                    data.push(v);
                }
            }
        }
        VideoFrames::new(Tensor::new(vec![boxes.len(), 1, height, width], data).unwrap()).unwrap()
    }

    fn checker(n: usize, invert: bool) -> VideoFrames {
        let data = (0..n * n)
            .map(|i| {
                let on = ((i / n) / 2 + (i % n) / 2).is_multiple_of(2);
                if on != invert {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        VideoFrames::new(Tensor::new(vec![1, 1, n, n], data).unwrap()).unwrap()
    }

    fn matcher() -> NccMatcher {
        NccMatcher::new(TrackerConfig::default()).unwrap()
    }

    #[test]
    fn config_validation() {
        let cfg = TrackerConfig {
            scale_set: vec![0.9, 1.1],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrackerConfig {
            patch_resolution: 3,
            ..TrackerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_region_gives_degenerate_template() {
        let v = VideoFrames::new(Tensor::filled(vec![1, 1, 20, 20], 0.4)).unwrap();
        let g = GrayVideo::from_frames(&v);
        let t = matcher()
            .extract_template(&g, &BBox::new(0, 2.0, 2.0, 12.0, 12.0).unwrap())
            .unwrap();
        assert!(t.degenerate);
        assert!(t.patch.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_area_template_is_error() {
        let v = checker(16, false);
        let g = GrayVideo::from_frames(&v);
        let b = BBox::new(0, 3.0, 3.0, 3.0, 9.0).unwrap();
        assert!(matches!(matcher().extract_template(&g, &b), Err(Error::ZeroAreaBox)));
    }

    #[test]
    fn template_is_unit_norm_and_self_similar() {
        let b = BBox::new(0, 10.0, 8.0, 40.0, 44.0).unwrap();
        let g = GrayVideo::from_frames(&render(64, 64, &[b]));
        let m = matcher();
        let t = m.extract_template(&g, &b).unwrap();
        let norm: f64 = t.patch.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        let (found, score) = m.locate(&t, &g, 0, &b).unwrap();
        assert!((score - 1.0).abs() < 1e-9);
        assert_eq!(found.x1, b.x1);
        assert_eq!(found.y2, b.y2);
    }

    #[test]
    fn inverted_checkerboard_scores_minus_one() {
        let m = matcher();
        let b = BBox::new(0, 0.0, 0.0, 16.0, 16.0).unwrap();
        let t = m
            .extract_template(&GrayVideo::from_frames(&checker(16, false)), &b)
            .unwrap();
        let u = m
            .extract_template(&GrayVideo::from_frames(&checker(16, true)), &b)
            .unwrap();
        let dot: f64 = t.patch.iter().zip(&u.patch).map(|(a, b)| a * b).sum();
        assert!((dot + 1.0).abs() < 1e-9, "{dot}");
    }

    #[test]
    fn recovers_two_pixel_translation() {
        let a = BBox::new(0, 20.0, 20.0, 44.0, 50.0).unwrap();
        let b = BBox::new(1, 22.0, 19.0, 46.0, 49.0).unwrap();
        let g = GrayVideo::from_frames(&render(80, 80, &[a, b]));
        let m = matcher();
        let t = m.extract_template(&g, &a).unwrap();
        let (found, score) = m.locate(&t, &g, 1, &a).unwrap();
        assert_eq!((found.x1, found.y1, found.x2, found.y2), (22.0, 19.0, 46.0, 49.0));
        assert!(score > 0.999);
    }

    #[test]
    fn selects_upscaled_candidate() {
        let a = BBox::new(0, 20.0, 20.0, 70.0, 70.0).unwrap();
        let grown = BBox::from_center(1, 45.0, 45.0, 52.0, 52.0, 1.0);
        let g = GrayVideo::from_frames(&render(96, 96, &[a, grown]));
        let m = matcher();
        let t = m.extract_template(&g, &a).unwrap();
        let (found, _) = m.locate(&t, &g, 1, &a).unwrap();
        assert!((found.width() / a.width() - 1.04).abs() < 1e-12, "{found:?}");
    }

    #[test]
    fn window_outside_frame_is_error() {
        let v = checker(16, false);
        let g = GrayVideo::from_frames(&v);
        let m = matcher();
        let t = m
            .extract_template(&g, &BBox::new(0, 0.0, 0.0, 8.0, 8.0).unwrap())
            .unwrap();
        let far = BBox::new(0, 100.0, 100.0, 110.0, 110.0).unwrap();
        assert!(matches!(
            m.locate(&t, &g, 0, &far),
            Err(Error::SearchOutsideFrame { frame: 0 })
        ));
    }

    #[test]
    fn single_frame_video_returns_seed() {
        let b = BBox::new(0, 5.0, 5.0, 20.0, 25.0).unwrap();
        let g = GrayVideo::from_frames(&render(32, 32, &[b]));
        for dir in [Direction::Forward, Direction::Backward] {
            let r = track(&matcher(), &g, &b, dir).unwrap();
            assert_eq!(r.boxes, vec![b]);
        }
    }

    #[test]
    fn degenerate_seed_is_replicated() {
        let v = VideoFrames::new(Tensor::filled(vec![4, 1, 20, 20], 0.4)).unwrap();
        let g = GrayVideo::from_frames(&v);
        let seed = BBox::new(1, 2.0, 2.0, 10.0, 10.0).unwrap();
        let r = track(&matcher(), &g, &seed, Direction::Forward).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.boxes.len(), 3);
        assert!(r.boxes.iter().all(|b| (b.x1, b.y2) == (2.0, 10.0)));
    }

    #[test]
    fn tracks_constant_velocity_and_back() {
        let gt: Vec<BBox> = (0..10)
            .map(|f| {
                BBox::new(
                    f,
                    8.0 + 3.0 * f as f64,
                    30.0 - f as f64,
                    32.0 + 3.0 * f as f64,
                    58.0 - f as f64,
                )
                .unwrap()
            })
            .collect();
        let g = GrayVideo::from_frames(&render(80, 72, &gt));
        let m = matcher();
        let fwd = track(&m, &g, &gt[0], Direction::Forward).unwrap();
        assert_eq!(fwd.boxes.len(), 10);
        for (b, t) in fwd.boxes.iter().zip(&gt) {
            assert_eq!(b.frame, t.frame);
            assert!(box_iou(b, t) >= 0.9, "{b:?} vs {t:?}");
        }
        let end = *fwd.boxes.last().unwrap();
        let back = track(&m, &g, &end, Direction::Backward).unwrap();
        let frames: Vec<usize> = back.boxes.iter().map(|b| b.frame).collect();
        assert_eq!(frames, (0..10).rev().collect::<Vec<_>>());
        assert!(box_iou(back.boxes.last().unwrap(), &gt[0]) >= 0.99);
    }

    #[test]
    fn deterministic() {
        let gt: Vec<BBox> = (0..5)
            .map(|f| BBox::new(f, 10.0 + 1.5 * f as f64, 10.0, 30.0 + 1.5 * f as f64, 34.0).unwrap())
            .collect();
        let g = GrayVideo::from_frames(&render(64, 48, &gt));
        let a = track(&matcher(), &g, &gt[2], Direction::Forward).unwrap();
        let b = track(&matcher(), &g, &gt[2], Direction::Forward).unwrap();
        assert_eq!(a, b);
    }
}
