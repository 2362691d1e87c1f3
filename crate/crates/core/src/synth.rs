//! Deterministic synthetic videos: a textured actor moving over a noisy
//! background, optional static bystander, noisy detections with dropout and
//! low-score clutter, plus suites written in the on-disk formats.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_box, BBox, Tube};
use crate::ingest::{
    save_detections, save_features, save_frames, save_ground_truth, save_manifest, DType, DetectionSet, EntryDoc,
    FeatureTensor, GroundTruth, GtInstance, ManifestDoc, Split, VideoFrames,
};
use crate::tensor::Tensor;

/// A point the actor center passes through at a given frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

/// Frames `[start, end)` whose actor detections are dropped with a
/// different probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutWindow {
    pub start: usize,
    pub end: usize,
    pub probability: f64,
}

/// A static second object with its own texture and detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bystander {
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub score: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    /// Piecewise-linear path of the actor center; held constant before the
    /// first and after the last waypoint.
    pub path: Vec<Waypoint>,
    pub actor_size: (f64, f64),
    /// Aspect-ratio multiplier per frame (width * sqrt(a), height / sqrt(a));
    /// missing entries mean 1.
    pub deformation: Vec<f64>,
    pub dropout: f64,
    pub dropout_window: Option<DropoutWindow>,
    /// Standard deviation of detection coordinate noise, in pixels.
    pub noise_sigma: f64,
    pub actor_score: (f64, f64),
    /// Mean number of clutter detections per frame.
    pub distractor_rate: f64,
    pub distractor_score: (f64, f64),
    pub bystander: Option<Bystander>,
    /// Added to the actor's texture, per RGB channel.
    pub color_offset: [f64; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_frames: 24,
            width: 96,
            height: 72,
            path: vec![
                Waypoint {
                    frame: 0,
                    x: 30.0,
                    y: 30.0,
                },
                Waypoint {
                    frame: 23,
                    x: 60.0,
                    y: 40.0,
                },
            ],
            actor_size: (16.0, 22.0),
            deformation: Vec::new(),
            dropout: 0.0,
            dropout_window: None,
            noise_sigma: 0.0,
            actor_score: (0.8, 1.0),
            distractor_rate: 0.0,
            distractor_score: (0.05, 0.35),
            bystander: None,
            color_offset: [0.0; 3],
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) is invalid")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 || self.width < 8 || self.height < 8 {
            return Err(Error::Config("video needs frames and at least 8x8 pixels".into()));
        }
        if self.path.is_empty() || self.path.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::Config("path needs waypoints with increasing frames".into()));
        }
        if !(self.actor_size.0 > 0.0 && self.actor_size.1 > 0.0) {
            return Err(Error::Config("actor size must be positive".into()));
        }
        if self.deformation.iter().any(|a| a.is_nan() || *a <= 0.0) {
            return Err(Error::Config("aspect multipliers must be positive".into()));
        }
        let probs = [Some(self.dropout), self.dropout_window.map(|w| w.probability)];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if [self.noise_sigma, self.distractor_rate]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err(Error::Config("noise sigma and distractor rate must be >= 0".into()));
        }
        check_range("actor_score", self.actor_score)?;
        check_range("distractor_score", self.distractor_score)?;
        if let Some(b) = &self.bystander {
            check_range("bystander score", b.score)?;
        }
        Ok(())
    }

    fn center_at(&self, frame: usize) -> (f64, f64) {
        let p = &self.path;
        if frame <= p[0].frame {
            return (p[0].x, p[0].y);
        }
        for w in p.windows(2) {
            if frame <= w[1].frame {
                let t = (frame - w[0].frame) as f64 / (w[1].frame - w[0].frame) as f64;
                return (w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y));
            }
        }
        let last = p[p.len() - 1];
        (last.x, last.y)
    }

    /// Exact actor box at `frame`, before clamping.
    pub fn actor_box(&self, frame: usize) -> BBox {
        let a = self.deformation.get(frame).copied().unwrap_or(1.0);
        let (cx, cy) = self.center_at(frame);
        let (w, h) = (self.actor_size.0 * a.sqrt(), self.actor_size.1 / a.sqrt());
        BBox::from_center(frame, cx, cy, w, h, 1.0)
    }

    fn dropout_at(&self, frame: usize) -> f64 {
        match self.dropout_window {
            Some(w) if (w.start..w.end).contains(&frame) => w.probability,
            _ => self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub frames: VideoFrames,
    pub ground_truth: Tube,
    pub detections: DetectionSet,
    pub bystander: Option<Tube>,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Checkerboard in box-normalized coordinates.
fn actor_texture(u: f64, v: f64) -> f64 {
    let cell = (u * 4.0).floor() as i64 + (v * 4.0).floor() as i64;
    if cell % 2 == 0 {
        0.85
    } else {
        0.2
    }
}

/// Horizontal bands in box-normalized coordinates.
fn bystander_texture(_u: f64, v: f64) -> f64 {
    if ((v * 3.0).floor() as i64) % 2 == 0 {
        0.75
    } else {
        0.3
    }
}

fn paint(data: &mut [f64], (w, h): (usize, usize), b: &BBox, offset: [f64; 3], texture: fn(f64, f64) -> f64) {
    let x0 = b.x1.floor().max(0.0) as usize;
    let y0 = b.y1.floor().max(0.0) as usize;
    let x1 = (b.x2.ceil().max(0.0) as usize).min(w);
    let y1 = (b.y2.ceil().max(0.0) as usize).min(h);
    for y in y0..y1 {
        let py = y as f64 + 0.5;
        if py < b.y1 || py >= b.y2 {
            continue;
        }
        for x in x0..x1 {
            let px = x as f64 + 0.5;
            if px < b.x1 || px >= b.x2 {
                continue;
            }
            let t = texture((px - b.x1) / b.width(), (py - b.y1) / b.height());
            for (c, off) in offset.iter().enumerate() {
                data[(c * h + y) * w + x] = (t + off).clamp(0.0, 1.0);
            }
        }
    }
}

fn noisy_box<R: Rng>(b: &BBox, sigma: f64, score: f64, rng: &mut R) -> BBox {
    if sigma == 0.0 {
        return b.with_score(score);
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and >= 0");
    let (mut x1, mut y1) = (b.x1 + n.sample(rng), b.y1 + n.sample(rng));
    let (mut x2, mut y2) = (b.x2 + n.sample(rng), b.y2 + n.sample(rng));
    if x2 < x1 {
        std::mem::swap(&mut x1, &mut x2);
    }
    if y2 < y1 {
        std::mem::swap(&mut y1, &mut y2);
    }
    BBox {
        frame: b.frame,
        x1,
        y1,
        x2,
        y2,
        score,
    }
}

/// Renders one video and its annotations; identical output for identical
/// configurations.
pub fn generate(cfg: &SynthConfig) -> Result<SynthVideo> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h, n) = (cfg.width, cfg.height, cfg.num_frames);
    let (wf, hf) = (w as f64, h as f64);

    let background: Vec<f64> = (0..w * h).map(|_| 0.42 + 0.08 * rng.gen::<f64>()).collect();
    let mut gt_boxes = Vec::with_capacity(n);
    let mut clamped = 0;
    for f in 0..n {
        let raw = cfg.actor_box(f);
        let b = clamp_box(&raw, wf, hf);
        if b != raw {
            clamped += 1;
        }
        gt_boxes.push(b);
    }
    if clamped > 0 {
        log::warn!("actor leaves the {w}x{h} frame on {clamped} frames; boxes clamped");
    }
    let bystander = cfg.bystander.map(|s| {
        let b = clamp_box(
            &BBox::from_center(0, s.center.0, s.center.1, s.size.0, s.size.1, 1.0),
            wf,
            hf,
        );
        Tube::new((0..n).map(|f| b.at_frame(f)).collect()).expect("consecutive frames")
    });

    let mut pixels = Vec::with_capacity(n * 3 * w * h);
    for (f, actor) in gt_boxes.iter().enumerate() {
        let mut frame: Vec<f64> = Vec::with_capacity(3 * w * h);
        for _ in 0..3 {
            frame.extend(background.iter().map(|v| v + 0.01 * (rng.gen::<f64>() - 0.5)));
        }
        if let Some(t) = &bystander {
            paint(&mut frame, (w, h), &t.boxes()[f], [0.0; 3], bystander_texture);
        }
        paint(&mut frame, (w, h), actor, cfg.color_offset, actor_texture);
        pixels.extend(frame);
    }
    let frames = VideoFrames::new(Tensor::new(vec![n, 3, h, w], pixels)?)?;

    let clutter = (cfg.distractor_rate > 0.0).then(|| Poisson::new(cfg.distractor_rate).expect("positive rate"));
    let mut dets = Vec::new();
    for (f, gt) in gt_boxes.iter().enumerate() {
        if rng.gen::<f64>() >= cfg.dropout_at(f) && gt.area() > 0.0 {
            let score = uniform(&mut rng, cfg.actor_score);
            dets.push(clamp_box(&noisy_box(gt, cfg.noise_sigma, score, &mut rng), wf, hf));
        }
        if let (Some(t), Some(s)) = (&bystander, cfg.bystander) {
            let score = uniform(&mut rng, s.score);
            dets.push(clamp_box(
                &noisy_box(&t.boxes()[f], cfg.noise_sigma, score, &mut rng),
                wf,
                hf,
            ));
        }
        let count = clutter.map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..count {
            let (bw, bh) = (rng.gen_range(6.0..12.0), rng.gen_range(6.0..12.0));
            let x1 = rng.gen_range(0.0..wf - bw);
            let y1 = rng.gen_range(0.0..hf - bh);
            let score = uniform(&mut rng, cfg.distractor_score);
            dets.push(BBox {
                frame: f,
                x1,
                y1,
                x2: x1 + bw,
                y2: y1 + bh,
                score,
            });
        }
    }
    let dets: Vec<BBox> = dets.into_iter().filter(|b| b.area() > 0.0).collect();
    Ok(SynthVideo {
        frames,
        ground_truth: Tube::new(gt_boxes)?,
        detections: DetectionSet::new("synth", n, dets)?,
        bystander,
    })
}

/// Aspect multipliers rising smoothly from 1 to `peak` and back over
/// `[start, end)`.
pub fn deformation_schedule(num_frames: usize, start: usize, end: usize, peak: f64) -> Vec<f64> {
    (0..num_frames)
        .map(|f| {
            if (start..end).contains(&f) && end > start {
                let t = (f - start) as f64 + 0.5;
                1.0 + (peak - 1.0) * (std::f64::consts::PI * t / (end - start) as f64).sin()
            } else {
                1.0
            }
        })
        .collect()
}

/// Configurations of the deformation benchmark: the actor crosses the upper
/// half of the frame while its aspect ratio swings mid-sequence, and its
/// detections are mostly dropped during that window (about 30% overall). A
/// static bystander sits in the lower half with medium-score detections.
pub fn deformation_configs(n_videos: usize, seed: u64) -> Vec<SynthConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, w, h) = (32usize, 96usize, 72usize);
    (0..n_videos)
        .map(|_| {
            let start = rng.gen_range(6..9);
            let end = start + 18;
            let (aw, ah) = (rng.gen_range(14.0..18.0), rng.gen_range(20.0..24.0));
            let x0 = rng.gen_range(14.0..24.0);
            let x1 = x0 + rng.gen_range(44.0..56.0);
            let y0 = rng.gen_range(16.0..22.0);
            let y1 = y0 + rng.gen_range(-3.0..3.0);
            let flip = rng.gen::<bool>();
            let (x0, x1) = if flip { (w as f64 - x0, w as f64 - x1) } else { (x0, x1) };
            SynthConfig {
                num_frames: n,
                width: w,
                height: h,
                path: vec![
                    Waypoint { frame: 0, x: x0, y: y0 },
                    Waypoint {
                        frame: n - 1,
                        x: x1,
                        y: y1,
                    },
                ],
                actor_size: (aw, ah),
                deformation: deformation_schedule(n, start, end, rng.gen_range(1.5..1.8)),
                dropout: 0.0,
                dropout_window: Some(DropoutWindow {
                    start,
                    end,
                    probability: 0.55,
                }),
                noise_sigma: 0.8,
                actor_score: (0.75, 1.0),
                distractor_rate: 0.6,
                distractor_score: (0.05, 0.35),
                bystander: Some(Bystander {
                    center: (rng.gen_range(30.0..66.0), rng.gen_range(54.0..58.0)),
                    size: (rng.gen_range(14.0..18.0), rng.gen_range(14.0..18.0)),
                    score: (0.45, 0.6),
                }),
                color_offset: [
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                ],
                seed: rng.gen(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkVideo {
    pub video_id: String,
    pub config: SynthConfig,
    pub video: SynthVideo,
}

pub fn deformation_benchmark(n_videos: usize, seed: u64) -> Result<Vec<BenchmarkVideo>> {
    if n_videos == 0 {
        return Err(Error::Config("benchmark needs at least one video".into()));
    }
    deformation_configs(n_videos, seed)
        .into_iter()
        .enumerate()
        .map(|(i, config)| {
            let video_id = format!("deform_{i:03}");
            let mut video = generate(&config)?;
            video.detections.video_id = video_id.clone();
            Ok(BenchmarkVideo {
                video_id,
                config,
                video,
            })
        })
        .collect()
}

/// One video of the classification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVideo {
    pub video_id: String,
    pub class_id: usize,
    pub split: Split,
    pub video: SynthVideo,
    pub features: FeatureTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub num_frames: usize,
    /// Pixels per feature cell.
    pub feature_cell: usize,
    /// Feature response inside the actor, in the channel of its class.
    pub signal: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            num_classes: 3,
            train_per_class: 10,
            test_per_class: 5,
            num_frames: 24,
            feature_cell: 8,
            signal: 4.0,
            feature_noise: 0.1,
            seed: 0,
        }
    }
}

/// Stand-in encoder output: one channel per class plus noise. The channel of
/// the video's class responds in proportion to how much of each cell the
/// actor covers.
pub fn class_features<R: Rng>(
    actor: &Tube,
    class_id: usize,
    (width, height): (usize, usize),
    cfg: &SuiteConfig,
    rng: &mut R,
) -> Result<FeatureTensor> {
    let cell = cfg.feature_cell.max(1);
    let (fw, fh) = ((width / cell).max(1), (height / cell).max(1));
    let c = cfg.num_classes;
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::Config(e.to_string()))?;
    let n = actor.len();
    let mut data: Vec<f64> = (0..n * c * fw * fh).map(|_| noise.sample(rng)).collect();
    let s = cell as f64;
    for (f, b) in actor.boxes().iter().enumerate() {
        for i in 0..fw {
            let ox = (b.x2.min((i + 1) as f64 * s) - b.x1.max(i as f64 * s)).max(0.0);
            for j in 0..fh {
                let oy = (b.y2.min((j + 1) as f64 * s) - b.y1.max(j as f64 * s)).max(0.0);
                data[((f * c + class_id) * fw + i) * fh + j] += cfg.signal * ox * oy / (s * s);
            }
        }
    }
    FeatureTensor::new(Tensor::new(vec![n, c, fw, fh], data)?, (s, s))
}

/// Videos of a separable multi-class suite: each class has its own actor
/// color and its own feature channel.
pub fn classification_suite(cfg: &SuiteConfig) -> Result<Vec<ClassVideo>> {
    if cfg.num_classes == 0 || cfg.train_per_class == 0 {
        return Err(Error::Config("suite needs classes and training videos".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, w, h) = (cfg.num_frames, 96usize, 72usize);
    let mut out = Vec::new();
    for class_id in 0..cfg.num_classes {
        let hue = class_id as f64 / cfg.num_classes as f64 * std::f64::consts::TAU;
        let offset = [0.1 * hue.cos(), 0.1 * (hue + 2.1).cos(), 0.1 * (hue + 4.2).cos()];
        for k in 0..cfg.train_per_class + cfg.test_per_class {
            let split = if k < cfg.train_per_class {
                Split::Train
            } else {
                Split::Test
            };
            let (x0, y0): (f64, f64) = (rng.gen_range(16.0..80.0), rng.gen_range(16.0..56.0));
            let (x1, y1) = (
                (x0 + rng.gen_range(-24.0..24.0)).clamp(16.0, 80.0),
                (y0 + rng.gen_range(-12.0..12.0)).clamp(16.0, 56.0),
            );
            let synth = SynthConfig {
                num_frames: n,
                width: w,
                height: h,
                path: vec![
                    Waypoint { frame: 0, x: x0, y: y0 },
                    Waypoint {
                        frame: n - 1,
                        x: x1,
                        y: y1,
                    },
                ],
                actor_size: (rng.gen_range(14.0..20.0), rng.gen_range(18.0..26.0)),
                noise_sigma: 0.5,
                distractor_rate: 0.3,
                color_offset: offset,
                seed: rng.gen(),
                ..SynthConfig::default()
            };
            let video_id = format!("{}_{k:02}", class_name(class_id));
            let mut video = generate(&synth)?;
            video.detections.video_id = video_id.clone();
            let features = class_features(&video.ground_truth, class_id, (w, h), cfg, &mut rng)?;
            out.push(ClassVideo {
                video_id,
                class_id,
                split,
                video,
                features,
            });
        }
    }
    Ok(out)
}

pub fn class_name(class_id: usize) -> String {
    format!("action{class_id}")
}

/// Files of one video written by [`write_video`], relative to the suite root.
struct VideoFiles {
    frames: String,
    detections: String,
    features: Option<String>,
    ground_truth: String,
}

fn write_video(
    root: &Path,
    video_id: &str,
    video: &SynthVideo,
    features: Option<&FeatureTensor>,
    classes: &[String],
    class_id: usize,
) -> Result<VideoFiles> {
    let dir = root.join(video_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rel = |name: &str| format!("{video_id}/{name}");
    save_frames(dir.join("frames.tensor"), &video.frames, DType::F32)?;
    save_detections(dir.join("detections.json"), &video.detections)?;
    if let Some(f) = features {
        save_features(dir.join("features.tensor"), f, DType::F32)?;
    }
    let gt = GroundTruth {
        classes: classes.to_vec(),
        videos: [(
            video_id.to_string(),
            vec![GtInstance {
                class_id,
                tube: video.ground_truth.clone(),
            }],
        )]
        .into(),
    };
    save_ground_truth(dir.join("ground_truth.json"), &gt)?;
    Ok(VideoFiles {
        frames: rel("frames.tensor"),
        detections: rel("detections.json"),
        features: features.map(|_| rel("features.tensor")),
        ground_truth: rel("ground_truth.json"),
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the deformation benchmark (single class `actor`, all test split)
/// and returns the manifest path.
pub fn write_deformation_suite(root: impl AsRef<Path>, videos: &[BenchmarkVideo]) -> Result<PathBuf> {
    let root = root.as_ref();
    let classes = vec!["actor".to_string()];
    let mut entries = Vec::with_capacity(videos.len());
    for v in videos {
        let files = write_video(root, &v.video_id, &v.video, None, &classes, 0)?;
        entries.push(EntryDoc {
            video_id: v.video_id.clone(),
            split: Split::Test,
            label: None,
            detections: Some(files.detections),
            frames: Some(files.frames),
            features: None,
            ground_truth: Some(files.ground_truth),
        });
    }
    let path = root.join(MANIFEST_FILE);
    save_manifest(
        &path,
        &ManifestDoc {
            format_version: 1,
            classes,
            entries,
        },
    )?;
    Ok(path)
}

/// Writes a classification suite and returns the manifest path.
pub fn write_classification_suite(
    root: impl AsRef<Path>,
    videos: &[ClassVideo],
    num_classes: usize,
) -> Result<PathBuf> {
    let root = root.as_ref();
    let classes: Vec<String> = (0..num_classes).map(class_name).collect();
    let mut entries = Vec::with_capacity(videos.len());
    for v in videos {
        let files = write_video(root, &v.video_id, &v.video, Some(&v.features), &classes, v.class_id)?;
        entries.push(EntryDoc {
            video_id: v.video_id.clone(),
            split: v.split,
            label: Some(classes[v.class_id].clone()),
            detections: Some(files.detections),
            frames: Some(files.frames),
            features: files.features,
            ground_truth: Some(files.ground_truth),
        });
    }
    let path = root.join(MANIFEST_FILE);
    save_manifest(
        &path,
        &ManifestDoc {
            format_version: 1,
            classes,
            entries,
        },
    )?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_detections, load_features, load_frames, load_ground_truth, load_manifest};

    #[test]
    fn clean_detections_equal_ground_truth() {
        let v = generate(&SynthConfig::default()).unwrap();
        let gt: Vec<BBox> = v.ground_truth.boxes().to_vec();
        assert_eq!(v.detections.len(), gt.len());
        for (d, g) in v.detections.boxes().iter().zip(&gt) {
            assert_eq!((d.frame, d.x1, d.y1, d.x2, d.y2), (g.frame, g.x1, g.y1, g.x2, g.y2));
        }
        assert_eq!(v.ground_truth.len(), 24);
    }

    #[test]
    fn full_dropout_gives_no_detections() {
        let v = generate(&SynthConfig {
            dropout: 1.0,
            ..Default::default()
        })
        .unwrap();
        assert!(v.detections.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            noise_sigma: 1.0,
            dropout: 0.3,
            distractor_rate: 1.0,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_ne!(
            generate(&cfg).unwrap(),
            generate(&SynthConfig { seed: 10, ..cfg }).unwrap()
        );
    }

    #[test]
    fn leaving_actor_is_clamped() {
        let cfg = SynthConfig {
            path: vec![
                Waypoint {
                    frame: 0,
                    x: 90.0,
                    y: 30.0,
                },
                Waypoint {
                    frame: 23,
                    x: 120.0,
                    y: 30.0,
                },
            ],
            ..Default::default()
        };
        let v = generate(&cfg).unwrap();
        assert!(v.ground_truth.boxes().iter().all(|b| b.x2 <= 96.0));
    }

    #[test]
    fn deformation_schedule_shape() {
        let s = deformation_schedule(10, 2, 8, 1.6);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[9], 1.0);
        assert!(s[2..8].iter().all(|&a| a > 1.0 && a <= 1.6));
        assert!(s[4] > s[2]);
    }

    #[test]
    fn benchmark_shape_and_dropout_concentration() {
        let suite = deformation_benchmark(6, 1).unwrap();
        assert_eq!(suite.len(), 6);
        let (mut inside, mut inside_frames, mut outside, mut outside_frames) = (0, 0, 0, 0);
        for v in &suite {
            assert_eq!(v.video.ground_truth.start(), 0);
            assert_eq!(v.video.ground_truth.end(), v.config.num_frames - 1);
            let w = v.config.dropout_window.unwrap();
            for f in 0..v.config.num_frames {
                let gt = v.video.ground_truth.box_at(f).unwrap();
                let hit = v
                    .video
                    .detections
                    .boxes()
                    .iter()
                    .any(|d| d.frame == f && crate::geometry::box_iou(d, gt) > 0.5);
                if (w.start..w.end).contains(&f) {
                    inside_frames += 1;
                    inside += hit as usize;
                } else {
                    outside_frames += 1;
                    outside += hit as usize;
                }
            }
        }
        let (rin, rout) = (
            inside as f64 / inside_frames as f64,
            outside as f64 / outside_frames as f64,
        );
        assert!(rin < rout - 0.3, "inside {rin} outside {rout}");
    }

    #[test]
    fn written_suites_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let suite = classification_suite(&SuiteConfig {
            train_per_class: 1,
            test_per_class: 1,
            num_frames: 6,
            ..Default::default()
        })
        .unwrap();
        let path = write_classification_suite(dir.path(), &suite, 3).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.entries.len(), 6);
        let e = &m.entries[0];
        assert_eq!(e.label, Some(0));
        assert_eq!(
            load_detections(e.detections.as_ref().unwrap()).unwrap(),
            suite[0].video.detections
        );
        let f = load_features(e.features.as_ref().unwrap()).unwrap();
        assert_eq!(f.tensor().dims(), suite[0].features.tensor().dims());
        assert_eq!(load_frames(e.frames.as_ref().unwrap()).unwrap().num_frames(), 6);
        let gt = load_ground_truth(e.ground_truth.as_ref().unwrap()).unwrap();
        assert_eq!(gt.videos[&suite[0].video_id][0].tube, suite[0].video.ground_truth);
        assert_eq!(m.load_ground_truth().unwrap().num_instances(), 6);
    }

    #[test]
    fn features_respond_in_class_channel() {
        let suite = classification_suite(&SuiteConfig {
            train_per_class: 1,
            test_per_class: 0,
            num_frames: 4,
            feature_noise: 0.0,
            ..Default::default()
        })
        .unwrap();
        for v in &suite {
            let t = v.features.tensor();
            let [_, c, fw, fh] = t.dims4().unwrap();
            let channel_sum = |ch: usize| -> f64 {
                (0..fw)
                    .flat_map(|i| (0..fh).map(move |j| (i, j)))
                    .map(|(i, j)| t.get(&[0, ch, i, j]))
                    .sum()
            };
            for ch in 0..c {
                assert_eq!(channel_sum(ch) > 0.0, ch == v.class_id);
            }
        }
    }
}
