//! Weakly-supervised training of the proposal classifier from video labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::head::{forward, param_backward, sgd_step, ClassifierParams};
use super::pool::{build_grid_at, SamplingGrid};
use super::AttentionConfig;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Tube};
use crate::ingest::{FeatureTensor, VideoFrames};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub anneal_factor: f64,
    pub anneal_every: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub flip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            initial_lr: 0.001,
            momentum: 0.95,
            anneal_factor: 0.25,
            anneal_every: 5,
            weight_decay: 1e-4,
            batch_size: 4,
            flip: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.initial_lr) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return Err(Error::Config("anneal_factor must lie in (0, 1)".into()));
        }
        if self.anneal_every == 0 || self.batch_size == 0 {
            return Err(Error::Config("anneal_every and batch_size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_lr * self.anneal_factor.powi((epoch / self.anneal_every) as i32)
    }
}

/// Per-channel standardization applied to pixel frames before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationSpec {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    /// Standardized values are clamped to `[-clamp, clamp]`.
    pub clamp: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        NormalizationSpec {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
            clamp: 0.5,
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        if self.clamp.is_nan() || self.clamp <= 0.0 {
            return Err(Error::Config("normalization clamp must be positive".into()));
        }
        Ok(())
    }

    pub fn apply(&self, channel: usize, v: f64) -> f64 {
        ((v - self.mean[channel]) / self.std[channel]).clamp(-self.clamp, self.clamp)
    }
}

/// Fixed encoder used when no precomputed features exist: normalizes pixels
/// and average-pools `cell x cell` blocks. Single-channel frames use the
/// first channel's statistics.
pub fn encode_frames(frames: &VideoFrames, cell: usize, norm: &NormalizationSpec) -> Result<FeatureTensor> {
    norm.validate()?;
    let (n, c, h, w) = (frames.num_frames(), frames.channels(), frames.height(), frames.width());
    if cell == 0 || w < cell || h < cell {
        return Err(Error::Config(format!(
            "encoder cell {cell} does not fit {w}x{h} frames"
        )));
    }
    let (fw, fh) = (w / cell, h / cell);
    let src = frames.tensor().data();
    let mut out = Vec::with_capacity(n * c * fw * fh);
    let area = (cell * cell) as f64;
    for f in 0..n {
        for ch in 0..c {
            let plane = &src[(f * c + ch) * h * w..(f * c + ch + 1) * h * w];
            for i in 0..fw {
                for j in 0..fh {
                    let mut s = 0.0;
                    for y in j * cell..(j + 1) * cell {
                        for x in i * cell..(i + 1) * cell {
                            s += norm.apply(ch, plane[y * w + x]);
                        }
                    }
                    out.push(s / area);
                }
            }
        }
    }
    FeatureTensor::new(Tensor::new(vec![n, c, fw, fh], out)?, (cell as f64, cell as f64))
}

/// One video as seen by the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoInput {
    pub video_id: String,
    pub features: FeatureTensor,
    /// Proposals in generation order; only the first `proposals_per_video`
    /// are used.
    pub proposals: Vec<Tube>,
    pub label: Option<usize>,
}

/// One uniformly random frame from each of `m` equal segments.
pub fn stratified_frames<R: Rng>(num_frames: usize, m: usize, rng: &mut R) -> Vec<usize> {
    (0..m)
        .map(|s| {
            let lo = s as f64 * num_frames as f64 / m as f64;
            let hi = (s + 1) as f64 * num_frames as f64 / m as f64;
            ((lo + rng.gen::<f64>() * (hi - lo)) as usize).min(num_frames - 1)
        })
        .collect()
}

/// The center frame of each of `m` equal segments.
pub fn segment_center_frames(num_frames: usize, m: usize) -> Vec<usize> {
    (0..m)
        .map(|s| (((s as f64 + 0.5) * num_frames as f64 / m as f64) as usize).min(num_frames - 1))
        .collect()
}

/// Mirrors a `[N, C, W', H']` feature map along the x axis.
pub fn flip_features(u: &Tensor) -> Result<Tensor> {
    let [n, c, w, h] = u.dims4()?;
    let src = u.data();
    let mut out = Vec::with_capacity(src.len());
    for plane in 0..n * c {
        for i in 0..w {
            let col = plane * w * h + (w - 1 - i) * h;
            out.extend_from_slice(&src[col..col + h]);
        }
    }
    Tensor::new(vec![n, c, w, h], out)
}

/// Mirrors box x-coordinates within a frame of the given width.
pub fn flip_tube(t: &Tube, width: f64) -> Tube {
    let boxes = t
        .boxes()
        .iter()
        .map(|b| BBox {
            x1: width - b.x2,
            x2: width - b.x1,
            ..*b
        })
        .collect();
    Tube::new(boxes).expect("mirroring keeps a valid tube")
}

fn video_inputs(
    video: &VideoInput,
    frames: &[usize],
    flip: bool,
    cfg: &AttentionConfig,
) -> Result<(Tensor, Vec<SamplingGrid>, usize)> {
    let used = video.proposals.len().min(cfg.proposals_per_video);
    if used == 0 {
        return Err(Error::Validation {
            path: video.video_id.clone().into(),
            message: "video has no proposals".into(),
        });
    }
    let mut u = video.features.tensor().select_leading(frames)?;
    let width = video.features.image_width();
    if flip {
        u = flip_features(&u)?;
    }
    let projection = video.features.projection();
    let grids = video.proposals[..used]
        .iter()
        .map(|t| {
            let t = if flip { flip_tube(t, width) } else { t.clone() };
            build_grid_at(&t, frames, projection, cfg.grid_x, cfg.grid_y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((u, grids, cfg.top_k.min(used)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[P, K]` per-proposal class scores.
    pub logits: Tensor,
    pub video_logits: Vec<f64>,
}

impl Prediction {
    /// Highest video-level class; ties go to the lowest class id.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (c, &v) in self.video_logits.iter().enumerate() {
            if v > self.video_logits[best] {
                best = c;
            }
        }
        best
    }
}

/// Deterministic inference: segment-center frames, no flip.
pub fn predict(video: &VideoInput, params: &ClassifierParams, cfg: &AttentionConfig) -> Result<Prediction> {
    let frames = segment_center_frames(video.features.num_frames(), cfg.frames_per_video);
    let (u, grids, k) = video_inputs(video, &frames, false, cfg)?;
    let pass = forward(&u, &grids, params, 0, k)?;
    Ok(Prediction {
        logits: pass.logits,
        video_logits: pass.video_logits,
    })
}

/// Fraction of labeled videos whose predicted class matches the label.
pub fn accuracy(videos: &[VideoInput], params: &ClassifierParams, cfg: &AttentionConfig) -> Result<f64> {
    let mut hits = 0;
    let mut total = 0;
    for v in videos {
        if let Some(label) = v.label {
            total += 1;
            if predict(v, params, cfg)?.predicted_class() == label {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Config("no labeled videos".into()));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ClassifierParams,
    /// Mean cross-entropy per epoch.
    pub loss_history: Vec<f64>,
}

/// Xavier-initialized classifier for the given feature channel count.
pub fn init_params(cfg: &AttentionConfig, channels: usize, rng: &mut ChaCha8Rng) -> ClassifierParams {
    ClassifierParams::xavier(channels * cfg.grid_x * cfg.grid_y, cfg.num_classes, rng)
}

/// Trains from a seeded Xavier initialization.
pub fn train(videos: &[VideoInput], cfg: &AttentionConfig, tc: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let channels = videos
        .first()
        .map(|v| v.features.channels())
        .ok_or_else(|| Error::Config("no training videos".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params(cfg, channels, &mut rng);
    fit(params, videos, cfg, tc, &mut rng)
}

struct Step {
    video: usize,
    frames: Vec<usize>,
    flip: bool,
}

/// Runs the SGD schedule starting from `params`.
pub fn fit(
    mut params: ClassifierParams,
    videos: &[VideoInput],
    cfg: &AttentionConfig,
    tc: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    let mut labels = Vec::with_capacity(videos.len());
    for v in videos {
        let label = v.label.ok_or_else(|| Error::Validation {
            path: v.video_id.clone().into(),
            message: "training video has no label".into(),
        })?;
        if label >= cfg.num_classes {
            return Err(Error::Validation {
                path: v.video_id.clone().into(),
                message: format!("label {label} out of range for {} classes", cfg.num_classes),
            });
        }
        if v.features.channels() * cfg.grid_x * cfg.grid_y != params.inputs() {
            return Err(Error::Shape(format!(
                "video {} has {} feature channels, classifier expects {}",
                v.video_id,
                v.features.channels(),
                params.inputs() / (cfg.grid_x * cfg.grid_y)
            )));
        }
        labels.push(label);
    }
    let mut velocity = ClassifierParams::zeros(params.inputs(), params.classes());
    let mut history = Vec::with_capacity(tc.epochs);
    let mut order: Vec<usize> = (0..videos.len()).collect();
    for epoch in 0..tc.epochs {
        let lr = tc.learning_rate(epoch);
        order.shuffle(rng);
        let steps: Vec<Step> = order
            .iter()
            .map(|&video| Step {
                video,
                frames: stratified_frames(videos[video].features.num_frames(), cfg.frames_per_video, rng),
                flip: tc.flip && rng.gen::<bool>(),
            })
            .collect();
        let mut epoch_loss = 0.0;
        for batch in steps.chunks(tc.batch_size) {
            let results: Vec<Result<(ClassifierParams, f64)>> = batch
                .par_iter()
                .map(|s| {
                    let (u, grids, k) = video_inputs(&videos[s.video], &s.frames, s.flip, cfg)?;
                    let label = labels[s.video];
                    let pass = forward(&u, &grids, &params, label, k)?;
                    Ok((param_backward(&params, &pass, label, k, tc.weight_decay), pass.loss))
                })
                .collect();
            let mut grad = ClassifierParams::zeros(params.inputs(), params.classes());
            for r in results {
                let (g, loss) = r?;
                epoch_loss += loss;
                accumulate(&mut grad, &g);
            }
            scale(&mut grad, 1.0 / batch.len() as f64);
            sgd_step(&mut params, &grad, &mut velocity, lr, tc.momentum);
        }
        let mean = epoch_loss / videos.len().max(1) as f64;
        log::debug!("epoch {epoch}: lr {lr:e}, mean loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

fn accumulate(into: &mut ClassifierParams, g: &ClassifierParams) {
    for (a, b) in into.weights.data_mut().iter_mut().zip(g.weights.data()) {
        *a += b;
    }
    for (a, b) in into.bias.data_mut().iter_mut().zip(g.bias.data()) {
        *a += b;
    }
}

fn scale(p: &mut ClassifierParams, s: f64) {
    p.weights
        .data_mut()
        .iter_mut()
        .chain(p.bias.data_mut())
        .for_each(|v| *v *= s);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let tc = TrainConfig::default();
        assert_eq!(tc.learning_rate(0), 0.001);
        assert_eq!(tc.learning_rate(4), 0.001);
        assert_eq!(tc.learning_rate(5), 0.001 * 0.25);
        assert_eq!(tc.learning_rate(12), 0.001 * 0.25 * 0.25);
    }

    #[test]
    fn stratified_sampling_hits_every_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let f = stratified_frames(64, 16, &mut rng);
            for (s, &x) in f.iter().enumerate() {
                assert!((4 * s..4 * s + 4).contains(&x));
            }
        }
        let short = stratified_frames(5, 16, &mut rng);
        assert_eq!(short.len(), 16);
        assert!(short.windows(2).all(|w| w[0] <= w[1]) && short.iter().all(|&x| x < 5));
    }

    #[test]
    fn segment_centers() {
        assert_eq!(segment_center_frames(32, 4), vec![4, 12, 20, 28]);
        assert_eq!(segment_center_frames(2, 4), vec![0, 0, 1, 1]);
    }

    #[test]
    fn flip_is_an_involution_and_mirrors_boxes() {
        let u = Tensor::new(vec![1, 2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        let f = flip_features(&u).unwrap();
        assert_eq!(f.get(&[0, 1, 0, 1]), u.get(&[0, 1, 2, 1]));
        assert_eq!(flip_features(&f).unwrap(), u);
        let t = Tube::new(vec![BBox::new(0, 1.0, 2.0, 4.0, 5.0).unwrap()]).unwrap();
        let m = flip_tube(&t, 10.0);
        assert_eq!((m.boxes()[0].x1, m.boxes()[0].x2, m.boxes()[0].y1), (6.0, 9.0, 2.0));
    }

    #[test]
    fn encoder_normalizes_and_pools() {
        let mut data = vec![0.485; 16];
        data.extend(vec![1.0; 16]);
        data.extend(vec![0.0; 16]);
        let frames = VideoFrames::new(Tensor::new(vec![1, 3, 4, 4], data).unwrap()).unwrap();
        let f = encode_frames(&frames, 2, &NormalizationSpec::default()).unwrap();
        assert_eq!(f.tensor().dims(), &[1, 3, 2, 2]);
        assert_eq!(f.spatial_scale(), (2.0, 2.0));
        assert_eq!(&f.tensor().data()[..4], &[0.0; 4]);
        assert_eq!(&f.tensor().data()[4..8], &[0.5; 4]);
        assert_eq!(&f.tensor().data()[8..], &[-0.5; 4]);
    }
}
