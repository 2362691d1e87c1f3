//! Actor linking: greedy seed selection, forward/backward tracking and
//! overlap filtering that turns per-frame detections into actor proposals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, clamp_box, BBox, Tube};
use crate::ingest::{DetectionSet, ProposalDoc, ProposalTubeDoc};
use crate::tracking::{track, Direction, GrayVideo, SimilarityMatcher};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkingConfig {
    pub max_proposals: usize,
    /// Detections overlapping a tube box by at least this IoU are dropped.
    pub filter_threshold: f64,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig {
            max_proposals: 20,
            filter_threshold: 0.7,
        }
    }
}

impl LinkingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_proposals == 0 {
            return Err(Error::Config("max_proposals must be >= 1".into()));
        }
        if !(self.filter_threshold > 0.0 && self.filter_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "filter_threshold must lie in (0, 1], got {}",
                self.filter_threshold
            )));
        }
        Ok(())
    }
}

/// Ranked actor tubes of one video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalSet {
    pub tubes: Vec<Tube>,
    /// Originating detection per tube; empty for seedless methods.
    pub seeds: Vec<BBox>,
    pub degenerate: Vec<bool>,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    pub fn to_doc(&self, video_id: &str, num_frames: usize, method: &str) -> ProposalDoc {
        ProposalDoc {
            format_version: 1,
            video_id: video_id.to_string(),
            method: method.to_string(),
            num_frames,
            tubes: self
                .tubes
                .iter()
                .enumerate()
                .map(|(i, t)| ProposalTubeDoc {
                    seed: self.seeds.get(i).copied(),
                    degenerate: self.degenerate.get(i).copied().unwrap_or(false),
                    boxes: t.clone(),
                })
                .collect(),
        }
    }
}

/// Highest-scoring detection and its insertion index. Ties go to the lowest
/// `(frame, x1, y1, index)`.
pub fn select_top_detection(d: &DetectionSet) -> Result<(usize, BBox)> {
    d.boxes()
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            b.score
                .total_cmp(&a.score)
                .then(a.frame.cmp(&b.frame))
                .then(a.x1.total_cmp(&b.x1))
                .then(a.y1.total_cmp(&b.y1))
                .then(i.cmp(j))
        })
        .map(|(i, b)| (i, *b))
        .ok_or(Error::EmptyDetections)
}

/// Drops every detection whose IoU with the tube's box on the same frame is
/// at least `threshold`.
pub fn filter_detections(d: &DetectionSet, tube: &Tube, threshold: f64) -> DetectionSet {
    let mut out = d.clone();
    out.retain(|b| tube.box_at(b.frame).is_none_or(|t| box_iou(b, t) < threshold));
    out
}

/// Full-span tube through `seed`: backward track reversed, the seed itself,
/// then the forward track.
pub fn link_seed<M: SimilarityMatcher + ?Sized>(matcher: &M, video: &GrayVideo, seed: &BBox) -> Result<(Tube, bool)> {
    let fwd = track(matcher, video, seed, Direction::Forward)?;
    let bwd = track(matcher, video, seed, Direction::Backward)?;
    let mut boxes: Vec<BBox> = bwd.boxes[1..].iter().rev().copied().collect();
    boxes.extend(fwd.boxes);
    Ok((Tube::new(boxes)?, fwd.degenerate || bwd.degenerate))
}

/// Greedy actor linking over one video.
///
/// While detections remain and fewer than `max_proposals` tubes exist: take
/// the top-scoring detection, track it through the whole video, keep the tube
/// and filter the detections it explains.
pub fn generate_actor_proposals<M: SimilarityMatcher + ?Sized>(
    detections: &DetectionSet,
    video: &GrayVideo,
    matcher: &M,
    cfg: &LinkingConfig,
) -> Result<ProposalSet> {
    cfg.validate()?;
    if detections.num_frames != video.num_frames() {
        return Err(Error::Config(format!(
            "detections cover {} frames but the video has {}",
            detections.num_frames,
            video.num_frames()
        )));
    }
    let (w, h) = (video.width() as f64, video.height() as f64);
    let mut remaining = detections.clone();
    let mut out = ProposalSet::default();
    while !remaining.is_empty() && out.tubes.len() < cfg.max_proposals {
        let (index, top) = select_top_detection(&remaining)?;
        let seed = clamp_box(&top, w, h);
        let (tube, degenerate) = link_seed(matcher, video, &seed)?;
        remaining.remove_indices(&[index]);
        remaining = filter_detections(&remaining, &tube, cfg.filter_threshold);
        log::debug!(
            "{}: tube {} from seed {:?}, {} detections left",
            detections.video_id,
            out.tubes.len(),
            seed,
            remaining.len()
        );
        out.tubes.push(tube);
        out.seeds.push(seed);
        out.degenerate.push(degenerate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::VideoFrames;
    use crate::tensor::Tensor;
    use crate::tracking::{NccMatcher, TrackerConfig};
    use proptest::prelude::*;

    fn det(frame: usize, x1: f64, y1: f64, x2: f64, y2: f64, s: f64) -> BBox {
        BBox::scored(frame, x1, y1, x2, y2, s).unwrap()
    }

    /// Static textured scene, identical on every frame.
    fn static_video(frames: usize, w: usize, h: usize) -> GrayVideo {
        let plane: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                0.5 + 0.25 * (0.9 * x).sin() * (0.7 * y + 0.3).cos() + 0.1 * (0.31 * x * y).sin()
            })
            .collect();
        let data = plane.iter().copied().cycle().take(frames * w * h).collect();
        GrayVideo::from_frames(&VideoFrames::new(Tensor::new(vec![frames, 1, h, w], data).unwrap()).unwrap())
    }

    fn matcher() -> NccMatcher {
        NccMatcher::new(TrackerConfig::default()).unwrap()
    }

    #[test]
    fn select_examples() {
        let one = DetectionSet::new("v", 2, vec![det(1, 0.0, 0.0, 4.0, 4.0, 0.2)]).unwrap();
        assert_eq!(select_top_detection(&one).unwrap().0, 0);
        let two = DetectionSet::new(
            "v",
            4,
            vec![det(0, 0.0, 0.0, 4.0, 4.0, 0.3), det(0, 5.0, 0.0, 9.0, 4.0, 0.9)],
        )
        .unwrap();
        assert_eq!(select_top_detection(&two).unwrap().1.score, 0.9);
        let tied = DetectionSet::new(
            "v",
            4,
            vec![det(3, 0.0, 0.0, 4.0, 4.0, 0.5), det(1, 0.0, 0.0, 4.0, 4.0, 0.5)],
        )
        .unwrap();
        assert_eq!(
            select_top_detection(&tied).unwrap(),
            (1, det(1, 0.0, 0.0, 4.0, 4.0, 0.5))
        );
        let same = DetectionSet::new(
            "v",
            1,
            vec![det(0, 2.0, 0.0, 4.0, 4.0, 0.5), det(0, 2.0, 0.0, 4.0, 4.0, 0.5)],
        )
        .unwrap();
        assert_eq!(select_top_detection(&same).unwrap().0, 0);
        assert!(matches!(
            select_top_detection(&DetectionSet::empty("v", 1)),
            Err(Error::EmptyDetections)
        ));
    }

    #[test]
    fn filter_examples() {
        let tube = Tube::new(vec![
            det(0, 0.0, 0.0, 10.0, 10.0, 1.0),
            det(1, 0.0, 0.0, 10.0, 10.0, 1.0),
        ])
        .unwrap();
        // IoU with the tube box: 1.0, 0.0, and exactly 0.7 (7x10 inside 10x10).
        let d = DetectionSet::new(
            "v",
            2,
            vec![
                det(0, 0.0, 0.0, 10.0, 10.0, 0.5),
                det(1, 20.0, 20.0, 30.0, 30.0, 0.5),
                det(1, 0.0, 0.0, 7.0, 10.0, 0.5),
            ],
        )
        .unwrap();
        assert_eq!(box_iou(&d.boxes()[2], &tube.boxes()[1]), 0.7);
        let f = filter_detections(&d, &tube, 0.7);
        assert_eq!(f.boxes(), &[det(1, 20.0, 20.0, 30.0, 30.0, 0.5)]);
    }

    #[test]
    fn empty_detections_give_empty_set() {
        let v = static_video(3, 32, 32);
        let p =
            generate_actor_proposals(&DetectionSet::empty("v", 3), &v, &matcher(), &LinkingConfig::default()).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn single_seed_on_static_video() {
        let v = static_video(5, 48, 48);
        let seed = det(2, 10.0, 12.0, 30.0, 36.0, 0.8);
        let d = DetectionSet::new("v", 5, vec![seed]).unwrap();
        let p = generate_actor_proposals(&d, &v, &matcher(), &LinkingConfig::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.seeds, vec![seed]);
        let t = &p.tubes[0];
        assert_eq!((t.start(), t.end()), (0, 4));
        assert_eq!(t.boxes()[2], seed);
        for b in t.boxes() {
            assert_eq!((b.x1, b.y1, b.x2, b.y2), (10.0, 12.0, 30.0, 36.0));
        }
    }

    #[test]
    fn overlapping_pair_yields_one_tube() {
        let v = static_video(4, 48, 48);
        let a = det(1, 10.0, 10.0, 30.0, 30.0, 0.9);
        // 19x20 inside 20x20: IoU 0.95.
        let b = det(1, 10.0, 10.0, 29.0, 30.0, 0.6);
        assert!(box_iou(&a, &b) > 0.7);
        let d = DetectionSet::new("v", 4, vec![b, a]).unwrap();
        let p = generate_actor_proposals(&d, &v, &matcher(), &LinkingConfig::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.seeds[0], a);
    }

    #[test]
    fn length_mismatch_is_error() {
        let v = static_video(3, 16, 16);
        let d = DetectionSet::empty("v", 4);
        assert!(generate_actor_proposals(&d, &v, &matcher(), &LinkingConfig::default()).is_err());
    }

    /// Greedy filtering is not monotone in the threshold: here the lower
    /// threshold removes an early seed whose tube would otherwise have
    /// absorbed two later detections.
    #[test]
    fn lower_threshold_can_yield_more_tubes() {
        let v = static_video(1, 48, 48);
        let d = DetectionSet::new(
            "v",
            1,
            vec![
                det(0, 5.253, 2.122, 10.469, 4.365, 0.44),
                det(0, 4.604, 1.018, 13.446, 6.010, 0.62),
                det(0, 4.579, 2.122, 11.649, 3.590, 0.07),
                det(0, 3.717, 2.695, 7.821, 4.267, 0.09),
                det(0, 8.482, 0.291, 10.269, 1.827, 0.30),
                det(0, 5.688, 0.531, 12.838, 2.313, 0.46),
            ],
        )
        .unwrap();
        let count = |tau| {
            let cfg = LinkingConfig {
                max_proposals: 20,
                filter_threshold: tau,
            };
            generate_actor_proposals(&d, &v, &matcher(), &cfg).unwrap().len()
        };
        assert_eq!(count(0.27), 4);
        assert_eq!(count(0.245), 5);
    }

    fn arb_detections() -> impl Strategy<Value = DetectionSet> {
        prop::collection::vec(
            (
                0usize..4,
                0.0..30.0f64,
                0.0..30.0f64,
                0.0..14.0f64,
                0.0..14.0f64,
                0.0..=1.0f64,
            ),
            0..10,
        )
        .prop_map(|raw| {
            let boxes = raw
                .into_iter()
                .map(|(f, x, y, w, h, s)| det(f, x, y, x + w, y + h, s))
                .collect();
            DetectionSet::new("v", 4, boxes).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn terminates_within_bound(d in arb_detections(), n in 1usize..6, tau in 0.05f64..=1.0) {
            let v = static_video(4, 48, 48);
            let cfg = LinkingConfig { max_proposals: n, filter_threshold: tau };
            let p = generate_actor_proposals(&d, &v, &matcher(), &cfg).unwrap();
            prop_assert!(p.len() <= n.min(d.len()));
            for pair in p.seeds.windows(2) {
                prop_assert!(pair[0].score >= pair[1].score);
            }
            for t in &p.tubes {
                prop_assert_eq!((t.start(), t.end()), (0, 3));
            }
        }
    }
}
