//! Proposal recall and detection average precision over action tubes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{tube_iou, Tube};
use crate::ingest::json::write_json;
use crate::ingest::GroundTruth;

/// Proposals per video, in generation order.
pub type ProposalMap = BTreeMap<String, Vec<Tube>>;

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Config(format!("IoU threshold {theta} must lie in (0, 1]")));
    }
    Ok(())
}

/// For every ground-truth instance, its IoU with each proposal in order.
fn gt_overlaps(proposals: &ProposalMap, gt: &GroundTruth) -> Result<Vec<Vec<f64>>> {
    if gt.num_instances() == 0 {
        return Err(Error::NoGroundTruth);
    }
    let none = Vec::new();
    Ok(gt
        .videos
        .iter()
        .flat_map(|(video, instances)| {
            let props = proposals.get(video).unwrap_or(&none);
            instances
                .iter()
                .map(move |g| props.iter().map(|p| tube_iou(&g.tube, p)).collect::<Vec<f64>>())
        })
        .collect())
}

fn recall_from_overlaps(overlaps: &[Vec<f64>], theta: f64, budget: usize) -> f64 {
    let hit = overlaps
        .iter()
        .filter(|ious| ious.iter().take(budget).any(|&v| v >= theta))
        .count();
    hit as f64 / overlaps.len() as f64
}

/// Fraction of ground-truth tubes (all classes) overlapped with IoU >= theta
/// by at least one of the first `budget` proposals of their video.
pub fn recall_at(proposals: &ProposalMap, gt: &GroundTruth, theta: f64, budget: usize) -> Result<f64> {
    check_theta(theta)?;
    Ok(recall_from_overlaps(&gt_overlaps(proposals, gt)?, theta, budget))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub format_version: u32,
    pub num_ground_truth: usize,
    pub thresholds: Vec<f64>,
    pub budgets: Vec<usize>,
    /// `recall[t][b]` for `thresholds[t]` and `budgets[b]`.
    pub recall: Vec<Vec<f64>>,
}

impl RecallReport {
    /// Tab-separated `iou, budget, recall` rows with a header line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("iou\tbudget\trecall\n");
        for (t, row) in self.thresholds.iter().zip(&self.recall) {
            for (b, r) in self.budgets.iter().zip(row) {
                writeln!(out, "{t}\t{b}\t{r}").expect("writing to a string");
            }
        }
        out
    }

    pub fn write_table(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_table())
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn recall_curve(
    proposals: &ProposalMap,
    gt: &GroundTruth,
    thresholds: &[f64],
    budgets: &[usize],
) -> Result<RecallReport> {
    for &t in thresholds {
        check_theta(t)?;
    }
    let overlaps = gt_overlaps(proposals, gt)?;
    let recall = thresholds
        .iter()
        .map(|&t| budgets.iter().map(|&b| recall_from_overlaps(&overlaps, t, b)).collect())
        .collect();
    Ok(RecallReport {
        format_version: 1,
        num_ground_truth: overlaps.len(),
        thresholds: thresholds.to_vec(),
        budgets: budgets.to_vec(),
        recall,
    })
}

/// A scored tube claimed to contain one action class.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub video_id: String,
    pub tube: Tube,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: String,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub num_ground_truth: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

fn match_detections(dets: &[Detection], gt: &BTreeMap<&str, Vec<&Tube>>, theta: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then_with(|| dets[a].video_id.cmp(&dets[b].video_id))
            .then(a.cmp(&b))
    });
    let mut taken: BTreeMap<&str, Vec<bool>> = gt.iter().map(|(v, t)| (*v, vec![false; t.len()])).collect();
    order
        .iter()
        .map(|&i| {
            let d = &dets[i];
            let (Some(tubes), Some(used)) = (gt.get(d.video_id.as_str()), taken.get_mut(d.video_id.as_str())) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for (j, t) in tubes.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let iou = tube_iou(&d.tube, t);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, iou)) if iou >= theta => {
                    used[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// All-points interpolated area under the precision-recall curve of a
/// TP/FP sequence sorted by descending confidence.
pub fn interpolated_ap(hits: &[bool], num_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

/// AP of one class. Detections are ranked by score, ties by video id and
/// then input position; each is matched to the unmatched ground-truth tube of
/// its video with the highest IoU and counts as a hit iff that IoU >= theta.
pub fn average_precision(dets: &[Detection], gt: &BTreeMap<&str, Vec<&Tube>>, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let num_gt: usize = gt.values().map(Vec::len).sum();
    if num_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    Ok(interpolated_ap(&match_detections(dets, gt, theta), num_gt))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApReport {
    pub format_version: u32,
    pub iou_threshold: f64,
    pub classes: Vec<ClassAp>,
    /// Unweighted mean over classes with ground truth.
    pub mean_ap: f64,
}

impl ApReport {
    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Tab-separated `class, ap, num_gt, tp, fp` rows with a header line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("class\tap\tnum_gt\ttp\tfp\n");
        for c in &self.classes {
            let ap = c.ap.map_or_else(|| "nan".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{}\t{ap}\t{}\t{}\t{}",
                c.class, c.num_ground_truth, c.true_positives, c.false_positives
            )
            .expect("writing to a string");
        }
        out
    }
}

/// Per-class AP and their mean. `detections[c]` holds the detections for
/// class `c` of `gt.classes`. Classes without ground truth are reported with
/// no AP and left out of the mean.
pub fn mean_average_precision(detections: &[Vec<Detection>], gt: &GroundTruth, theta: f64) -> Result<ApReport> {
    check_theta(theta)?;
    if detections.len() != gt.classes.len() {
        return Err(Error::Config(format!(
            "detections given for {} classes, ground truth lists {}",
            detections.len(),
            gt.classes.len()
        )));
    }
    let mut classes = Vec::with_capacity(gt.classes.len());
    let mut sum = 0.0;
    let mut counted = 0;
    for (c, dets) in detections.iter().enumerate() {
        let tubes = gt.class_tubes(c);
        let num_gt: usize = tubes.values().map(Vec::len).sum();
        let hits = match_detections(dets, &tubes, theta);
        let tp = hits.iter().filter(|&&h| h).count();
        let ap = if num_gt == 0 {
            log::warn!("class {} has no ground truth; excluded from mAP", gt.classes[c]);
            None
        } else {
            let ap = interpolated_ap(&hits, num_gt);
            sum += ap;
            counted += 1;
            Some(ap)
        };
        classes.push(ClassAp {
            class: gt.classes[c].clone(),
            ap,
            num_ground_truth: num_gt,
            true_positives: tp,
            false_positives: hits.len() - tp,
        });
    }
    if counted == 0 {
        return Err(Error::NoGroundTruth);
    }
    Ok(ApReport {
        format_version: 1,
        iou_threshold: theta,
        classes,
        mean_ap: sum / counted as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::ingest::GtInstance;
    use proptest::prelude::*;

    fn tube(x: f64, frames: usize) -> Tube {
        Tube::new(
            (0..frames)
                .map(|f| BBox::new(f, x, 0.0, x + 10.0, 10.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn gt_of(videos: &[(&str, Vec<Tube>)]) -> GroundTruth {
        GroundTruth {
            classes: vec!["a".into()],
            videos: videos
                .iter()
                .map(|(v, ts)| {
                    (
                        v.to_string(),
                        ts.iter()
                            .map(|t| GtInstance {
                                class_id: 0,
                                tube: t.clone(),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    /// Precision at each recall level, maximized over all later points, summed
    /// over the recall steps; written independently of `interpolated_ap`.
    fn brute_ap(hits: &[bool], num_gt: usize) -> f64 {
        let n = hits.len();
        let pr: Vec<(f64, f64)> = (1..=n)
            .map(|k| {
                let tp = hits[..k].iter().filter(|&&h| h).count() as f64;
                (tp / num_gt as f64, tp / k as f64)
            })
            .collect();
        let mut ap = 0.0;
        let mut last_r = 0.0;
        for &(r, _) in &pr {
            if r > last_r {
                let p = pr.iter().filter(|(r2, _)| *r2 >= r).map(|x| x.1).fold(0.0, f64::max);
                ap += (r - last_r) * p;
                last_r = r;
            }
        }
        ap
    }

    #[test]
    fn recall_examples() {
        let a = tube(0.0, 4);
        let b = tube(50.0, 4);
        let gt = gt_of(&[("v", vec![a.clone(), b.clone()])]);
        let perfect: ProposalMap = [("v".to_string(), vec![a.clone(), b.clone()])].into();
        for theta in [0.1, 0.5, 1.0] {
            assert_eq!(recall_at(&perfect, &gt, theta, 20).unwrap(), 1.0);
        }
        assert_eq!(recall_at(&ProposalMap::new(), &gt, 0.5, 20).unwrap(), 0.0);
        // Shifted by 2.5 px: IoU 7.5 / 12.5 = 0.6.
        let partial: ProposalMap = [("v".to_string(), vec![tube(2.5, 4)])].into();
        let iou = tube_iou(&partial["v"][0], &a);
        assert!((iou - 0.6).abs() < 1e-12);
        assert_eq!(recall_at(&partial, &gt, 0.5, 20).unwrap(), 0.5);
        assert!(matches!(
            recall_at(&perfect, &GroundTruth::default(), 0.5, 1),
            Err(Error::NoGroundTruth)
        ));
    }

    #[test]
    fn curve_and_table() {
        let a = tube(0.0, 2);
        let gt = gt_of(&[("v", vec![a.clone()])]);
        let props: ProposalMap = [("v".to_string(), vec![tube(40.0, 2), a])].into();
        let r = recall_curve(&props, &gt, &[0.5], &[1, 2]).unwrap();
        assert_eq!(r.recall, vec![vec![0.0, 1.0]]);
        assert_eq!(r.to_table(), "iou\tbudget\trecall\n0.5\t1\t0\n0.5\t2\t1\n");
    }

    #[test]
    fn ap_tp_fp_tp_over_two() {
        let hits = [true, false, true];
        assert!((interpolated_ap(&hits, 2) - 5.0 / 6.0).abs() < 1e-15);
        assert!((brute_ap(&hits, 2) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ap_examples() {
        let a = tube(0.0, 3);
        let b = tube(50.0, 3);
        let gt = gt_of(&[("v", vec![a.clone()]), ("w", vec![b.clone()])]);
        let tubes = gt.class_tubes(0);
        let det = |v: &str, t: &Tube, s: f64| Detection {
            video_id: v.into(),
            tube: t.clone(),
            score: s,
        };
        let perfect = vec![det("v", &a, 0.9), det("w", &b, 0.8), det("v", &b, 0.1)];
        assert_eq!(average_precision(&perfect, &tubes, 0.5).unwrap(), 1.0);
        let wrong = vec![det("v", &b, 0.9), det("w", &a, 0.8)];
        assert_eq!(average_precision(&wrong, &tubes, 0.5).unwrap(), 0.0);
        // A duplicate of an already matched tube is a false positive.
        let dup = vec![det("v", &a, 0.9), det("v", &a, 0.8), det("w", &b, 0.7)];
        assert!((average_precision(&dup, &tubes, 0.5).unwrap() - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn map_skips_classes_without_ground_truth() {
        let a = tube(0.0, 3);
        let mut gt = gt_of(&[("v", vec![a.clone()])]);
        gt.classes.push("b".into());
        let dets = vec![
            vec![Detection {
                video_id: "v".into(),
                tube: a.clone(),
                score: 1.0,
            }],
            vec![Detection {
                video_id: "v".into(),
                tube: a,
                score: 1.0,
            }],
        ];
        let r = mean_average_precision(&dets, &gt, 0.5).unwrap();
        assert_eq!(r.mean_ap, 1.0);
        assert_eq!(r.classes[1].ap, None);
        assert_eq!(r.classes[1].false_positives, 1);
    }

    proptest! {
        #[test]
        fn interpolation_matches_brute_force(hits in prop::collection::vec(any::<bool>(), 1..30), extra in 0usize..5) {
            let num_gt = hits.iter().filter(|&&h| h).count() + extra;
            prop_assume!(num_gt > 0);
            let a = interpolated_ap(&hits, num_gt);
            prop_assert!((a - brute_ap(&hits, num_gt)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn perfect_ranking_iff_ap_one(hits in prop::collection::vec(any::<bool>(), 1..20)) {
            let num_gt = hits.iter().filter(|&&h| h).count();
            prop_assume!(num_gt > 0);
            let first_fp = hits.iter().position(|&h| !h).unwrap_or(hits.len());
            let all_before_fp = hits[first_fp..].iter().all(|&h| !h);
            prop_assert_eq!(interpolated_ap(&hits, num_gt) == 1.0, all_before_fp);
        }
    }
}
