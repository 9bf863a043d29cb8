//! Detection metrics: frame-AP, video-AP, truncated ROC/AUC and the
//! classification confusion matrix.
//!
//! Matching follows the VOC protocol: detections are visited by descending
//! score and each one claims the still-unmatched ground truth it overlaps
//! most. It is correct only when that overlap is strictly greater than
//! `sigma`. Equal scores form one threshold step in every curve.

use std::collections::HashMap;

use crate::corpus::GroundTruthTrack;
use crate::error::{Error, Result};
use crate::geometry::{iou, mean_frame_iou, Bbox};
use crate::linker::ActionTube;

pub const DEFAULT_SIGMA: f64 = 0.5;
pub const DEFAULT_FPR_MAX: f64 = 0.6;
pub const DEFAULT_TOPK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub video_id: String,
    pub frame: u32,
    pub bbox: Bbox,
    pub action: String,
    pub score: f64,
}

/// Every tube box becomes a per-frame detection carrying the tube score.
pub fn tube_detections(tubes: &[ActionTube]) -> Vec<Detection> {
    tubes
        .iter()
        .flat_map(|t| {
            t.regions.iter().map(move |(frame, bbox)| Detection {
                video_id: t.video_id.clone(),
                frame: *frame,
                bbox: *bbox,
                action: t.action.clone(),
                score: t.score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    /// Distinct score thresholds, descending.
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub action: String,
    pub num_groundtruth: usize,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    pub classes: Vec<ClassAp>,
    /// Mean over classes with ground truth; `None` if there are none.
    pub map: Option<f64>,
}

impl ApReport {
    pub fn ap(&self, action: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.action == action).and_then(|c| c.ap)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::invalid(format!("sigma {sigma} outside (0, 1]")));
    }
    Ok(())
}

/// Indices of `scores` by descending score; equal scores keep input order.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching in `order`. `overlaps(i)` lists `(gt index, overlap)`
/// candidates for item `i`. Returns the matched ground truth per item.
fn greedy_match(
    order: &[usize],
    num_items: usize,
    num_gt: usize,
    sigma: f64,
    mut overlaps: impl FnMut(usize) -> Vec<(usize, f64)>,
) -> Vec<Option<usize>> {
    let mut taken = vec![false; num_gt];
    let mut matched = vec![None; num_items];
    for &i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, ov) in overlaps(i) {
            if taken[g] {
                continue;
            }
            if best.is_none_or(|(bg, bov)| ov > bov || (ov == bov && g < bg)) {
                best = Some((g, ov));
            }
        }
        if let Some((g, ov)) = best {
            if ov > sigma {
                taken[g] = true;
                matched[i] = Some(g);
            }
        }
    }
    matched
}

/// Precision/recall at every distinct threshold, plus all-points AP.
fn pr_curve(scores: &[f64], order: &[usize], is_tp: &[bool], num_gt: usize) -> PrCurve {
    let mut curve = PrCurve::default();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if is_tp[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        curve.thresholds.push(s);
        curve.precision.push(tp as f64 / (tp + fp) as f64);
        curve.recall.push(tp as f64 / num_gt as f64);
    }
    curve.ap = average_precision(&curve.precision, &curve.recall);
    curve
}

/// Area under the precision envelope, where precision at recall `r` is the
/// best precision at any recall `>= r`.
pub fn average_precision(precision: &[f64], recall: &[f64]) -> f64 {
    let mut envelope = precision.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &r) in envelope.iter().zip(recall) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

fn class_ap(action: &str, scores: &[f64], matched: &[Option<usize>], order: &[usize], num_gt: usize) -> ClassAp {
    if num_gt == 0 {
        return ClassAp {
            action: action.to_string(),
            num_groundtruth: 0,
            ap: None,
            curve: PrCurve::default(),
        };
    }
    let is_tp: Vec<bool> = matched.iter().map(Option::is_some).collect();
    let curve = pr_curve(scores, order, &is_tp, num_gt);
    ClassAp {
        action: action.to_string(),
        num_groundtruth: num_gt,
        ap: Some(curve.ap),
        curve,
    }
}

fn finish_report(classes: Vec<ClassAp>) -> ApReport {
    let defined: Vec<f64> = classes.iter().filter_map(|c| c.ap).collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    ApReport { classes, map }
}

fn check_actions<'a>(actions: &[String], labels: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    for l in labels {
        if !actions.iter().any(|a| a == l) {
            return Err(Error::invalid(format!("{what} action '{l}' not in vocabulary")));
        }
    }
    Ok(())
}

/// Per-class average precision of per-frame detections.
pub fn frame_ap(
    detections: &[Detection],
    tracks: &[GroundTruthTrack],
    sigma: f64,
    actions: &[String],
) -> Result<ApReport> {
    check_sigma(sigma)?;
    check_actions(actions, detections.iter().map(|d| d.action.as_str()), "detection")?;
    check_actions(actions, tracks.iter().map(|t| t.action.as_str()), "ground-truth")?;

    let mut classes = Vec::with_capacity(actions.len());
    for action in actions {
        let gt: Vec<(&str, u32, &Bbox)> = tracks
            .iter()
            .filter(|t| &t.action == action)
            .flat_map(|t| t.boxes.iter().map(move |(f, b)| (t.video_id.as_str(), *f, b)))
            .collect();
        let mut by_frame: HashMap<(&str, u32), Vec<usize>> = HashMap::new();
        for (i, (v, f, _)) in gt.iter().enumerate() {
            by_frame.entry((v, *f)).or_default().push(i);
        }
        let dets: Vec<&Detection> = detections.iter().filter(|d| &d.action == action).collect();
        let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        let order = ranked(&scores);
        let matched = greedy_match(&order, dets.len(), gt.len(), sigma, |i| {
            let d = dets[i];
            by_frame
                .get(&(d.video_id.as_str(), d.frame))
                .map(|ids| ids.iter().map(|&g| (g, iou(gt[g].2, &d.bbox))).collect())
                .unwrap_or_default()
        });
        classes.push(class_ap(action, &scores, &matched, &order, gt.len()));
    }
    Ok(finish_report(classes))
}

/// Match tubes to same-video, same-action tracks by mean per-frame IoU.
fn match_tubes(
    tubes: &[&ActionTube],
    tracks: &[&GroundTruthTrack],
    order: &[usize],
    sigma: f64,
) -> Result<Vec<Option<usize>>> {
    let mut overlaps: Vec<Vec<(usize, f64)>> = Vec::with_capacity(tubes.len());
    for t in tubes {
        let mut row = Vec::new();
        for (g, tr) in tracks.iter().enumerate() {
            if tr.video_id == t.video_id && tr.action == t.action {
                row.push((g, mean_frame_iou(&t.regions, &tr.boxes)?));
            }
        }
        overlaps.push(row);
    }
    Ok(greedy_match(order, tubes.len(), tracks.len(), sigma, |i| {
        std::mem::take(&mut overlaps[i])
    }))
}

/// Per-class average precision of tubes.
pub fn video_ap(
    tubes: &[ActionTube],
    tracks: &[GroundTruthTrack],
    sigma: f64,
    actions: &[String],
) -> Result<ApReport> {
    check_sigma(sigma)?;
    check_actions(actions, tubes.iter().map(|t| t.action.as_str()), "tube")?;
    check_actions(actions, tracks.iter().map(|t| t.action.as_str()), "ground-truth")?;

    let mut classes = Vec::with_capacity(actions.len());
    for action in actions {
        let gt: Vec<&GroundTruthTrack> = tracks.iter().filter(|t| &t.action == action).collect();
        let class_tubes: Vec<&ActionTube> = tubes.iter().filter(|t| &t.action == action).collect();
        let scores: Vec<f64> = class_tubes.iter().map(|t| t.score).collect();
        let order = ranked(&scores);
        let matched = match_tubes(&class_tubes, &gt, &order, sigma)?;
        classes.push(class_ap(action, &scores, &matched, &order, gt.len()));
    }
    Ok(finish_report(classes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub sigma: f64,
    pub fpr_max: f64,
    /// Starts at `(0, 0)`; one point per distinct retained score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub num_groundtruth: usize,
    pub num_false: usize,
}

/// Keep the `topk` best tubes of every `(action, video)` pair.
pub fn top_k_tubes(tubes: &[ActionTube], topk: usize) -> Vec<&ActionTube> {
    let scores: Vec<f64> = tubes.iter().map(|t| t.score).collect();
    let mut kept_per_key: HashMap<(&str, &str), usize> = HashMap::new();
    let mut keep = vec![false; tubes.len()];
    for i in ranked(&scores) {
        let t = &tubes[i];
        let n = kept_per_key.entry((&t.action, &t.video_id)).or_default();
        if *n < topk {
            *n += 1;
            keep[i] = true;
        }
    }
    tubes.iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t).collect()
}

/// Detection ROC truncated at `fpr_max`, integrated as a step function.
///
/// The negatives are the retained tubes that match no ground truth, so the
/// false positive rate reaches 1 once every false tube is admitted and the
/// AUC can never exceed `fpr_max`. With no false tubes at all the curve is
/// flat at its final TPR.
pub fn roc_auc(
    tubes: &[ActionTube],
    tracks: &[GroundTruthTrack],
    sigma: f64,
    fpr_max: f64,
    topk: usize,
) -> Result<RocCurve> {
    check_sigma(sigma)?;
    if topk == 0 {
        return Err(Error::invalid("topk must be at least 1"));
    }
    if !(fpr_max > 0.0 && fpr_max <= 1.0) {
        return Err(Error::invalid(format!("fpr_max {fpr_max} outside (0, 1]")));
    }
    if tracks.is_empty() {
        return Err(Error::invalid("ROC is undefined without ground-truth tracks"));
    }

    let retained = top_k_tubes(tubes, topk);
    let scores: Vec<f64> = retained.iter().map(|t| t.score).collect();
    let order = ranked(&scores);
    let track_refs: Vec<&GroundTruthTrack> = tracks.iter().collect();
    let matched = match_tubes(&retained, &track_refs, &order, sigma)?;

    let num_gt = tracks.len();
    let num_false = matched.iter().filter(|m| m.is_none()).count();
    let fpr_of = |fp: usize| if num_false == 0 { 0.0 } else { fp as f64 / num_false as f64 };

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if matched[order[k]].is_some() {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let prev = points.last().unwrap();
        let (fpr, tpr) = (fpr_of(fp), tp as f64 / num_gt as f64);
        if prev.fpr < fpr_max {
            auc += (fpr.min(fpr_max) - prev.fpr) * prev.tpr;
        }
        points.push(RocPoint { threshold: s, fpr, tpr });
    }
    let last = points.last().unwrap();
    if last.fpr < fpr_max {
        auc += (fpr_max - last.fpr) * last.tpr;
    }

    Ok(RocCurve {
        sigma,
        fpr_max,
        points,
        auc,
        num_groundtruth: num_gt,
        num_false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub actions: Vec<String>,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }
}

pub fn confusion_matrix(predicted: &[String], truth: &[String], actions: &[String]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    let index = |label: &str| {
        actions
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::invalid(format!("label '{label}' not in vocabulary")))
    };
    let mut counts = vec![vec![0u64; actions.len()]; actions.len()];
    for (p, t) in predicted.iter().zip(truth) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        actions: actions.to_vec(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> Bbox {
        Bbox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(frame: u32, bbox: Bbox, score: f64) -> Detection {
        Detection {
            video_id: "v".into(),
            frame,
            bbox,
            action: "a".into(),
            score,
        }
    }

    fn track(video: &str, id: u32, boxes: Vec<(u32, Bbox)>) -> GroundTruthTrack {
        GroundTruthTrack {
            video_id: video.into(),
            track_id: id,
            action: "a".into(),
            boxes,
        }
    }

    fn vocab() -> Vec<String> {
        vec!["a".to_string()]
    }

    #[test]
    fn average_precision_hand_curve() {
        let ap = average_precision(&[1.0, 0.5, 2.0 / 3.0], &[0.5, 0.5, 1.0]);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&[], &[]), 0.0);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let g = bb(0.0, 0.0, 10.0, 10.0);
        let gt = vec![track("v", 0, vec![(0, g)])];
        let dets = vec![det(0, g, 0.9), det(0, g, 0.8)];
        let r = frame_ap(&dets, &gt, 0.5, &vocab()).unwrap();
        let c = &r.classes[0];
        assert_eq!(c.curve.precision, vec![1.0, 0.5]);
        assert_eq!(c.ap, Some(1.0));
    }

    #[test]
    fn score_ties_enter_together() {
        let g = bb(0.0, 0.0, 10.0, 10.0);
        let gt = vec![track("v", 0, vec![(0, g)])];
        // FP listed first but tied with the TP: one threshold step at precision 1/2
        let dets = vec![det(0, bb(50.0, 50.0, 60.0, 60.0), 0.7), det(0, g, 0.7)];
        let r = frame_ap(&dets, &gt, 0.5, &vocab()).unwrap();
        assert_eq!(r.classes[0].curve.thresholds, vec![0.7]);
        assert_eq!(r.classes[0].ap, Some(0.5));
    }

    #[test]
    fn strict_sigma_threshold() {
        let g = bb(0.0, 0.0, 10.0, 10.0);
        let gt = vec![track("v", 0, vec![(0, g)])];
        // IoU exactly 1/3
        let dets = vec![det(0, bb(5.0, 0.0, 15.0, 10.0), 1.0)];
        let r = frame_ap(&dets, &gt, 1.0 / 3.0, &vocab()).unwrap();
        assert_eq!(r.map, Some(0.0));
        let r = frame_ap(&dets, &gt, 0.3, &vocab()).unwrap();
        assert_eq!(r.map, Some(1.0));
    }

    #[test]
    fn class_without_groundtruth_is_undefined() {
        let g = bb(0.0, 0.0, 10.0, 10.0);
        let actions = vec!["a".to_string(), "b".to_string()];
        let gt = vec![track("v", 0, vec![(0, g)])];
        let r = frame_ap(&[det(0, g, 1.0)], &gt, 0.5, &actions).unwrap();
        assert_eq!(r.ap("b"), None);
        assert_eq!(r.map, Some(1.0));
        assert_eq!(frame_ap(&[], &[], 0.5, &actions).unwrap().map, None);
    }

    #[test]
    fn sigma_and_vocabulary_checked() {
        assert!(frame_ap(&[], &[], 0.0, &vocab()).is_err());
        assert!(frame_ap(&[], &[], 1.5, &vocab()).is_err());
        let mut d = det(0, bb(0.0, 0.0, 1.0, 1.0), 1.0);
        d.action = "z".into();
        assert!(frame_ap(&[d], &[], 0.5, &vocab()).is_err());
    }

    #[test]
    fn half_overlapping_tube_boundary() {
        let boxes: Vec<(u32, Bbox)> = (0..4).map(|f| (f, bb(0.0, 0.0, 10.0, 10.0))).collect();
        let gt = vec![track("v", 0, boxes.clone())];
        let mut regions = boxes.clone();
        for r in regions.iter_mut().skip(2) {
            r.1 = bb(100.0, 100.0, 110.0, 110.0);
        }
        let tube = ActionTube {
            video_id: "v".into(),
            action: "a".into(),
            regions,
            score: 1.0,
        };
        let tubes = std::slice::from_ref(&tube);
        assert_eq!(video_ap(tubes, &gt, 0.5, &vocab()).unwrap().map, Some(0.0));
        assert_eq!(video_ap(tubes, &gt, 0.4, &vocab()).unwrap().map, Some(1.0));
    }

    #[test]
    fn tubes_match_only_their_video() {
        let boxes: Vec<(u32, Bbox)> = (0..3).map(|f| (f, bb(0.0, 0.0, 10.0, 10.0))).collect();
        let gt = vec![track("v", 0, boxes.clone())];
        let tube = ActionTube {
            video_id: "w".into(),
            action: "a".into(),
            regions: boxes,
            score: 1.0,
        };
        assert_eq!(video_ap(&[tube], &gt, 0.5, &vocab()).unwrap().map, Some(0.0));
    }

    #[test]
    fn roc_requires_groundtruth() {
        assert!(roc_auc(&[], &[], 0.5, 0.6, 3).is_err());
        let gt = vec![track("v", 0, vec![(0, bb(0.0, 0.0, 1.0, 1.0))])];
        assert!(roc_auc(&[], &gt, 0.5, 0.6, 0).is_err());
        assert!(roc_auc(&[], &gt, 0.5, 0.0, 3).is_err());
        assert_eq!(roc_auc(&[], &gt, 0.5, 0.6, 3).unwrap().auc, 0.0);
    }

    #[test]
    fn top_k_per_video_and_class() {
        let b = bb(0.0, 0.0, 1.0, 1.0);
        let mk = |video: &str, action: &str, score: f64| ActionTube {
            video_id: video.into(),
            action: action.into(),
            regions: vec![(0, b)],
            score,
        };
        let tubes = vec![
            mk("v", "a", 1.0),
            mk("v", "a", 3.0),
            mk("v", "a", 2.0),
            mk("v", "b", 0.5),
            mk("w", "a", 0.1),
        ];
        let kept: Vec<f64> = top_k_tubes(&tubes, 2).iter().map(|t| t.score).collect();
        assert_eq!(kept, vec![3.0, 2.0, 0.5, 0.1]);
    }

    #[test]
    fn confusion_fixtures() {
        let actions: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let truth: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = confusion_matrix(&truth, &truth, &actions).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(m.accuracy(), Some(1.0));

        let all_a = vec!["a".to_string(); 3];
        let m = confusion_matrix(&all_a, &truth, &actions).unwrap();
        assert!(m.counts.iter().all(|row| row[1] == 0 && row[2] == 0));
        assert_eq!(m.counts.iter().map(|r| r[0]).sum::<u64>(), 3);

        let pred: Vec<String> = ["a", "b", "a"].iter().map(|s| s.to_string()).collect();
        let m = confusion_matrix(&pred, &truth, &actions).unwrap();
        assert!((m.accuracy().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for (i, row) in m.counts.iter().enumerate() {
            let expected = truth.iter().filter(|t| **t == actions[i]).count() as u64;
            assert_eq!(row.iter().sum::<u64>(), expected);
        }

        assert!(confusion_matrix(&["z".to_string()], &["a".to_string()], &actions).is_err());
        assert!(confusion_matrix(&[], &["a".to_string()], &actions).is_err());
        assert_eq!(confusion_matrix(&[], &[], &actions).unwrap().accuracy(), None);
    }
}
