//! Corpus-level stages: filter, score, link, classify and evaluate. Each is a
//! pure function of its inputs; the CLI only adds file handling around them.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::classifier::{fuse, models_in_vocab_order, score_region, ActionModel, TrainReport};
use crate::corpus::{Corpus, RegionProposal};
use crate::error::{Error, Result};
use crate::linker::{classify_video, extract_tubes, ActionTube, LinkConfig, ScoredRegion};
use crate::metrics::{confusion_matrix, frame_ap, roc_auc, tube_detections, video_ap, ApReport, ConfusionMatrix, RocCurve};
use crate::saliency::{check_alpha, filter_regions, score_regions, SaliencyReport};

/// Saliency-filter every frame of the corpus.
pub fn filter_corpus(corpus: &Corpus, alpha: f64) -> Result<(Vec<RegionProposal>, SaliencyReport)> {
    check_alpha(alpha)?;
    let mut retained = Vec::new();
    let mut reports = Vec::new();
    for video in &corpus.videos {
        for frame in &video.frames {
            let (kept, report) = filter_regions(&frame.proposals, &frame.flow, alpha)?;
            retained.extend(kept);
            reports.push(report);
        }
    }
    Ok((retained, SaliencyReport::merge(&reports, alpha)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub video_id: String,
    pub frame: u32,
    pub region_id: u32,
    /// One score per action, vocabulary order.
    pub scores: Vec<f64>,
}

fn fused_of(corpus: &Corpus, p: &RegionProposal) -> Result<Vec<f64>> {
    let rec = corpus.feature(&p.video_id, p.frame, p.region_id).ok_or_else(|| {
        Error::invalid(format!(
            "no feature record for region {} of video '{}' frame {}",
            p.region_id, p.video_id, p.frame
        ))
    })?;
    Ok(fuse(&rec.phi_s, &rec.phi_m)?.into_inner())
}

fn score_proposal(corpus: &Corpus, models: &[&ActionModel], p: &RegionProposal) -> Result<Vec<f64>> {
    let phi = fused_of(corpus, p)?;
    models.iter().map(|m| score_region(m, &phi)).collect()
}

/// Score vector of every proposal in the corpus.
pub fn score_corpus(corpus: &Corpus, models: &[ActionModel]) -> Result<Vec<ScoreRow>> {
    let ordered = models_in_vocab_order(models, &corpus.actions)?;
    corpus
        .all_proposals()
        .map(|p| {
            Ok(ScoreRow {
                video_id: p.video_id.clone(),
                frame: p.frame,
                region_id: p.region_id,
                scores: score_proposal(corpus, &ordered, p)?,
            })
        })
        .collect()
}

/// Regions to link in each frame of each video: the retained proposals, or
/// the single most motion-salient proposal when a frame kept none.
pub fn linking_pool(corpus: &Corpus, retained: &[RegionProposal]) -> Vec<Vec<Vec<RegionProposal>>> {
    let keep: HashSet<(&str, u32, u32)> = retained
        .iter()
        .map(|p| (p.video_id.as_str(), p.frame, p.region_id))
        .collect();
    corpus
        .videos
        .iter()
        .map(|video| {
            video
                .frames
                .iter()
                .map(|frame| {
                    let kept: Vec<RegionProposal> = frame
                        .proposals
                        .iter()
                        .filter(|p| keep.contains(&(p.video_id.as_str(), p.frame, p.region_id)))
                        .cloned()
                        .collect();
                    if !kept.is_empty() || frame.proposals.is_empty() {
                        return kept;
                    }
                    let scores = score_regions(&frame.proposals, &frame.flow);
                    let mut best = 0;
                    for i in 1..scores.len() {
                        let (s, b) = (scores[i], scores[best]);
                        if s > b || (s == b && frame.proposals[i].region_id < frame.proposals[best].region_id) {
                            best = i;
                        }
                    }
                    vec![frame.proposals[best].clone()]
                })
                .collect()
        })
        .collect()
}

/// Link tubes for every (video, action) pair. Output follows corpus video
/// order, then vocabulary order, then extraction order.
pub fn link_corpus(
    corpus: &Corpus,
    models: &[ActionModel],
    retained: &[RegionProposal],
    config: &LinkConfig,
) -> Result<Vec<ActionTube>> {
    config.validate()?;
    let ordered = models_in_vocab_order(models, &corpus.actions)?;
    let pool = linking_pool(corpus, retained);

    // unaries[video][frame][region][action]
    let unaries: Vec<Vec<Vec<Vec<f64>>>> = pool
        .par_iter()
        .map(|frames| {
            frames
                .iter()
                .map(|regions| regions.iter().map(|p| score_proposal(corpus, &ordered, p)).collect())
                .collect()
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..corpus.videos.len())
        .flat_map(|v| (0..ordered.len()).map(move |a| (v, a)))
        .collect();
    let per_job: Vec<Vec<ActionTube>> = jobs
        .par_iter()
        .map(|&(v, a)| {
            let frames: Vec<Vec<ScoredRegion>> = pool[v]
                .iter()
                .zip(&unaries[v])
                .map(|(regions, scores)| {
                    regions
                        .iter()
                        .zip(scores)
                        .map(|(p, s)| ScoredRegion {
                            region_id: p.region_id,
                            frame: p.frame,
                            bbox: p.bbox,
                            unary: s[a],
                        })
                        .collect()
                })
                .collect();
            extract_tubes(&frames, &corpus.videos[v].id, &ordered[a].action, config)
        })
        .collect::<Result<_>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

/// One predicted label per video, in order of first appearance in `tubes`.
pub fn classify_tubes(tubes: &[ActionTube], actions: &[String]) -> Result<Vec<(String, String)>> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_video: HashMap<&str, Vec<ActionTube>> = HashMap::new();
    for t in tubes {
        let entry = by_video.entry(&t.video_id).or_insert_with(|| {
            order.push(&t.video_id);
            Vec::new()
        });
        entry.push(t.clone());
    }
    order
        .into_iter()
        .map(|v| Ok((v.to_string(), classify_video(&by_video[v], actions)?)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SigmaMetrics {
    pub sigma: f64,
    pub frame: ApReport,
    pub video: ApReport,
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_sigma: Vec<SigmaMetrics>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn accuracy(&self) -> Option<f64> {
        self.confusion.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub sigmas: Vec<f64>,
    pub topk: usize,
    pub fpr_max: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![crate::metrics::DEFAULT_SIGMA],
            topk: crate::metrics::DEFAULT_TOPK,
            fpr_max: crate::metrics::DEFAULT_FPR_MAX,
        }
    }
}

/// All metrics for one set of tubes and predicted labels. Videos without a
/// ground-truth label or without a prediction are left out of the confusion
/// matrix.
pub fn evaluate(
    corpus: &Corpus,
    tubes: &[ActionTube],
    labels: &[(String, String)],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let detections = tube_detections(tubes);
    let per_sigma = config
        .sigmas
        .iter()
        .map(|&sigma| {
            let roc = if corpus.tracks.is_empty() {
                None
            } else {
                Some(roc_auc(tubes, &corpus.tracks, sigma, config.fpr_max, config.topk)?)
            };
            Ok(SigmaMetrics {
                sigma,
                frame: frame_ap(&detections, &corpus.tracks, sigma, &corpus.actions)?,
                video: video_ap(tubes, &corpus.tracks, sigma, &corpus.actions)?,
                roc,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let predicted: HashMap<&str, &str> = labels.iter().map(|(v, l)| (v.as_str(), l.as_str())).collect();
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for video in &corpus.videos {
        if let (Some(p), Some(t)) = (predicted.get(video.id.as_str()), corpus.video_label(&video.id)) {
            pred.push(p.to_string());
            truth.push(t.to_string());
        }
    }
    let confusion = confusion_matrix(&pred, &truth, &corpus.actions)?;
    Ok(EvalReport { per_sigma, confusion })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// `metric \t class \t sigma \t value` lines.
pub fn format_metrics(report: &EvalReport) -> String {
    let mut out = String::new();
    for m in &report.per_sigma {
        for (name, ap) in [("frame_ap", &m.frame), ("video_ap", &m.video)] {
            for c in &ap.classes {
                writeln!(out, "{name}\t{}\t{}\t{}", c.action, m.sigma, fmt_opt(c.ap)).unwrap();
            }
            let mean_name = name.replace("_ap", "_map");
            writeln!(out, "{mean_name}\tall\t{}\t{}", m.sigma, fmt_opt(ap.map)).unwrap();
        }
        writeln!(out, "auc\tall\t{}\t{}", m.sigma, fmt_opt(m.roc.as_ref().map(|r| r.auc))).unwrap();
    }
    writeln!(out, "accuracy\tall\t-\t{}", fmt_opt(report.accuracy())).unwrap();
    out
}

pub fn format_confusion(m: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\predicted");
    for a in &m.actions {
        write!(out, "\t{a}").unwrap();
    }
    out.push('\n');
    for (a, row) in m.actions.iter().zip(&m.counts) {
        out.push_str(a);
        for c in row {
            write!(out, "\t{c}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// PR points of every class and sigma: `metric \t class \t sigma \t threshold \t recall \t precision`.
pub fn format_pr_points(report: &EvalReport) -> String {
    let mut out = String::new();
    for m in &report.per_sigma {
        for (name, ap) in [("frame_ap", &m.frame), ("video_ap", &m.video)] {
            for c in &ap.classes {
                let curve = &c.curve;
                for i in 0..curve.thresholds.len() {
                    writeln!(
                        out,
                        "{name}\t{}\t{}\t{}\t{}\t{}",
                        c.action, m.sigma, curve.thresholds[i], curve.recall[i], curve.precision[i]
                    )
                    .unwrap();
                }
            }
        }
    }
    out
}

/// ROC points: `sigma \t threshold \t fpr \t tpr`.
pub fn format_roc_points(report: &EvalReport) -> String {
    let mut out = String::new();
    for m in &report.per_sigma {
        if let Some(roc) = &m.roc {
            for p in &roc.points {
                writeln!(out, "{}\t{}\t{}\t{}", m.sigma, p.threshold, p.fpr, p.tpr).unwrap();
            }
        }
    }
    out
}

pub fn format_scores(rows: &[ScoreRow]) -> String {
    let mut out = String::new();
    for r in rows {
        write!(out, "{}\t{}\t{}", r.video_id, r.frame, r.region_id).unwrap();
        for s in &r.scores {
            write!(out, "\t{s}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn format_saliency_report(r: &SaliencyReport) -> String {
    format!(
        "alpha\t{}\ntotal_count\t{}\nretained_count\t{}\ndiscard_fraction\t{}\n",
        r.alpha, r.total_count, r.retained_count, r.discard_fraction
    )
}

pub fn format_train_report(reports: &[(ActionModel, TrainReport)]) -> String {
    let mut out = String::new();
    for (model, report) in reports {
        for (i, r) in report.rounds.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                model.action,
                i + 1,
                r.active_negatives,
                r.epochs,
                r.objective_at_entry,
                r.objective_at_exit,
                r.violators,
                if report.converged { "converged" } else { "exhausted" }
            )
            .unwrap();
        }
    }
    out
}

pub fn format_labels(labels: &[(String, String)]) -> String {
    labels.iter().map(|(v, l)| format!("{v}\t{l}\n")).collect()
}

pub fn parse_labels(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let mut parts = l.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(v), Some(lab), None) if !v.is_empty() && !lab.is_empty() => Ok((v.to_string(), lab.to_string())),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "expected video_id<TAB>label".into(),
                }),
            }
        })
        .collect()
}
