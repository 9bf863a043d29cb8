//! Seeded synthetic corpora: one linearly moving actor per video, flow maps
//! that light up the actor, jittered and background proposals, and Gaussian
//! features whose class means sit `class_separation` noise deviations apart.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{self, Corpus, FeatureRecord, Frame, GroundTruthTrack, RegionProposal, Video};
use crate::error::{Error, Result};
use crate::geometry::{iou, Bbox};
use crate::saliency::FlowMagnitudeMap;

/// Jittered proposals must keep at least this share of their area on the actor.
const MIN_ACTOR_SHARE: f64 = 0.45;
const MIN_SIDE: f64 = 6.0;
const MAX_TRIES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub num_actions: usize,
    pub proposals_per_frame: usize,
    pub feature_dim_s: usize,
    pub feature_dim_m: usize,
    pub class_separation: f64,
    pub actor_flow: f64,
    pub background_flow: f64,
    pub jitter: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_videos: 40,
            frames_per_video: 20,
            num_actions: 4,
            proposals_per_frame: 12,
            feature_dim_s: 8,
            feature_dim_m: 8,
            class_separation: 8.0,
            actor_flow: 1.0,
            background_flow: 0.05,
            jitter: 0.25,
            frame_width: 96,
            frame_height: 72,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_videos", self.num_videos),
            ("frames_per_video", self.frames_per_video),
            ("num_actions", self.num_actions),
            ("proposals_per_frame", self.proposals_per_frame),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        // one axis per action plus one for the background, in each half
        let needed = self.num_actions + 1;
        if self.feature_dim_s < needed || self.feature_dim_m < needed {
            return Err(Error::invalid(format!(
                "feature dimensions ({}, {}) must each be at least num_actions + 1 = {needed}",
                self.feature_dim_s, self.feature_dim_m
            )));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::invalid("class_separation must be finite and >= 0"));
        }
        if !(self.background_flow >= 0.0 && self.actor_flow > 1.1 * self.background_flow) {
            return Err(Error::invalid(
                "actor_flow must exceed 1.1 * background_flow, and background_flow must be >= 0",
            ));
        }
        if !self.actor_flow.is_finite() || (self.actor_flow as f32).is_infinite() {
            return Err(Error::invalid("actor_flow must be finite"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid("jitter must be finite and >= 0"));
        }
        if self.frame_width < 24 || self.frame_height < 24 {
            return Err(Error::invalid("frames must be at least 24x24 pixels"));
        }
        Ok(())
    }

    pub fn action_names(&self) -> Vec<String> {
        (0..self.num_actions).map(|a| format!("action{a}")).collect()
    }

    pub fn video_ids(&self) -> Vec<String> {
        (0..self.num_videos).map(|v| format!("v{v:04}")).collect()
    }
}

struct Means {
    actions: Vec<Vec<f64>>,
    background: Vec<f64>,
}

fn class_means(cfg: &SynthConfig) -> Means {
    let (ds, dm) = (cfg.feature_dim_s, cfg.feature_dim_m);
    // Each action puts sep/2 on its own axis in both halves, so two actions
    // differ by sep in total and by sep/sqrt(2) within either half.
    let axis_vec = |axis: usize, value: f64| {
        let mut v = vec![0.0; ds + dm];
        v[axis] = value;
        v[ds + axis] = value;
        v
    };
    let half = cfg.class_separation / 2.0;
    let bg = cfg.class_separation.max(4.0);
    Means {
        actions: (0..cfg.num_actions).map(|a| axis_vec(a, half)).collect(),
        background: axis_vec(cfg.num_actions, bg),
    }
}

fn frame_box(cfg: &SynthConfig) -> Bbox {
    Bbox::new(0.0, 0.0, cfg.frame_width as f64, cfg.frame_height as f64).unwrap()
}

fn clip(b: &Bbox, frame: &Bbox) -> Option<Bbox> {
    let x1 = b.x1().max(frame.x1());
    let y1 = b.y1().max(frame.y1());
    let x2 = b.x2().min(frame.x2());
    let y2 = b.y2().min(frame.y2());
    if x2 - x1 < MIN_SIDE || y2 - y1 < MIN_SIDE {
        return None;
    }
    Bbox::new(x1, y1, x2, y2).ok()
}

/// Whole-pixel actor boxes moving at constant velocity, clamped to the frame.
fn actor_track(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Bbox> {
    let (fw, fh) = (cfg.frame_width as f64, cfg.frame_height as f64);
    let w = (fw * rng.random_range(0.2..0.35)).round();
    let h = (fh * rng.random_range(0.3..0.5)).round();
    let x0 = rng.random_range(0.0..=fw - w);
    let y0 = rng.random_range(0.0..=fh - h);
    let vx = rng.random_range(-2.0..2.0);
    let vy = rng.random_range(-1.0..1.0);
    (0..cfg.frames_per_video)
        .map(|t| {
            let x = (x0 + vx * t as f64).clamp(0.0, fw - w).round();
            let y = (y0 + vy * t as f64).clamp(0.0, fh - h).round();
            Bbox::new(x, y, x + w, y + h).unwrap()
        })
        .collect()
}

fn flow_map(cfg: &SynthConfig, actor: &Bbox, rng: &mut ChaCha8Rng) -> FlowMagnitudeMap {
    let (w, h) = (cfg.frame_width, cfg.frame_height);
    let mut values = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        let cy = y as f64 + 0.5;
        for x in 0..w {
            let cx = x as f64 + 0.5;
            let inside = cx >= actor.x1() && cx < actor.x2() && cy >= actor.y1() && cy < actor.y2();
            let v = if inside {
                cfg.actor_flow
            } else {
                cfg.background_flow + rng.random_range(0.0..=0.1) * cfg.background_flow
            };
            values.push(v as f32);
        }
    }
    FlowMagnitudeMap::new(w, h, values).expect("synthetic flow is finite and non-negative")
}

/// A perturbed copy of `gt` that still overlaps it substantially. Spread
/// grows with `level` so the copies cover a range of IoUs.
fn jittered_box(cfg: &SynthConfig, gt: &Bbox, level: f64, rng: &mut ChaCha8Rng) -> Bbox {
    let frame = frame_box(cfg);
    let spread = cfg.jitter * (1.0 + 2.0 * level);
    for _ in 0..MAX_TRIES {
        let dx = rng.random_range(-1.0..=1.0) * spread * gt.width();
        let dy = rng.random_range(-1.0..=1.0) * spread * gt.height();
        let sw = (rng.random_range(-1.0..=1.0) * spread).exp();
        let sh = (rng.random_range(-1.0..=1.0) * spread).exp();
        let cx = (gt.x1() + gt.x2()) / 2.0 + dx;
        let cy = (gt.y1() + gt.y2()) / 2.0 + dy;
        let (hw, hh) = (gt.width() * sw / 2.0, gt.height() * sh / 2.0);
        let Ok(raw) = Bbox::new(cx - hw, cy - hh, cx + hw, cy + hh) else {
            continue;
        };
        let Some(b) = clip(&raw, &frame) else {
            continue;
        };
        if b == *gt {
            continue;
        }
        if gt.intersection_area(&b) >= MIN_ACTOR_SHARE * b.area() {
            return b;
        }
    }
    // a slightly shrunk copy always qualifies
    let (mx, my) = (gt.width() * 0.1, gt.height() * 0.1);
    Bbox::new(gt.x1() + mx, gt.y1() + my, gt.x2() - mx, gt.y2() - my).unwrap()
}

fn random_box(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Bbox {
    let (fw, fh) = (cfg.frame_width as f64, cfg.frame_height as f64);
    let w = (fw * rng.random_range(0.1..0.3)).max(MIN_SIDE);
    let h = (fh * rng.random_range(0.1..0.4)).max(MIN_SIDE);
    let x = rng.random_range(0.0..=fw - w);
    let y = rng.random_range(0.0..=fh - h);
    Bbox::new(x, y, x + w, y + h).unwrap()
}

/// Background boxes stay put for the whole video when they can avoid the
/// actor in every frame; otherwise they are resampled per frame.
fn background_boxes(cfg: &SynthConfig, track: &[Bbox], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Bbox>> {
    let mut per_frame = vec![Vec::with_capacity(count); track.len()];
    for _ in 0..count {
        let static_box = (0..MAX_TRIES)
            .map(|_| random_box(cfg, rng))
            .find(|b| track.iter().all(|a| a.intersection_area(b) == 0.0));
        for (t, actor) in track.iter().enumerate() {
            let b = match static_box {
                Some(b) => b,
                None => (0..MAX_TRIES)
                    .map(|_| random_box(cfg, rng))
                    .find(|b| actor.intersection_area(b) == 0.0)
                    .unwrap_or_else(|| corner_box(cfg, actor)),
            };
            per_frame[t].push(b);
        }
    }
    per_frame
}

/// The largest empty corner strip next to the actor.
fn corner_box(cfg: &SynthConfig, actor: &Bbox) -> Bbox {
    let (fw, fh) = (cfg.frame_width as f64, cfg.frame_height as f64);
    let candidates = [
        (0.0, 0.0, actor.x1(), fh),
        (actor.x2(), 0.0, fw, fh),
        (0.0, 0.0, fw, actor.y1()),
        (0.0, actor.y2(), fw, fh),
    ];
    candidates
        .iter()
        .filter_map(|&(x1, y1, x2, y2)| Bbox::new(x1, y1, x2, y2).ok())
        .max_by(|a, b| a.area().total_cmp(&b.area()))
        .expect("actor never fills the frame")
}

fn feature(mean_a: &[f64], mean_bg: &[f64], q: f64, ds: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let v: Vec<f64> = mean_a
        .iter()
        .zip(mean_bg)
        .map(|(a, b)| q * a + (1.0 - q) * b + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let (s, m) = v.split_at(ds);
    (s.to_vec(), m.to_vec())
}

/// Build the corpus in memory.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = class_means(cfg);
    let actions = cfg.action_names();
    let extra = cfg.proposals_per_frame - 1;
    let n_jitter = extra.div_ceil(2);
    let n_background = extra - n_jitter;

    let mut videos = Vec::with_capacity(cfg.num_videos);
    let mut tracks = Vec::with_capacity(cfg.num_videos);
    let mut features = BTreeMap::new();

    for (v, video_id) in cfg.video_ids().into_iter().enumerate() {
        let action = v % cfg.num_actions;
        let track = actor_track(cfg, &mut rng);
        let backgrounds = background_boxes(cfg, &track, n_background, &mut rng);
        let mut frames = Vec::with_capacity(track.len());
        for (t, (gt, bg_boxes)) in track.iter().zip(backgrounds).enumerate() {
            let flow = flow_map(cfg, gt, &mut rng);
            let mut boxes = vec![*gt];
            for j in 0..n_jitter {
                let level = if n_jitter > 1 { j as f64 / (n_jitter - 1) as f64 } else { 0.0 };
                boxes.push(jittered_box(cfg, gt, level, &mut rng));
            }
            boxes.extend(bg_boxes);
            boxes.shuffle(&mut rng);

            let mut proposals = Vec::with_capacity(boxes.len());
            for (region_id, b) in boxes.into_iter().enumerate() {
                let region_id = region_id as u32;
                let q = iou(gt, &b);
                let (phi_s, phi_m) = feature(&means.actions[action], &means.background, q, cfg.feature_dim_s, &mut rng);
                features.insert(
                    (video_id.clone(), t as u32, region_id),
                    FeatureRecord {
                        video_id: video_id.clone(),
                        frame: t as u32,
                        region_id,
                        phi_s,
                        phi_m,
                    },
                );
                proposals.push(RegionProposal {
                    video_id: video_id.clone(),
                    frame: t as u32,
                    region_id,
                    bbox: b,
                });
            }
            frames.push(Frame { proposals, flow });
        }
        tracks.push(GroundTruthTrack {
            video_id: video_id.clone(),
            track_id: 0,
            action: actions[action].clone(),
            boxes: track.iter().enumerate().map(|(t, b)| (t as u32, *b)).collect(),
        });
        videos.push(Video { id: video_id, frames });
    }

    Ok(Corpus {
        actions,
        videos,
        features,
        tracks,
    })
}

/// Generate and write a corpus to `root`.
pub fn generate(cfg: &SynthConfig, root: &Path) -> Result<Corpus> {
    let corpus = generate_corpus(cfg)?;
    corpus::write_corpus(&corpus, root)?;
    Ok(corpus)
}
