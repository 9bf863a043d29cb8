//! Temporal linking of scored regions into action tubes.
//!
//! A link between consecutive regions scores
//! `unary(r_t) + unary(r_t+1) + lambda * iou(r_t, r_t+1)`, and a path's raw
//! score is the sum of its `T - 1` links divided by `T`. The best path comes
//! from a forward max-sum pass with backpointers. Tubes are extracted by
//! repeatedly taking the best path and removing its regions.

use crate::error::{Error, Result};
use crate::geometry::{iou, Bbox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRegion {
    pub region_id: u32,
    pub frame: u32,
    pub bbox: Bbox,
    pub unary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionTube {
    pub video_id: String,
    pub action: String,
    /// One box per frame, frames `0..T` in order.
    pub regions: Vec<(u32, Bbox)>,
    pub score: f64,
}

impl ActionTube {
    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::invalid(format!(
                "tube of video '{}' has no regions",
                self.video_id
            )));
        }
        if let Some((i, (f, _))) = self
            .regions
            .iter()
            .enumerate()
            .find(|(i, (f, _))| *f as usize != *i)
        {
            return Err(Error::invalid(format!(
                "tube of video '{}' has frame {f} at position {i}",
                self.video_id
            )));
        }
        if !self.score.is_finite() {
            return Err(Error::invalid(format!(
                "tube of video '{}' has non-finite score",
                self.video_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub lambda: f64,
    pub max_tubes: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_tubes: 3,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if self.max_tubes == 0 {
            return Err(Error::invalid("max_tubes must be at least 1"));
        }
        Ok(())
    }
}

pub fn link_score(r_t: &ScoredRegion, r_next: &ScoredRegion, lambda: f64) -> Result<f64> {
    if r_t.frame.checked_add(1) != Some(r_next.frame) {
        return Err(Error::invalid(format!(
            "cannot link frame {} to frame {}",
            r_t.frame, r_next.frame
        )));
    }
    Ok(link_score_unchecked(r_t, r_next, lambda))
}

fn link_score_unchecked(a: &ScoredRegion, b: &ScoredRegion, lambda: f64) -> f64 {
    a.unary + b.unary + lambda * iou(&a.bbox, &b.bbox)
}

/// Raw score of a fixed path: `(1/T) * sum of link scores`. A single-frame
/// path scores its own unary.
pub fn path_score(path: &[ScoredRegion], lambda: f64) -> Result<f64> {
    match path {
        [] => Err(Error::NoFeasiblePath("empty path".into())),
        [only] => Ok(only.unary),
        _ => {
            let mut sum = 0.0;
            for w in path.windows(2) {
                sum += link_score(&w[0], &w[1], lambda)?;
            }
            Ok(sum / path.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestPath {
    /// Index into each frame's region list, one per frame.
    pub indices: Vec<usize>,
    pub raw_score: f64,
}

/// `a` beats `b` when it scores higher, or ties with a lower region id.
fn better(score_a: f64, id_a: u32, score_b: f64, id_b: u32) -> bool {
    score_a > score_b || (score_a == score_b && id_a < id_b)
}

fn argmax_by_id(scores: &[f64], regions: &[ScoredRegion]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if better(scores[i], regions[i].region_id, scores[best], regions[best].region_id) {
            best = i;
        }
    }
    best
}

/// Highest-scoring path picking one region per frame.
pub fn best_path(frames: &[Vec<ScoredRegion>], lambda: f64) -> Result<BestPath> {
    if frames.is_empty() {
        return Err(Error::NoFeasiblePath("video has no frames".into()));
    }
    if let Some(t) = frames.iter().position(|f| f.is_empty()) {
        return Err(Error::NoFeasiblePath(format!("frame {t} has no regions")));
    }
    let t_len = frames.len();
    if t_len == 1 {
        let unaries: Vec<f64> = frames[0].iter().map(|r| r.unary).collect();
        let best = argmax_by_id(&unaries, &frames[0]);
        return Ok(BestPath {
            indices: vec![best],
            raw_score: unaries[best],
        });
    }

    let mut value = vec![0.0; frames[0].len()];
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(t_len - 1);
    for t in 1..t_len {
        let (prev_regions, cur_regions) = (&frames[t - 1], &frames[t]);
        let mut next_value = Vec::with_capacity(cur_regions.len());
        let mut ptrs = Vec::with_capacity(cur_regions.len());
        for cur in cur_regions {
            let mut best_j = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, prev) in prev_regions.iter().enumerate() {
                let v = value[j] + link_score_unchecked(prev, cur, lambda);
                if j == 0 || better(v, prev.region_id, best_v, prev_regions[best_j].region_id) {
                    best_j = j;
                    best_v = v;
                }
            }
            next_value.push(best_v);
            ptrs.push(best_j);
        }
        value = next_value;
        backptr.push(ptrs);
    }

    let last = argmax_by_id(&value, &frames[t_len - 1]);
    let raw_score = value[last] / t_len as f64;
    let mut indices = vec![0; t_len];
    indices[t_len - 1] = last;
    for t in (1..t_len).rev() {
        indices[t - 1] = backptr[t - 1][indices[t]];
    }
    Ok(BestPath { indices, raw_score })
}

/// Extract up to `config.max_tubes` tubes, best first. Each tube's regions
/// are removed before the next search; extraction stops early when a frame
/// runs out of regions.
pub fn extract_tubes(
    frames: &[Vec<ScoredRegion>],
    video_id: &str,
    action: &str,
    config: &LinkConfig,
) -> Result<Vec<ActionTube>> {
    config.validate()?;
    let mut pool: Vec<Vec<ScoredRegion>> = frames.to_vec();
    let mut tubes = Vec::new();
    while tubes.len() < config.max_tubes && !pool.is_empty() && pool.iter().all(|f| !f.is_empty()) {
        let path = best_path(&pool, config.lambda)?;
        let regions = path
            .indices
            .iter()
            .enumerate()
            .map(|(t, &i)| (t as u32, pool[t][i].bbox))
            .collect();
        tubes.push(ActionTube {
            video_id: video_id.to_string(),
            action: action.to_string(),
            regions,
            score: path.raw_score,
        });
        for (frame, &i) in pool.iter_mut().zip(&path.indices) {
            frame.remove(i);
        }
    }
    if tubes.is_empty() {
        // only reachable when the input itself was infeasible
        best_path(frames, config.lambda)?;
    }
    Ok(tubes)
}

/// Action of the highest-scoring tube; ties go to the earlier vocabulary entry.
pub fn classify_video(tubes: &[ActionTube], actions: &[String]) -> Result<String> {
    if tubes.is_empty() {
        return Err(Error::invalid("cannot classify a video without tubes"));
    }
    let mut best: Option<(f64, usize)> = None;
    for t in tubes {
        let idx = actions
            .iter()
            .position(|a| *a == t.action)
            .ok_or_else(|| Error::invalid(format!("tube action '{}' not in vocabulary", t.action)))?;
        let replace = match best {
            None => true,
            Some((s, i)) => t.score > s || (t.score == s && idx < i),
        };
        if replace {
            best = Some((t.score, idx));
        }
    }
    Ok(actions[best.unwrap().1].clone())
}
