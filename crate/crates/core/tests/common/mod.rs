#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tubekit::geometry::iou;
use tubekit::linker::ScoredRegion;
use tubekit::Bbox;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut impl Rng) -> Bbox {
    let x1 = rng.random_range(0.0..40.0);
    let y1 = rng.random_range(0.0..40.0);
    let w = rng.random_range(1.0..20.0);
    let h = rng.random_range(1.0..20.0);
    Bbox::new(x1, y1, x1 + w, y1 + h).unwrap()
}

/// Random linking instance with `1..=max_t` frames and `1..=max_r` regions
/// per frame. Region ids are a shuffled range so they don't follow list order.
pub fn random_instance(rng: &mut impl Rng, max_t: usize, max_r: usize) -> Vec<Vec<ScoredRegion>> {
    let t_len = rng.random_range(1..=max_t);
    (0..t_len)
        .map(|t| {
            let n = rng.random_range(1..=max_r);
            let mut ids: Vec<u32> = (0..n as u32).map(|i| i * 3 + 1).collect();
            for i in (1..ids.len()).rev() {
                let j = rng.random_range(0..=i);
                ids.swap(i, j);
            }
            ids.into_iter()
                .map(|region_id| ScoredRegion {
                    region_id,
                    frame: t as u32,
                    bbox: random_box(rng),
                    unary: rng.random_range(-3.0..3.0),
                })
                .collect()
        })
        .collect()
}

/// Path score written out directly, independent of the library.
pub fn oracle_path_score(path: &[ScoredRegion], lambda: f64) -> f64 {
    if path.len() == 1 {
        return path[0].unary;
    }
    let sum: f64 = path
        .windows(2)
        .map(|w| w[0].unary + w[1].unary + lambda * iou(&w[0].bbox, &w[1].bbox))
        .sum();
    sum / path.len() as f64
}

pub struct Enumerated {
    pub best: Vec<usize>,
    pub score: f64,
    /// Gap to the best path that differs from `best`; infinite if unique.
    pub runner_up_gap: f64,
}

/// Exhaustive search over every combination of one region per frame.
pub fn enumerate_paths(frames: &[Vec<ScoredRegion>], lambda: f64) -> Enumerated {
    let mut idx = vec![0usize; frames.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut second = f64::NEG_INFINITY;
    loop {
        let path: Vec<ScoredRegion> = idx.iter().enumerate().map(|(t, &i)| frames[t][i]).collect();
        let s = oracle_path_score(&path, lambda);
        match &best {
            Some((_, b)) if s <= *b => second = second.max(s),
            _ => {
                if let Some((_, b)) = &best {
                    second = second.max(*b);
                }
                best = Some((idx.clone(), s));
            }
        }
        let mut t = frames.len();
        loop {
            if t == 0 {
                let (best, score) = best.unwrap();
                return Enumerated {
                    best,
                    score,
                    runner_up_gap: score - second,
                };
            }
            t -= 1;
            idx[t] += 1;
            if idx[t] < frames[t].len() {
                break;
            }
            idx[t] = 0;
        }
    }
}
