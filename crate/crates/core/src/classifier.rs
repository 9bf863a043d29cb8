//! Per-action linear SVMs over fused appearance + motion features.
//!
//! Training minimizes the L2-regularized hinge loss with a dual coordinate
//! descent solver. The bias is carried as the weight of an appended constant
//! feature, so it shares the `1/2 ||.||^2` regularizer with the weights.
//! Hard negative mining grows the active negative set until no inactive
//! negative violates the margin.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::geometry::iou;

/// `phi_s` followed by `phi_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature(Vec<f64>);

impl FusedFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for FusedFeature {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("feature value {x} is not finite")));
        }
        Ok(Self(v))
    }
}

pub fn fuse(phi_s: &[f64], phi_m: &[f64]) -> Result<FusedFeature> {
    let mut v = Vec::with_capacity(phi_s.len() + phi_m.len());
    v.extend_from_slice(phi_s);
    v.extend_from_slice(phi_m);
    FusedFeature::try_from(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionModel {
    pub action: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ActionModel {
    pub fn zeros(action: impl Into<String>, dim: usize) -> Self {
        Self {
            action: action.into(),
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Proposals whose best IoU with the action's ground truth is below this
    /// are negatives.
    pub neg_overlap: f64,
    /// Hinge loss weight.
    pub c: f64,
    pub hnm_rounds: usize,
    pub initial_neg_per_pos: usize,
    pub seed: u64,
    /// Epoch cap of the inner solver.
    pub max_iter: usize,
    /// Projected-gradient gap at which the inner solver stops.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            neg_overlap: 0.3,
            c: 1.0,
            hnm_rounds: 5,
            initial_neg_per_pos: 10,
            seed: 0,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.neg_overlap) {
            return Err(Error::invalid(format!(
                "neg_overlap {} outside [0, 1)",
                self.neg_overlap
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if self.hnm_rounds == 0 {
            return Err(Error::invalid("hnm_rounds must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Positives are the feature records of proposals that coincide with a
/// ground-truth box of `action`. Negatives are proposals whose best IoU with
/// that action's ground truth in the same frame is below `neg_overlap`.
/// Anything in between is left out.
pub fn assign_training_labels(
    corpus: &Corpus,
    action: &str,
    neg_overlap: f64,
) -> Result<(Vec<FusedFeature>, Vec<FusedFeature>)> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for video in &corpus.videos {
        let tracks: Vec<_> = corpus
            .tracks_for_video(&video.id)
            .filter(|t| t.action == action)
            .collect();
        for (frame_idx, frame) in video.frames.iter().enumerate() {
            let frame_no = frame_idx as u32;
            let gt: Vec<_> = tracks.iter().filter_map(|t| t.box_at(frame_no)).collect();
            for p in &frame.proposals {
                let Some(rec) = corpus.feature(&p.video_id, p.frame, p.region_id) else {
                    continue;
                };
                let best = gt.iter().map(|g| iou(g, &p.bbox)).fold(0.0, f64::max);
                let is_gt = gt.iter().any(|g| **g == p.bbox);
                if is_gt {
                    positives.push(fuse(&rec.phi_s, &rec.phi_m)?);
                } else if best < neg_overlap {
                    negatives.push(fuse(&rec.phi_s, &rec.phi_m)?);
                }
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::Training {
            action: action.to_string(),
            reason: "no ground-truth boxes with feature records".into(),
        });
    }
    Ok((positives, negatives))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub active_negatives: usize,
    pub epochs: usize,
    pub objective_at_entry: f64,
    pub objective_at_exit: f64,
    /// Inactive negatives scoring above -1 after this round.
    pub violators: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub rounds: Vec<RoundReport>,
    /// True when mining stopped because no inactive negative violated the margin.
    pub converged: bool,
}

impl TrainReport {
    pub fn exhausted(&self) -> bool {
        !self.converged
    }
}

/// Weights with the bias appended as the last coordinate.
struct DualState {
    w: Vec<f64>,
    alpha: Vec<f64>,
}

fn dot_aug(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// `1/2 ||w_aug||^2 + C * sum hinge`
fn primal_objective(w: &[f64], examples: &[(&[f64], f64)], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
    let loss: f64 = examples
        .iter()
        .map(|(x, y)| (1.0 - y * dot_aug(w, x)).max(0.0))
        .sum();
    reg + c * loss
}

/// Dual coordinate descent for the L1-loss linear SVM. `state.alpha` may be
/// longer than on entry; new coordinates start at zero.
fn solve_dual(
    examples: &[(&[f64], f64)],
    state: &mut DualState,
    c: f64,
    max_iter: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<usize, (usize, f64)> {
    let n = examples.len();
    state.alpha.resize(n, 0.0);
    let qii: Vec<f64> = examples
        .iter()
        .map(|(x, _)| x.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut gap = f64::INFINITY;
    for epoch in 1..=max_iter {
        order.shuffle(rng);
        let mut max_pg = f64::NEG_INFINITY;
        let mut min_pg = f64::INFINITY;
        for &i in &order {
            let (x, y) = examples[i];
            let g = y * dot_aug(&state.w, x) - 1.0;
            let a = state.alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg);
            min_pg = min_pg.min(pg);
            if pg.abs() > 1e-14 {
                let new_a = (a - g / qii[i]).clamp(0.0, c);
                let step = (new_a - a) * y;
                if step != 0.0 {
                    let d = x.len();
                    for (wj, xj) in state.w[..d].iter_mut().zip(x.iter()) {
                        *wj += step * xj;
                    }
                    state.w[d] += step;
                    state.alpha[i] = new_a;
                }
            }
        }
        gap = max_pg - min_pg;
        if gap < tol {
            return Ok(epoch);
        }
    }
    Err((max_iter, gap))
}

/// Train one action's model. See [`train_svm_with_report`].
pub fn train_svm(
    action: &str,
    positives: &[FusedFeature],
    negatives: &[FusedFeature],
    config: &TrainConfig,
) -> Result<ActionModel> {
    train_svm_with_report(action, positives, negatives, config).map(|(m, _)| m)
}

/// Train with hard negative mining and return the per-round diagnostics.
pub fn train_svm_with_report(
    action: &str,
    positives: &[FusedFeature],
    negatives: &[FusedFeature],
    config: &TrainConfig,
) -> Result<(ActionModel, TrainReport)> {
    config.validate()?;
    let fail = |reason: String| Error::Training {
        action: action.to_string(),
        reason,
    };
    if positives.is_empty() {
        return Err(fail("no positive examples".into()));
    }
    if negatives.is_empty() {
        return Err(fail("no negative examples".into()));
    }
    let dim = positives[0].len();
    if let Some(bad) = positives.iter().chain(negatives).find(|f| f.len() != dim) {
        return Err(fail(format!(
            "feature dimension {} differs from {dim}",
            bad.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = (config.initial_neg_per_pos.saturating_mul(positives.len())).min(negatives.len());
    let mut active: Vec<usize> = rand::seq::index::sample(&mut rng, negatives.len(), initial).into_vec();
    active.sort_unstable();
    let mut is_active = vec![false; negatives.len()];
    for &i in &active {
        is_active[i] = true;
    }

    let mut state = DualState {
        w: vec![0.0; dim + 1],
        alpha: Vec::new(),
    };
    let mut rounds = Vec::new();
    let mut converged = false;

    for round in 1..=config.hnm_rounds {
        let examples: Vec<(&[f64], f64)> = positives
            .iter()
            .map(|p| (p.as_slice(), 1.0))
            .chain(active.iter().map(|&i| (negatives[i].as_slice(), -1.0)))
            .collect();

        let entry_w = state.w.clone();
        let entry_alpha = state.alpha.clone();
        let objective_at_entry = primal_objective(&entry_w, &examples, config.c);
        let epochs = solve_dual(&examples, &mut state, config.c, config.max_iter, config.tol, &mut rng)
            .map_err(|(epochs, gap)| {
                fail(format!(
                    "solver did not converge in round {round}: {epochs} epochs, projected-gradient gap {gap:e} > tol {:e}, {} examples",
                    config.tol,
                    examples.len()
                ))
            })?;
        let mut objective_at_exit = primal_objective(&state.w, &examples, config.c);
        if objective_at_exit > objective_at_entry {
            state.w = entry_w;
            state.alpha = entry_alpha;
            state.alpha.resize(examples.len(), 0.0);
            objective_at_exit = objective_at_entry;
        }

        let violators: Vec<usize> = (0..negatives.len())
            .filter(|&i| !is_active[i] && dot_aug(&state.w, negatives[i].as_slice()) > -1.0)
            .collect();
        rounds.push(RoundReport {
            active_negatives: active.len(),
            epochs,
            objective_at_entry,
            objective_at_exit,
            violators: violators.len(),
        });
        if violators.is_empty() {
            converged = true;
            break;
        }
        if round == config.hnm_rounds {
            break;
        }
        for i in violators {
            is_active[i] = true;
            active.push(i);
        }
    }

    let bias = state.w[dim];
    state.w.truncate(dim);
    let model = ActionModel {
        action: action.to_string(),
        weights: state.w,
        bias,
    };
    Ok((model, TrainReport { rounds, converged }))
}

/// Train one model per vocabulary action. Actions train in parallel; each
/// draws from its own ChaCha stream derived from `config.seed`.
pub fn train_all(corpus: &Corpus, config: &TrainConfig) -> Result<Vec<(ActionModel, TrainReport)>> {
    config.validate()?;
    corpus
        .actions
        .par_iter()
        .enumerate()
        .map(|(idx, action)| {
            let (pos, neg) = assign_training_labels(corpus, action, config.neg_overlap)?;
            let cfg = TrainConfig {
                seed: action_seed(config.seed, idx),
                ..config.clone()
            };
            train_svm_with_report(action, &pos, &neg, &cfg)
        })
        .collect()
}

fn action_seed(seed: u64, action_idx: usize) -> u64 {
    // splitmix64 finalizer over (seed, index)
    let mut z = seed ^ (action_idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `w . phi + b`
pub fn score_region(model: &ActionModel, phi: &[f64]) -> Result<f64> {
    if phi.len() != model.dim() {
        return Err(Error::invalid(format!(
            "feature dimension {} does not match model '{}' dimension {}",
            phi.len(),
            model.action,
            model.dim()
        )));
    }
    Ok(model.weights.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>() + model.bias)
}

/// Models arranged in vocabulary order, one per action, sharing a dimension.
pub fn models_in_vocab_order<'a>(
    models: &'a [ActionModel],
    actions: &[String],
) -> Result<Vec<&'a ActionModel>> {
    let ordered = actions
        .iter()
        .map(|a| {
            models
                .iter()
                .find(|m| &m.action == a)
                .ok_or_else(|| Error::invalid(format!("no model for action '{a}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = ordered.first() {
        if let Some(m) = ordered.iter().find(|m| m.dim() != first.dim()) {
            return Err(Error::invalid(format!(
                "model '{}' has dimension {}, expected {}",
                m.action,
                m.dim(),
                first.dim()
            )));
        }
    }
    Ok(ordered)
}

/// Score of `phi` under every action's model, in vocabulary order.
pub fn score_vector(
    models: &[ActionModel],
    actions: &[String],
    phi: &[f64],
) -> Result<Vec<(String, f64)>> {
    models_in_vocab_order(models, actions)?
        .into_iter()
        .map(|m| Ok((m.action.clone(), score_region(m, phi)?)))
        .collect()
}
