mod common;

use common::{enumerate_paths, random_instance, rng};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use tubekit::classifier::{score_region, train_all, train_svm_with_report, ActionModel, FusedFeature, TrainConfig};
use tubekit::corpus::GroundTruthTrack;
use tubekit::linker::{extract_tubes, LinkConfig};
use tubekit::metrics::{frame_ap, Detection};
use tubekit::pipeline::{classify_tubes, evaluate, filter_corpus, link_corpus, EvalConfig};
use tubekit::synth::{generate, generate_corpus, SynthConfig};
use tubekit::Bbox;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn extraction_is_monotone_and_tubes_are_valid(seed in any::<u64>(), max_tubes in 1usize..6) {
        let mut r = rng(seed);
        let lambda = r.random_range(0.0..3.0);
        let frames = random_instance(&mut r, 6, 5);
        let config = LinkConfig { lambda, max_tubes };
        let tubes = extract_tubes(&frames, "v", "a", &config).unwrap();
        let min_regions = frames.iter().map(Vec::len).min().unwrap();
        prop_assert_eq!(tubes.len(), max_tubes.min(min_regions));
        for pair in tubes.windows(2) {
            prop_assert!(pair[1].score <= pair[0].score);
        }
        for tube in &tubes {
            tube.validate().unwrap();
            prop_assert_eq!(tube.regions.len(), frames.len());
        }
        prop_assert!((tubes[0].score - enumerate_paths(&frames, lambda).score).abs() <= 1e-9);
    }
}

fn blob(r: &mut impl Rng, mean: &[f64]) -> FusedFeature {
    let v: Vec<f64> = mean
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(&mut *r);
            m + z
        })
        .collect();
    FusedFeature::try_from(v).unwrap()
}

fn check_mining(model: &ActionModel, report: &tubekit::classifier::TrainReport, negatives: &[FusedFeature], rounds: usize) {
    for pair in report.rounds.windows(2) {
        assert!(pair[1].active_negatives >= pair[0].active_negatives);
        assert_eq!(pair[1].active_negatives, pair[0].active_negatives + pair[0].violators);
    }
    for round in &report.rounds {
        assert!(round.objective_at_exit <= round.objective_at_entry);
    }
    let last = report.rounds.last().unwrap();
    // Everything scoring above -1 must be inside the final active set,
    // unless the round budget ran out.
    let above: usize = negatives
        .iter()
        .filter(|n| score_region(model, n.as_slice()).unwrap() > -1.0)
        .count();
    if report.converged {
        assert_eq!(last.violators, 0);
        assert!(above <= last.active_negatives);
    } else {
        assert!(report.exhausted());
        assert_eq!(report.rounds.len(), rounds);
        assert!(last.violators > 0);
    }
}

#[test]
fn hard_negative_mining_invariants() {
    let mut r = rng(31);
    let pos: Vec<FusedFeature> = (0..20).map(|_| blob(&mut r, &[2.0, 2.0, 0.0])).collect();
    // Most negatives are easy; a tail overlaps the positives.
    let neg: Vec<FusedFeature> = (0..600)
        .map(|i| {
            let m = if i % 10 == 0 { [1.0, 1.0, 0.0] } else { [-3.0, -3.0, 0.0] };
            blob(&mut r, &m)
        })
        .collect();

    let config = TrainConfig {
        initial_neg_per_pos: 1,
        hnm_rounds: 10,
        ..TrainConfig::default()
    };
    let (model, report) = train_svm_with_report("a", &pos, &neg, &config).unwrap();
    assert!(report.converged, "{report:?}");
    assert!(report.rounds.len() > 1);
    check_mining(&model, &report, &neg, config.hnm_rounds);

    let tight = TrainConfig {
        hnm_rounds: 1,
        ..config
    };
    let (model, report) = train_svm_with_report("a", &pos, &neg, &tight).unwrap();
    assert!(report.exhausted(), "{report:?}");
    check_mining(&model, &report, &neg, 1);
}

#[test]
fn separable_sets_train_to_zero_error() {
    for seed in 0..20 {
        let mut r = rng(400 + seed);
        let dim = r.random_range(1..6);
        let dir: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-3);
        let shift: Vec<f64> = dir.iter().map(|d| 3.0 * d / norm).collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        while pos.len() < 30 || neg.len() < 60 {
            let x: Vec<f64> = (0..dim).map(|_| r.random_range(-5.0..5.0)).collect();
            let proj: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / norm;
            // keep a gap of 0.5 on either side of the hyperplane
            if proj > 0.5 && pos.len() < 30 {
                pos.push(FusedFeature::try_from(x.iter().zip(&shift).map(|(a, s)| a + s).collect::<Vec<_>>()).unwrap());
            } else if proj < -0.5 && neg.len() < 60 {
                neg.push(FusedFeature::try_from(x.iter().zip(&shift).map(|(a, s)| a + s).collect::<Vec<_>>()).unwrap());
            }
        }
        // Large C needs more coordinate-descent epochs than the default cap.
        let config = TrainConfig {
            c: 100.0,
            max_iter: 200_000,
            seed,
            ..TrainConfig::default()
        };
        let (model, _) = train_svm_with_report("a", &pos, &neg, &config).unwrap();
        for p in &pos {
            assert!(score_region(&model, p.as_slice()).unwrap() > 0.0, "seed {seed}");
        }
        for n in &neg {
            assert!(score_region(&model, n.as_slice()).unwrap() < 0.0, "seed {seed}");
        }
    }
}

#[test]
fn zero_separation_classifies_at_chance() {
    let cfg = SynthConfig {
        num_videos: 240,
        frames_per_video: 8,
        num_actions: 4,
        class_separation: 0.0,
        seed: 17,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let (retained, _) = filter_corpus(&corpus, 0.3).unwrap();
    let models: Vec<ActionModel> = train_all(&corpus, &TrainConfig::default())
        .unwrap()
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    let tubes = link_corpus(&corpus, &models, &retained, &LinkConfig::default()).unwrap();
    let labels = classify_tubes(&tubes, &corpus.actions).unwrap();
    let accuracy = evaluate(&corpus, &tubes, &labels, &EvalConfig::default())
        .unwrap()
        .accuracy()
        .unwrap();
    assert!((accuracy - 0.25).abs() <= 0.15, "accuracy {accuracy}");
}

#[test]
fn synth_is_deterministic_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        num_videos: 3,
        frames_per_video: 3,
        seed: 9,
        ..SynthConfig::default()
    };
    generate(&cfg, &dir.path().join("a")).unwrap();
    generate(&cfg, &dir.path().join("b")).unwrap();
    generate(&SynthConfig { seed: 10, ..cfg }, &dir.path().join("c")).unwrap();
    for file in ["proposals.tsv", "features.tsv", "groundtruth.tsv", "flow/v0002/2.flm"] {
        let read = |d: &str| std::fs::read(dir.path().join(d).join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(read("a"), read("b"), "{file}");
    }
    let features = |d: &str| std::fs::read(dir.path().join(d).join("features.tsv")).unwrap();
    assert_ne!(features("a"), features("c"));
}

fn det(frame: u32, x: f64, score: f64) -> Detection {
    Detection {
        video_id: "v".into(),
        frame,
        bbox: Bbox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
        action: "a".into(),
        score,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ap_depends_only_on_rank(
        hits in prop::collection::vec((0u32..6, any::<bool>(), -5.0f64..5.0), 0..15),
        extra_low in any::<bool>(),
    ) {
        let actions = vec!["a".to_string()];
        let gt = vec![GroundTruthTrack {
            video_id: "v".into(),
            track_id: 0,
            action: "a".into(),
            boxes: (0..6).map(|f| (f, Bbox::new(0.0, 0.0, 10.0, 10.0).unwrap())).collect(),
        }];
        let dets: Vec<Detection> = hits.iter().map(|(f, tp, s)| det(*f, if *tp { 0.0 } else { 40.0 }, *s)).collect();
        let ap = |d: &[Detection]| frame_ap(d, &gt, 0.5, &actions).unwrap().ap("a").unwrap();
        let base = ap(&dets);
        prop_assert!((0.0..=1.0).contains(&base));

        let rescaled: Vec<Detection> = dets.iter().map(|d| Detection { score: d.score.exp() * 3.0 + 1.0, ..d.clone() }).collect();
        prop_assert!((ap(&rescaled) - base).abs() <= 1e-12);

        let mut more = dets.clone();
        if extra_low {
            more.push(det(0, 40.0, -100.0));
            prop_assert!(ap(&more) <= base + 1e-12);
        } else {
            // a fresh frame's ground truth matched ahead of everything else
            let gt_extra = {
                let mut g = gt.clone();
                g[0].boxes.push((6, Bbox::new(0.0, 0.0, 10.0, 10.0).unwrap()));
                g
            };
            let before = frame_ap(&dets, &gt_extra, 0.5, &actions).unwrap().ap("a").unwrap();
            more.push(det(6, 0.0, 100.0));
            let after = frame_ap(&more, &gt_extra, 0.5, &actions).unwrap().ap("a").unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }
}
