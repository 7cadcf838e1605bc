use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2vqa_core::data::{DatasetManifest, MosRecord, PromptRecord, VideoRecord};
use t2vqa_core::eval::{evaluate, krcc, make_splits, plcc, srocc, FnScorer, SplitBy, TableScorer};

fn kendall_by_enumeration(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[i] - x[j]).signum() * (x[i] != x[j]) as i32 as f64;
            let b = (y[i] - y[j]).signum() * (y[i] != y[j]) as i32 as f64;
            match (a == 0.0, b == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1.0,
                (false, true) => ty += 1.0,
                _ if a == b => c += 1.0,
                _ => d += 1.0,
            }
        }
    }
    (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
}

fn paired(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| (prop::collection::vec(-50i32..50, n), prop::collection::vec(-50i32..50, n)))
        .prop_map(|(x, y): (Vec<i32>, Vec<i32>)| -> (Vec<f64>, Vec<f64>) {
            (x.into_iter().map(f64::from).collect(), y.into_iter().map(f64::from).collect())
        })
        .prop_filter("non-constant", |(x, y)| {
            x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0])
        })
}

proptest! {
    #[test]
    fn srocc_is_invariant_under_monotone_maps((x, y) in paired(3..30)) {
        let mapped: Vec<f64> = x.iter().map(|v| (v / 20.0).exp() * 3.0 - 1.0).collect();
        prop_assert!((srocc(&x, &y).unwrap() - srocc(&mapped, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn plcc_is_invariant_under_positive_affine_maps((x, y) in paired(3..30), a in 0.01f64..100.0, b in -1e3f64..1e3) {
        let mapped: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((plcc(&x, &y).unwrap() - plcc(&mapped, &y).unwrap()).abs() < 1e-9);
        let flipped: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        prop_assert!((plcc(&x, &y).unwrap() + plcc(&flipped, &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn krcc_matches_pair_enumeration((x, y) in paired(2..25)) {
        let k = krcc(&x, &y).unwrap();
        prop_assert!((k - kendall_by_enumeration(&x, &y)).abs() < 1e-12, "{k}");
    }

    #[test]
    fn correlations_stay_in_range((x, y) in paired(3..30)) {
        for r in [srocc(&x, &y).unwrap(), krcc(&x, &y).unwrap(), plcc(&x, &y).unwrap()] {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }
}

fn manifest(n: usize, seed: u64) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DatasetManifest::default();
    for i in 0..n {
        m.prompts.push(PromptRecord { prompt_id: format!("p{i}"), text: format!("prompt {i}"), category: None, group_id: None });
        m.videos.push(VideoRecord {
            video_id: format!("v{i:03}"),
            prompt_id: format!("p{i}"),
            generator: "g".into(),
            frames_path: String::new(),
            frame_count: 1,
            width: 1,
            height: 1,
            fps: 8.0,
        });
        m.mos.push(MosRecord { video_id: format!("v{i:03}"), mos_z: rng.random_range(10.0..90.0), n_ratings: 3 });
    }
    m
}

fn noisy_scores(m: &DatasetManifest, seed: u64) -> HashMap<String, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.mos.iter().map(|r| (r.video_id.clone(), r.mos_z / 20.0 + rng.random_range(-1.0..1.0))).collect()
}

#[test]
fn rank_metrics_of_the_protocol_ignore_monotone_rescoring() {
    let m = manifest(60, 1);
    let plan = make_splits(&m, 10, 0.2, 4, SplitBy::Video).unwrap();
    let raw = noisy_scores(&m, 2);
    let base = evaluate(&TableScorer { name: "raw".into(), scores: raw.clone() }, &m, &plan).unwrap();
    let warped: HashMap<String, f64> = raw.iter().map(|(k, v)| (k.clone(), v.powi(3) + 7.0)).collect();
    let other = evaluate(&TableScorer { name: "warped".into(), scores: warped }, &m, &plan).unwrap();
    for (a, b) in base.folds.iter().zip(&other.folds) {
        assert!((a.srocc - b.srocc).abs() < 1e-9, "fold {}", a.fold_index);
        assert!((a.krcc - b.krcc).abs() < 1e-9, "fold {}", a.fold_index);
    }
    assert!((base.mean.srocc - other.mean.srocc).abs() < 1e-9);
}

#[test]
fn random_scorer_is_near_chance() {
    let m = manifest(200, 3);
    let plan = make_splits(&m, 10, 0.2, 5, SplitBy::Video).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scores: HashMap<String, f64> = m.videos.iter().map(|v| (v.video_id.clone(), rng.random::<f64>())).collect();
    let report = evaluate(&TableScorer { name: "random".into(), scores }, &m, &plan).unwrap();
    let mean_abs = report.folds.iter().map(|f| f.srocc.abs()).sum::<f64>() / report.folds.len() as f64;
    assert!(mean_abs <= 0.3, "mean |srocc| {mean_abs}");
}

#[test]
fn fold_statistics_are_mean_and_sample_std() {
    let m = manifest(40, 8);
    let plan = make_splits(&m, 5, 0.25, 1, SplitBy::Video).unwrap();
    let scores = noisy_scores(&m, 9);
    let r = evaluate(&FnScorer::new("fn", |_, v: &VideoRecord| scores[&v.video_id]), &m, &plan).unwrap();
    let s: Vec<f64> = r.folds.iter().map(|f| f.srocc).collect();
    let mean = s.iter().sum::<f64>() / 5.0;
    let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!((r.mean.srocc - mean).abs() < 1e-12 && (r.std.srocc - sd).abs() < 1e-12);
    assert_eq!(r.scorer, "fn");
    assert!(r.folds.iter().all(|f| f.n_test == 10));
}

#[test]
fn splits_are_seeded_and_leak_free() {
    let m = manifest(30, 0);
    let a = make_splits(&m, 10, 0.2, 11, SplitBy::Video).unwrap();
    assert_eq!(a, make_splits(&m, 10, 0.2, 11, SplitBy::Video).unwrap());
    assert_ne!(a, make_splits(&m, 10, 0.2, 12, SplitBy::Video).unwrap());
    for f in &a.folds {
        assert_eq!(f.test_video_ids.len(), 6);
        assert_eq!(f.train_video_ids.len(), 24);
        assert!(f.test_video_ids.iter().all(|v| !f.train_video_ids.contains(v)));
    }
}
