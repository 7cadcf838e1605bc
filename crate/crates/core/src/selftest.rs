//! Embedded invariant suite behind the `selftest` command: fast checks that
//! each module still honours its contract on seeded synthetic inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::data::{DatasetManifest, VideoRecord};
use crate::eval::{krcc, logistic_fit, make_splits, plcc, srocc, LogisticParams, SplitBy};
use crate::model::{level_score, load_checkpoint, save_checkpoint, Group, ModelConfig, QualityModel};
use crate::prompts::{cluster_prompts, embed_prompts, HashedBagOfWords};
use crate::study::{annotator_stats, compute_mosz, rescale, DegeneratePolicy};
use crate::synth;
use crate::training::{plcc_loss, rank_loss, train_samples, TrainConfig};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn() -> Result<String, String>;

const CHECKS: [(&str, Check); 8] = [
    ("mos_normalization", mos_normalization),
    ("level_score", level_score_range),
    ("rank_metrics", rank_metrics),
    ("logistic_recovery", logistic_recovery),
    ("split_plan", split_plan),
    ("prompt_clusters", prompt_clusters),
    ("loss_gradients", loss_gradients),
    ("model_contract", model_contract),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check whose name is in `only` (all when empty).
pub fn run(only: &[String]) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .filter(|(name, _)| only.is_empty() || only.iter().any(|o| o == name))
        .map(|(name, check)| {
            let t = Instant::now();
            let r = check();
            let seconds = t.elapsed().as_secs_f64();
            match r {
                Ok(detail) => CheckResult { name, passed: true, detail, seconds },
                Err(detail) => CheckResult { name, passed: false, detail, seconds },
            }
        })
        .collect()
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn mos_normalization() -> Result<String, String> {
    let ratings = synth::rating_table(6, 30, 11);
    let mos = compute_mosz(&ratings, DegeneratePolicy::Abort).map_err(|e| e.to_string())?;
    ensure!(mos.len() == 30, "{} MOS records for 30 videos", mos.len());
    let stats = annotator_stats(&ratings).map_err(|e| e.to_string())?;
    let by_annotator: BTreeMap<&str, (f64, f64)> =
        stats.iter().map(|s| (s.annotator_id.as_str(), (s.mu, s.sigma))).collect();
    let mut worst = 0.0f64;
    for a in by_annotator.keys() {
        let (mu, sigma) = by_annotator[a];
        let z: Vec<f64> =
            ratings.iter().filter(|r| r.annotator_id == *a).map(|r| (r.raw_score - mu) / sigma).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        worst = worst.max(mean.abs()).max((sd - 1.0).abs());
    }
    ensure!(worst < 1e-9, "per-annotator z deviates by {worst:e}");
    let grand = mos.iter().map(|m| m.mos_z).sum::<f64>() / mos.len() as f64;
    ensure!((grand - rescale(0.0)).abs() < 1e-9, "grand mean {grand} not at the rescaled centre");
    Ok(format!("z-score deviation {worst:.1e}"))
}

fn level_score_range() -> Result<String, String> {
    let l = [0.3, -1.2, 2.0, 0.7, -0.4];
    let s = level_score(&l);
    let shifted = level_score(&l.map(|v| v + 17.5));
    ensure!((1.0..=5.0).contains(&s), "score {s} outside [1, 5]");
    ensure!((s - shifted).abs() < 1e-12, "logit shift changed the score by {:e}", (s - shifted).abs());
    ensure!((level_score(&[0.0; 5]) - 3.0).abs() < 1e-12, "uniform logits do not give 3");
    Ok(format!("score {s:.4}"))
}

fn rank_metrics() -> Result<String, String> {
    let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
    let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0];
    let cubed: Vec<f64> = x.iter().map(|v| v * v * v + 1.0).collect();
    let s = srocc(&x, &y).map_err(|e| e.to_string())?;
    let k = krcc(&x, &y).map_err(|e| e.to_string())?;
    ensure!((s - srocc(&cubed, &y).unwrap()).abs() < 1e-12, "srocc changed under a monotone transform");
    ensure!((k - krcc(&cubed, &y).unwrap()).abs() < 1e-12, "krcc changed under a monotone transform");
    let affine: Vec<f64> = x.iter().map(|v| 2.5 * v - 4.0).collect();
    let p = plcc(&x, &y).map_err(|e| e.to_string())?;
    ensure!((p - plcc(&affine, &y).unwrap()).abs() < 1e-12, "plcc changed under an affine transform");
    ensure!((srocc(&x, &x).unwrap() - 1.0).abs() < 1e-12, "self-correlation is not 1");
    Ok(format!("srocc {s:.4}, krcc {k:.4}, plcc {p:.4}"))
}

fn logistic_recovery() -> Result<String, String> {
    let truth = LogisticParams { beta1: 80.0, beta2: 20.0, beta3: 3.0, beta4: 0.5 };
    let pred: Vec<f64> = (0..40).map(|i| 1.0 + 4.0 * i as f64 / 39.0).collect();
    let mos: Vec<f64> = pred.iter().map(|&p| truth.apply(p)).collect();
    let fit = logistic_fit(&pred, &mos).map_err(|e| e.to_string())?;
    let err = fit.mapped.iter().zip(&mos).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err < 1e-4, "max error {err:e} after {} iterations", fit.iterations);
    Ok(format!("max error {err:.1e} in {} iterations", fit.iterations))
}

fn split_plan() -> Result<String, String> {
    let mut m = DatasetManifest::default();
    for i in 0..40 {
        m.videos.push(VideoRecord {
            video_id: format!("v{i:03}"),
            prompt_id: format!("p{:02}", i / 4),
            generator: "g".into(),
            frames_path: String::new(),
            frame_count: 1,
            width: 1,
            height: 1,
            fps: 1.0,
        });
    }
    let a = make_splits(&m, 10, 0.2, 3, SplitBy::Prompt).map_err(|e| e.to_string())?;
    let b = make_splits(&m, 10, 0.2, 3, SplitBy::Prompt).map_err(|e| e.to_string())?;
    ensure!(a == b, "identical seeds gave different plans");
    for f in &a.folds {
        let train: BTreeSet<&str> = f.train_video_ids.iter().map(|s| s.as_str()).collect();
        ensure!(f.test_video_ids.iter().all(|v| !train.contains(v.as_str())), "fold {} leaks", f.fold_index);
        ensure!(train.len() + f.test_video_ids.len() == 40, "fold {} drops videos", f.fold_index);
        let prompts = |ids: &[String]| ids.iter().map(|v| v[1..].parse::<usize>().unwrap() / 4).collect::<BTreeSet<_>>();
        ensure!(
            prompts(&f.train_video_ids).is_disjoint(&prompts(&f.test_video_ids)),
            "fold {} splits a prompt",
            f.fold_index
        );
    }
    Ok(format!("{} folds, prompt-disjoint", a.folds.len()))
}

fn prompt_clusters() -> Result<String, String> {
    let (prompts, truth) = synth::planted_prompts(10, 8, 2);
    let emb = embed_prompts(&prompts, &HashedBagOfWords::default()).map_err(|e| e.to_string())?;
    let assign = cluster_prompts(&emb, 10, 2).map_err(|e| e.to_string())?;
    let mut pure = 0;
    for g in 0..10 {
        let members: Vec<usize> = assign.groups.iter().enumerate().filter(|(_, &x)| x == g).map(|(i, _)| truth[i]).collect();
        let mut counts = BTreeMap::new();
        members.iter().for_each(|t| *counts.entry(*t).or_insert(0) += 1);
        pure += counts.values().max().copied().unwrap_or(0);
    }
    let purity = pure as f64 / prompts.len() as f64;
    ensure!(purity >= 0.9, "purity {purity:.3}");
    Ok(format!("purity {purity:.3}"))
}

fn loss_gradients() -> Result<String, String> {
    let pred = [2.1, 3.4, 1.7, 4.2, 2.9, 3.8];
    let target = [40.0, 55.0, 30.0, 70.0, 60.0, 50.0];
    let h = 1e-6;
    let mut worst = 0.0f64;
    let analytic_p = plcc_loss(&pred, &target, 1e-8).map_err(|e| e.to_string())?.grad;
    let analytic_r = rank_loss(&pred, &target).map_err(|e| e.to_string())?.grad;
    for k in 0..pred.len() {
        let (mut up, mut down) = (pred, pred);
        up[k] += h;
        down[k] -= h;
        let fd_p = (plcc_loss(&up, &target, 1e-8).unwrap().value - plcc_loss(&down, &target, 1e-8).unwrap().value) / (2.0 * h);
        let fd_r = (rank_loss(&up, &target).unwrap().value - rank_loss(&down, &target).unwrap().value) / (2.0 * h);
        worst = worst.max((fd_p - analytic_p[k]).abs()).max((fd_r - analytic_r[k]).abs());
    }
    ensure!(worst < 1e-6, "finite-difference gap {worst:e}");
    Ok(format!("max gap {worst:.1e}"))
}

fn model_contract() -> Result<String, String> {
    let cfg = ModelConfig { n_frames: 4, frame_size: 16, ..ModelConfig::toy() };
    let model = QualityModel::new(cfg.clone()).map_err(|e| e.to_string())?;
    let frozen: Vec<(Group, Vec<u8>)> = Group::ALL
        .iter()
        .filter(|g| model.store().is_frozen(**g))
        .map(|g| (*g, model.store().group_bytes(*g)))
        .collect();
    let samples = synth::brightness_samples(4, cfg.n_frames, cfg.frame_size, 9);
    let out = train_samples(model, &samples, &[], &TrainConfig { epochs: 1, ..Default::default() }, &mut |_| {})
        .map_err(|e| e.to_string())?;
    for (g, bytes) in &frozen {
        ensure!(out.model.store().group_bytes(*g) == *bytes, "frozen group {} moved", g.name());
    }
    let score = out.model.predict(&samples[0].text, &samples[0].clip).map_err(|e| e.to_string())?.value();
    ensure!(score.is_finite() && (1.0..=5.0).contains(&score), "score {score}");
    let path = std::env::temp_dir().join(format!("t2vqa-selftest-{}.ckpt", std::process::id()));
    save_checkpoint(&out.model, &path).map_err(|e| e.to_string())?;
    let reloaded = load_checkpoint(&path);
    let _ = std::fs::remove_file(&path);
    let reloaded = reloaded.map_err(|e| e.to_string())?;
    let again = reloaded.predict(&samples[0].text, &samples[0].clip).map_err(|e| e.to_string())?.value();
    ensure!(again.to_bits() == score.to_bits(), "checkpoint reload changed the score");
    Ok(format!("{} frozen groups fixed, reload bit-exact", frozen.len()))
}
