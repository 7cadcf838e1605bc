//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Every check compares the library against an independent oracle written here.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2vqa_core::data::{DatasetManifest, MosRecord, PromptRecord, RatingRecord, VideoRecord};
use t2vqa_core::eval::{self, evaluate, logistic_fit, make_splits, FnScorer, LogisticParams, SplitBy};
use t2vqa_core::model::{level_score, Group, Matrix, ModelConfig, QualityModel};
use t2vqa_core::prompts::{cluster_prompts, embed_prompts, sample_per_group, HashedBagOfWords};
use t2vqa_core::study::{annotator_stats, compute_mosz, rescale, DegeneratePolicy};
use t2vqa_core::synth;
use t2vqa_core::training::{plcc_loss, predict_samples, rank_loss, train_samples, TrainConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- oracles

/// Z-score MOS written out directly: two passes per annotator, then a per-video mean.
fn mosz_oracle(ratings: &[RatingRecord]) -> BTreeMap<String, f64> {
    let mut by_annotator: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in ratings {
        by_annotator.entry(&r.annotator_id).or_default().push(r);
    }
    let mut per_video: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rs in by_annotator.values() {
        let m = rs.len() as f64;
        let mu = rs.iter().map(|r| r.raw_score).sum::<f64>() / m;
        let sigma = (rs.iter().map(|r| (r.raw_score - mu).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        for r in rs {
            per_video.entry(r.video_id.clone()).or_default().push(50.0 + 16.6 * (r.raw_score - mu) / sigma);
        }
    }
    per_video.into_iter().map(|(v, s)| (v, s.iter().sum::<f64>() / s.len() as f64)).collect()
}

fn softmax_score_oracle(l: &[f64; 5]) -> f64 {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w / z).sum()
}

/// Textbook single-pass Pearson.
fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank by counting: `#{less} + (#{equal} + 1) / 2`.
fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn tie_pairs(x: &[f64]) -> f64 {
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for v in x {
        *counts.entry(v.to_bits()).or_default() += 1.0;
    }
    counts.values().map(|t| t * (t - 1.0) / 2.0).sum()
}

/// Tau-b as a sum of sign products over all pairs with tie-group corrections.
fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let sgn = |d: f64| if d == 0.0 { 0.0 } else { d.signum() };
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += sgn(x[i] - x[j]) * sgn(y[i] - y[j]);
        }
    }
    let n0 = (n * (n - 1)) as f64 / 2.0;
    s / ((n0 - tie_pairs(x)) * (n0 - tie_pairs(y))).sqrt()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_logits(rng: &mut ChaCha8Rng, scale: f64) -> [f64; 5] {
    std::array::from_fn(|_| rng.random_range(-scale..scale))
}

fn video(id: &str, prompt: &str) -> VideoRecord {
    VideoRecord {
        video_id: id.into(),
        prompt_id: prompt.into(),
        generator: "g".into(),
        frames_path: id.into(),
        frame_count: 8,
        width: 32,
        height: 32,
        fps: 8.0,
    }
}

// ---------------------------------------------------------------- criteria

fn mosz_suite() -> Outcome {
    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    let mut worst_affine: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for trial in 0..200u64 {
        let ratings = synth::rating_table(5, 20, trial);
        let stats = annotator_stats(&ratings).map_err(|e| e.to_string())?;
        ensure!(stats.len() == 5, "trial {trial}: {} annotators", stats.len());
        for st in &stats {
            let rescaled: Vec<f64> = ratings
                .iter()
                .filter(|r| r.annotator_id == st.annotator_id)
                .map(|r| rescale((r.raw_score - st.mu) / st.sigma))
                .collect();
            let m = rescaled.len() as f64;
            let mean = rescaled.iter().sum::<f64>() / m;
            let sd = (rescaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            worst_mean = worst_mean.max((mean - 50.0).abs());
            worst_std = worst_std.max((sd - 16.6).abs());
        }
        let mos = compute_mosz(&ratings, DegeneratePolicy::Abort).map_err(|e| e.to_string())?;
        let oracle = mosz_oracle(&ratings);
        for m in &mos {
            worst_oracle = worst_oracle.max((m.mos_z - oracle[&m.video_id]).abs());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let transforms: HashMap<String, (f64, f64)> = (0..5)
            .map(|a| (format!("a{a:02}"), (rng.random_range(0.1..10.0), rng.random_range(-100.0..100.0))))
            .collect();
        let mut moved: Vec<RatingRecord> = ratings
            .iter()
            .map(|r| {
                let (a, b) = transforms[&r.annotator_id];
                RatingRecord { raw_score: a * r.raw_score + b, ..r.clone() }
            })
            .collect();
        moved.reverse();
        let mos2 = compute_mosz(&moved, DegeneratePolicy::Abort).map_err(|e| e.to_string())?;
        for (x, y) in mos.iter().zip(&mos2) {
            ensure!(x.video_id == y.video_id, "video order differs");
            worst_affine = worst_affine.max((x.mos_z - y.mos_z).abs());
        }
    }
    ensure!(worst_mean <= 1e-9, "rescaled mean off by {worst_mean:e}");
    ensure!(worst_std <= 1e-9, "rescaled std off by {worst_std:e}");
    ensure!(worst_affine <= 1e-9, "affine drift {worst_affine:e}");
    ensure!(worst_oracle <= 1e-9, "differs from direct formula by {worst_oracle:e}");
    Ok(format!("mean dev {worst_mean:.1e}, std dev {worst_std:.1e}, affine drift {worst_affine:.1e}"))
}

fn level_score_suite() -> Outcome {
    for c in [-1e3, -3.5, 0.0, 1.0, 42.0, 1e3] {
        ensure!(level_score(&[c; 5]) == 3.0, "uniform logits {c} gave {}", level_score(&[c; 5]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_shift: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for i in 0..10_000 {
        let scale = [1.0, 10.0, 100.0, 1000.0][i % 4];
        let l = random_logits(&mut rng, scale);
        let s = level_score(&l);
        ensure!((1.0..=5.0).contains(&s), "score {s} out of range for {l:?}");
        worst_oracle = worst_oracle.max((s - softmax_score_oracle(&l)).abs());
        let shift = rng.random_range(-100.0..100.0);
        worst_shift = worst_shift.max((level_score(&l.map(|v| v + shift)) - s).abs());
        if scale <= 10.0 {
            let mut up = l;
            up[4] += rng.random_range(0.01..1.0);
            ensure!(level_score(&up) > s, "not strictly increasing in the last logit at {l:?}");
        }
    }
    ensure!(worst_shift <= 1e-12, "shift drift {worst_shift:e}");
    ensure!(worst_oracle <= 1e-12, "differs from softmax oracle by {worst_oracle:e}");
    Ok(format!("shift drift {worst_shift:.1e}, oracle dev {worst_oracle:.1e}"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..=50usize);
        let levels = rng.random_range(2..=12u32) as f64;
        // integer-valued draws guarantee ties
        let x: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + (rng.random::<f64>() * levels).floor() - levels / 2.0).collect();
        let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
        if constant(&x) || constant(&y) {
            ensure!(eval::srocc(&x, &y).is_err(), "constant input accepted");
            continue;
        }
        checked += 1;
        let rx = counting_ranks(&x);
        let ry = counting_ranks(&y);
        let diffs = [
            (eval::srocc(&x, &y).unwrap(), pearson_oracle(&rx, &ry)),
            (eval::plcc(&x, &y).unwrap(), pearson_oracle(&x, &y)),
            (eval::krcc(&x, &y).unwrap(), kendall_oracle(&x, &y)),
            (
                eval::rmse(&x, &y).unwrap(),
                (x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt(),
            ),
        ];
        for (got, want) in diffs {
            worst = worst.max((got - want).abs());
        }
    }
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    Ok(format!("200 tied vectors, max deviation {worst:.1e}"))
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

fn gradient_checks() -> Outcome {
    const H: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_plcc: f64 = 0.0;
    let mut worst_rank: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=12usize);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        // keep the hinge away from its kinks
        let near_kink = (0..n).any(|i| (0..n).any(|j| i != j && (pred[i] - pred[j]).abs() < 1e-2));
        let analytic_p = plcc_loss(&pred, &target, 1e-8).unwrap().grad;
        let analytic_r = rank_loss(&pred, &target).unwrap().grad;
        for k in 0..n {
            let num = central_difference(|p| plcc_loss(p, &target, 1e-8).unwrap().value, &pred, k, H);
            if analytic_p[k].abs().max(num.abs()) > 1e-6 {
                worst_plcc = worst_plcc.max(rel_err(analytic_p[k], num));
            }
            if !near_kink {
                let num = central_difference(|p| rank_loss(p, &target).unwrap().value, &pred, k, H);
                if analytic_r[k].abs().max(num.abs()) > 1e-6 {
                    worst_rank = worst_rank.max(rel_err(analytic_r[k], num));
                }
            }
        }
    }
    ensure!(worst_plcc <= 1e-4, "plcc_loss gradient rel error {worst_plcc:e}");
    ensure!(worst_rank <= 1e-4, "rank_loss gradient rel error {worst_rank:e}");

    // end to end: d s_pred / d θ for every trainable tensor
    let cfg = ModelConfig::toy();
    let mut model = QualityModel::new(cfg.clone()).unwrap();
    let clip = synth::brightness_clip(cfg.n_frames, cfg.frame_size, 0.4, 3);
    let text = "a red kite over the beach";
    let grads = {
        let mut g = t2vqa_core::model::Graph::new(model.store());
        let v = model.forward(&mut g, text, &clip).unwrap();
        g.backward(&[(v.score, Matrix::filled(1, 1, 1.0))])
    };
    let ids: Vec<_> = model.store().trainable_ids();
    let mut worst_e2e: f64 = 0.0;
    let mut checked = 0;
    let mut groups_checked = BTreeSet::new();
    for id in ids {
        let Some(g) = grads.get(id).cloned() else {
            return Err(format!("trainable tensor {} has no gradient", model.store().param(id).name));
        };
        let mut order: Vec<usize> = (0..g.data().len()).collect();
        order.sort_by(|&a, &b| g.data()[b].abs().total_cmp(&g.data()[a].abs()));
        // largest entries plus a few random ones above the rounding floor
        let mut picks: Vec<usize> = order.iter().copied().take(2).collect();
        for _ in 0..2 {
            let k = rng.random_range(0..order.len());
            if g.data()[k].abs() > 1e-5 {
                picks.push(k);
            }
        }
        for k in picks {
            let original = model.store().value(id).data()[k];
            let mut eval_at = |v: f64| {
                model.store_mut().value_mut(id).data_mut()[k] = v;
                model.predict(text, &clip).unwrap().value()
            };
            let num = (eval_at(original + H) - eval_at(original - H)) / (2.0 * H);
            eval_at(original);
            let a = g.data()[k];
            if a.abs().max(num.abs()) < 1e-7 {
                continue;
            }
            worst_e2e = worst_e2e.max(rel_err(a, num));
            checked += 1;
            groups_checked.insert(model.store().param(id).group);
        }
    }
    ensure!(groups_checked.len() == 4, "only checked groups {groups_checked:?}");
    ensure!(worst_e2e <= 1e-4, "end-to-end gradient rel error {worst_e2e:e}");
    Ok(format!(
        "plcc {worst_plcc:.1e}, rank {worst_rank:.1e}, end-to-end {worst_e2e:.1e} over {checked} entries"
    ))
}

fn frozen_contract() -> Outcome {
    let cfg = ModelConfig::toy();
    let model = QualityModel::new(cfg.clone()).unwrap();
    let before: BTreeMap<Group, Vec<u8>> = Group::ALL.iter().map(|g| (*g, model.store().group_bytes(*g))).collect();
    let samples = synth::brightness_samples(8, cfg.n_frames, cfg.frame_size, 5);
    let tc = TrainConfig { epochs: 5, ..Default::default() };
    let out = train_samples(model, &samples, &[], &tc, &mut |_| {}).map_err(|e| e.to_string())?;
    ensure!(out.steps == 10, "ran {} steps", out.steps);
    for (group, bytes) in &before {
        let after = out.model.store().group_bytes(*group);
        let frozen = matches!(group, Group::FrameEncoder | Group::Decoder);
        ensure!((after == *bytes) == frozen, "group {} changed={} but frozen={frozen}", group.name(), after != *bytes);
    }
    Ok("frame_encoder/decoder bit-identical; text_encoder/fidelity/fusion/projector moved".into())
}

fn overfit_oracle() -> Outcome {
    let cfg = ModelConfig::toy();
    let model = QualityModel::new(cfg.clone()).unwrap();
    let samples = synth::brightness_samples(16, cfg.n_frames, cfg.frame_size, 1);
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let start = eval::srocc(&predict_samples(&model, &samples).unwrap(), &targets).unwrap();
    let tc = TrainConfig { epochs: 75, max_steps: Some(300), ..Default::default() };
    let out = train_samples(model, &samples, &[], &tc, &mut |_| {}).map_err(|e| e.to_string())?;
    ensure!(out.steps <= 300, "{} steps", out.steps);
    let end = eval::srocc(&predict_samples(&out.model, &samples).unwrap(), &targets).unwrap();
    ensure!(end >= 0.95, "train SROCC {end:.4} after {} steps (start {start:.4})", out.steps);
    Ok(format!("train SROCC {start:.4} -> {end:.4} in {} steps at lr {}", out.steps, tc.learning_rate))
}

fn logistic_suite() -> Outcome {
    let truth = LogisticParams { beta1: 4.6, beta2: 1.2, beta3: 0.5, beta4: 0.15 };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let noise = rand_distr::Normal::new(0.0, 0.01).unwrap();
    let x: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
    let clean: Vec<f64> = x.iter().map(|v| truth.apply(*v)).collect();
    let y: Vec<f64> = clean.iter().map(|v| v + rand_distr::Distribution::sample(&noise, &mut rng)).collect();
    let fit = logistic_fit(&x, &y).map_err(|e| e.to_string())?;
    let curve_rmse = eval::rmse(&fit.mapped, &clean).unwrap();
    let data_rmse = eval::rmse(&fit.mapped, &y).unwrap();
    ensure!(curve_rmse <= 0.05 && data_rmse <= 0.05, "rmse {curve_rmse} / {data_rmse}");
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    ensure!(order.windows(2).all(|w| fit.mapped[w[0]] <= fit.mapped[w[1]]), "mapping reorders predictions");
    Ok(format!("rmse vs curve {curve_rmse:.4}, vs data {data_rmse:.4}, converged={}", fit.converged))
}

fn protocol_manifest(n: usize) -> DatasetManifest {
    let mut m = DatasetManifest::default();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for i in 0..n {
        let pid = format!("p{i:03}");
        m.prompts.push(PromptRecord { prompt_id: pid.clone(), text: format!("prompt {i}"), category: None, group_id: None });
        m.videos.push(video(&format!("v{i:03}"), &pid));
        m.mos.push(MosRecord { video_id: format!("v{i:03}"), mos_z: rng.random_range(10.0..90.0), n_ratings: 5 });
    }
    m
}

fn protocol_suite() -> Outcome {
    let m = protocol_manifest(103);
    let plan = make_splits(&m, 10, 0.2, 7, SplitBy::Video).map_err(|e| e.to_string())?;
    ensure!(plan.folds.len() == 10, "{} folds", plan.folds.len());
    let all: BTreeSet<&str> = m.videos.iter().map(|v| v.video_id.as_str()).collect();
    let (exact_test, exact_train) = (103.0 * 0.2, 103.0 * 0.8);
    for f in &plan.folds {
        let train: BTreeSet<&str> = f.train_video_ids.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = f.test_video_ids.iter().map(String::as_str).collect();
        ensure!(((test.len() as f64) - exact_test).abs() <= 1.0, "fold {} test size {}", f.fold_index, test.len());
        ensure!(((train.len() as f64) - exact_train).abs() <= 1.0, "fold {} train size {}", f.fold_index, train.len());
        ensure!(train.is_disjoint(&test), "fold {} overlaps", f.fold_index);
        ensure!(train.union(&test).copied().collect::<BTreeSet<_>>() == all, "fold {} not covering", f.fold_index);
    }
    let mos: HashMap<String, f64> = m.mos.iter().map(|r| (r.video_id.clone(), r.mos_z)).collect();
    let oracle = FnScorer::new("oracle", |_: &str, v: &VideoRecord| mos[&v.video_id]);
    let report = evaluate(&oracle, &m, &plan).map_err(|e| e.to_string())?;
    let mut min_plcc: f64 = 1.0;
    for f in &report.folds {
        ensure!((f.srocc - 1.0).abs() <= 1e-12, "fold {} srocc {}", f.fold_index, f.srocc);
        ensure!((f.plcc - 1.0).abs() <= 1e-6, "fold {} plcc {}", f.fold_index, f.plcc);
        min_plcc = min_plcc.min(f.plcc);
    }
    let first = serde_json::to_vec(&(&plan, &report)).unwrap();
    for _ in 0..9 {
        let p = make_splits(&m, 10, 0.2, 7, SplitBy::Video).unwrap();
        let r = evaluate(&oracle, &m, &p).unwrap();
        ensure!(serde_json::to_vec(&(&p, &r)).unwrap() == first, "run differs");
    }
    Ok(format!("10 folds of 82/21, oracle srocc 1, min plcc {min_plcc:.9}, 10 runs byte-identical"))
}

fn prompt_selection() -> Outcome {
    let (prompts, truth) = synth::planted_prompts(100, 20, 11);
    ensure!(prompts.len() == 2000, "{} prompts", prompts.len());
    let run = || -> Result<(Vec<usize>, Vec<String>), String> {
        let emb = embed_prompts(&prompts, &HashedBagOfWords::default()).map_err(|e| e.to_string())?;
        let assign = cluster_prompts(&emb, 100, 5).map_err(|e| e.to_string())?;
        let picked = sample_per_group(&assign, 10, 5).map_err(|e| e.to_string())?;
        Ok((assign.groups, picked))
    };
    let (groups, picked) = run()?;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (g, t) in groups.iter().zip(&truth) {
        *table.entry((*g, *t)).or_default() += 1;
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for ((g, _), c) in table {
        let b = best.entry(g).or_default();
        *b = (*b).max(c);
    }
    let purity = best.values().sum::<usize>() as f64 / prompts.len() as f64;
    ensure!(purity >= 0.9, "purity {purity:.3}");
    ensure!(picked.len() == 1000, "{} selected", picked.len());
    ensure!(picked.iter().collect::<BTreeSet<_>>().len() == 1000, "duplicate selections");
    ensure!(run()? == (groups, picked), "not deterministic");
    Ok(format!("purity {purity:.3}, 1000 distinct prompts, deterministic"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("mosz_normalization", mosz_suite, Duration::from_secs(5)),
        ("level_score_expectation", level_score_suite, Duration::from_secs(5)),
        ("metric_oracles", metric_oracles, Duration::from_secs(30)),
        ("gradient_checks", gradient_checks, Duration::from_secs(120)),
        ("frozen_contract", frozen_contract, Duration::from_secs(60)),
        ("overfit_oracle", overfit_oracle, Duration::from_secs(300)),
        ("logistic_fit", logistic_suite, Duration::from_secs(10)),
        ("protocol", protocol_suite, Duration::from_secs(30)),
        ("prompt_selection", prompt_selection, Duration::from_secs(60)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = t0.elapsed();
        let result = match result {
            Ok(msg) if took > budget => Err(format!("{msg}; took {took:.1?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(msg) => println!("PASS {name} ({took:.1?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({took:.1?}): {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
