use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use t2vqa_core::data::{load_manifest, read_ratings_csv, save_manifest, DatasetManifest, Fold, PromptRecord, SplitPlan, VideoRecord};
use t2vqa_core::eval::{
    analyze, evaluate, make_splits, summarize, write_scatter_csv, write_table_csv, FoldReport, ModelScorer, SplitBy,
    TableScorer,
};
use t2vqa_core::model::{load_checkpoint, save_checkpoint, ModelConfig, QualityModel};
use t2vqa_core::prompts::{cluster_prompts, embed_prompts, sample_per_group, HashedBagOfWords};
use t2vqa_core::selftest;
use t2vqa_core::study::{compute_mosz_screened, DegeneratePolicy, PassThrough, PENDING_EXPIRY};
use t2vqa_core::training::{train, TrainConfig};

use crate::config::{
    create_dir, default_manifest, ensure_distinct, env_seed, invalid, io_error, load_config_file, parent_dir,
    require_path, resolve, runtime, write_file, write_json, write_run_json, CliError, Overlay,
};
use crate::*;

struct Ctx {
    file: Option<Value>,
    seed_default: u64,
    seed_flag: Option<u64>,
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let ctx = Ctx {
        file: load_config_file(cli.config.as_deref())?,
        seed_default: env_seed()?.unwrap_or(0),
        seed_flag: cli.seed,
    };
    match cli.command {
        Command::SelectPrompts(a) => select_prompts(&ctx, a),
        Command::IngestRatings(a) => ingest_ratings(&ctx, a),
        Command::ComputeMos(a) => compute_mos(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Analyze(a) => analyze_cmd(&ctx, a),
        Command::Selftest(a) => selftest_cmd(&ctx, a),
    }
}

fn manifest_flag(m: &ManifestArg) -> Option<PathBuf> {
    m.manifest.clone()
}

fn manifest_path(p: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    p.clone()
        .ok_or_else(|| invalid(format!("missing --manifest (and {} is not set)", DATA_ENV)))
}

/// Frames paths in a manifest resolve against its directory.
fn frames_base(manifest: &Path) -> PathBuf {
    parent_dir(manifest)
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    video_id: String,
    score: f64,
}

fn read_scores(path: &Path) -> Result<HashMap<String, f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let s: ScoreLine =
            serde_json::from_str(line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !s.score.is_finite() {
            return Err(invalid(format!("{}:{}: non-finite score", path.display(), i + 1)));
        }
        if out.insert(s.video_id.clone(), s.score).is_some() {
            return Err(invalid(format!("{}:{}: duplicate video {}", path.display(), i + 1, s.video_id)));
        }
    }
    Ok(out)
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn save_new_manifest(m: &DatasetManifest, input: Option<&Path>, out: &Path) -> Result<(), CliError> {
    if let Some(input) = input {
        ensure_distinct(input, out)?;
    }
    create_dir(&parent_dir(out))?;
    save_manifest(m, out)?;
    Ok(())
}

// ---------------------------------------------------------------- select-prompts

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectPromptsConfig {
    prompts: Option<PathBuf>,
    manifest: Option<PathBuf>,
    k: usize,
    m: usize,
    embed_dim: usize,
    seed: u64,
    out: Option<PathBuf>,
}

fn read_prompt_list(path: &Path) -> Result<Vec<PromptRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| PromptRecord { prompt_id: format!("p{i:05}"), text: l.to_string(), category: None, group_id: None })
        .collect())
}

fn select_prompts(ctx: &Ctx, a: SelectPromptsArgs) -> Result<(), CliError> {
    let defaults = SelectPromptsConfig {
        prompts: None,
        manifest: None,
        k: 100,
        m: 10,
        embed_dim: 384,
        seed: ctx.seed_default,
        out: None,
    };
    let mut o = Overlay::default();
    o.set("prompts", a.prompts)
        .set("manifest", manifest_flag(&a.input))
        .set("k", a.k)
        .set("m", a.m)
        .set("embed_dim", a.embed_dim)
        .set("seed", ctx.seed_flag)
        .set("out", a.out);
    let mut cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    if cfg.prompts.is_none() && cfg.manifest.is_none() {
        cfg.manifest = default_manifest();
    }
    let out = require_path(&cfg.out, "out")?;
    write_run_json(&parent_dir(&out), "select-prompts", &cfg)?;

    let (source, input) = match (&cfg.prompts, &cfg.manifest) {
        (Some(p), _) => (DatasetManifest { prompts: read_prompt_list(p)?, ..Default::default() }, p.clone()),
        (None, Some(m)) => (load_manifest(m)?, m.clone()),
        (None, None) => return Err(invalid(format!("give --prompts or --manifest (or set {DATA_ENV})"))),
    };
    let emb = embed_prompts(&source.prompts, &HashedBagOfWords { dim: cfg.embed_dim })?;
    let groups = cluster_prompts(&emb, cfg.k, cfg.seed)?;
    let chosen = sample_per_group(&groups, cfg.m, cfg.seed)?;
    let group_of: HashMap<&str, usize> =
        groups.prompt_ids.iter().map(String::as_str).zip(groups.groups.iter().copied()).collect();
    let chosen: BTreeSet<&str> = chosen.iter().map(String::as_str).collect();

    let mut m = source.clone();
    m.prompts = source
        .prompts
        .iter()
        .filter(|p| chosen.contains(p.prompt_id.as_str()))
        .map(|p| PromptRecord { group_id: Some(group_of[p.prompt_id.as_str()] as u32), ..p.clone() })
        .collect();
    m.videos.retain(|v| chosen.contains(v.prompt_id.as_str()));
    let kept: BTreeSet<String> = m.videos.iter().map(|v| v.video_id.clone()).collect();
    m.ratings.retain(|r| kept.contains(&r.video_id));
    m.mos.retain(|r| kept.contains(&r.video_id));
    save_new_manifest(&m, Some(&input), &out)?;
    log::info!("selected {} of {} prompts into {} groups -> {}", m.prompts.len(), source.prompts.len(), cfg.k, out.display());
    Ok(())
}

// ---------------------------------------------------------------- ingest-ratings

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestConfig {
    manifest: Option<PathBuf>,
    ratings: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn ingest_ratings(ctx: &Ctx, a: IngestRatingsArgs) -> Result<(), CliError> {
    let defaults = IngestConfig { manifest: default_manifest(), ratings: None, out: None };
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input)).set("ratings", a.ratings).set("out", a.out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let out = require_path(&cfg.out, "out")?;
    let input = manifest_path(&cfg.manifest)?;
    let ratings_path = require_path(&cfg.ratings, "ratings")?;
    write_run_json(&parent_dir(&out), "ingest-ratings", &cfg)?;

    let mut m = load_manifest(&input)?;
    let is_csv = ratings_path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let new = if is_csv { read_ratings_csv(&ratings_path)? } else { t2vqa_service::read_records(&ratings_path)? };
    let n_new = new.len();
    m.ratings.extend(new);
    if !m.mos.is_empty() {
        log::warn!("dropping {} MOS records that predate the new ratings; rerun compute-mos", m.mos.len());
        m.mos.clear();
    }
    m.validate()?;
    save_new_manifest(&m, Some(&input), &out)?;
    log::info!("ingested {n_new} ratings ({} total) -> {}", m.ratings.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- compute-mos

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeMosConfig {
    manifest: Option<PathBuf>,
    policy: PolicyArg,
    out: Option<PathBuf>,
    manifest_out: Option<PathBuf>,
}

fn compute_mos(ctx: &Ctx, a: ComputeMosArgs) -> Result<(), CliError> {
    let defaults =
        ComputeMosConfig { manifest: default_manifest(), policy: PolicyArg::Exclude, out: None, manifest_out: None };
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input))
        .set("policy", a.policy)
        .set("out", a.out)
        .set("manifest_out", a.manifest_out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let out = require_path(&cfg.out, "out")?;
    let input = manifest_path(&cfg.manifest)?;
    write_run_json(&parent_dir(&out), "compute-mos", &cfg)?;

    let m = load_manifest(&input)?;
    let policy = match cfg.policy {
        PolicyArg::Exclude => DegeneratePolicy::ExcludeWithWarning,
        PolicyArg::Abort => DegeneratePolicy::Abort,
    };
    let outcome = compute_mosz_screened(&m.ratings, policy, &PassThrough)?;
    ensure_distinct(&input, &out)?;
    write_file(&out, &jsonl(&outcome.records))?;
    if let Some(mo) = &cfg.manifest_out {
        let mut copy = m.clone();
        copy.mos = outcome.records.clone();
        save_new_manifest(&copy, Some(&input), mo)?;
    }
    log::info!(
        "{} MOS records from {} ratings ({} annotators excluded) -> {}",
        outcome.records.len(),
        m.ratings.len(),
        outcome.excluded.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- serve

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServeConfig {
    manifest: Option<PathBuf>,
    store: Option<PathBuf>,
    addr: String,
    pending_minutes: u64,
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<(), CliError> {
    let defaults = ServeConfig {
        manifest: default_manifest(),
        store: None,
        addr: "127.0.0.1:8080".into(),
        pending_minutes: PENDING_EXPIRY.as_secs() / 60,
    };
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input))
        .set("store", a.store)
        .set("addr", a.addr)
        .set("pending_minutes", a.pending_minutes);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let input = manifest_path(&cfg.manifest)?;
    let store = require_path(&cfg.store, "store")?;
    let addr: SocketAddr = cfg.addr.parse().map_err(|e| invalid(format!("--addr {}: {e}", cfg.addr)))?;
    if cfg.pending_minutes == 0 {
        return Err(invalid("--pending-minutes must be positive"));
    }
    write_run_json(&parent_dir(&store), "serve", &cfg)?;

    let m = load_manifest(&input)?;
    create_dir(&parent_dir(&store))?;
    let state = t2vqa_service::AppState::open(m, &frames_base(&input), &store)?
        .with_expiry(Duration::from_secs(cfg.pending_minutes * 60));
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(t2vqa_service::serve(state, addr)).map_err(|e| runtime(format!("serve on {addr}: {e}")))
}

// ---------------------------------------------------------------- split

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitConfig {
    manifest: Option<PathBuf>,
    folds: usize,
    test_frac: f64,
    split_by: SplitBy,
    seed: u64,
    out: PathBuf,
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<(), CliError> {
    let defaults = SplitConfig {
        manifest: default_manifest(),
        folds: 10,
        test_frac: 0.2,
        split_by: SplitBy::Video,
        seed: ctx.seed_default,
        out: PathBuf::from("splits.json"),
    };
    let by = a.split_by.map(|s| match s {
        SplitByArg::Video => SplitBy::Video,
        SplitByArg::Prompt => SplitBy::Prompt,
    });
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input))
        .set("folds", a.folds)
        .set("test_frac", a.test_frac)
        .set("split_by", by)
        .set("seed", ctx.seed_flag)
        .set("out", a.out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let input = manifest_path(&cfg.manifest)?;
    write_run_json(&parent_dir(&cfg.out), "split", &cfg)?;

    let m = load_manifest(&input)?;
    let plan = make_splits(&m, cfg.folds, cfg.test_frac, cfg.seed, cfg.split_by)?;
    ensure_distinct(&input, &cfg.out)?;
    write_json(&cfg.out, &plan)?;
    log::info!("{} folds over {} videos -> {}", plan.folds.len(), m.videos.len(), cfg.out.display());
    Ok(())
}

fn read_splits(path: &Path) -> Result<SplitPlan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- train

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRunConfig {
    manifest: Option<PathBuf>,
    splits: Option<PathBuf>,
    fold: Option<usize>,
    out: Option<PathBuf>,
    model: ModelConfig,
    train: TrainConfig,
}

fn model_overlay(o: &mut Overlay, f: ModelFlags) {
    let pool = f.pool_fused.map(|p| match p {
        PoolFusedArg::None => "none",
        PoolFusedArg::Mean => "mean",
    });
    o.set("model.n_frames", f.n_frames)
        .set("model.frame_size", f.frame_size)
        .set("model.frame_patch", f.frame_patch)
        .set("model.patch_size", f.patch_size)
        .set("model.vision_dim", f.vision_dim)
        .set("model.align_dim", f.align_dim)
        .set("model.fidelity_dim", f.fidelity_dim)
        .set("model.fusion_dim", f.fusion_dim)
        .set("model.decoder_dim", f.decoder_dim)
        .set("model.n_heads", f.n_heads)
        .set("model.mlp_ratio", f.mlp_ratio)
        .set("model.window_size", f.window_size)
        .set("model.shifted_windows", f.shifted_windows)
        .set("model.n_vision_layers", f.n_vision_layers)
        .set("model.n_text_layers", f.n_text_layers)
        .set("model.n_fidelity_blocks", f.n_fidelity_blocks)
        .set("model.n_fusion_blocks", f.n_fusion_blocks)
        .set("model.n_decoder_layers", f.n_decoder_layers)
        .set("model.cross_attention_parity", f.cross_attention_parity)
        .set("model.pool_fused", pool)
        .set("model.vocab_size", f.vocab_size)
        .set("model.max_text_len", f.max_text_len)
        .set("model.level_token_ids", f.level_token_ids)
        .set("model.instruction_text", f.instruction_text);
}

fn train_overlay(o: &mut Overlay, f: TrainFlags) {
    o.set("train.learning_rate", f.learning_rate)
        .set("train.epochs", f.epochs)
        .set("train.batch_size", f.batch_size)
        .set("train.loss_lambda", f.loss_lambda)
        .set("train.plcc_eps", f.plcc_eps)
        .set("train.max_steps", f.max_steps);
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<(), CliError> {
    let defaults = TrainRunConfig {
        manifest: default_manifest(),
        splits: None,
        fold: None,
        out: None,
        model: ModelConfig { seed: ctx.seed_default, ..ModelConfig::default() },
        train: TrainConfig { seed: ctx.seed_default, ..TrainConfig::default() },
    };
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input))
        .set("splits", a.splits)
        .set("fold", a.fold)
        .set("out", a.out)
        .set("model.seed", ctx.seed_flag)
        .set("train.seed", ctx.seed_flag);
    model_overlay(&mut o, a.model);
    train_overlay(&mut o, a.train);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let out = require_path(&cfg.out, "out")?;
    let input = manifest_path(&cfg.manifest)?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    create_dir(&out)?;
    write_run_json(&out, "train", &cfg)?;

    let m = load_manifest(&input)?;
    let base = frames_base(&input);
    let jobs: Vec<(Fold, PathBuf)> = match (&cfg.splits, cfg.fold) {
        (None, _) => {
            let mut ids: Vec<String> = m.mos.iter().map(|r| r.video_id.clone()).collect();
            ids.sort();
            vec![(Fold { fold_index: 0, train_video_ids: ids, test_video_ids: vec![] }, out.clone())]
        }
        (Some(s), Some(k)) => {
            let plan = read_splits(s)?;
            let fold = plan.folds.into_iter().find(|f| f.fold_index == k).ok_or_else(|| invalid(format!("no fold {k} in {}", s.display())))?;
            vec![(fold, out.clone())]
        }
        (Some(s), None) => read_splits(s)?
            .folds
            .into_iter()
            .map(|f| {
                let dir = out.join(format!("fold_{}", f.fold_index));
                (f, dir)
            })
            .collect(),
    };
    for (fold, dir) in jobs {
        log::info!("fold {}: {} train / {} validation videos", fold.fold_index, fold.train_video_ids.len(), fold.test_video_ids.len());
        let model = QualityModel::new(cfg.model.clone())?;
        let mut log_bytes = Vec::new();
        let mut sink = |r: &t2vqa_core::training::LogRecord| {
            serde_json::to_writer(&mut log_bytes, r).expect("serializable");
            log_bytes.push(b'\n');
            if let t2vqa_core::training::LogRecord::Epoch(e) = r {
                log::info!("epoch {}: val srocc {:?}, val plcc {:?}", e.epoch, e.val_srocc, e.val_plcc);
            }
        };
        let outcome = train(&m, &base, &fold, model, &cfg.train, &mut sink)?;
        create_dir(&dir)?;
        write_file(&dir.join("train_log.jsonl"), &log_bytes)?;
        save_checkpoint(&outcome.model, &dir.join("model.ckpt")).map_err(runtime)?;
        log::info!("fold {}: {} steps -> {}", fold.fold_index, outcome.steps, dir.join("model.ckpt").display());
    }
    Ok(())
}

// ---------------------------------------------------------------- predict

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    checkpoint: Option<PathBuf>,
    manifest: Option<PathBuf>,
    videos: Option<Vec<String>>,
    text: Option<String>,
    frames_dir: Option<PathBuf>,
    out: Option<PathBuf>,
}

/// Counts `frame_0000.png, frame_0001.png, ...` from zero.
fn count_frames(dir: &Path) -> Result<u32, CliError> {
    if !dir.is_dir() {
        return Err(invalid(format!("{} is not a directory", dir.display())));
    }
    let mut n = 0;
    while dir.join(t2vqa_core::data::frame_file_name(n)).is_file() {
        n += 1;
    }
    if n == 0 {
        return Err(invalid(format!("{} holds no {}", dir.display(), t2vqa_core::data::frame_file_name(0))));
    }
    Ok(n)
}

fn predict(ctx: &Ctx, a: PredictArgs) -> Result<(), CliError> {
    let adhoc = a.text.is_some();
    let defaults = PredictConfig {
        checkpoint: None,
        manifest: if adhoc { None } else { default_manifest() },
        videos: None,
        text: None,
        frames_dir: None,
        out: None,
    };
    let mut o = Overlay::default();
    o.set("checkpoint", a.checkpoint)
        .set("manifest", manifest_flag(&a.input))
        .set("videos", a.videos)
        .set("text", a.text)
        .set("frames_dir", a.frames_dir)
        .set("out", a.out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let out = require_path(&cfg.out, "out")?;
    let ckpt = require_path(&cfg.checkpoint, "checkpoint")?;
    write_run_json(&parent_dir(&out), "predict", &cfg)?;
    let model = load_checkpoint(&ckpt)?;

    let lines = match (&cfg.text, &cfg.frames_dir, &cfg.manifest) {
        (Some(text), Some(dir), _) => {
            let video = VideoRecord {
                video_id: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "adhoc".into()),
                prompt_id: String::new(),
                generator: String::new(),
                frames_path: dir.to_string_lossy().into_owned(),
                frame_count: count_frames(dir)?,
                width: 0,
                height: 0,
                fps: 0.0,
            };
            let score = model.predict_video(text, &video, Path::new(""))?.value();
            println!("{score}");
            vec![ScoreLine { video_id: video.video_id, score }]
        }
        (None, None, Some(mpath)) => {
            let m = load_manifest(mpath)?;
            let base = frames_base(mpath);
            let ids: Vec<String> = match &cfg.videos {
                Some(v) => v.clone(),
                None => m.videos.iter().map(|v| v.video_id.clone()).collect(),
            };
            let mut lines = Vec::with_capacity(ids.len());
            for id in ids {
                let video = m.video(&id).ok_or_else(|| invalid(format!("video {id} is not in the manifest")))?;
                let text = m.prompt_text(&id).unwrap_or_default();
                let score = model.predict_video(text, video, &base)?.value();
                lines.push(ScoreLine { video_id: id, score });
            }
            lines
        }
        (None, None, None) => return Err(invalid(format!("give --manifest (or set {DATA_ENV}) or --text with --frames-dir"))),
        _ => return Err(invalid("--text and --frames-dir go together")),
    };
    write_file(&out, &jsonl(&lines))?;
    log::info!("{} scores -> {}", lines.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateConfig {
    manifest: Option<PathBuf>,
    splits: Option<PathBuf>,
    checkpoint: Option<String>,
    scores: Option<PathBuf>,
    name: Option<String>,
    out: Option<PathBuf>,
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Result<(), CliError> {
    let defaults =
        EvaluateConfig { manifest: default_manifest(), splits: None, checkpoint: None, scores: None, name: None, out: None };
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input))
        .set("splits", a.splits)
        .set("checkpoint", a.checkpoint)
        .set("scores", a.scores)
        .set("name", a.name)
        .set("out", a.out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let out = require_path(&cfg.out, "out")?;
    let input = manifest_path(&cfg.manifest)?;
    let splits_path = require_path(&cfg.splits, "splits")?;
    write_run_json(&parent_dir(&out), "evaluate", &cfg)?;

    let m = load_manifest(&input)?;
    let plan = read_splits(&splits_path)?;
    let base = frames_base(&input);
    let report = match (&cfg.checkpoint, &cfg.scores) {
        (Some(c), None) if c.contains("{fold}") => {
            let mut folds: Vec<FoldReport> = Vec::with_capacity(plan.folds.len());
            for fold in &plan.folds {
                let path = PathBuf::from(c.replace("{fold}", &fold.fold_index.to_string()));
                let scorer = ModelScorer { model: load_checkpoint(&path)?, base: base.clone() };
                let one = SplitPlan { seed: plan.seed, folds: vec![fold.clone()] };
                folds.extend(evaluate(&scorer, &m, &one)?.folds);
            }
            summarize("t2vqa", folds)
        }
        (Some(c), None) => {
            let scorer = ModelScorer { model: load_checkpoint(Path::new(c))?, base };
            evaluate(&scorer, &m, &plan)?
        }
        (None, Some(s)) => {
            let name = cfg.name.clone().unwrap_or_else(|| {
                s.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| "scores".into())
            });
            evaluate(&TableScorer { name, scores: read_scores(s)? }, &m, &plan)?
        }
        (None, None) => return Err(invalid("give --checkpoint or --scores")),
        (Some(_), Some(_)) => return Err(invalid("--checkpoint and --scores are exclusive")),
    };
    write_json(&out, &report)?;
    log::info!(
        "{}: SROCC {:.4} ± {:.4}, PLCC {:.4} ± {:.4}, KRCC {:.4}, RMSE {:.4} -> {}",
        report.scorer,
        report.mean.srocc,
        report.std.srocc,
        report.mean.plcc,
        report.std.plcc,
        report.mean.krcc,
        report.mean.rmse,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- analyze

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyzeConfig {
    manifest: Option<PathBuf>,
    scores: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn analyze_cmd(ctx: &Ctx, a: AnalyzeArgs) -> Result<(), CliError> {
    let defaults = AnalyzeConfig { manifest: default_manifest(), scores: None, out: None };
    let mut o = Overlay::default();
    o.set("manifest", manifest_flag(&a.input)).set("scores", a.scores).set("out", a.out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let out = require_path(&cfg.out, "out")?;
    let input = manifest_path(&cfg.manifest)?;
    create_dir(&out)?;
    write_run_json(&out, "analyze", &cfg)?;

    let m = load_manifest(&input)?;
    let scores = cfg.scores.as_deref().map(read_scores).transpose()?;
    let result = analyze(&m, scores.as_ref())?;
    let csv = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<(), t2vqa_core::eval::AnalysisError>| {
        let mut buf = Vec::new();
        f(&mut buf)?;
        write_file(&out.join(name), &buf)
    };
    csv("generators.csv", &|b| write_table_csv(&result.generators, b))?;
    csv("categories.csv", &|b| write_table_csv(&result.categories, b))?;
    if scores.is_some() {
        csv("scatter.csv", &|b| write_scatter_csv(&result.scatter, b))?;
        if let Some(q) = &result.quartic {
            write_json(&out.join("quartic.json"), q)?;
        }
    }
    log::info!(
        "{} generators, {} categories, {} scatter points -> {}",
        result.generators.len(),
        result.categories.len(),
        result.scatter.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- selftest

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelftestConfig {
    checks: Vec<String>,
    out: PathBuf,
}

#[derive(Serialize)]
struct CheckLine<'a> {
    name: &'a str,
    passed: bool,
    detail: &'a str,
}

fn selftest_cmd(ctx: &Ctx, a: SelftestArgs) -> Result<(), CliError> {
    let defaults = SelftestConfig { checks: vec![], out: PathBuf::from(".") };
    let mut o = Overlay::default();
    o.set("checks", (!a.checks.is_empty()).then_some(a.checks)).set("out", a.out);
    let cfg = resolve(defaults, ctx.file.as_ref(), o)?;
    let known = selftest::check_names();
    if let Some(bad) = cfg.checks.iter().find(|c| !known.contains(&c.as_str())) {
        return Err(invalid(format!("unknown check {bad:?}; known: {}", known.join(", "))));
    }
    create_dir(&cfg.out)?;
    write_run_json(&cfg.out, "selftest", &cfg)?;

    let results = selftest::run(&cfg.checks);
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for r in &results {
        let _ = writeln!(w, "{} {} ({:.2}s): {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.seconds, r.detail);
    }
    let lines: Vec<CheckLine> =
        results.iter().map(|r| CheckLine { name: r.name, passed: r.passed, detail: &r.detail }).collect();
    write_file(&cfg.out.join("selftest.jsonl"), &jsonl(&lines))?;
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(runtime(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}
