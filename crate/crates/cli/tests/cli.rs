use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use t2vqa_core::data::{load_manifest, save_manifest, DatasetManifest, MosRecord, SplitPlan};
use t2vqa_core::eval::EvalReport;
use t2vqa_core::study::{compute_mosz, DegeneratePolicy};
use t2vqa_core::synth::write_dataset;

const TINY_MODEL: [&str; 10] =
    ["--n-frames", "4", "--frame-size", "16", "--epochs", "1", "--batch-size", "4", "--max-steps", "2"];

struct Fixture {
    dir: tempfile::TempDir,
    manifest: DatasetManifest,
}

impl Fixture {
    fn new(n_videos: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), n_videos, 3, 4, 16, 5).unwrap();
        save_manifest(&manifest, &dir.path().join("manifest.jsonl")).unwrap();
        Fixture { dir, manifest }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn manifest_path(&self) -> String {
        self.path("manifest.jsonl").to_string_lossy().into_owned()
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn t2vqa(args: &[&str]) -> Output {
    t2vqa_env(args, &[])
}

fn t2vqa_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_t2vqa"));
    cmd.args(args).env_remove("T2VQA_SEED").env_remove("T2VQA_DATA").env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&t2vqa(&["--help"])), 0);
    assert_eq!(code(&t2vqa(&["train", "--help"])), 0);
    let out = t2vqa(&["split", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&t2vqa(&[])), 1);
    assert_eq!(code(&t2vqa(&["frobnicate"])), 1);
    assert_eq!(code(&t2vqa(&["split", "--folds"])), 1);
}

#[test]
fn compute_mos_writes_records_and_leaves_input_alone() {
    let fx = Fixture::new(8);
    let before = std::fs::read(fx.path("manifest.jsonl")).unwrap();
    ok(&t2vqa(&["compute-mos", "--manifest", &fx.manifest_path(), "--out", &fx.p("out/mos.jsonl")]));
    let text = std::fs::read_to_string(fx.path("out/mos.jsonl")).unwrap();
    let got: Vec<MosRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(got, compute_mosz(&fx.manifest.ratings, DegeneratePolicy::Abort).unwrap());
    assert_eq!(std::fs::read(fx.path("manifest.jsonl")).unwrap(), before);

    let run = read_json(&fx.path("out/run.json"));
    assert_eq!(run["command"], "compute-mos");
    assert_eq!(run["config"]["policy"], "exclude");
    assert_eq!(run["config"]["manifest"], fx.manifest_path());
}

#[test]
fn compute_mos_can_emit_an_updated_manifest_copy() {
    let fx = Fixture::new(6);
    let mut stripped = fx.manifest.clone();
    stripped.mos.clear();
    save_manifest(&stripped, &fx.path("bare.jsonl")).unwrap();
    ok(&t2vqa(&[
        "compute-mos",
        "--manifest",
        &fx.p("bare.jsonl"),
        "--out",
        &fx.p("mos.jsonl"),
        "--manifest-out",
        &fx.p("with_mos.jsonl"),
    ]));
    assert_eq!(load_manifest(&fx.path("with_mos.jsonl")).unwrap().mos, fx.manifest.mos);
    assert!(load_manifest(&fx.path("bare.jsonl")).unwrap().mos.is_empty());
    // refuses to overwrite its input
    let out = t2vqa(&[
        "compute-mos",
        "--manifest",
        &fx.p("bare.jsonl"),
        "--out",
        &fx.p("mos.jsonl"),
        "--manifest-out",
        &fx.p("bare.jsonl"),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn split_is_deterministic_and_seed_layering_works() {
    let fx = Fixture::new(20);
    let m = fx.manifest_path();
    let a = fx.p("a/splits.json");
    let b = fx.p("b/splits.json");
    ok(&t2vqa(&["split", "--manifest", &m, "--folds", "10", "--test-frac", "0.2", "--seed", "7", "--out", &a]));
    ok(&t2vqa(&["split", "--manifest", &m, "--folds", "10", "--test-frac", "0.2", "--seed", "7", "--out", &b]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    // rerunning into the same place reproduces run.json byte for byte
    let run_json = std::fs::read(fx.path("a/run.json")).unwrap();
    ok(&t2vqa(&["split", "--manifest", &m, "--folds", "10", "--test-frac", "0.2", "--seed", "7", "--out", &a]));
    assert_eq!(std::fs::read(fx.path("a/run.json")).unwrap(), run_json);
    let plan: SplitPlan = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!((plan.seed, plan.folds.len(), plan.folds[0].test_video_ids.len()), (7, 10, 4));

    // environment seed is the default; the flag wins over it
    let env = fx.p("env/splits.json");
    ok(&t2vqa_env(&["split", "--manifest", &m, "--out", &env], &[("T2VQA_SEED", "7")]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&env).unwrap());
    let flag = fx.p("flag/splits.json");
    ok(&t2vqa_env(&["split", "--manifest", &m, "--seed", "8", "--out", &flag], &[("T2VQA_SEED", "7")]));
    assert_eq!(read_json(Path::new(&flag))["seed"], 8);
    assert_eq!(code(&t2vqa_env(&["split", "--manifest", &m, "--out", &flag], &[("T2VQA_SEED", "x")])), 1);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let fx = Fixture::new(20);
    let m = fx.manifest_path();
    std::fs::write(fx.path("cfg.json"), r#"{"folds": 3, "test_frac": 0.25, "seed": 11, "split_by": "prompt"}"#).unwrap();
    let out = fx.p("c/splits.json");
    ok(&t2vqa(&["split", "--config", &fx.p("cfg.json"), "--manifest", &m, "--folds", "4", "--out", &out]));
    let plan: SplitPlan = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((plan.folds.len(), plan.seed), (4, 11));
    let run = read_json(&fx.path("c/run.json"));
    assert_eq!(run["config"]["split_by"], "prompt");
    assert_eq!(run["config"]["test_frac"], 0.25);

    std::fs::write(fx.path("bad.json"), r#"{"fold_count": 3}"#).unwrap();
    assert_eq!(code(&t2vqa(&["split", "--config", &fx.p("bad.json"), "--manifest", &m, "--out", &out])), 1);
    std::fs::write(fx.path("broken.json"), "{not json").unwrap();
    assert_eq!(code(&t2vqa(&["split", "--config", &fx.p("broken.json"), "--manifest", &m, "--out", &out])), 1);
}

#[test]
fn data_root_supplies_the_default_manifest() {
    let fx = Fixture::new(8);
    let root = fx.dir.path().to_string_lossy().into_owned();
    ok(&t2vqa_env(&["compute-mos", "--out", &fx.p("mos.jsonl")], &[("T2VQA_DATA", &root)]));
    assert_eq!(code(&t2vqa(&["compute-mos", "--out", &fx.p("mos.jsonl")])), 1);
    assert_eq!(code(&t2vqa(&["compute-mos", "--manifest", &fx.p("missing.jsonl"), "--out", &fx.p("m.jsonl")])), 1);
}

#[test]
fn ingest_ratings_from_csv_and_jsonl() {
    let fx = Fixture::new(4);
    let mut bare = fx.manifest.clone();
    bare.ratings.clear();
    bare.mos.clear();
    save_manifest(&bare, &fx.path("bare.jsonl")).unwrap();

    let mut csv = String::from("annotator_id,video_id,raw_score,timestamp\n");
    for r in &fx.manifest.ratings {
        csv.push_str(&format!("{},{},{},{}\n", r.annotator_id, r.video_id, r.raw_score, r.timestamp));
    }
    std::fs::write(fx.path("ratings.csv"), csv).unwrap();
    ok(&t2vqa(&["ingest-ratings", "--manifest", &fx.p("bare.jsonl"), "--ratings", &fx.p("ratings.csv"), "--out", &fx.p("csv.jsonl")]));
    assert_eq!(load_manifest(&fx.path("csv.jsonl")).unwrap().ratings, fx.manifest.ratings);

    let lines: String =
        fx.manifest.ratings.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::write(fx.path("ratings.jsonl"), lines).unwrap();
    ok(&t2vqa(&["ingest-ratings", "--manifest", &fx.p("bare.jsonl"), "--ratings", &fx.p("ratings.jsonl"), "--out", &fx.p("jl.jsonl")]));
    assert_eq!(load_manifest(&fx.path("jl.jsonl")).unwrap().ratings, fx.manifest.ratings);

    // ingesting the same ratings twice is a duplicate
    let out = t2vqa(&["ingest-ratings", "--manifest", &fx.p("jl.jsonl"), "--ratings", &fx.p("ratings.jsonl"), "--out", &fx.p("dup.jsonl")]);
    assert_eq!(code(&out), 1);
    assert!(!fx.path("dup.jsonl").exists());
}

#[test]
fn select_prompts_from_a_text_file() {
    let fx = Fixture::new(2);
    let (prompts, _) = t2vqa_core::synth::planted_prompts(5, 6, 1);
    let text: String = prompts.iter().map(|p| p.text.clone() + "\n").collect();
    std::fs::write(fx.path("prompts.txt"), text).unwrap();
    let args = |out: &str| {
        vec![
            "select-prompts".to_string(),
            "--prompts".into(),
            fx.p("prompts.txt"),
            "--k".into(),
            "5".into(),
            "--m".into(),
            "3".into(),
            "--seed".into(),
            "4".into(),
            "--out".into(),
            fx.p(out),
        ]
    };
    let run = |out: &str| t2vqa(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&run("s1/sel.jsonl"));
    ok(&run("s2/sel.jsonl"));
    assert_eq!(std::fs::read(fx.path("s1/sel.jsonl")).unwrap(), std::fs::read(fx.path("s2/sel.jsonl")).unwrap());
    let m = load_manifest(&fx.path("s1/sel.jsonl")).unwrap();
    assert_eq!(m.prompts.len(), 15);
    let mut per_group = std::collections::BTreeMap::new();
    for p in &m.prompts {
        *per_group.entry(p.group_id.unwrap()).or_insert(0) += 1;
    }
    assert_eq!(per_group.values().copied().collect::<Vec<_>>(), vec![3; 5]);

    let out = t2vqa(&["select-prompts", "--prompts", &fx.p("prompts.txt"), "--k", "5", "--m", "7", "--out", &fx.p("x.jsonl")]);
    assert_eq!(code(&out), 1, "undersized group is a validation error");
}

#[test]
fn train_predict_evaluate_analyze_pipeline() {
    let fx = Fixture::new(12);
    let m = fx.manifest_path();
    ok(&t2vqa(&["split", "--manifest", &m, "--folds", "2", "--test-frac", "0.4", "--seed", "3", "--out", &fx.p("splits.json")]));

    let train_args = |out: &str| {
        let mut v: Vec<String> = ["train", "--manifest", &m, "--splits", &fx.p("splits.json"), "--out", &fx.p(out), "--seed", "1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        v.extend(TINY_MODEL.iter().map(|s| s.to_string()));
        v
    };
    let run = |out: &str| t2vqa(&train_args(out).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&run("runs/a"));
    ok(&run("runs/b"));
    for f in ["fold_0/model.ckpt", "fold_1/model.ckpt", "fold_0/train_log.jsonl"] {
        let a = std::fs::read(fx.path(&format!("runs/a/{f}"))).unwrap();
        assert_eq!(a, std::fs::read(fx.path(&format!("runs/b/{f}"))).unwrap(), "{f} differs between identical runs");
    }
    let run_json = read_json(&fx.path("runs/a/run.json"));
    assert_eq!(run_json["config"]["model"]["n_frames"], 4);
    assert_eq!(run_json["config"]["train"]["max_steps"], 2);
    assert_eq!(run_json["config"]["train"]["seed"], 1);
    assert_eq!(run_json["config"]["model"]["seed"], 1);
    let log = std::fs::read_to_string(fx.path("runs/a/fold_0/train_log.jsonl")).unwrap();
    let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.iter().filter(|r| r.get("step").is_some()).count(), 2);
    assert!(records.iter().any(|r| r.get("val_srocc").is_some()));

    ok(&t2vqa(&["predict", "--checkpoint", &fx.p("runs/a/fold_0/model.ckpt"), "--manifest", &m, "--out", &fx.p("pred.jsonl")]));
    let preds = std::fs::read_to_string(fx.path("pred.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 12);
    let first: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(first["video_id"], "v000");
    let score = first["score"].as_f64().unwrap();
    assert!((1.0..=5.0).contains(&score));

    // ad-hoc scoring of the same frames agrees with the manifest path
    let out = t2vqa(&[
        "predict",
        "--checkpoint",
        &fx.p("runs/a/fold_0/model.ckpt"),
        "--text",
        fx.manifest.prompt_text("v000").unwrap(),
        "--frames-dir",
        &fx.p("v000"),
        "--out",
        &fx.p("adhoc.jsonl"),
    ]);
    ok(&out);
    let printed: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert_eq!(printed.to_bits(), score.to_bits());

    ok(&t2vqa(&[
        "evaluate",
        "--manifest",
        &m,
        "--splits",
        &fx.p("splits.json"),
        "--checkpoint",
        &fx.p("runs/a/fold_{fold}/model.ckpt"),
        "--out",
        &fx.p("report.json"),
    ]));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    assert_eq!(report.folds.len(), 2);
    assert_eq!(report.scorer, "t2vqa");
    assert!(report.mean.srocc.abs() <= 1.0 && report.mean.plcc.is_finite());

    ok(&t2vqa(&["analyze", "--manifest", &m, "--scores", &fx.p("pred.jsonl"), "--out", &fx.p("analysis")]));
    // a one-step model barely spreads its scores, so the quartic may be skipped
    for f in ["generators.csv", "categories.csv", "scatter.csv", "run.json"] {
        assert!(fx.path("analysis").join(f).is_file(), "missing {f}");
    }
    let generators = std::fs::read_to_string(fx.path("analysis/generators.csv")).unwrap();
    assert_eq!(generators.lines().count(), 4, "header plus three generators");
}

#[test]
fn train_without_splits_uses_every_rated_video() {
    let fx = Fixture::new(6);
    let (m, out) = (fx.manifest_path(), fx.p("all"));
    let mut args = vec!["train", "--manifest", m.as_str(), "--out", out.as_str()];
    args.extend(TINY_MODEL);
    ok(&t2vqa(&args));
    assert!(fx.path("all/model.ckpt").is_file());
    let log = std::fs::read_to_string(fx.path("all/train_log.jsonl")).unwrap();
    assert!(log.contains("\"val_srocc\":null"));
}

#[test]
fn invalid_training_config_exits_1_and_bad_frames_exit_2() {
    let fx = Fixture::new(6);
    let m = fx.manifest_path();
    let bad = t2vqa(&["train", "--manifest", &m, "--out", &fx.p("x"), "--batch-size", "1"]);
    assert_eq!(code(&bad), 1);
    let bad = t2vqa(&["train", "--manifest", &m, "--out", &fx.p("x"), "--n-fusion-blocks", "0"]);
    assert_eq!(code(&bad), 1);

    std::fs::write(fx.path("v002/frame_0001.png"), b"not a png").unwrap();
    let out = fx.p("y");
    let mut args = vec!["train", "--manifest", m.as_str(), "--out", out.as_str()];
    args.extend(TINY_MODEL);
    assert_eq!(code(&t2vqa(&args)), 2);
}

#[test]
fn evaluate_table_scores_against_mos() {
    let fx = Fixture::new(20);
    let m = fx.manifest_path();
    ok(&t2vqa(&["split", "--manifest", &m, "--folds", "3", "--out", &fx.p("splits.json")]));
    let oracle: String = fx
        .manifest
        .mos
        .iter()
        .map(|r| format!("{{\"video_id\":\"{}\",\"score\":{}}}\n", r.video_id, r.mos_z * 0.1 - 3.0))
        .collect();
    std::fs::write(fx.path("oracle.jsonl"), oracle).unwrap();
    ok(&t2vqa(&[
        "evaluate",
        "--manifest",
        &m,
        "--splits",
        &fx.p("splits.json"),
        "--scores",
        &fx.p("oracle.jsonl"),
        "--out",
        &fx.p("r.json"),
    ]));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(fx.path("r.json")).unwrap()).unwrap();
    assert_eq!(report.scorer, "oracle");
    assert!((report.mean.srocc - 1.0).abs() < 1e-12);
    assert!((report.mean.plcc - 1.0).abs() < 1e-6);

    std::fs::write(fx.path("partial.jsonl"), "{\"video_id\":\"v000\",\"score\":1}\n").unwrap();
    let out = t2vqa(&["evaluate", "--manifest", &m, "--splits", &fx.p("splits.json"), "--scores", &fx.p("partial.jsonl"), "--out", &fx.p("r2.json")]);
    assert_eq!(code(&out), 2, "a scorer missing videos fails at runtime");

    ok(&t2vqa(&["analyze", "--manifest", &m, "--scores", &fx.p("oracle.jsonl"), "--out", &fx.p("analysis")]));
    let q: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.path("analysis/quartic.json")).unwrap()).unwrap();
    let c = q["coefficients"].as_array().unwrap();
    // scores are affine in MOS, so the trend is the inverse line
    assert!((c[1].as_f64().unwrap() - 10.0).abs() < 1e-6, "{q}");
    assert!(c[2..].iter().all(|v| v.as_f64().unwrap().abs() < 1e-6), "{q}");
    assert_eq!(std::fs::read_to_string(fx.path("analysis/scatter.csv")).unwrap().lines().count(), 21);
}

#[test]
fn selftest_passes_and_rejects_unknown_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = t2vqa(&["selftest", "--out", &out_dir]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().count() >= 8 && stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert!(dir.path().join("run.json").is_file());
    assert_eq!(code(&t2vqa(&["selftest", "--out", &out_dir, "no_such_check"])), 1);
    ok(&t2vqa(&["selftest", "--out", &out_dir, "level_score"]));
}

#[test]
fn serve_answers_over_http_until_killed() {
    let fx = Fixture::new(3);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_t2vqa"))
        .args(["serve", "--manifest", &fx.manifest_path(), "--store", &fx.p("store/ratings.jsonl"), "--addr", &addr])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let http = |req: &str| -> Option<String> {
        let mut s = std::net::TcpStream::connect(&addr).ok()?;
        s.write_all(req.as_bytes()).ok()?;
        let mut out = String::new();
        s.read_to_string(&mut out).ok()?;
        Some(out)
    };
    let deadline = Instant::now() + Duration::from_secs(20);
    let progress = loop {
        if let Some(r) = http("GET /api/progress HTTP/1.1\r\nhost: x\r\nconnection: close\r\n\r\n") {
            break r;
        }
        assert!(Instant::now() < deadline, "service did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(progress.starts_with("HTTP/1.1 200"), "{progress}");
    assert!(progress.contains("\"total\":3"));
    let body = r#"{"annotator_id":"a","video_id":"v001","raw_score":42}"#;
    let req = format!(
        "POST /api/rating HTTP/1.1\r\nhost: x\r\nconnection: close\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{body}",
        body.len()
    );
    assert!(http(&req).unwrap().starts_with("HTTP/1.1 200"));
    child.kill().unwrap();
    let _ = child.wait();
    let stored = std::fs::read_to_string(fx.path("store/ratings.jsonl")).unwrap();
    assert_eq!(stored.lines().count(), 1);
    assert!(fx.path("store/run.json").is_file());
}
