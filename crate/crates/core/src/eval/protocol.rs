//! Scorer plug-in interface and the k-fold evaluation protocol.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::logistic::{logistic_fit, FitError, LogisticParams};
use super::metrics::{krcc, plcc, rmse, srocc, MetricError};
use crate::data::{DatasetManifest, SplitPlan, VideoRecord};
use crate::model::QualityModel;

/// Any objective quality predictor. Must be deterministic per `(text, video)`.
pub trait Scorer {
    fn name(&self) -> &str;
    fn score(&self, text: &str, video: &VideoRecord) -> Result<f64, String>;
}

/// Wraps a closure as a scorer.
pub struct FnScorer<F> {
    name: String,
    f: F,
}

impl<F: Fn(&str, &VideoRecord) -> f64> FnScorer<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnScorer { name: name.into(), f }
    }
}

impl<F: Fn(&str, &VideoRecord) -> f64> Scorer for FnScorer<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, text: &str, video: &VideoRecord) -> Result<f64, String> {
        Ok((self.f)(text, video))
    }
}

/// Precomputed scores keyed by video id (e.g. an external baseline's output).
pub struct TableScorer {
    pub name: String,
    pub scores: HashMap<String, f64>,
}

impl Scorer for TableScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, _: &str, video: &VideoRecord) -> Result<f64, String> {
        self.scores.get(&video.video_id).copied().ok_or_else(|| format!("no score for video {}", video.video_id))
    }
}

/// The quality network, reading frames relative to `base`.
pub struct ModelScorer {
    pub model: QualityModel,
    pub base: PathBuf,
}

impl Scorer for ModelScorer {
    fn name(&self) -> &str {
        "t2vqa"
    }

    fn score(&self, text: &str, video: &VideoRecord) -> Result<f64, String> {
        self.model.predict_video(text, video, &self.base).map(|s| s.value()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no MOS for videos: {}", .0.join(", "))]
    MissingMos(Vec<String>),
    #[error("split references unknown videos: {}", .0.join(", "))]
    UnknownVideos(Vec<String>),
    #[error("scorer failed on video {video_id}: {message}")]
    Scorer { video_id: String, message: String },
    #[error("fold {fold}: {source}")]
    Metric { fold: usize, source: MetricError },
    #[error("fold {fold}: {source}")]
    Fit { fold: usize, source: FitError },
    #[error("the split plan has no folds")]
    NoFolds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub n_test: usize,
    pub srocc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    pub logistic: LogisticParams,
    pub logistic_converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub srocc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub folds: Vec<FoldReport>,
    pub mean: MetricSummary,
    /// Sample standard deviation over folds (0 for a single fold).
    pub std: MetricSummary,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scores every test video once, then per fold: SROCC/KRCC on raw scores,
/// PLCC/RMSE after the logistic mapping.
pub fn evaluate(scorer: &dyn Scorer, manifest: &DatasetManifest, splits: &SplitPlan) -> Result<EvalReport, EvalError> {
    if splits.folds.is_empty() {
        return Err(EvalError::NoFolds);
    }
    let mos = manifest.mos_by_video();
    let needed: BTreeSet<&str> =
        splits.folds.iter().flat_map(|f| f.test_video_ids.iter().map(String::as_str)).collect();
    let videos: HashMap<&str, &VideoRecord> = manifest.videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let unknown: Vec<String> = needed.iter().filter(|v| !videos.contains_key(*v)).map(|v| v.to_string()).collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownVideos(unknown));
    }
    let missing: Vec<String> = needed.iter().filter(|v| !mos.contains_key(*v)).map(|v| v.to_string()).collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingMos(missing));
    }
    let prompt_text: HashMap<&str, &str> =
        manifest.prompts.iter().map(|p| (p.prompt_id.as_str(), p.text.as_str())).collect();
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for id in &needed {
        let video = videos[id];
        let text = prompt_text.get(video.prompt_id.as_str()).copied().unwrap_or_default();
        let s = scorer
            .score(text, video)
            .map_err(|message| EvalError::Scorer { video_id: id.to_string(), message })?;
        scores.insert(id, s);
    }
    let mut folds = Vec::with_capacity(splits.folds.len());
    for f in &splits.folds {
        let fold = f.fold_index;
        let pred: Vec<f64> = f.test_video_ids.iter().map(|v| scores[v.as_str()]).collect();
        let target: Vec<f64> = f.test_video_ids.iter().map(|v| mos[v.as_str()]).collect();
        let metric = |r: Result<f64, MetricError>| r.map_err(|source| EvalError::Metric { fold, source });
        let fit = logistic_fit(&pred, &target).map_err(|source| EvalError::Fit { fold, source })?;
        folds.push(FoldReport {
            fold_index: fold,
            n_test: pred.len(),
            srocc: metric(srocc(&pred, &target))?,
            krcc: metric(krcc(&pred, &target))?,
            plcc: metric(plcc(&fit.mapped, &target))?,
            rmse: metric(rmse(&fit.mapped, &target))?,
            logistic: fit.params,
            logistic_converged: fit.converged,
        });
    }
    Ok(summarize(scorer.name(), folds))
}

/// Aggregates fold reports (e.g. from per-fold models) into one report.
pub fn summarize(scorer: impl Into<String>, folds: Vec<FoldReport>) -> EvalReport {
    let stat = |get: fn(&FoldReport) -> f64| mean_std(&folds.iter().map(get).collect::<Vec<_>>());
    let (s, p, k, r) = (stat(|f| f.srocc), stat(|f| f.plcc), stat(|f| f.krcc), stat(|f| f.rmse));
    EvalReport {
        scorer: scorer.into(),
        mean: MetricSummary { srocc: s.0, plcc: p.0, krcc: k.0, rmse: r.0 },
        std: MetricSummary { srocc: s.1, plcc: p.1, krcc: k.1, rmse: r.1 },
        folds,
    }
}
