//! Loss functions and the training loop.
//!
//! Only trainable parameter groups move; frozen groups enter the tape as
//! constants and are never touched by the optimizer. A run is a pure function
//! of the model, the samples, and [`TrainConfig::seed`].

mod adam;
mod loss;
mod schedule;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use loss::{plcc_loss, rank_loss, total_loss, LossError, LossReport, PlccLoss, RankLoss};
pub use schedule::cosine_lr;

use crate::data::{DatasetManifest, Fold};
use crate::eval::metrics::{plcc, srocc};
use crate::model::{Clip, Gradients, Graph, Matrix, ModelError, QualityModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_lambda: f64,
    pub seed: u64,
    pub plcc_eps: f64,
    /// Stop after this many optimizer steps; the cosine schedule spans the
    /// shorter of this and `epochs × batches`.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 30,
            batch_size: 4,
            loss_lambda: 0.3,
            seed: 0,
            plcc_eps: 1e-8,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.loss_lambda >= 0.0) {
            return bad("loss_lambda must be non-negative");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(self.plcc_eps > 0.0) {
            return bad("plcc_eps must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set needs at least 2 videos, got {0}")]
    TooFewSamples(usize),
    #[error("video {0} is not in the manifest")]
    UnknownVideo(String),
    #[error("video {0} has no MOS record")]
    MissingMos(String),
    #[error("non-finite loss or gradient at step {step} (batch: {})", video_ids.join(", "))]
    NonFinite { step: usize, video_ids: Vec<String> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// A decoded training example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub video_id: String,
    pub text: String,
    pub clip: Clip,
    pub target: f64,
}

/// Loads frames and MOS targets for `video_ids`, in the given order.
pub fn load_samples(
    manifest: &DatasetManifest,
    base: &Path,
    video_ids: &[String],
    model: &QualityModel,
) -> Result<Vec<Sample>, TrainError> {
    let mos = manifest.mos_by_video();
    video_ids
        .iter()
        .map(|id| {
            let video = manifest.video(id).ok_or_else(|| TrainError::UnknownVideo(id.clone()))?;
            let target = *mos.get(id.as_str()).ok_or_else(|| TrainError::MissingMos(id.clone()))?;
            let text = manifest.prompt_text(id).unwrap_or_default().to_string();
            Ok(Sample { video_id: id.clone(), text, clip: model.load_clip(video, base)?, target })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub plcc_part: f64,
    pub rank_part: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub val_srocc: Option<f64>,
    pub val_plcc: Option<f64>,
}

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Step(StepLog),
    Epoch(EpochLog),
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: QualityModel,
    pub logs: Vec<LogRecord>,
    pub steps: usize,
}

/// Splits a permutation into batches; a trailing singleton joins the batch before it.
fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    batches(&(0..n).collect::<Vec<_>>(), batch_size).len()
}

/// Forward + backward over one batch. Returns the loss report and summed gradients.
pub fn batch_gradients(
    model: &QualityModel,
    batch: &[&Sample],
    cfg: &TrainConfig,
    step: usize,
) -> Result<(LossReport, Gradients), TrainError> {
    let mut graphs = Vec::with_capacity(batch.len());
    for s in batch {
        let mut g = Graph::new(model.store());
        let v = model.forward(&mut g, &s.text, &s.clip)?;
        graphs.push((g, v.score));
    }
    let pred: Vec<f64> = graphs.iter().map(|(g, v)| g.value(*v).get(0, 0)).collect();
    let target: Vec<f64> = batch.iter().map(|s| s.target).collect();
    let (report, dpred) = total_loss(&pred, &target, cfg.loss_lambda, cfg.plcc_eps, step)?;
    let mut grads = Gradients::default();
    for ((g, v), d) in graphs.iter().zip(dpred) {
        grads.merge(&g.backward(&[(*v, Matrix::filled(1, 1, d))]));
    }
    Ok((report, grads))
}

/// Scores every sample with the current parameters.
pub fn predict_samples(model: &QualityModel, samples: &[Sample]) -> Result<Vec<f64>, ModelError> {
    samples.iter().map(|s| Ok(model.predict(&s.text, &s.clip)?.value())).collect()
}

fn validation(model: &QualityModel, val: &[Sample]) -> Result<(Option<f64>, Option<f64>), ModelError> {
    if val.len() < 2 {
        return Ok((None, None));
    }
    let pred = predict_samples(model, val)?;
    let mos: Vec<f64> = val.iter().map(|s| s.target).collect();
    Ok((srocc(&pred, &mos).ok(), plcc(&pred, &mos).ok()))
}

/// Trains on pre-loaded samples, logging each step and each epoch to `sink`.
pub fn train_samples(
    mut model: QualityModel,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(TrainError::TooFewSamples(train.len()));
    }
    let per_epoch = batches_per_epoch(train.len(), cfg.batch_size);
    let planned = per_epoch * cfg.epochs;
    let total_steps = cfg.max_steps.map_or(planned, |m| m.min(planned));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::default();
    let mut logs = Vec::new();
    let mut emit = |rec: LogRecord, logs: &mut Vec<LogRecord>| {
        sink(&rec);
        logs.push(rec);
    };
    let mut step = 0;
    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for idx in batches(&order, cfg.batch_size) {
            if step >= total_steps {
                break 'epochs;
            }
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let (report, grads) = batch_gradients(&model, &batch, cfg, step)?;
            if !report.total.is_finite() || !grads.all_finite() {
                let video_ids = batch.iter().map(|s| s.video_id.clone()).collect();
                log::error!("non-finite loss at step {step}");
                return Err(TrainError::NonFinite { step, video_ids });
            }
            let lr = cosine_lr(cfg.learning_rate, step, total_steps);
            adam.step(model.store_mut(), &grads, lr);
            emit(
                LogRecord::Step(StepLog {
                    step,
                    lr,
                    total: report.total,
                    plcc_part: report.plcc_part,
                    rank_part: report.rank_part,
                }),
                &mut logs,
            );
            step += 1;
        }
        let (val_srocc, val_plcc) = validation(&model, val)?;
        log::info!("epoch {epoch}: val_srocc={val_srocc:?}");
        emit(LogRecord::Epoch(EpochLog { epoch, val_srocc, val_plcc }), &mut logs);
    }
    Ok(TrainOutcome { model, logs, steps: step })
}

/// Trains on one fold of `manifest`, validating on the fold's test videos.
pub fn train(
    manifest: &DatasetManifest,
    base: &Path,
    fold: &Fold,
    model: QualityModel,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let train_set = load_samples(manifest, base, &fold.train_video_ids, &model)?;
    let val_set = load_samples(manifest, base, &fold.test_video_ids, &model)?;
    train_samples(model, &train_set, &val_set, cfg, sink)
}
