//! The text-to-video quality network at configurable scale.

pub mod autograd;
mod checkpoint;
mod config;
pub mod frames;
pub mod layers;
mod network;
pub mod params;
pub mod tensor;
pub mod tokenizer;

use std::path::{Path, PathBuf};

pub use autograd::{softmax_expectation, AttnMask, Gradients, Graph, Var};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelConfig, PoolFused, DEFAULT_INSTRUCTION};
pub use frames::{sample_frames, sample_indices, Clip};
pub use network::{window_mask, ForwardVars, QualityModel, LEVEL_WEIGHTS};
pub use params::{Group, ParamId, ParamStore};
pub use tensor::Matrix;

use crate::data::VideoRecord;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot read frame {path}: {source}")]
    Frame {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

/// `n_frames × align_dim` pooled text-frame tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentFeature {
    pub tokens: Matrix,
}

/// `S × fidelity_dim` spatiotemporal tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityFeature {
    pub tokens: Matrix,
}

/// Logits of the five level tokens, bad through excellent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelLogits(pub [f64; 5]);

impl LevelLogits {
    pub fn score(&self) -> QualityScore {
        QualityScore(softmax_expectation(&self.0, &LEVEL_WEIGHTS))
    }
}

/// Expected quality level in `[1, 5]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct QualityScore(f64);

impl QualityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `s = Σ i · softmax(λ)ᵢ` over the five level logits.
pub fn level_score(lambda: &[f64; 5]) -> f64 {
    LevelLogits(*lambda).score().value()
}

/// Outputs of an inference pass, detached from the tape.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub alignment: AlignmentFeature,
    pub fidelity: FidelityFeature,
    pub fused: Matrix,
    pub logits: LevelLogits,
    pub score: QualityScore,
}

impl QualityModel {
    pub fn infer(&self, text: &str, clip: &Clip) -> Result<Prediction, ModelError> {
        let mut g = Graph::new(self.store());
        let v = self.forward(&mut g, text, clip)?;
        let l = g.value(v.level_logits).row(0);
        Ok(Prediction {
            alignment: AlignmentFeature { tokens: g.value(v.alignment).clone() },
            fidelity: FidelityFeature { tokens: g.value(v.fidelity).clone() },
            fused: g.value(v.fused).clone(),
            logits: LevelLogits([l[0], l[1], l[2], l[3], l[4]]),
            score: QualityScore(g.value(v.score).get(0, 0)),
        })
    }

    pub fn predict(&self, text: &str, clip: &Clip) -> Result<QualityScore, ModelError> {
        Ok(self.infer(text, clip)?.score)
    }

    /// Samples the video's frames from disk, then scores them against `text`.
    pub fn predict_video(&self, text: &str, video: &VideoRecord, base: &Path) -> Result<QualityScore, ModelError> {
        let clip = self.load_clip(video, base)?;
        self.predict(text, &clip)
    }

    pub fn load_clip(&self, video: &VideoRecord, base: &Path) -> Result<Clip, ModelError> {
        let c = self.config();
        sample_frames(video, base, c.n_frames, c.frame_size)
    }
}
