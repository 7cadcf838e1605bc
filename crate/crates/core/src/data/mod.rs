//! Persistent records tying prompts, rendered videos, ratings and MOS together.

mod manifest;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use manifest::{load_manifest, read_ratings_csv, save_manifest, ManifestError, FORMAT_NAME, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Nature,
    Human,
    Artificial,
    Animal,
    Object,
    Abstract,
    Others,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Nature,
        Category::Human,
        Category::Artificial,
        Category::Animal,
        Category::Object,
        Category::Abstract,
        Category::Others,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Nature => "nature",
            Category::Human => "human",
            Category::Artificial => "artificial",
            Category::Animal => "animal",
            Category::Object => "object",
            Category::Abstract => "abstract",
            Category::Others => "others",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub prompt_id: String,
    pub generator: String,
    /// Directory of `frame_0000.png`, `frame_0001.png`, ...; relative paths
    /// resolve against the manifest's directory.
    pub frames_path: String,
    pub frame_count: u32,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
}

impl VideoRecord {
    pub fn frames_dir(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.frames_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn frame_file(&self, base: &Path, index: u32) -> PathBuf {
        self.frames_dir(base).join(frame_file_name(index))
    }
}

pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index:04}.png")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub annotator_id: String,
    pub video_id: String,
    pub raw_score: f64,
    pub timestamp: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub video_id: String,
    pub mos_z: f64,
    pub n_ratings: u32,
}

/// Ten-fold style partition plan at video granularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub fold_index: usize,
    pub train_video_ids: Vec<String>,
    pub test_video_ids: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub prompts: Vec<PromptRecord>,
    pub videos: Vec<VideoRecord>,
    pub ratings: Vec<RatingRecord>,
    pub mos: Vec<MosRecord>,
}

impl DatasetManifest {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.prompts.len(), self.videos.len(), self.ratings.len())
    }

    pub fn prompt(&self, prompt_id: &str) -> Option<&PromptRecord> {
        self.prompts.iter().find(|p| p.prompt_id == prompt_id)
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Prompt text of a video, if both records exist.
    pub fn prompt_text(&self, video_id: &str) -> Option<&str> {
        let video = self.video(video_id)?;
        self.prompt(&video.prompt_id).map(|p| p.text.as_str())
    }

    pub fn mos_by_video(&self) -> HashMap<&str, f64> {
        self.mos.iter().map(|m| (m.video_id.as_str(), m.mos_z)).collect()
    }

    /// Checks every record invariant and cross-reference.
    pub fn validate(&self) -> Result<(), ManifestError> {
        manifest::validate(self)
    }
}
