//! Repeated random train/test partitions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, Fold, SplitPlan};

pub const MIN_VIDEOS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitBy {
    /// Each video is placed independently.
    #[default]
    Video,
    /// All videos of one prompt land on the same side.
    Prompt,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("need at least {MIN_VIDEOS} videos to split, got {0}")]
    TooFewVideos(usize),
    #[error("test_fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("n_folds must be at least 1")]
    NoFolds,
}

/// `n_folds` independent partitions; the test side holds `round(n · test_fraction)`
/// videos (prompt-level: the first prompts whose videos reach that count).
pub fn make_splits(
    manifest: &DatasetManifest,
    n_folds: usize,
    test_fraction: f64,
    seed: u64,
    by: SplitBy,
) -> Result<SplitPlan, SplitError> {
    let mut ids: Vec<&str> = manifest.videos.iter().map(|v| v.video_id.as_str()).collect();
    ids.sort_unstable();
    if ids.len() < MIN_VIDEOS {
        return Err(SplitError::TooFewVideos(ids.len()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::BadFraction(test_fraction));
    }
    if n_folds == 0 {
        return Err(SplitError::NoFolds);
    }
    let n_test = ((ids.len() as f64 * test_fraction).round() as usize).clamp(1, ids.len() - 1);
    let mut by_prompt: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for v in &manifest.videos {
        by_prompt.entry(v.prompt_id.as_str()).or_default().push(&v.video_id);
    }
    let prompts: Vec<&Vec<&str>> = by_prompt.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = Vec::with_capacity(n_folds);
    for fold_index in 0..n_folds {
        let mut test: Vec<String> = match by {
            SplitBy::Video => {
                let mut order = ids.clone();
                order.shuffle(&mut rng);
                order[..n_test].iter().map(|s| s.to_string()).collect()
            }
            SplitBy::Prompt => {
                let mut order = prompts.clone();
                order.shuffle(&mut rng);
                let mut test = Vec::new();
                for group in order {
                    if test.len() >= n_test {
                        break;
                    }
                    test.extend(group.iter().map(|s| s.to_string()));
                }
                test
            }
        };
        test.sort_unstable();
        let train = ids.iter().filter(|id| test.binary_search_by(|t| t.as_str().cmp(id)).is_err()).map(|s| s.to_string()).collect();
        folds.push(Fold { fold_index, train_video_ids: train, test_video_ids: test });
    }
    Ok(SplitPlan { seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PromptRecord, VideoRecord};

    fn manifest(n: usize, per_prompt: usize) -> DatasetManifest {
        let mut m = DatasetManifest::default();
        for i in 0..n {
            let pid = format!("p{:03}", i / per_prompt);
            if i % per_prompt == 0 {
                m.prompts.push(PromptRecord { prompt_id: pid.clone(), text: "t".into(), category: None, group_id: None });
            }
            m.videos.push(VideoRecord {
                video_id: format!("v{i:03}"),
                prompt_id: pid,
                generator: "g".into(),
                frames_path: format!("v{i:03}"),
                frame_count: 8,
                width: 32,
                height: 32,
                fps: 8.0,
            });
        }
        m
    }

    #[test]
    fn hundred_videos_split_80_20() {
        let plan = make_splits(&manifest(100, 1), 10, 0.2, 7, SplitBy::Video).unwrap();
        assert_eq!(plan.folds.len(), 10);
        for f in &plan.folds {
            assert_eq!((f.train_video_ids.len(), f.test_video_ids.len()), (80, 20));
        }
        assert_eq!(plan, make_splits(&manifest(100, 1), 10, 0.2, 7, SplitBy::Video).unwrap());
        assert_ne!(plan.folds[0], plan.folds[1]);
    }

    #[test]
    fn prompt_split_keeps_prompts_together() {
        let m = manifest(100, 10);
        let plan = make_splits(&m, 3, 0.2, 1, SplitBy::Prompt).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test_video_ids.len(), 20);
            let test_prompts: std::collections::BTreeSet<_> =
                f.test_video_ids.iter().map(|v| m.video(v).unwrap().prompt_id.clone()).collect();
            assert!(f.train_video_ids.iter().all(|v| !test_prompts.contains(&m.video(v).unwrap().prompt_id)));
        }
    }

    #[test]
    fn errors() {
        assert_eq!(make_splits(&manifest(4, 1), 10, 0.2, 0, SplitBy::Video), Err(SplitError::TooFewVideos(4)));
        assert!(make_splits(&manifest(10, 1), 10, 1.0, 0, SplitBy::Video).is_err());
    }
}
