//! Subjective-score normalization: per-annotator z-scoring, rescaling to mean
//! 50 / std 16.6, and per-video averaging.
//!
//! Every sum runs in a canonical (sorted) order, so results do not depend on
//! the order ratings arrive in.

mod assign;

use std::collections::{BTreeMap, BTreeSet};

pub use assign::{Assignment, AssignmentBook, AssignmentState, SubmitError, PENDING_EXPIRY};

use crate::data::{MosRecord, RatingRecord};

pub const RESCALED_MEAN: f64 = 50.0;
pub const RESCALED_STD: f64 = 16.6;

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatorStats {
    pub annotator_id: String,
    pub mu: f64,
    /// Sample standard deviation (denominator `M − 1`).
    pub sigma: f64,
    pub m_rated: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DegenerateReason {
    ConstantScores,
    TooFewRatings(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("annotator {annotator_id} cannot be normalized: {reason:?}")]
pub struct DegenerateAnnotator {
    pub annotator_id: String,
    pub reason: DegenerateReason,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Drop the annotator's ratings and log a warning.
    #[default]
    ExcludeWithWarning,
    Abort,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Degenerate(#[from] DegenerateAnnotator),
    #[error("video {0} has no ratings from a usable annotator")]
    NoValidRatings(String),
    #[error("annotator {annotator_id} rated video {video_id} more than once")]
    DuplicateRating { annotator_id: String, video_id: String },
    #[error("rating by {annotator_id} for {video_id} is not finite")]
    NonFinite { annotator_id: String, video_id: String },
}

/// `Res(z) = 50 + 16.6 z`.
pub fn rescale(z: f64) -> f64 {
    RESCALED_MEAN + RESCALED_STD * z
}

/// Per-annotator `(video_id → raw score)`, both levels sorted.
type Table<'a> = BTreeMap<&'a str, BTreeMap<&'a str, f64>>;

fn tabulate(ratings: &[RatingRecord]) -> Result<Table<'_>, StudyError> {
    let mut table: Table = BTreeMap::new();
    for r in ratings {
        if !r.raw_score.is_finite() {
            return Err(StudyError::NonFinite { annotator_id: r.annotator_id.clone(), video_id: r.video_id.clone() });
        }
        let row = table.entry(&r.annotator_id).or_default();
        if row.insert(&r.video_id, r.raw_score).is_some() {
            return Err(StudyError::DuplicateRating {
                annotator_id: r.annotator_id.clone(),
                video_id: r.video_id.clone(),
            });
        }
    }
    Ok(table)
}

fn stats_of(annotator_id: &str, scores: &BTreeMap<&str, f64>) -> Result<AnnotatorStats, DegenerateAnnotator> {
    let degenerate = |reason| DegenerateAnnotator { annotator_id: annotator_id.to_string(), reason };
    let m = scores.len();
    if m < 2 {
        return Err(degenerate(DegenerateReason::TooFewRatings(m)));
    }
    let mu = scores.values().sum::<f64>() / m as f64;
    let ss: f64 = scores.values().map(|r| (r - mu) * (r - mu)).sum();
    let sigma = (ss / (m - 1) as f64).sqrt();
    if sigma == 0.0 {
        return Err(degenerate(DegenerateReason::ConstantScores));
    }
    Ok(AnnotatorStats { annotator_id: annotator_id.to_string(), mu, sigma, m_rated: m })
}

/// Strict per-annotator statistics, sorted by annotator id; any degenerate
/// annotator is an error.
pub fn annotator_stats(ratings: &[RatingRecord]) -> Result<Vec<AnnotatorStats>, StudyError> {
    let table = tabulate(ratings)?;
    table.iter().map(|(a, s)| stats_of(a, s).map_err(StudyError::from)).collect()
}

/// Statistics for usable annotators plus the list of degenerate ones.
pub fn annotator_stats_lenient(
    ratings: &[RatingRecord],
) -> Result<(Vec<AnnotatorStats>, Vec<DegenerateAnnotator>), StudyError> {
    let table = tabulate(ratings)?;
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (a, s) in &table {
        match stats_of(a, s) {
            Ok(st) => ok.push(st),
            Err(d) => bad.push(d),
        }
    }
    Ok((ok, bad))
}

/// Decides whether an annotator's ratings enter the average. The default
/// keeps everyone.
pub trait Screen {
    fn keep(&self, stats: &AnnotatorStats) -> bool;
}

pub struct PassThrough;

impl Screen for PassThrough {
    fn keep(&self, _: &AnnotatorStats) -> bool {
        true
    }
}

impl<F: Fn(&AnnotatorStats) -> bool> Screen for F {
    fn keep(&self, stats: &AnnotatorStats) -> bool {
        self(stats)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MosOutcome {
    /// Sorted by video id.
    pub records: Vec<MosRecord>,
    pub excluded: Vec<DegenerateAnnotator>,
    pub screened_out: Vec<String>,
}

pub fn compute_mosz(ratings: &[RatingRecord], policy: DegeneratePolicy) -> Result<Vec<MosRecord>, StudyError> {
    Ok(compute_mosz_screened(ratings, policy, &PassThrough)?.records)
}

pub fn compute_mosz_screened(
    ratings: &[RatingRecord],
    policy: DegeneratePolicy,
    screen: &dyn Screen,
) -> Result<MosOutcome, StudyError> {
    let table = tabulate(ratings)?;
    let mut excluded = Vec::new();
    let mut screened_out = Vec::new();
    let mut per_video: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let all_videos: BTreeSet<&str> = table.values().flat_map(|row| row.keys().copied()).collect();
    for (annotator, row) in &table {
        let stats = match stats_of(annotator, row) {
            Ok(s) => s,
            Err(d) if policy == DegeneratePolicy::Abort => return Err(d.into()),
            Err(d) => {
                log::warn!("excluding {d}");
                excluded.push(d);
                continue;
            }
        };
        if !screen.keep(&stats) {
            screened_out.push(stats.annotator_id);
            continue;
        }
        for (video, raw) in row {
            per_video.entry(video).or_default().push(rescale((raw - stats.mu) / stats.sigma));
        }
    }
    let mut records = Vec::with_capacity(all_videos.len());
    for video in all_videos {
        let scores = per_video.get(video).ok_or_else(|| StudyError::NoValidRatings(video.to_string()))?;
        records.push(MosRecord {
            video_id: video.to_string(),
            mos_z: scores.iter().sum::<f64>() / scores.len() as f64,
            n_ratings: scores.len() as u32,
        });
    }
    Ok(MosOutcome { records, excluded, screened_out })
}
