//! Least-rated-first assignment bookkeeping for a live rating session.
//!
//! Pure state machine; the caller supplies the clock and serializes access.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, SystemTime};

use crate::data::RatingRecord;

pub const PENDING_EXPIRY: Duration = Duration::from_secs(30 * 60);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignmentState {
    Pending,
    Submitted,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub annotator_id: String,
    pub video_id: String,
    pub issued_at: SystemTime,
    pub state: AssignmentState,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("annotator {annotator_id} already rated {video_id}")]
    Duplicate { annotator_id: String, video_id: String },
}

#[derive(Clone, Debug)]
pub struct AssignmentBook {
    /// Stored ratings per video.
    counts: BTreeMap<String, usize>,
    rated: BTreeSet<(String, String)>,
    /// Live pending assignment per annotator.
    pending: BTreeMap<String, Assignment>,
    expiry: Duration,
}

impl AssignmentBook {
    pub fn new<'a>(video_ids: impl IntoIterator<Item = &'a str>, existing: &[RatingRecord]) -> Self {
        let mut book = AssignmentBook {
            counts: video_ids.into_iter().map(|v| (v.to_string(), 0)).collect(),
            rated: BTreeSet::new(),
            pending: BTreeMap::new(),
            expiry: PENDING_EXPIRY,
        };
        for r in existing {
            // replaying a store: ignore records that no longer apply
            let _ = book.record(&r.annotator_id, &r.video_id);
        }
        book
    }

    pub fn with_expiry(mut self, expiry: Duration) -> Self {
        self.expiry = expiry;
        self
    }

    pub fn total_videos(&self) -> usize {
        self.counts.len()
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.counts.contains_key(video_id)
    }

    pub fn ratings_for(&self, video_id: &str) -> usize {
        self.counts.get(video_id).copied().unwrap_or(0)
    }

    pub fn has_rated(&self, annotator_id: &str, video_id: &str) -> bool {
        self.rated.contains(&(annotator_id.to_string(), video_id.to_string()))
    }

    /// Videos with at least one stored rating.
    pub fn rated_videos(&self) -> usize {
        self.counts.values().filter(|c| **c > 0).count()
    }

    /// Stored ratings per annotator.
    pub fn per_annotator(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (a, _) in &self.rated {
            *out.entry(a.clone()).or_insert(0) += 1;
        }
        out
    }

    fn record(&mut self, annotator_id: &str, video_id: &str) -> Result<(), SubmitError> {
        let count = self.counts.get_mut(video_id).ok_or_else(|| SubmitError::UnknownVideo(video_id.to_string()))?;
        if !self.rated.insert((annotator_id.to_string(), video_id.to_string())) {
            return Err(SubmitError::Duplicate { annotator_id: annotator_id.to_string(), video_id: video_id.to_string() });
        }
        *count += 1;
        Ok(())
    }

    /// Validates a submission without applying it.
    pub fn check_submit(&self, annotator_id: &str, video_id: &str) -> Result<(), SubmitError> {
        if !self.contains(video_id) {
            return Err(SubmitError::UnknownVideo(video_id.to_string()));
        }
        if self.has_rated(annotator_id, video_id) {
            return Err(SubmitError::Duplicate { annotator_id: annotator_id.to_string(), video_id: video_id.to_string() });
        }
        Ok(())
    }

    /// Records a rating and closes the annotator's pending assignment if it matches.
    pub fn submit(&mut self, annotator_id: &str, video_id: &str) -> Result<(), SubmitError> {
        self.record(annotator_id, video_id)?;
        if self.pending.get(annotator_id).is_some_and(|a| a.video_id == video_id) {
            self.pending.remove(annotator_id);
        }
        Ok(())
    }

    /// Oracle-friendly choice: the unrated video with the fewest stored
    /// ratings, ties broken by video id.
    pub fn least_rated_unrated(&self, annotator_id: &str) -> Option<&str> {
        self.counts
            .iter()
            .filter(|(v, _)| !self.has_rated(annotator_id, v))
            .min_by_key(|(v, c)| (**c, v.as_str()))
            .map(|(v, _)| v.as_str())
    }

    /// The annotator's live assignment, or a fresh one. `None` once every
    /// video has been rated by this annotator.
    pub fn next(&mut self, annotator_id: &str, now: SystemTime) -> Option<Assignment> {
        if let Some(a) = self.pending.get(annotator_id) {
            let age = now.duration_since(a.issued_at).unwrap_or(Duration::ZERO);
            if age < self.expiry && !self.has_rated(annotator_id, &a.video_id) {
                return Some(a.clone());
            }
            let mut stale = self.pending.remove(annotator_id).expect("present");
            stale.state = AssignmentState::Expired;
            log::debug!("assignment {}/{} expired", stale.annotator_id, stale.video_id);
        }
        let video_id = self.least_rated_unrated(annotator_id)?.to_string();
        let a = Assignment {
            annotator_id: annotator_id.to_string(),
            video_id,
            issued_at: now,
            state: AssignmentState::Pending,
        };
        self.pending.insert(annotator_id.to_string(), a.clone());
        Some(a)
    }

    pub fn pending(&self, annotator_id: &str) -> Option<&Assignment> {
        self.pending.get(annotator_id)
    }
}
