//! Rating-collection service for a live subjective study.
//!
//! Endpoints:
//!
//! - `GET /api/assignment?annotator=ID` — next video for the annotator
//!   (least-rated first), or `204 No Content` once they have rated everything.
//! - `POST /api/rating` with `{annotator_id, video_id, raw_score}` — `200` when
//!   stored, `409` on a repeat submission, `422` on invalid input.
//! - `GET /api/progress` — `{total, rated, per_annotator}`.
//! - `GET /frames/{video_id}/{n}` — the n-th frame image of a video.

mod store;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use t2vqa_core::data::{DatasetManifest, RatingRecord};
use t2vqa_core::study::{AssignmentBook, SubmitError};

pub use store::{read_records, RatingStore, StoreError};

pub type Clock = Arc<dyn Fn() -> SystemTime + Send + Sync>;

struct Session {
    book: AssignmentBook,
    store: RatingStore,
}

#[derive(Clone)]
pub struct AppState {
    manifest: Arc<DatasetManifest>,
    frames_root: Arc<PathBuf>,
    /// Book and store change together under one lock, so issuance and
    /// submission are atomic and writes are serialized.
    session: Arc<Mutex<Session>>,
    clock: Clock,
}

impl AppState {
    /// Opens the rating store at `store_path`, replaying any records it holds.
    pub fn open(manifest: DatasetManifest, frames_root: &FsPath, store_path: &FsPath) -> Result<Self, StoreError> {
        let (store, existing) = RatingStore::open(store_path)?;
        let book = AssignmentBook::new(manifest.videos.iter().map(|v| v.video_id.as_str()), &existing);
        log::info!("rating store {} holds {} records", store_path.display(), existing.len());
        Ok(AppState {
            manifest: Arc::new(manifest),
            frames_root: Arc::new(frames_root.to_path_buf()),
            session: Arc::new(Mutex::new(Session { book, store })),
            clock: Arc::new(SystemTime::now),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Overrides how long an issued assignment stays pending.
    pub fn with_expiry(self, expiry: Duration) -> Self {
        {
            let mut s = self.session.lock().expect("session lock");
            let book = std::mem::replace(&mut s.book, AssignmentBook::new([], &[]));
            s.book = book.with_expiry(expiry);
        }
        self
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AssignmentView {
    pub annotator_id: String,
    pub video_id: String,
    pub prompt_text: String,
    pub frame_urls: Vec<String>,
    pub fps: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RatingSubmission {
    pub annotator_id: String,
    pub video_id: String,
    pub raw_score: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Progress {
    /// Videos in the study.
    pub total: usize,
    /// Videos with at least one stored rating.
    pub rated: usize,
    /// Stored ratings per annotator.
    pub per_annotator: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/assignment", get(assignment))
        .route("/api/rating", post(rating))
        .route("/api/progress", get(progress))
        .route("/frames/{video_id}/{n}", get(frame))
        .with_state(state)
}

async fn assignment(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(annotator) = q.get("annotator").map(|s| s.trim()).filter(|s| !s.is_empty()) else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "missing annotator query parameter");
    };
    let now = (state.clock)();
    let next = state.session.lock().expect("session lock").book.next(annotator, now);
    let Some(a) = next else {
        return StatusCode::NO_CONTENT.into_response();
    };
    let video = state.manifest.video(&a.video_id).expect("book only holds manifest videos");
    Json(AssignmentView {
        annotator_id: a.annotator_id,
        prompt_text: state.manifest.prompt_text(&video.video_id).unwrap_or_default().to_string(),
        frame_urls: (0..video.frame_count).map(|n| format!("/frames/{}/{n}", video.video_id)).collect(),
        fps: video.fps,
        video_id: video.video_id.clone(),
    })
    .into_response()
}

async fn rating(State(state): State<AppState>, body: Bytes) -> Response {
    let sub: RatingSubmission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid rating body: {e}")),
    };
    if sub.annotator_id.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "annotator_id must be non-empty");
    }
    if !(0.0..=100.0).contains(&sub.raw_score) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("raw_score {} outside [0, 100]", sub.raw_score));
    }
    let timestamp = chrono::DateTime::<chrono::Utc>::from((state.clock)())
        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let record = RatingRecord { annotator_id: sub.annotator_id, video_id: sub.video_id, raw_score: sub.raw_score, timestamp };
    let mut session = state.session.lock().expect("session lock");
    match session.book.check_submit(&record.annotator_id, &record.video_id) {
        Err(SubmitError::UnknownVideo(v)) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown video {v}")),
        Err(e @ SubmitError::Duplicate { .. }) => return error(StatusCode::CONFLICT, e.to_string()),
        Ok(()) => {}
    }
    // durable first, then visible
    if let Err(e) = session.store.append(&record) {
        log::error!("{e}");
        return error(StatusCode::INTERNAL_SERVER_ERROR, "could not persist rating");
    }
    session.book.submit(&record.annotator_id, &record.video_id).expect("checked above");
    drop(session);
    Json(record).into_response()
}

async fn progress(State(state): State<AppState>) -> Json<Progress> {
    let session = state.session.lock().expect("session lock");
    Json(Progress {
        total: session.book.total_videos(),
        rated: session.book.rated_videos(),
        per_annotator: session.book.per_annotator(),
    })
}

async fn frame(State(state): State<AppState>, Path((video_id, n)): Path<(String, u32)>) -> Response {
    let Some(video) = state.manifest.video(&video_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown video {video_id}"));
    };
    if n >= video.frame_count {
        return error(StatusCode::NOT_FOUND, format!("video {video_id} has {} frames", video.frame_count));
    }
    let path = video.frame_file(&state.frames_root, n);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(e) => {
            log::warn!("frame {}: {e}", path.display());
            error(StatusCode::NOT_FOUND, "frame file missing")
        }
    }
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("rating service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
