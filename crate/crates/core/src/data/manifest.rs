use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, MosRecord, PromptRecord, RatingRecord, VideoRecord};

pub const FORMAT_NAME: &str = "t2vqa-manifest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header record on line 1")]
    MissingHeader,
    #[error("line {line}: unsupported manifest format {format:?} version {version}")]
    UnsupportedFormat { line: usize, format: String, version: u32 },
    #[error("line {line}: {kind} {id:?}: {reason}")]
    Invalid { line: usize, kind: &'static str, id: String, reason: String },
    #[error("line {line}: duplicate {kind} id {id:?}")]
    DuplicateId { line: usize, kind: &'static str, id: String },
    #[error("line {line}: {kind} {id:?} references unknown {target} {missing:?}")]
    DanglingReference { line: usize, kind: &'static str, id: String, target: &'static str, missing: String },
    #[error("line {line}: rating by {annotator_id:?} on {video_id:?} has raw_score {raw_score} outside [0, 100]")]
    ScoreOutOfRange { line: usize, annotator_id: String, video_id: String, raw_score: f64 },
    #[error("line {line}: duplicate rating by {annotator_id:?} on {video_id:?}")]
    DuplicateRating { line: usize, annotator_id: String, video_id: String },
    #[error("ratings csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header(Header),
    Prompt(PromptRecord),
    Video(VideoRecord),
    Rating(RatingRecord),
    Mos(MosRecord),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRef<'a> {
    Header(&'a Header),
    Prompt(&'a PromptRecord),
    Video(&'a VideoRecord),
    Rating(&'a RatingRecord),
    Mos(&'a MosRecord),
}

struct Located<'a> {
    prompts: Vec<(usize, &'a PromptRecord)>,
    videos: Vec<(usize, &'a VideoRecord)>,
    ratings: Vec<(usize, &'a RatingRecord)>,
    mos: Vec<(usize, &'a MosRecord)>,
}

/// Parses and fully validates a JSON-lines manifest.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let io_err = |source| ManifestError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut manifest = DatasetManifest::default();
    let mut lines = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut seen_header = false;
    for (i, raw) in reader.lines().enumerate() {
        let line_no = i + 1;
        let raw = raw.map_err(io_err)?;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&raw).map_err(|e| ManifestError::Parse { line: line_no, message: e.to_string() })?;
        match parsed {
            Line::Header(h) => {
                if seen_header {
                    return Err(ManifestError::Parse { line: line_no, message: "second header record".into() });
                }
                if h.format != FORMAT_NAME || h.version != FORMAT_VERSION {
                    return Err(ManifestError::UnsupportedFormat { line: line_no, format: h.format, version: h.version });
                }
                seen_header = true;
                continue;
            }
            _ if !seen_header => return Err(ManifestError::MissingHeader),
            Line::Prompt(p) => {
                manifest.prompts.push(p);
                lines[0].push(line_no);
            }
            Line::Video(v) => {
                manifest.videos.push(v);
                lines[1].push(line_no);
            }
            Line::Rating(r) => {
                manifest.ratings.push(r);
                lines[2].push(line_no);
            }
            Line::Mos(m) => {
                manifest.mos.push(m);
                lines[3].push(line_no);
            }
        }
    }
    if !seen_header {
        return Err(ManifestError::MissingHeader);
    }
    let located = Located {
        prompts: lines[0].iter().copied().zip(&manifest.prompts).collect(),
        videos: lines[1].iter().copied().zip(&manifest.videos).collect(),
        ratings: lines[2].iter().copied().zip(&manifest.ratings).collect(),
        mos: lines[3].iter().copied().zip(&manifest.mos).collect(),
    };
    check(&located)?;
    Ok(manifest)
}

/// Writes the header followed by prompts, videos, ratings and MOS records.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), ManifestError> {
    validate(manifest)?;
    let io_err = |source| ManifestError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let header = Header { format: FORMAT_NAME.into(), version: FORMAT_VERSION };
    let mut write = |line: LineRef<'_>| -> Result<(), ManifestError> {
        let s = serde_json::to_string(&line).expect("manifest records serialize");
        writeln!(out, "{s}").map_err(io_err)
    };
    write(LineRef::Header(&header))?;
    manifest.prompts.iter().try_for_each(|p| write(LineRef::Prompt(p)))?;
    manifest.videos.iter().try_for_each(|v| write(LineRef::Video(v)))?;
    manifest.ratings.iter().try_for_each(|r| write(LineRef::Rating(r)))?;
    manifest.mos.iter().try_for_each(|m| write(LineRef::Mos(m)))?;
    out.flush().map_err(io_err)
}

pub(super) fn validate(manifest: &DatasetManifest) -> Result<(), ManifestError> {
    // Line numbers as save_manifest would write them.
    let mut line = 1;
    let mut next = || {
        line += 1;
        line
    };
    let located = Located {
        prompts: manifest.prompts.iter().map(|p| (next(), p)).collect(),
        videos: manifest.videos.iter().map(|v| (next(), v)).collect(),
        ratings: manifest.ratings.iter().map(|r| (next(), r)).collect(),
        mos: manifest.mos.iter().map(|m| (next(), m)).collect(),
    };
    check(&located)
}

fn check(m: &Located<'_>) -> Result<(), ManifestError> {
    let invalid = |line, kind, id: &str, reason: &str| ManifestError::Invalid {
        line,
        kind,
        id: id.to_string(),
        reason: reason.to_string(),
    };

    let mut prompt_ids = HashSet::new();
    for &(line, p) in &m.prompts {
        if p.prompt_id.is_empty() {
            return Err(invalid(line, "prompt", &p.prompt_id, "empty prompt_id"));
        }
        if p.text.trim().is_empty() {
            return Err(invalid(line, "prompt", &p.prompt_id, "empty text"));
        }
        if !prompt_ids.insert(p.prompt_id.as_str()) {
            return Err(ManifestError::DuplicateId { line, kind: "prompt", id: p.prompt_id.clone() });
        }
    }

    let mut video_ids = HashSet::new();
    for &(line, v) in &m.videos {
        if v.video_id.is_empty() {
            return Err(invalid(line, "video", &v.video_id, "empty video_id"));
        }
        if !video_ids.insert(v.video_id.as_str()) {
            return Err(ManifestError::DuplicateId { line, kind: "video", id: v.video_id.clone() });
        }
        if !prompt_ids.contains(v.prompt_id.as_str()) {
            return Err(ManifestError::DanglingReference {
                line,
                kind: "video",
                id: v.video_id.clone(),
                target: "prompt",
                missing: v.prompt_id.clone(),
            });
        }
        if v.frame_count == 0 {
            return Err(invalid(line, "video", &v.video_id, "frame_count must be at least 1"));
        }
        if v.width < 8 || v.height < 8 {
            return Err(invalid(line, "video", &v.video_id, "width and height must be at least 8"));
        }
        if !(v.fps.is_finite() && v.fps > 0.0) {
            return Err(invalid(line, "video", &v.video_id, "fps must be positive"));
        }
    }

    let mut pairs = HashSet::new();
    for &(line, r) in &m.ratings {
        if !video_ids.contains(r.video_id.as_str()) {
            return Err(ManifestError::DanglingReference {
                line,
                kind: "rating",
                id: r.annotator_id.clone(),
                target: "video",
                missing: r.video_id.clone(),
            });
        }
        if !(0.0..=100.0).contains(&r.raw_score) {
            return Err(ManifestError::ScoreOutOfRange {
                line,
                annotator_id: r.annotator_id.clone(),
                video_id: r.video_id.clone(),
                raw_score: r.raw_score,
            });
        }
        if !pairs.insert((r.annotator_id.as_str(), r.video_id.as_str())) {
            return Err(ManifestError::DuplicateRating {
                line,
                annotator_id: r.annotator_id.clone(),
                video_id: r.video_id.clone(),
            });
        }
    }

    let mut mos_ids = HashSet::new();
    for &(line, r) in &m.mos {
        if !video_ids.contains(r.video_id.as_str()) {
            return Err(ManifestError::DanglingReference {
                line,
                kind: "mos",
                id: r.video_id.clone(),
                target: "video",
                missing: r.video_id.clone(),
            });
        }
        if !mos_ids.insert(r.video_id.as_str()) {
            return Err(ManifestError::DuplicateId { line, kind: "mos", id: r.video_id.clone() });
        }
        if r.n_ratings == 0 {
            return Err(invalid(line, "mos", &r.video_id, "n_ratings must be at least 1"));
        }
        if !r.mos_z.is_finite() {
            return Err(invalid(line, "mos", &r.video_id, "mos_z must be finite"));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct CsvRating {
    annotator_id: String,
    video_id: String,
    raw_score: f64,
    timestamp: String,
}

/// Reads ratings from a CSV file with header `annotator_id,video_id,raw_score,timestamp`.
///
/// Only syntax is checked here; references and ranges are validated when the
/// ratings are merged into a manifest.
pub fn read_ratings_csv(path: &Path) -> Result<Vec<RatingRecord>, ManifestError> {
    let csv_err = |message: String| ManifestError::Csv { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let expected = ["annotator_id", "video_id", "raw_score", "timestamp"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(csv_err(format!("expected header {}", expected.join(","))));
    }
    reader
        .deserialize::<CsvRating>()
        .map(|row| {
            row.map(|r| RatingRecord {
                annotator_id: r.annotator_id,
                video_id: r.video_id,
                raw_score: r.raw_score,
                timestamp: r.timestamp,
            })
            .map_err(|e| csv_err(e.to_string()))
        })
        .collect()
}
