//! Per-generator / per-category MOS tables and prediction scatter with a
//! quartic least-squares trend.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DatasetManifest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Set on the row(s) with the highest mean.
    pub highest: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub video_id: String,
    pub pred: f64,
    pub mos: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticFit {
    /// `c0 + c1 x + … + c4 x⁴`
    pub coefficients: [f64; 5],
}

impl QuarticFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub generators: Vec<GroupRow>,
    pub categories: Vec<GroupRow>,
    pub scatter: Vec<ScatterPoint>,
    pub quartic: Option<QuarticFit>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no MOS for videos: {}", .0.join(", "))]
    MissingMos(Vec<String>),
    #[error("quartic fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("quartic fit is singular (fewer than 5 distinct predictions)")]
    Singular,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn rows(groups: BTreeMap<String, Vec<f64>>) -> Vec<GroupRow> {
    let mut out: Vec<GroupRow> = groups
        .into_iter()
        .map(|(name, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            GroupRow { name, n, mean, std, highest: false }
        })
        .collect();
    let best = out.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
    out.iter_mut().filter(|r| r.mean == best).for_each(|r| r.highest = true);
    out
}

/// Least-squares quartic through `(x, y)` via SVD.
pub fn fit_quartic(x: &[f64], y: &[f64]) -> Result<QuarticFit, AnalysisError> {
    if x.len() < 5 {
        return Err(AnalysisError::TooFewPoints(x.len()));
    }
    let a = DMatrix::from_fn(x.len(), 5, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    if svd.singular_values.min() <= max_sv * 1e-13 {
        return Err(AnalysisError::Singular);
    }
    let c = svd.solve(&b, max_sv * 1e-15).map_err(|_| AnalysisError::Singular)?;
    Ok(QuarticFit { coefficients: [c[0], c[1], c[2], c[3], c[4]] })
}

/// Tables over every video with MOS; scatter and quartic when `predictions` is given.
pub fn analyze(manifest: &DatasetManifest, predictions: Option<&HashMap<String, f64>>) -> Result<Analysis, AnalysisError> {
    let mos = manifest.mos_by_video();
    let mut by_gen: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut videos: Vec<_> = manifest.videos.iter().filter(|v| mos.contains_key(v.video_id.as_str())).collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    for v in &videos {
        let m = mos[v.video_id.as_str()];
        by_gen.entry(v.generator.clone()).or_default().push(m);
        let cat = manifest
            .prompt(&v.prompt_id)
            .and_then(|p| p.category)
            .map_or("uncategorized", |c| c.label());
        by_cat.entry(cat.to_string()).or_default().push(m);
    }
    let mut scatter = Vec::new();
    let mut quartic = None;
    if let Some(pred) = predictions {
        let mut ids: Vec<&String> = pred.keys().collect();
        ids.sort();
        let missing: Vec<String> = ids.iter().filter(|id| !mos.contains_key(id.as_str())).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(AnalysisError::MissingMos(missing));
        }
        scatter = ids
            .into_iter()
            .map(|id| ScatterPoint { video_id: id.clone(), pred: pred[id], mos: mos[id.as_str()] })
            .collect();
        let x: Vec<f64> = scatter.iter().map(|p| p.pred).collect();
        let y: Vec<f64> = scatter.iter().map(|p| p.mos).collect();
        quartic = match fit_quartic(&x, &y) {
            Ok(q) => Some(q),
            Err(e) => {
                log::warn!("skipping quartic trend: {e}");
                None
            }
        };
    }
    Ok(Analysis { generators: rows(by_gen), categories: rows(by_cat), scatter, quartic })
}

pub fn write_table_csv(table: &[GroupRow], out: impl Write) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for row in table {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scatter_csv(points: &[ScatterPoint], out: impl Write) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
