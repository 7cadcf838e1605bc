//! Prompt curation: embed, cluster by cosine similarity, sample per cluster.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::PromptRecord;
use crate::hash::{word_hash, words};
use crate::model::Matrix;

pub const DEFAULT_EMBED_DIM: usize = 384;
pub const MAX_ITERATIONS: usize = 100;
/// Independent seedings per clustering; the one with the highest total
/// similarity to its centroids wins.
pub const RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("no prompts to embed")]
    Empty,
    #[error("embedder failed on prompt {prompt_id}: {message}")]
    Embedder { prompt_id: String, message: String },
    #[error("prompt {prompt_id} embedded to {got} dimensions, expected {expected}")]
    Dimension { prompt_id: String, got: usize, expected: usize },
    #[error("prompt {0} has a zero embedding and cannot be normalized")]
    ZeroVector(String),
    #[error("cannot form {k} groups from {p} prompts")]
    BadK { k: usize, p: usize },
    #[error("group {group} has {size} prompts, fewer than the {m} requested")]
    UndersizedGroup { group: usize, size: usize, m: usize },
}

pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, String>;
}

/// Signed feature hashing of lowercase words.
#[derive(Clone, Copy, Debug)]
pub struct HashedBagOfWords {
    pub dim: usize,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        HashedBagOfWords { dim: DEFAULT_EMBED_DIM }
    }
}

impl Embedder for HashedBagOfWords {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, String> {
        let mut v = vec![0.0; self.dim];
        for w in words(text) {
            let h = word_hash(&w);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        Ok(v)
    }
}

/// Unit-normalized prompt embeddings, one row per prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub prompt_ids: Vec<String>,
    pub vectors: Matrix,
}

impl EmbeddingMatrix {
    /// Normalizes the rows of raw vectors.
    pub fn from_rows(prompt_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, PromptError> {
        let Some(dim) = rows.first().map(Vec::len) else {
            return Err(PromptError::Empty);
        };
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in prompt_ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(PromptError::Dimension { prompt_id: id.clone(), got: row.len(), expected: dim });
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(PromptError::ZeroVector(id.clone()));
            }
            data.extend(row.iter().map(|x| x / norm));
        }
        Ok(EmbeddingMatrix { vectors: Matrix::from_vec(rows.len(), dim, data), prompt_ids })
    }

    pub fn len(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompt_ids.is_empty()
    }
}

pub fn embed_prompts(prompts: &[PromptRecord], embedder: &dyn Embedder) -> Result<EmbeddingMatrix, PromptError> {
    if prompts.is_empty() {
        return Err(PromptError::Empty);
    }
    let mut rows = Vec::with_capacity(prompts.len());
    for p in prompts {
        let v = embedder
            .embed(&p.text)
            .map_err(|message| PromptError::Embedder { prompt_id: p.prompt_id.clone(), message })?;
        if v.len() != embedder.dim() {
            return Err(PromptError::Dimension { prompt_id: p.prompt_id.clone(), got: v.len(), expected: embedder.dim() });
        }
        rows.push(v);
    }
    EmbeddingMatrix::from_rows(prompts.iter().map(|p| p.prompt_id.clone()).collect(), rows)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupAssignment {
    pub prompt_ids: Vec<String>,
    /// Group index of each prompt, parallel to `prompt_ids`.
    pub groups: Vec<usize>,
    pub k: usize,
}

impl GroupAssignment {
    pub fn members(&self, group: usize) -> Vec<&str> {
        self.prompt_ids
            .iter()
            .zip(&self.groups)
            .filter(|(_, g)| **g == group)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Similarities closer than this count as tied, so rounding noise (e.g. from
/// rescaled embeddings) cannot flip a choice between equivalent candidates.
const TIE_EPS: f64 = 1e-12;

/// Cosine distance with rounding noise around coincident points flushed to 0.
fn cos_distance(a: &[f64], b: &[f64]) -> f64 {
    let d = 1.0 - dot(a, b);
    if d < TIE_EPS {
        0.0
    } else {
        d
    }
}

fn clearly_less(a: f64, b: f64) -> bool {
    a < b - TIE_EPS * b.abs().max(1.0)
}

/// Best centroid and its similarity; ties go to the lower index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let s = dot(x, mu);
        if best.1 == f64::NEG_INFINITY || clearly_less(best.1, s) {
            best = (c, s);
        }
    }
    best
}

/// Draws an index with probability proportional to `weights`.
fn draw(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 && target < *w {
            return i;
        }
        target -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).expect("positive total")
}

/// Greedy k-means++ seeding with cosine distance `1 − cos`: each round draws
/// `2 + ln k` candidates by squared distance and keeps the one that most
/// lowers the total potential.
fn seed_centroids(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let p = x.rows();
    let trials = 2 + (k as f64).ln() as usize;
    let first = rng.random_range(0..p);
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = (0..p).map(|i| cos_distance(x.row(i), x.row(first))).collect();
    while chosen.len() < k {
        let weights: Vec<f64> = dist.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // every remaining point coincides with a chosen centroid
            let next = (0..p).find(|i| !chosen.contains(i)).expect("k <= p");
            chosen.push(next);
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let c = draw(&weights, total, rng);
            let updated: Vec<f64> =
                (0..p).map(|i| dist[i].min(cos_distance(x.row(i), x.row(c)))).collect();
            let potential: f64 = updated.iter().map(|d| d * d).sum();
            if best.as_ref().is_none_or(|b| clearly_less(potential, b.0)) {
                best = Some((potential, c, updated));
            }
        }
        let (_, next, updated) = best.expect("at least one trial");
        chosen.push(next);
        dist = updated;
    }
    chosen.iter().map(|&i| x.row(i).to_vec()).collect()
}

/// Spherical k-means with k-means++ seeding, [`RESTARTS`] runs of at most
/// [`MAX_ITERATIONS`] rounds each.
pub fn cluster_prompts(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<GroupAssignment, PromptError> {
    let p = emb.len();
    if k == 0 || k > p {
        return Err(PromptError::BadK { k, p });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..RESTARTS {
        let (objective, groups) = lloyd(&emb.vectors, k, &mut rng);
        if best.as_ref().is_none_or(|b| clearly_less(b.0, objective)) {
            best = Some((objective, groups));
        }
    }
    let (_, groups) = best.expect("at least one restart");
    Ok(GroupAssignment { prompt_ids: emb.prompt_ids.clone(), groups, k })
}

fn centroids_of(x: &Matrix, groups: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; x.cols()]; k];
    for (i, &g) in groups.iter().enumerate() {
        sums[g].iter_mut().zip(x.row(i)).for_each(|(s, v)| *s += v);
    }
    for s in &mut sums {
        normalize(s);
    }
    sums
}

/// One seeded run; returns the total similarity to the assigned centroids.
fn lloyd(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let p = x.rows();
    let mut centroids = seed_centroids(x, k, rng);
    let mut groups: Vec<usize> = (0..p).map(|i| nearest(x.row(i), &centroids).0).collect();
    for iteration in 0..MAX_ITERATIONS {
        repair_empty(x, &mut groups, &centroids, k);
        centroids = centroids_of(x, &groups, k);
        let next: Vec<usize> = (0..p).map(|i| nearest(x.row(i), &centroids).0).collect();
        if next == groups {
            log::debug!("spherical k-means converged after {} iterations", iteration + 1);
            break;
        }
        groups = next;
    }
    repair_empty(x, &mut groups, &centroids, k);
    let centroids = centroids_of(x, &groups, k);
    let objective = groups.iter().enumerate().map(|(i, &g)| dot(x.row(i), &centroids[g])).sum();
    (objective, groups)
}

/// Moves the point farthest from its own centroid into each empty group.
fn repair_empty(x: &Matrix, groups: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        groups.iter().for_each(|&g| sizes[g] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..groups.len())
            .filter(|&i| sizes[groups[i]] > 1)
            .min_by(|&a, &b| {
                let sa = dot(x.row(a), &centroids[groups[a]]);
                let sb = dot(x.row(b), &centroids[groups[b]]);
                if clearly_less(sa, sb) {
                    std::cmp::Ordering::Less
                } else if clearly_less(sb, sa) {
                    std::cmp::Ordering::Greater
                } else {
                    a.cmp(&b)
                }
            })
            .expect("k <= p leaves a group with two members");
        groups[far] = empty;
    }
}

/// Draws `m` prompts from every group, group by group.
pub fn sample_per_group(assign: &GroupAssignment, m: usize, seed: u64) -> Result<Vec<String>, PromptError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(assign.k * m);
    for group in 0..assign.k {
        let mut members = assign.members(group);
        if members.len() < m {
            return Err(PromptError::UndersizedGroup { group, size: members.len(), m });
        }
        members.shuffle(&mut rng);
        out.extend(members[..m].iter().map(|s| s.to_string()));
    }
    Ok(out)
}
