//! Seeded synthetic data: rating tables, brightness-coded clips, planted
//! prompt bundles, and small on-disk datasets. Used by the test suites and
//! the `selftest` command.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Category, DatasetManifest, PromptRecord, RatingRecord, VideoRecord};
use crate::model::Clip;
use crate::study::{compute_mosz, DegeneratePolicy};
use crate::training::Sample;

/// Full-coverage table: every annotator rates every video with a personal
/// offset and scale, clamped to `[0, 100]`.
pub fn rating_table(n_annotators: usize, n_videos: usize, seed: u64) -> Vec<RatingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quality: Vec<f64> = (0..n_videos).map(|_| rng.random_range(10.0..90.0)).collect();
    let mut out = Vec::with_capacity(n_annotators * n_videos);
    for a in 0..n_annotators {
        let bias = rng.random_range(-10.0..10.0);
        let scale = rng.random_range(0.5..1.2);
        for (v, q) in quality.iter().enumerate() {
            let noise: f64 = rng.random_range(-8.0..8.0);
            out.push(RatingRecord {
                annotator_id: format!("a{a:02}"),
                video_id: format!("v{v:03}"),
                raw_score: ((q - 50.0) * scale + 50.0 + bias + noise).clamp(0.0, 100.0),
                timestamp: "2024-01-01T00:00:00Z".into(),
            });
        }
    }
    out
}

/// Mean brightness `level` plus mild pixel texture, identical across channels.
pub fn brightness_clip(n_frames: usize, size: usize, level: f64, seed: u64) -> Clip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Clip::from_fn(n_frames, size, |_, _, _, _| (level + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
}

/// Target score as a fixed monotone (decreasing) function of brightness.
///
/// Decreasing on purpose: an untrained network already tends to rank clips by
/// raw brightness, so an increasing target would be satisfied without learning.
pub fn brightness_target(level: f64) -> f64 {
    80.0 - 60.0 * level.powf(1.5)
}

/// `n` clips with evenly spread brightness in `[0.1, 0.9]`, shuffled.
pub fn brightness_samples(n: usize, n_frames: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<f64> = (0..n).map(|i| 0.1 + 0.8 * i as f64 / (n - 1).max(1) as f64).collect();
    rand::seq::SliceRandom::shuffle(levels.as_mut_slice(), &mut rng);
    levels
        .iter()
        .enumerate()
        .map(|(i, &level)| Sample {
            video_id: format!("v{i:03}"),
            text: "a synthetic clip".into(),
            clip: brightness_clip(n_frames, size, level, seed ^ (i as u64 + 1)),
            target: brightness_target(level),
        })
        .collect()
}

/// `n_bundles × per_bundle` prompts; each bundle shares eight anchor words and
/// adds one filler word, so within-bundle cosine similarity is high.
pub fn planted_prompts(n_bundles: usize, per_bundle: usize, seed: u64) -> (Vec<PromptRecord>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prompts = Vec::with_capacity(n_bundles * per_bundle);
    let mut truth = Vec::with_capacity(n_bundles * per_bundle);
    for b in 0..n_bundles {
        let anchors: Vec<String> = (0..8).map(|j| format!("bundle{b}word{j}")).collect();
        for i in 0..per_bundle {
            let filler = format!("filler{}", rng.random_range(0..1_000_000u32));
            prompts.push(PromptRecord {
                prompt_id: format!("p{:05}", b * per_bundle + i),
                text: format!("{} {filler}", anchors.join(" ")),
                category: None,
                group_id: None,
            });
            truth.push(b);
        }
    }
    let mut order: Vec<usize> = (0..prompts.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    (order.iter().map(|&i| prompts[i].clone()).collect(), order.iter().map(|&i| truth[i]).collect())
}

/// Writes a complete dataset under `dir`: PNG frames, prompts, videos, a
/// full-coverage rating table driven by brightness, and the resulting MOS.
///
/// Returns the manifest; frames live at `dir/<frames_path>/frame_NNNN.png`.
pub fn write_dataset(
    dir: &Path,
    n_videos: usize,
    n_annotators: usize,
    frames: u32,
    size: u32,
    seed: u64,
) -> std::io::Result<DatasetManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 4.0).expect("valid normal");
    let generators = ["gen_a", "gen_b", "gen_c"];
    let mut m = DatasetManifest::default();
    let n_prompts = n_videos.div_ceil(2);
    for p in 0..n_prompts {
        m.prompts.push(PromptRecord {
            prompt_id: format!("p{p:03}"),
            text: format!("synthetic scene number {p}"),
            category: Some(Category::ALL[p % Category::ALL.len()]),
            group_id: None,
        });
    }
    for i in 0..n_videos {
        let level = 0.1 + 0.8 * i as f64 / (n_videos - 1).max(1) as f64;
        let id = format!("v{i:03}");
        let folder = dir.join(&id);
        std::fs::create_dir_all(&folder)?;
        for f in 0..frames {
            let img = image::RgbImage::from_fn(size, size, |x, y| {
                let wobble = ((x + y + f) % 7) as f64 / 7.0 * 0.06 - 0.03;
                let v = ((level + wobble).clamp(0.0, 1.0) * 255.0).round() as u8;
                image::Rgb([v, v, v])
            });
            img.save(folder.join(crate::data::frame_file_name(f))).map_err(std::io::Error::other)?;
        }
        m.videos.push(VideoRecord {
            video_id: id.clone(),
            prompt_id: format!("p{:03}", i / 2),
            generator: generators[i % generators.len()].into(),
            frames_path: id.clone(),
            frame_count: frames,
            width: size,
            height: size,
            fps: 8.0,
        });
        let quality = brightness_target(level);
        for a in 0..n_annotators {
            m.ratings.push(RatingRecord {
                annotator_id: format!("a{a:02}"),
                video_id: id.clone(),
                raw_score: (quality + noise.sample(&mut rng) + a as f64).clamp(0.0, 100.0),
                timestamp: "2024-01-01T00:00:00Z".into(),
            });
        }
    }
    m.mos = compute_mosz(&m.ratings, DegeneratePolicy::ExcludeWithWarning).map_err(std::io::Error::other)?;
    Ok(m)
}
