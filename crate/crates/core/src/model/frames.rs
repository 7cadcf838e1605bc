//! Frame sampling and resizing into the model's input clip.

use std::path::Path;

use crate::data::VideoRecord;

use super::ModelError;

/// `n_frames × 3 × size × size` RGB values in `[0, 1]`, stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    n_frames: usize,
    size: usize,
    data: Vec<f64>,
}

impl Clip {
    pub fn new(n_frames: usize, size: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_frames * 3 * size * size, "clip data length mismatch");
        Clip { n_frames, size, data }
    }

    pub fn from_fn(n_frames: usize, size: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_frames * 3 * size * size);
        for t in 0..n_frames {
            for c in 0..3 {
                for y in 0..size {
                    for x in 0..size {
                        data.push(f(t, c, y, x));
                    }
                }
            }
        }
        Clip { n_frames, size, data }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((t * 3 + c) * self.size + y) * self.size + x]
    }

    /// One frame as its own single-frame clip.
    pub fn frame(&self, t: usize) -> Clip {
        let len = 3 * self.size * self.size;
        Clip { n_frames: 1, size: self.size, data: self.data[t * len..(t + 1) * len].to_vec() }
    }

    /// Frames reordered as `order[i]`-th source frame at position `i`.
    pub fn reorder(&self, order: &[usize]) -> Clip {
        let len = 3 * self.size * self.size;
        let data = order.iter().flat_map(|&t| self.data[t * len..(t + 1) * len].iter().copied()).collect();
        Clip { n_frames: order.len(), size: self.size, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Uniform temporal sampling: `round(j · (frame_count − 1) / (n − 1))`.
pub fn sample_indices(frame_count: u32, n_frames: usize) -> Vec<u32> {
    assert!(frame_count >= 1 && n_frames >= 1);
    if frame_count == 1 || n_frames == 1 {
        return vec![0; n_frames];
    }
    let span = (frame_count - 1) as f64;
    let steps = (n_frames - 1) as f64;
    (0..n_frames).map(|j| (j as f64 * span / steps).round() as u32).collect()
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(src: &[f64], src_w: usize, src_h: usize, dst: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dst * dst);
    let sy = src_h as f64 / dst as f64;
    let sx = src_w as f64 / dst as f64;
    for y in 0..dst {
        let fy = ((y as f64 + 0.5) * sy - 0.5).max(0.0);
        let y0 = (fy.floor() as usize).min(src_h - 1);
        let y1 = (y0 + 1).min(src_h - 1);
        let wy = fy - y0 as f64;
        for x in 0..dst {
            let fx = ((x as f64 + 0.5) * sx - 0.5).max(0.0);
            let x0 = (fx.floor() as usize).min(src_w - 1);
            let x1 = (x0 + 1).min(src_w - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * src_w + x0] * (1.0 - wx) + src[y0 * src_w + x1] * wx;
            let bottom = src[y1 * src_w + x0] * (1.0 - wx) + src[y1 * src_w + x1] * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

/// Loads the uniformly sampled frames of `video`, resized to `size × size`.
pub fn sample_frames(video: &VideoRecord, base: &Path, n_frames: usize, size: usize) -> Result<Clip, ModelError> {
    let mut data = Vec::with_capacity(n_frames * 3 * size * size);
    for idx in sample_indices(video.frame_count, n_frames) {
        let path = video.frame_file(base, idx);
        let img = image::open(&path)
            .map_err(|source| ModelError::Frame { path: path.clone(), source })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        for c in 0..3 {
            let plane: Vec<f64> = img.pixels().map(|p| p.0[c] as f64 / 255.0).collect();
            data.extend(resize_bilinear(&plane, w, h, size));
        }
    }
    Ok(Clip::new(n_frames, size, data))
}
