use std::f64::consts::PI;

/// Cosine decay from `base` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(base: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps == 0 {
        return base;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    base * 0.5 * (1.0 + (PI * t).cos())
}
