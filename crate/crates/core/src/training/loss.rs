//! Batch losses: `(1 − r)/2` Pearson loss plus a pairwise zero-margin rank hinge.
//!
//! Each loss returns its value together with the gradient with respect to the
//! predictions, so the model tape only ever needs per-sample seeds.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("prediction batch has {pred} entries but target batch has {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("loss needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

fn check(pred: &[f64], target: &[f64]) -> Result<(), LossError> {
    if pred.len() != target.len() {
        return Err(LossError::LengthMismatch { pred: pred.len(), target: target.len() });
    }
    if pred.len() < 2 {
        return Err(LossError::TooFewSamples(pred.len()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlccLoss {
    pub value: f64,
    /// Either batch had standard deviation below `eps`; `r` was taken as 0.
    pub degenerate: bool,
    pub grad: Vec<f64>,
}

/// `(1 − r)/2` with `r` the Pearson correlation of `pred` and `target`.
pub fn plcc_loss(pred: &[f64], target: &[f64], eps: f64) -> Result<PlccLoss, LossError> {
    check(pred, target)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = target.iter().sum::<f64>() / n;
    let dp: Vec<f64> = pred.iter().map(|p| p - mp).collect();
    let dt: Vec<f64> = target.iter().map(|t| t - mt).collect();
    let sxx: f64 = dp.iter().map(|d| d * d).sum();
    let syy: f64 = dt.iter().map(|d| d * d).sum();
    let sxy: f64 = dp.iter().zip(&dt).map(|(a, b)| a * b).sum();
    let (std_p, std_t) = ((sxx / n).sqrt(), (syy / n).sqrt());
    if std_p < eps || std_t < eps {
        return Ok(PlccLoss { value: 0.5, degenerate: true, grad: vec![0.0; pred.len()] });
    }
    let norm = (sxx * syy).sqrt();
    let r = sxy / norm;
    // dr/dpₖ = (tₖ − t̄)/√(SxxSyy) − r (pₖ − p̄)/Sxx
    let grad = dp.iter().zip(&dt).map(|(x, y)| -0.5 * (y / norm - r * x / sxx)).collect();
    Ok(PlccLoss { value: (1.0 - r.clamp(-1.0, 1.0)) / 2.0, degenerate: false, grad })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Mean over ordered pairs `targetᵢ > targetⱼ` of `max(0, predⱼ − predᵢ)`.
///
/// The subgradient at a kink (`predᵢ == predⱼ`) is 0.
pub fn rank_loss(pred: &[f64], target: &[f64]) -> Result<RankLoss, LossError> {
    check(pred, target)?;
    let n = pred.len();
    let mut pairs = 0usize;
    let mut sum = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if target[i] > target[j] {
                pairs += 1;
                let gap = pred[j] - pred[i];
                if gap > 0.0 {
                    sum += gap;
                    grad[j] += 1.0;
                    grad[i] -= 1.0;
                }
            }
        }
    }
    if pairs == 0 {
        return Ok(RankLoss { value: 0.0, grad });
    }
    let inv = 1.0 / pairs as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(RankLoss { value: sum * inv, grad })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub plcc_part: f64,
    pub rank_part: f64,
    pub step: usize,
}

/// `L = L_plcc + λ · L_rank`, with the gradient of `L` w.r.t. `pred`.
pub fn total_loss(
    pred: &[f64],
    target: &[f64],
    lambda: f64,
    eps: f64,
    step: usize,
) -> Result<(LossReport, Vec<f64>), LossError> {
    let plcc = plcc_loss(pred, target, eps)?;
    let rank = rank_loss(pred, target)?;
    let grad = plcc.grad.iter().zip(&rank.grad).map(|(a, b)| a + lambda * b).collect();
    let report = LossReport {
        total: plcc.value + lambda * rank.value,
        plcc_part: plcc.value,
        rank_part: rank.value,
        step,
    };
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-8;

    /// Direct textbook Pearson for the 4-point example.
    fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn plcc_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert!(plcc_loss(&t, &t, EPS).unwrap().value.abs() < 1e-15);
        assert!((plcc_loss(&[4.0, 3.0, 2.0, 1.0], &t, EPS).unwrap().value - 1.0).abs() < 1e-15);
        let p = [1.0, 2.0, 2.0, 3.0];
        let target = [10.0, 20.0, 30.0, 40.0];
        // Sxy = 30, Sxx = 2, Syy = 500: r = 30 / sqrt(1000) = 3/sqrt(10)
        let r = pearson_direct(&p, &target);
        assert!((r - 3.0 / 10f64.sqrt()).abs() < 1e-12);
        assert!((plcc_loss(&p, &target, EPS).unwrap().value - (1.0 - r) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn plcc_degenerate_batch() {
        let out = plcc_loss(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], EPS).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.value, 0.5);
        assert!(out.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_loss(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap().value, 0.0);
        assert_eq!(rank_loss(&[0.0, 1.0], &[2.0, 1.0]).unwrap().value, 1.0);
        assert_eq!(rank_loss(&[5.0, -1.0, 3.0], &[7.0, 7.0, 7.0]).unwrap().value, 0.0);
    }

    #[test]
    fn total_examples() {
        let (r, _) = total_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.3, EPS, 0).unwrap();
        assert!(r.total.abs() < 1e-15);
        let (r0, _) = total_loss(&[0.3, 0.1, 0.9], &[1.0, 2.0, 3.0], 0.0, EPS, 0).unwrap();
        assert_eq!(r0.total, plcc_loss(&[0.3, 0.1, 0.9], &[1.0, 2.0, 3.0], EPS).unwrap().value);
        // two points, anti-correlated: r = −1 → plcc part 1, one discordant pair of gap 1
        let (r, _) = total_loss(&[0.0, 1.0], &[2.0, 1.0], 0.3, EPS, 7).unwrap();
        assert!((r.plcc_part - 1.0).abs() < 1e-15);
        assert_eq!(r.rank_part, 1.0);
        assert!((r.total - 1.3).abs() < 1e-15);
        assert_eq!(r.step, 7);
    }

    #[test]
    fn length_errors() {
        assert_eq!(plcc_loss(&[1.0], &[1.0], EPS).unwrap_err(), LossError::TooFewSamples(1));
        assert!(matches!(rank_loss(&[1.0, 2.0], &[1.0]), Err(LossError::LengthMismatch { .. })));
    }
}
