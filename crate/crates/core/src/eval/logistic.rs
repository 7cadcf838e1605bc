//! Four-parameter logistic mapping from objective scores onto the MOS scale,
//! fitted by Levenberg–Marquardt.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

pub const MAX_ITERATIONS: usize = 200;

/// `f(x) = (β1 − β2) / (1 + exp(−(x − β3) / |β4|)) + β2`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
}

impl LogisticParams {
    pub fn apply(&self, x: f64) -> f64 {
        (self.beta1 - self.beta2) * sigmoid((x - self.beta3) / self.beta4.abs()) + self.beta2
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.beta1, self.beta2, self.beta3, self.beta4)
    }

    fn from_vector(v: &Vector4<f64>) -> Self {
        LogisticParams { beta1: v[0], beta2: v[1], beta3: v[2], beta4: v[3] }
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub mapped: Vec<f64>,
    /// False when the iteration cap was hit; `params` is then the best iterate.
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("logistic fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("prediction and MOS lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("predictions are constant")]
    ConstantPredictions,
    #[error("inputs contain non-finite values")]
    NonFinite,
}

fn sse(p: &LogisticParams, x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| (p.apply(*xi) - yi).powi(2)).sum()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn initial(pred: &[f64], mos: &[f64]) -> LogisticParams {
    let n = pred.len() as f64;
    let mean = pred.iter().sum::<f64>() / n;
    let std = (pred.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
    LogisticParams {
        beta1: mos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        beta2: mos.iter().copied().fold(f64::INFINITY, f64::min),
        beta3: median(pred),
        beta4: std,
    }
}

/// `(JᵀJ, Jᵀr)` for residuals `r = f(x) − y`.
fn normal_equations(p: &LogisticParams, x: &[f64], y: &[f64]) -> (Matrix4<f64>, Vector4<f64>) {
    let s = p.beta4.abs();
    let sign = if p.beta4 < 0.0 { -1.0 } else { 1.0 };
    let amp = p.beta1 - p.beta2;
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - p.beta3) / s;
        let g = sigmoid(u);
        let dg = g * (1.0 - g);
        let j = Vector4::new(g, 1.0 - g, -amp * dg / s, -amp * dg * u / s * sign);
        let r = p.apply(xi) - yi;
        jtj += j * j.transpose();
        jtr += j * r;
    }
    (jtj, jtr)
}

pub fn logistic_fit(pred: &[f64], mos: &[f64]) -> Result<LogisticFit, FitError> {
    if pred.len() != mos.len() {
        return Err(FitError::LengthMismatch(pred.len(), mos.len()));
    }
    if pred.len() < 4 {
        return Err(FitError::TooFewPoints(pred.len()));
    }
    if pred.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    if pred.iter().all(|p| *p == pred[0]) {
        return Err(FitError::ConstantPredictions);
    }
    let mut params = initial(pred, mos);
    let mut cost = sse(&params, pred, mos);
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&params, pred, mos);
        if jtr.amax() <= 1e-14 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut improved = false;
        // inner loop: raise damping until a step lowers the cost
        while damping < 1e16 {
            let mut a = jtj;
            for d in 0..4 {
                a[(d, d)] += damping * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                damping *= 10.0;
                continue;
            };
            let candidate = LogisticParams::from_vector(&(params.to_vector() + step));
            let c = sse(&candidate, pred, mos);
            if c.is_finite() && c < cost && candidate.beta4 != 0.0 {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.amax() <= 1e-12 * (1.0 + params.to_vector().amax());
                params = candidate;
                cost = c;
                damping = (damping / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-15 || small_step {
                    converged = true;
                }
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            // no descent direction left within floating-point resolution
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        log::warn!("logistic fit hit {MAX_ITERATIONS} iterations; using best iterate");
    }
    let mapped = pred.iter().map(|x| params.apply(*x)).collect();
    Ok(LogisticFit { params, mapped, converged, iterations })
}
