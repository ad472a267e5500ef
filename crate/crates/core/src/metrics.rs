//! Evaluation metrics and the quasi-triangle inequality for log loss.
//!
//! Natural logarithms everywhere.

use crate::error::{RafmError, Result};

/// Clamp applied to probabilities before taking logs in the metrics.
pub const PROB_CLAMP: f64 = 1e-15;

/// Absolute slack used when checking the quasi-triangle inequality.
pub const TRIANGLE_SLACK: f64 = 1e-12;

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(RafmError::input("metric needs at least one prediction"));
    }
    if a != b {
        return Err(RafmError::input(format!("{a} predictions but {b} labels")));
    }
    Ok(())
}

/// Mean of `(s - y)^2`.
pub fn mean_square_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_aligned(scores.len(), labels.len())?;
    let total: f64 = scores.iter().zip(labels).map(|(s, y)| (s - y) * (s - y)).sum();
    Ok(total / scores.len() as f64)
}

/// Log loss of a single probability against a label.
pub fn log_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// Mean log loss with probabilities clamped to `[1e-15, 1 - 1e-15]`.
pub fn mean_log_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    check_aligned(probs.len(), labels.len())?;
    let total: f64 = probs.iter().zip(labels).map(|(&p, &y)| log_loss(p, y)).sum();
    Ok(total / probs.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for ties. Labels are positive when `> 0.5`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_aligned(scores.len(), labels.len())?;
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(RafmError::input(format!("cannot rank score {s}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut positives = 0usize;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the average 1-based rank
        let avg_rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] > 0.5 {
                rank_sum_pos += avg_rank;
                positives += 1;
            }
        }
        start = end;
    }
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(RafmError::input("AUC needs both positive and negative labels"));
    }
    let np = positives as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * negatives as f64))
}

/// Reference model's correct-class probability floor and slack multiplier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub theta: f64,
    pub delta: f64,
}

impl BoundParams {
    pub fn new(theta: f64, delta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(RafmError::domain(format!("theta must lie in (0, 1], got {theta}")));
        }
        if !(delta > 1.0 && delta.is_finite()) {
            return Err(RafmError::domain(format!("delta must exceed 1, got {delta}")));
        }
        Ok(BoundParams { theta, delta })
    }
}

/// `C = log d / (t log d + (1 - t) log((1 - t) / (1 - t / d)))`.
pub fn c_theta_delta(params: BoundParams) -> Result<f64> {
    let BoundParams { theta, delta } = BoundParams::new(params.theta, params.delta)?;
    let log_delta = delta.ln();
    // (1 - t) log(...) -> 0 as t -> 1
    let tail = if theta == 1.0 {
        0.0
    } else {
        (1.0 - theta) * ((1.0 - theta) / (1.0 - theta / delta)).ln()
    };
    Ok(log_delta / (theta * log_delta + tail))
}

fn check_open_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(RafmError::domain(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// Binomial KL divergence `D(y1 || y2)`.
pub fn kl_binomial(y1: f64, y2: f64) -> Result<f64> {
    check_open_prob("y1", y1)?;
    check_open_prob("y2", y2)?;
    let kl = y1 * (y1 / y2).ln() + (1.0 - y1) * ((1.0 - y1) / (1.0 - y2)).ln();
    // roundoff can dip a hair below zero
    Ok(kl.max(0.0))
}

/// Outcome of one quasi-triangle check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleCheck {
    pub holds: bool,
    /// Right-hand side minus left-hand side.
    pub margin: f64,
    pub theta: f64,
    pub c: f64,
}

/// Checks `L(y2, y) <= L(y1, y) + C(theta, delta) D(y1 || y2) + log delta`
/// with `theta` the correct-class probability of `y1`.
pub fn check_quasi_triangle(y: u8, y1: f64, y2: f64, delta: f64) -> Result<TriangleCheck> {
    if y > 1 {
        return Err(RafmError::domain(format!("label must be 0 or 1, got {y}")));
    }
    check_open_prob("y1", y1)?;
    check_open_prob("y2", y2)?;
    let yf = y as f64;
    let theta = yf * y1 + (1.0 - yf) * (1.0 - y1);
    let c = c_theta_delta(BoundParams::new(theta, delta)?)?;
    let kl = kl_binomial(y1, y2)?;
    let loss = |p: f64| -yf * p.ln() - (1.0 - yf) * (1.0 - p).ln();
    let lhs = loss(y2);
    let rhs = loss(y1) + c * kl + delta.ln();
    let margin = rhs - lhs;
    Ok(TriangleCheck { holds: margin >= -TRIANGLE_SLACK, margin, theta, c })
}
