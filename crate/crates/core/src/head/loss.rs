use crate::embedding::Label;
use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid clamped into the open interval (0, 1).
///
/// In `f64` the logistic function rounds to exactly 1.0 above z ≈ 37 and
/// underflows to 0 below z ≈ -745; probabilities reported to callers stay
/// strictly inside the interval.
pub fn probability(z: f64) -> f64 {
    const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;
    sigmoid(z).clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

/// Per-example BCE in logits form: `max(z,0) - z·y + ln(1 + e^{-|z|})`.
pub fn bce_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy of sigmoid(logits) against the targets.
pub fn bce_with_logits(logits: &[f64], targets: &[Label]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("loss batch".into()));
    }
    if logits.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            found: targets.len(),
        });
    }
    let sum: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&z, y)| bce_term(z, y.as_f64()))
        .sum();
    Ok(sum / logits.len() as f64)
}
