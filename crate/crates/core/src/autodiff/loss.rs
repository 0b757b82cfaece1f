//! Mean-absolute-percentage-error training loss with its analytic gradient.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Smallest |target| the percentage loss accepts. Training targets are on
/// the shifted normalized scale (~[0.1, 1.1]), so anything near zero means
/// the scaling contract was violated upstream.
pub const MAPE_TARGET_THRESHOLD: f64 = 1e-8;

/// Mean over elements of |t - p| / |t|, together with dL/dp. The
/// subgradient at p = t is 0.
pub fn mape_loss<F: Scalar>(pred: &[F], target: &[F]) -> Result<(F, Vec<F>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            "mape_loss",
            format!("pred has {} elements, target {}", pred.len(), target.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Empty {
            what: "mape_loss".into(),
            detail: "no elements to average".into(),
        });
    }
    let threshold: F = c(MAPE_TARGET_THRESHOLD);
    let n: F = c(pred.len() as f64);
    let mut loss = F::zero();
    let mut grad = vec![F::zero(); pred.len()];
    for (i, (&p, &t)) in pred.iter().zip(target.iter()).enumerate() {
        let abs_t = t.abs();
        if abs_t <= threshold {
            return Err(Error::NearZeroTarget {
                index: i,
                threshold: MAPE_TARGET_THRESHOLD,
            });
        }
        let diff = p - t;
        loss += diff.abs() / abs_t;
        grad[i] = if diff > F::zero() {
            F::one() / (n * abs_t)
        } else if diff < F::zero() {
            -F::one() / (n * abs_t)
        } else {
            F::zero()
        };
    }
    Ok((loss / n, grad))
}
