//! Point-forecast accuracy metrics on the original scale.

use crate::error::{Error, Result};

/// Targets with magnitude at or below this cannot enter a MAPE denominator.
pub const MAPE_DENOMINATOR_THRESHOLD: f64 = 1e-8;

fn check_pairs(y_true: &[f64], y_pred: &[f64], metric: &str) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::Empty {
            what: metric.into(),
            detail: "no (actual, forecast) pairs".into(),
        });
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(
            metric,
            format!("{} actuals vs {} forecasts", y_true.len(), y_pred.len()),
        ));
    }
    Ok(())
}

/// Mean absolute percentage error: mean of |y - yhat| / |y|.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pairs(y_true, y_pred, "mape")?;
    let mut total = 0.0;
    for (i, (&y, &p)) in y_true.iter().zip(y_pred.iter()).enumerate() {
        if y.abs() <= MAPE_DENOMINATOR_THRESHOLD {
            return Err(Error::NearZeroTarget {
                index: i,
                threshold: MAPE_DENOMINATOR_THRESHOLD,
            });
        }
        total += (y - p).abs() / y.abs();
    }
    Ok(total / y_true.len() as f64)
}

/// Symmetric MAPE in the halved form: mean of |y - yhat| / (|y| + |yhat|),
/// bounded by [0, 1]. A pair where actual and forecast are both zero has no
/// defined value and is an error.
pub fn smape(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pairs(y_true, y_pred, "smape")?;
    let mut total = 0.0;
    for (i, (&y, &p)) in y_true.iter().zip(y_pred.iter()).enumerate() {
        let denom = y.abs() + p.abs();
        if denom <= MAPE_DENOMINATOR_THRESHOLD {
            return Err(Error::NearZeroTarget {
                index: i,
                threshold: MAPE_DENOMINATOR_THRESHOLD,
            });
        }
        total += (y - p).abs() / denom;
    }
    Ok(total / y_true.len() as f64)
}
