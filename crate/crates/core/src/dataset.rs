//! Corpus ingestion, series splitting, supervised windowing and scaling.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Months per seasonal cycle. The harness is monthly-only.
pub const PERIOD: usize = 12;

/// Length of the held-out test block at the end of every series.
pub const TEST_LEN: usize = 18;

/// Minimum training length: the largest supported input window (15) plus the
/// largest horizon (12) must fit inside the training range.
pub const MIN_TRAIN_LEN: usize = 27;

/// Minimum accepted series length: largest (w, h) configuration plus the
/// 18-point test block. Shorter series are rejected at ingestion.
pub const MIN_SERIES_LEN: usize = 42;

/// Default validation length, mirroring the test block.
pub const DEFAULT_VAL_LEN: usize = 18;

/// Offset applied on top of [0, 1] min-max scaling when preparing inputs and
/// targets for neural training, keeping scaled targets away from zero so the
/// percentage loss stays defined.
pub const TRAIN_SCALE_OFFSET: f64 = 0.1;

/// Source file layout tag. Both layouts reduce to `id, v1, v2, ...` with
/// trailing empty cells; the tag is kept for corpus provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    M4,
    M3,
}

/// One monthly series with its identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<F: Scalar> {
    pub id: String,
    pub values: Vec<F>,
    pub period: usize,
}

impl<F: Scalar> TimeSeries<F> {
    /// Builds a series, enforcing the minimum length and finiteness.
    pub fn new(id: impl Into<String>, values: Vec<F>) -> Result<Self> {
        let id = id.into();
        if values.len() < MIN_SERIES_LEN {
            return Err(Error::SeriesTooShort {
                id,
                len: values.len(),
                required: MIN_SERIES_LEN,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: 0,
                column: pos + 1,
                detail: format!("non-finite value in series '{id}'"),
            });
        }
        Ok(Self {
            id,
            values,
            period: PERIOD,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Contiguous, ordered train / validation / test index ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SeriesSplit {
    pub fn total_len(&self) -> usize {
        self.test.end
    }
}

/// Sliding-window supervised pairs: each row maps `input_size` observations
/// to the `horizon` observations that follow.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedWindowSet<F: Scalar> {
    pub input_size: usize,
    pub horizon: usize,
    /// Row-major N x input_size.
    pub inputs: Vec<Vec<F>>,
    /// Row-major N x horizon.
    pub targets: Vec<Vec<F>>,
    /// Index of the first target of each row in the source sequence.
    pub origins: Vec<usize>,
}

impl<F: Scalar> SupervisedWindowSet<F> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Appends another window set with the same dimensions.
    pub fn extend(&mut self, other: SupervisedWindowSet<F>) -> Result<()> {
        if other.input_size != self.input_size || other.horizon != self.horizon {
            return Err(Error::shape(
                "window-set concat",
                format!(
                    "(w={}, h={}) vs (w={}, h={})",
                    self.input_size, self.horizon, other.input_size, other.horizon
                ),
            ));
        }
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        self.origins.extend(other.origins);
        Ok(())
    }

    pub fn empty(input_size: usize, horizon: usize) -> Self {
        Self {
            input_size,
            horizon,
            inputs: Vec::new(),
            targets: Vec::new(),
            origins: Vec::new(),
        }
    }
}

/// Min-max scaler fitted on the training range only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<F: Scalar> {
    pub min: F,
    pub max: F,
}

/// Direction of a scaling transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleDirection {
    Forward,
    Inverse,
}

impl<F: Scalar> ScalerParams<F> {
    /// Maps `x` to (x - min) / (max - min): train min to 0, train max to 1.
    pub fn forward(&self, x: F) -> F {
        (x - self.min) / (self.max - self.min)
    }

    /// Exact inverse of [`ScalerParams::forward`].
    pub fn inverse(&self, y: F) -> F {
        self.min + y * (self.max - self.min)
    }

    /// Forward map shifted into [offset, 1 + offset], used for neural
    /// training so scaled targets stay away from zero.
    pub fn forward_train(&self, x: F) -> F {
        self.forward(x) + c(TRAIN_SCALE_OFFSET)
    }

    /// Exact inverse of [`ScalerParams::forward_train`].
    pub fn inverse_train(&self, y: F) -> F {
        self.inverse(y - c(TRAIN_SCALE_OFFSET))
    }

    pub fn forward_train_slice(&self, xs: &[F]) -> Vec<F> {
        xs.iter().map(|&x| self.forward_train(x)).collect()
    }

    pub fn inverse_train_slice(&self, ys: &[F]) -> Vec<F> {
        ys.iter().map(|&y| self.inverse_train(y)).collect()
    }
}

/// Reads an M4/M3-style CSV: one series per row, first cell the id, the rest
/// numeric values with optional trailing empties. A header row is skipped
/// when its second cell is non-numeric.
///
/// Series shorter than [`MIN_SERIES_LEN`] and rows with interior gaps are
/// rejected; both abort the ingest with the offending row identified.
pub fn ingest_series_csv<F: Scalar>(
    path: impl AsRef<Path>,
    _format: SeriesFormat,
) -> Result<Vec<TimeSeries<F>>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path_str.clone(),
            source,
        })?;

    let mut out = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row_idx + 1;
        let mut cells = record.iter();
        let id = match cells.next() {
            Some(first) => first.trim().to_string(),
            None => continue,
        };
        let rest: Vec<&str> = cells.collect();
        if rest.is_empty() && id.is_empty() {
            continue; // blank line
        }

        // Header detection: first row whose second cell is non-numeric.
        if row == 1 {
            let second_numeric = rest
                .first()
                .map(|s| s.trim().parse::<f64>().is_ok())
                .unwrap_or(false);
            if !second_numeric {
                continue;
            }
        }

        let mut values: Vec<F> = Vec::with_capacity(rest.len());
        let mut gap_at: Option<usize> = None;
        for (col_off, cell) in rest.iter().enumerate() {
            let column = col_off + 2; // 1-based, after the id column
            let trimmed = cell.trim();
            if trimmed.is_empty() {
                if gap_at.is_none() {
                    gap_at = Some(column);
                }
                continue;
            }
            if let Some(column) = gap_at {
                return Err(Error::SeriesGap {
                    id,
                    row,
                    column,
                });
            }
            let parsed: f64 = trimmed.parse().map_err(|_| Error::Parse {
                row,
                column,
                detail: format!("cell '{trimmed}' is not numeric"),
            })?;
            if !parsed.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    detail: format!("cell '{trimmed}' is not finite"),
                });
            }
            values.push(c(parsed));
        }

        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSeriesId { id });
        }
        out.push(TimeSeries::new(id, values)?);
    }
    Ok(out)
}

/// Splits a series into train / validation / test: the test block is always
/// the final [`TEST_LEN`] points, validation the `val_len` points before it,
/// and training everything earlier.
///
/// `val_len == 0` is rejected; callers that deliberately train without a
/// validation range must use [`split_series_without_validation`].
pub fn split_series<F: Scalar>(ts: &TimeSeries<F>, val_len: usize) -> Result<SeriesSplit> {
    if val_len == 0 {
        return Err(Error::InvalidSplit {
            detail: format!(
                "val_len 0 for series '{}'; use split_series_without_validation to opt out",
                ts.id
            ),
        });
    }
    split_with_val_len(ts, val_len)
}

/// Validation-free split for callers that explicitly opt out.
pub fn split_series_without_validation<F: Scalar>(ts: &TimeSeries<F>) -> Result<SeriesSplit> {
    split_with_val_len(ts, 0)
}

fn split_with_val_len<F: Scalar>(ts: &TimeSeries<F>, val_len: usize) -> Result<SeriesSplit> {
    let len = ts.len();
    let required = MIN_TRAIN_LEN + val_len + TEST_LEN;
    if len < required {
        return Err(Error::InvalidSplit {
            detail: format!(
                "series '{}' has {} points; {} required for val_len {} (train >= {})",
                ts.id, len, required, val_len, MIN_TRAIN_LEN
            ),
        });
    }
    let test_start = len - TEST_LEN;
    let val_start = test_start - val_len;
    Ok(SeriesSplit {
        train: 0..val_start,
        validation: val_start..test_start,
        test: test_start..len,
    })
}

/// Input-window sizes evaluated for each supported forecast horizon.
pub fn input_sizes_for_horizon(horizon: usize) -> Result<Vec<usize>> {
    match horizon {
        1 => Ok(vec![3, 12]),
        3 => Ok(vec![3, 4, 12]),
        6 => Ok(vec![6, 8, 12]),
        12 => Ok(vec![12, 15]),
        _ => Err(Error::UnsupportedHorizon { horizon }),
    }
}

/// All horizons the harness supports.
pub const SUPPORTED_HORIZONS: [usize; 4] = [1, 3, 6, 12];

/// Builds supervised windows over `range`: one row per origin `o` in the
/// range such that the `w` inputs preceding `o` and the `h` targets starting
/// at `o` are both defined, with targets confined to the range. Origins
/// advance by stride 1.
pub fn make_supervised_windows<F: Scalar>(
    values: &[F],
    input_size: usize,
    horizon: usize,
    range: Range<usize>,
) -> Result<SupervisedWindowSet<F>> {
    assert!(input_size > 0 && horizon > 0, "w and h must be positive");
    if range.end > values.len() {
        return Err(Error::shape(
            "make_supervised_windows",
            format!("range {:?} exceeds series length {}", range, values.len()),
        ));
    }
    let mut set = SupervisedWindowSet::empty(input_size, horizon);
    if range.end >= horizon {
        let first = range.start.max(input_size);
        let last = range.end - horizon; // inclusive
        let mut origin = first;
        while origin <= last {
            set.inputs
                .push(values[origin - input_size..origin].to_vec());
            set.targets.push(values[origin..origin + horizon].to_vec());
            set.origins.push(origin);
            origin += 1;
        }
    }
    if set.is_empty() {
        return Err(Error::EmptyWindowSet {
            range_len: range.len(),
            input_size,
            horizon,
        });
    }
    Ok(set)
}

/// Fits a min-max scaler on the training values.
pub fn fit_scaler<F: Scalar>(train_values: &[F]) -> Result<ScalerParams<F>> {
    let mut min = F::infinity();
    let mut max = F::neg_infinity();
    for &v in train_values {
        min = min.min(v);
        max = max.max(v);
    }
    if max.partial_cmp(&min) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateScaler {
            value: min.to_f64_c(),
        });
    }
    Ok(ScalerParams { min, max })
}

/// Applies the plain [0, 1] min-max transform in either direction.
pub fn scale<F: Scalar>(
    values: &[F],
    params: &ScalerParams<F>,
    direction: ScaleDirection,
) -> Vec<F> {
    match direction {
        ScaleDirection::Forward => values.iter().map(|&x| params.forward(x)).collect(),
        ScaleDirection::Inverse => values.iter().map(|&y| params.inverse(y)).collect(),
    }
}
