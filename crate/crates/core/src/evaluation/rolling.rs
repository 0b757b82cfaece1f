//! Rolling-origin evaluation over the held-out test block, two-stage score
//! aggregation, input-size selection, and the forecast-record CSV surface.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{TimeSeries, TEST_LEN};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{mape, smape};
use crate::forecasters::Forecaster;

/// One forecasted point: model, where the forecast originated, which step
/// ahead it is, and the actual value it is judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub series_id: String,
    pub model: String,
    pub horizon: usize,
    /// Input window length; 0 for classical models.
    pub input_size: usize,
    /// Index of the first forecasted observation, i.e. the history length.
    pub origin: usize,
    /// 1-based step ahead within the forecast.
    pub step: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

/// Evaluates one model over every rolling origin in the final test block.
/// The history grows by one observation per origin; models that keep state
/// advance it rather than refitting, so origins must be visited in order.
/// With an 18-point test block there are 18 - h + 1 origins.
pub fn rolling_evaluate(
    forecaster: &dyn Forecaster,
    series: &TimeSeries<f64>,
    horizon: usize,
) -> Result<Vec<ForecastRecord>> {
    if horizon == 0 || horizon > TEST_LEN {
        return Err(Error::UnsupportedHorizon { horizon });
    }
    let n = series.len();
    let test_start = n - TEST_LEN;
    let mut records = Vec::with_capacity((TEST_LEN - horizon + 1) * horizon);
    for origin in test_start..=n - horizon {
        let forecast = forecaster.forecast(&series.values[..origin], horizon)?;
        if forecast.len() != horizon {
            return Err(Error::shape(
                "rolling_evaluate",
                format!(
                    "model '{}' returned {} steps for horizon {horizon}",
                    forecaster.model_name(),
                    forecast.len()
                ),
            ));
        }
        for (j, &y_pred) in forecast.iter().enumerate() {
            records.push(ForecastRecord {
                series_id: series.id.clone(),
                model: forecaster.model_name().to_string(),
                horizon,
                input_size: forecaster.input_size(),
                origin,
                step: j + 1,
                y_true: series.values[origin + j],
                y_pred,
            });
        }
    }
    Ok(records)
}

/// Per-series accuracy of one model at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScore {
    pub series_id: String,
    pub model: String,
    pub horizon: usize,
    pub mape: f64,
    pub smape: f64,
    pub record_count: usize,
}

/// Actuals and predictions pooled under one (model, horizon, series) key.
type PooledPairs = BTreeMap<(String, usize, String), (Vec<f64>, Vec<f64>)>;

/// First aggregation stage: pools each (model, horizon, series) group's
/// records into one MAPE and one sMAPE. Output is sorted by those keys.
pub fn per_series_scores(records: &[ForecastRecord]) -> Result<Vec<SeriesScore>> {
    if records.is_empty() {
        return Err(Error::Empty {
            what: "forecast records".into(),
            detail: "nothing to aggregate".into(),
        });
    }
    let mut groups: PooledPairs = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.model.clone(), r.horizon, r.series_id.clone()))
            .or_default();
        entry.0.push(r.y_true);
        entry.1.push(r.y_pred);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((model, horizon, series_id), (y_true, y_pred)) in groups {
        out.push(SeriesScore {
            mape: mape(&y_true, &y_pred)?,
            smape: smape(&y_true, &y_pred)?,
            record_count: y_true.len(),
            series_id,
            model,
            horizon,
        });
    }
    Ok(out)
}

/// Aggregate accuracy of one model at one horizon across series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub horizon: usize,
    pub mape: f64,
    pub smape: f64,
    pub series_count: usize,
}

/// Second aggregation stage: unweighted mean of the per-series scores, so
/// every series counts equally regardless of how many records it produced.
pub fn aggregate_performance(records: &[ForecastRecord]) -> Result<Vec<ModelScore>> {
    let per_series = per_series_scores(records)?;
    let mut groups: BTreeMap<(String, usize), (f64, f64, usize)> = BTreeMap::new();
    for s in &per_series {
        let entry = groups.entry((s.model.clone(), s.horizon)).or_default();
        entry.0 += s.mape;
        entry.1 += s.smape;
        entry.2 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|((model, horizon), (m, s, count))| ModelScore {
            model,
            horizon,
            mape: m / count as f64,
            smape: s / count as f64,
            series_count: count,
        })
        .collect())
}

/// Picks the input size with the lowest validation sMAPE; ties go to the
/// smallest window. Every expected candidate must be present.
pub fn select_best_input_size(
    expected: &[usize],
    scores: &[(usize, f64)],
    series: &str,
    model: &str,
    horizon: usize,
) -> Result<usize> {
    let present: BTreeSet<usize> = scores.iter().map(|&(w, _)| w).collect();
    let missing: Vec<usize> = expected
        .iter()
        .copied()
        .filter(|w| !present.contains(w))
        .collect();
    if !missing.is_empty() || scores.is_empty() {
        return Err(Error::IncompleteCandidates {
            series: series.to_string(),
            model: model.to_string(),
            horizon,
            missing,
        });
    }
    let mut sorted: Vec<(usize, f64)> = scores.to_vec();
    sorted.sort_by_key(|e| e.0);
    let mut best = sorted[0];
    for &(w, s) in &sorted[1..] {
        if !s.is_finite() {
            return Err(Error::NonFinite {
                primitive: "select_best_input_size".into(),
            });
        }
        if s < best.1 {
            best = (w, s);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::NonFinite {
            primitive: "select_best_input_size".into(),
        });
    }
    Ok(best.0)
}

/// Writes records as CSV with the canonical column order.
pub fn write_records_csv(path: impl AsRef<Path>, records: &[ForecastRecord]) -> Result<()> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path_str.clone(),
        source,
    })?;
    for r in records {
        writer.serialize(r).map_err(|source| Error::Csv {
            path: path_str.clone(),
            source,
        })?;
    }
    writer
        .flush()
        .map_err(|source| Error::io(path_str.clone(), source))?;
    Ok(())
}

/// Reads records written by [`write_records_csv`].
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<ForecastRecord>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path_str.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|source| Error::Csv {
            path: path_str.clone(),
            source,
        })?);
    }
    Ok(out)
}

/// Ingests forecasts produced outside this crate and joins actuals onto
/// them. Required columns: series_id, model, horizon, origin, step, y_pred;
/// an input_size column is honored and anything else (e.g. y_true) is
/// ignored, so the native records format round-trips. Actuals always come
/// from `series`, never from the file.
pub fn ingest_external_forecasts(
    path: impl AsRef<Path>,
    series: &[TimeSeries<f64>],
) -> Result<Vec<ForecastRecord>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let by_id: BTreeMap<&str, &TimeSeries<f64>> =
        series.iter().map(|ts| (ts.id.as_str(), ts)).collect();
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path_str.clone(),
        source,
    })?;

    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path_str.clone(),
            source,
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = ["series_id", "model", "horizon", "origin", "step", "y_pred"];
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| Error::Parse {
            row: 1,
            column: 1,
            detail: format!("missing required column '{name}'"),
        })?;
    }
    let input_size_col = col("input_size");

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = i + 2; // 1-based, after the header row
        let cell = |c: usize| -> Result<&str> {
            record.get(c).map(str::trim).ok_or(Error::Parse {
                row,
                column: c + 1,
                detail: "missing cell".into(),
            })
        };
        let parse_usize = |c: usize| -> Result<usize> {
            cell(c)?.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                detail: format!("'{}' is not a non-negative integer", cell(c).unwrap_or("")),
            })
        };
        let series_id = cell(idx[0])?.to_string();
        let ts = by_id.get(series_id.as_str()).ok_or_else(|| Error::Parse {
            row,
            column: idx[0] + 1,
            detail: format!("unknown series '{series_id}'"),
        })?;
        let model = cell(idx[1])?.to_string();
        let horizon = parse_usize(idx[2])?;
        let origin = parse_usize(idx[3])?;
        let step = parse_usize(idx[4])?;
        let y_pred: f64 = cell(idx[5])?.parse().map_err(|_| Error::Parse {
            row,
            column: idx[5] + 1,
            detail: format!("'{}' is not a number", cell(idx[5]).unwrap_or("")),
        })?;
        if step == 0 || step > horizon {
            return Err(Error::Parse {
                row,
                column: idx[4] + 1,
                detail: format!("step {step} outside 1..={horizon}"),
            });
        }
        let target = origin + step - 1;
        if target >= ts.len() {
            return Err(Error::Parse {
                row,
                column: idx[3] + 1,
                detail: format!(
                    "origin {origin} step {step} points past series '{series_id}' (length {})",
                    ts.len()
                ),
            });
        }
        let input_size = match input_size_col {
            Some(c) => parse_usize(c)?,
            None => 0,
        };
        out.push(ForecastRecord {
            series_id,
            model,
            horizon,
            input_size,
            origin,
            step,
            y_true: ts.values[target],
            y_pred,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasters::{fit_classical, ClassicalFamily};

    /// Forecasts the last observed value for every step.
    struct LastValue;

    impl Forecaster for LastValue {
        fn model_name(&self) -> &str {
            "last_value"
        }
        fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
            Ok(vec![*history.last().unwrap(); horizon])
        }
    }

    fn test_series(n: usize) -> TimeSeries<f64> {
        TimeSeries::new(
            "s1",
            (0..n).map(|t| 50.0 + (t as f64 * 0.7).sin() * 5.0 + t as f64).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn record_counts_match_the_origin_arithmetic() {
        let ts = test_series(100);
        assert_eq!(rolling_evaluate(&LastValue, &ts, 3).unwrap().len(), 48);
        assert_eq!(rolling_evaluate(&LastValue, &ts, 12).unwrap().len(), 84);
        assert_eq!(rolling_evaluate(&LastValue, &ts, 1).unwrap().len(), 18);
        assert_eq!(rolling_evaluate(&LastValue, &ts, 6).unwrap().len(), 78);
    }

    #[test]
    fn records_carry_correct_actuals_and_origins() {
        let ts = test_series(60);
        let records = rolling_evaluate(&LastValue, &ts, 3).unwrap();
        let first = &records[0];
        assert_eq!(first.origin, 42);
        assert_eq!(first.step, 1);
        assert_eq!(first.y_true, ts.values[42]);
        assert_eq!(first.y_pred, ts.values[41]);
        for r in &records {
            assert_eq!(r.y_true, ts.values[r.origin + r.step - 1]);
            assert_eq!(r.input_size, 0);
        }
        let last = records.last().unwrap();
        assert_eq!(last.origin, 57);
        assert_eq!(last.step, 3);
    }

    #[test]
    fn unsupported_horizons_are_rejected() {
        let ts = test_series(60);
        assert!(matches!(
            rolling_evaluate(&LastValue, &ts, 0).unwrap_err(),
            Error::UnsupportedHorizon { horizon: 0 }
        ));
        assert!(matches!(
            rolling_evaluate(&LastValue, &ts, 19).unwrap_err(),
            Error::UnsupportedHorizon { horizon: 19 }
        ));
    }

    #[test]
    fn seasonal_naive_on_exact_cycle_scores_zero_error() {
        let pattern = [30.0, 28.0, 35.0, 40.0, 32.0, 31.0, 29.0, 36.0, 41.0, 38.0, 33.0, 30.0];
        let values: Vec<f64> = (0..96).map(|t| pattern[t % 12]).collect();
        let ts = TimeSeries::new("cycle", values).unwrap();
        let model = fit_classical(ClassicalFamily::SeasonalNaive, &ts.values[..78]).unwrap();
        let records = rolling_evaluate(&model, &ts, 6).unwrap();
        let scores = aggregate_performance(&records).unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0].model, "seasonal_naive");
        assert!(scores[0].mape < 1e-12);
        assert!(scores[0].smape < 1e-12);
    }

    #[test]
    fn aggregation_weights_series_equally() {
        // Series "a": two records at 10% error; series "b": one at 30%.
        let rec = |series: &str, y: f64, p: f64| ForecastRecord {
            series_id: series.into(),
            model: "m".into(),
            horizon: 1,
            input_size: 0,
            origin: 50,
            step: 1,
            y_true: y,
            y_pred: p,
        };
        let records = vec![
            rec("a", 100.0, 110.0),
            rec("a", 100.0, 90.0),
            rec("b", 100.0, 130.0),
        ];
        let scores = aggregate_performance(&records).unwrap();
        // Two-stage: (0.10 + 0.30) / 2, not the pooled (0.1+0.1+0.3)/3.
        assert!((scores[0].mape - 0.20).abs() < 1e-12);
        assert_eq!(scores[0].series_count, 2);

        let per = per_series_scores(&records).unwrap();
        assert_eq!(per.len(), 2);
        assert_eq!(per[0].record_count, 2);
        assert!((per[0].mape - 0.10).abs() < 1e-12);
    }

    #[test]
    fn input_size_selection_prefers_small_windows_on_ties() {
        let expected = [3, 4, 12];
        let w = select_best_input_size(
            &expected,
            &[(12, 0.20), (4, 0.10), (3, 0.10)],
            "s1",
            "cnn",
            3,
        )
        .unwrap();
        assert_eq!(w, 3);
        let w = select_best_input_size(&expected, &[(3, 0.3), (4, 0.1), (12, 0.2)], "s1", "cnn", 3)
            .unwrap();
        assert_eq!(w, 4);
    }

    #[test]
    fn missing_candidates_are_named() {
        let err =
            select_best_input_size(&[3, 4, 12], &[(3, 0.1)], "s9", "tcn", 3).unwrap_err();
        match err {
            Error::IncompleteCandidates {
                series,
                model,
                horizon,
                missing,
            } => {
                assert_eq!(series, "s9");
                assert_eq!(model, "tcn");
                assert_eq!(horizon, 3);
                assert_eq!(missing, vec![4, 12]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn records_csv_round_trips_exactly() {
        let ts = test_series(60);
        let records = rolling_evaluate(&LastValue, &ts, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records_csv(&path, &records).unwrap();
        let back = read_records_csv(&path).unwrap();
        assert_eq!(records, back);
        // Header spells out the canonical column order.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "series_id,model,horizon,input_size,origin,step,y_true,y_pred"
        ));
    }

    #[test]
    fn external_forecasts_join_actuals_from_the_dataset() {
        let ts = test_series(60);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("external.csv");
        // Extra column and shuffled order are tolerated; y_true is ignored.
        std::fs::write(
            &path,
            "model,series_id,horizon,origin,step,y_pred,y_true\n\
             ext,s1,3,42,1,51.5,999\n\
             ext,s1,3,42,2,52.5,999\n",
        )
        .unwrap();
        let records = ingest_external_forecasts(&path, std::slice::from_ref(&ts)).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].y_true, ts.values[42]);
        assert_eq!(records[1].y_true, ts.values[43]);
        assert_eq!(records[0].input_size, 0);
        assert_eq!(records[0].model, "ext");
    }

    #[test]
    fn external_forecast_errors_name_the_row() {
        let ts = test_series(60);
        let dir = tempfile::tempdir().unwrap();

        let unknown = dir.path().join("unknown.csv");
        std::fs::write(
            &unknown,
            "series_id,model,horizon,origin,step,y_pred\nnope,m,3,42,1,1.0\n",
        )
        .unwrap();
        match ingest_external_forecasts(&unknown, std::slice::from_ref(&ts)).unwrap_err() {
            Error::Parse { row, detail, .. } => {
                assert_eq!(row, 2);
                assert!(detail.contains("nope"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let out_of_range = dir.path().join("range.csv");
        std::fs::write(
            &out_of_range,
            "series_id,model,horizon,origin,step,y_pred\ns1,m,3,59,2,1.0\n",
        )
        .unwrap();
        assert!(matches!(
            ingest_external_forecasts(&out_of_range, std::slice::from_ref(&ts)).unwrap_err(),
            Error::Parse { row: 2, .. }
        ));

        let bad_number = dir.path().join("bad.csv");
        std::fs::write(
            &bad_number,
            "series_id,model,horizon,origin,step,y_pred\ns1,m,3,42,1,abc\n",
        )
        .unwrap();
        assert!(matches!(
            ingest_external_forecasts(&bad_number, std::slice::from_ref(&ts)).unwrap_err(),
            Error::Parse { row: 2, .. }
        ));

        let missing_col = dir.path().join("cols.csv");
        std::fs::write(&missing_col, "series_id,model,horizon,origin,step\n").unwrap();
        assert!(matches!(
            ingest_external_forecasts(&missing_col, std::slice::from_ref(&ts)).unwrap_err(),
            Error::Parse { row: 1, .. }
        ));
    }
}
