//! Forecast evaluation: error metrics, rolling-origin record generation,
//! two-stage aggregation, input-size selection, external forecast ingestion,
//! and Friedman/Nemenyi ranking with critical-difference diagrams.

pub mod metrics;
pub mod plot;
pub mod ranking;
pub mod rolling;

pub use metrics::{mape, smape, MAPE_DENOMINATOR_THRESHOLD};
pub use plot::render_cd_svg;
pub use ranking::{
    build_cd_report, friedman_statistic, nemenyi_critical_difference, rank_groups,
    ranking_matrix, CdReport, FriedmanResult, Metric,
};
pub use rolling::{
    aggregate_performance, ingest_external_forecasts, per_series_scores, read_records_csv,
    rolling_evaluate, select_best_input_size, write_records_csv, ForecastRecord, ModelScore,
    SeriesScore,
};
