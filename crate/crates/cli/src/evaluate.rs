//! Evaluation and ranking stages.
//!
//! Evaluation replays every model over the rolling test origins of every
//! target series and writes the flat per-step records plus the two-stage
//! aggregate summary. Ranking reads those records back (so it can run in a
//! later invocation), builds complete-case Friedman matrices, and emits one
//! ranking JSON and one critical-difference SVG per horizon and metric —
//! and, when clustering has run, per cluster with (series, horizon) pairs
//! as blocks.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use tsforge_core::dataset::{TimeSeries, TEST_LEN};
use tsforge_core::evaluation::{
    aggregate_performance, build_cd_report, ingest_external_forecasts, per_series_scores,
    ranking_matrix, read_records_csv, render_cd_svg, rolling_evaluate, ForecastRecord, Metric,
    SeriesScore,
};
use tsforge_core::forecasters::fit_classical;
use tsforge_core::{Error, Result};

use crate::artifact::load_model;
use crate::config::ModelEntry;
use crate::manifest::write_output;
use crate::pipeline::Pipeline;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Replays every configured model over every target series' test block and
/// writes `records.csv` and `summary.csv`. Per-(series, model) problems are
/// recorded and skipped; producing no records at all is fatal.
pub fn evaluate_stage(p: &mut Pipeline) -> Result<()> {
    let entries: Vec<ModelEntry> = p.config.models.clone();
    let mut all_records: Vec<ForecastRecord> = Vec::new();

    for entry in &entries {
        let model_name = entry.model_name();
        for h in p.config.sorted_horizons() {
            let shared: &Pipeline = p;
            let results: Vec<(String, Result<Vec<ForecastRecord>>)> = shared
                .target
                .par_iter()
                .map(|ts| (ts.id.clone(), evaluate_one(shared, entry, &model_name, h, ts)))
                .collect();
            for (series_id, outcome) in results {
                match outcome {
                    Ok(records) => all_records.extend(records),
                    Err(err) => {
                        eprintln!("  {model_name} h={h} series {series_id}: {err}");
                        p.record_failure("evaluate", &series_id, &model_name, h, &err);
                    }
                }
            }
        }
    }

    for path in p.config.external_forecasts.clone() {
        match ingest_external_forecasts(&path, &p.target) {
            Ok(records) => all_records.extend(records),
            Err(err) => {
                eprintln!("  external forecasts '{}': {err}", path.display());
                let name = path.display().to_string();
                p.record_failure("evaluate", "*", &name, 0, &err);
            }
        }
    }

    if all_records.is_empty() {
        return Err(Error::Empty {
            what: "evaluation records".into(),
            detail: "every (series, model) task failed; see manifest failures".into(),
        });
    }

    write_output(&p.out, RECORDS_FILE, &records_csv_bytes(&all_records)?, &mut p.manifest)?;
    let summary = aggregate_performance(&all_records)?;
    let mut csv = String::from("model,horizon,mape,smape,series_count\n");
    for row in &summary {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model, row.horizon, row.mape, row.smape, row.series_count
        ));
    }
    write_output(&p.out, SUMMARY_FILE, csv.as_bytes(), &mut p.manifest)?;
    Ok(())
}

/// Scores one model on one series at one horizon. Neural models are read
/// back from their persisted artifacts — evaluation sees exactly what a
/// later reload would see; classical models are fit on everything before
/// the test block.
fn evaluate_one(
    p: &Pipeline,
    entry: &ModelEntry,
    model_name: &str,
    horizon: usize,
    ts: &TimeSeries<f64>,
) -> Result<Vec<ForecastRecord>> {
    if entry.is_neural() {
        let rel = Pipeline::forecaster_rel(model_name, horizon, &ts.id);
        let path = p.out.join(&rel);
        if !path.is_file() {
            return Err(Error::invalid_config(format!(
                "no adapted model at {rel}; adaptation failed or was skipped"
            )));
        }
        let forecaster = load_model(&path)?.into_forecaster()?;
        rolling_evaluate(&forecaster, ts, horizon)
    } else {
        let family = entry
            .classical_family()
            .ok_or_else(|| Error::invalid_config(format!("unknown family '{}'", entry.family)))?;
        if ts.values.len() <= TEST_LEN {
            return Err(Error::TooShort {
                what: format!("series '{}'", ts.id),
                required: TEST_LEN + 1,
                actual: ts.values.len(),
            });
        }
        let fit_len = ts.values.len() - TEST_LEN;
        let model = fit_classical(family, &ts.values[..fit_len])?;
        rolling_evaluate(&model, ts, horizon)
    }
}

/// Serializes records through the same writer the core library uses, so the
/// bytes are identical to `write_records_csv` output and `read_records_csv`
/// round-trips them bit-exactly.
fn records_csv_bytes(records: &[ForecastRecord]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer
            .serialize(record)
            .map_err(|e| Error::invalid_config(format!("records serialization: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::invalid_config(format!("records serialization: {e}")))
}

/// Reads `records.csv` back, ranks models per horizon and metric with the
/// Friedman/Nemenyi analysis, renders the critical-difference diagrams, and
/// repeats per cluster (pooling horizons as extra blocks) when an
/// assignment file exists.
pub fn rank_stage(p: &mut Pipeline) -> Result<()> {
    let records = read_records_csv(p.out.join(RECORDS_FILE))?;
    let scores = per_series_scores(&records)?;
    let alpha = p.config.alpha;

    for h in p.config.sorted_horizons() {
        let subset: Vec<SeriesScore> =
            scores.iter().filter(|s| s.horizon == h).cloned().collect();
        for metric in [Metric::Mape, Metric::Smape] {
            let name = metric.name();
            match rank_one(&subset, metric, alpha) {
                Ok((report, dropped)) => {
                    for series in dropped {
                        let err = Error::invalid_config(format!(
                            "excluded from horizon-{h} {name} ranking: not scored by every model"
                        ));
                        p.record_failure("rank", &series, "", h, &err);
                    }
                    let json = serde_json::to_vec_pretty(&report)
                        .expect("ranking report serializes");
                    write_output(&p.out, &format!("ranking/h{h}_{name}.json"), &json,
                                 &mut p.manifest)?;
                    let svg = render_cd_svg(&report);
                    write_output(&p.out, &format!("figures/cd_h{h}_{name}.svg"),
                                 svg.as_bytes(), &mut p.manifest)?;
                }
                Err(err) => {
                    eprintln!("  ranking h={h} {name}: {err}");
                    p.record_failure("rank", "", "", h, &err);
                }
            }
        }
    }

    // Per-cluster diagrams pool (series, horizon) pairs as Friedman blocks:
    // one cluster rarely holds enough series for a per-horizon test to have
    // any power, and the paper's cluster diagrams aggregate horizons too.
    let assignment_path = p.out.join(crate::analyze::ASSIGNMENT_FILE);
    if assignment_path.is_file() {
        let members = read_assignment(&assignment_path)?;
        let k = members.values().copied().max().map_or(0, |m| m + 1);
        for cluster in 0..k {
            let ids: BTreeSet<&String> = members
                .iter()
                .filter(|&(_, &c)| c == cluster)
                .map(|(id, _)| id)
                .collect();
            // One block per (series, horizon): relabel so the single-horizon
            // matrix builder accepts the pooled set.
            let pooled: Vec<SeriesScore> = scores
                .iter()
                .filter(|s| ids.contains(&s.series_id))
                .map(|s| {
                    let mut block = s.clone();
                    block.series_id = format!("{}#h{}", s.series_id, s.horizon);
                    block.horizon = 0;
                    block
                })
                .collect();
            for metric in [Metric::Mape, Metric::Smape] {
                let name = metric.name();
                match rank_one(&pooled, metric, alpha) {
                    Ok((mut report, dropped)) => {
                        report.metric = format!("{name} (cluster {cluster})");
                        for block in dropped {
                            let err = Error::invalid_config(format!(
                                "excluded from cluster-{cluster} {name} ranking: not scored by \
                                 every model"
                            ));
                            p.record_failure("rank", &block, "", 0, &err);
                        }
                        let json = serde_json::to_vec_pretty(&report)
                            .expect("ranking report serializes");
                        write_output(&p.out, &format!("ranking/cluster{cluster}_{name}.json"),
                                     &json, &mut p.manifest)?;
                        let svg = render_cd_svg(&report);
                        write_output(&p.out,
                                     &format!("figures/cd_cluster{cluster}_{name}.svg"),
                                     svg.as_bytes(), &mut p.manifest)?;
                    }
                    Err(err) => {
                        eprintln!("  ranking cluster={cluster} {name}: {err}");
                        p.record_failure("rank", &format!("cluster{cluster}"), "", 0, &err);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Complete-case filter plus the Friedman/Nemenyi report for one score
/// subset. Returns the report and the block ids that had to be dropped for
/// missing model coverage.
fn rank_one(
    scores: &[SeriesScore],
    metric: Metric,
    alpha: f64,
) -> Result<(tsforge_core::evaluation::CdReport, Vec<String>)> {
    let (complete, dropped) = complete_cases(scores);
    let (models, matrix) = ranking_matrix(&complete, metric)?;
    if models.len() < 2 {
        return Err(Error::invalid_config(format!(
            "ranking needs at least two models, found {}",
            models.len()
        )));
    }
    let report = build_cd_report(&models, &matrix, alpha, metric.name())?;
    Ok((report, dropped))
}

/// Splits scores into blocks covered by every model and the block ids that
/// are not. The Friedman test needs a complete design; a series one model
/// failed on cannot be a block.
fn complete_cases(scores: &[SeriesScore]) -> (Vec<SeriesScore>, Vec<String>) {
    let models: BTreeSet<&str> = scores.iter().map(|s| s.model.as_str()).collect();
    let mut coverage: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for s in scores {
        coverage.entry(s.series_id.as_str()).or_default().insert(s.model.as_str());
    }
    let complete_ids: BTreeSet<&str> = coverage
        .iter()
        .filter(|(_, seen)| **seen == models)
        .map(|(id, _)| *id)
        .collect();
    let kept = scores
        .iter()
        .filter(|s| complete_ids.contains(s.series_id.as_str()))
        .cloned()
        .collect();
    let dropped = coverage
        .keys()
        .filter(|id| !complete_ids.contains(*id))
        .map(|id| id.to_string())
        .collect();
    (kept, dropped)
}

/// Parses `assignment.csv` into series id -> cluster label.
fn read_assignment(path: &std::path::Path) -> Result<BTreeMap<String, usize>> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BTreeMap::new();
    for (i, line) in raw.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().to_string();
        let cluster: usize = fields
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                row: i + 1,
                column: 2,
                detail: format!("assignment '{}': bad cluster label", path.display()),
            })?;
        out.insert(id, cluster);
    }
    Ok(out)
}
