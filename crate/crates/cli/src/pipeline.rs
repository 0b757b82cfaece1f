//! Stage orchestration: which stages a command implies, in what order, and
//! the bookkeeping that lets a finished stage be skipped on rerun.
//!
//! The stage graph is small and fixed. Ingest always runs (it only parses
//! the input CSVs into memory); every other stage runs at most once per
//! configuration hash:
//!
//! ```text
//! ingest -> pretrain -> finetune -> evaluate --+--> rank -> report
//!      \-> features -> cluster ----------------+
//! ```
//!
//! Task-level problems (one series diverging, one model missing) are
//! recorded in the manifest and the run continues; a stage that cannot
//! produce its output at all (records file unreadable, clustering
//! impossible) aborts the run, leaving the manifest describing exactly the
//! stages and files that do exist.

use std::fs;
use std::path::PathBuf;

use tsforge_core::dataset::{ingest_series_csv, TimeSeries, TEST_LEN};
use tsforge_core::evaluation::smape;
use tsforge_core::forecasters::Forecaster;
use tsforge_core::seeding::derive_seed;
use tsforge_core::{Error, Result};

use crate::analyze::{cluster_stage, features_stage};
use crate::config::ExperimentConfig;
use crate::evaluate::{evaluate_stage, rank_stage};
use crate::manifest::{RunManifest, TaskFailure};
use crate::report::report_stage;

/// One parsed corpus: the unit `ingest` returns for sources and targets.
type SeriesSet = Vec<TimeSeries<f64>>;
use crate::train::{finetune_stage, pretrain_stage};

/// What the command line asked for; each goal expands to the stage prefix it
/// needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Pretrain,
    Finetune,
    Evaluate,
    Features,
    Cluster,
    Rank,
    Report,
    Run,
}

impl Goal {
    /// Stages the goal requires, in execution order.
    pub fn stages(self) -> &'static [&'static str] {
        match self {
            Goal::Pretrain => &["pretrain"],
            Goal::Finetune => &["pretrain", "finetune"],
            Goal::Evaluate => &["pretrain", "finetune", "evaluate"],
            Goal::Features => &["features"],
            Goal::Cluster => &["features", "cluster"],
            Goal::Rank => &["pretrain", "finetune", "evaluate", "features", "cluster", "rank"],
            Goal::Report => &["report"],
            Goal::Run => &[
                "pretrain", "finetune", "evaluate", "features", "cluster", "rank", "report",
            ],
        }
    }
}

/// Everything a stage needs: the validated config, the parsed corpora, the
/// evolving manifest, and the output root.
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub out: PathBuf,
    pub manifest: RunManifest,
    pub source: Vec<TimeSeries<f64>>,
    pub target: Vec<TimeSeries<f64>>,
    /// Identity of the source corpus, recorded in global-model provenance.
    pub corpus_id: String,
}

impl Pipeline {
    pub fn seed_for(&self, parts: &[&str]) -> u64 {
        derive_seed(self.config.seed, parts)
    }

    pub fn record_failure(
        &mut self,
        stage: &str,
        series: &str,
        model: &str,
        horizon: usize,
        err: &Error,
    ) {
        self.manifest.failures.push(TaskFailure {
            stage: stage.into(),
            series: series.into(),
            model: model.into(),
            horizon,
            detail: err.to_string(),
        });
    }

    /// Relative path of a pre-trained global model.
    pub fn global_rel(family: &str, horizon: usize, input_size: usize) -> String {
        format!("models/global/{family}_h{horizon}_w{input_size}.json")
    }

    /// Relative path of a fine-tuned (or from-scratch) per-series model.
    pub fn forecaster_rel(model_name: &str, horizon: usize, series_id: &str) -> String {
        format!("models/{model_name}/h{horizon}/{series_id}.json")
    }
}

/// Parses every configured input file. Duplicate ids across source files are
/// an error (they would make provenance ambiguous), as are target ids
/// colliding with nothing — the target file stands alone.
fn ingest(config: &ExperimentConfig) -> Result<(SeriesSet, SeriesSet)> {
    let mut source = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for path in &config.source {
        let series = ingest_series_csv(path, config.format)?;
        for ts in &series {
            if !seen.insert(ts.id.clone()) {
                return Err(Error::invalid_config(format!(
                    "series id '{}' appears in more than one source file",
                    ts.id
                )));
            }
        }
        source.extend(series);
    }
    let target = ingest_series_csv(&config.target, config.format)?;
    Ok((source, target))
}

fn file_stem(path: &std::path::Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Runs the stages a goal implies and returns the final manifest.
///
/// The output directory's manifest decides what still needs computing: a
/// stage already marked complete under the same configuration hash is
/// skipped outright, and a hash change wipes the directory's recorded files
/// and starts over. The `report` stage is the one exception to skipping —
/// regenerating it is pure, and `tsforge report` exists precisely to re-render.
pub fn execute(config: ExperimentConfig, goal: Goal) -> Result<RunManifest> {
    config.validate()?;
    let out = config.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;

    let config_hash = config.hash();
    let manifest = match RunManifest::load(&out)? {
        Some(mut existing) => {
            if existing.config_hash != config_hash {
                eprintln!(
                    "configuration changed (hash {} -> {}); discarding previous outputs",
                    &existing.config_hash[..12.min(existing.config_hash.len())],
                    &config_hash[..12]
                );
                existing.reset_for(&out, &config_hash);
            }
            existing
        }
        None => RunManifest::new(&config_hash),
    };

    let (source, target) = ingest(&config)?;
    let corpus_id = config
        .source
        .iter()
        .map(|p| file_stem(p))
        .collect::<Vec<_>>()
        .join("+");

    let mut pipeline = Pipeline {
        config,
        config_hash,
        out,
        manifest,
        source,
        target,
        corpus_id,
    };
    pipeline.manifest.mark_stage("ingest");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pipeline.config.jobs)
        .build()
        .map_err(|e| Error::invalid_config(format!("worker pool: {e}")))?;

    for &stage in goal.stages() {
        // Reports are regenerated on request; everything else is skipped
        // once complete.
        if stage != "report" && pipeline.manifest.stage_complete(stage) {
            eprintln!("stage {stage}: already complete, skipping");
            continue;
        }
        pipeline.manifest.clear_stage(stage);
        eprintln!("stage {stage}: running");
        let result = pool.install(|| run_stage(&mut pipeline, stage));
        if let Err(err) = result {
            // Stage-level fatal: persist what exists, then surface the error.
            pipeline.manifest.save(&pipeline.out)?;
            return Err(err);
        }
        pipeline.manifest.mark_stage(stage);
        pipeline.manifest.save(&pipeline.out)?;
    }

    Ok(pipeline.manifest)
}

fn run_stage(pipeline: &mut Pipeline, stage: &str) -> Result<()> {
    match stage {
        "pretrain" => pretrain_stage(pipeline),
        "finetune" => finetune_stage(pipeline),
        "evaluate" => evaluate_stage(pipeline),
        "features" => features_stage(pipeline),
        "cluster" => cluster_stage(pipeline),
        "rank" => rank_stage(pipeline),
        "report" => report_stage(pipeline),
        other => Err(Error::invalid_config(format!("unknown stage '{other}'"))),
    }
}

/// Mean sMAPE of rolling forecasts over the validation block: the score that
/// picks each model's input size. Origins run from the start of the
/// validation block to the last point whose full horizon still lies inside
/// it, so the test block never leaks into selection.
pub fn validation_smape(
    forecaster: &dyn Forecaster,
    series: &TimeSeries<f64>,
    horizon: usize,
    val_len: usize,
) -> Result<f64> {
    let n = series.values.len();
    if n < TEST_LEN + val_len {
        return Err(Error::TooShort {
            what: format!("series '{}' validation block", series.id),
            required: TEST_LEN + val_len,
            actual: n,
        });
    }
    let test_start = n - TEST_LEN;
    let val_start = test_start - val_len;
    if val_len < horizon {
        return Err(Error::invalid_config(format!(
            "validation block of {val_len} cannot score horizon {horizon}"
        )));
    }
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for origin in val_start..=(test_start - horizon) {
        let fc = forecaster.forecast(&series.values[..origin], horizon)?;
        y_true.extend_from_slice(&series.values[origin..origin + horizon]);
        y_pred.extend(fc);
    }
    smape(&y_true, &y_pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tsforge_core::forecasters::{fit_classical, ClassicalFamily};

    fn series(n: usize) -> TimeSeries<f64> {
        let values = (0..n)
            .map(|t| 80.0 + 10.0 * ((t % 12) as f64 - 5.5).abs() + 0.3 * t as f64)
            .collect();
        TimeSeries { id: "v1".into(), values, period: 12 }
    }

    #[test]
    fn goals_expand_to_ordered_stage_prefixes() {
        assert_eq!(Goal::Pretrain.stages(), ["pretrain"]);
        assert_eq!(Goal::Cluster.stages(), ["features", "cluster"]);
        assert_eq!(Goal::Run.stages().last(), Some(&"report"));
        // Every non-report goal's stages are a subset of the full run, in
        // the same relative order.
        let full = Goal::Run.stages();
        for goal in [Goal::Pretrain, Goal::Finetune, Goal::Evaluate, Goal::Features,
                     Goal::Cluster, Goal::Rank] {
            let mut cursor = 0;
            for stage in goal.stages() {
                let pos = full[cursor..].iter().position(|s| s == stage);
                assert!(pos.is_some(), "{stage} out of order for {goal:?}");
                cursor += pos.unwrap() + 1;
            }
        }
    }

    #[test]
    fn validation_smape_scores_only_the_validation_block() {
        let ts = series(96);
        // Fit up to the validation start so every rolling origin extends the
        // fitted prefix (classical forecasters insist on contiguous history).
        let model = fit_classical(ClassicalFamily::SeasonalNaive, &ts.values[..96 - 18 - 18]).unwrap();
        let score = validation_smape(&model, &ts, 3, 18).unwrap();
        assert!(score.is_finite() && score >= 0.0, "score {score}");
    }

    #[test]
    fn validation_smape_rejects_a_horizon_wider_than_the_block() {
        let ts = series(96);
        let model = fit_classical(ClassicalFamily::SeasonalNaive, &ts.values[..96 - 18 - 3]).unwrap();
        let err = validation_smape(&model, &ts, 6, 3).unwrap_err();
        assert!(err.to_string().contains("validation block"), "{err}");
    }

    #[test]
    fn artifact_paths_are_stable() {
        assert_eq!(Pipeline::global_rel("tcn", 3, 12), "models/global/tcn_h3_w12.json");
        assert_eq!(
            Pipeline::forecaster_rel("tcn_wot", 12, "m7"),
            "models/tcn_wot/h12/m7.json"
        );
    }
}
