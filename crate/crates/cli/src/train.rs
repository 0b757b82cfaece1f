//! Training stages: global pre-training on the source corpus, then
//! per-target adaptation with validation-driven input-size selection.
//!
//! Pre-training produces one global model per (transfer family, horizon,
//! candidate window). Adaptation then trains every candidate per target
//! series — last-layer fine-tuning from the global model, or from scratch
//! for the `_wot` baselines — scores each candidate by rolling sMAPE over
//! the validation block, and persists only the winner. Both stages
//! parallelize over independent tasks and fold results back in a fixed
//! order, so the artifacts are byte-identical at any worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;

use tsforge_core::dataset::{input_sizes_for_horizon, TimeSeries};
use tsforge_core::evaluation::select_best_input_size;
use tsforge_core::forecasters::{
    EarlyStopPolicy, NetworkConfig, NeuralForecaster, TrainedForecaster,
};
use tsforge_core::transfer::{
    assemble_source_corpus, fine_tune_target, pretrain_global, train_without_transfer,
    FineTunePolicy, GlobalModel,
};
use tsforge_core::{Error, Result};

use crate::artifact::{artifact_bytes, load_model, ModelArtifact, Provenance};
use crate::config::ModelEntry;
use crate::manifest::write_output;
use crate::pipeline::{validation_smape, Pipeline};

/// Trains one global model per (family, horizon, candidate input size) for
/// every neural entry that uses transfer. A task that fails (for example a
/// source corpus with no usable series at some window) is recorded and the
/// remaining tasks proceed; adaptation will select among the windows whose
/// global model exists.
pub fn pretrain_stage(p: &mut Pipeline) -> Result<()> {
    let mut tasks: Vec<(ModelEntry, usize, usize)> = Vec::new();
    for entry in p.config.neural_entries() {
        if !entry.with_transfer() {
            continue;
        }
        for h in p.config.sorted_horizons() {
            for w in input_sizes_for_horizon(h)? {
                tasks.push((entry.clone(), h, w));
            }
        }
    }
    if tasks.is_empty() {
        eprintln!("  no transfer models configured; nothing to pre-train");
        return Ok(());
    }

    let val_len = p.config.validation_len;
    let policy = p.config.pretrain.policy();
    let shared: &Pipeline = p;
    let results: Vec<(String, usize, usize, Result<ModelArtifact>)> = tasks
        .par_iter()
        .map(|(entry, h, w)| {
            let outcome = (|| {
                let corpus = assemble_source_corpus(&shared.source, *w, *h, val_len)?;
                let config = NetworkConfig::new(*w, *h, entry.network_settings()?);
                let seed = shared.seed_for(&[
                    "pretrain",
                    &entry.family,
                    &w.to_string(),
                    &h.to_string(),
                ]);
                let global = pretrain_global(&config, &corpus, &policy, seed)?;
                Ok(ModelArtifact::global(
                    global,
                    Provenance {
                        corpus_id: shared.corpus_id.clone(),
                        seed,
                        config_hash: shared.config_hash.clone(),
                    },
                ))
            })();
            (entry.family.clone(), *h, *w, outcome)
        })
        .collect();

    for (family, h, w, outcome) in results {
        match outcome {
            Ok(artifact) => {
                let rel = Pipeline::global_rel(&family, h, w);
                write_output(&p.out, &rel, &artifact_bytes(&artifact), &mut p.manifest)?;
            }
            Err(err) => {
                eprintln!("  pretrain {family} h={h} w={w} failed: {err}");
                p.record_failure("pretrain", "", &family, h, &err);
            }
        }
    }
    Ok(())
}

/// Outcome of adapting one model entry to one target series at one horizon.
struct AdaptResult {
    series_id: String,
    /// The winning forecaster and the seed that trained it.
    winner: Option<(NeuralForecaster, u64)>,
    /// Per-candidate failures: (input size, error).
    candidate_failures: Vec<(usize, Error)>,
    /// Set when no candidate survived at all.
    fatal: Option<Error>,
}

/// Adapts every neural entry to every target series at every horizon and
/// persists one chosen-window forecaster per (model, horizon, series).
pub fn finetune_stage(p: &mut Pipeline) -> Result<()> {
    let entries: Vec<ModelEntry> = p.config.neural_entries().into_iter().cloned().collect();
    if entries.is_empty() {
        eprintln!("  no neural models configured; nothing to adapt");
        return Ok(());
    }
    let val_len = p.config.validation_len;
    let ft_policy = p.config.fine_tune.policy();
    // From-scratch baselines share the per-target early-stopping budget.
    let scratch_policy = ft_policy.early_stop;

    for entry in entries {
        let model_name = entry.model_name();
        for h in p.config.sorted_horizons() {
            let candidates = input_sizes_for_horizon(h)?;

            // Transfer entries adapt from the stage-1 globals; windows whose
            // global model is missing (failed or skipped pre-training) drop
            // out of the candidate set.
            let mut globals: BTreeMap<usize, GlobalModel> = BTreeMap::new();
            if entry.with_transfer() {
                for &w in &candidates {
                    let rel = Pipeline::global_rel(&entry.family, h, w);
                    let path = p.out.join(&rel);
                    if !path.is_file() {
                        continue;
                    }
                    match load_model(&path).and_then(ModelArtifact::into_global) {
                        Ok(g) => {
                            globals.insert(w, g);
                        }
                        Err(err) => {
                            eprintln!("  {rel} unreadable: {err}");
                            p.record_failure("finetune", "*", &model_name, h, &err);
                        }
                    }
                }
                if globals.is_empty() {
                    let err = Error::invalid_config(format!(
                        "no global {} model available at horizon {h}; pre-training failed for \
                         every candidate window",
                        entry.family
                    ));
                    eprintln!("  {err}");
                    p.record_failure("finetune", "*", &model_name, h, &err);
                    continue;
                }
            }
            let windows: Vec<usize> = if entry.with_transfer() {
                globals.keys().copied().collect()
            } else {
                candidates
            };

            let shared: &Pipeline = p;
            let results: Vec<AdaptResult> = shared
                .target
                .par_iter()
                .map(|ts| {
                    adapt_one(
                        shared,
                        &entry,
                        &model_name,
                        h,
                        ts,
                        &windows,
                        &globals,
                        &ft_policy,
                        &scratch_policy,
                        val_len,
                    )
                })
                .collect();

            for result in results {
                for (w, err) in &result.candidate_failures {
                    let detail = Error::invalid_config(format!("input size {w}: {err}"));
                    p.record_failure("finetune", &result.series_id, &model_name, h, &detail);
                }
                match (result.winner, result.fatal) {
                    (Some((forecaster, seed)), _) => {
                        let artifact = ModelArtifact::forecaster(
                            TrainedForecaster::Neural(forecaster),
                            Provenance {
                                corpus_id: result.series_id.clone(),
                                seed,
                                config_hash: p.config_hash.clone(),
                            },
                        );
                        let rel = Pipeline::forecaster_rel(&model_name, h, &result.series_id);
                        write_output(&p.out, &rel, &artifact_bytes(&artifact), &mut p.manifest)?;
                    }
                    (None, Some(err)) => {
                        eprintln!(
                            "  {model_name} h={h} series {} failed: {err}",
                            result.series_id
                        );
                        p.record_failure("finetune", &result.series_id, &model_name, h, &err);
                    }
                    (None, None) => unreachable!("adapt_one yields a winner or a fatal error"),
                }
            }
        }
    }
    Ok(())
}

/// Trains every candidate window for one (entry, series, horizon), scores
/// each on the validation block, and returns the best. Individual window
/// failures are tolerated as long as at least one candidate survives.
#[allow(clippy::too_many_arguments)]
fn adapt_one(
    p: &Pipeline,
    entry: &ModelEntry,
    model_name: &str,
    horizon: usize,
    ts: &TimeSeries<f64>,
    windows: &[usize],
    globals: &BTreeMap<usize, GlobalModel>,
    ft_policy: &FineTunePolicy,
    scratch_policy: &EarlyStopPolicy,
    val_len: usize,
) -> AdaptResult {
    let mut trained: BTreeMap<usize, (NeuralForecaster, u64)> = BTreeMap::new();
    let mut scores: Vec<(usize, f64)> = Vec::new();
    let mut candidate_failures: Vec<(usize, Error)> = Vec::new();

    for &w in windows {
        let (seed, outcome) = if entry.with_transfer() {
            let seed = p.seed_for(&[
                "finetune", model_name, &ts.id, &w.to_string(), &horizon.to_string(),
            ]);
            (seed, fine_tune_target(&globals[&w], ts, val_len, ft_policy, seed))
        } else {
            let seed = p.seed_for(&[
                "scratch", model_name, &ts.id, &w.to_string(), &horizon.to_string(),
            ]);
            let outcome = entry.network_settings().and_then(|settings| {
                let config = NetworkConfig::new(w, horizon, settings);
                train_without_transfer(&config, ts, val_len, scratch_policy, seed)
            });
            (seed, outcome)
        };
        match outcome.and_then(|f| validation_smape(&f, ts, horizon, val_len).map(|s| (f, s))) {
            Ok((forecaster, score)) => {
                scores.push((w, score));
                trained.insert(w, (forecaster, seed));
            }
            Err(err) => candidate_failures.push((w, err)),
        }
    }

    if scores.is_empty() {
        let detail = candidate_failures
            .iter()
            .map(|(w, e)| format!("w={w}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        // The per-window entries already tell the story; the fatal record
        // summarizes so the series' absence downstream is explained even if
        // a reader only looks at one entry.
        candidate_failures.clear();
        return AdaptResult {
            series_id: ts.id.clone(),
            winner: None,
            candidate_failures,
            fatal: Some(Error::invalid_config(format!(
                "every candidate window failed: {detail}"
            ))),
        };
    }

    let surviving: Vec<usize> = scores.iter().map(|&(w, _)| w).collect();
    let chosen = match select_best_input_size(&surviving, &scores, &ts.id, model_name, horizon) {
        Ok(w) => w,
        Err(err) => {
            return AdaptResult {
                series_id: ts.id.clone(),
                winner: None,
                candidate_failures,
                fatal: Some(err),
            }
        }
    };
    let winner = trained.remove(&chosen).expect("chosen window was trained");
    AdaptResult {
        series_id: ts.id.clone(),
        winner: Some(winner),
        candidate_failures,
        fatal: None,
    }
}
