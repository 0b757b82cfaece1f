//! Report rendering: one markdown document summarizing whatever the run has
//! produced so far.
//!
//! The renderer reads only files already on disk plus the manifest — never
//! the in-memory results of earlier stages — so `tsforge report` regenerates
//! the identical document from a finished output directory, and a report
//! over a partial run simply marks the missing stages "not run". Nothing
//! here depends on the clock or the environment: rendering is a pure
//! function of the output directory's contents.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use tsforge_core::dataset::input_sizes_for_horizon;
use tsforge_core::evaluation::{read_records_csv, CdReport};
use tsforge_core::Result;

use crate::analyze::{ASSIGNMENT_FILE, PROFILES_FILE, QUALITY_FILE};
use crate::evaluate::{RECORDS_FILE, SUMMARY_FILE};
use crate::manifest::write_output;
use crate::pipeline::{Goal, Pipeline};

/// Distinct series per input size, the unit of the window-share table.
type SeriesPerWindow = BTreeMap<usize, BTreeSet<String>>;

pub const REPORT_FILE: &str = "report.md";

const NOT_RUN: &str = "_not run_";

pub fn report_stage(p: &mut Pipeline) -> Result<()> {
    let md = render(p)?;
    write_output(&p.out, REPORT_FILE, md.as_bytes(), &mut p.manifest)
}

fn read_opt(path: &Path) -> Option<String> {
    fs::read_to_string(path).ok()
}

/// Escapes a value for a markdown table cell.
fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

fn render(p: &Pipeline) -> Result<String> {
    let mut md = String::new();
    md.push_str("# Transfer-learning forecast benchmark\n\n");
    md.push_str(&format!(
        "- configuration hash: `{}`\n- master seed: {}\n- source series: {} ({})\n\
         - target series: {}\n- horizons: {}\n- models: {}\n\n",
        p.config_hash,
        p.config.seed,
        p.source.len(),
        p.corpus_id,
        p.target.len(),
        p.config
            .sorted_horizons()
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        p.config
            .models
            .iter()
            .map(|m| m.model_name())
            .collect::<Vec<_>>()
            .join(", "),
    ));

    render_performance(p, &mut md);
    render_input_sizes(p, &mut md);
    render_clusters(p, &mut md);
    render_rankings(p, &mut md);
    render_failures(p, &mut md);
    render_deviations(&mut md);
    render_stage_status(p, &mut md);
    Ok(md)
}

/// Per-horizon mean MAPE/sMAPE over target series (the performance-table
/// analog).
fn render_performance(p: &Pipeline, md: &mut String) {
    md.push_str("## Performance by horizon\n\n");
    md.push_str(
        "Unweighted means over target series of per-series rolling-origin errors \
         (first averaged within each series, then across series).\n\n",
    );
    let Some(raw) = read_opt(&p.out.join(SUMMARY_FILE)) else {
        md.push_str(NOT_RUN);
        md.push_str("\n\n");
        return;
    };
    // model,horizon,mape,smape,series_count
    let mut by_horizon: BTreeMap<usize, Vec<(String, String, String, String)>> = BTreeMap::new();
    for line in raw.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            continue;
        }
        if let Ok(h) = f[1].parse::<usize>() {
            by_horizon.entry(h).or_default().push((
                f[0].to_string(),
                trim_float(f[2]),
                trim_float(f[3]),
                f[4].to_string(),
            ));
        }
    }
    for (h, mut rows) in by_horizon {
        rows.sort();
        md.push_str(&format!("### Horizon {h}\n\n"));
        md.push_str("| model | MAPE | sMAPE | series |\n|---|---|---|---|\n");
        for (model, mape, smape, count) in rows {
            md.push_str(&format!("| {model} | {mape} | {smape} | {count} |\n"));
        }
        md.push('\n');
    }
}

/// Shortens a full-precision decimal for display; the CSV keeps the exact
/// value.
fn trim_float(field: &str) -> String {
    match field.parse::<f64>() {
        Ok(v) => format!("{v:.4}"),
        Err(_) => field.to_string(),
    }
}

/// Distribution of selected input sizes per neural model and horizon (the
/// input-size-table analog).
fn render_input_sizes(p: &Pipeline, md: &mut String) {
    md.push_str("## Selected input sizes\n\n");
    md.push_str(
        "Share of target series whose validation block picked each candidate window.\n\n",
    );
    let path = p.out.join(RECORDS_FILE);
    if !path.is_file() {
        md.push_str(NOT_RUN);
        md.push_str("\n\n");
        return;
    }
    let Ok(records) = read_records_csv(&path) else {
        md.push_str(NOT_RUN);
        md.push_str("\n\n");
        return;
    };
    // (model, horizon) -> input size -> distinct series.
    let mut chosen: BTreeMap<(String, usize), BTreeMap<usize, BTreeSet<String>>> = BTreeMap::new();
    for r in &records {
        if r.input_size == 0 {
            continue;
        }
        chosen
            .entry((r.model.clone(), r.horizon))
            .or_default()
            .entry(r.input_size)
            .or_default()
            .insert(r.series_id.clone());
    }
    if chosen.is_empty() {
        md.push_str("No windowed models were evaluated.\n\n");
        return;
    }
    for h in p.config.sorted_horizons() {
        let candidates = match input_sizes_for_horizon(h) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let rows: Vec<(&(String, usize), &SeriesPerWindow)> =
            chosen.iter().filter(|((_, rh), _)| *rh == h).collect();
        if rows.is_empty() {
            continue;
        }
        md.push_str(&format!("### Horizon {h}\n\n| model |"));
        for w in &candidates {
            md.push_str(&format!(" w={w} |"));
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(candidates.len()));
        md.push('\n');
        for ((model, _), per_w) in rows {
            let total: usize = per_w.values().map(BTreeSet::len).sum();
            md.push_str(&format!("| {model} |"));
            for w in &candidates {
                let count = per_w.get(w).map_or(0, BTreeSet::len);
                if total == 0 {
                    md.push_str(" - |");
                } else {
                    md.push_str(&format!(" {:.0}% |", 100.0 * count as f64 / total as f64));
                }
            }
            md.push('\n');
        }
        md.push('\n');
    }
}

/// Cluster sizes, quality sweep, and raw-feature profiles (the
/// cluster-profile-table analog).
fn render_clusters(p: &Pipeline, md: &mut String) {
    md.push_str("## Series clusters\n\n");
    let Some(assignment) = read_opt(&p.out.join(ASSIGNMENT_FILE)) else {
        md.push_str(NOT_RUN);
        md.push_str("\n\n");
        return;
    };

    let mut sizes: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
    for line in assignment.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            continue;
        }
        let entry = sizes.entry(f[1].to_string()).or_default();
        entry.0 += 1;
        if f[2] == "true" {
            entry.1.push(f[0].to_string());
        }
    }
    md.push_str("| cluster | series | medoid |\n|---|---|---|\n");
    for (cluster, (count, medoids)) in &sizes {
        md.push_str(&format!("| {cluster} | {count} | {} |\n", medoids.join(", ")));
    }
    md.push('\n');

    if let Some(quality) = read_opt(&p.out.join(QUALITY_FILE)) {
        md.push_str(
            "Medoid partitions at nearby k (silhouette higher is better, \
             Calinski-Harabasz higher is better):\n\n",
        );
        md.push_str("| k | silhouette | Calinski-Harabasz | chosen |\n|---|---|---|---|\n");
        for line in quality.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                continue;
            }
            md.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                f[0],
                trim_float(f[1]),
                trim_float(f[2]),
                if f[3] == "true" { "yes" } else { "" }
            ));
        }
        md.push('\n');
    }

    if let Some(profiles) = read_opt(&p.out.join(PROFILES_FILE)) {
        md.push_str("Mean raw feature values per cluster:\n\n");
        let mut lines = profiles.lines().filter(|l| !l.trim().is_empty());
        if let Some(header) = lines.next() {
            md.push_str(&format!("| {} |\n", header.split(',').collect::<Vec<_>>().join(" | ")));
            md.push_str(&format!("|{}\n", "---|".repeat(header.split(',').count())));
            for line in lines {
                let cells: Vec<String> = line
                    .split(',')
                    .enumerate()
                    .map(|(i, f)| if i == 0 { f.to_string() } else { trim_float(f) })
                    .collect();
                md.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
        }
        md.push('\n');
    }
}

/// One subsection per ranking artifact: ordered mean ranks, the Friedman
/// statistic, the critical difference, and the groups the CD cannot
/// separate, with a pointer to the rendered diagram.
fn render_rankings(p: &Pipeline, md: &mut String) {
    md.push_str("## Model ranking\n\n");
    let ranking_files = p.manifest.files_under("ranking/");
    if ranking_files.is_empty() {
        md.push_str(NOT_RUN);
        md.push_str("\n\n");
        return;
    }
    for rel in ranking_files {
        let Some(raw) = read_opt(&p.out.join(&rel)) else {
            continue;
        };
        let Ok(report) = serde_json::from_str::<CdReport>(&raw) else {
            continue;
        };
        let stem = rel.trim_start_matches("ranking/").trim_end_matches(".json");
        md.push_str(&format!("### {}\n\n", report.metric));
        md.push_str(&format!(
            "Friedman statistic {:.4} over {} blocks; critical difference {:.4} at alpha {}.\n\n",
            report.friedman_statistic, report.blocks, report.critical_difference, report.alpha
        ));
        md.push_str("| rank | model | mean rank |\n|---|---|---|\n");
        for (i, (model, rank)) in report.models.iter().zip(&report.mean_ranks).enumerate() {
            md.push_str(&format!("| {} | {model} | {rank:.4} |\n", i + 1));
        }
        md.push('\n');
        let tied: Vec<String> = report
            .groups
            .iter()
            .filter(|g| g.len() > 1)
            .map(|g| {
                let names: Vec<&str> =
                    g.iter().map(|&i| report.models[i].as_str()).collect();
                format!("{{{}}}", names.join(", "))
            })
            .collect();
        if tied.is_empty() {
            md.push_str("Every pairwise gap exceeds the critical difference.\n");
        } else {
            md.push_str(&format!(
                "Not separated by the critical difference: {}.\n",
                tied.join(", ")
            ));
        }
        md.push_str(&format!("\nDiagram: `figures/cd_{stem}.svg`\n\n"));
    }
}

fn render_failures(p: &Pipeline, md: &mut String) {
    md.push_str("## Recorded task failures\n\n");
    if p.manifest.failures.is_empty() {
        md.push_str("None.\n\n");
        return;
    }
    md.push_str("| stage | series | model | horizon | detail |\n|---|---|---|---|---|\n");
    for f in &p.manifest.failures {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            f.stage,
            cell(&f.series),
            cell(&f.model),
            f.horizon,
            cell(&f.detail)
        ));
    }
    md.push('\n');
}

fn render_deviations(md: &mut String) {
    md.push_str("## Methodological notes\n\n");
    md.push_str(
        "- sMAPE uses the halved-denominator form `mean(|y - f| / ((|y| + |f|) / 2))`, \
         reported as a fraction.\n\
         - Input sizes are selected per (series, model, horizon) by rolling sMAPE over the \
         validation block, never on test data; the selection shares the windows listed in \
         the per-horizon candidate sets.\n\
         - The outlier feature flags remainder points beyond three robust standard \
         deviations (median absolute deviation scaled by 1.4826) of a classical \
         moving-average decomposition, a simplification of model-based outlier detection.\n\
         - Seasonal decomposition is the classical 2x12 moving-average form; stationarity \
         uses the augmented Dickey-Fuller regression with a constant and the MacKinnon \
         response-surface p-value; nonlinearity is the Terasvirta neural-network test on a \
         rank-tolerant basis.\n\
         - Per-cluster critical-difference diagrams pool (series, horizon) pairs as blocks; \
         ranking keeps only series scored by every model, and the exclusions are listed \
         under failures.\n\n",
    );
}

fn render_stage_status(p: &Pipeline, md: &mut String) {
    md.push_str("## Stage status\n\n| stage | status |\n|---|---|\n");
    md.push_str("| ingest | complete |\n");
    for &stage in Goal::Run.stages() {
        let status = if p.manifest.stage_complete(stage) {
            "complete"
        } else if stage == "report" {
            // The report you are reading is being produced right now.
            "complete"
        } else {
            "not run"
        };
        md.push_str(&format!("| {stage} | {status} |\n"));
    }
    md.push('\n');
}
