//! Friedman rank test over per-series scores and the Nemenyi critical
//! difference for the post-hoc grouping of models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::rolling::SeriesScore;

/// Which accuracy metric feeds the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mape,
    Smape,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mape => "mape",
            Metric::Smape => "smape",
        }
    }

    pub fn of(self, score: &SeriesScore) -> f64 {
        match self {
            Metric::Mape => score.mape,
            Metric::Smape => score.smape,
        }
    }
}

/// Two-sided Nemenyi q values at alpha = 0.05 for k = 2..=20 treatments
/// (studentized range quantiles divided by sqrt(2)).
const NEMENYI_Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];

/// Same at alpha = 0.10.
const NEMENYI_Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.078, 3.122,
    3.162, 3.199, 3.233, 3.266, 3.296, 3.325,
];

/// Ranks one block's scores ascending (rank 1 = best), averaging ties.
fn midranks(row: &[f64]) -> Vec<f64> {
    let k = row.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("finite scores"));
    let mut ranks = vec![0.0; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average of ranks i+1 ..= j+1.
        let shared = (i + j + 2) as f64 / 2.0;
        for &col in &order[i..=j] {
            ranks[col] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman test result over N blocks and k treatments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Mean rank per treatment (column), rank 1 = best.
    pub mean_ranks: Vec<f64>,
    /// The chi-squared statistic 12N/(k(k+1)) * sum_j (R_j - (k+1)/2)^2.
    pub statistic: f64,
    pub blocks: usize,
    pub treatments: usize,
}

/// Friedman chi-squared over a blocks x treatments score matrix (lower
/// scores are better). Ties within a block take midranks.
pub fn friedman_statistic(matrix: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::Empty {
            what: "friedman blocks".into(),
            detail: "the score matrix has no rows".into(),
        });
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(Error::invalid_config(format!(
            "friedman needs at least 2 treatments, got {k}"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    for (bi, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(Error::shape(
                "friedman_statistic",
                format!("block {bi} has {} scores, expected {k}", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                primitive: "friedman_statistic".into(),
            });
        }
        for (sum, r) in rank_sums.iter_mut().zip(midranks(row)) {
            *sum += r;
        }
    }
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();
    let center = (k + 1) as f64 / 2.0;
    let spread: f64 = mean_ranks.iter().map(|r| (r - center) * (r - center)).sum();
    let statistic = 12.0 * n as f64 / (k * (k + 1)) as f64 * spread;
    Ok(FriedmanResult {
        mean_ranks,
        statistic,
        blocks: n,
        treatments: k,
    })
}

/// Nemenyi critical difference q_alpha(k) * sqrt(k(k+1) / (6N)) for
/// alpha in {0.05, 0.10} and k in 2..=20.
pub fn nemenyi_critical_difference(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if !(2..=20).contains(&k) {
        return Err(Error::invalid_config(format!(
            "nemenyi table covers 2..=20 treatments, got {k}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid_config("nemenyi needs at least one block"));
    }
    let q = if (alpha - 0.05).abs() < 1e-12 {
        NEMENYI_Q_05[k - 2]
    } else if (alpha - 0.10).abs() < 1e-12 {
        NEMENYI_Q_10[k - 2]
    } else {
        return Err(Error::invalid_config(format!(
            "nemenyi table covers alpha 0.05 and 0.10, got {alpha}"
        )));
    };
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

/// Maximal groups of adjacent treatments whose mean ranks span at most the
/// critical difference; `sorted_ranks` must be ascending. Indices refer to
/// the sorted order. Singletons appear when a treatment joins no group.
pub fn rank_groups(sorted_ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let k = sorted_ranks.len();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut prev_end: Option<usize> = None;
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && sorted_ranks[end + 1] - sorted_ranks[start] <= cd {
            end += 1;
        }
        // Keep only maximal intervals: an interval ending where an earlier
        // one ended is contained in it.
        if prev_end.is_none_or(|p| end > p) {
            groups.push((start..=end).collect());
            prev_end = Some(end);
        }
    }
    groups
}

/// Complete ranking with the post-hoc grouping, ready to plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdReport {
    pub metric: String,
    pub alpha: f64,
    /// Models sorted by mean rank, best first.
    pub models: Vec<String>,
    /// Mean ranks aligned with `models`.
    pub mean_ranks: Vec<f64>,
    pub friedman_statistic: f64,
    pub critical_difference: f64,
    pub blocks: usize,
    /// Groups of indices into `models` not separated by the CD.
    pub groups: Vec<Vec<usize>>,
}

/// Builds a blocks x treatments matrix from per-series scores, one row per
/// series, columns sorted by model name. Every (series, model) cell must be
/// present exactly once; the scores must share one horizon.
pub fn ranking_matrix(
    scores: &[SeriesScore],
    metric: Metric,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if scores.is_empty() {
        return Err(Error::Empty {
            what: "ranking scores".into(),
            detail: "no per-series scores to rank".into(),
        });
    }
    let horizon = scores[0].horizon;
    let mut models: Vec<String> = Vec::new();
    let mut series: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for s in scores {
        if s.horizon != horizon {
            return Err(Error::shape(
                "ranking_matrix",
                format!("mixed horizons {horizon} and {}", s.horizon),
            ));
        }
        if !models.contains(&s.model) {
            models.push(s.model.clone());
        }
        if !series.contains(&s.series_id) {
            series.push(s.series_id.clone());
        }
        if cells
            .insert((s.series_id.clone(), s.model.clone()), metric.of(s))
            .is_some()
        {
            return Err(Error::shape(
                "ranking_matrix",
                format!("duplicate score for series '{}', model '{}'", s.series_id, s.model),
            ));
        }
    }
    models.sort();
    series.sort();
    let mut matrix = Vec::with_capacity(series.len());
    for sid in &series {
        let mut row = Vec::with_capacity(models.len());
        for m in &models {
            match cells.get(&(sid.clone(), m.clone())) {
                Some(&v) => row.push(v),
                None => {
                    return Err(Error::MissingCell {
                        series: sid.clone(),
                        model: m.clone(),
                    })
                }
            }
        }
        matrix.push(row);
    }
    Ok((models, matrix))
}

/// Runs the Friedman test and Nemenyi grouping over a score matrix whose
/// columns follow `models`.
pub fn build_cd_report(
    models: &[String],
    matrix: &[Vec<f64>],
    alpha: f64,
    metric: &str,
) -> Result<CdReport> {
    let friedman = friedman_statistic(matrix)?;
    if friedman.treatments != models.len() {
        return Err(Error::shape(
            "build_cd_report",
            format!(
                "{} model names for {} matrix columns",
                models.len(),
                friedman.treatments
            ),
        ));
    }
    let cd = nemenyi_critical_difference(friedman.treatments, friedman.blocks, alpha)?;
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| {
        friedman.mean_ranks[a]
            .partial_cmp(&friedman.mean_ranks[b])
            .expect("finite ranks")
            .then(models[a].cmp(&models[b]))
    });
    let sorted_models: Vec<String> = order.iter().map(|&i| models[i].clone()).collect();
    let sorted_ranks: Vec<f64> = order.iter().map(|&i| friedman.mean_ranks[i]).collect();
    let groups = rank_groups(&sorted_ranks, cd);
    Ok(CdReport {
        metric: metric.to_string(),
        alpha,
        models: sorted_models,
        mean_ranks: sorted_ranks,
        friedman_statistic: friedman.statistic,
        critical_difference: cd,
        blocks: friedman.blocks,
        groups,
    })
}
