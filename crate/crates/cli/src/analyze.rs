//! Series characterization and clustering stages.
//!
//! Characterization computes the eight-feature battery per target series
//! into `features.csv`; series whose features cannot be computed are
//! recorded as failures and excluded. Clustering reads that file back,
//! standardizes the informative columns (constant columns carry no
//! dissimilarity information and are dropped from the distance space, never
//! from the profile tables), partitions around medoids at the configured k,
//! and writes the assignment, the raw-mean cluster profiles, and a
//! silhouette/Calinski-Harabasz table over nearby k values.

use rayon::prelude::*;

use tsforge_core::analysis::{
    cluster_profiles, cluster_quality, compute_feature_vector, pam_cluster,
    standardize_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES,
};
use tsforge_core::{Error, Result};

use crate::manifest::write_output;
use crate::pipeline::Pipeline;

pub const FEATURES_FILE: &str = "features.csv";
pub const ASSIGNMENT_FILE: &str = "assignment.csv";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const QUALITY_FILE: &str = "quality.csv";

/// Computes the feature battery for every target series and writes
/// `features.csv`. A series that defeats some estimator (constant values,
/// too short for the spectral window) is recorded and left out.
pub fn features_stage(p: &mut Pipeline) -> Result<()> {
    let shared: &Pipeline = p;
    let results: Vec<(String, Result<FeatureVector>)> = shared
        .target
        .par_iter()
        .map(|ts| (ts.id.clone(), compute_feature_vector(&ts.id, &ts.values)))
        .collect();

    let mut rows: Vec<FeatureVector> = Vec::new();
    for (series_id, outcome) in results {
        match outcome {
            Ok(v) => rows.push(v),
            Err(err) => {
                eprintln!("  features for {series_id}: {err}");
                p.record_failure("features", &series_id, "", 0, &err);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty {
            what: "feature matrix".into(),
            detail: "no target series produced a feature vector".into(),
        });
    }

    let mut csv = format!("series_id,{}\n", FEATURE_NAMES.join(","));
    for row in &rows {
        csv.push_str(&row.series_id);
        for value in row.to_array() {
            csv.push(',');
            csv.push_str(&value.to_string());
        }
        csv.push('\n');
    }
    write_output(&p.out, FEATURES_FILE, csv.as_bytes(), &mut p.manifest)?;
    Ok(())
}

/// Clusters the characterized series and writes the assignment, the
/// raw-feature cluster profiles, and the quality sweep.
pub fn cluster_stage(p: &mut Pipeline) -> Result<()> {
    let (ids, raw) = read_features_csv(&p.out.join(FEATURES_FILE))?;
    let k = p.config.cluster_k;
    if ids.len() <= k {
        return Err(Error::ClusterCountOutOfRange { k, n: ids.len() });
    }

    // Standardize only the columns that vary: a feature constant across the
    // corpus (every series had zero flagged outliers, say) would make
    // standardization undefined while contributing nothing to distances.
    let (informative, dropped_columns) = informative_columns(&raw);
    if dropped_columns.len() == FEATURE_COUNT {
        return Err(Error::ZeroVariance {
            what: "every feature column".into(),
        });
    }
    for name in &dropped_columns {
        eprintln!("  feature '{name}' is constant across targets; excluded from distances");
    }
    let standardized = standardize_features(&informative)?;

    let assignment = pam_cluster(&standardized, k)?;
    let mut csv = String::from("series_id,cluster,is_medoid\n");
    for (i, id) in ids.iter().enumerate() {
        let is_medoid = assignment.medoids.contains(&i);
        csv.push_str(&format!("{id},{},{is_medoid}\n", assignment.labels[i]));
    }
    write_output(&p.out, ASSIGNMENT_FILE, csv.as_bytes(), &mut p.manifest)?;

    // Profile table in the classic layout: one row per feature, one column
    // per cluster, raw (unstandardized) means.
    let profiles = cluster_profiles(&raw, &assignment.labels, k)?;
    let mut csv = String::from("feature");
    for c in 0..k {
        csv.push_str(&format!(",cluster_{c}"));
    }
    csv.push('\n');
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        csv.push_str(name);
        for profile in profiles.iter() {
            csv.push(',');
            csv.push_str(&profile[j].to_string());
        }
        csv.push('\n');
    }
    write_output(&p.out, PROFILES_FILE, csv.as_bytes(), &mut p.manifest)?;

    // Quality sweep over the nearby k values (always including the chosen
    // one) so the report can show why k was reasonable.
    let mut ks: Vec<usize> = (2..=5).collect();
    if !ks.contains(&k) {
        ks.push(k);
    }
    ks.sort_unstable();
    let mut csv = String::from("k,silhouette,calinski_harabasz,chosen\n");
    for kk in ks {
        if kk >= ids.len() {
            continue;
        }
        let a = pam_cluster(&standardized, kk)?;
        let q = cluster_quality(&standardized, &a)?;
        csv.push_str(&format!(
            "{kk},{},{},{}\n",
            q.silhouette,
            q.calinski_harabasz,
            kk == k
        ));
    }
    write_output(&p.out, QUALITY_FILE, csv.as_bytes(), &mut p.manifest)?;
    Ok(())
}

/// Keeps the feature columns with any variation; returns the kept matrix and
/// the names of the dropped columns.
fn informative_columns(raw: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<String>) {
    let dim = raw.first().map_or(0, Vec::len);
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..dim {
        let first = raw[0][j];
        if raw.iter().any(|row| row[j] != first) {
            keep.push(j);
        } else {
            let name = FEATURE_NAMES
                .get(j)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("column {j}"));
            dropped.push(name);
        }
    }
    let kept = raw
        .iter()
        .map(|row| keep.iter().map(|&j| row[j]).collect())
        .collect();
    (kept, dropped)
}

/// Parses `features.csv` back into ids and the raw feature matrix.
pub fn read_features_csv(path: &std::path::Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Parse {
                row: i + 1,
                column: 1,
                detail: format!("features '{}': missing series id", path.display()),
            })?;
        let mut row = Vec::with_capacity(FEATURE_COUNT);
        for (j, field) in fields.enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: j + 2,
                detail: format!("features '{}': bad number '{field}'", path.display()),
            })?;
            row.push(value);
        }
        if row.len() != FEATURE_COUNT {
            return Err(Error::shape(
                "read_features_csv",
                format!("row {} has {} features, expected {FEATURE_COUNT}", i + 1, row.len()),
            ));
        }
        ids.push(id.to_string());
        rows.push(row);
    }
    if ids.is_empty() {
        return Err(Error::Empty {
            what: "feature matrix".into(),
            detail: format!("'{}' holds no rows", path.display()),
        });
    }
    Ok((ids, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_columns_are_dropped_by_name() {
        let raw = vec![
            vec![0.9, 0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.5],
            vec![0.1, 0.0, 2.0, 3.0, 4.0, 5.0, 0.0, 0.6],
            vec![0.5, 0.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.7],
        ];
        let (kept, dropped) = informative_columns(&raw);
        assert_eq!(kept[0].len(), 6);
        assert_eq!(dropped, vec!["season".to_string(), "outliers".to_string()]);
    }

    #[test]
    fn features_csv_round_trips_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FEATURES_FILE);
        let value = 0.123_456_789_012_345_68_f64;
        let mut csv = format!("series_id,{}\n", FEATURE_NAMES.join(","));
        csv.push_str("m1");
        for j in 0..FEATURE_COUNT {
            csv.push_str(&format!(",{}", value + j as f64));
        }
        csv.push('\n');
        std::fs::write(&path, csv).unwrap();
        let (ids, rows) = read_features_csv(&path).unwrap();
        assert_eq!(ids, vec!["m1".to_string()]);
        assert_eq!(rows[0][0].to_bits(), value.to_bits());
    }

    #[test]
    fn short_feature_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FEATURES_FILE);
        std::fs::write(&path, "series_id,a\nm1,0.5\n").unwrap();
        let err = read_features_csv(&path).unwrap_err();
        assert!(err.to_string().contains("expected 8"), "{err}");
    }
}
