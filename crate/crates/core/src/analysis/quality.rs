//! Internal cluster validity measures and per-cluster feature profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::pam::ClusterAssignment;

/// Validity scores for one clustering of one point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    /// Mean silhouette over all points, in [-1, 1]; higher is better.
    pub silhouette: f64,
    /// Calinski-Harabasz variance-ratio index; higher is better.
    pub calinski_harabasz: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn validate(points: &[Vec<f64>], assignment: &ClusterAssignment) -> Result<()> {
    let n = points.len();
    let k = assignment.k;
    if k < 2 || n <= k {
        return Err(Error::ClusterCountOutOfRange { k, n });
    }
    if assignment.labels.len() != n {
        return Err(Error::shape(
            "cluster_quality",
            format!("{} labels for {n} points", assignment.labels.len()),
        ));
    }
    if let Some(&bad) = assignment.labels.iter().find(|&&l| l >= k) {
        return Err(Error::shape(
            "cluster_quality",
            format!("label {bad} out of range for k={k}"),
        ));
    }
    Ok(())
}

/// Silhouette and Calinski-Harabasz scores for an assignment produced by
/// `pam_cluster` (or any labeling with the same shape).
pub fn cluster_quality(
    points: &[Vec<f64>],
    assignment: &ClusterAssignment,
) -> Result<ClusterQuality> {
    validate(points, assignment)?;
    let n = points.len();
    let k = assignment.k;
    let labels = &assignment.labels;
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Empty {
            what: format!("cluster {empty}"),
            detail: "no points assigned".into(),
        });
    }

    // Silhouette: a(i) is the mean distance to the point's own cluster,
    // b(i) the smallest mean distance to any other cluster. Singletons
    // score 0 by convention.
    let mut silhouette_sum = 0.0;
    for i in 0..n {
        if sizes[labels[i]] == 1 {
            continue;
        }
        let mut dist_sum = vec![0.0f64; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            dist_sum[labels[j]] += euclidean(&points[i], &points[j]);
        }
        let own = labels[i];
        let a = dist_sum[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c == own {
                continue;
            }
            let mean = dist_sum[c] / sizes[c] as f64;
            if mean < b {
                b = mean;
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            silhouette_sum += (b - a) / denom;
        }
    }
    let silhouette = silhouette_sum / n as f64;

    // Calinski-Harabasz about centroids: between-cluster dispersion over
    // within-cluster dispersion, each scaled by its degrees of freedom.
    let dim = points[0].len();
    let mut global = vec![0.0f64; dim];
    let mut centroids = vec![vec![0.0f64; dim]; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        for (j, &v) in p.iter().enumerate() {
            global[j] += v;
            centroids[l][j] += v;
        }
    }
    for g in global.iter_mut() {
        *g /= n as f64;
    }
    for (c, &size) in centroids.iter_mut().zip(sizes.iter()) {
        for v in c.iter_mut() {
            *v /= size as f64;
        }
    }
    let mut within = 0.0;
    for (p, &l) in points.iter().zip(labels.iter()) {
        within += p
            .iter()
            .zip(centroids[l].iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let mut between = 0.0;
    for (c, &size) in centroids.iter().zip(sizes.iter()) {
        between += size as f64
            * c.iter()
                .zip(global.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
    }
    let calinski_harabasz = if within <= 1e-300 {
        f64::INFINITY
    } else {
        (between / (k - 1) as f64) / (within / (n - k) as f64)
    };

    Ok(ClusterQuality {
        silhouette,
        calinski_harabasz,
    })
}

/// Per-cluster means of the raw (unstandardized) feature rows. Returns one
/// row per cluster, one column per feature; downstream tables transpose
/// this into the feature-by-cluster layout.
pub fn cluster_profiles(
    features: &[Vec<f64>],
    labels: &[usize],
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    if features.is_empty() {
        return Err(Error::Empty {
            what: "feature matrix".into(),
            detail: "no rows to profile".into(),
        });
    }
    if labels.len() != features.len() {
        return Err(Error::shape(
            "cluster_profiles",
            format!("{} labels for {} rows", labels.len(), features.len()),
        ));
    }
    let dim = features[0].len();
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut sizes = vec![0usize; k];
    for (row, &l) in features.iter().zip(labels.iter()) {
        if l >= k {
            return Err(Error::shape(
                "cluster_profiles",
                format!("label {l} out of range for k={k}"),
            ));
        }
        if row.len() != dim {
            return Err(Error::shape(
                "cluster_profiles",
                format!("row has {} columns, expected {dim}", row.len()),
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            sums[l][j] += v;
        }
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Empty {
            what: format!("cluster {empty}"),
            detail: "no rows assigned".into(),
        });
    }
    for (row, &size) in sums.iter_mut().zip(sizes.iter()) {
        for v in row.iter_mut() {
            *v /= size as f64;
        }
    }
    Ok(sums)
}
