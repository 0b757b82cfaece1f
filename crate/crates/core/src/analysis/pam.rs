//! Partitioning Around Medoids: greedy BUILD seeding followed by
//! best-improvement SWAP refinement, with Euclidean distances and
//! deterministic lowest-index tie-breaking throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of a PAM run. Medoids are data indices, sorted ascending, and
/// `labels[i]` is the position in `medoids` of the point's cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub medoids: Vec<usize>,
    pub labels: Vec<usize>,
    /// Sum over all points of the distance to their medoid.
    pub total_cost: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Full pairwise distance matrix; also validates dimensions and finiteness.
fn distance_matrix(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::shape(
                "pam_cluster",
                format!("point {i} has {} coordinates, expected {dim}", p.len()),
            ));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                primitive: format!("pam_cluster point {i}"),
            });
        }
    }
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dist = euclidean(&points[i], &points[j]);
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    Ok(d)
}

/// Total cost of a medoid set: each point contributes its distance to the
/// nearest medoid.
fn cost_of(d: &[Vec<f64>], medoids: &[usize]) -> f64 {
    let mut total = 0.0;
    for row in d {
        let mut best = f64::INFINITY;
        for &m in medoids {
            if row[m] < best {
                best = row[m];
            }
        }
        total += best;
    }
    total
}

/// Greedy BUILD phase: start from the point with the smallest total
/// distance, then repeatedly add the candidate with the largest cost
/// reduction. Ties keep the lowest index.
fn build_phase(d: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut first = 0;
    let mut first_cost = f64::INFINITY;
    for (i, row) in d.iter().enumerate() {
        let cost: f64 = row.iter().sum();
        if cost < first_cost {
            first_cost = cost;
            first = i;
        }
    }
    let mut medoids = vec![first];
    let mut nearest: Vec<f64> = d[first].clone();
    while medoids.len() < k {
        let mut best_candidate = None;
        let mut best_gain = f64::NEG_INFINITY;
        for (c, row) in d.iter().enumerate() {
            if medoids.contains(&c) {
                continue;
            }
            let gain: f64 = nearest
                .iter()
                .zip(row)
                .map(|(near, dist)| (near - dist).max(0.0))
                .sum();
            if gain > best_gain {
                best_gain = gain;
                best_candidate = Some(c);
            }
        }
        let c = best_candidate.expect("k < n leaves a candidate");
        for (near, dist) in nearest.iter_mut().zip(&d[c]) {
            if dist < near {
                *near = *dist;
            }
        }
        medoids.push(c);
    }
    medoids
}

/// SWAP phase: apply the single best-improving medoid/non-medoid exchange
/// until no exchange lowers the cost. Cost is monotonically non-increasing
/// across iterations.
fn swap_phase(d: &[Vec<f64>], medoids: &mut [usize]) {
    let n = d.len();
    let mut current = cost_of(d, medoids);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for pos in 0..medoids.len() {
            let original = medoids[pos];
            for candidate in 0..n {
                if medoids.contains(&candidate) {
                    continue;
                }
                medoids[pos] = candidate;
                let cost = cost_of(d, medoids);
                medoids[pos] = original;
                if cost < current - 1e-12 && best.is_none_or(|(.., b)| cost < b) {
                    best = Some((pos, candidate, cost));
                }
            }
        }
        match best {
            Some((pos, candidate, cost)) => {
                debug_assert!(cost <= current);
                medoids[pos] = candidate;
                current = cost;
            }
            None => return,
        }
    }
}

/// Clusters `points` into `k` groups around medoids. Requires 2 <= k < n.
pub fn pam_cluster(points: &[Vec<f64>], k: usize) -> Result<ClusterAssignment> {
    let n = points.len();
    if k < 2 || k >= n {
        return Err(Error::ClusterCountOutOfRange { k, n });
    }
    let d = distance_matrix(points)?;
    let mut medoids = build_phase(&d, k);
    swap_phase(&d, &mut medoids);
    medoids.sort_unstable();
    let mut labels = Vec::with_capacity(n);
    let mut total_cost = 0.0;
    for row in &d {
        let mut label = 0;
        let mut best = f64::INFINITY;
        // Strict < with medoids in ascending index order sends distance
        // ties to the lowest medoid index.
        for (pos, &m) in medoids.iter().enumerate() {
            if row[m] < best {
                best = row[m];
                label = pos;
            }
        }
        labels.push(label);
        total_cost += best;
    }
    Ok(ClusterAssignment {
        k,
        medoids,
        labels,
        total_cost,
    })
}

/// Exhaustive reference: the optimal medoid-set cost over all k-subsets.
/// Only feasible for small instances; used to validate the heuristic.
pub fn brute_force_cost(points: &[Vec<f64>], k: usize) -> Result<f64> {
    let n = points.len();
    if k < 2 || k >= n {
        return Err(Error::ClusterCountOutOfRange { k, n });
    }
    let d = distance_matrix(points)?;
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let cost = cost_of(&d, &subset);
        if cost < best {
            best = cost;
        }
        // Advance to the next k-combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if subset[i] != i + n - k {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..k {
            subset[j] = subset[j - 1] + 1;
        }
    }
}
