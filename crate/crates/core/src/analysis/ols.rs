//! Small dense least-squares solver for the feature regressions: normal
//! equations with Gauss-Jordan inversion and partial pivoting. The designs
//! here are tiny (at most ~20 columns), so this stays simple and exact
//! enough when the caller conditions its inputs.

use crate::error::{Error, Result};

#[derive(Debug)]
pub(crate) struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Fitted residuals; consumed by tests, kept for parity with
    /// [`Projection`].
    #[allow(dead_code)]
    pub residuals: Vec<f64>,
    pub sse: f64,
    /// (X'X)^-1, row-major d x d; feeds coefficient standard errors.
    pub xtx_inverse: Vec<Vec<f64>>,
}

/// Inverts a symmetric positive matrix in place via Gauss-Jordan with
/// partial pivoting; `what` names the regression for the error message.
fn invert(mut a: Vec<Vec<f64>>, what: &str) -> Result<Vec<Vec<f64>>> {
    let d = a.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut inv: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..d {
        let mut pivot_row = col;
        for row in col + 1..d {
            if a[row][col].abs() > a[pivot_row][col].abs() {
                pivot_row = row;
            }
        }
        if a[pivot_row][col].abs() <= scale * 1e-12 {
            return Err(Error::SingularRegression { what: what.into() });
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col];
        for j in 0..d {
            a[col][j] /= pivot;
            inv[col][j] /= pivot;
        }
        for row in 0..d {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..d {
                a[row][j] -= factor * a[col][j];
                inv[row][j] -= factor * inv[col][j];
            }
        }
    }
    Ok(inv)
}

/// Residual component of a response after projecting onto a column span.
#[derive(Debug)]
pub(crate) struct Projection {
    pub residuals: Vec<f64>,
    pub sse: f64,
    /// Number of independent columns kept; asserted in tests.
    #[allow(dead_code)]
    pub rank: usize,
}

/// Projects `y` onto the column span of `rows`, tolerating linearly
/// dependent columns by skipping them. Uses modified Gram-Schmidt with one
/// re-orthogonalization pass, so exact dependencies (a noise-free
/// autoregression, a deterministic polynomial map) reduce the rank instead
/// of poisoning the fit.
pub(crate) fn project(rows: &[Vec<f64>], y: &[f64]) -> Projection {
    assert_eq!(rows.len(), y.len(), "design/response length mismatch");
    let d = rows[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let original: f64 = col.iter().map(|v| v * v).sum();
        if original <= 1e-300 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (c, &qv) in col.iter_mut().zip(q.iter()) {
                    *c -= dot * qv;
                }
            }
        }
        let norm2: f64 = col.iter().map(|v| v * v).sum();
        // Directions that survive orthogonalization with at least 1e-7 of
        // their original length count as genuinely new.
        if norm2 > original * 1e-14 {
            let inv = norm2.sqrt().recip();
            for c in col.iter_mut() {
                *c *= inv;
            }
            basis.push(col);
        }
    }
    let mut residuals = y.to_vec();
    for _ in 0..2 {
        for q in &basis {
            let dot: f64 = q.iter().zip(residuals.iter()).map(|(a, b)| a * b).sum();
            for (r, &qv) in residuals.iter_mut().zip(q.iter()) {
                *r -= dot * qv;
            }
        }
    }
    let sse = residuals.iter().map(|v| v * v).sum();
    Projection {
        residuals,
        sse,
        rank: basis.len(),
    }
}

/// Ordinary least squares of `y` on row-major design `rows` (each row one
/// observation). Errors when the design is rank-deficient.
#[allow(clippy::needless_range_loop)] // mirrored i/j index pairs read clearer than iterators here
pub(crate) fn fit(rows: &[Vec<f64>], y: &[f64], what: &str) -> Result<OlsFit> {
    let n = rows.len();
    assert_eq!(n, y.len(), "design/response length mismatch");
    let d = rows[0].len();
    if n < d {
        return Err(Error::SingularRegression { what: what.into() });
    }
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    for (row, &yi) in rows.iter().zip(y.iter()) {
        for i in 0..d {
            xty[i] += row[i] * yi;
            for j in i..d {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }
    let xtx_inverse = invert(xtx, what)?;
    let mut coefficients = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            coefficients[i] += xtx_inverse[i][j] * xty[j];
        }
    }
    let mut residuals = Vec::with_capacity(n);
    let mut sse = 0.0;
    for (row, &yi) in rows.iter().zip(y.iter()) {
        let mut fitted = 0.0;
        for (x, b) in row.iter().zip(coefficients.iter()) {
            fitted += x * b;
        }
        let e = yi - fitted;
        sse += e * e;
        residuals.push(e);
    }
    Ok(OlsFit {
        coefficients,
        residuals,
        sse,
        xtx_inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_coefficients() {
        // y = 2 + 3x, no noise.
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 2.0 + 3.0 * i as f64).collect();
        let ols = fit(&rows, &y, "test").unwrap();
        assert!((ols.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((ols.coefficients[1] - 3.0).abs() < 1e-10);
        assert!(ols.sse < 1e-18);
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, i as f64, i as f64])
            .collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            fit(&rows, &y, "dup").unwrap_err(),
            Error::SingularRegression { .. }
        ));
    }

    #[test]
    fn projection_skips_dependent_columns() {
        // Third column is an exact affine combination of the first two.
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let x = i as f64;
                vec![1.0, x, 3.0 * x - 5.0]
            })
            .collect();
        let y: Vec<f64> = (0..12).map(|i| 2.0 * i as f64 + 1.0).collect();
        let p = project(&rows, &y);
        assert_eq!(p.rank, 2);
        // y lies in the span, so the residual vanishes.
        assert!(p.sse < 1e-18, "sse {}", p.sse);
    }

    #[test]
    fn projection_residual_is_orthogonal_to_the_design() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, (i as f64).sin(), (i as f64 * 0.7).cos()])
            .collect();
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64 * 0.1).collect();
        let p = project(&rows, &y);
        assert_eq!(p.rank, 3);
        for j in 0..3 {
            let dot: f64 = rows
                .iter()
                .zip(p.residuals.iter())
                .map(|(r, &e)| r[j] * e)
                .sum();
            assert!(dot.abs() < 1e-9, "column {j} dot {dot}");
        }
    }

    #[test]
    fn inverse_matches_hand_computed_two_by_two() {
        // X = [[1,0],[1,1],[1,2]] -> X'X = [[3,3],[3,5]], inverse
        // 1/6 [[5,-3],[-3,3]].
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let y = vec![0.0, 1.0, 2.0];
        let ols = fit(&rows, &y, "test").unwrap();
        assert!((ols.xtx_inverse[0][0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((ols.xtx_inverse[0][1] + 0.5).abs() < 1e-12);
        assert!((ols.xtx_inverse[1][1] - 0.5).abs() < 1e-12);
    }
}
