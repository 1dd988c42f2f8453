//! Small dense linear algebra: symmetric eigendecomposition and LU solves.
//!
//! The matrices here are tiny (one dimension per training example or per
//! spline knot), so simple, fully deterministic algorithms are the right
//! tool: cyclic Jacobi rotations for symmetric eigenproblems and partially
//! pivoted Gaussian elimination for linear systems.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` sorted by non-increasing
/// eigenvalue; `eigenvectors[k]` is the unit eigenvector paired with
/// `eigenvalues[k]`. The input is consumed as workspace.
pub(crate) fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }

    // v[i][k]: component i of eigenvector k.
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let mut frob = 0.0;
    for row in &a {
        for &x in row {
            frob += x * x;
        }
    }
    let frob = frob.sqrt();

    if frob > 0.0 && n > 1 {
        let mut last_off = f64::INFINITY;
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p][q] * a[p][q];
                }
            }
            let off = off.sqrt();
            // Quadratic convergence stalls at the rounding floor; stop there.
            if off <= frob * 1e-18 || off >= last_off {
                break;
            }
            last_off = off;

            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p][q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;

                    for i in 0..n {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = c * aip - s * aiq;
                        a[i][q] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[p][i];
                        let aqi = a[q][i];
                        a[p][i] = c * api - s * aqi;
                        a[q][i] = s * api + c * aqi;
                    }
                    for row in v.iter_mut() {
                        let vip = row[p];
                        let viq = row[q];
                        row[p] = c * vip - s * viq;
                        row[q] = s * vip + c * viq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&k| a[k][k]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    (values, vectors)
}

/// Solves `A x = b` for each right-hand side in `rhs` by LU decomposition
/// with partial pivoting. Returns the solution vectors in input order.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut xs: Vec<Vec<f64>> = rhs.to_vec();
    for x in &xs {
        debug_assert_eq!(x.len(), n);
    }

    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, &x| m.max(x.abs()));
    if n == 0 {
        return Ok(xs);
    }
    if scale == 0.0 {
        return Err(Error::SingularSystem);
    }

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = a[col][col].abs();
        for r in (col + 1)..n {
            if a[r][col].abs() > pivot_abs {
                pivot_abs = a[r][col].abs();
                pivot_row = r;
            }
        }
        if pivot_abs <= scale * 1e-13 {
            return Err(Error::SingularSystem);
        }
        if pivot_row != col {
            a.swap(col, pivot_row);
            for x in xs.iter_mut() {
                x.swap(col, pivot_row);
            }
        }
        let pivot = a[col][col];
        for r in (col + 1)..n {
            let factor = a[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let sub = factor * a[col][c];
                a[r][c] -= sub;
            }
            for x in xs.iter_mut() {
                let sub = factor * x[col];
                x[r] -= sub;
            }
        }
    }

    for x in xs.iter_mut() {
        for row in (0..n).rev() {
            let mut acc = x[row];
            for c in (row + 1)..n {
                acc -= a[row][c] * x[c];
            }
            x[row] = acc / a[row][row];
        }
    }
    Ok(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn eigen_of_diagonal_matrix() {
        let a = vec![vec![3.0, 0.0], vec![0.0, 5.0]];
        let (vals, vecs) = symmetric_eigen(a);
        assert_close(vals[0], 5.0, 1e-12);
        assert_close(vals[1], 3.0, 1e-12);
        assert_close(vecs[0][1].abs(), 1.0, 1e-12);
        assert_close(vecs[1][0].abs(), 1.0, 1e-12);
    }

    #[test]
    fn eigen_of_known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(a);
        assert_close(vals[0], 3.0, 1e-12);
        assert_close(vals[1], 1.0, 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(vecs[0][0].abs(), inv_sqrt2, 1e-12);
        assert_close(vecs[0][1].abs(), inv_sqrt2, 1e-12);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        // A fixed symmetric matrix with a wide spectrum.
        let n = 8;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] =
                    1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { i as f64 } else { 0.0 };
            }
        }
        let (vals, vecs) = symmetric_eigen(a.clone());
        for k in 1..n {
            assert!(vals[k - 1] >= vals[k]);
        }
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|c| vecs[i][c] * vecs[j][c]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_close(dot, expect, 1e-12);
            }
        }
        // A v = lambda v.
        for k in 0..n {
            for r in 0..n {
                let av: f64 = (0..n).map(|c| a[r][c] * vecs[k][c]).sum();
                assert_close(av, vals[k] * vecs[k][r], 1e-9);
            }
        }
    }

    #[test]
    fn solve_known_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let rhs = vec![vec![5.0, 10.0]];
        let xs = solve_linear(a, &rhs).unwrap();
        assert_close(xs[0][0], 1.0, 1e-12);
        assert_close(xs[0][1], 3.0, 1e-12);
    }

    #[test]
    fn solve_detects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let rhs = vec![vec![1.0, 2.0]];
        assert!(matches!(solve_linear(a, &rhs), Err(Error::SingularSystem)));
    }

    #[test]
    fn solve_multiple_rhs() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ];
        let rhs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let xs = solve_linear(a.clone(), &rhs).unwrap();
        for (x, b) in xs.iter().zip(&rhs) {
            for r in 0..3 {
                let ax: f64 = (0..3).map(|c| a[r][c] * x[c]).sum();
                assert_close(ax, b[r], 1e-12);
            }
        }
    }
}
