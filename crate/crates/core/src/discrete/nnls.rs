//! Lawson–Hanson nonnegative least squares.

use nalgebra::{DMatrix, DVector};

const MAX_OUTER: usize = 200;

/// Numerical rank of `a` by singular values relative to the largest.
pub fn rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    let z = sub.svd(true, true).solve(b, 1e-15).expect("u and v were computed");
    let mut full = DVector::zeros(a.ncols());
    for (k, &j) in passive.iter().enumerate() {
        full[j] = z[k];
    }
    full
}

/// Minimizes ‖Ax − b‖ subject to x ≥ 0. Columns are rescaled to unit norm
/// internally so regressors of very different magnitude are handled evenly.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut a = a.clone();
    for (j, &s) in norms.iter().enumerate() {
        if s > 0.0 {
            a.column_mut(j).scale_mut(1.0 / s);
        }
    }
    let tol = 1e-12 * b.norm().max(1.0);
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..MAX_OUTER {
        let w = a.tr_mul(&(b - &a * &x));
        let candidate = (0..n).filter(|&j| !passive[j] && norms[j] > 0.0 && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = solve_passive(&a, b, &idx);
            if idx.iter().all(|&k| z[k] > 0.0) {
                x = z;
                break;
            }
            // step back towards x until a passive coefficient hits zero
            let alpha = idx
                .iter()
                .filter(|&&k| z[k] <= 0.0)
                .map(|&k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for &k in &idx {
                if x[k] <= tol * 1e-3 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
        }
    }
    for (j, &s) in norms.iter().enumerate() {
        if s > 0.0 {
            x[j] /= s;
        }
    }
    x
}
