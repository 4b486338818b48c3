//! Gaussian-process regression on the unit cube with a Matérn-5/2 ARD kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Diagonal jitter added to the kernel matrix.
pub const JITTER: f64 = 1e-6;

const LENGTH_GRID: [f64; 5] = [0.1, 0.2, 0.4, 0.8, 1.6];
const SIGNAL_GRID: [f64; 3] = [0.5, 1.0, 2.0];
const LENGTH_MIN: f64 = 0.02;
const LENGTH_MAX: f64 = 10.0;
const ARD_PASSES: usize = 2;
const SIGNAL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub jitter: f64,
}

impl Hyper {
    pub fn isotropic(dim: usize, length: f64, signal_variance: f64) -> Self {
        Hyper { length_scales: vec![length; dim], signal_variance, jitter: JITTER }
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).zip(&self.length_scales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
        let s5r = (5.0 * r2).sqrt();
        self.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
    }
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    inputs: Vec<Vec<f64>>,
    values: Vec<f64>,
    mean: f64,
    hyper: Hyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal: f64,
}

/// Drops earlier copies of repeated inputs, keeping the latest value.
pub fn deduplicate(inputs: &[Vec<f64>], values: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
    let mut ys: Vec<f64> = Vec::with_capacity(values.len());
    for (x, &y) in inputs.iter().zip(values) {
        match xs.iter().position(|e| e == x) {
            Some(k) => ys[k] = y,
            None => {
                xs.push(x.clone());
                ys.push(y);
            }
        }
    }
    (xs, ys)
}

fn check(inputs: &[Vec<f64>], values: &[f64]) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    if inputs.len() != values.len() {
        return Err(Error::InvalidParameter(format!("{} inputs but {} values", inputs.len(), values.len())));
    }
    let dim = inputs[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter("zero-dimensional inputs".into()));
    }
    for x in inputs {
        if x.len() != dim {
            return Err(Error::InvalidParameter("inputs of mixed dimension".into()));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!("input {x:?} outside the unit cube")));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite objective value".into()));
    }
    Ok(dim)
}

/// Fits the posterior, choosing hyper-parameters by log marginal likelihood:
/// an isotropic start grid followed by per-dimension length-scale refinement.
pub fn gp_fit(inputs: &[Vec<f64>], values: &[f64]) -> Result<GpSurrogate> {
    let dim = check(inputs, values)?;
    let (xs, ys) = deduplicate(inputs, values);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).max(SIGNAL_FLOOR);

    let mut best: Option<GpSurrogate> = None;
    let consider = |h: Hyper, best: &mut Option<GpSurrogate>| {
        if let Some(g) = GpSurrogate::build(xs.clone(), ys.clone(), mean, h) {
            if best.as_ref().is_none_or(|b| g.log_marginal > b.log_marginal) {
                *best = Some(g);
            }
        }
    };
    for &l in &LENGTH_GRID {
        for &s in &SIGNAL_GRID {
            consider(Hyper::isotropic(dim, l, s * var), &mut best);
        }
    }
    let Some(mut best) = best else {
        return Err(Error::InvalidParameter("kernel matrix not positive definite for any start".into()));
    };
    for _ in 0..ARD_PASSES {
        for d in 0..dim {
            for factor in [0.5, 2.0] {
                let mut h = best.hyper.clone();
                h.length_scales[d] = (h.length_scales[d] * factor).clamp(LENGTH_MIN, LENGTH_MAX);
                let mut slot = Some(best.clone());
                consider(h, &mut slot);
                best = slot.expect("kept");
            }
        }
    }
    Ok(best)
}

/// Fits the posterior with fixed hyper-parameters.
pub fn gp_fit_with(inputs: &[Vec<f64>], values: &[f64], hyper: Hyper) -> Result<GpSurrogate> {
    let dim = check(inputs, values)?;
    if hyper.length_scales.len() != dim {
        return Err(Error::InvalidParameter("length scales do not match input dimension".into()));
    }
    let (xs, ys) = deduplicate(inputs, values);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    GpSurrogate::build(xs, ys, mean, hyper)
        .ok_or_else(|| Error::InvalidParameter("kernel matrix not positive definite".into()))
}

impl GpSurrogate {
    fn build(inputs: Vec<Vec<f64>>, values: Vec<f64>, mean: f64, hyper: Hyper) -> Option<Self> {
        let n = inputs.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            hyper.kernel(&inputs[i], &inputs[j]) + if i == j { hyper.jitter } else { 0.0 }
        });
        let chol = k.cholesky()?;
        let centered = DVector::from_iterator(n, values.iter().map(|y| y - mean));
        let alpha = chol.solve(&centered);
        let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum();
        let log_marginal =
            -0.5 * centered.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if !log_marginal.is_finite() {
            return None;
        }
        Some(GpSurrogate { inputs, values, mean, hyper, chol, alpha, log_marginal })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior mean and variance at one point.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        self.predict_batch(std::slice::from_ref(&x.to_vec()))[0]
    }

    /// Posterior mean and variance at many points, sharing one triangular solve.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let n = self.inputs.len();
        let ks = DMatrix::from_fn(n, xs.len(), |i, j| self.hyper.kernel(&self.inputs[i], &xs[j]));
        let means = ks.tr_mul(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&ks).expect("cholesky factor is invertible");
        (0..xs.len())
            .map(|j| {
                let reduce = v.column(j).norm_squared();
                let var = (self.hyper.signal_variance - reduce).max(0.0);
                (self.mean + means[j], var)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn single_observation_is_interpolated() {
        let g = gp_fit(&[vec![0.3, 0.7]], &[0.42]).unwrap();
        let (m, v) = g.predict(&[0.3, 0.7]);
        assert!((m - 0.42).abs() < 1e-6);
        assert!(v < 1e-4);
    }

    #[test]
    fn constant_zero_objective() {
        let mut rng = crate::seed::rng(3);
        let xs: Vec<Vec<f64>> = (0..15).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let g = gp_fit(&xs, &vec![0.0; 15]).unwrap();
        let probes: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        for (m, _) in g.predict_batch(&probes) {
            assert!(m.abs() < 1e-6);
        }
        let (_, at_data) = g.predict(&xs[0]);
        // well outside the unit square; inside it both sit at the noise floor
        let (_, far) = g.predict(&[4.0, -3.0]);
        assert!(at_data < far, "{at_data} vs {far}");
        assert!(at_data < g.hyper().signal_variance);
    }

    #[test]
    fn variance_at_observations_is_tiny() {
        let mut rng = crate::seed::rng(4);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| (0..7).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| (3.0 * v).sin()).sum::<f64>() / 7.0).collect();
        let g = gp_fit(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (m, v) = g.predict(x);
            assert!(v <= 1e-4, "{v}");
            assert!((m - y).abs() < 1e-2);
        }
    }

    #[test]
    fn calibrated_on_a_smooth_bump() {
        let f = |x: f64| (-(x - 0.6).powi(2) / 0.02).exp();
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 + 0.5) / 20.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| f(x[0])).collect();
        let g = gp_fit(&xs, &ys).unwrap();
        let held: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 199.0]).collect();
        let inside = g
            .predict_batch(&held)
            .iter()
            .zip(&held)
            .filter(|((m, v), x)| (m - f(x[0])).abs() <= 3.0 * v.sqrt().max(1e-9))
            .count();
        assert!(inside >= 190, "{inside}/200");
    }

    #[test]
    fn duplicates_keep_latest_value() {
        let (xs, ys) = deduplicate(&[vec![0.1], vec![0.5], vec![0.1]], &[1.0, 2.0, 3.0]);
        assert_eq!(xs, vec![vec![0.1], vec![0.5]]);
        assert_eq!(ys, vec![3.0, 2.0]);
        let g = gp_fit(&[vec![0.1], vec![0.1], vec![0.1]], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(gp_fit(&[], &[]).is_err());
        assert!(gp_fit(&[vec![1.5]], &[0.0]).is_err());
        assert!(gp_fit(&[vec![0.5]], &[f64::NAN]).is_err());
    }
}
