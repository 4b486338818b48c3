//! Grid search over the discrete (work-amount) parameters, the runtime /
//! recall Pareto front, and the linear runtime model used to extrapolate to
//! other object counts.

mod nnls;

pub use nnls::{nnls, rank};

use std::cmp::Ordering;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::pipeline::DiscreteParams;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub pc_values: Vec<u32>,
    pub pe_values: Vec<u32>,
    pub ri_values: Vec<u32>,
    pub dc_values: Vec<u32>,
    pub ii_values: Vec<u32>,
}

impl GridSpec {
    /// The published grid.
    pub fn paper() -> Self {
        GridSpec {
            pc_values: vec![8, 16, 32],
            pe_values: vec![2, 4, 6, 8, 10],
            ri_values: vec![500, 1500, 2500],
            dc_values: vec![1, 2, 5, 10],
            ii_values: vec![10, 30, 50],
        }
    }

    pub fn singleton(p: DiscreteParams) -> Self {
        GridSpec { pc_values: vec![p.pc], pe_values: vec![p.pe], ri_values: vec![p.ri], dc_values: vec![p.dc], ii_values: vec![p.ii] }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pc", &self.pc_values),
            ("pe", &self.pe_values),
            ("ri", &self.ri_values),
            ("dc", &self.dc_values),
            ("ii", &self.ii_values),
        ] {
            if v.is_empty() {
                return Err(Error::Config(format!("grid list {name} is empty")));
            }
            if v[0] == 0 || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("grid list {name} must be positive and strictly increasing")));
            }
        }
        Ok(())
    }

    /// Size of the unfiltered Cartesian product.
    pub fn cartesian_len(&self) -> usize {
        self.pc_values.len() * self.pe_values.len() * self.ri_values.len() * self.dc_values.len() * self.ii_values.len()
    }
}

/// Feasible tuples (pe ≤ pc, dc ≤ ri) in lexicographic (pc, pe, ri, dc, ii) order.
pub fn enumerate_grid(spec: &GridSpec) -> Vec<DiscreteParams> {
    let mut out = Vec::new();
    for &pc in &spec.pc_values {
        for &pe in spec.pe_values.iter().filter(|&&pe| pe <= pc) {
            for &ri in &spec.ri_values {
                for &dc in spec.dc_values.iter().filter(|&&dc| dc <= ri) {
                    for &ii in &spec.ii_values {
                        out.push(DiscreteParams { pc, pe, ri, dc, ii });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub params: DiscreteParams,
    /// Seconds per image.
    pub runtime: f64,
    pub recall: f64,
}

/// Measures every tuple. A failing objective is recorded with recall 0 and
/// the wall time of the failed call.
pub fn evaluate_grid<F>(tuples: &[DiscreteParams], objective: F, parallelism: Parallelism) -> Vec<ParetoEntry>
where
    F: Fn(&DiscreteParams) -> Result<(f64, f64)> + Sync + Send,
{
    par::map(tuples, parallelism, |p| {
        let start = Instant::now();
        match objective(p) {
            Ok((runtime, recall)) => ParetoEntry { params: *p, runtime, recall },
            Err(_) => ParetoEntry { params: *p, runtime: start.elapsed().as_secs_f64(), recall: 0.0 },
        }
    })
}

fn front_order(a: &ParetoEntry, b: &ParetoEntry) -> Ordering {
    a.runtime
        .total_cmp(&b.runtime)
        .then(a.recall.total_cmp(&b.recall))
        .then(a.params.cmp(&b.params))
}

/// Sorts by runtime (ties: lower recall, then parameters) and keeps entries
/// that strictly raise the best recall so far. An entry tying the previous
/// front entry's runtime replaces it, so runtimes are strictly increasing too.
pub fn pareto_front(entries: &[ParetoEntry]) -> Vec<ParetoEntry> {
    let mut sorted = entries.to_vec();
    sorted.sort_by(front_order);
    let mut front: Vec<ParetoEntry> = Vec::new();
    for e in sorted {
        if front.last().is_some_and(|l| e.recall <= l.recall) {
            continue;
        }
        if front.last().is_some_and(|l| l.runtime == e.runtime) {
            front.pop();
        }
        front.push(e);
    }
    front
}

/// Per-unit-of-work costs of the linear runtime model
/// t = t_pre + obj·(t_net·PC + PE·(t_ran·RI + DC·(t_icp·II + t_depth))).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RuntimeCoefficients {
    pub t_pre: f64,
    pub t_net: f64,
    pub t_ran: f64,
    pub t_icp: f64,
    pub t_depth: f64,
}

impl RuntimeCoefficients {
    /// Published per-part timings.
    pub const PAPER: RuntimeCoefficients =
        RuntimeCoefficients { t_pre: 8.57e-1, t_net: 7.99e-3, t_ran: 2.70e-4, t_icp: 1.67e-4, t_depth: 9.12e-3 };

    pub fn to_array(&self) -> [f64; 5] {
        [self.t_pre, self.t_net, self.t_ran, self.t_icp, self.t_depth]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        RuntimeCoefficients { t_pre: a[0], t_net: a[1], t_ran: a[2], t_icp: a[3], t_depth: a[4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSample {
    pub params: DiscreteParams,
    pub objects: u32,
    pub runtime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeFit {
    pub coefficients: RuntimeCoefficients,
    /// Euclidean norm of the fit residual, in seconds.
    pub residual: f64,
}

fn regressors(p: &DiscreteParams, objects: u32) -> [f64; 5] {
    let obj = f64::from(objects);
    let (pc, pe, ri, dc, ii) = (f64::from(p.pc), f64::from(p.pe), f64::from(p.ri), f64::from(p.dc), f64::from(p.ii));
    [1.0, obj * pc, obj * pe * ri, obj * pe * dc * ii, obj * pe * dc]
}

/// Nonnegative least-squares fit of the runtime model. Rows are weighted by
/// the inverse measured runtime, so the fit minimizes relative error (timing
/// noise is multiplicative); the reported residual is unweighted.
pub fn fit_runtime_model(samples: &[RuntimeSample]) -> Result<RuntimeFit> {
    let a = DMatrix::from_fn(samples.len(), 5, |i, j| regressors(&samples[i].params, samples[i].objects)[j]);
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.runtime));
    let r = if samples.is_empty() { 0 } else { rank(&a) };
    if r < 5 {
        return Err(Error::InsufficientDiversity { rank: r, required: 5 });
    }
    let weights: Vec<f64> = samples.iter().map(|s| if s.runtime > 0.0 { 1.0 / s.runtime } else { 1.0 }).collect();
    let aw = DMatrix::from_fn(a.nrows(), 5, |i, j| a[(i, j)] * weights[i]);
    let bw = DVector::from_fn(b.len(), |i, _| b[i] * weights[i]);
    let x = nnls(&aw, &bw);
    let residual = (&b - &a * &x).norm();
    Ok(RuntimeFit { coefficients: RuntimeCoefficients::from_array([x[0], x[1], x[2], x[3], x[4]]), residual })
}

pub fn predict_runtime(c: &RuntimeCoefficients, params: &DiscreteParams, objects: u32) -> f64 {
    let t = c.to_array();
    regressors(params, objects).iter().zip(t).map(|(r, t)| r * t).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSelection {
    pub entry: ParetoEntry,
    pub predicted_runtime: f64,
    /// No entry met the budget; `entry` is the cheapest one.
    pub infeasible: bool,
}

/// Highest-recall front entry whose predicted runtime fits the budget.
pub fn select_for_budget(front: &[ParetoEntry], c: &RuntimeCoefficients, objects: u32, budget: f64) -> Result<BudgetSelection> {
    if front.is_empty() {
        return Err(Error::EmptyInput("pareto front"));
    }
    let predicted = |e: &ParetoEntry| predict_runtime(c, &e.params, objects);
    let best = front
        .iter()
        .filter(|e| predicted(e) <= budget)
        .max_by(|a, b| a.recall.total_cmp(&b.recall).then(b.runtime.total_cmp(&a.runtime)));
    Ok(match best {
        Some(e) => BudgetSelection { entry: *e, predicted_runtime: predicted(e), infeasible: false },
        None => {
            let e = front
                .iter()
                .min_by(|a, b| predicted(a).total_cmp(&predicted(b)).then(a.runtime.total_cmp(&b.runtime)))
                .expect("non-empty");
            BudgetSelection { entry: *e, predicted_runtime: predicted(e), infeasible: true }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub entries: Vec<ParetoEntry>,
    pub coefficients: RuntimeCoefficients,
    pub residual: f64,
}

impl FrontReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.display().to_string(), message: e.to_string() })
    }
}

/// All grid measurements, one row per tuple.
pub fn grid_csv(entries: &[ParetoEntry]) -> String {
    let mut out = String::from("pc,pe,ri,dc,ii,runtime,recall\n");
    for e in entries {
        let p = e.params;
        out.push_str(&format!("{},{},{},{},{},{},{}\n", p.pc, p.pe, p.ri, p.dc, p.ii, e.runtime, e.recall));
    }
    out
}
