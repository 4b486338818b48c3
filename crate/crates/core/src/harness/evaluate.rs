use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bench::{mean_runtime, pooled_recall, Bench, SceneResult};
use super::optimize::OptimizeArtifacts;
use super::{
    ensure_dir, is_complete, learned_noise, mark_complete, read_json, require, write_json, write_text, ExperimentConfig,
    Metric, Split, StageOutcome,
};
use crate::discrete::{predict_runtime, select_for_budget};
use crate::error::Result;
use crate::pipeline::{ContinuousParams, DiscreteParams};
use crate::scene::NoiseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub continuous: ContinuousParams,
    pub discrete: DiscreteParams,
    /// Recall pooled over all scenes and objects.
    pub recall: f64,
    pub per_object: BTreeMap<String, f64>,
    /// Recall of each test scene, in scene order (for paired comparisons).
    pub per_scene: Vec<f64>,
    /// Mean measured seconds per image.
    pub measured_runtime: f64,
    /// Runtime-model prediction for rows chosen by budget.
    pub predicted_runtime: Option<f64>,
    pub budget: Option<f64>,
    pub budget_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metric: Metric,
    pub objects: Vec<String>,
    pub test_scenes: usize,
    pub noise: NoiseConfig,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.evaluate_dir();
        require(&dir, "evaluate")?;
        read_json(&dir.join("report.json"))
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,pc,pe,ri,dc,ii,object,recall,measured_runtime,predicted_runtime\n");
        for r in &self.rows {
            let d = r.discrete;
            let pred = r.predicted_runtime.map(|p| p.to_string()).unwrap_or_default();
            let objects = r.per_object.iter().map(|(o, v)| (o.as_str(), *v)).chain([("all", r.recall)]);
            for (o, v) in objects {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.name, d.pc, d.pe, d.ri, d.dc, d.ii, o, v, r.measured_runtime, pred
                ));
            }
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn make_row(
    name: &str,
    cp: ContinuousParams,
    dp: DiscreteParams,
    results: &[SceneResult],
    objects: &[String],
    metric: Metric,
    predicted_runtime: Option<f64>,
    budget: Option<f64>,
    budget_infeasible: bool,
) -> Result<ReportRow> {
    let mut per_object = BTreeMap::new();
    for (k, o) in objects.iter().enumerate() {
        let scores: Vec<_> = results.iter().map(|r| r.scores[k]).collect();
        per_object.insert(o.clone(), metric.recall(&scores)?);
    }
    let per_scene = results.iter().map(|r| metric.recall(&r.scores)).collect::<Result<Vec<_>>>()?;
    Ok(ReportRow {
        name: name.to_string(),
        continuous: cp,
        discrete: dp,
        recall: pooled_recall(results, metric)?,
        per_object,
        per_scene,
        measured_runtime: mean_runtime(results),
        predicted_runtime,
        budget,
        budget_infeasible,
    })
}

/// Scores the default, optimized and budget-selected parameter sets on the
/// noised held-out scenes. `budget` overrides the configured budget.
pub fn cmd_evaluate(cfg: &ExperimentConfig, budget: Option<f64>, force: bool) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.evaluate_dir();
    if is_complete(&dir) && !force {
        return Ok(StageOutcome::Skipped);
    }
    let opt = OptimizeArtifacts::load(cfg, true)?;
    let front = OptimizeArtifacts::front(cfg, true)?;
    let no_dr = if is_complete(&cfg.optimize_dir(false)) { Some(OptimizeArtifacts::load(cfg, false)?) } else { None };
    let noise = learned_noise(cfg)?;
    let bench = Bench::new(cfg, Split::Test, Some(&noise)).map_err(|e| e.in_stage("evaluate"))?;
    let objects = bench.object_names();
    let n_obj = bench.object_count() as u32;
    let coeffs = front.coefficients;
    let budget = budget
        .or(cfg.budget)
        .unwrap_or_else(|| predict_runtime(&coeffs, &DiscreteParams::UNDER_FOUR_SECONDS, n_obj));
    let under = select_for_budget(&front.entries, &coeffs, n_obj, budget)?;
    let max = select_for_budget(&front.entries, &coeffs, n_obj, f64::INFINITY)?;

    let fixed = DiscreteParams::BO_FIXED;
    let mut rows = Vec::new();
    let mut plain = |name: &str, cp: ContinuousParams| -> Result<()> {
        let r = bench.run(&cp, &fixed, cfg.metric, cfg.parallelism)?;
        rows.push(make_row(name, cp, fixed, &r, &objects, cfg.metric, None, None, false)?);
        Ok(())
    };
    plain("heuristic", ContinuousParams::HEURISTIC)?;
    if let Some(n) = &no_dr {
        plain("no_dr", n.params)?;
    }
    plain("optimized", opt.params)?;
    for (name, sel, b) in [("budget", under, budget), ("max", max, f64::INFINITY)] {
        let dp = sel.entry.params;
        let r = bench.run(&opt.params, &dp, cfg.metric, cfg.parallelism)?;
        let b = b.is_finite().then_some(b);
        rows.push(make_row(name, opt.params, dp, &r, &objects, cfg.metric, Some(sel.predicted_runtime), b, sel.infeasible)?);
    }

    let report = EvaluationReport { metric: cfg.metric, objects, test_scenes: bench.len(), noise, rows };
    ensure_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    write_text(&dir.join("report.csv"), &report.to_csv())?;
    mark_complete(&dir)?;
    Ok(StageOutcome::Ran)
}
