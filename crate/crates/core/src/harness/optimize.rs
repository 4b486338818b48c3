use serde::{Deserialize, Serialize};

use super::bench::{mean_runtime, pooled_recall, Bench};
use super::{
    ensure_dir, is_complete, learned_noise, mark_complete, read_json, require, write_json, write_text, ExperimentConfig,
    Split, StageOutcome,
};
use crate::bayes::{optimize_params, trace_csv, SearchSpace};
use crate::discrete::{enumerate_grid, evaluate_grid, fit_runtime_model, grid_csv, pareto_front, FrontReport, RuntimeSample};
use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::pipeline::{ContinuousParams, DiscreteParams};
use crate::scene::NoiseConfig;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeArtifacts {
    pub with_dr: bool,
    /// Noise applied to the validation scenes (zero without DR).
    pub noise: NoiseConfig,
    pub fixed_discrete: DiscreteParams,
    pub params: ContinuousParams,
    pub best_value: f64,
}

impl OptimizeArtifacts {
    pub fn load(cfg: &ExperimentConfig, with_dr: bool) -> Result<Self> {
        let dir = cfg.optimize_dir(with_dr);
        require(&dir, "optimize")?;
        read_json(&dir.join("params.json"))
    }

    pub fn front(cfg: &ExperimentConfig, with_dr: bool) -> Result<FrontReport> {
        let dir = cfg.optimize_dir(with_dr);
        require(&dir, "optimize")?;
        FrontReport::load_json(&dir.join("front.json"))
    }
}

/// Stage 1: BO of the continuous parameters with the discrete ones fixed.
/// Stage 2: grid over the discrete parameters with the optimum, Pareto front
/// and runtime-model fit.
pub fn cmd_optimize(cfg: &ExperimentConfig, with_dr: bool, force: bool) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.optimize_dir(with_dr);
    if is_complete(&dir) && !force {
        return Ok(StageOutcome::Skipped);
    }
    let noise = if with_dr { learned_noise(cfg)? } else { NoiseConfig::zero() };
    let bench = Bench::new(cfg, Split::Validation, with_dr.then_some(&noise)).map_err(|e| e.in_stage("optimize"))?;
    ensure_dir(&dir)?;

    let fixed = DiscreteParams::BO_FIXED;
    let bo_seed = seed::derive(cfg.seed, &[seed::label("bo"), u64::from(with_dr)]);
    let (params, result) = optimize_params(
        |cp| pooled_recall(&bench.run(cp, &fixed, cfg.metric, cfg.parallelism)?, cfg.metric),
        &cfg.schedule,
        bo_seed,
    )
    .map_err(|e| e.in_stage("continuous optimization"))?;
    write_text(&dir.join("trace.csv"), &trace_csv(&SearchSpace::continuous_params(), &result.trace))?;
    let artifacts = OptimizeArtifacts { with_dr, noise, fixed_discrete: fixed, params, best_value: result.best_value };

    // tuples run one after another so that timings are not inflated by
    // contention; each tuple still spreads its scenes over threads
    let tuples = enumerate_grid(&cfg.grid);
    let entries = evaluate_grid(
        &tuples,
        |dp| {
            let r = bench.run(&params, dp, cfg.metric, cfg.parallelism)?;
            Ok((mean_runtime(&r), pooled_recall(&r, cfg.metric)?))
        },
        Parallelism::Sequential,
    );
    write_text(&dir.join("grid.csv"), &grid_csv(&entries))?;
    let samples: Vec<RuntimeSample> = entries
        .iter()
        .map(|e| RuntimeSample { params: e.params, objects: bench.object_count() as u32, runtime: e.runtime })
        .collect();
    let fit = fit_runtime_model(&samples).map_err(|e| Error::in_stage(e, "discrete optimization"))?;
    let front = FrontReport { entries: pareto_front(&entries), coefficients: fit.coefficients, residual: fit.residual };
    front.save_json(&dir.join("front.json"))?;
    write_json(&dir.join("params.json"), &artifacts)?;
    mark_complete(&dir)?;
    Ok(StageOutcome::Ran)
}
