//! A fixed, prepared scene set on which parameter sets are scored.

use super::{load_split, ExperimentConfig, Metric, Split};
use crate::error::Result;
use crate::geometry::ObjectModel;
use crate::metrics::{evaluate, evaluate_bop, MetricScore};
use crate::par::{self, Parallelism};
use crate::pipeline::{estimate_prepared, ContinuousParams, DiscreteParams, PreparedModel, PreparedScene};
use crate::scene::{apply_domain_randomization, NoiseConfig, Scene};
use crate::seed;

pub(crate) struct Bench {
    split: Split,
    master: u64,
    scenes: Vec<Scene>,
    prepared: Vec<PreparedScene>,
    models: Vec<ObjectModel>,
    pms: Vec<PreparedModel>,
}

#[derive(Debug, Clone)]
pub(crate) struct SceneResult {
    /// One score per configured object, in configuration order.
    pub scores: Vec<MetricScore>,
    /// Preparation plus all per-object estimates (s).
    pub runtime: f64,
}

impl Bench {
    /// Loads `split`, optionally noised with `noise` (seeded per scene).
    pub fn new(cfg: &ExperimentConfig, split: Split, noise: Option<&NoiseConfig>) -> Result<Self> {
        let raw = load_split(cfg, split)?;
        let models = cfg.models()?;
        let pms = models.iter().map(PreparedModel::new).collect::<Result<Vec<_>>>()?;
        let scenes = match noise {
            Some(n) => raw
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    apply_domain_randomization(s, n, seed::derive(cfg.seed, &[seed::label("bench-noise"), split.index(), i as u64]))
                })
                .collect::<Result<Vec<_>>>()?,
            None => raw,
        };
        let prepared = scenes.iter().map(|s| PreparedScene::new(s, &pms)).collect::<Result<Vec<_>>>()?;
        Ok(Bench { split, master: cfg.seed, scenes, prepared, models, pms })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn object_count(&self) -> usize {
        self.models.len()
    }

    pub fn object_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }

    fn scene(&self, i: usize, cp: &ContinuousParams, dp: &DiscreteParams, metric: Metric) -> Result<SceneResult> {
        let (sc, ps) = (&self.scenes[i], &self.prepared[i]);
        let mut runtime = ps.prep_seconds;
        let mut scores = Vec::with_capacity(self.models.len());
        for (k, (m, pm)) in self.models.iter().zip(&self.pms).enumerate() {
            let s = seed::derive(self.master, &[seed::label("estimate"), self.split.index(), i as u64, k as u64]);
            let e = estimate_prepared(ps, pm, cp, dp, s, Parallelism::Sequential)?;
            runtime += e.wall;
            let score = match sc.gt_poses.get(&m.name) {
                Some(gt) => match metric {
                    Metric::Add => evaluate(m, gt, e.pose(), &sc.cam, &sc.depth),
                    Metric::Bop => evaluate_bop(m, gt, e.pose(), &sc.cam, &sc.depth),
                },
                None => MetricScore::missed(),
            };
            scores.push(score);
        }
        Ok(SceneResult { scores, runtime })
    }

    /// Scores every scene under `metric`, spreading scenes over threads.
    pub fn run(
        &self,
        cp: &ContinuousParams,
        dp: &DiscreteParams,
        metric: Metric,
        parallelism: Parallelism,
    ) -> Result<Vec<SceneResult>> {
        par::map_range(self.len(), parallelism, |i| self.scene(i, cp, dp, metric)).into_iter().collect()
    }
}

/// Recall over all (scene, object) pairs.
pub(crate) fn pooled_recall(results: &[SceneResult], metric: Metric) -> Result<f64> {
    let all: Vec<MetricScore> = results.iter().flat_map(|r| r.scores.iter().cloned()).collect();
    metric.recall(&all)
}

pub(crate) fn mean_runtime(results: &[SceneResult]) -> f64 {
    results.iter().map(|r| r.runtime).sum::<f64>() / results.len().max(1) as f64
}
