use serde::{Deserialize, Serialize};

use super::{ensure_dir, is_complete, mark_complete, write_json, ExperimentConfig, Split, StageOutcome};
use crate::error::Result;
use crate::scene::generate_scene;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub objects: Vec<String>,
    pub clutter: f64,
    pub occlusion: f64,
    pub scenes: Vec<SceneEntry>,
}

pub(crate) fn scene_seed(cfg: &ExperimentConfig, split: Split, index: usize) -> u64 {
    seed::derive(cfg.seed, &[seed::label("scene"), split.index(), index as u64])
}

/// Writes the train, validation and test scenes plus a manifest.
pub fn cmd_generate(cfg: &ExperimentConfig, force: bool) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.scenes_dir();
    if is_complete(&dir) && !force {
        return Ok(StageOutcome::Skipped);
    }
    ensure_dir(&dir)?;
    let models = cfg.models()?;
    let mut jobs = Vec::new();
    for split in Split::ALL {
        for index in 0..cfg.scene_count(split) {
            jobs.push((split, index));
        }
    }
    let entries = crate::par::map(&jobs, cfg.parallelism, |&(split, index)| -> Result<SceneEntry> {
        let s = scene_seed(cfg, split, index);
        let scene = generate_scene(&models, cfg.clutter, cfg.occlusion, s)?;
        let path = cfg.scene_dir(split, index);
        scene.save_dir(&path)?;
        let rel = format!("scenes/{}/{index:03}", split.name());
        Ok(SceneEntry { split, index, seed: s, path: rel })
    });
    let scenes = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        master_seed: cfg.seed,
        objects: cfg.objects.clone(),
        clutter: cfg.clutter,
        occlusion: cfg.occlusion,
        scenes,
    };
    write_json(&cfg.manifest_path(), &manifest)?;
    mark_complete(&dir)?;
    Ok(StageOutcome::Ran)
}
