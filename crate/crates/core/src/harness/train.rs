use serde::{Deserialize, Serialize};

use super::{ensure_dir, is_complete, load_split, mark_complete, write_json, ExperimentConfig, Split, StageOutcome};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{raw_votes, Candidate, FixedParams, PreparedModel, PreparedScene};
use crate::scene::{apply_domain_randomization, NoiseConfig};
use crate::scheduler::{run_scheduled_training, EpochRecord, Phase, SchedulerState};
use crate::seed;

/// Loss floor of the surrogate trainer.
const LOSS_FLOOR: f64 = 0.05;
/// Epoch constant of the surrogate's learning curve.
const LEARNING_EPOCHS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrLevels {
    pub object: String,
    pub levels: NoiseConfig,
    pub final_phase: Phase,
    pub trace: Vec<EpochRecord>,
}

/// Fraction of the object's points whose surrogate vote lands on the keypoint
/// nearest to the point's true model location. `None` if the object has no
/// points in the scene.
pub fn voting_accuracy(ps: &PreparedScene, pm: &PreparedModel, seed: u64) -> Option<f64> {
    let view = ps.view(pm.name())?;
    let gt = view.gt?;
    let members: Vec<usize> = (0..ps.len()).filter(|&i| view.membership[i].is_some()).collect();
    if members.is_empty() {
        return None;
    }
    let step = members.len().div_ceil(FixedParams::INPUT_POINTS);
    let indices: Vec<usize> = members.into_iter().step_by(step).collect();
    let cloud = ps.cloud.select(&indices);
    let center = cloud.centroid()?;
    let cand = Candidate { indices, cloud, center, objectness: 1.0 };
    let inv = gt.inverse();
    let votes = raw_votes(&cand, ps, pm, seed);
    let hits = votes
        .iter()
        .filter(|m| {
            let (k, _) = pm.keypoint_tree.nearest(&inv.apply(&m.scene)).expect("model has keypoints");
            pm.model.keypoints[k] == m.keypoint
        })
        .count();
    Some(hits as f64 / votes.len() as f64)
}

/// Surrogate training loss: a decaying learning curve scaled by the voting
/// error on noised training scenes.
pub(crate) fn surrogate_loss(epoch: usize, accuracy: f64) -> f64 {
    LOSS_FLOOR + (1.0 - accuracy) * (0.5 + 0.5 * (-(epoch as f64) / LEARNING_EPOCHS).exp())
}

/// Runs the noise-level controller for every object and writes one level
/// file per object.
pub fn cmd_train_dr(cfg: &ExperimentConfig, force: bool) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.dr_dir();
    if is_complete(&dir) && !force {
        return Ok(StageOutcome::Skipped);
    }
    let scenes = load_split(cfg, Split::Train)?;
    ensure_dir(&dir)?;
    for (k, model) in cfg.models()?.iter().enumerate() {
        let pm = PreparedModel::new(model)?;
        let trainer = |epoch: usize, levels: &NoiseConfig| -> Result<f64> {
            let accs = par::map_range(scenes.len(), cfg.parallelism, |j| -> Result<Option<f64>> {
                let s = seed::derive(cfg.seed, &[seed::label("train-dr"), k as u64, epoch as u64, j as u64]);
                let noised = apply_domain_randomization(&scenes[j], levels, s)?;
                let ps = PreparedScene::new(&noised, std::slice::from_ref(&pm))?;
                Ok(voting_accuracy(&ps, &pm, s))
            });
            let accs: Vec<f64> = accs
                .into_iter()
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Trainer { epoch, message: e.to_string() })?
                .into_iter()
                .flatten()
                .collect();
            let acc = if accs.is_empty() { 0.0 } else { accs.iter().sum::<f64>() / accs.len() as f64 };
            Ok(surrogate_loss(epoch, acc))
        };
        let (state, trace) = run_scheduled_training(trainer, cfg.epochs, SchedulerState::new())?;
        let out = DrLevels { object: model.name.clone(), levels: state.levels, final_phase: state.phase, trace };
        write_json(&dir.join(format!("{}.json", model.name)), &out)?;
    }
    mark_complete(&dir)?;
    Ok(StageOutcome::Ran)
}
