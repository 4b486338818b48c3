//! Loss-driven controller for the six domain-randomization levels.
//!
//! Epochs 0–3 train without randomization, epochs 4–7 at the predetermined
//! levels; from epoch 8 on, one noise type at a time is raised by its jump
//! size and kept, raised again, or reverted and frozen depending on the
//! relative change of the epoch loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{default_noise_config, NoiseConfig};

pub const WARMUP_EPOCHS: usize = 4;
pub const FIXED_NOISE_EPOCHS: usize = 4;
/// First epoch trained with scheduler-controlled levels.
pub const OPTIMIZE_FROM: usize = WARMUP_EPOCHS + FIXED_NOISE_EPOCHS;
/// Relative loss decrease beyond which the same type is raised again.
pub const DECREASE_THRESHOLD: f64 = 0.025;
/// Relative loss increase beyond which the type is reverted and frozen.
pub const INCREASE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    FixedNoise,
    Optimizing,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub levels: NoiseConfig,
    pub jump_sizes: NoiseConfig,
    /// Levels the controller started from; `levels = base + increments·jump`.
    pub base: NoiseConfig,
    pub increments: [u32; 6],
    pub active_index: usize,
    pub frozen: [bool; 6],
    pub recorded_loss: f64,
    /// Epochs completed so far.
    pub epoch: usize,
    pub phase: Phase,
}

impl Default for SchedulerState {
    fn default() -> Self {
        SchedulerState::new()
    }
}

impl SchedulerState {
    pub fn new() -> Self {
        SchedulerState {
            levels: default_noise_config(),
            jump_sizes: NoiseConfig::jump_sizes(),
            base: default_noise_config(),
            increments: [0; 6],
            active_index: 0,
            frozen: [false; 6],
            recorded_loss: f64::NAN,
            epoch: 0,
            phase: Phase::Warmup,
        }
    }

    // levels are recomputed from integer counts so reverts land exactly
    // on earlier values
    fn shift(&mut self, i: usize, up: bool) {
        if up {
            self.increments[i] += 1;
        } else {
            self.increments[i] = self.increments[i].saturating_sub(1);
        }
        self.levels.set(i, self.base.get(i) + self.increments[i] as f64 * self.jump_sizes.get(i));
    }

    fn bump(&mut self, i: usize) {
        self.shift(i, true);
    }

    fn next_unfrozen(&self, from: usize) -> Option<usize> {
        (1..=6).map(|k| (from + k) % 6).find(|&i| !self.frozen[i])
    }

    /// Enter the optimizing phase: record the reference loss and raise the
    /// first noise type.
    pub fn start_optimization(&mut self, loss: f64) -> Result<()> {
        check_loss(loss)?;
        self.recorded_loss = loss;
        self.phase = Phase::Optimizing;
        self.active_index = 0;
        self.bump(0);
        Ok(())
    }
}

fn check_loss(loss: f64) -> Result<()> {
    if loss > 0.0 && loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveLoss(loss))
    }
}

/// One controller update from the latest epoch loss.
pub fn scheduler_step(state: &SchedulerState, epoch_loss: f64) -> Result<SchedulerState> {
    check_loss(epoch_loss)?;
    if state.phase != Phase::Optimizing {
        return Err(Error::NotOptimizing);
    }
    let mut s = state.clone();
    let a = s.active_index;
    let d = (epoch_loss - s.recorded_loss) / s.recorded_loss;
    if d < -DECREASE_THRESHOLD {
        s.bump(a);
    } else if d > INCREASE_THRESHOLD {
        s.shift(a, false);
        s.frozen[a] = true;
        // the next type starts its trial immediately so that every revert
        // undoes exactly one increase of the type being judged
        if let Some(n) = s.next_unfrozen(a) {
            s.active_index = n;
            s.bump(n);
        }
    } else if let Some(n) = s.next_unfrozen(a) {
        s.active_index = n;
        s.bump(n);
    }
    s.recorded_loss = epoch_loss;
    if s.frozen.iter().all(|&f| f) {
        s.phase = Phase::Done;
    }
    Ok(s)
}

/// Noise levels to train epoch `epoch` with.
pub fn noise_for_epoch(state: &SchedulerState, epoch: usize) -> NoiseConfig {
    if epoch < WARMUP_EPOCHS {
        NoiseConfig::zero()
    } else if epoch < OPTIMIZE_FROM {
        default_noise_config()
    } else if state.phase < Phase::Optimizing {
        // optimization has not been entered yet: the first type is raised
        let mut l = state.levels;
        l.set(0, l.get(0) + state.jump_sizes.get(0));
        l
    } else {
        state.levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Levels the epoch was trained with.
    pub levels: NoiseConfig,
    pub active_index: usize,
    pub frozen: [bool; 6],
    pub phase: Phase,
}

/// Drives `trainer(epoch, levels) -> loss` for `epochs` epochs, updating the
/// controller after each one. Returns the final state and per-epoch trace.
pub fn run_scheduled_training<F>(mut trainer: F, epochs: usize, state: SchedulerState) -> Result<(SchedulerState, Vec<EpochRecord>)>
where
    F: FnMut(usize, &NoiseConfig) -> Result<f64>,
{
    let mut state = state;
    let mut trace = Vec::with_capacity(epochs);
    for epoch in state.epoch..state.epoch + epochs {
        let levels = noise_for_epoch(&state, epoch);
        let loss = trainer(epoch, &levels)?;
        check_loss(loss).map_err(|_| Error::Trainer { epoch, message: format!("trainer returned loss {loss}") })?;
        let phase_during = match epoch {
            e if e < WARMUP_EPOCHS => Phase::Warmup,
            e if e < OPTIMIZE_FROM => Phase::FixedNoise,
            _ => state.phase,
        };
        trace.push(EpochRecord {
            epoch,
            loss,
            levels,
            active_index: state.active_index,
            frozen: state.frozen,
            phase: phase_during,
        });
        if epoch + 1 == WARMUP_EPOCHS {
            state.phase = Phase::FixedNoise;
        } else if epoch + 1 == OPTIMIZE_FROM {
            state.start_optimization(loss)?;
        } else if epoch >= OPTIMIZE_FROM && state.phase == Phase::Optimizing {
            state = scheduler_step(&state, loss)?;
        }
        state.epoch = epoch + 1;
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn optimizing(recorded: f64) -> SchedulerState {
        let mut s = SchedulerState::new();
        s.start_optimization(recorded).unwrap();
        s
    }

    #[test]
    fn decrease_raises_same_type() {
        let s = optimizing(1.0);
        let n = scheduler_step(&s, 0.96).unwrap();
        assert_eq!(n.active_index, 0);
        assert_eq!(n.levels.xyz_sigma, 2.0);
        assert_eq!(n.recorded_loss, 0.96);
    }

    #[test]
    fn large_increase_reverts_and_freezes() {
        let s = optimizing(1.0);
        let n = scheduler_step(&s, 1.06).unwrap();
        assert!(n.frozen[0]);
        assert_eq!(n.levels.xyz_sigma, 1.0);
        assert_eq!(n.active_index, 1);
    }

    #[test]
    fn small_change_moves_on() {
        let s = optimizing(1.0);
        let n = scheduler_step(&s, 0.99).unwrap();
        assert_eq!(n.active_index, 1);
        assert_eq!(n.levels.xyz_sigma, 1.5);
        assert!((n.levels.normal_sigma - 0.03).abs() < 1e-15);
        assert!(!n.frozen[0]);
    }

    #[test]
    fn step_errors() {
        let s = optimizing(1.0);
        assert!(matches!(scheduler_step(&s, 0.0), Err(Error::NonPositiveLoss(_))));
        assert!(matches!(scheduler_step(&SchedulerState::new(), 1.0), Err(Error::NotOptimizing)));
    }

    #[test]
    fn epoch_noise_phases() {
        let s = SchedulerState::new();
        assert_eq!(noise_for_epoch(&s, 2), NoiseConfig::zero());
        assert_eq!(noise_for_epoch(&s, 5).to_array(), [1.0, 0.02, 0.02, 0.04, 5.0, 0.02]);
        assert_eq!(noise_for_epoch(&s, 8).to_array(), [1.5, 0.02, 0.02, 0.04, 5.0, 0.02]);
    }

    fn scripted(factor: f64) -> impl FnMut(usize, &NoiseConfig) -> Result<f64> {
        let mut loss = 1.0;
        move |_, _| {
            loss *= factor;
            Ok(loss)
        }
    }

    #[test]
    fn steady_decrease_keeps_raising_first_type() {
        let (state, trace) = run_scheduled_training(scripted(0.9), 20, SchedulerState::new()).unwrap();
        assert_eq!(trace.len(), 20);
        let used: Vec<f64> = trace[8..].iter().map(|r| r.levels.xyz_sigma).collect();
        let expected: Vec<f64> = (1..=12).map(|k| 1.0 + 0.5 * k as f64).collect();
        assert_eq!(used, expected);
        for r in &trace[8..] {
            assert_eq!(&r.levels.to_array()[1..], &default_noise_config().to_array()[1..]);
        }
        assert_eq!(state.active_index, 0);
        assert_eq!(state.phase, Phase::Optimizing);
    }

    #[test]
    fn steady_increase_freezes_everything() {
        let (state, trace) = run_scheduled_training(scripted(1.1), 14, SchedulerState::new()).unwrap();
        assert_eq!(state.phase, Phase::Done);
        assert_eq!(state.levels, default_noise_config());
        assert!(state.frozen.iter().all(|&f| f));
        // done after six optimizing steps (epochs 8..=13)
        assert_eq!(trace[13].phase, Phase::Optimizing);
        for (k, r) in trace[8..14].iter().enumerate() {
            assert_eq!(r.active_index, k);
            assert!(r.levels.get(k) > default_noise_config().get(k));
        }
    }

    #[test]
    fn short_run_never_optimizes() {
        let (state, trace) = run_scheduled_training(scripted(0.9), 6, SchedulerState::new()).unwrap();
        assert_eq!(state.phase, Phase::FixedNoise);
        assert_eq!(state.levels, default_noise_config());
        assert_eq!(trace.len(), 6);
    }

    #[test]
    fn trainer_failure_propagates() {
        let r = run_scheduled_training(
            |e, _| if e == 3 { Err(Error::Trainer { epoch: e, message: "boom".into() }) } else { Ok(1.0) },
            10,
            SchedulerState::new(),
        );
        assert!(matches!(r, Err(Error::Trainer { epoch: 3, .. })));
    }

    proptest! {
        #[test]
        fn level_and_phase_invariants(losses in proptest::collection::vec(0.5f64..1.5, 1..60)) {
            let mut calls = 0;
            let n = losses.len();
            let ls = losses.clone();
            let (state, trace) = run_scheduled_training(|e, _| { calls += 1; Ok(ls[e]) }, n, SchedulerState::new()).unwrap();
            prop_assert_eq!(calls, n);
            let d = default_noise_config();
            let j = NoiseConfig::jump_sizes();
            let mut prev_frozen = [false; 6];
            let mut prev_phase = Phase::Warmup;
            for r in trace.iter().chain(std::iter::once(&EpochRecord {
                epoch: n, loss: 1.0, levels: state.levels, active_index: state.active_index, frozen: state.frozen, phase: state.phase,
            })) {
                if r.epoch >= OPTIMIZE_FROM {
                    for i in 0..6 {
                        let k = (r.levels.get(i) - d.get(i)) / j.get(i);
                        prop_assert!(k > -1e-9 && (k - k.round()).abs() < 1e-6);
                    }
                }
                for i in 0..6 {
                    prop_assert!(!prev_frozen[i] || r.frozen[i]);
                }
                prop_assert!(r.phase >= prev_phase);
                prev_frozen = r.frozen;
                prev_phase = r.phase;
            }
        }
    }
}
