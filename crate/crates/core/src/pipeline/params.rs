use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Continuous pipeline parameters. Distances are in mm for a 100 mm object
/// and scale with the object diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParams {
    /// Vote acceptance threshold relative to the best vote.
    pub vt: f64,
    /// RANSAC inlier distance.
    pub rd: f64,
    /// ICP correspondence distance at the finest stage.
    pub id: f64,
    /// ICP coarse-to-fine scale between stages.
    pub is: f64,
    /// Background/foreground distance of the depth check.
    pub bd: f64,
    /// Object-point acceptance distance of the depth check.
    pub ad: f64,
    /// Candidate cut-off radius.
    pub sr: f64,
}

pub const CONTINUOUS_NAMES: [&str; 7] = ["vt", "rd", "id", "is", "bd", "ad", "sr"];

impl ContinuousParams {
    /// Hand-tuned defaults.
    pub const HEURISTIC: ContinuousParams = ContinuousParams { vt: 0.95, rd: 10.0, id: 2.5, is: 2.0, bd: 10.0, ad: 5.0, sr: 72.0 };
    /// Published optimum found without domain randomization.
    pub const NO_DR_OPTIMIZED: ContinuousParams =
        ContinuousParams { vt: 0.27, rd: 17.03, id: 1.24, is: 2.25, bd: 21.0, ad: 1.0, sr: 108.0 };
    /// Published optimum for the ADD objective.
    pub const ADD_OPTIMIZED: ContinuousParams =
        ContinuousParams { vt: 0.275, rd: 12.85, id: 0.77, is: 3.49, bd: 59.0, ad: 5.0, sr: 66.0 };
    /// Published optimum for the averaged BOP objective.
    pub const OPTIMIZED: ContinuousParams =
        ContinuousParams { vt: 0.174, rd: 19.88, id: 4.85, is: 1.24, bd: 86.0, ad: 12.0, sr: 108.0 };

    pub fn to_array(&self) -> [f64; 7] {
        [self.vt, self.rd, self.id, self.is, self.bd, self.ad, self.sr]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        ContinuousParams { vt: a[0], rd: a[1], id: a[2], is: a[3], bd: a[4], ad: a[5], sr: a[6] }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in CONTINUOUS_NAMES.iter().zip(self.to_array()) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.vt > 1.0 {
            return Err(Error::InvalidParameter(format!("vt must be <= 1, got {}", self.vt)));
        }
        if self.is < 1.0 {
            return Err(Error::InvalidParameter(format!("is must be >= 1, got {}", self.is)));
        }
        Ok(())
    }
}

impl Default for ContinuousParams {
    fn default() -> Self {
        ContinuousParams::HEURISTIC
    }
}

/// Discrete (work-amount) pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiscreteParams {
    /// Point clouds classified.
    pub pc: u32,
    /// Point clouds pose-estimated.
    pub pe: u32,
    /// RANSAC iterations.
    pub ri: u32,
    /// Proposals depth-checked per candidate.
    pub dc: u32,
    /// ICP iterations per stage.
    pub ii: u32,
}

pub const DISCRETE_NAMES: [&str; 5] = ["pc", "pe", "ri", "dc", "ii"];

impl DiscreteParams {
    /// Values held fixed while the continuous parameters are optimized.
    pub const BO_FIXED: DiscreteParams = DiscreteParams { pc: 32, pe: 6, ri: 500, dc: 2, ii: 10 };
    /// Published set meeting a four-second budget.
    pub const UNDER_FOUR_SECONDS: DiscreteParams = DiscreteParams { pc: 16, pe: 4, ri: 1500, dc: 1, ii: 10 };
    /// Published maximum-recall set.
    pub const MAX: DiscreteParams = DiscreteParams { pc: 32, pe: 8, ri: 2500, dc: 10, ii: 10 };

    pub fn new(pc: u32, pe: u32, ri: u32, dc: u32, ii: u32) -> Result<Self> {
        let d = DiscreteParams { pc, pe, ri, dc, ii };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.pc, self.pe, self.ri, self.dc, self.ii].contains(&0) {
            return Err(Error::InvalidParameter(format!("discrete parameters must be >= 1: {self:?}")));
        }
        if self.pe > self.pc {
            return Err(Error::InvalidParameter(format!("pe ({}) exceeds pc ({})", self.pe, self.pc)));
        }
        if self.dc > self.ri {
            return Err(Error::InvalidParameter(format!("dc ({}) exceeds ri ({})", self.dc, self.ri)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [u32; 5] {
        [self.pc, self.pe, self.ri, self.dc, self.ii]
    }
}

impl Default for DiscreteParams {
    fn default() -> Self {
        DiscreteParams::BO_FIXED
    }
}

/// Structural constants of the pipeline.
pub struct FixedParams;

impl FixedParams {
    pub const ICP_RESOLUTIONS: usize = 3;
    pub const INPUT_POINTS: usize = 2048;
    pub const MIN_POINTS: usize = 512;
    pub const MIN_MATCHES: usize = 100;
    /// mm
    pub const SCENE_VOXEL: f64 = 1.0;
    /// mm, for a 100 mm object
    pub const ICP_MODEL_VOXEL: f64 = 5.0;
    pub const MAX_KEYPOINTS: usize = crate::geometry::MAX_KEYPOINTS;
    pub const RANSAC_CHUNK: usize = 50;
    /// mm
    pub const NORMAL_RADIUS: f64 = 10.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseHypothesis {
    pub pose: Pose,
    pub inlier_count: usize,
    pub depth_score: f64,
}

impl PoseHypothesis {
    pub fn new(pose: Pose) -> Self {
        PoseHypothesis { pose, inlier_count: 0, depth_score: 0.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_rows_are_valid() {
        for p in [
            ContinuousParams::HEURISTIC,
            ContinuousParams::NO_DR_OPTIMIZED,
            ContinuousParams::ADD_OPTIMIZED,
            ContinuousParams::OPTIMIZED,
        ] {
            p.validate().unwrap();
        }
        for d in [DiscreteParams::BO_FIXED, DiscreteParams::UNDER_FOUR_SECONDS, DiscreteParams::MAX] {
            d.validate().unwrap();
        }
        assert_eq!(DiscreteParams::BO_FIXED.to_array(), [32, 6, 500, 2, 10]);
    }

    #[test]
    fn feasibility_rules() {
        assert!(DiscreteParams::new(8, 10, 500, 1, 10).is_err());
        assert!(DiscreteParams::new(8, 8, 2, 5, 10).is_err());
        assert!(DiscreteParams::new(8, 8, 500, 5, 0).is_err());
        let mut c = ContinuousParams::HEURISTIC;
        c.vt = 1.2;
        assert!(c.validate().is_err());
        c.vt = 0.5;
        c.is = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ContinuousParams::OPTIMIZED;
        let back: ContinuousParams = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
