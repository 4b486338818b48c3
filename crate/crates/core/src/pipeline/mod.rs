//! The tunable pose-estimation pipeline: candidate extraction and ranking,
//! keypoint voting, RANSAC, coarse-to-fine ICP and the depth check.

mod candidates;
mod depth;
mod icp;
mod params;
mod prepared;
mod ransac;
mod votes;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use candidates::{extract_candidates, objectness, rank_candidates, Candidate, SEEDS_PER_CANDIDATE};
pub use depth::{depth_check, depth_terms, DepthTerms};
pub use icp::{c2f_icp, icp_cutoffs, IcpResult};
pub use params::{
    ContinuousParams, DiscreteParams, FixedParams, PoseHypothesis, CONTINUOUS_NAMES, DISCRETE_NAMES,
};
pub use prepared::{edge_mask, ObjectView, PreparedModel, PreparedScene, EDGE_JUMP, MEMBER_TOLERANCE};
pub use ransac::{count_inliers, inlier_distance, ransac_pose, ransac_pose_with, refine_on_inliers};
pub use votes::{generate_votes, raw_votes, threshold_votes, Match, COLOR_GAIN, NORMAL_GAIN, VOTE_SIGMA};

use crate::error::Result;
use crate::geometry::{KdTree, Pose};
use crate::par::{self, Parallelism};
use crate::scene::Scene;
use crate::seed;

/// Reference diagonal for distance parameters (mm).
pub const DIAGONAL_REF: f64 = 100.0;
/// Depth score below which a best hypothesis is not reported as a detection.
pub const ACCEPT_SCORE: f64 = 0.8;

/// Wall time per stage in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub t_pre: f64,
    pub t_net: f64,
    pub t_ran: f64,
    pub t_icp: f64,
    pub t_depth: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.t_pre + self.t_net + self.t_ran + self.t_icp + self.t_depth
    }

    pub fn add(&mut self, o: &Timing) {
        self.t_pre += o.t_pre;
        self.t_net += o.t_net;
        self.t_ran += o.t_ran;
        self.t_icp += o.t_icp;
        self.t_depth += o.t_depth;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Highest depth-score hypothesis; `None` when every candidate was rejected.
    pub best: Option<PoseHypothesis>,
    pub timing: Timing,
    /// Wall time of the whole call (s).
    pub wall: f64,
    pub candidates: usize,
    pub rejected: usize,
}

impl Estimate {
    pub fn pose(&self) -> Option<&Pose> {
        self.best.as_ref().map(|h| &h.pose)
    }

    /// Whether the best hypothesis passes the depth-score acceptance gate.
    pub fn detected(&self) -> bool {
        self.best.is_some_and(|h| h.depth_score >= ACCEPT_SCORE)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Track {
    rank: usize,
    cloud_tree: KdTree,
    points: Vec<nalgebra::Point3<f64>>,
    matches: Vec<Match>,
}

/// Full chain on a raw scene (preparation time is reported as `t_pre`).
pub fn estimate(scene: &Scene, model: &crate::geometry::ObjectModel, cp: &ContinuousParams, dp: &DiscreteParams, seed: u64) -> Result<Estimate> {
    let start = Instant::now();
    let pm = PreparedModel::new(model)?;
    let ps = PreparedScene::new(scene, std::slice::from_ref(&pm))?;
    let mut e = estimate_prepared(&ps, &pm, cp, dp, seed, Parallelism::default())?;
    e.timing.t_pre = ps.prep_seconds;
    e.wall = start.elapsed().as_secs_f64();
    Ok(e)
}

/// Full chain on prepared inputs; `t_pre` is left at zero because scene
/// preparation is shared by all objects of an image.
pub fn estimate_prepared(
    ps: &PreparedScene,
    pm: &PreparedModel,
    cp: &ContinuousParams,
    dp: &DiscreteParams,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Estimate> {
    cp.validate()?;
    dp.validate()?;
    let start = Instant::now();
    let mut timing = Timing::default();

    let t = Instant::now();
    let cands = extract_candidates(ps, pm, cp, dp, seed::derive_named(seed, "candidates"));
    let n_cands = cands.len();
    let mut ranked = rank_candidates(cands, pm);
    ranked.truncate(dp.pe as usize);
    let voted: Vec<Option<Track>> = par::map(&ranked.iter().enumerate().collect::<Vec<_>>(), parallelism, |(k, c)| {
        let s = seed::derive(seed, &[seed::label("candidate"), *k as u64]);
        generate_votes(c, ps, pm, cp.vt, s).ok().map(|matches| Track {
            rank: *k,
            cloud_tree: KdTree::new(c.cloud.points()),
            points: c.cloud.points().to_vec(),
            matches,
        })
    });
    let tracks: Vec<Track> = voted.into_iter().flatten().collect();
    let rejected = ranked.len() - tracks.len();
    timing.t_net = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let threshold = inlier_distance(cp.rd, pm.diagonal());
    let proposals: Vec<Vec<PoseHypothesis>> = par::map(&tracks, parallelism, |tr| {
        let s = seed::derive(seed, &[seed::label("candidate"), tr.rank as u64]);
        match ransac_pose(&tr.matches, cp.rd, dp.ri, pm.diagonal(), s) {
            Ok(h) => h.iter().take(dp.dc as usize).map(|h| refine_on_inliers(h, &tr.matches, threshold)).collect(),
            Err(_) => Vec::new(),
        }
    });
    timing.t_ran = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let jobs: Vec<(usize, PoseHypothesis)> =
        proposals.iter().enumerate().flat_map(|(i, hs)| hs.iter().map(move |h| (i, *h))).collect();
    let refined: Vec<PoseHypothesis> = par::map(&jobs, parallelism, |(i, h)| {
        let tr = &tracks[*i];
        c2f_icp(h, &tr.cloud_tree, &tr.points, pm, cp.id, cp.is, dp.ii).hypothesis
    });
    timing.t_icp = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let view = ps.view(pm.name());
    let fallback;
    let near_edge: &[bool] = match view {
        Some(v) => &v.near_edge,
        None => {
            fallback = edge_mask(&ps.depth, EDGE_JUMP * pm.scale);
            &fallback
        }
    };
    let checked: Vec<PoseHypothesis> =
        par::map(&refined, parallelism, |h| depth_check(h, &ps.depth, near_edge, pm, cp.bd, cp.ad, &ps.cam));
    timing.t_depth = t.elapsed().as_secs_f64();

    let mut best: Option<PoseHypothesis> = None;
    for h in checked {
        if best.is_none_or(|b| h.depth_score > b.depth_score) {
            best = Some(h);
        }
    }
    Ok(Estimate { best, timing, wall: start.elapsed().as_secs_f64(), candidates: n_cands, rejected })
}
