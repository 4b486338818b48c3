use nalgebra::Point3;
use rand::Rng;

use super::params::{FixedParams, PoseHypothesis};
use super::votes::Match;
use super::DIAGONAL_REF;
use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Pose};
use crate::par::{self, Parallelism};
use crate::seed;

const RESAMPLE_ATTEMPTS: usize = 10;

fn degenerate(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, scale: f64) -> bool {
    (b - a).cross(&(c - a)).norm() < 1e-6 * scale * scale
}

/// Inlier distance in mm for threshold `rd` and object diagonal.
pub fn inlier_distance(rd: f64, diagonal: f64) -> f64 {
    rd * diagonal / DIAGONAL_REF
}

pub fn count_inliers(pose: &Pose, matches: &[Match], threshold: f64) -> usize {
    let t2 = threshold * threshold;
    matches.iter().filter(|m| (pose.apply(&m.keypoint) - m.scene).norm_squared() < t2).count()
}

/// `ri` three-point hypotheses drawn in chunks of 50, each chunk with its own
/// RNG stream; sorted by inlier count (descending), then iteration index.
pub fn ransac_pose(matches: &[Match], rd: f64, ri: u32, diagonal: f64, seed: u64) -> Result<Vec<PoseHypothesis>> {
    ransac_pose_with(matches, rd, ri, diagonal, seed, Parallelism::Sequential)
}

pub fn ransac_pose_with(
    matches: &[Match],
    rd: f64,
    ri: u32,
    diagonal: f64,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<PoseHypothesis>> {
    if matches.len() < 3 {
        return Err(Error::InsufficientMatches { found: matches.len(), required: 3 });
    }
    if !(rd > 0.0) || ri == 0 {
        return Err(Error::InvalidParameter(format!("ransac needs rd > 0 and ri > 0, got {rd}, {ri}")));
    }
    let threshold = inlier_distance(rd, diagonal);
    let chunk = FixedParams::RANSAC_CHUNK;
    let chunks = (ri as usize).div_ceil(chunk);
    let per_chunk = par::map_range(chunks, parallelism, |c| {
        let mut rng = seed::rng_at(seed, &[seed::label("ransac"), c as u64]);
        let n = chunk.min(ri as usize - c * chunk);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut pose = None;
            for _ in 0..RESAMPLE_ATTEMPTS {
                let i = rng.random_range(0..matches.len());
                let j = rng.random_range(0..matches.len());
                let l = rng.random_range(0..matches.len());
                if i == j || j == l || i == l {
                    continue;
                }
                let (a, b, c3) = (&matches[i], &matches[j], &matches[l]);
                if degenerate(&a.keypoint, &b.keypoint, &c3.keypoint, diagonal)
                    || degenerate(&a.scene, &b.scene, &c3.scene, diagonal)
                {
                    continue;
                }
                pose = fit_rigid(&[a.keypoint, b.keypoint, c3.keypoint], &[a.scene, b.scene, c3.scene]);
                if pose.is_some() {
                    break;
                }
            }
            let (pose, inliers) = match pose {
                Some(p) => (p, count_inliers(&p, matches, threshold)),
                None => (Pose::identity(), 0),
            };
            out.push((c * chunk + k, PoseHypothesis { pose, inlier_count: inliers, depth_score: 0.0 }));
        }
        out
    });
    let mut all: Vec<(usize, PoseHypothesis)> = per_chunk.into_iter().flatten().collect();
    all.sort_by(|a, b| b.1.inlier_count.cmp(&a.1.inlier_count).then(a.0.cmp(&b.0)));
    Ok(all.into_iter().map(|(_, h)| h).collect())
}

/// Least-squares refit of a hypothesis on its inliers.
pub fn refine_on_inliers(h: &PoseHypothesis, matches: &[Match], threshold: f64) -> PoseHypothesis {
    let t2 = threshold * threshold;
    let (src, dst): (Vec<_>, Vec<_>) = matches
        .iter()
        .filter(|m| (h.pose.apply(&m.keypoint) - m.scene).norm_squared() < t2)
        .map(|m| (m.keypoint, m.scene))
        .unzip();
    match fit_rigid(&src, &dst) {
        Some(pose) => PoseHypothesis { pose, inlier_count: count_inliers(&pose, matches, threshold), depth_score: 0.0 },
        None => *h,
    }
}
