//! Surrogate keypoint voting.
//!
//! Object points are mapped into the model frame with the ground-truth pose
//! and perturbed by Gaussian vote noise whose spread grows with the point's
//! normal, colour and off-surface deviation from the model; the residual is
//! the size of that perturbation. Background points vote for a uniformly
//! random location in the model box with a residual drawn from a wider
//! spread, so confidences of object and background votes overlap. Each point
//! is matched to its nearest keypoint with confidence `exp(-residual/diagonal)`.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::candidates::Candidate;
use super::params::FixedParams;
use super::prepared::{PreparedModel, PreparedScene};
use crate::error::{Error, Result};
use crate::seed;

/// Base vote noise as a fraction of the diagonal.
pub const VOTE_SIGMA: f64 = 0.05;
/// Residual spread of background votes as a fraction of the diagonal.
pub const BACKGROUND_SIGMA: f64 = 0.15;
/// Noise gain per diagonal-scaled mm of distance from the model surface.
pub const SURFACE_GAIN: f64 = 0.5;
/// Noise gain per unit of normal deviation (1 − |cos|).
pub const NORMAL_GAIN: f64 = 6.0;
/// Noise gain per unit of colour deviation (Euclidean RGB distance).
pub const COLOR_GAIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub scene: Point3<f64>,
    /// Keypoint in model coordinates.
    pub keypoint: Point3<f64>,
    pub confidence: f64,
}

fn gauss<R: Rng>(rng: &mut R, unit: &Normal<f64>) -> Vector3<f64> {
    Vector3::new(unit.sample(rng), unit.sample(rng), unit.sample(rng))
}

/// Votes of every candidate point, before thresholding.
pub fn raw_votes(cand: &Candidate, ps: &PreparedScene, pm: &PreparedModel, seed: u64) -> Vec<Match> {
    let mut rng = seed::rng_at(seed, &[seed::label("votes")]);
    let view = ps.view(pm.name());
    let inv = view.and_then(|v| v.gt).map(|g| (g, g.inverse()));
    let diag = pm.diagonal();
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let (lo, hi) = pm.bbox;
    cand.indices
        .iter()
        .map(|&i| {
            let p = ps.cloud.points()[i];
            let member = view.and_then(|v| v.membership[i]).zip(inv);
            let (q, residual) = match member {
                Some((j, (gt, inv))) => {
                    let j = j as usize;
                    let local = inv.apply(&p);
                    let n_model = gt.apply_vector(&pm.surface_normals[j]);
                    let normal_dev = 1.0 - ps.normals[i].dot(&n_model).abs().min(1.0);
                    let color_dev = (ps.colors[i] - pm.surface_colors[j]).norm();
                    let surface_dev = (local - pm.model.cloud.points()[j]).norm() / pm.scale;
                    let gain = 1.0 + NORMAL_GAIN * normal_dev + COLOR_GAIN * color_dev + SURFACE_GAIN * surface_dev;
                    let e = gauss(&mut rng, &unit) * (VOTE_SIGMA * diag * gain);
                    (local + e, e.norm())
                }
                None => {
                    let q = Point3::new(
                        rng.random_range(lo.x..=hi.x),
                        rng.random_range(lo.y..=hi.y),
                        rng.random_range(lo.z..=hi.z),
                    );
                    (q, (gauss(&mut rng, &unit) * (BACKGROUND_SIGMA * diag)).norm())
                }
            };
            let (k, _) = pm.keypoint_tree.nearest(&q).expect("model has keypoints");
            Match { scene: p, keypoint: pm.model.keypoints[k], confidence: (-residual / diag).exp() }
        })
        .collect()
}

/// Keeps votes with confidence ≥ `vt` × the best confidence; fewer than the
/// minimum number of matches rejects the candidate.
pub fn threshold_votes(votes: Vec<Match>, vt: f64) -> Result<Vec<Match>> {
    let best = votes.iter().map(|m| m.confidence).fold(0.0, f64::max);
    let kept: Vec<Match> = votes.into_iter().filter(|m| m.confidence >= vt * best).collect();
    if kept.len() < FixedParams::MIN_MATCHES {
        return Err(Error::InsufficientMatches { found: kept.len(), required: FixedParams::MIN_MATCHES });
    }
    Ok(kept)
}

pub fn generate_votes(cand: &Candidate, ps: &PreparedScene, pm: &PreparedModel, vt: f64, seed: u64) -> Result<Vec<Match>> {
    if !(vt > 0.0 && vt <= 1.0) {
        return Err(Error::InvalidParameter(format!("vt must lie in (0, 1], got {vt}")));
    }
    threshold_votes(raw_votes(cand, ps, pm, seed), vt)
}
