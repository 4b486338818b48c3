//! Surrogate candidate detector: colour- and density-scored seeds, cut out
//! by radius, then ranked by an objectness score.

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use super::params::{ContinuousParams, DiscreteParams, FixedParams};
use super::prepared::{PreparedModel, PreparedScene};
use crate::geometry::PointCloud;
use crate::seed;

/// Seeds drawn per requested candidate.
pub const SEEDS_PER_CANDIDATE: usize = 8;
/// Radius (fraction of the diagonal) of the local statistics around a seed.
const LOCAL_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Indices into the prepared scene cloud (ascending).
    pub indices: Vec<usize>,
    pub cloud: PointCloud,
    pub center: Point3<f64>,
    pub objectness: f64,
}

/// Up to `dp.pc` local clouds of at most 2048 points cut at radius `cp.sr`
/// (scaled) around the best-scoring seeds. Clouds smaller than 512 points
/// are dropped, so an empty result means nothing was detected.
pub fn extract_candidates(
    ps: &PreparedScene,
    pm: &PreparedModel,
    cp: &ContinuousParams,
    dp: &DiscreteParams,
    seed: u64,
) -> Vec<Candidate> {
    if ps.is_empty() {
        return Vec::new();
    }
    let pts = ps.cloud.points();
    let mut rng = seed::rng_at(seed, &[seed::label("seeds")]);
    let local = LOCAL_RADIUS * pm.diagonal();
    let n_seeds = (dp.pc as usize * SEEDS_PER_CANDIDATE).min(pts.len());
    let mut scored: Vec<(f64, usize)> = (0..n_seeds)
        .map(|_| {
            let i = rng.random_range(0..pts.len());
            let mut count = 0usize;
            let mut color = Vector3::zeros();
            ps.tree.for_each_within(&pts[i], local, |j, _| {
                count += 1;
                color += ps.colors[j];
            });
            let sim = pm.color_similarity(&(color / count.max(1) as f64));
            (sim * count as f64, i)
        })
        .collect();
    // best first; equal scores keep draw order
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let radius = cp.sr * pm.scale;
    let mut centers: Vec<Point3<f64>> = Vec::new();
    for &(_, i) in &scored {
        if centers.len() == dp.pc as usize {
            break;
        }
        let p = pts[i];
        if centers.iter().any(|c| (c - p).norm() < radius / 2.0) {
            continue;
        }
        centers.push(p);
    }

    let mut out = Vec::new();
    for (k, seed_point) in centers.into_iter().enumerate() {
        // one colour-weighted mean-shift step
        let mut wsum = 0.0;
        let mut acc = Vector3::zeros();
        ps.tree.for_each_within(&seed_point, radius / 2.0, |j, _| {
            let w = pm.color_similarity(&ps.colors[j]);
            wsum += w;
            acc += pts[j].coords * w;
        });
        let center = if wsum > 1e-12 { Point3::from(acc / wsum) } else { seed_point };
        let mut indices = ps.tree.within(&center, radius);
        if indices.len() < FixedParams::MIN_POINTS {
            continue;
        }
        if indices.len() > FixedParams::INPUT_POINTS {
            let mut sub_rng = seed::rng_at(seed, &[seed::label("cut"), k as u64]);
            let mut pick: Vec<usize> =
                sample(&mut sub_rng, indices.len(), FixedParams::INPUT_POINTS).into_iter().map(|j| indices[j]).collect();
            pick.sort_unstable();
            indices = pick;
        }
        let cloud = PointCloud::from_parts_unchecked(
            indices.iter().map(|&j| pts[j]).collect(),
            Some(indices.iter().map(|&j| ps.normals[j]).collect()),
            Some(indices.iter().map(|&j| ps.colors[j]).collect()),
        );
        out.push(Candidate { indices, cloud, center, objectness: 0.0 });
    }
    out
}

/// Colour purity times compactness, in [0, 1].
pub fn objectness(cloud: &PointCloud, pm: &PreparedModel) -> f64 {
    let Some(c) = cloud.centroid() else { return 0.0 };
    let n = cloud.len() as f64;
    let purity = match cloud.colors() {
        Some(cs) => cs.iter().map(|x| pm.color_similarity(x)).sum::<f64>() / n,
        None => pm.color_similarity(&Vector3::repeat(0.5)),
    };
    let half = pm.diagonal() / 2.0;
    let compact = cloud.points().iter().filter(|p| (*p - c).norm() <= half).count() as f64 / n;
    purity * (0.5 + 0.5 * compact)
}

/// Sorts candidates by descending objectness; ties keep input order.
pub fn rank_candidates(mut candidates: Vec<Candidate>, pm: &PreparedModel) -> Vec<Candidate> {
    for c in &mut candidates {
        c.objectness = objectness(&c.cloud, pm);
    }
    candidates.sort_by(|a, b| b.objectness.total_cmp(&a.objectness));
    candidates
}
