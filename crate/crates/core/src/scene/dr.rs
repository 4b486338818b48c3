use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{NoiseConfig, Scene};
use crate::error::Result;
use crate::geometry::Pose;
use crate::seed;

/// Per-sample level: |N(0, max/2)| clipped to `max`.
pub fn sample_level<R: Rng + ?Sized>(rng: &mut R, max: f64) -> f64 {
    if max <= 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (z.abs() * max / 2.0).min(max)
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Replace the depth of the `frac · N` points nearest to a random anchor
/// point with the median depth of that patch. Returns the patch indices.
pub fn flatten_patch<R: Rng + ?Sized>(points: &mut [Point3<f64>], frac: f64, rng: &mut R) -> Vec<usize> {
    let k = ((frac * points.len() as f64).round() as usize).min(points.len());
    if k == 0 {
        return Vec::new();
    }
    let anchor = points[rng.random_range(0..points.len())];
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - anchor).norm_squared(), i)).collect();
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        order.truncate(k);
    }
    let patch: Vec<usize> = order.into_iter().map(|(_, i)| i).collect();
    let mut depths: Vec<f64> = patch.iter().map(|&i| points[i].z).collect();
    depths.sort_by(f64::total_cmp);
    let median = if k % 2 == 1 {
        depths[k / 2]
    } else {
        0.5 * (depths[k / 2 - 1] + depths[k / 2])
    };
    for &i in &patch {
        points[i].z = median;
    }
    patch
}

/// Applies rotation, XYZ, normal, RGB, RGB-shift and flattening noise, in
/// that order, each at a level drawn per call from its configured maximum.
/// The whole-cloud rotation is composed into the ground-truth poses.
pub fn apply_domain_randomization(scene: &Scene, cfg: &NoiseConfig, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut out = scene.clone();
    if out.cloud.is_empty() {
        return Ok(out);
    }
    let mut rng = seed::rng(seed::derive_named(seed, "domain-randomization"));
    let levels = cfg.to_array().map(|max| sample_level(&mut rng, max));
    let [xyz, normal, rgb, shift, rotation, flatten] = levels;
    let mut geometry_changed = false;

    if rotation > 0.0 {
        let axis: Vector3<f64> = loop {
            let v = gaussian3(&mut rng, 1.0);
            if v.norm() > 1e-9 {
                break v;
            }
        };
        let angle: f64 = Normal::new(0.0, rotation).unwrap().sample(&mut rng);
        let c = out.cloud.centroid().expect("non-empty").coords;
        let spin = Pose::from_axis_angle(axis, angle.to_radians(), Vector3::zeros());
        let about = Pose::from_translation(c).compose(&spin).compose(&Pose::from_translation(-c));
        out.cloud = out.cloud.transform(&about);
        for pose in out.gt_poses.values_mut() {
            *pose = about.compose(pose);
        }
        geometry_changed = true;
    }
    if xyz > 0.0 {
        for p in out.cloud.points_mut() {
            *p += gaussian3(&mut rng, xyz);
        }
        geometry_changed = true;
    }
    if normal > 0.0 {
        if let Some(ns) = out.cloud.normals_mut() {
            for n in ns.iter_mut() {
                let m = *n + gaussian3(&mut rng, normal);
                *n = if m.norm() > 1e-12 { m.normalize() } else { *n };
            }
        }
    }
    if rgb > 0.0 {
        if let Some(cs) = out.cloud.colors_mut() {
            for c in cs.iter_mut() {
                *c = (*c + gaussian3(&mut rng, rgb)).map(|v| v.clamp(0.0, 1.0));
            }
        }
    }
    if shift > 0.0 {
        let offset = gaussian3(&mut rng, shift);
        if let Some(cs) = out.cloud.colors_mut() {
            for c in cs.iter_mut() {
                *c = (*c + offset).map(|v| v.clamp(0.0, 1.0));
            }
        }
    }
    if flatten > 0.0 {
        let patch = flatten_patch(out.cloud.points_mut(), flatten, &mut rng);
        geometry_changed |= !patch.is_empty();
    }
    if geometry_changed {
        out.rerender();
    }
    Ok(out)
}
