//! Built-in synthetic object models.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use super::shapes::{cuboid, cylinder, ellipsoid, Surface};
use crate::error::{Error, Result};
use crate::geometry::{ObjectModel, PointCloud, Pose, Symmetry};
use crate::seed;

/// Surface sampling pitch of catalog models (mm).
pub const MODEL_SPACING: f64 = 1.5;

pub const NAMES: [&str; 3] = ["ape", "can", "eggbox"];

fn finish(name: &str, surface: Surface, base: Vector3<f64>, symmetry: Symmetry) -> ObjectModel {
    let mut rng = seed::rng(seed::derive_named(0, name));
    let colors = surface
        .points
        .iter()
        .map(|_| base.map(|c| (c + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0)))
        .collect();
    // recentre on the bounding-box centre so the model origin is meaningful
    let (lo, hi) = bounds(&surface.points);
    let mid = (lo.coords + hi.coords) / 2.0;
    let points = surface.points.iter().map(|p| p - mid).collect();
    let cloud = PointCloud::new(points, Some(surface.normals), Some(colors)).expect("catalog cloud is valid");
    ObjectModel::new(name, cloud, symmetry).expect("catalog model is valid")
}

fn bounds(points: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Seated figure: ellipsoid body with an off-centre head (no symmetry).
pub fn ape() -> ObjectModel {
    let body_r = Vector3::new(24.0, 18.0, 30.0);
    let head_c = Point3::new(5.0, 6.0, 36.0);
    let head_r = 13.0;
    let mut body = ellipsoid(Point3::origin(), body_r, MODEL_SPACING);
    body.retain(|p| (p - head_c).norm() > head_r);
    let mut head = ellipsoid(head_c, Vector3::repeat(head_r), MODEL_SPACING);
    head.retain(|p| p.coords.component_div(&body_r).norm() > 1.0);
    body.append(head);
    finish("ape", body, Vector3::new(0.55, 0.35, 0.2), Symmetry::None)
}

/// Cylinder with a side handle (no symmetry).
pub fn can() -> ObjectModel {
    let (radius, height) = (35.0, 100.0);
    let mut s = cylinder(Point3::origin(), radius, height, MODEL_SPACING);
    let handle_c = Point3::new(radius + 8.0, 0.0, 5.0);
    let handle_size = Vector3::new(16.0, 20.0, 60.0);
    let mut handle = cuboid(handle_c, handle_size, MODEL_SPACING);
    handle.retain(|p| p.x > radius);
    s.append(handle);
    finish("can", s, Vector3::new(0.8, 0.15, 0.12), Symmetry::None)
}

/// Box with a 2×3 array of domes on top; symmetric under a half turn about z.
pub fn eggbox() -> ObjectModel {
    let size = Vector3::new(120.0, 90.0, 60.0);
    let mut s = cuboid(Point3::origin(), size, MODEL_SPACING);
    let r = 12.0;
    let mut domes = Surface::new();
    for &x in &[-40.0, 0.0, 40.0] {
        for &y in &[-22.0, 22.0] {
            let c = Point3::new(x, y, size.z / 2.0);
            let mut d = ellipsoid(c, Vector3::repeat(r), MODEL_SPACING);
            d.retain(|p| p.z > size.z / 2.0);
            domes.append(d);
        }
    }
    // drop the lid under each dome
    s.retain(|p| {
        !((p.z - size.z / 2.0).abs() < 1e-9
            && [-40.0, 0.0, 40.0]
                .iter()
                .any(|&x| [-22.0, 22.0].iter().any(|&y| ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt() < r)))
    });
    s.append(domes);
    let half_turn = Pose::from_axis_angle(Vector3::z(), std::f64::consts::PI, Vector3::zeros());
    finish("eggbox", s, Vector3::new(0.9, 0.8, 0.2), Symmetry::Discrete(vec![half_turn]))
}

pub fn by_name(name: &str) -> Result<ObjectModel> {
    match name {
        "ape" => Ok(ape()),
        "can" => Ok(can()),
        "eggbox" => Ok(eggbox()),
        other => Err(Error::Config(format!("unknown object '{other}' (known: {})", NAMES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::KdTree;

    #[test]
    fn catalog_models_are_valid() {
        for name in NAMES {
            let m = by_name(name).unwrap();
            m.validate().unwrap();
            assert!(m.diagonal > 90.0 && m.diagonal < 200.0, "{name}: {}", m.diagonal);
            assert_eq!(m.keypoints.len(), 100);
        }
        assert!(by_name("teapot").is_err());
    }

    #[test]
    fn eggbox_half_turn_maps_surface_onto_itself() {
        let m = eggbox();
        let tree = KdTree::new(m.cloud.points());
        let t = &m.symmetry_transforms()[1];
        let worst = m
            .cloud
            .points()
            .iter()
            .map(|p| tree.nearest(&t.apply(p)).unwrap().1.sqrt())
            .fold(0.0, f64::max);
        assert!(worst < MODEL_SPACING, "{worst}");
    }

    #[test]
    fn models_sampled_coarser_than_scene_voxel() {
        for name in NAMES {
            let m = by_name(name).unwrap();
            let down = m.cloud.voxel_downsample(1.0).unwrap();
            assert!(down.len() as f64 > 0.97 * m.cloud.len() as f64, "{name}");
        }
    }
}
