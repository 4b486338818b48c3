//! Synthetic desk scenes and six-channel domain randomization.

mod catalog;
mod dr;
mod io;
mod shapes;

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthImage, ObjectModel, PointCloud, Pose};
use crate::seed;

pub use catalog::{ape, by_name, can, eggbox, MODEL_SPACING, NAMES as CATALOG};
pub use dr::{apply_domain_randomization, flatten_patch, sample_level};
pub use io::{read_pgm, write_pgm};
use shapes::{cuboid, cylinder, ellipsoid, Surface};

pub const NOISE_NAMES: [&str; 6] = ["xyz", "normal", "rgb", "rgb_shift", "rotation", "flatten"];

/// Maximum noise level per randomization channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// mm
    pub xyz_sigma: f64,
    pub normal_sigma: f64,
    pub rgb_sigma: f64,
    pub rgb_shift: f64,
    /// degrees
    pub rotation_max: f64,
    pub flatten_frac: f64,
}

/// Predetermined levels used once randomization switches on.
pub fn default_noise_config() -> NoiseConfig {
    NoiseConfig {
        xyz_sigma: 1.0,
        normal_sigma: 0.02,
        rgb_sigma: 0.02,
        rgb_shift: 0.04,
        rotation_max: 5.0,
        flatten_frac: 0.02,
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        NoiseConfig::from_array([0.0; 6])
    }

    /// Scheduler increments: half of each predetermined level.
    pub fn jump_sizes() -> Self {
        let d = default_noise_config().to_array();
        NoiseConfig::from_array(d.map(|v| v / 2.0))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.xyz_sigma, self.normal_sigma, self.rgb_sigma, self.rgb_shift, self.rotation_max, self.flatten_frac]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        NoiseConfig {
            xyz_sigma: a[0],
            normal_sigma: a[1],
            rgb_sigma: a[2],
            rgb_shift: a[3],
            rotation_max: a[4],
            flatten_frac: a[5],
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.to_array()[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        let mut a = self.to_array();
        a[i] = v;
        *self = NoiseConfig::from_array(a);
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in NOISE_NAMES.iter().zip(self.to_array()) {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("noise level {name} must be finite and >= 0, got {v}")));
            }
        }
        if self.flatten_frac > 1.0 {
            return Err(Error::InvalidParameter("flatten_frac must be <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub gt_poses: BTreeMap<String, Pose>,
    pub depth: DepthImage,
    pub cam: CameraIntrinsics,
    pub seed: u64,
}

/// Depth range in which objects are placed (mm).
const OBJECT_DEPTH: (f64, f64) = (550.0, 750.0);
const CLUTTER_SPACING: f64 = 4.0;
const PLANE_SPACING: f64 = 5.0;
/// Depth slack for the visibility z-buffer (mm).
const VISIBILITY_TOLERANCE: f64 = 6.0;

struct Part {
    surface: Surface,
    colors: Vec<Vector3<f64>>,
}

fn tinted(rng: &mut seed::Rng, n: usize, base: Vector3<f64>, spread: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| base.map(|c| (c + rng.random_range(-spread..=spread)).clamp(0.0, 1.0)))
        .collect()
}

fn random_color(rng: &mut seed::Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9))
}

fn transformed(s: Surface, pose: &Pose) -> Surface {
    Surface {
        points: s.points.iter().map(|p| pose.apply(p)).collect(),
        normals: s.normals.iter().map(|n| pose.apply_vector(n)).collect(),
    }
}

/// Point at pixel (u, v) and depth z.
fn unproject(cam: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Vector3<f64> {
    Vector3::new((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z)
}

/// Visibility by point-splat z-buffer: a point survives if it projects into
/// the image and lies within a small tolerance of the nearest depth there.
pub fn visible_mask(points: &[Point3<f64>], cam: &CameraIntrinsics) -> Vec<bool> {
    let zbuf = DepthImage::render(points, cam, 1);
    points
        .iter()
        .map(|p| match cam.pixel(p) {
            Some((u, v)) => p.z <= zbuf.get(u, v) as f64 + VISIBILITY_TOLERANCE,
            None => false,
        })
        .collect()
}

/// Random desk scene: each object at a uniform pose inside the frustum,
/// optional ground plane and clutter primitives, optional occluders with
/// z-buffer and back-face removal.
pub fn generate_scene(objects: &[ObjectModel], clutter_level: f64, occlusion_level: f64, seed: u64) -> Result<Scene> {
    generate_scene_with(objects, clutter_level, occlusion_level, seed, CameraIntrinsics::desk())
}

pub fn generate_scene_with(
    objects: &[ObjectModel],
    clutter_level: f64,
    occlusion_level: f64,
    seed: u64,
    cam: CameraIntrinsics,
) -> Result<Scene> {
    if objects.is_empty() {
        return Err(Error::EmptyInput("object list"));
    }
    for (name, l) in [("clutter_level", clutter_level), ("occlusion_level", occlusion_level)] {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {l}")));
        }
    }
    cam.validate()?;
    let mut rng = seed::rng(seed);
    let (w, h) = (cam.width as f64, cam.height as f64);

    let mut gt_poses = BTreeMap::new();
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut parts = Vec::new();
    for model in objects {
        let radius = model.diagonal / 2.0;
        let mut t = Vector3::zeros();
        for _ in 0..100 {
            let z = rng.random_range(OBJECT_DEPTH.0..=OBJECT_DEPTH.1);
            let u = rng.random_range(0.2 * w..0.8 * w);
            let v = rng.random_range(0.22 * h..0.78 * h);
            t = unproject(&cam, u, v, z);
            if placed.iter().all(|(c, r)| (c - t).norm() > r + radius) {
                break;
            }
        }
        placed.push((t, radius));
        let pose = Pose::random_rotation(&mut rng, t);
        let cloud = model.cloud.transform(&pose);
        let surface = Surface {
            points: cloud.points().to_vec(),
            normals: cloud.normals().map(<[_]>::to_vec).unwrap_or_else(|| vec![-Vector3::z(); cloud.len()]),
        };
        let colors = cloud.colors().map(<[_]>::to_vec).unwrap_or_else(|| vec![Vector3::repeat(0.5); cloud.len()]);
        gt_poses.insert(model.name.clone(), pose);
        parts.push(Part { surface, colors });
    }

    if clutter_level > 0.0 {
        // tilted ground plane behind the objects, spanning the frustum
        let z0 = rng.random_range(830.0..880.0);
        let (a, b) = (rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08));
        let half_x = cam.cx.max(w - cam.cx) / cam.fx * (z0 + 80.0);
        let half_y = cam.cy.max(h - cam.cy) / cam.fy * (z0 + 80.0);
        let normal = Vector3::new(a, b, -1.0).normalize();
        let mut plane = Surface::new();
        let (nx, ny) = ((2.0 * half_x / PLANE_SPACING) as usize, (2.0 * half_y / PLANE_SPACING) as usize);
        for i in 0..nx {
            for j in 0..ny {
                let x = -half_x + (i as f64 + 0.5) * PLANE_SPACING;
                let y = -half_y + (j as f64 + 0.5) * PLANE_SPACING;
                plane.push(Point3::new(x, y, z0 + a * x + b * y), normal);
            }
        }
        let base = Vector3::repeat(rng.random_range(0.35..0.65));
        let colors = tinted(&mut rng, plane.points.len(), base, 0.05);
        parts.push(Part { surface: plane, colors });

        let count = (clutter_level * 6.0).round() as usize;
        for _ in 0..count {
            let size = rng.random_range(30.0..70.0);
            let mut c = Vector3::zeros();
            for _ in 0..50 {
                let z = rng.random_range(600.0..800.0);
                c = unproject(&cam, rng.random_range(0.05 * w..0.95 * w), rng.random_range(0.05 * h..0.95 * h), z);
                if placed.iter().all(|(p, r)| (p - c).norm() > r + size * 0.75) {
                    break;
                }
            }
            placed.push((c, size * 0.75));
            let local = match rng.random_range(0..3) {
                0 => cuboid(
                    Point3::origin(),
                    Vector3::new(size, rng.random_range(0.5..1.0) * size, rng.random_range(0.4..1.0) * size),
                    CLUTTER_SPACING,
                ),
                1 => ellipsoid(Point3::origin(), Vector3::repeat(size / 2.0), CLUTTER_SPACING),
                _ => cylinder(Point3::origin(), size / 2.0, rng.random_range(0.6..1.2) * size, CLUTTER_SPACING),
            };
            let pose = Pose::random_rotation(&mut rng, c);
            let surface = transformed(local, &pose);
            let color = random_color(&mut rng);
            let colors = tinted(&mut rng, surface.points.len(), color, 0.03);
            parts.push(Part { surface, colors });
        }
    }

    let occluders = (occlusion_level * 2.0).round() as usize;
    for k in 0..occluders {
        let (target, radius) = placed[k % objects.len()];
        let size = Vector3::new(rng.random_range(30.0..60.0), rng.random_range(30.0..60.0), rng.random_range(10.0..20.0));
        let lateral = rng.random_range(0.3..0.6) * 2.0 * radius;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let c = target
            + Vector3::new(lateral * angle.cos(), lateral * angle.sin(), -radius - rng.random_range(40.0..80.0));
        let surface = cuboid(Point3::from(c), size, CLUTTER_SPACING);
        let color = random_color(&mut rng);
        let colors = tinted(&mut rng, surface.points.len(), color, 0.03);
        parts.push(Part { surface, colors });
    }

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    for part in parts {
        points.extend(part.surface.points);
        normals.extend(part.surface.normals);
        colors.extend(part.colors);
    }
    if occlusion_level > 0.0 {
        let facing: Vec<usize> = (0..points.len()).filter(|&i| normals[i].dot(&points[i].coords) < 0.0).collect();
        let pts: Vec<Point3<f64>> = facing.iter().map(|&i| points[i]).collect();
        let visible = visible_mask(&pts, &cam);
        let keep: Vec<usize> = facing.iter().zip(visible).filter(|(_, v)| *v).map(|(&i, _)| i).collect();
        points = keep.iter().map(|&i| points[i]).collect();
        normals = keep.iter().map(|&i| normals[i]).collect();
        colors = keep.iter().map(|&i| colors[i]).collect();
    }
    let cloud = PointCloud::new(points, Some(normals), Some(colors))?;
    let depth = DepthImage::render(cloud.points(), &cam, 1);
    Ok(Scene { cloud, gt_poses, depth, cam, seed })
}

impl Scene {
    pub fn save_dir(&self, dir: &std::path::Path) -> Result<()> {
        io::save_scene(self, dir)
    }

    pub fn load_dir(dir: &std::path::Path) -> Result<Scene> {
        io::load_scene(dir)
    }

    /// Depth image re-rendered from the current cloud.
    pub(crate) fn rerender(&mut self) {
        self.depth = DepthImage::render(self.cloud.points(), &self.cam, 1);
    }
}
