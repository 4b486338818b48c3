//! Per-model and per-scene caches shared by all pipeline stages.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Point3, Vector3};

use super::params::FixedParams;
use super::DIAGONAL_REF;
use crate::error::Result;
use crate::geometry::{CameraIntrinsics, DepthImage, KdTree, ObjectModel, PointCloud, Pose};
use crate::scene::Scene;

/// Scene points closer than this fraction of the diagonal to the model
/// surface under the ground-truth pose count as object points.
pub const MEMBER_TOLERANCE: f64 = 0.08;
/// Depth jump (mm, for a 100 mm object) that marks a discontinuity.
pub const EDGE_JUMP: f64 = 10.0;
/// Contour tolerance in pixels.
pub const CONTOUR_PX: i64 = 2;
const NEUTRAL_COLOR: Vector3<f64> = Vector3::new(0.5, 0.5, 0.5);

#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub model: ObjectModel,
    /// diagonal / 100 mm
    pub scale: f64,
    pub icp_points: Vec<Point3<f64>>,
    pub icp_normals: Vec<Vector3<f64>>,
    pub surface_normals: Vec<Vector3<f64>>,
    pub surface_colors: Vec<Vector3<f64>>,
    pub surface_tree: KdTree,
    pub keypoint_tree: KdTree,
    pub color_mean: Vector3<f64>,
    pub color_spread: f64,
    pub bbox: (Point3<f64>, Point3<f64>),
}

impl PreparedModel {
    pub fn new(model: &ObjectModel) -> Result<Self> {
        model.validate()?;
        let scale = model.diagonal / DIAGONAL_REF;
        let cloud = match model.cloud.normals() {
            Some(_) => model.cloud.clone(),
            None => model.cloud.estimate_normals(FixedParams::NORMAL_RADIUS * scale)?,
        };
        let icp = cloud.voxel_downsample(FixedParams::ICP_MODEL_VOXEL * scale)?;
        let colors: Vec<Vector3<f64>> =
            cloud.colors().map(<[_]>::to_vec).unwrap_or_else(|| vec![NEUTRAL_COLOR; cloud.len()]);
        let n = colors.len() as f64;
        let color_mean = colors.iter().fold(Vector3::zeros(), |a, c| a + c) / n;
        let color_spread = (colors.iter().map(|c| (c - color_mean).norm_squared()).sum::<f64>() / n).sqrt();
        Ok(PreparedModel {
            model: model.clone(),
            scale,
            icp_points: icp.points().to_vec(),
            icp_normals: icp.normals().expect("normals present").to_vec(),
            surface_normals: cloud.normals().expect("normals present").to_vec(),
            surface_colors: colors,
            surface_tree: KdTree::new(cloud.points()),
            keypoint_tree: KdTree::new(&model.keypoints),
            color_mean,
            color_spread,
            bbox: cloud.bounds().expect("validated model is non-empty"),
        })
    }

    pub fn name(&self) -> &str {
        &self.model.name
    }

    pub fn diagonal(&self) -> f64 {
        self.model.diagonal
    }

    /// Color similarity to the model's mean color, in (0, 1].
    pub fn color_similarity(&self, c: &Vector3<f64>) -> f64 {
        let tau2 = 0.1f64.powi(2) + self.color_spread.powi(2);
        (-(c - self.color_mean).norm_squared() / (2.0 * tau2)).exp()
    }
}

/// Per-object view of a prepared scene.
#[derive(Debug, Clone)]
pub struct ObjectView {
    pub gt: Option<Pose>,
    /// For each scene point: nearest model-surface index if it belongs to the object.
    pub membership: Vec<Option<u32>>,
    /// Pixels within the contour tolerance of a depth discontinuity.
    pub near_edge: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub cloud: PointCloud,
    pub normals: Vec<Vector3<f64>>,
    pub colors: Vec<Vector3<f64>>,
    pub tree: KdTree,
    pub depth: DepthImage,
    pub cam: CameraIntrinsics,
    pub objects: BTreeMap<String, ObjectView>,
    /// Wall time spent preparing (s).
    pub prep_seconds: f64,
}

impl PreparedScene {
    pub fn new(scene: &Scene, models: &[PreparedModel]) -> Result<Self> {
        Self::with_voxel(scene, models, FixedParams::SCENE_VOXEL)
    }

    pub fn with_voxel(scene: &Scene, models: &[PreparedModel], voxel: f64) -> Result<Self> {
        let start = Instant::now();
        let down = scene.cloud.voxel_downsample(voxel)?;
        let cloud = match down.normals() {
            Some(_) => down,
            None => down.estimate_normals(FixedParams::NORMAL_RADIUS)?,
        };
        let normals = cloud.normals().expect("normals present").to_vec();
        let colors = cloud.colors().map(<[_]>::to_vec).unwrap_or_else(|| vec![NEUTRAL_COLOR; cloud.len()]);
        let tree = KdTree::new(cloud.points());
        let mut objects = BTreeMap::new();
        // ground-truth membership feeds the vote surrogate only and is not
        // counted as preparation time
        let mut oracle = 0.0;
        for pm in models {
            let gt = scene.gt_poses.get(pm.name()).copied();
            let t = Instant::now();
            let membership = match &gt {
                Some(gt) => membership(&cloud, &tree, pm, gt),
                None => vec![None; cloud.len()],
            };
            oracle += t.elapsed().as_secs_f64();
            let near_edge = edge_mask(&scene.depth, EDGE_JUMP * pm.scale);
            objects.insert(pm.name().to_string(), ObjectView { gt, membership, near_edge });
        }
        Ok(PreparedScene {
            cloud,
            normals,
            colors,
            tree,
            depth: scene.depth.clone(),
            cam: scene.cam,
            objects,
            prep_seconds: start.elapsed().as_secs_f64() - oracle,
        })
    }

    pub fn view(&self, name: &str) -> Option<&ObjectView> {
        self.objects.get(name)
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

fn membership(cloud: &PointCloud, tree: &KdTree, pm: &PreparedModel, gt: &Pose) -> Vec<Option<u32>> {
    let mut out = vec![None; cloud.len()];
    let tol = MEMBER_TOLERANCE * pm.diagonal();
    let inv = gt.inverse();
    let centre = gt.apply(&Point3::from((pm.bbox.0.coords + pm.bbox.1.coords) / 2.0));
    tree.for_each_within(&centre, pm.diagonal() / 2.0 + tol, |i, _| {
        let q = inv.apply(&cloud.points()[i]);
        if let Some((j, _)) = pm.surface_tree.nearest_within(&q, tol) {
            out[i] = Some(j as u32);
        }
    });
    out
}

/// Depth discontinuities (jump above `jump`, or valid/empty boundary),
/// dilated by the contour tolerance.
pub fn edge_mask(depth: &DepthImage, jump: f64) -> Vec<bool> {
    let (w, h) = (depth.width as i64, depth.height as i64);
    let jump = jump as f32;
    let at = |x: i64, y: i64| depth.data[(y * w + x) as usize];
    let mut raw = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let d = at(x, y);
            let is_edge = [(1, 0), (0, 1), (-1, 0), (0, -1)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    return false;
                }
                let e = at(nx, ny);
                ((d > 0.0) != (e > 0.0)) || (d > 0.0 && e > 0.0 && (d - e).abs() > jump)
            });
            if is_edge {
                raw.push((x, y));
            }
        }
    }
    let mut out = vec![false; depth.data.len()];
    let r = CONTOUR_PX;
    for (x, y) in raw {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out[(ny * w + nx) as usize] = true;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ape, can, generate_scene};

    #[test]
    fn membership_marks_object_points_only() {
        let models = [PreparedModel::new(&ape()).unwrap(), PreparedModel::new(&can()).unwrap()];
        let scene = generate_scene(&[ape()], 0.5, 0.0, 4).unwrap();
        let ps = PreparedScene::new(&scene, &models).unwrap();
        let ape_view = ps.view("ape").unwrap();
        let members = ape_view.membership.iter().filter(|m| m.is_some()).count();
        // the bare object contributes every model point
        assert!(members >= (0.97 * ape().cloud.len() as f64) as usize, "{members}");
        assert!(members < ps.len());
        let can_view = ps.view("can").unwrap();
        assert!(can_view.gt.is_none());
        assert!(can_view.membership.iter().all(Option::is_none));
        assert!(ps.prep_seconds >= 0.0);
    }

    #[test]
    fn edges_of_a_square() {
        let mut d = DepthImage::empty(20, 20);
        for y in 5..15 {
            for x in 5..15 {
                d.data[y * 20 + x] = 500.0;
            }
        }
        let m = edge_mask(&d, 10.0);
        assert!(m[5 * 20 + 5]);
        assert!(m[3 * 20 + 10]);
        assert!(!m[10 * 20 + 10]);
        assert!(!m[0]);
    }
}
