use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::pose::Pose;
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-6;

/// Positions (mm) with optional unit normals and RGB colors in [0,1].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "CloudJson", into = "CloudJson")]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    colors: Option<Vec<Vector3<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct CloudJson {
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normals: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    colors: Option<Vec<[f64; 3]>>,
}

impl TryFrom<CloudJson> for PointCloud {
    type Error = Error;

    fn try_from(j: CloudJson) -> Result<Self> {
        let conv = |v: Vec<[f64; 3]>| v.into_iter().map(Vector3::from).collect::<Vec<_>>();
        PointCloud::new(
            j.points.into_iter().map(Point3::from).collect(),
            j.normals.map(conv),
            j.colors.map(conv),
        )
    }
}

impl From<PointCloud> for CloudJson {
    fn from(c: PointCloud) -> Self {
        let conv = |v: Vec<Vector3<f64>>| v.into_iter().map(Into::into).collect::<Vec<[f64; 3]>>();
        CloudJson {
            points: c.points.into_iter().map(|p| p.coords.into()).collect(),
            normals: c.normals.map(conv),
            colors: c.colors.map(conv),
        }
    }
}

impl PointCloud {
    pub fn new(
        points: Vec<Point3<f64>>,
        normals: Option<Vec<Vector3<f64>>>,
        colors: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        let cloud = PointCloud { points, normals, colors };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn from_points(points: Vec<Point3<f64>>) -> Result<Self> {
        PointCloud::new(points, None, None)
    }

    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3<f64>>,
        normals: Option<Vec<Vector3<f64>>>,
        colors: Option<Vec<Vector3<f64>>>,
    ) -> Self {
        debug_assert!(normals.as_ref().is_none_or(|n| n.len() == points.len()));
        debug_assert!(colors.as_ref().is_none_or(|c| c.len() == points.len()));
        PointCloud { points, normals, colors }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidCloud("non-finite point coordinate".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::InvalidCloud(format!("{} normals for {n} points", normals.len())));
            }
            if normals.iter().any(|v| !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > UNIT_TOL) {
                return Err(Error::InvalidCloud("normal is not unit length".into()));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != n {
                return Err(Error::InvalidCloud(format!("{} colors for {n} points", colors.len())));
            }
            if colors.iter().any(|c| !c.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x))) {
                return Err(Error::InvalidCloud("color outside [0,1]".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn colors(&self) -> Option<&[Vector3<f64>]> {
        self.colors.as_deref()
    }

    pub(crate) fn points_mut(&mut self) -> &mut Vec<Point3<f64>> {
        &mut self.points
    }

    pub(crate) fn normals_mut(&mut self) -> Option<&mut Vec<Vector3<f64>>> {
        self.normals.as_mut()
    }

    pub(crate) fn colors_mut(&mut self) -> Option<&mut Vec<Vector3<f64>>> {
        self.colors.as_mut()
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self> {
        self.normals = Some(normals);
        self.validate()?;
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<Vector3<f64>>) -> Result<Self> {
        self.colors = Some(colors);
        self.validate()?;
        Ok(self)
    }

    /// Points `p ↦ R·p + t`, normals `n ↦ R·n`, colors unchanged.
    pub fn transform(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            normals: self.normals.as_ref().map(|ns| ns.iter().map(|n| pose.apply_vector(n)).collect()),
            colors: self.colors.clone(),
        }
    }

    /// Uniform scaling of positions about the origin.
    pub fn scaled(&self, factor: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p * factor).collect(),
            normals: self.normals.clone(),
            colors: self.colors.clone(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|ns| indices.iter().map(|&i| ns[i]).collect()),
            colors: self.colors.as_ref().map(|cs| indices.iter().map(|&i| cs[i]).collect()),
        }
    }

    /// Concatenate; an optional channel survives only if both sides carry it.
    pub fn extend(&mut self, other: &PointCloud) {
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if self.points.is_empty() => Some(b.clone()),
            _ => None,
        };
        self.colors = match (self.colors.take(), &other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if self.points.is_empty() => Some(b.clone()),
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        (!self.points.is_empty()).then(|| {
            Point3::from(self.points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / self.points.len() as f64)
        })
    }

    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    /// Euclidean norm of the axis-aligned bounding-box extent.
    pub fn bbox_diagonal(&self) -> Result<f64> {
        let (lo, hi) = self.bounds().ok_or(Error::EmptyCloud)?;
        Ok((hi - lo).norm())
    }

    /// One point per occupied voxel (key = floor(coord / voxel)), placed at
    /// the centroid of its members; normals are re-normalised after
    /// averaging and colors averaged. Output order follows first occupancy.
    pub fn voxel_downsample(&self, voxel: f64) -> Result<PointCloud> {
        self.voxel_downsample_mapped(voxel).map(|(c, _)| c)
    }

    /// As [`voxel_downsample`](Self::voxel_downsample), also returning for
    /// every input point the index of the output point it merged into.
    pub fn voxel_downsample_mapped(&self, voxel: f64) -> Result<(PointCloud, Vec<usize>)> {
        if !(voxel > 0.0) {
            return Err(Error::InvalidParameter(format!("voxel size must be positive, got {voxel}")));
        }
        let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
        let mut acc: Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>, usize)> = Vec::new();
        let mut mapping = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            let key = (
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            );
            let slot = *slots.entry(key).or_insert_with(|| {
                acc.push((Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), 0));
                acc.len() - 1
            });
            mapping.push(slot);
            let a = &mut acc[slot];
            a.0 += p.coords;
            if let Some(ns) = &self.normals {
                a.1 += ns[i];
            }
            if let Some(cs) = &self.colors {
                a.2 += cs[i];
            }
            a.3 += 1;
        }
        // single-member voxels keep their point bit-exactly
        let points = acc
            .iter()
            .map(|a| if a.3 == 1 { Point3::from(a.0) } else { Point3::from(a.0 / a.3 as f64) })
            .collect();
        let normals = self.normals.as_ref().map(|_| {
            acc.iter()
                .map(|a| {
                    if a.3 == 1 {
                        return a.1;
                    }
                    let n = a.1.norm();
                    if n > 1e-12 { a.1 / n } else { Vector3::new(0.0, 0.0, -1.0) }
                })
                .collect()
        });
        let colors = self.colors.as_ref().map(|_| {
            acc.iter()
                .map(|a| if a.3 == 1 { a.2 } else { (a.2 / a.3 as f64).map(|c| c.clamp(0.0, 1.0)) })
                .collect()
        });
        Ok((PointCloud { points, normals, colors }, mapping))
    }

    /// Normals from the smallest-eigenvalue eigenvector of the neighbourhood
    /// covariance (neighbours within `radius`, including the point itself),
    /// oriented toward a sensor at the origin. Points with fewer than three
    /// neighbours receive the viewpoint direction (0, 0, -1).
    pub fn estimate_normals(&self, radius: f64) -> Result<PointCloud> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("normal radius must be positive, got {radius}")));
        }
        let tree = KdTree::new(&self.points);
        let normals = self.points.iter().map(|p| normal_at(&self.points, &tree, p, radius)).collect();
        Ok(PointCloud {
            points: self.points.clone(),
            normals: Some(normals),
            colors: self.colors.clone(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<PointCloud> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

const VIEW_DIR: Vector3<f64> = Vector3::new(0.0, 0.0, -1.0);

fn normal_at(points: &[Point3<f64>], tree: &KdTree, p: &Point3<f64>, radius: f64) -> Vector3<f64> {
    let mut n = 0usize;
    let mut sum = Vector3::zeros();
    let mut outer = Matrix3::zeros();
    tree.for_each_within(p, radius, |i, _| {
        // accumulate relative to p for numerical stability
        let d = points[i] - p;
        sum += d;
        outer += d * d.transpose();
        n += 1;
    });
    if n < 3 {
        return VIEW_DIR;
    }
    let mean = sum / n as f64;
    let cov = outer / n as f64 - mean * mean.transpose();
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    let len = normal.norm();
    if !(len > 1e-12) {
        return VIEW_DIR;
    }
    normal /= len;
    // toward the sensor: n · (0 - p) > 0
    if normal.dot(&p.coords) > 0.0 {
        normal = -normal;
    }
    normal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn five_points() -> PointCloud {
        PointCloud::from_points(vec![
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(-4.0, 0.5, 9.0),
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(7.0, -1.0, 2.0),
            Point3::new(3.3, 3.3, -3.3),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_bad_channels() {
        let pts = vec![Point3::origin(); 2];
        assert!(PointCloud::new(pts.clone(), Some(vec![Vector3::z()]), None).is_err());
        assert!(PointCloud::new(pts.clone(), Some(vec![Vector3::z(), Vector3::new(0.0, 0.0, 2.0)]), None).is_err());
        assert!(PointCloud::new(pts.clone(), None, Some(vec![Vector3::zeros(), Vector3::new(0.0, 1.5, 0.0)])).is_err());
        assert!(PointCloud::from_points(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn json_loader_rejects_non_finite() {
        let bad = r#"{"points": [[1e999, 0, 0]]}"#;
        assert!(serde_json::from_str::<PointCloud>(bad).is_err());
        let ok = r#"{"points": [[1, 2, 3]], "normals": [[0, 0, 1]], "colors": [[0.5, 0.5, 0.5]]}"#;
        let c: PointCloud = serde_json::from_str(ok).unwrap();
        assert_eq!(c.len(), 1);
        let round: PointCloud = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn identity_transform_is_noop() {
        let c = five_points();
        assert_eq!(c.transform(&Pose::identity()), c);
    }

    #[test]
    fn transform_matches_manual_multiply() {
        let c = five_points();
        let pose = Pose::random_rotation(&mut seed::rng(5), Vector3::new(4.0, -2.0, 100.0));
        let out = c.transform(&pose);
        let r = pose.rotation();
        let t = pose.translation();
        for (p, q) in c.points().iter().zip(out.points()) {
            for row in 0..3 {
                let manual = r[(row, 0)] * p.x + r[(row, 1)] * p.y + r[(row, 2)] * p.z + t[row];
                assert!((manual - q[row]).abs() < 1e-12);
            }
        }
        let rz = Pose::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let unit = PointCloud::from_points(vec![Point3::new(1.0, 0.0, 0.0)]).unwrap().transform(&rz);
        assert!((unit.points()[0] - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn voxel_merges_close_points_only() {
        let close = PointCloud::from_points(vec![Point3::new(0.1, 0.1, 0.1), Point3::new(0.3, 0.1, 0.1)]).unwrap();
        let d = close.voxel_downsample(1.0).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.points()[0] - Point3::new(0.2, 0.1, 0.1)).norm() < 1e-12);
        let far = PointCloud::from_points(vec![Point3::new(0.1, 0.1, 0.1), Point3::new(10.1, 0.1, 0.1)]).unwrap();
        assert_eq!(far.voxel_downsample(1.0).unwrap().len(), 2);
        assert!(PointCloud::default().voxel_downsample(1.0).unwrap().is_empty());
        assert!(far.voxel_downsample(0.0).is_err());
    }

    #[test]
    fn voxel_count_matches_bucketing_oracle() {
        let mut rng = seed::rng(9);
        let pts: Vec<_> = (0..1000)
            .map(|_| Point3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let cloud = PointCloud::from_points(pts.clone()).unwrap();
        let down = cloud.voxel_downsample(5.0).unwrap();
        // independent oracle: distinct bucket keys via a sorted list
        let mut keys: Vec<(i64, i64, i64)> = pts
            .iter()
            .map(|p| ((p.x / 5.0).floor() as i64, (p.y / 5.0).floor() as i64, (p.z / 5.0).floor() as i64))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(down.len(), keys.len());
        assert!(down.len() <= 8);
    }

    #[test]
    fn normals_on_plane_and_sphere() {
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                pts.push(Point3::new(i as f64 * 2.0, j as f64 * 2.0, 500.0));
            }
        }
        let plane = PointCloud::from_points(pts).unwrap().estimate_normals(10.0).unwrap();
        for n in plane.normals().unwrap() {
            assert!(n.x.abs() < 1e-3 && n.y.abs() < 1e-3);
            assert!((n.z.abs() - 1.0).abs() < 1e-6);
        }

        // Fibonacci sphere, radius 50, centred in front of the camera
        let centre = Vector3::new(0.0, 0.0, 400.0);
        let n_pts = 4000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let sphere: Vec<_> = (0..n_pts)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n_pts as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Point3::from(Vector3::new(r * th.cos(), y, r * th.sin()) * 50.0 + centre)
            })
            .collect();
        let est = PointCloud::from_points(sphere).unwrap().estimate_normals(10.0).unwrap();
        let max_angle = 5f64.to_radians().cos();
        for (p, n) in est.points().iter().zip(est.normals().unwrap()) {
            let radial = (p.coords - centre).normalize();
            // orientation toward the sensor may flip back-facing normals, so compare the axis
            assert!(n.dot(&radial).abs() > max_angle);
        }

        let lone = PointCloud::from_points(vec![Point3::new(5.0, 5.0, 300.0)]).unwrap().estimate_normals(10.0).unwrap();
        assert_eq!(lone.normals().unwrap()[0], Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn bbox_examples() {
        let mut corners = Vec::new();
        for i in 0..8 {
            corners.push(Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
        }
        let d = PointCloud::from_points(corners).unwrap().bbox_diagonal().unwrap();
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
        let single = PointCloud::from_points(vec![Point3::new(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(single.bbox_diagonal().unwrap(), 0.0);
        let flat = PointCloud::from_points(vec![Point3::origin(), Point3::new(3.0, 4.0, 0.0)]).unwrap();
        assert_eq!(flat.bbox_diagonal().unwrap(), 5.0);
        assert!(matches!(PointCloud::default().bbox_diagonal(), Err(Error::EmptyCloud)));
    }

    proptest! {
        #[test]
        fn transform_round_trip(s in 0u64..500) {
            let mut rng = seed::rng(s);
            let pts: Vec<_> = (0..20).map(|_| Point3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0))).collect();
            let c = PointCloud::from_points(pts).unwrap();
            let pose = { let x = rng.random_range(-500.0..500.0); Pose::random_rotation(&mut rng, Vector3::new(x, 0.0, 300.0)) };
            let back = c.transform(&pose).transform(&pose.inverse());
            for (a, b) in c.points().iter().zip(back.points()) {
                prop_assert!((a - b).amax() < 1e-6);
            }
        }

        #[test]
        fn bbox_translation_invariant(s in 0u64..500, tx in -1e3f64..1e3, ty in -1e3f64..1e3) {
            let mut rng = seed::rng(s);
            let pts: Vec<_> = (0..10).map(|_| Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect();
            let c = PointCloud::from_points(pts).unwrap();
            let moved = c.transform(&Pose::from_translation(Vector3::new(tx, ty, 7.0)));
            prop_assert!((c.bbox_diagonal().unwrap() - moved.bbox_diagonal().unwrap()).abs() < 1e-9);
        }

        #[test]
        fn voxel_idempotent_when_sparse(s in 0u64..500) {
            // points on a 10 mm lattice never share a 1 mm voxel
            let mut rng = seed::rng(s);
            let pts: Vec<_> = (0..50).map(|_| Point3::new(
                rng.random_range(0..20) as f64 * 10.0 + 0.5,
                rng.random_range(0..20) as f64 * 10.0 + 0.5,
                rng.random_range(0..20) as f64 * 10.0 + 0.5)).collect();
            let once = PointCloud::from_points(pts).unwrap().voxel_downsample(1.0).unwrap();
            let twice = once.voxel_downsample(1.0).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
