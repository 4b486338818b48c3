//! Pose-error scores (ADD, ADD-I, MSSD, MSPD, VSD) and recall aggregation.
//!
//! The BOP-style aggregate uses fixed threshold ladders:
//! VSD misalignment tolerance τ and correctness threshold θ both step
//! 5 %..50 % (τ relative to the object diagonal), MSSD steps 5 %..50 % of the
//! diagonal, MSPD steps 5..50 px scaled by `image_width / 640`.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthImage, KdTree, ObjectModel, Pose};

pub use crate::geometry::CameraIntrinsics;

/// Fraction of the diagonal below which an ADD(-I) error counts as correct.
pub const ADD_THRESHOLD: f64 = 0.1;

/// Ladder fractions 0.05, 0.10, ..., 0.50.
pub fn ladder() -> [f64; 10] {
    std::array::from_fn(|i| 0.05 * (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub add: f64,
    pub add_i: f64,
    /// VSD averaged over the τ ladder.
    pub vsd: f64,
    pub mssd: f64,
    pub mspd: f64,
    pub correct_add: bool,
    pub bop_recall_contribution: f64,
}

impl MetricScore {
    /// Score of a missed detection.
    pub fn missed() -> Self {
        MetricScore {
            add: f64::INFINITY,
            add_i: f64::INFINITY,
            vsd: 1.0,
            mssd: f64::INFINITY,
            mspd: f64::INFINITY,
            correct_add: false,
            bop_recall_contribution: 0.0,
        }
    }

    pub fn csv_header() -> &'static str {
        "object_id,scene_id,add,add_i,vsd,mssd,mspd,correct_add"
    }

    pub fn csv_row(&self, object_id: &str, scene_id: &str) -> String {
        format!(
            "{object_id},{scene_id},{},{},{},{},{},{}",
            self.add, self.add_i, self.vsd, self.mssd, self.mspd, self.correct_add
        )
    }
}

/// Mean distance between model points under `gt` and `est`.
pub fn add_score(model: &ObjectModel, gt: &Pose, est: &Pose) -> f64 {
    let pts = model.cloud.points();
    if pts.is_empty() {
        return 0.0;
    }
    pts.iter().map(|p| (gt.apply(p) - est.apply(p)).norm()).sum::<f64>() / pts.len() as f64
}

/// Mean distance from each gt-placed point to the nearest est-placed point.
pub fn add_i_score(model: &ObjectModel, gt: &Pose, est: &Pose) -> f64 {
    let pts = model.cloud.points();
    if pts.is_empty() {
        return 0.0;
    }
    let placed: Vec<Point3<f64>> = pts.iter().map(|p| est.apply(p)).collect();
    let tree = KdTree::new(&placed);
    pts.iter()
        .map(|p| tree.nearest(&gt.apply(p)).map_or(0.0, |(_, d2)| d2.sqrt()))
        .sum::<f64>()
        / pts.len() as f64
}

/// ADD (or ADD-I for symmetric objects) below 10 % of the diagonal.
pub fn add_correct(model: &ObjectModel, gt: &Pose, est: &Pose, symmetric: bool) -> bool {
    let err = if symmetric { add_i_score(model, gt, est) } else { add_score(model, gt, est) };
    err < ADD_THRESHOLD * model.diagonal
}

/// Minimum over symmetries of the maximum point displacement.
pub fn mssd_score(model: &ObjectModel, gt: &Pose, est: &Pose) -> f64 {
    model
        .symmetry_transforms()
        .iter()
        .map(|s| {
            let est_s = est.compose(s);
            model
                .cloud
                .points()
                .iter()
                .map(|p| (gt.apply(p) - est_s.apply(p)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Minimum over symmetries of the maximum 2-D reprojection distance (px).
pub fn mspd_score(model: &ObjectModel, gt: &Pose, est: &Pose, cam: &CameraIntrinsics) -> Result<f64> {
    let mut best = f64::INFINITY;
    for s in model.symmetry_transforms() {
        let est_s = est.compose(&s);
        let mut worst: f64 = 0.0;
        for p in model.cloud.points() {
            let (ua, va) = cam.project_checked(&gt.apply(p))?;
            let (ub, vb) = cam.project_checked(&est_s.apply(p))?;
            worst = worst.max(((ua - ub).powi(2) + (va - vb).powi(2)).sqrt());
        }
        best = best.min(worst);
    }
    Ok(best)
}

struct VisibilityMasks {
    gt: DepthImage,
    est: DepthImage,
    gt_visible: Vec<bool>,
    est_visible: Vec<bool>,
}

fn visibility(model: &ObjectModel, gt: &Pose, est: &Pose, cam: &CameraIntrinsics, scene: &DepthImage) -> VisibilityMasks {
    let render = |pose: &Pose| {
        let placed: Vec<Point3<f64>> = model.cloud.points().iter().map(|p| pose.apply(p)).collect();
        DepthImage::render(&placed, cam, 1)
    };
    let gt_r = render(gt);
    let est_r = render(est);
    let delta = (ADD_THRESHOLD * model.diagonal) as f32;
    let visible = |r: &DepthImage| -> Vec<bool> {
        r.data
            .iter()
            .zip(&scene.data)
            .map(|(&z, &d)| z > 0.0 && (d == 0.0 || z <= d + delta))
            .collect()
    };
    VisibilityMasks {
        gt_visible: visible(&gt_r),
        est_visible: visible(&est_r),
        gt: gt_r,
        est: est_r,
    }
}

fn vsd_from_masks(m: &VisibilityMasks, tau: f64) -> f64 {
    let tau = tau as f32;
    let mut union = 0usize;
    let mut bad = 0usize;
    for i in 0..m.gt.data.len() {
        let (a, b) = (m.gt_visible[i], m.est_visible[i]);
        if !(a || b) {
            continue;
        }
        union += 1;
        if !(a && b) || (m.gt.data[i] - m.est.data[i]).abs() > tau {
            bad += 1;
        }
    }
    if union == 0 { 1.0 } else { bad as f64 / union as f64 }
}

/// Visible-surface discrepancy with point-splat rendering.
///
/// A rendered pixel is visible when the scene has no measurement there or
/// the rendering is no deeper than the scene plus 10 % of the diagonal.
/// Pixels visible in exactly one rendering, or whose two depths differ by
/// more than `tau`, count as errors.
pub fn vsd_score(
    model: &ObjectModel,
    gt: &Pose,
    est: &Pose,
    cam: &CameraIntrinsics,
    scene_depth: &DepthImage,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("vsd tau must be positive, got {tau}")));
    }
    if scene_depth.width != cam.width || scene_depth.height != cam.height {
        return Err(Error::InvalidParameter("depth image does not match camera".into()));
    }
    Ok(vsd_from_masks(&visibility(model, gt, est, cam, scene_depth), tau))
}

/// Full score set for one estimate; `None` means no detection.
pub fn evaluate(
    model: &ObjectModel,
    gt: &Pose,
    est: Option<&Pose>,
    cam: &CameraIntrinsics,
    scene_depth: &DepthImage,
) -> MetricScore {
    score(model, gt, est, cam, scene_depth, true)
}

/// Like [`evaluate`] but skips ADD-I, whose nearest-neighbour search is by
/// far the most expensive score for poses far from the truth. `add_i` is NaN
/// and `correct_add` is false for symmetric models.
pub fn evaluate_bop(
    model: &ObjectModel,
    gt: &Pose,
    est: Option<&Pose>,
    cam: &CameraIntrinsics,
    scene_depth: &DepthImage,
) -> MetricScore {
    score(model, gt, est, cam, scene_depth, false)
}

fn score(
    model: &ObjectModel,
    gt: &Pose,
    est: Option<&Pose>,
    cam: &CameraIntrinsics,
    scene_depth: &DepthImage,
    with_add_i: bool,
) -> MetricScore {
    let Some(est) = est else {
        return MetricScore::missed();
    };
    let diag = model.diagonal;
    let add = add_score(model, gt, est);
    let add_i = if with_add_i { add_i_score(model, gt, est) } else { f64::NAN };
    let mssd = mssd_score(model, gt, est);
    let mspd = mspd_score(model, gt, est, cam).unwrap_or(f64::INFINITY);
    let correct_add = if model.is_symmetric() { add_i } else { add } < ADD_THRESHOLD * diag;

    let fractions = ladder();
    let vsd_recall;
    let vsd_mean;
    if scene_depth.width == cam.width && scene_depth.height == cam.height {
        let masks = visibility(model, gt, est, cam, scene_depth);
        let per_tau: Vec<f64> = fractions.iter().map(|f| vsd_from_masks(&masks, f * diag)).collect();
        vsd_mean = per_tau.iter().sum::<f64>() / per_tau.len() as f64;
        let hits: usize = per_tau
            .iter()
            .map(|e| fractions.iter().filter(|&&theta| *e < theta).count())
            .sum();
        vsd_recall = hits as f64 / (fractions.len() * fractions.len()) as f64;
    } else {
        vsd_mean = 1.0;
        vsd_recall = 0.0;
    }
    let mssd_recall = fractions.iter().filter(|&&f| mssd < f * diag).count() as f64 / fractions.len() as f64;
    let px_scale = cam.width as f64 / 640.0;
    let mspd_recall =
        fractions.iter().filter(|&&f| mspd < f * 100.0 * px_scale).count() as f64 / fractions.len() as f64;

    MetricScore {
        add,
        add_i,
        vsd: vsd_mean,
        mssd,
        mspd,
        correct_add,
        bop_recall_contribution: (vsd_recall + mssd_recall + mspd_recall) / 3.0,
    }
}

/// Mean over VSD, MSSD and MSPD of the per-threshold recall.
pub fn bop_average_recall(scores: &[MetricScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("evaluation list"));
    }
    Ok(scores.iter().map(|s| s.bop_recall_contribution).sum::<f64>() / scores.len() as f64)
}

/// Fraction of estimates accepted by the ADD(-I) criterion.
pub fn add_recall(scores: &[MetricScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("evaluation list"));
    }
    Ok(scores.iter().filter(|s| s.correct_add).count() as f64 / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PointCloud, Symmetry};
    use crate::seed;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn blob(n: usize, s: u64) -> ObjectModel {
        let mut rng = seed::rng(s);
        let pts = (0..n)
            .map(|_| Point3::new(rng.random_range(-40.0..40.0), rng.random_range(-30.0..30.0), rng.random_range(-20.0..20.0)))
            .collect();
        ObjectModel::new("blob", PointCloud::from_points(pts).unwrap(), Symmetry::None).unwrap()
    }

    fn ring() -> ObjectModel {
        // 72 points on a circle of radius 50 in the xy-plane; 5° symmetry steps
        let pts = (0..72)
            .map(|i| {
                let a = i as f64 * 5f64.to_radians();
                Point3::new(50.0 * a.cos(), 50.0 * a.sin(), 0.0)
            })
            .collect();
        let sym = (1..72)
            .map(|i| Pose::from_axis_angle(Vector3::z(), i as f64 * 5f64.to_radians(), Vector3::zeros()))
            .collect();
        ObjectModel::new("ring", PointCloud::from_points(pts).unwrap(), Symmetry::Discrete(sym)).unwrap()
    }

    fn gt() -> Pose {
        Pose::from_axis_angle(Vector3::new(1.0, 2.0, 0.5), 0.7, Vector3::new(10.0, -20.0, 600.0))
    }

    #[test]
    fn add_examples() {
        let m = blob(200, 1);
        assert_eq!(add_score(&m, &gt(), &gt()), 0.0);
        let shifted = Pose::from_translation(Vector3::new(0.0, 0.0, 5.0)).compose(&gt());
        assert!((add_score(&m, &gt(), &shifted) - 5.0).abs() < 1e-9);

        // 3-point model, 90° turn about z: hand-computed per-point distances
        let pts = vec![Point3::new(10.0, 0.0, 0.0), Point3::new(0.0, 20.0, 0.0), Point3::new(0.0, 0.0, 30.0)];
        let m3 = ObjectModel::new("tri", PointCloud::from_points(pts).unwrap(), Symmetry::None).unwrap();
        let rz = Pose::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        // (10,0,0)->(0,10,0): 10√2; (0,20,0)->(-20,0,0): 20√2; z-axis point fixed: 0
        let expected = (10.0 * 2f64.sqrt() + 20.0 * 2f64.sqrt() + 0.0) / 3.0;
        assert!((add_score(&m3, &Pose::identity(), &rz) - expected).abs() < 1e-9);
    }

    #[test]
    fn add_i_examples() {
        let m = blob(50, 2);
        assert_eq!(add_i_score(&m, &gt(), &gt()), 0.0);
        let r = ring();
        let turned = gt().compose(&Pose::from_axis_angle(Vector3::z(), 35f64.to_radians(), Vector3::zeros()));
        assert!(add_i_score(&r, &gt(), &turned) < 1e-3 * r.diagonal);

        // brute-force oracle on a 4-point model
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(0.0, 7.0, 0.0),
            Point3::new(3.0, 3.0, 9.0),
        ];
        let m4 = ObjectModel::new("quad", PointCloud::from_points(pts.clone()).unwrap(), Symmetry::None).unwrap();
        let est = Pose::from_axis_angle(Vector3::new(0.3, -1.0, 0.2), 0.4, Vector3::new(1.0, 2.0, -1.0));
        let brute = pts
            .iter()
            .map(|p| pts.iter().map(|q| (Pose::identity().apply(p) - est.apply(q)).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / 4.0;
        assert!((add_i_score(&m4, &Pose::identity(), &est) - brute).abs() < 1e-12);
    }

    #[test]
    fn add_correct_thresholds() {
        let m = blob(100, 3);
        let d = m.diagonal;
        assert!(add_correct(&m, &gt(), &gt(), false));
        let far = Pose::from_translation(Vector3::new(0.2 * d, 0.0, 0.0)).compose(&gt());
        assert!(!add_correct(&m, &gt(), &far, false));
        let near = Pose::from_translation(Vector3::new(0.09 * d, 0.0, 0.0)).compose(&gt());
        assert!(add_correct(&m, &gt(), &near, false));
    }

    #[test]
    fn mssd_examples() {
        let m = blob(100, 4);
        assert_eq!(mssd_score(&m, &gt(), &gt()), 0.0);
        let moved = Pose::from_translation(Vector3::new(3.0, 4.0, 0.0)).compose(&gt());
        assert!((mssd_score(&m, &gt(), &moved) - 5.0).abs() < 1e-9);

        let flip = Pose::from_axis_angle(Vector3::z(), PI, Vector3::zeros());
        let two_fold = ObjectModel::new(
            "box",
            PointCloud::from_points(vec![
                Point3::new(30.0, 10.0, 5.0),
                Point3::new(-30.0, -10.0, 5.0),
                Point3::new(30.0, -10.0, -5.0),
                Point3::new(-30.0, 10.0, -5.0),
            ])
            .unwrap(),
            Symmetry::Discrete(vec![flip]),
        )
        .unwrap();
        let rotated = gt().compose(&flip);
        assert!(mssd_score(&two_fold, &gt(), &rotated) < 1e-9);
    }

    #[test]
    fn mspd_examples() {
        let cam = CameraIntrinsics::desk();
        let m = blob(100, 5);
        assert_eq!(mspd_score(&m, &gt(), &gt(), &cam).unwrap(), 0.0);

        // single point on the optical axis
        let dot = ObjectModel {
            name: "dot".into(),
            cloud: PointCloud::from_points(vec![Point3::origin()]).unwrap(),
            diagonal: 1.0,
            keypoints: vec![Point3::origin()],
            symmetry: Symmetry::None,
        };
        let at = Pose::from_translation(Vector3::new(0.0, 0.0, 500.0));
        let lateral = Pose::from_translation(Vector3::new(4.0, 0.0, 500.0));
        let expected = cam.fx * 4.0 / 500.0;
        assert!((mspd_score(&dot, &at, &lateral, &cam).unwrap() - expected).abs() < 1e-9);
        let deeper = Pose::from_translation(Vector3::new(0.0, 0.0, 700.0));
        assert!(mspd_score(&dot, &at, &deeper, &cam).unwrap().abs() < 1e-12);
        let behind = Pose::from_translation(Vector3::new(0.0, 0.0, -10.0));
        assert!(matches!(mspd_score(&dot, &at, &behind, &cam), Err(Error::BehindCamera { .. })));
    }

    fn dense_plate() -> ObjectModel {
        let mut pts = Vec::new();
        for i in 0..60 {
            for j in 0..40 {
                pts.push(Point3::new(i as f64 * 1.5 - 45.0, j as f64 * 1.5 - 30.0, 0.0));
            }
        }
        ObjectModel::new("plate", PointCloud::from_points(pts).unwrap(), Symmetry::None).unwrap()
    }

    #[test]
    fn vsd_examples() {
        let cam = CameraIntrinsics::desk();
        let m = dense_plate();
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 600.0));
        let empty = DepthImage::empty(cam.width, cam.height);
        assert_eq!(vsd_score(&m, &gt, &gt, &cam, &empty, 10.0).unwrap(), 0.0);
        let aside = Pose::from_translation(Vector3::new(200.0, 0.0, 600.0));
        assert_eq!(vsd_score(&m, &gt, &aside, &cam, &empty, 10.0).unwrap(), 1.0);
        let nudged = Pose::from_translation(Vector3::new(0.0, 0.0, 603.0));
        assert_eq!(vsd_score(&m, &gt, &nudged, &cam, &empty, 5.0).unwrap(), 0.0);
        assert!(vsd_score(&m, &gt, &gt, &cam, &empty, 0.0).is_err());
    }

    #[test]
    fn bop_recall_examples() {
        let cam = CameraIntrinsics::desk();
        let m = dense_plate();
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 600.0));
        let depth = DepthImage::render(&m.cloud.transform(&gt).points().to_vec(), &cam, 1);
        let exact = evaluate(&m, &gt, Some(&gt), &cam, &depth);
        assert_eq!(bop_average_recall(&[exact]).unwrap(), 1.0);
        let wrong_pose = Pose::from_translation(Vector3::new(150.0, 100.0, 900.0));
        let wrong = evaluate(&m, &gt, Some(&wrong_pose), &cam, &depth);
        assert_eq!(bop_average_recall(&[wrong]).unwrap(), 0.0);
        assert_eq!(bop_average_recall(&[exact, wrong]).unwrap(), 0.5);
        assert!(bop_average_recall(&[]).is_err());
        assert_eq!(evaluate(&m, &gt, None, &cam, &depth).bop_recall_contribution, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn add_i_never_exceeds_add(s in 0u64..10_000) {
            let m = blob(40, s);
            let mut rng = seed::rng(s ^ 0xabc);
            let a = Pose::random_rotation(&mut rng, Vector3::new(0.0, 0.0, 500.0));
            let b = { let x = rng.random_range(-30.0..30.0); Pose::random_rotation(&mut rng, Vector3::new(x, 5.0, 520.0)) };
            prop_assert!(add_i_score(&m, &a, &b) <= add_score(&m, &a, &b) + 1e-12);
        }

        #[test]
        fn camera_free_scores_left_invariant(s in 0u64..10_000) {
            let m = blob(30, s);
            let mut rng = seed::rng(s);
            let a = Pose::random_rotation(&mut rng, Vector3::new(0.0, 0.0, 500.0));
            let b = Pose::random_rotation(&mut rng, Vector3::new(10.0, 0.0, 480.0));
            let w = Pose::random_rotation(&mut rng, Vector3::new(-40.0, 7.0, 3.0));
            let (wa, wb) = (w.compose(&a), w.compose(&b));
            prop_assert!((add_score(&m, &a, &b) - add_score(&m, &wa, &wb)).abs() < 1e-9);
            prop_assert!((add_i_score(&m, &a, &b) - add_i_score(&m, &wa, &wb)).abs() < 1e-9);
            prop_assert!((mssd_score(&m, &a, &b) - mssd_score(&m, &wa, &wb)).abs() < 1e-9);
        }

        #[test]
        fn add_correct_monotone_along_ray(s in 0u64..10_000, k in 0.0f64..1.0) {
            let m = blob(30, s);
            let dir = Vector3::new(1.0, -0.5, 0.25).normalize() * 0.3 * m.diagonal;
            let far = Pose::from_translation(dir).compose(&gt());
            let near = Pose::from_translation(dir * k).compose(&gt());
            if add_correct(&m, &gt(), &far, false) {
                prop_assert!(add_correct(&m, &gt(), &near, false));
            }
        }
    }

    #[test]
    fn add_i_le_add_ten_thousand_cases() {
        let m = blob(25, 77);
        let mut rng = seed::rng(78);
        for _ in 0..10_000 {
            let a = Pose::random_rotation(&mut rng, Vector3::new(0.0, 0.0, 500.0));
            let b = { let x = rng.random_range(-20.0..20.0); Pose::random_rotation(&mut rng, Vector3::new(x, 0.0, 500.0)) };
            assert!(add_i_score(&m, &a, &b) <= add_score(&m, &a, &b) + 1e-12);
        }
    }
}
