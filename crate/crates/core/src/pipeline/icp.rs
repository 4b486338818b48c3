//! Coarse-to-fine point-to-point ICP from the model's camera-facing points
//! into the candidate cloud.

use nalgebra::{Matrix3, Point3, Vector3};

use super::params::{FixedParams, PoseHypothesis};
use super::prepared::PreparedModel;
use crate::geometry::{fit_from_covariance, KdTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    pub hypothesis: PoseHypothesis,
    /// No stage found any correspondence; the input was returned unchanged.
    pub stalled: bool,
}

/// Correspondence cut-offs of the three stages, coarse to fine.
pub fn icp_cutoffs(id: f64, is: f64, scale: f64) -> [f64; FixedParams::ICP_RESOLUTIONS] {
    std::array::from_fn(|k| id * is.powi((FixedParams::ICP_RESOLUTIONS - 1 - k) as i32) * scale)
}

pub fn c2f_icp(
    hypothesis: &PoseHypothesis,
    candidate: &KdTree,
    candidate_points: &[Point3<f64>],
    pm: &PreparedModel,
    id: f64,
    is: f64,
    ii: u32,
) -> IcpResult {
    let mut pose = hypothesis.pose;
    let mut any = false;
    for cutoff in icp_cutoffs(id, is, pm.scale) {
        // visibility is fixed per stage
        let visible: Vec<usize> = (0..pm.icp_points.len())
            .filter(|&i| pose.apply_vector(&pm.icp_normals[i]).dot(&pose.apply(&pm.icp_points[i]).coords) < 0.0)
            .collect();
        let mut previous: Vec<(usize, usize)> = Vec::new();
        for _ in 0..ii {
            let mut n = 0usize;
            let mut cs = Vector3::zeros();
            let mut cd = Vector3::zeros();
            let mut pairs = Vec::with_capacity(visible.len());
            let mut ids = Vec::with_capacity(visible.len());
            for &i in &visible {
                let m = pm.icp_points[i];
                if let Some((j, _)) = candidate.nearest_within(&pose.apply(&m), cutoff) {
                    let d = candidate_points[j];
                    cs += m.coords;
                    cd += d.coords;
                    n += 1;
                    pairs.push((m, d));
                    ids.push((i, j));
                }
            }
            if n < 3 {
                break;
            }
            // identical correspondences reproduce the identical pose, so the
            // remaining iterations of this stage would be no-ops
            if ids == previous {
                any = true;
                break;
            }
            previous = ids;
            any = true;
            let inv = 1.0 / n as f64;
            let (cs, cd) = (cs * inv, cd * inv);
            let mut h = Matrix3::zeros();
            for (m, d) in &pairs {
                h += (m.coords - cs) * (d.coords - cd).transpose();
            }
            match fit_from_covariance(h, cs, cd) {
                Some(p) => pose = p,
                None => break,
            }
        }
    }
    if !any {
        return IcpResult { hypothesis: *hypothesis, stalled: true };
    }
    IcpResult { hypothesis: PoseHypothesis { pose, ..*hypothesis }, stalled: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::metrics::add_score;
    use crate::scene::ape;

    fn setup() -> (PreparedModel, Pose) {
        let pm = PreparedModel::new(&ape()).unwrap();
        let gt = Pose::from_axis_angle(Vector3::new(0.2, 1.0, -0.3), 0.8, Vector3::new(20.0, -10.0, 620.0));
        (pm, gt)
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let (pm, gt) = setup();
        let pts: Vec<Point3<f64>> = pm.icp_points.iter().map(|p| gt.apply(p)).collect();
        let tree = KdTree::new(&pts);
        let r = c2f_icp(&PoseHypothesis::new(gt), &tree, &pts, &pm, 2.5, 2.0, 10);
        assert!(!r.stalled);
        assert!((r.hypothesis.pose.rotation() - gt.rotation()).abs().max() < 1e-6);
        assert!((r.hypothesis.pose.translation() - gt.translation()).abs().max() < 1e-6);
    }

    #[test]
    fn converges_from_small_offset() {
        let (pm, gt) = setup();
        // visible part of the dense model surface as the candidate
        let pts: Vec<Point3<f64>> = pm
            .model
            .cloud
            .points()
            .iter()
            .zip(&pm.surface_normals)
            .filter(|(p, n)| gt.apply_vector(n).dot(&gt.apply(p).coords) < 0.0)
            .map(|(p, _)| gt.apply(p))
            .collect();
        let tree = KdTree::new(&pts);
        let start = Pose::from_translation(Vector3::new(1.2, -1.2, 1.0)).compose(&gt);
        assert!(add_score(&pm.model, &gt, &start) > 1.9);
        let r = c2f_icp(&PoseHypothesis::new(start), &tree, &pts, &pm, 2.5, 2.0, 10);
        let err = add_score(&pm.model, &gt, &r.hypothesis.pose);
        assert!(err < 0.5, "ADD after ICP {err}");
    }

    #[test]
    fn unit_scale_collapses_stages() {
        let c = icp_cutoffs(3.0, 1.0, 1.0);
        assert_eq!(c, [3.0, 3.0, 3.0]);
        let c = icp_cutoffs(2.0, 2.0, 1.5);
        assert_eq!(c, [12.0, 6.0, 3.0]);
    }

    #[test]
    fn stalls_without_correspondences() {
        let (pm, gt) = setup();
        let far = vec![Point3::new(1e4, 1e4, 1e4); 10];
        let tree = KdTree::new(&far);
        let h = PoseHypothesis { pose: gt, inlier_count: 7, depth_score: 0.0 };
        let r = c2f_icp(&h, &tree, &far, &pm, 2.5, 2.0, 10);
        assert!(r.stalled);
        assert_eq!(r.hypothesis, h);
    }
}
