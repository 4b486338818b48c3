//! Depth and contour check of a pose hypothesis against the scene depth.

use super::params::PoseHypothesis;
use super::prepared::PreparedModel;
use crate::geometry::{CameraIntrinsics, DepthImage, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthTerms {
    pub agreement: f64,
    pub violation: f64,
    pub contour: f64,
}

impl DepthTerms {
    pub fn score(&self) -> f64 {
        0.5 * self.agreement * (1.0 - self.violation) + 0.5 * self.contour
    }
}

/// Sparse splat rendering of the camera-facing model points: returns the
/// pixel window origin, its size and the min-depth buffer (0 = empty).
fn render_window(pm: &PreparedModel, pose: &Pose, cam: &CameraIntrinsics) -> Option<(i64, i64, i64, i64, Vec<f32>)> {
    let mut pix = Vec::new();
    for (p, n) in pm.model.cloud.points().iter().zip(&pm.surface_normals) {
        let q = pose.apply(p);
        if pose.apply_vector(n).dot(&q.coords) >= 0.0 {
            continue;
        }
        if let Some((u, v)) = cam.project(&q) {
            pix.push((u.floor() as i64, v.floor() as i64, q.z as f32));
        }
    }
    let (w, h) = (cam.width as i64, cam.height as i64);
    let x0 = pix.iter().map(|p| p.0).min()?.max(1) - 1;
    let y0 = pix.iter().map(|p| p.1).min()?.max(1) - 1;
    let x1 = (pix.iter().map(|p| p.0).max()? + 2).min(w);
    let y1 = (pix.iter().map(|p| p.1).max()? + 2).min(h);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let (bw, bh) = (x1 - x0, y1 - y0);
    let mut buf = vec![0f32; (bw * bh) as usize];
    for (u, v, z) in pix {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (u + dx - x0, v + dy - y0);
                if x < 0 || y < 0 || x >= bw || y >= bh {
                    continue;
                }
                let cell = &mut buf[(y * bw + x) as usize];
                if *cell == 0.0 || z < *cell {
                    *cell = z;
                }
            }
        }
    }
    Some((x0, y0, bw, bh, buf))
}

/// Agreement, foreground violation and contour terms for a pose.
pub fn depth_terms(
    pose: &Pose,
    depth: &DepthImage,
    near_edge: &[bool],
    pm: &PreparedModel,
    bd: f64,
    ad: f64,
    cam: &CameraIntrinsics,
) -> DepthTerms {
    let zero = DepthTerms { agreement: 0.0, violation: 0.0, contour: 0.0 };
    let Some((x0, y0, bw, bh, buf)) = render_window(pm, pose, cam) else { return zero };
    let (ad, bd) = (ad * pm.scale, bd * pm.scale);
    let (mut total, mut agree, mut viol) = (0usize, 0usize, 0usize);
    let (mut sil, mut sil_edge) = (0usize, 0usize);
    for y in 0..bh {
        for x in 0..bw {
            let m = buf[(y * bw + x) as usize];
            if m == 0.0 {
                continue;
            }
            total += 1;
            let (gx, gy) = ((x + x0) as usize, (y + y0) as usize);
            let s = depth.get(gx, gy) as f64;
            let m = m as f64;
            if s > 0.0 {
                if (s - m).abs() <= ad {
                    agree += 1;
                }
                if m - s > bd {
                    viol += 1;
                }
            }
            let outside = |dx: i64, dy: i64| {
                let (nx, ny) = (x + dx, y + dy);
                nx < 0 || ny < 0 || nx >= bw || ny >= bh || buf[(ny * bw + nx) as usize] == 0.0
            };
            if outside(1, 0) || outside(-1, 0) || outside(0, 1) || outside(0, -1) {
                sil += 1;
                if near_edge[gy * depth.width + gx] {
                    sil_edge += 1;
                }
            }
        }
    }
    if total == 0 {
        return zero;
    }
    DepthTerms {
        agreement: agree as f64 / total as f64,
        violation: viol as f64 / total as f64,
        contour: if sil == 0 { 0.0 } else { sil_edge as f64 / sil as f64 },
    }
}

/// Scores `hypothesis` as 0.5·agreement·(1 − violation) + 0.5·contour.
pub fn depth_check(
    hypothesis: &PoseHypothesis,
    depth: &DepthImage,
    near_edge: &[bool],
    pm: &PreparedModel,
    bd: f64,
    ad: f64,
    cam: &CameraIntrinsics,
) -> PoseHypothesis {
    let terms = depth_terms(&hypothesis.pose, depth, near_edge, pm, bd, ad, cam);
    PoseHypothesis { depth_score: terms.score().clamp(0.0, 1.0), ..*hypothesis }
}
