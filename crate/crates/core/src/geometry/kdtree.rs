//! Static 3-D kd-tree stored as an implicit balanced tree.
//!
//! Points are permuted so that the median of every sub-range sits at the
//! middle index; the split axis cycles x, y, z with depth. Searches prune
//! with the incremental distance from the query to each cell, so queries far
//! from the cloud stay logarithmic.

use nalgebra::Point3;

#[derive(Debug, Clone)]
pub struct KdTree {
    pts: Vec<[f64; 3]>,
    ids: Vec<u32>,
}

impl KdTree {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build(points, &mut order, 0);
        let pts = order
            .iter()
            .map(|&i| {
                let p = &points[i as usize];
                [p.x, p.y, p.z]
            })
            .collect();
        KdTree { pts, ids: order }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.pts.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(&q, 0, self.pts.len(), 0, 0.0, &mut [0.0; 3], &mut best);
        Some((self.ids[best.0] as usize, best.1))
    }

    /// Nearest point no farther than `radius`, if any.
    pub fn nearest_within(&self, q: &Point3<f64>, radius: f64) -> Option<(usize, f64)> {
        if self.pts.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (usize::MAX, radius * radius);
        self.nearest_rec(&q, 0, self.pts.len(), 0, 0.0, &mut [0.0; 3], &mut best);
        (best.0 != usize::MAX).then(|| (self.ids[best.0] as usize, best.1))
    }

    #[allow(clippy::too_many_arguments)]
    fn nearest_rec(
        &self,
        q: &[f64; 3],
        lo: usize,
        hi: usize,
        depth: usize,
        cell_d2: f64,
        off: &mut [f64; 3],
        best: &mut (usize, f64),
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let p = &self.pts[mid];
        let d2 = sq(q[0] - p[0]) + sq(q[1] - p[1]) + sq(q[2] - p[2]);
        if d2 < best.1 || (d2 == best.1 && self.ids[mid] < self.ids.get(best.0).copied().unwrap_or(u32::MAX)) {
            *best = (mid, d2);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.nearest_rec(q, near.0, near.1, depth + 1, cell_d2, off, best);
        // the far cell is at least as distant as its offset along every axis
        let far_d2 = cell_d2 - sq(off[axis]) + sq(diff);
        if far_d2 <= best.1 {
            let saved = off[axis];
            off[axis] = diff;
            self.nearest_rec(q, far.0, far.1, depth + 1, far_d2, off, best);
            off[axis] = saved;
        }
    }

    /// Indices of all points within `radius` (inclusive), in ascending index order.
    pub fn within(&self, q: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    pub fn count_within(&self, q: &Point3<f64>, radius: f64) -> usize {
        let mut n = 0;
        self.for_each_within(q, radius, |_, _| n += 1);
        n
    }

    /// Visit every point within `radius` with its squared distance (unordered).
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, q: &Point3<f64>, radius: f64, mut f: F) {
        let q = [q.x, q.y, q.z];
        let r2 = radius * radius;
        self.within_rec(&q, r2, 0, self.pts.len(), 0, 0.0, &mut [0.0; 3], &mut f);
    }

    #[allow(clippy::too_many_arguments)]
    fn within_rec<F: FnMut(usize, f64)>(
        &self,
        q: &[f64; 3],
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        cell_d2: f64,
        off: &mut [f64; 3],
        f: &mut F,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let p = &self.pts[mid];
        let d2 = sq(q[0] - p[0]) + sq(q[1] - p[1]) + sq(q[2] - p[2]);
        if d2 <= r2 {
            f(self.ids[mid] as usize, d2);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff <= 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.within_rec(q, r2, near.0, near.1, depth + 1, cell_d2, off, f);
        let far_d2 = cell_d2 - sq(off[axis]) + sq(diff);
        if far_d2 <= r2 {
            let saved = off[axis];
            off[axis] = diff;
            self.within_rec(q, r2, far.0, far.1, depth + 1, far_d2, off, f);
            off[axis] = saved;
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

fn build(points: &[Point3<f64>], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let (pa, pb) = (points[a as usize][axis], points[b as usize][axis]);
        pa.total_cmp(&pb).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_points(n: usize, s: u64) -> Vec<Point3<f64>> {
        let mut rng = seed::rng(s);
        (0..n)
            .map(|_| Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
            .collect()
    }

    #[test]
    fn empty_tree() {
        let t = KdTree::new(&[]);
        assert!(t.nearest(&Point3::origin()).is_none());
        assert!(t.within(&Point3::origin(), 10.0).is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..300, s in 0u64..1000, r in 1.0f64..400.0) {
            let pts = random_points(n, s);
            let tree = KdTree::new(&pts);
            let q = if s % 2 == 0 { Point3::new(3.0, -7.0, 11.0) } else { Point3::new(400.0, -250.0, 90.0) };
            let (bi, bd) = pts.iter().enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))).unwrap();
            let (ti, td) = tree.nearest(&q).unwrap();
            prop_assert_eq!(td, bd);
            prop_assert_eq!(ti, bi);
            let brute: Vec<usize> = (0..n).filter(|&i| (pts[i] - q).norm_squared() <= r * r).collect();
            prop_assert_eq!(tree.within(&q, r), brute);
        }
    }
}
