//! Surface samplers shared by the object catalog and the clutter generator.

use nalgebra::{Point3, Vector3};

pub(crate) struct Surface {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl Surface {
    pub fn new() -> Self {
        Surface { points: Vec::new(), normals: Vec::new() }
    }

    pub fn push(&mut self, p: Point3<f64>, n: Vector3<f64>) {
        self.points.push(p);
        self.normals.push(n);
    }

    pub fn append(&mut self, other: Surface) {
        self.points.extend(other.points);
        self.normals.extend(other.normals);
    }

    pub fn retain(&mut self, keep: impl Fn(&Point3<f64>) -> bool) {
        let mut i = 0;
        while i < self.points.len() {
            if keep(&self.points[i]) {
                i += 1;
            } else {
                self.points.swap_remove(i);
                self.normals.swap_remove(i);
            }
        }
    }
}

/// Grid-sampled rectangle spanned by `u` and `v` from `origin`.
pub(crate) fn rect(origin: Point3<f64>, u: Vector3<f64>, v: Vector3<f64>, normal: Vector3<f64>, spacing: f64) -> Surface {
    let nu = (u.norm() / spacing).round().max(1.0) as usize;
    let nv = (v.norm() / spacing).round().max(1.0) as usize;
    let mut s = Surface::new();
    for i in 0..nu {
        for j in 0..nv {
            let a = (i as f64 + 0.5) / nu as f64;
            let b = (j as f64 + 0.5) / nv as f64;
            s.push(origin + u * a + v * b, normal);
        }
    }
    s
}

/// Axis-aligned box surface centered at `center` with full extents `size`.
pub(crate) fn cuboid(center: Point3<f64>, size: Vector3<f64>, spacing: f64) -> Surface {
    let h = size / 2.0;
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let mut s = Surface::new();
    for sign in [-1.0, 1.0] {
        s.append(rect(
            center + Vector3::new(sign * h.x, -h.y, -h.z),
            y * size.y,
            z * size.z,
            x * sign,
            spacing,
        ));
        s.append(rect(
            center + Vector3::new(-h.x, sign * h.y, -h.z),
            x * size.x,
            z * size.z,
            y * sign,
            spacing,
        ));
        s.append(rect(
            center + Vector3::new(-h.x, -h.y, sign * h.z),
            x * size.x,
            y * size.y,
            z * sign,
            spacing,
        ));
    }
    s
}

/// Ellipsoid surface from a Fibonacci lattice; `n` chosen from the
/// approximate area so that spacing is roughly uniform.
pub(crate) fn ellipsoid(center: Point3<f64>, radii: Vector3<f64>, spacing: f64) -> Surface {
    let p = 1.6;
    let (a, b, c) = (radii.x.powf(p), radii.y.powf(p), radii.z.powf(p));
    let area = 4.0 * std::f64::consts::PI * ((a * b + a * c + b * c) / 3.0).powf(1.0 / p);
    let n = (area / (spacing * spacing)).round().max(4.0) as usize;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut s = Surface::new();
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let th = golden * i as f64;
        let unit = Vector3::new(r * th.cos(), r * th.sin(), z);
        let q = unit.component_mul(&radii);
        let normal = Vector3::new(q.x / (radii.x * radii.x), q.y / (radii.y * radii.y), q.z / (radii.z * radii.z)).normalize();
        s.push(center + q, normal);
    }
    s
}

/// Closed cylinder along z.
pub(crate) fn cylinder(center: Point3<f64>, radius: f64, height: f64, spacing: f64) -> Surface {
    let mut s = Surface::new();
    let around = (2.0 * std::f64::consts::PI * radius / spacing).round() as usize;
    let rows = (height / spacing).round().max(1.0) as usize;
    for i in 0..around {
        let th = 2.0 * std::f64::consts::PI * i as f64 / around as f64;
        let n = Vector3::new(th.cos(), th.sin(), 0.0);
        for j in 0..rows {
            let z = -height / 2.0 + height * (j as f64 + 0.5) / rows as f64;
            s.push(center + n * radius + Vector3::z() * z, n);
        }
    }
    for sign in [-1.0, 1.0] {
        let rings = (radius / spacing).round().max(1.0) as usize;
        for k in 0..rings {
            let r = radius * (k as f64 + 0.5) / rings as f64;
            let count = ((2.0 * std::f64::consts::PI * r / spacing).round() as usize).max(1);
            for i in 0..count {
                let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.25 * k as f64) / count as f64;
                s.push(
                    center + Vector3::new(r * th.cos(), r * th.sin(), sign * height / 2.0),
                    Vector3::z() * sign,
                );
            }
        }
    }
    s
}
