use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = CameraIntrinsics { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidParameter("principal point outside image".into()));
        }
        Ok(())
    }

    /// Desk-scale default sensor: 320×240, ~53° horizontal field of view.
    pub fn desk() -> Self {
        CameraIntrinsics {
            fx: 320.0,
            fy: 320.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }

    /// Sub-pixel projection; `None` when the point is not in front of the camera.
    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Integer pixel containing the projection, if inside the image.
    #[inline]
    pub fn pixel(&self, p: &Point3<f64>) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = (u.floor(), v.floor());
        (u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64).then_some((u as usize, v as usize))
    }

    pub fn project_checked(&self, p: &Point3<f64>) -> Result<(f64, f64)> {
        self.project(p).ok_or(Error::BehindCamera { z: p.z })
    }
}

/// Depth image in mm; 0 marks pixels without a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn empty(width: usize, height: usize) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    /// Point-splat z-buffer render: every point covers a (2r+1)² pixel
    /// square, each pixel keeps the minimum depth.
    pub fn render<'a, I>(points: I, cam: &CameraIntrinsics, splat_radius: usize) -> Self
    where
        I: IntoIterator<Item = &'a Point3<f64>>,
    {
        let mut img = DepthImage::empty(cam.width, cam.height);
        let r = splat_radius as isize;
        for p in points {
            let Some((u, v)) = cam.project(p) else { continue };
            let (u, v) = (u.floor() as isize, v.floor() as isize);
            let z = p.z as f32;
            for dv in -r..=r {
                let y = v + dv;
                if y < 0 || y >= cam.height as isize {
                    continue;
                }
                for du in -r..=r {
                    let x = u + du;
                    if x < 0 || x >= cam.width as isize {
                        continue;
                    }
                    let cell = &mut img.data[y as usize * cam.width + x as usize];
                    if *cell == 0.0 || z < *cell {
                        *cell = z;
                    }
                }
            }
        }
        img
    }

    pub fn scaled(&self, factor: f32) -> Self {
        DepthImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|d| d * factor).collect(),
        }
    }
}
