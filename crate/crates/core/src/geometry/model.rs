use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{PointCloud, Pose};
use crate::error::{Error, Result};

pub const MAX_KEYPOINTS: usize = 100;

/// Discrete symmetry group of an object model (identity is implicit).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "transforms", rename_all = "lowercase")]
pub enum Symmetry {
    #[default]
    None,
    Discrete(Vec<Pose>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub name: String,
    pub cloud: PointCloud,
    /// Axis-aligned bounding-box diagonal (mm).
    pub diagonal: f64,
    pub keypoints: Vec<Point3<f64>>,
    pub symmetry: Symmetry,
}

impl ObjectModel {
    /// Builds a model from its surface cloud; keypoints are chosen by
    /// farthest-point sampling starting at the first point.
    pub fn new(name: impl Into<String>, cloud: PointCloud, symmetry: Symmetry) -> Result<Self> {
        let diagonal = cloud.bbox_diagonal()?;
        if !(diagonal > 0.0) {
            return Err(Error::InvalidCloud("object model has zero diagonal".into()));
        }
        let keypoints = farthest_point_sample(cloud.points(), MAX_KEYPOINTS);
        let model = ObjectModel {
            name: name.into(),
            cloud,
            diagonal,
            keypoints,
            symmetry,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.cloud.validate()?;
        if !(self.diagonal > 0.0) {
            return Err(Error::InvalidCloud("diagonal must be positive".into()));
        }
        if self.keypoints.len() > MAX_KEYPOINTS {
            return Err(Error::InvalidCloud(format!("{} keypoints exceed {MAX_KEYPOINTS}", self.keypoints.len())));
        }
        if let Symmetry::Discrete(ts) = &self.symmetry {
            for t in ts {
                Pose::new(*t.rotation(), *t.translation())?;
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(&self.symmetry, Symmetry::Discrete(ts) if !ts.is_empty())
    }

    /// Symmetry transforms including the identity.
    pub fn symmetry_transforms(&self) -> Vec<Pose> {
        let mut out = vec![Pose::identity()];
        if let Symmetry::Discrete(ts) = &self.symmetry {
            out.extend(ts.iter().copied());
        }
        out
    }

    /// Distance scale relative to a 100 mm reference object.
    pub fn scale(&self) -> f64 {
        self.diagonal / crate::pipeline::DIAGONAL_REF
    }

    /// Copy uniformly scaled about the model origin.
    pub fn scaled(&self, factor: f64) -> ObjectModel {
        let symmetry = match &self.symmetry {
            Symmetry::None => Symmetry::None,
            Symmetry::Discrete(ts) => Symmetry::Discrete(ts.iter().map(|t| t.scaled(factor)).collect()),
        };
        ObjectModel {
            name: self.name.clone(),
            cloud: self.cloud.scaled(factor),
            diagonal: self.diagonal * factor,
            keypoints: self.keypoints.iter().map(|k| k * factor).collect(),
            symmetry,
        }
    }
}

pub fn farthest_point_sample(points: &[Point3<f64>], k: usize) -> Vec<Point3<f64>> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0usize];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[0]).norm_squared()).collect();
    while chosen.len() < k.min(points.len()) {
        let (next, &d) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if d == 0.0 {
            break;
        }
        chosen.push(next);
        for (di, p) in dist.iter_mut().zip(points) {
            *di = di.min((p - points[next]).norm_squared());
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypoints_are_capped_and_spread() {
        let pts: Vec<_> = (0..500).map(|i| Point3::new(i as f64, (i % 7) as f64, 0.0)).collect();
        let m = ObjectModel::new("bar", PointCloud::from_points(pts).unwrap(), Symmetry::None).unwrap();
        assert_eq!(m.keypoints.len(), MAX_KEYPOINTS);
        assert!(m.keypoints.iter().any(|k| k.x > 490.0));
        assert!(m.diagonal > 499.0);
    }

    #[test]
    fn degenerate_model_rejected() {
        let c = PointCloud::from_points(vec![Point3::new(1.0, 1.0, 1.0)]).unwrap();
        assert!(ObjectModel::new("dot", c, Symmetry::None).is_err());
    }

    #[test]
    fn fps_dedups() {
        let pts = vec![Point3::origin(); 5];
        assert_eq!(farthest_point_sample(&pts, 10).len(), 1);
    }
}
