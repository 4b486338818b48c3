//! Point-cloud and rigid-transform primitives. Units are millimetres.

mod camera;
mod cloud;
mod kdtree;
mod model;
mod pose;

pub use camera::{CameraIntrinsics, DepthImage};
pub use cloud::PointCloud;
pub use kdtree::KdTree;
pub use model::{farthest_point_sample, ObjectModel, Symmetry, MAX_KEYPOINTS};
pub use pose::{fit_rigid, Pose};
pub(crate) use pose::fit_from_covariance;

/// Free-function form of [`PointCloud::transform`].
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    cloud.transform(pose)
}

pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> crate::Result<PointCloud> {
    cloud.voxel_downsample(voxel)
}

pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> crate::Result<PointCloud> {
    cloud.estimate_normals(radius)
}

pub fn bbox_diagonal(cloud: &PointCloud) -> crate::Result<f64> {
    cloud.bbox_diagonal()
}
