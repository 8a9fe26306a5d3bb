//! Absolute pose from 2-D/3-D matches: P3P-RANSAC, pseudo-Huber pose-only
//! refinement, ground truth from dense correspondences and outcome
//! classification.

mod p3p;
mod ransac;
mod refine;

pub use p3p::p3p;
pub use ransac::{adaptive_iterations, estimate_pose_ransac, reprojection_error, RansacParams, RansacResult};
pub use refine::{pseudo_huber, refine_pose, robust_cost, RefineParams, RefineResult};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::pairing::{GeoImage, ImagePair};
use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// A body-frame point and its observed pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldMatch {
    pub point: Vector3<f64>,
    pub pixel: Vector2<f64>,
}

impl WorldMatch {
    pub fn new(point: [f64; 3], pixel: [f64; 2]) -> Self {
        Self { point: Vector3::from(point), pixel: Vector2::from(pixel) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseParams {
    pub ransac: RansacParams,
    pub refine: RefineParams,
    /// RANSAC threshold for ground-truth poses from dense correspondences.
    pub gt_max_reproj: f64,
    pub min_inliers: usize,
    pub max_orientation_error: f64,
    pub subsample_threshold: usize,
    pub subsample_target: usize,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            ransac: RansacParams::default(),
            refine: RefineParams::default(),
            gt_max_reproj: 0.75,
            min_inliers: 12,
            max_orientation_error: 20.0,
            subsample_threshold: 20_000,
            subsample_target: 10_000,
        }
    }
}

/// Geodesic angle between two rotations in degrees.
pub fn orientation_error(a: &Pose, b: &Pose) -> f64 {
    rotation_angle(&(a.rotation.inverse() * b.rotation))
}

pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs()).to_degrees()
}

/// Keeps every `⌊n/target⌋`-th item when `n > threshold`.
pub fn subsample_correspondences<T: Clone>(items: &[T], threshold: usize, target: usize) -> Vec<T> {
    let n = items.len();
    if n <= threshold || target == 0 {
        return items.to_vec();
    }
    let k = (n / target).max(1);
    items.iter().step_by(k).cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseOutcome {
    pub pose: Option<Pose>,
    pub inlier_count: usize,
    /// Degrees; infinite when no pose was produced.
    pub orientation_error: f64,
    pub failed: bool,
}

/// Failure iff fewer than `min_inliers` matches reproject within the gate or
/// the orientation error exceeds the limit.
pub fn classify_outcome(pose: Option<&Pose>, gt: &Pose, inliers: usize, params: &PoseParams) -> PoseOutcome {
    let err = pose.map_or(f64::INFINITY, |p| orientation_error(p, gt));
    let failed = pose.is_none() || inliers < params.min_inliers || err > params.max_orientation_error;
    PoseOutcome { pose: pose.copied(), inlier_count: inliers, orientation_error: err, failed }
}

/// RANSAC followed by robust refinement on the RANSAC inliers.
pub fn estimate_pose(
    matches: &[WorldMatch],
    k: &Intrinsics,
    ransac: &RansacParams,
    refine: &RefineParams,
    seed: u64,
) -> Result<(Pose, usize)> {
    let r = estimate_pose_ransac(matches, k, ransac, seed)?;
    let inl: Vec<WorldMatch> = matches.iter().zip(&r.inliers).filter(|(_, &i)| i).map(|(m, _)| *m).collect();
    let pose = refine_pose(&r.pose, &inl, k, refine).pose;
    let count = matches.iter().filter(|m| reprojection_error(&pose, k, m) < ransac.max_reproj).count();
    Ok((pose, count))
}

/// Pose of image B from the dense correspondence field and A's backplane.
pub fn ground_truth_pose(pair: &ImagePair, params: &PoseParams, seed: u64) -> Result<Pose> {
    let coords = pair.a.coords.as_ref().ok_or(Error::MissingMetadata("backplane of image A"))?;
    let all: Vec<WorldMatch> = pair
        .corr_ab
        .valid()
        .into_iter()
        .filter_map(|(x, y, b)| {
            let p = coords.get(x, y);
            p.iter().all(|v| v.is_finite()).then(|| {
                WorldMatch::new([p[0] as f64, p[1] as f64, p[2] as f64], [b[0] as f64, b[1] as f64])
            })
        })
        .collect();
    let sub = subsample_correspondences(&all, params.subsample_threshold, params.subsample_target);
    let ransac = RansacParams { max_reproj: params.gt_max_reproj, ..params.ransac };
    estimate_pose(&sub, &pair.b.intrinsics, &ransac, &params.refine, seed).map(|(p, _)| p)
}

/// Camera pose of an image from its own backplane.
pub fn backplane_pose(img: &GeoImage, max_points: usize, seed: u64) -> Result<Pose> {
    let all: Vec<WorldMatch> = img
        .finite_coords()
        .map(|(x, y, p)| WorldMatch::new([p[0] as f64, p[1] as f64, p[2] as f64], [x as f64, y as f64]))
        .collect();
    if all.len() < 4 {
        return Err(Error::NotEnoughMatches { need: 4, got: all.len() });
    }
    let step = all.len().div_ceil(max_points.max(4));
    let sub: Vec<WorldMatch> = all.into_iter().step_by(step).collect();
    let ransac = RansacParams { max_reproj: 1.0, ..Default::default() };
    estimate_pose(&sub, &img.intrinsics, &ransac, &RefineParams::default(), seed).map(|(p, _)| p)
}
