//! Pose-only robust refinement with a pseudo-Huber cost.

use super::WorldMatch;
use crate::geometry::{Intrinsics, Pose};
use nalgebra::{Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub huber_delta: f64,
    pub max_iterations: usize,
    pub cost_tolerance: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { huber_delta: 1.0, max_iterations: 100, cost_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

#[inline]
pub fn pseudo_huber(r2: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    d2 * ((1.0 + r2 / d2).sqrt() - 1.0)
}

fn residual(pose: &Pose, k: &Intrinsics, m: &WorldMatch) -> Option<(Vector3<f64>, [f64; 2])> {
    let p = pose.transform(&m.point);
    if p.z <= 0.0 {
        return None;
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    Some((p, [u - m.pixel.x, v - m.pixel.y]))
}

/// Total robust cost; points behind the camera contribute a large constant.
pub fn robust_cost(pose: &Pose, k: &Intrinsics, matches: &[WorldMatch], delta: f64) -> f64 {
    matches
        .iter()
        .map(|m| match residual(pose, k, m) {
            Some((_, r)) => pseudo_huber(r[0] * r[0] + r[1] * r[1], delta),
            None => pseudo_huber(1e12, delta),
        })
        .sum()
}

fn skew(v: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn apply_step(pose: &Pose, d: &Vector6<f64>) -> Pose {
    let w = Vector3::new(d[0], d[1], d[2]);
    let t = Vector3::new(d[3], d[4], d[5]);
    let rot = UnitQuaternion::from_scaled_axis(w) * pose.rotation;
    Pose::new(UnitQuaternion::new_normalize(rot.into_inner()), pose.translation + t)
}

/// Levenberg-Marquardt on the six pose parameters with iteratively
/// reweighted pseudo-Huber residuals. 3-D points stay fixed.
pub fn refine_pose(pose: &Pose, matches: &[WorldMatch], k: &Intrinsics, params: &RefineParams) -> RefineResult {
    let delta = params.huber_delta;
    let mut cur = *pose;
    let mut cost = robust_cost(&cur, k, matches, delta);
    let mut history = vec![cost];
    let mut lambda = 1e-4;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut a = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for m in matches {
            let Some((p, r)) = residual(&cur, k, m) else { continue };
            let w = 1.0 / (1.0 + (r[0] * r[0] + r[1] * r[1]) / (delta * delta)).sqrt();
            let iz = 1.0 / p.z;
            let dpix = nalgebra::Matrix2x3::new(
                k.fx * iz, 0.0, -k.fx * p.x * iz * iz,
                0.0, k.fy * iz, -k.fy * p.y * iz * iz,
            );
            let mut dp = nalgebra::Matrix3x6::zeros();
            dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&(p - cur.translation))));
            dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&nalgebra::Matrix3::identity());
            let j = dpix * dp;
            let rv = nalgebra::Vector2::new(r[0], r[1]);
            a += w * j.transpose() * j;
            g += w * j.transpose() * rv;
        }
        if g.norm() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = a;
            for i in 0..6 {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                lambda *= 10.0;
                continue;
            };
            let cand = apply_step(&cur, &step);
            let c = robust_cost(&cand, k, matches, delta);
            if c <= cost {
                let change = cost - c;
                cur = cand;
                cost = c;
                history.push(cost);
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if change < params.cost_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    RefineResult { pose: cur, converged, iterations, cost_history: history }
}
