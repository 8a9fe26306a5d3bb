use super::p3p::p3p;
use super::refine::{refine_pose, RefineParams};
use super::WorldMatch;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use nalgebra::Vector3;
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub max_reproj: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub min_inliers: usize,
    /// Robust polishing rounds on the consensus set.
    pub polish_rounds: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { max_reproj: 5.0, confidence: 0.999, max_iterations: 10_000, min_inliers: 4, polish_rounds: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: Pose,
    pub inliers: Vec<bool>,
    pub n_inliers: usize,
    pub iterations: usize,
}

#[inline]
pub fn reprojection_error(pose: &Pose, k: &Intrinsics, m: &WorldMatch) -> f64 {
    match pose.project(k, &m.point) {
        Some(q) => ((q.x - m.pixel.x).powi(2) + (q.y - m.pixel.y).powi(2)).sqrt(),
        None => f64::INFINITY,
    }
}

fn count_inliers(pose: &Pose, k: &Intrinsics, matches: &[WorldMatch], thr: f64) -> usize {
    matches.iter().filter(|m| reprojection_error(pose, k, m) < thr).count()
}

/// Required iterations for `confidence` given inlier ratio `w` and sample size 4.
pub fn adaptive_iterations(w: f64, confidence: f64, cap: usize) -> usize {
    if w <= 0.0 {
        return cap;
    }
    let p = w.powi(4);
    if p >= 1.0 {
        return 1;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// P3P-RANSAC. Each sample solves on three matches and keeps the solution
/// that reprojects a fourth match best. The winning consensus set is
/// polished with the pseudo-Huber refinement.
pub fn estimate_pose_ransac(
    matches: &[WorldMatch],
    k: &Intrinsics,
    params: &RansacParams,
    seed: u64,
) -> Result<RansacResult> {
    let n = matches.len();
    if n < 4 {
        return Err(Error::NotEnoughMatches { need: 4, got: n });
    }
    let bearings: Vec<Vector3<f64>> = matches.iter().map(|m| k.bearing(m.pixel.x, m.pixel.y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thr = params.max_reproj;
    let mut best: Option<(usize, Pose)> = None;
    let mut needed = params.max_iterations;
    let mut it = 0;
    while it < needed {
        it += 1;
        let idx = sample(&mut rng, n, 4);
        let (i0, i1, i2, i3) = (idx.index(0), idx.index(1), idx.index(2), idx.index(3));
        let pts = [matches[i0].point, matches[i1].point, matches[i2].point];
        let brs = [bearings[i0], bearings[i1], bearings[i2]];
        let Some(model) = p3p(&pts, &brs)
            .into_iter()
            .map(|p| (reprojection_error(&p, k, &matches[i3]), p))
            .filter(|(e, _)| *e < thr)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, p)| p)
        else {
            continue;
        };
        let c = count_inliers(&model, k, matches, thr);
        if best.as_ref().is_none_or(|(bc, _)| c > *bc) {
            best = Some((c, model));
            needed = adaptive_iterations(c as f64 / n as f64, params.confidence, params.max_iterations);
        }
    }
    let (mut count, mut pose) = best.ok_or(Error::EstimationFailed)?;
    if count < params.min_inliers {
        return Err(Error::EstimationFailed);
    }
    let refine = RefineParams { huber_delta: thr.clamp(1e-3, 1.0), ..Default::default() };
    for _ in 0..params.polish_rounds {
        let inl: Vec<WorldMatch> =
            matches.iter().filter(|m| reprojection_error(&pose, k, m) < thr).copied().collect();
        let cand = refine_pose(&pose, &inl, k, &refine).pose;
        let c = count_inliers(&cand, k, matches, thr);
        if c < count {
            break;
        }
        pose = cand;
        count = c;
    }
    let inliers: Vec<bool> = matches.iter().map(|m| reprojection_error(&pose, k, m) < thr).collect();
    Ok(RansacResult { pose, n_inliers: count, inliers, iterations: it })
}
