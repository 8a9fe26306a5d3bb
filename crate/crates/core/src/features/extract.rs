use super::{build_pyramid, DenseExtractor, DenseFeatureMap, Feature, SparseFeatures};
use crate::error::Result;
use crate::grid::{round_half_away, Grid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    /// Features kept per level as a fraction of the level's pixel count.
    pub feat_ratio: f64,
    pub det_threshold: f64,
    /// Half-width of the suppression neighbourhood (1 gives 3×3).
    pub nms_radius: usize,
    /// Pyramid levels per octave.
    pub scales_per_octave: u32,
    pub min_side: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self { feat_ratio: 0.001, det_threshold: 0.5, nms_radius: 1, scales_per_octave: 4, min_side: 128 }
    }
}

impl ExtractParams {
    pub fn max_features(&self, w: usize, h: usize) -> usize {
        round_half_away(self.feat_ratio * (w * h) as f64) as usize
    }
}

/// Non-maximum suppression on the box-blurred detection map.
///
/// A pixel survives when its `(blurred, raw)` pair is lexicographically
/// greater than that of every neighbour, so a constant region yields nothing
/// while an isolated impulse (whose blurred footprint is flat) stays put.
pub fn extract_sparse(map: &DenseFeatureMap, params: &ExtractParams) -> SparseFeatures {
    let kept = select_keypoints(&map.detection, map.reliability.as_ref(), params);
    to_features(&kept, map.scale, |x, y| map.descriptor(x, y).to_vec())
}

/// Surviving `(score, x, y)` triples in descending score order.
pub fn select_keypoints(
    det: &Grid<f32>,
    reliability: Option<&Grid<f32>>,
    params: &ExtractParams,
) -> Vec<(f64, usize, usize)> {
    let (w, h) = (det.width(), det.height());
    let blurred = det.box3();
    let r = params.nms_radius.max(1) as isize;
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let raw = *det.get(x, y);
            if (raw as f64) < params.det_threshold {
                continue;
            }
            let b = *blurred.get(x, y);
            if is_strict_max(&blurred, det, x, y, r, b, raw) {
                let rel = reliability.map_or(1.0, |g| *g.get(x, y) as f64);
                cands.push((raw as f64 * rel, x, y));
            }
        }
    }
    top_n(cands, params.max_features(w, h))
}

/// Maps level pixels to the original frame through pixel centres.
pub(crate) fn to_features(
    kept: &[(f64, usize, usize)],
    s: f64,
    mut descriptor: impl FnMut(usize, usize) -> Vec<f32>,
) -> SparseFeatures {
    let features = kept
        .iter()
        .map(|&(score, x, y)| Feature {
            x: (x as f64 + 0.5) / s - 0.5,
            y: (y as f64 + 0.5) / s - 0.5,
            scale: 1.0 / s,
            score,
            descriptor: descriptor(x, y),
        })
        .collect();
    SparseFeatures::new(features)
}

fn is_strict_max(blurred: &Grid<f32>, raw: &Grid<f32>, x: usize, y: usize, r: isize, b: f32, v: f32) -> bool {
    let (w, h) = (blurred.width() as isize, blurred.height() as isize);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let nb = *blurred.get(nx, ny);
            if nb > b || (nb == b && *raw.get(nx, ny) >= v) {
                return false;
            }
        }
    }
    true
}

/// Highest `n` candidates by score; ties keep row-major order.
pub fn top_n(mut cands: Vec<(f64, usize, usize)>, n: usize) -> Vec<(f64, usize, usize)> {
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    cands.truncate(n);
    cands
}

/// Runs `extractor` on every pyramid level and pools the sparse features.
pub fn extract_multiscale(
    img: &Grid<f32>,
    extractor: &dyn DenseExtractor,
    params: &ExtractParams,
) -> Result<SparseFeatures> {
    let mut out = SparseFeatures::default();
    for level in build_pyramid(img, params.scales_per_octave, params.min_side) {
        out.extend(extractor.extract_sparse(&level.image, level.scale, params)?);
    }
    Ok(out)
}
