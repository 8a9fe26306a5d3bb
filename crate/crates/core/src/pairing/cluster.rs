use super::GeoImage;
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::num::NonZero;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateParams {
    pub clusters_per_image: usize,
    pub kmeans_iterations: usize,
    /// Points per image fed to k-means; larger backplanes are strided.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for CandidateParams {
    fn default() -> Self {
        Self { clusters_per_image: 4, kmeans_iterations: 20, max_points: 20_000, seed: 0 }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Lloyd's k-means with k-means++ seeding. Returns at most `k` centroids.
pub fn kmeans<R: Rng>(points: &[[f64; 3]], k: usize, iterations: usize, rng: &mut R) -> Vec<[f64; 3]> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..iterations {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = (0..centroids.len())
                .min_by(|&i, &j| dist2(p, &centroids[i]).total_cmp(&dist2(p, &centroids[j])))
                .unwrap();
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 4]; centroids.len()];
        for (a, p) in assign.iter().zip(points) {
            let s = &mut sums[*a];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
            s[3] += 1.0;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s[3] > 0.0 {
                *c = [s[0] / s[3], s[1] / s[3], s[2] / s[3]];
            }
        }
    }
    centroids
}

/// Proposes image pairs whose pixel clusters are mutual spatial neighbours.
///
/// Returns index pairs `(i, j)` with `i < j`, shuffled with the seed.
/// Images without finite coordinates are skipped.
pub fn build_pair_candidates(images: &[GeoImage], params: &CandidateParams) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids: Vec<[f64; 3]> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    for (idx, img) in images.iter().enumerate() {
        let pts: Vec<[f64; 3]> =
            img.finite_coords().map(|(_, _, p)| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
        if pts.is_empty() {
            log::warn!("image {} has no finite coordinates, skipped", img.id);
            continue;
        }
        let stride = pts.len().div_ceil(params.max_points.max(1));
        let sample: Vec<[f64; 3]> = pts.into_iter().step_by(stride).collect();
        for c in kmeans(&sample, params.clusters_per_image, params.kmeans_iterations, &mut rng) {
            centroids.push(c);
            owner.push(idx);
        }
    }
    if centroids.is_empty() {
        return Vec::new();
    }
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&centroids);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (ci, c) in centroids.iter().enumerate() {
        let me = &images[owner[ci]].id;
        let mut qty = params.clusters_per_image + 1;
        loop {
            let q = qty.min(centroids.len());
            let hits = tree.nearest_n::<SquaredEuclidean>(c, NonZero::new(q).unwrap());
            if let Some(h) = hits.iter().find(|h| images[owner[h.item as usize]].id != *me) {
                let (i, j) = (owner[ci], owner[h.item as usize]);
                let key = (i.min(j), i.max(j));
                if seen.insert(key) {
                    out.push(key);
                }
                break;
            }
            if q == centroids.len() {
                break;
            }
            qty *= 2;
        }
    }
    out.sort_unstable();
    out.shuffle(&mut rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn patch(id: &str, offset: f32) -> GeoImage {
        let mut g = GeoImage::plain(id, Grid::new(16, 16, 0u8));
        g.coords = Some(Grid::from_fn(16, 16, |x, y| [x as f32 + offset, y as f32, 0.0]));
        g
    }

    #[test]
    fn single_image_has_no_candidates() {
        assert!(build_pair_candidates(&[patch("a", 0.0)], &CandidateParams::default()).is_empty());
    }

    #[test]
    fn overlapping_patches_pair_up() {
        let imgs = [patch("a", 0.0), patch("b", 2.0)];
        assert_eq!(build_pair_candidates(&imgs, &CandidateParams::default()), vec![(0, 1)]);
    }

    #[test]
    fn same_identity_never_pairs() {
        let imgs = [patch("a", 0.0), patch("a", 0.0)];
        assert!(build_pair_candidates(&imgs, &CandidateParams::default()).is_empty());
    }

    #[test]
    fn candidates_are_deterministic() {
        let imgs: Vec<_> = (0..6).map(|i| patch(&format!("i{i}"), i as f32 * 3.0)).collect();
        let p = CandidateParams { seed: 5, ..Default::default() };
        assert_eq!(build_pair_candidates(&imgs, &p), build_pair_candidates(&imgs, &p));
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut pts = Vec::new();
        for i in 0..50 {
            pts.push([i as f64 * 0.01, 0.0, 0.0]);
            pts.push([100.0 + i as f64 * 0.01, 0.0, 0.0]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = kmeans(&pts, 2, 20, &mut rng);
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((c[0][0] - 0.245).abs() < 1e-9 && (c[1][0] - 100.245).abs() < 1e-9);
    }
}
