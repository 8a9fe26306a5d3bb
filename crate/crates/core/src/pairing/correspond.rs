use super::{CorrespondenceField, GeoImage};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::stats::percentile;
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::num::NonZero;

pub const MAX_CORRESPONDENCES: usize = 90_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrespondenceParams {
    pub neighbours: usize,
    /// Search radius in units of σ.
    pub radius_sigmas: f64,
    /// Overrides the pixel-extent estimate of σ.
    pub sigma: Option<f64>,
    pub max_correspondences: usize,
    /// Side of the square structuring element of the shadow mask.
    pub kernel: usize,
}

impl Default for CorrespondenceParams {
    fn default() -> Self {
        Self {
            neighbours: 8,
            radius_sigmas: 3.0,
            sigma: None,
            max_correspondences: MAX_CORRESPONDENCES,
            kernel: 3,
        }
    }
}

/// Otsu threshold: pixels `<= t` form the dark class. A single-level
/// histogram gives `0`.
pub fn otsu_threshold(img: &Grid<u8>) -> u8 {
    let mut hist = [0f64; 256];
    for &v in img.data() {
        hist[v as usize] += 1.0;
    }
    let total = img.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, h)| i as f64 * h).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 0u8);
    for t in 0..255 {
        w0 += hist[t];
        sum0 += t as f64 * hist[t];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_t = t as u8;
        }
    }
    best_t
}

fn morph(mask: &Grid<bool>, kernel: usize, erode: bool) -> Grid<bool> {
    let r = (kernel / 2) as isize;
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    Grid::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let mut hit = erode;
        'outer: for yy in (y - r).max(0)..=(y + r).min(h - 1) {
            for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                if *mask.get(xx as usize, yy as usize) != erode {
                    hit = !erode;
                    break 'outer;
                }
            }
        }
        hit
    })
}

/// Binary erosion with a `kernel × kernel` element clipped to the image.
pub fn erode(mask: &Grid<bool>, kernel: usize) -> Grid<bool> {
    morph(mask, kernel, true)
}

/// Binary dilation with a `kernel × kernel` element clipped to the image.
pub fn dilate(mask: &Grid<bool>, kernel: usize) -> Grid<bool> {
    morph(mask, kernel, false)
}

/// Usable-pixel mask: `false` on large shadowed regions.
pub fn shadow_mask(img: &Grid<u8>, kernel: usize) -> Grid<bool> {
    let t = otsu_threshold(img);
    let dark = img.map(|&v| v <= t);
    let dark = erode(&dilate(&erode(&dark, kernel), kernel), kernel);
    dark.map(|d| !d)
}

fn extent_p90(img: &GeoImage) -> Option<f64> {
    if let Some(p) = img.pixel_extent_p90 {
        return Some(p);
    }
    let c = img.camera_center();
    let fx = img.intrinsics.fx;
    let ext: Vec<f64> = img
        .finite_coords()
        .step_by(7)
        .map(|(_, _, p)| {
            let d = nalgebra::Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) - c;
            d.norm() / fx
        })
        .collect();
    (!ext.is_empty()).then(|| percentile(ext, 90.0))
}

/// Kernel width σ used for correspondence search.
pub fn correspondence_sigma(a: &GeoImage, b: &GeoImage) -> Option<f64> {
    match (extent_p90(a), extent_p90(b)) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    }
}

/// Dense A→B correspondences from the two backplanes.
pub fn compute_correspondences(
    a: &GeoImage,
    b: &GeoImage,
    mask_a: &Grid<bool>,
    mask_b: &Grid<bool>,
    params: &CorrespondenceParams,
) -> Result<CorrespondenceField> {
    let (Some(ca), Some(_)) = (&a.coords, &b.coords) else {
        return Err(Error::Invalid("both images must be georeferenced".into()));
    };
    let sigma = params
        .sigma
        .or_else(|| correspondence_sigma(a, b))
        .ok_or(Error::NoCorrespondences)?;
    let mut pts = Vec::new();
    let mut pix = Vec::new();
    for (x, y, p) in b.finite_coords() {
        if *mask_b.get(x, y) {
            pts.push([p[0] as f64, p[1] as f64, p[2] as f64]);
            pix.push([x as f64, y as f64]);
        }
    }
    if pts.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&pts);
    let r2 = (params.radius_sigmas * sigma).powi(2);
    let k = NonZero::new(params.neighbours.max(1)).unwrap();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let w = ca.width();
    let rows: Vec<Vec<[f32; 2]>> = (0..ca.height())
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let p = ca.get(x, y);
                    if !*mask_a.get(x, y) || !p.iter().all(|v| v.is_finite()) {
                        return [f32::NAN; 2];
                    }
                    let q = [p[0] as f64, p[1] as f64, p[2] as f64];
                    let hits = tree.nearest_n_within::<SquaredEuclidean>(&q, r2, k, true);
                    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
                    for h in hits.iter().filter(|h| h.distance <= r2) {
                        let wt = (-h.distance * inv).exp();
                        let px = pix[h.item as usize];
                        sx += wt * px[0];
                        sy += wt * px[1];
                        sw += wt;
                    }
                    if sw > 0.0 {
                        [(sx / sw) as f32, (sy / sw) as f32]
                    } else {
                        [f32::NAN; 2]
                    }
                })
                .collect()
        })
        .collect();
    let mut field =
        CorrespondenceField { map: Grid::from_vec(w, ca.height(), rows.into_iter().flatten().collect()) };
    cap_correspondences(&mut field, params.max_correspondences);
    if field.count() == 0 {
        return Err(Error::NoCorrespondences);
    }
    Ok(field)
}

/// Keeps every `⌈n/cap⌉`-th valid entry in row-major order.
pub(crate) fn cap_correspondences(field: &mut CorrespondenceField, cap: usize) {
    let n = field.count();
    if n <= cap || cap == 0 {
        return;
    }
    let step = n.div_ceil(cap);
    let mut i = 0usize;
    for v in field.map.data_mut() {
        if v[0].is_finite() && v[1].is_finite() {
            if i % step != 0 {
                *v = [f32::NAN; 2];
            }
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::GeoImage;

    fn geo(coords: Grid<[f32; 3]>) -> GeoImage {
        let mut g = GeoImage::plain("g", Grid::new(coords.width(), coords.height(), 200u8));
        g.coords = Some(coords);
        g
    }

    fn all(w: usize, h: usize) -> Grid<bool> {
        Grid::new(w, h, true)
    }

    #[test]
    fn bright_and_black_masks() {
        assert!(shadow_mask(&Grid::new(9, 9, 200u8), 3).data().iter().all(|&u| u));
        assert!(shadow_mask(&Grid::new(9, 9, 0u8), 3).data().iter().all(|&u| !u));
    }

    #[test]
    fn single_dark_speck_removed() {
        let mut img = Grid::new(9, 9, 220u8);
        img.set(4, 4, 0);
        assert_eq!(otsu_threshold(&img), 0);
        assert!(shadow_mask(&img, 3).data().iter().all(|&u| u));
    }

    #[test]
    fn large_shadow_kept() {
        // dark 5×5 block survives erode-dilate-erode as its 3×3 core
        let img = Grid::from_fn(9, 9, |x, y| if (2..7).contains(&x) && (2..7).contains(&y) { 5 } else { 220 });
        let m = shadow_mask(&img, 3);
        let unusable: Vec<_> = (0..81).filter(|&i| !m.data()[i]).map(|i| (i % 9, i / 9)).collect();
        let expect: Vec<_> = (3..6).flat_map(|y| (3..6).map(move |x| (x, y))).collect();
        assert_eq!(unusable, expect);
    }

    #[test]
    fn exact_neighbour_gives_its_pixel() {
        let a = geo(Grid::from_vec(1, 1, vec![[5.0, 0.0, 0.0]]));
        let b = geo(Grid::from_fn(3, 1, |x, _| [x as f32 * 100.0 + 5.0 - 100.0, 0.0, 0.0]));
        let p = CorrespondenceParams { sigma: Some(1.0), ..Default::default() };
        let f = compute_correspondences(&a, &b, &all(1, 1), &all(3, 1), &p).unwrap();
        assert_eq!(f.at(0, 0), Some([1.0, 0.0]));
    }

    #[test]
    fn symmetric_neighbours_give_midpoint() {
        let a = geo(Grid::from_vec(1, 1, vec![[0.0, 0.0, 0.0]]));
        let b = geo(Grid::from_fn(3, 1, |x, _| match x {
            0 => [-1.0, 0.0, 0.0],
            1 => [f32::NAN; 3],
            _ => [1.0, 0.0, 0.0],
        }));
        let p = CorrespondenceParams { sigma: Some(1.0), ..Default::default() };
        let f = compute_correspondences(&a, &b, &all(1, 1), &all(3, 1), &p).unwrap();
        assert_eq!(f.at(0, 0), Some([1.0, 0.0]));
    }

    #[test]
    fn nothing_within_radius() {
        let a = geo(Grid::from_vec(2, 1, vec![[0.0, 0.0, 0.0], [50.0, 0.0, 0.0]]));
        let b = geo(Grid::from_vec(1, 1, vec![[50.0, 0.0, 0.0]]));
        let p = CorrespondenceParams { sigma: Some(1.0), ..Default::default() };
        let f = compute_correspondences(&a, &b, &all(2, 1), &all(1, 1), &p).unwrap();
        assert_eq!(f.at(0, 0), None);
        assert_eq!(f.at(1, 0), Some([0.0, 0.0]));
    }

    #[test]
    fn cap_keeps_every_kth() {
        let mut f = CorrespondenceField::identity(100, 10);
        cap_correspondences(&mut f, 300);
        // ⌈1000/300⌉ = 4 → indices 0, 4, ..., 996
        assert_eq!(f.count(), 250);
        assert!(f.at(4, 0).is_some() && f.at(5, 0).is_none());
    }
}
