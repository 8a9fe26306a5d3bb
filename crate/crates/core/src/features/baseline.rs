//! Reference extractor: Harris corner response for detection and
//! Gaussian-weighted gradient-orientation histograms as descriptors.

use super::extract::{select_keypoints, to_features};
use super::{l2_normalize, DenseExtractor, DenseFeatureMap, ExtractParams, SparseFeatures};
use crate::error::Result;
use crate::grid::Grid;
use rayon::prelude::*;
use std::f64::consts::TAU;

pub const DESCRIPTOR_DIM: usize = 128;
const CELLS: usize = 4;
const CELL: usize = 4;
const BINS: usize = 8;
const HALF: isize = (CELLS * CELL / 2) as isize;
const HARRIS_K: f64 = 0.04;
const TENSOR_SIGMA: f64 = 1.5;
const WINDOW_SIGMA: f64 = 8.0;

fn gradients(img: &Grid<f32>) -> (Grid<f64>, Grid<f64>) {
    let p = |x: usize, y: usize, dx: isize, dy: isize| img.get_clamped(x as isize + dx, y as isize + dy) as f64;
    let gx = Grid::from_fn(img.width(), img.height(), |x, y| {
        (p(x, y, 1, -1) + 2.0 * p(x, y, 1, 0) + p(x, y, 1, 1) - p(x, y, -1, -1) - 2.0 * p(x, y, -1, 0) - p(x, y, -1, 1))
            / 8.0
    });
    let gy = Grid::from_fn(img.width(), img.height(), |x, y| {
        (p(x, y, -1, 1) + 2.0 * p(x, y, 0, 1) + p(x, y, 1, 1) - p(x, y, -1, -1) - 2.0 * p(x, y, 0, -1) - p(x, y, 1, -1))
            / 8.0
    });
    (gx, gy)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn blur(g: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |g: &Grid<f64>, x: isize, y: isize| {
        let xc = x.clamp(0, g.width() as isize - 1) as usize;
        let yc = y.clamp(0, g.height() as isize - 1) as usize;
        *g.get(xc, yc)
    };
    let h = Grid::from_fn(g.width(), g.height(), |x, y| {
        kernel.iter().enumerate().map(|(i, k)| k * clamp(g, x as isize + i as isize - r, y as isize)).sum()
    });
    Grid::from_fn(g.width(), g.height(), |x, y| {
        kernel.iter().enumerate().map(|(i, k)| k * clamp(&h, x as isize, y as isize + i as isize - r)).sum()
    })
}

/// Raw Harris response `det(M) − k·tr(M)²` of the Gaussian-smoothed
/// structure tensor built from Sobel gradients.
pub fn harris_response(img: &Grid<f32>) -> Grid<f64> {
    let (gx, gy) = gradients(img);
    let kernel = gaussian_kernel(TENSOR_SIGMA);
    let ixx = blur(&Grid::from_fn(img.width(), img.height(), |x, y| gx.get(x, y).powi(2)), &kernel);
    let iyy = blur(&Grid::from_fn(img.width(), img.height(), |x, y| gy.get(x, y).powi(2)), &kernel);
    let ixy = blur(&Grid::from_fn(img.width(), img.height(), |x, y| gx.get(x, y) * gy.get(x, y)), &kernel);
    Grid::from_fn(img.width(), img.height(), |x, y| {
        let (a, b, c) = (*ixx.get(x, y), *iyy.get(x, y), *ixy.get(x, y));
        a * b - c * c - HARRIS_K * (a + b).powi(2)
    })
}

/// Positive Harris response scaled so that its maximum is 1.
fn detection_map(img: &Grid<f32>) -> Grid<f32> {
    let r = harris_response(img);
    let max = r.data().iter().cloned().fold(0.0f64, f64::max);
    // Responses below this are round-off on flat or linear-ramp regions.
    if max <= 1e-9 {
        return Grid::new(img.width(), img.height(), 0.0);
    }
    r.map(|v| (v.max(0.0) / max) as f32)
}

/// Per-pixel gradient magnitude split across the two nearest orientation bins.
struct OrientationField {
    width: usize,
    height: usize,
    /// `(bin, weight)` pairs, two per pixel.
    votes: Vec<[(u8, f32); 2]>,
}

impl OrientationField {
    fn new(img: &Grid<f32>) -> Self {
        let (gx, gy) = gradients(img);
        let votes = gx
            .data()
            .iter()
            .zip(gy.data())
            .map(|(&dx, &dy)| {
                let m = (dx * dx + dy * dy).sqrt();
                let t = dy.atan2(dx).rem_euclid(TAU) / TAU * BINS as f64;
                let b0 = (t.floor() as usize) % BINS;
                let f = t - t.floor();
                [(b0 as u8, (m * (1.0 - f)) as f32), (((b0 + 1) % BINS) as u8, (m * f) as f32)]
            })
            .collect();
        Self { width: img.width(), height: img.height(), votes }
    }

    fn descriptor(&self, x: usize, y: usize, weights: &[f32]) -> Vec<f32> {
        let mut d = vec![0f32; DESCRIPTOR_DIM];
        for (j, dy) in (-HALF..HALF).enumerate() {
            let yy = (y as isize + dy).clamp(0, self.height as isize - 1) as usize;
            let row = j / CELL;
            for (i, dx) in (-HALF..HALF).enumerate() {
                let xx = (x as isize + dx).clamp(0, self.width as isize - 1) as usize;
                let w = weights[j] * weights[i];
                let base = (row * CELLS + i / CELL) * BINS;
                for (b, m) in self.votes[yy * self.width + xx] {
                    d[base + b as usize] += w * m;
                }
            }
        }
        l2_normalize(&mut d);
        d
    }
}

fn window_weights() -> Vec<f32> {
    (-HALF..HALF)
        .map(|d| {
            let c = d as f64 + 0.5;
            (-(c * c) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp() as f32
        })
        .collect()
}

/// Dense baseline map for an 8-bit image.
pub fn baseline_dense_extract(img: &Grid<u8>) -> DenseFeatureMap {
    BaselineExtractor.extract(&img.to_f32(), 1.0).expect("baseline map is well-formed")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineExtractor;

impl DenseExtractor for BaselineExtractor {
    fn extract(&self, img: &Grid<f32>, scale: f64) -> Result<DenseFeatureMap> {
        let detection = detection_map(img);
        let field = OrientationField::new(img);
        let weights = window_weights();
        let w = img.width();
        let desc: Vec<f32> = (0..img.height())
            .into_par_iter()
            .flat_map_iter(|y| {
                let field = &field;
                let weights = &weights;
                (0..w).flat_map(move |x| field.descriptor(x, y, weights))
            })
            .collect();
        DenseFeatureMap::new(DESCRIPTOR_DIM, desc, detection, None, scale)
    }

    fn extract_sparse(&self, img: &Grid<f32>, scale: f64, params: &ExtractParams) -> Result<SparseFeatures> {
        let detection = detection_map(img);
        let kept = select_keypoints(&detection, None, params);
        let field = OrientationField::new(img);
        let weights = window_weights();
        Ok(to_features(&kept, scale, |x, y| field.descriptor(x, y, &weights)))
    }
}
