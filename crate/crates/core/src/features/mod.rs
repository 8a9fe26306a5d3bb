//! Dense feature maps, image pyramids, sparse extraction and descriptor
//! matching.

mod baseline;
mod extract;
mod matching;
mod pyramid;

pub use baseline::{baseline_dense_extract, harris_response, BaselineExtractor, DESCRIPTOR_DIM};
pub use extract::{extract_multiscale, extract_sparse, select_keypoints, top_n, ExtractParams};
pub use matching::{
    distance_matrix, label_matches, match_mutual_nn, multiscale_match, mutual_nn_from_matrix, Match, MatchSet,
    MultiscaleMatch,
};
pub use pyramid::{build_pyramid, PyramidLevel};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-pixel descriptors plus detection maps at one pyramid scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMap {
    width: usize,
    height: usize,
    dim: usize,
    /// Row-major `H × W × D`.
    descriptors: Vec<f32>,
    pub detection: Grid<f32>,
    pub reliability: Option<Grid<f32>>,
    /// Scale of the source image relative to the original image.
    pub scale: f64,
}

impl DenseFeatureMap {
    pub fn new(
        dim: usize,
        descriptors: Vec<f32>,
        detection: Grid<f32>,
        reliability: Option<Grid<f32>>,
        scale: f64,
    ) -> Result<Self> {
        let (width, height) = (detection.width(), detection.height());
        if dim == 0 || descriptors.len() != width * height * dim {
            return Err(Error::Invalid(format!(
                "descriptor buffer of length {} does not match {width}x{height}x{dim}",
                descriptors.len()
            )));
        }
        if let Some(r) = &reliability {
            if !r.same_shape(&detection) {
                return Err(Error::Invalid("reliability map shape differs from detection map".into()));
            }
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::OutOfRange { name: "scale".into(), value: scale.to_string() });
        }
        Ok(Self { width, height, dim, descriptors, detection, reliability, scale })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptors(&self) -> &[f32] {
        &self.descriptors
    }

    pub fn descriptor(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.dim;
        &self.descriptors[i..i + self.dim]
    }

    pub fn descriptor_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.dim;
        &mut self.descriptors[i..i + self.dim]
    }

    /// Checks unit descriptor norms and detection ranges.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.descriptors.chunks_exact(self.dim).enumerate() {
            let n = d.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-4 {
                return Err(Error::Invalid(format!(
                    "descriptor at pixel ({}, {}) has norm {n}",
                    i % self.width,
                    i / self.width
                )));
            }
        }
        let in_unit = |g: &Grid<f32>| g.data().iter().all(|v| (0.0..=1.0).contains(v));
        if !in_unit(&self.detection) || !self.reliability.as_ref().is_none_or(in_unit) {
            return Err(Error::Invalid("detection values outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Normalizes `v` to unit length; zero vectors become the uniform unit vector.
pub fn l2_normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if n > 1e-12 {
        v.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
    } else if !v.is_empty() {
        let u = (1.0 / (v.len() as f64).sqrt()) as f32;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// One keypoint in the original image frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub x: f64,
    pub y: f64,
    /// Inverse of the pyramid scale the feature was detected at.
    pub scale: f64,
    pub score: f64,
    pub descriptor: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    pub features: Vec<Feature>,
}

impl SparseFeatures {
    pub fn new(features: Vec<Feature>) -> Self {
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn extend(&mut self, other: SparseFeatures) {
        self.features.extend(other.features);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Feature> {
        self.features.iter()
    }
}

/// Source of dense feature maps for one pyramid level.
pub trait DenseExtractor: Sync {
    fn extract(&self, img: &Grid<f32>, scale: f64) -> Result<DenseFeatureMap>;

    /// Sparse features of one level. Implementations may skip computing
    /// descriptors that extraction would discard.
    fn extract_sparse(&self, img: &Grid<f32>, scale: f64, params: &ExtractParams) -> Result<SparseFeatures> {
        Ok(extract_sparse(&self.extract(img, scale)?, params))
    }
}
