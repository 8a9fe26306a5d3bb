//! Ground-truth image pairs from georeferenced imagery.
//!
//! Candidate pairs come from clustering pixel coordinates and matching
//! centroids across images. Accepted pairs get dense correspondences from a
//! kd-tree over the partner's backplane, with shadowed pixels masked out.

mod cluster;
mod correspond;
mod rotate;
mod synthetic;

pub use cluster::{build_pair_candidates, kmeans, CandidateParams};
pub use correspond::{
    compute_correspondences, erode, dilate, otsu_threshold, shadow_mask, CorrespondenceParams,
    MAX_CORRESPONDENCES,
};
pub use rotate::{normalize_rotation, upright_angle, RotationOutcome};
pub use synthetic::{make_synthetic_pair, planar_geometry, PlanarGeometry};

use crate::augment::signed_sq_uniform;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::grid::Grid;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

/// Per-pixel body-fixed coordinates; NaN marks background.
pub type Backplane = Grid<[f32; 3]>;

#[derive(Debug, Clone, PartialEq)]
pub struct GeoImage {
    pub id: String,
    pub image: Grid<u8>,
    pub coords: Option<Backplane>,
    pub intrinsics: Intrinsics,
    /// Unit viewing direction in the body frame.
    pub boresight: Vector3<f64>,
    pub cam_distance: f64,
    /// 90th percentile of the per-pixel ground footprint.
    pub pixel_extent_p90: Option<f64>,
    pub light_dir: Option<Vector3<f64>>,
}

impl GeoImage {
    /// An image without georeferencing: centered pinhole with a unit focal
    /// length of `max(w, h)` pixels.
    pub fn plain(id: impl Into<String>, image: Grid<u8>) -> Self {
        let f = image.width().max(image.height()) as f64;
        let intrinsics = Intrinsics::new(
            f,
            f,
            (image.width() as f64 - 1.0) / 2.0,
            (image.height() as f64 - 1.0) / 2.0,
        );
        Self {
            id: id.into(),
            image,
            coords: None,
            intrinsics,
            boresight: Vector3::z(),
            cam_distance: 1.0,
            pixel_extent_p90: None,
            light_dir: None,
        }
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn validate(&self) -> Result<()> {
        if (self.boresight.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("{}: boresight is not a unit vector", self.id)));
        }
        if !(self.cam_distance > 0.0) {
            return Err(Error::Invalid(format!("{}: cam_distance must be positive", self.id)));
        }
        if let Some(c) = &self.coords {
            if !c.same_shape(&self.image) {
                return Err(Error::Invalid(format!("{}: backplane shape mismatch", self.id)));
            }
        }
        Ok(())
    }

    /// Camera center in the body frame.
    pub fn camera_center(&self) -> Vector3<f64> {
        -self.cam_distance * self.boresight
    }

    pub fn finite_coords(&self) -> impl Iterator<Item = (usize, usize, [f32; 3])> + '_ {
        let w = self.width();
        self.coords.iter().flat_map(move |c| {
            c.data().iter().enumerate().filter_map(move |(i, p)| {
                p.iter().all(|v| v.is_finite()).then_some((i % w, i / w, *p))
            })
        })
    }
}

/// Dense map from pixels of image A to pixel coordinates in image B.
#[derive(Debug, Clone)]
pub struct CorrespondenceField {
    pub map: Grid<[f32; 2]>,
}

/// Missing entries (NaN) compare equal to each other.
impl PartialEq for CorrespondenceField {
    fn eq(&self, other: &Self) -> bool {
        self.map.same_shape(&other.map)
            && self.map.data().iter().zip(other.map.data()).all(|(a, b)| {
                a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
            })
    }
}

impl CorrespondenceField {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { map: Grid::new(width, height, [f32::NAN; 2]) }
    }

    pub fn identity(width: usize, height: usize) -> Self {
        Self { map: Grid::from_fn(width, height, |x, y| [x as f32, y as f32]) }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<[f32; 2]> {
        let v = *self.map.get(x, y);
        (v[0].is_finite() && v[1].is_finite()).then_some(v)
    }

    pub fn count(&self) -> usize {
        self.map.data().iter().filter(|v| v[0].is_finite() && v[1].is_finite()).count()
    }

    /// Valid entries as `(xa, ya, xb, yb)` in row-major order.
    pub fn valid(&self) -> Vec<(usize, usize, [f32; 2])> {
        let w = self.map.width();
        self.map
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| v[0].is_finite() && v[1].is_finite())
            .map(|(i, v)| (i % w, i / w, *v))
            .collect()
    }

    /// Invalidates entries outside a `w × h` partner image, allowing `tol` px.
    pub fn clip_to(&mut self, w: usize, h: usize, tol: f32) {
        for v in self.map.data_mut() {
            let inside = v[0] >= -tol
                && v[1] >= -tol
                && v[0] <= w as f32 - 1.0 + tol
                && v[1] <= h as f32 - 1.0 + tol;
            if !inside {
                *v = [f32::NAN; 2];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    Real,
    SyntheticHomography,
    SyntheticRendered,
}

impl fmt::Display for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Real => "real",
            Self::SyntheticHomography => "synthetic-homography",
            Self::SyntheticRendered => "synthetic-rendered",
        })
    }
}

impl FromStr for PairSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Self::Real),
            "synthetic-homography" => Ok(Self::SyntheticHomography),
            "synthetic-rendered" => Ok(Self::SyntheticRendered),
            _ => Err(Error::Invalid(format!("unknown pair source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub a: GeoImage,
    pub b: GeoImage,
    pub corr_ab: CorrespondenceField,
    /// View-angle change in degrees.
    pub phi: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub source: PairSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Easy => "easy",
            Self::Hard => "hard",
        })
    }
}

pub fn classify_difficulty(pair: &ImagePair) -> Result<Difficulty> {
    classify_values(pair.source, pair.phi, pair.alpha, pair.beta)
}

pub fn classify_values(
    source: PairSource,
    phi: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<Difficulty> {
    let easy = match source {
        PairSource::SyntheticRendered => {
            let a = alpha.ok_or(Error::MissingMetadata("alpha"))?;
            let b = beta.ok_or(Error::MissingMetadata("beta"))?;
            a.abs() < 20.0 && b.abs() < 30.0
        }
        PairSource::Real | PairSource::SyntheticHomography => {
            phi.ok_or(Error::MissingMetadata("phi"))?.abs() < 15.0
        }
    };
    Ok(if easy { Difficulty::Easy } else { Difficulty::Hard })
}

/// Angle in degrees between two boresights.
pub fn boresight_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceptParams {
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    pub max_distance_ratio: f64,
    pub max_pairs_per_image: usize,
}

impl Default for AcceptParams {
    fn default() -> Self {
        Self { min_angle_deg: 10.0, max_angle_deg: 30.0, max_distance_ratio: 1.5, max_pairs_per_image: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairDecision {
    Accept,
    AngleOutOfRange,
    DistanceRatio,
    ImageSaturated,
    Duplicate,
}

/// Bookkeeping shared by all acceptance decisions of one pairing run.
#[derive(Debug, Clone, Default)]
pub struct PairingState {
    counts: HashMap<String, usize>,
    accepted: HashSet<(String, String)>,
}

impl PairingState {
    pub fn pair_count(&self, id: &str) -> usize {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn accepted(&self) -> usize {
        self.accepted.len()
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Applies the geometric acceptance rules and records accepted pairs.
pub fn accept_pair(
    a: &GeoImage,
    b: &GeoImage,
    params: &AcceptParams,
    state: &mut PairingState,
) -> PairDecision {
    let angle = boresight_angle(&a.boresight, &b.boresight);
    if !(params.min_angle_deg..=params.max_angle_deg).contains(&angle) {
        return PairDecision::AngleOutOfRange;
    }
    let ratio = a.cam_distance.max(b.cam_distance) / a.cam_distance.min(b.cam_distance);
    if ratio > params.max_distance_ratio {
        return PairDecision::DistanceRatio;
    }
    let key = pair_key(&a.id, &b.id);
    if a.id == b.id || state.accepted.contains(&key) {
        return PairDecision::Duplicate;
    }
    if state.pair_count(&a.id) >= params.max_pairs_per_image
        || state.pair_count(&b.id) >= params.max_pairs_per_image
    {
        return PairDecision::ImageSaturated;
    }
    *state.counts.entry(a.id.clone()).or_default() += 1;
    *state.counts.entry(b.id.clone()).or_default() += 1;
    state.accepted.insert(key);
    PairDecision::Accept
}

/// Body coordinates of a sphere of radius `radius` centered at the body
/// origin, ray-cast through every pixel of a camera at `pose`.
pub fn sphere_backplane(pose: &Pose, k: &Intrinsics, w: usize, h: usize, radius: f64) -> Backplane {
    let c = pose.center();
    let inv = pose.rotation.inverse();
    Grid::from_fn(w, h, |x, y| {
        let d = inv * k.bearing(x as f64, y as f64);
        let b = c.dot(&d);
        let disc = b * b - (c.norm_squared() - radius * radius);
        if disc < 0.0 {
            return [f32::NAN; 3];
        }
        let s = -b - disc.sqrt();
        if s <= 0.0 {
            return [f32::NAN; 3];
        }
        let p = c + d * s;
        [p.x as f32, p.y as f32, p.z as f32]
    })
}

/// Draws light-direction perturbation angles `(α, β)` in degrees.
pub fn sample_light_perturbation(alpha_max: f64, beta_max: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_light(&mut rng, alpha_max, beta_max)
}

fn draw_light<R: Rng>(rng: &mut R, alpha_max: f64, beta_max: f64) -> (f64, f64) {
    (signed_sq_uniform(rng, alpha_max), signed_sq_uniform(rng, beta_max))
}

/// Like [`sample_light_perturbation`] but redraws until `valid` accepts the
/// angles, for at most `max_tries` draws.
pub fn sample_light_perturbation_with(
    alpha_max: f64,
    beta_max: f64,
    seed: u64,
    max_tries: usize,
    mut valid: impl FnMut(f64, f64) -> bool,
) -> Option<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..max_tries).map(|_| draw_light(&mut rng, alpha_max, beta_max)).find(|&(a, b)| valid(a, b))
}
