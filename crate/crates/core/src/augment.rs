//! Training-data augmentation and random homographies.
//!
//! Geometric steps are composed as pixel-space transforms; images are
//! resampled once with bilinear interpolation and replicated borders, and the
//! correspondence field is pushed through the same transforms.

use crate::error::{Error, Result};
use crate::geometry::{Homography, Intrinsics};
use crate::grid::Grid;
use crate::pairing::{CorrespondenceField, GeoImage, ImagePair};
use nalgebra::Matrix3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Uniform pixel noise amplitude as a fraction of full scale.
    pub lambda_n: f64,
    /// Maximum brightness gain.
    pub lambda_g: f64,
    /// Maximum rotation in degrees.
    pub lambda_r: f64,
    /// Maximum projection coefficient.
    pub lambda_p: f64,
    /// Pyramid scales per octave.
    pub s: u32,
    pub short_edge_min: usize,
    pub short_edge_max: usize,
    pub lambda_g_st: f64,
    pub lambda_sigma_st: f64,
    /// Square crop side; `None` crops to the scaled short edge.
    pub crop_size: Option<usize>,
    pub flip_probability: f64,
    pub max_crop_tries: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            lambda_n: 0.1,
            lambda_g: 1.5,
            lambda_r: 10.0,
            lambda_p: 0.5,
            s: 4,
            short_edge_min: 256,
            short_edge_max: 1024,
            lambda_g_st: 1.1,
            lambda_sigma_st: 0.015,
            crop_size: None,
            flip_probability: 0.5,
            max_crop_tries: 10,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_g < 1.0 || !(0.0..=1.0).contains(&self.lambda_n) || self.s < 1 {
            return Err(Error::Invalid("augment params out of range".into()));
        }
        if self.short_edge_min == 0 || self.short_edge_min > self.short_edge_max {
            return Err(Error::Invalid("bad short-edge range".into()));
        }
        Ok(())
    }

    /// Pyramid scale step `2^(1/s)`.
    pub fn pyramid_factor(&self) -> f64 {
        2f64.powf(1.0 / self.s as f64)
    }
}

/// Signed draw whose square is uniform: `u ~ U(−m², m²)`, returns `sign(u)·√|u|`.
pub fn signed_sq_uniform<R: Rng + ?Sized>(rng: &mut R, max: f64) -> f64 {
    let m2 = max * max;
    if m2 <= 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random_range(-m2..m2);
    u.signum() * u.abs().sqrt()
}

/// Gain with `ln g ~ U(−ln λ, ln λ)`.
pub fn random_gain<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let l = lambda.ln();
    if l <= 0.0 {
        return 1.0;
    }
    rng.random_range(-l..l).exp()
}

fn projection_coeff<R: Rng + ?Sized>(rng: &mut R, lambda_p: f64) -> f64 {
    let positive = rng.random_bool(0.5);
    let bound = if positive { lambda_p * lambda_p } else { (1.0 / (lambda_p + 1.0) - 1.0).powi(2) };
    if bound <= 0.0 {
        return 0.0;
    }
    let v = rng.random_range(0.0..bound).sqrt();
    if positive {
        v
    } else {
        -v
    }
}

/// The raw rotation-projection matrix `R(φ)·P(p1/w, p2/h)` and its angle.
pub fn sample_homography_raw<R: Rng + ?Sized>(
    rng: &mut R,
    w: usize,
    h: usize,
    lambda_r: f64,
    lambda_p: f64,
) -> (Matrix3<f64>, f64) {
    let phi = signed_sq_uniform(rng, lambda_r);
    let p1 = projection_coeff(rng, lambda_p);
    let p2 = projection_coeff(rng, lambda_p);
    let (s, c) = phi.to_radians().sin_cos();
    let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let proj = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, p1 / w as f64, p2 / h as f64, 1.0);
    (rot * proj, phi)
}

/// Random homography on pixel coordinates of a `w × h` image. The sampled
/// matrix acts on coordinates centered on the image center.
pub fn sample_homography(w: usize, h: usize, lambda_r: f64, lambda_p: f64, seed: u64) -> Homography {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    centered_homography(&mut rng, w, h, lambda_r, lambda_p)
}

pub(crate) fn centered_homography<R: Rng + ?Sized>(
    rng: &mut R,
    w: usize,
    h: usize,
    lambda_r: f64,
    lambda_p: f64,
) -> Homography {
    let (m, _) = sample_homography_raw(rng, w, h, lambda_r, lambda_p);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let to = Matrix3::new(1.0, 0.0, cx, 0.0, 1.0, cy, 0.0, 0.0, 1.0);
    let from = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
    Homography::new(to * m * from)
}

/// Resamples `src` into a `w × h` canvas; `dst_to_src` maps output pixels to
/// source pixels.
pub fn warp(src: &Grid<f32>, dst_to_src: &Homography, w: usize, h: usize) -> Grid<f32> {
    Grid::from_fn(w, h, |x, y| match dst_to_src.apply(x as f64, y as f64) {
        Some((sx, sy)) => src.sample(sx, sy),
        None => src.sample(-1.0, -1.0),
    })
}

/// Pixel-center-preserving scale from `(w, h)` to `(nw, nh)`.
pub fn scale_transform(w: usize, h: usize, nw: usize, nh: usize) -> Homography {
    let sx = nw as f64 / w as f64;
    let sy = nh as f64 / h as f64;
    Homography::affine(sx, sy, 0.5 * sx - 0.5, 0.5 * sy - 0.5)
}

fn flip_transform(w: usize) -> Homography {
    Homography::affine(-1.0, 1.0, w as f64 - 1.0, 0.0)
}

fn crop_transform(x0: usize, y0: usize) -> Homography {
    Homography::affine(1.0, 1.0, -(x0 as f64), -(y0 as f64))
}

fn scaled_dims(w: usize, h: usize, factor: f64) -> (usize, usize) {
    (((w as f64 * factor).round() as usize).max(1), ((h as f64 * factor).round() as usize).max(1))
}

/// Maps the field of `a → b` through `ta` (on A) and `tb` (on B) into an
/// output field of size `w × h`.
pub fn transform_field(
    corr: &CorrespondenceField,
    ta: &Homography,
    tb: &Homography,
    w: usize,
    h: usize,
) -> CorrespondenceField {
    let inv = ta.inverse().expect("invertible transform");
    let map = Grid::from_fn(w, h, |x, y| {
        let Some((sx, sy)) = inv.apply(x as f64, y as f64) else {
            return [f32::NAN; 2];
        };
        let v = corr.map.sample_strict(sx, sy);
        if !v[0].is_finite() {
            return v;
        }
        match tb.apply(v[0] as f64, v[1] as f64) {
            Some((bx, by)) => [bx as f32, by as f32],
            None => [f32::NAN; 2],
        }
    });
    CorrespondenceField { map }
}

fn add_noise<R: Rng + ?Sized>(img: &mut Grid<f32>, rng: &mut R, amplitude: f64) {
    if amplitude <= 0.0 {
        return;
    }
    let a = (amplitude * 255.0) as f32;
    for v in img.data_mut() {
        *v = (*v + rng.random_range(-a..a)).clamp(0.0, 255.0);
    }
}

fn apply_gain(img: &mut Grid<f32>, g: f64) {
    if g == 1.0 {
        return;
    }
    for v in img.data_mut() {
        *v = (*v * g as f32).clamp(0.0, 255.0);
    }
}

/// Ratio of B to A coordinate spread over valid correspondences.
pub fn true_scale(corr: &CorrespondenceField) -> Option<f64> {
    let v = corr.valid();
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let (mut ma, mut mb) = ([0.0; 2], [0.0; 2]);
    for (x, y, b) in &v {
        ma[0] += *x as f64;
        ma[1] += *y as f64;
        mb[0] += b[0] as f64;
        mb[1] += b[1] as f64;
    }
    for m in ma.iter_mut().chain(mb.iter_mut()) {
        *m /= n;
    }
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, y, b) in &v {
        sa += (*x as f64 - ma[0]).powi(2) + (*y as f64 - ma[1]).powi(2);
        sb += (b[0] as f64 - mb[0]).powi(2) + (b[1] as f64 - mb[1]).powi(2);
    }
    (sa > 0.0).then(|| (sb / sa).sqrt())
}

/// Count of points per pixel on a `w × h` grid, as a summed-area table of
/// size `(w + 1) × (h + 1)`.
fn integral_counts(points: &[(f64, f64)], w: usize, h: usize) -> Vec<u64> {
    let mut counts = vec![0u64; w * h];
    for &(x, y) in points {
        let (xi, yi) = (x.round(), y.round());
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h {
            counts[yi as usize * w + xi as usize] += 1;
        }
    }
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += counts[y * w + x];
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    sat
}

/// Points inside every `cw × ch` window, indexed by window origin.
fn window_counts(points: &[(f64, f64)], w: usize, h: usize, cw: usize, ch: usize) -> Vec<u64> {
    let sat = integral_counts(points, w, h);
    let (nx, ny) = (w - cw + 1, h - ch + 1);
    let at = |x: usize, y: usize| sat[y * (w + 1) + x];
    let mut out = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            out.push(at(x + cw, y + ch) + at(x, y) - at(x + cw, y) - at(x, y + ch));
        }
    }
    out
}

fn argmax_window(counts: &[u64], nx: usize) -> (usize, usize, u64) {
    let mut best = (0usize, 0u64);
    for (i, &c) in counts.iter().enumerate() {
        if c > best.1 {
            best = (i, c);
        }
    }
    (best.0 % nx, best.0 / nx, best.1)
}

fn sample_window<R: Rng + ?Sized>(counts: &[u64], nx: usize, rng: &mut R) -> Option<(usize, usize)> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut t = rng.random_range(0..total);
    for (i, &c) in counts.iter().enumerate() {
        if t < c {
            return Some((i % nx, i / nx));
        }
        t -= c;
    }
    None
}

/// Record of the random choices of one augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRecord {
    /// Original A pixel → augmented A pixel.
    pub transform_a: Homography,
    /// Original B pixel → augmented B pixel.
    pub transform_b: Homography,
    pub true_scale: f64,
    pub k_md: f64,
    pub flipped: bool,
    pub gain: f64,
}

fn transform_intrinsics(k: &Intrinsics, t: &Homography) -> Intrinsics {
    let m = t.matrix();
    Intrinsics::new(k.fx * m[(0, 0)], k.fy * m[(1, 1)], m[(0, 0)] * k.cx + m[(0, 2)], m[(1, 1)] * k.cy + m[(1, 2)])
}

fn derived_image(src: &GeoImage, image: Grid<u8>, t: &Homography) -> GeoImage {
    GeoImage {
        id: src.id.clone(),
        image,
        coords: None,
        intrinsics: transform_intrinsics(&src.intrinsics, t),
        boresight: src.boresight,
        cam_distance: src.cam_distance,
        pixel_extent_p90: src.pixel_extent_p90.map(|p| p / t.matrix()[(0, 0)].abs()),
        light_dir: src.light_dir,
    }
}

/// Paired augmentation pipeline for training descriptors on image pairs.
pub fn augment_pair(pair: &ImagePair, params: &AugmentParams, seed: u64) -> Result<(ImagePair, AugmentRecord)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wa, ha) = (pair.a.width(), pair.a.height());
    let (wb, hb) = (pair.b.width(), pair.b.height());
    let ts = true_scale(&pair.corr_ab).ok_or(Error::NoCorrespondences)?;

    // 1: scale A to a random short edge
    let target = rng.random_range(params.short_edge_min..=params.short_edge_max) as f64;
    let fa = target / wa.min(ha) as f64;
    let (wa1, ha1) = scaled_dims(wa, ha, fa);
    let sa = scale_transform(wa, ha, wa1, ha1);

    // 2: scale B so the residual scale difference is k_md
    let half_ln_k = 0.5 * params.pyramid_factor().ln();
    let k_md = if half_ln_k > 0.0 { rng.random_range(-half_ln_k..=half_ln_k).exp() } else { 1.0 };
    let fb = fa / ts * k_md;
    let (wb1, hb1) = scaled_dims(wb, hb, fb);
    let sb = scale_transform(wb, hb, wb1, hb1);

    let corr_pts: Vec<((f64, f64), (f64, f64))> = pair
        .corr_ab
        .valid()
        .into_iter()
        .filter_map(|(x, y, b)| {
            Some((sa.apply(x as f64, y as f64)?, sb.apply(b[0] as f64, b[1] as f64)?))
        })
        .collect();

    let side_a = params.crop_size.unwrap_or(wa1.min(ha1));
    let (cwa, cha) = (side_a.min(wa1), side_a.min(ha1));
    let (cwb, chb) = (side_a.min(wb1), side_a.min(hb1));

    // 3 + 4: density-weighted crop of A, best crop of B
    let a_pts: Vec<(f64, f64)> = corr_pts.iter().map(|c| c.0).collect();
    let a_counts = window_counts(&a_pts, wa1, ha1, cwa, cha);
    let mut crops = None;
    for _ in 0..params.max_crop_tries.max(1) {
        let Some((xa, ya)) = sample_window(&a_counts, wa1 - cwa + 1, &mut rng) else {
            break;
        };
        let inside: Vec<(f64, f64)> = corr_pts
            .iter()
            .filter(|((x, y), _)| {
                let (x, y) = (x.round(), y.round());
                x >= xa as f64 && y >= ya as f64 && x < (xa + cwa) as f64 && y < (ya + cha) as f64
            })
            .map(|c| c.1)
            .collect();
        let b_counts = window_counts(&inside, wb1, hb1, cwb, chb);
        let (xb, yb, n) = argmax_window(&b_counts, wb1 - cwb + 1);
        if n > 0 {
            crops = Some(((xa, ya), (xb, yb)));
            break;
        }
    }
    let ((xa, ya), (xb, yb)) = crops.ok_or(Error::NoCorrespondences)?;
    let mut ta = crop_transform(xa, ya).after(&sa);
    let mut tb = crop_transform(xb, yb).after(&sb);

    // 5: joint flip
    let flipped = params.flip_probability > 0.0 && rng.random_bool(params.flip_probability.min(1.0));
    if flipped {
        ta = flip_transform(cwa).after(&ta);
        tb = flip_transform(cwb).after(&tb);
    }

    let mut img_a = warp(&pair.a.image.to_f32(), &ta.inverse().unwrap(), cwa, cha);
    let mut img_b = warp(&pair.b.image.to_f32(), &tb.inverse().unwrap(), cwb, chb);

    // 6: pixel noise; 7: gain on B
    add_noise(&mut img_a, &mut rng, params.lambda_n);
    add_noise(&mut img_b, &mut rng, params.lambda_n);
    let gain = random_gain(&mut rng, params.lambda_g);
    apply_gain(&mut img_b, gain);

    let mut corr = transform_field(&pair.corr_ab, &ta, &tb, cwa, cha);
    corr.clip_to(cwb, chb, 0.5);
    let out = ImagePair {
        a: derived_image(&pair.a, img_a.to_u8(), &ta),
        b: derived_image(&pair.b, img_b.to_u8(), &tb),
        corr_ab: corr,
        phi: pair.phi,
        alpha: pair.alpha,
        beta: pair.beta,
        source: pair.source,
    };
    Ok((out, AugmentRecord { transform_a: ta, transform_b: tb, true_scale: ts, k_md, flipped, gain }))
}

/// Single-image pipeline. Returns the image and the source → output transform.
pub fn augment_single(img: &Grid<u8>, params: &AugmentParams, seed: u64) -> Result<(Grid<u8>, Homography)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (img.width(), img.height());
    let hr = centered_homography(&mut rng, w, h, params.lambda_r, params.lambda_p);
    let target = rng.random_range(params.short_edge_min..=params.short_edge_max) as f64;
    let (w1, h1) = scaled_dims(w, h, target / w.min(h) as f64);
    let s = scale_transform(w, h, w1, h1);
    let side = params.crop_size.unwrap_or(w1.min(h1));
    let (cw, ch) = (side.min(w1), side.min(h1));
    let x0 = rng.random_range(0..=w1 - cw);
    let y0 = rng.random_range(0..=h1 - ch);
    let mut t = crop_transform(x0, y0).after(&s.after(&hr));
    if params.flip_probability > 0.0 && rng.random_bool(params.flip_probability.min(1.0)) {
        t = flip_transform(cw).after(&t);
    }
    let inv = t.inverse().ok_or_else(|| Error::Invalid("singular homography".into()))?;
    let mut out = warp(&img.to_f32(), &inv, cw, ch);
    add_noise(&mut out, &mut rng, params.lambda_n);
    apply_gain(&mut out, random_gain(&mut rng, params.lambda_g));
    Ok((out.to_u8(), t))
}

/// Exposure and Gaussian-noise perturbation on a `[0, 1]` image.
pub fn student_perturb(img: &Grid<f32>, lambda_g_st: f64, lambda_sigma_st: f64, seed: u64) -> Grid<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_gain(&mut rng, lambda_g_st) as f32;
    let noise = (lambda_sigma_st > 0.0).then(|| Normal::new(0.0, lambda_sigma_st).unwrap());
    img.map(|&v| {
        let n = noise.map_or(0.0, |d| d.sample(&mut rng) as f32);
        (v * g + n).clamp(0.0, 1.0)
    })
}

/// Deterministic validation sizing: rescales when the short edge is outside
/// `[min, max]`, otherwise returns the identity.
pub fn validation_scale(w: usize, h: usize, params: &AugmentParams) -> (usize, usize, Homography) {
    let short = w.min(h);
    let target = short.clamp(params.short_edge_min, params.short_edge_max);
    if target == short {
        return (w, h, Homography::identity());
    }
    let (nw, nh) = scaled_dims(w, h, target as f64 / short as f64);
    (nw, nh, scale_transform(w, h, nw, nh))
}

/// Validation-mode pair preparation: deterministic rescale, then crops that
/// maximize the correspondence count.
pub fn prepare_validation_pair(pair: &ImagePair, params: &AugmentParams) -> Result<ImagePair> {
    let (wa, ha, sa) = validation_scale(pair.a.width(), pair.a.height(), params);
    let (wb, hb, sb) = validation_scale(pair.b.width(), pair.b.height(), params);
    let pts: Vec<((f64, f64), (f64, f64))> = pair
        .corr_ab
        .valid()
        .into_iter()
        .filter_map(|(x, y, b)| Some((sa.apply(x as f64, y as f64)?, sb.apply(b[0] as f64, b[1] as f64)?)))
        .collect();
    let side = params.crop_size.unwrap_or(wa.min(ha));
    let (cwa, cha) = (side.min(wa), side.min(ha));
    let (cwb, chb) = (side.min(wb), side.min(hb));
    let a_pts: Vec<(f64, f64)> = pts.iter().map(|p| p.0).collect();
    let (xa, ya, _) = argmax_window(&window_counts(&a_pts, wa, ha, cwa, cha), wa - cwa + 1);
    let inside: Vec<(f64, f64)> = pts
        .iter()
        .filter(|((x, y), _)| {
            let (x, y) = (x.round(), y.round());
            x >= xa as f64 && y >= ya as f64 && x < (xa + cwa) as f64 && y < (ya + cha) as f64
        })
        .map(|p| p.1)
        .collect();
    let (xb, yb, n) = argmax_window(&window_counts(&inside, wb, hb, cwb, chb), wb - cwb + 1);
    if n == 0 {
        return Err(Error::NoCorrespondences);
    }
    let ta = crop_transform(xa, ya).after(&sa);
    let tb = crop_transform(xb, yb).after(&sb);
    let img_a = warp(&pair.a.image.to_f32(), &ta.inverse().unwrap(), cwa, cha);
    let img_b = warp(&pair.b.image.to_f32(), &tb.inverse().unwrap(), cwb, chb);
    let mut corr = transform_field(&pair.corr_ab, &ta, &tb, cwa, cha);
    corr.clip_to(cwb, chb, 0.5);
    Ok(ImagePair {
        a: derived_image(&pair.a, img_a.to_u8(), &ta),
        b: derived_image(&pair.b, img_b.to_u8(), &tb),
        corr_ab: corr,
        ..pair.clone()
    })
}
