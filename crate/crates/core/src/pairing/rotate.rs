use super::{Backplane, GeoImage, ImagePair};
use crate::augment::{transform_field, warp};
use crate::error::Result;
use crate::geometry::{Homography, Intrinsics};
use crate::grid::Grid;
use crate::pose::backplane_pose;
use nalgebra::{Matrix3, Vector3};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationOutcome {
    /// In-plane rotation applied to A, degrees.
    pub angle_a: f64,
    pub angle_b: f64,
    /// Set when the body z-axis is (anti)parallel to the line of sight and
    /// the image was left unrotated.
    pub flagged_a: bool,
    pub flagged_b: bool,
    pub transform_a: Homography,
    pub transform_b: Homography,
}

/// In-plane rotation (radians, image coordinates with y down) that turns the
/// projected body z-axis upward. `None` when the axis is along the line of
/// sight.
pub fn upright_angle(img: &GeoImage, seed: u64) -> Result<Option<f64>> {
    let pose = backplane_pose(img, 2000, seed)?;
    let d = pose.rotation * Vector3::z();
    let t = pose.translation;
    if d.cross(&t.normalize()).norm() < 1e-6 {
        return Ok(None);
    }
    let k = &img.intrinsics;
    let dx = k.fx * (d.x * t.z - t.x * d.z) / (t.z * t.z);
    let dy = k.fy * (d.y * t.z - t.y * d.z) / (t.z * t.z);
    let theta = -FRAC_PI_2 - dy.atan2(dx);
    let theta = (theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    Ok(Some(if theta.abs() < 1e-6 { 0.0 } else { theta }))
}

/// Rotation about the image center onto a canvas holding all rotated pixels.
fn rotation_canvas(w: usize, h: usize, theta: f64) -> (usize, usize, Homography) {
    if theta == 0.0 {
        return (w, h, Homography::identity());
    }
    let (s, c) = theta.sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let corners = [(-cx, -cy), (cx, -cy), (-cx, cy), (cx, cy)];
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for (x, y) in corners {
        sx = sx.max((c * x - s * y).abs());
        sy = sy.max((s * x + c * y).abs());
    }
    let nw = ((2.0 * sx - 1e-6).ceil() as usize + 1).max(1);
    let nh = ((2.0 * sy - 1e-6).ceil() as usize + 1).max(1);
    let (ncx, ncy) = ((nw as f64 - 1.0) / 2.0, (nh as f64 - 1.0) / 2.0);
    let m = Matrix3::new(c, -s, ncx - c * cx + s * cy, s, c, ncy - s * cx - c * cy, 0.0, 0.0, 1.0);
    (nw, nh, Homography(m))
}

fn rotate_image(img: &GeoImage, theta: f64) -> (GeoImage, Homography) {
    let (nw, nh, t) = rotation_canvas(img.width(), img.height(), theta);
    if theta == 0.0 {
        return (img.clone(), t);
    }
    let inv = t.inverse().expect("rotation is invertible");
    let image = warp(&img.image.to_f32(), &inv, nw, nh).to_u8();
    let coords = img.coords.as_ref().map(|c| -> Backplane {
        Grid::from_fn(nw, nh, |x, y| {
            let (sx, sy) = inv.apply(x as f64, y as f64).unwrap();
            let (rx, ry) = (sx.round(), sy.round());
            if rx < 0.0 || ry < 0.0 || rx as usize >= c.width() || ry as usize >= c.height() {
                [f32::NAN; 3]
            } else {
                *c.get(rx as usize, ry as usize)
            }
        })
    });
    let k = &img.intrinsics;
    let (pcx, pcy) = t.apply(k.cx, k.cy).unwrap();
    let out = GeoImage {
        image,
        coords,
        intrinsics: Intrinsics::new(k.fx, k.fy, pcx, pcy),
        ..img.clone()
    };
    (out, t)
}

/// Rotates both images of a pair so the body z-axis points up and updates
/// the correspondence field.
pub fn normalize_rotation(pair: &ImagePair, seed: u64) -> Result<(ImagePair, RotationOutcome)> {
    let ta = upright_angle(&pair.a, seed)?;
    let tb = upright_angle(&pair.b, seed)?;
    let (a, ha) = rotate_image(&pair.a, ta.unwrap_or(0.0));
    let (b, hb) = rotate_image(&pair.b, tb.unwrap_or(0.0));
    let mut corr = if ta.unwrap_or(0.0) == 0.0 && tb.unwrap_or(0.0) == 0.0 {
        pair.corr_ab.clone()
    } else {
        transform_field(&pair.corr_ab, &ha, &hb, a.width(), a.height())
    };
    corr.clip_to(b.width(), b.height(), 0.5);
    let outcome = RotationOutcome {
        angle_a: ta.unwrap_or(0.0).to_degrees(),
        angle_b: tb.unwrap_or(0.0).to_degrees(),
        flagged_a: ta.is_none(),
        flagged_b: tb.is_none(),
        transform_a: ha,
        transform_b: hb,
    };
    Ok((ImagePair { a, b, corr_ab: corr, ..pair.clone() }, outcome))
}
