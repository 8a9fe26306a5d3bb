//! Minimal three-point absolute pose via Grunert's quartic.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};

use crate::geometry::Pose;

/// Real roots of `c[4]·x⁴ + c[3]·x³ + c[2]·x² + c[1]·x + c[0]`, each polished
/// with Newton steps.
fn quartic_roots(c: [f64; 5]) -> Vec<f64> {
    let lead = c[4];
    if lead.abs() < 1e-14 * c.iter().fold(0.0f64, |m, v| m.max(v.abs())) {
        return Vec::new();
    }
    let a: Vec<f64> = c.iter().map(|v| v / lead).collect();
    let comp = Matrix4::new(
        0.0, 0.0, 0.0, -a[0],
        1.0, 0.0, 0.0, -a[1],
        0.0, 1.0, 0.0, -a[2],
        0.0, 0.0, 1.0, -a[3],
    );
    let eig = comp.complex_eigenvalues();
    let scale = eig.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let poly = |x: f64| (((x + a[3]) * x + a[2]) * x + a[1]) * x + a[0];
    let deriv = |x: f64| ((4.0 * x + 3.0 * a[3]) * x + 2.0 * a[2]) * x + a[1];
    eig.iter()
        .filter(|z| z.im.abs() <= 1e-6 * scale)
        .map(|z| {
            let mut x = z.re;
            for _ in 0..8 {
                let d = deriv(x);
                if d == 0.0 {
                    break;
                }
                let step = poly(x) / d;
                x -= step;
                if step.abs() <= 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
            x
        })
        .collect()
}

/// Rotation and translation taking the world triangle onto the camera one.
fn align_triangles(w: &[Vector3<f64>; 3], c: &[Vector3<f64>; 3]) -> Option<Pose> {
    let (dw1, dw2) = (w[1] - w[0], w[2] - w[0]);
    let (dc1, dc2) = (c[1] - c[0], c[2] - c[0]);
    let xw = Matrix3::from_columns(&[dw1, dw2, dw1.cross(&dw2)]);
    let xc = Matrix3::from_columns(&[dc1, dc2, dc1.cross(&dc2)]);
    let r = xc * xw.try_inverse()?;
    let rot = UnitQuaternion::from_matrix(&r);
    let t = c[0] - rot * w[0];
    Some(Pose::new(rot, t))
}

/// Up to four poses mapping `points` onto the rays `bearings` (unit vectors
/// in the camera frame).
pub fn p3p(points: &[Vector3<f64>; 3], bearings: &[Vector3<f64>; 3]) -> Vec<Pose> {
    let j = bearings.map(|b| b.normalize());
    let a2 = (points[1] - points[2]).norm_squared();
    let b2 = (points[0] - points[2]).norm_squared();
    let c2 = (points[0] - points[1]).norm_squared();
    if a2 < 1e-24 || b2 < 1e-24 || c2 < 1e-24 {
        return Vec::new();
    }
    let ca = j[1].dot(&j[2]);
    let cb = j[0].dot(&j[2]);
    let cg = j[0].dot(&j[1]);

    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;
    let coeffs = [
        (1.0 + amc).powi(2) - 4.0 * a2 / b2 * cg * cg,
        4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - apc) * ca * cg),
        2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb + 2.0 * bmc * ca * ca
            - 4.0 * apc * ca * cb * cg
            + 2.0 * bma * cg * cg),
        4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb),
        (amc - 1.0).powi(2) - 4.0 * c2 / b2 * ca * ca,
    ];
    let mut out = Vec::new();
    for v in quartic_roots(coeffs) {
        if v <= 0.0 {
            continue;
        }
        let den = 2.0 * (cg - v * ca);
        if den.abs() < 1e-14 {
            continue;
        }
        let u = ((-1.0 + amc) * v * v - 2.0 * amc * cb * v + 1.0 + amc) / den;
        if u <= 0.0 {
            continue;
        }
        let s1sq = b2 / (1.0 + v * v - 2.0 * v * cb);
        if s1sq <= 0.0 {
            continue;
        }
        let s1 = s1sq.sqrt();
        let cam = [j[0] * s1, j[1] * (u * s1), j[2] * (v * s1)];
        if let Some(p) = align_triangles(points, &cam) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::orientation_error;

    #[test]
    fn quartic_known_roots() {
        // (x-1)(x-2)(x+3)(x-0.5)
        let c = [-3.0, 9.5, -7.0, -0.5, 1.0];
        let mut r = quartic_roots(c);
        r.sort_by(f64::total_cmp);
        let expect = [-3.0, 0.5, 1.0, 2.0];
        assert_eq!(r.len(), 4);
        for (a, b) in r.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_constructed_pose() {
        let truth = Pose::new(UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vector3::new(0.1, 0.2, 3.0));
        let pts = [Vector3::new(-0.5, 0.2, 0.1), Vector3::new(0.4, -0.3, 0.5), Vector3::new(0.2, 0.6, -0.4)];
        let bearings = pts.map(|p| truth.transform(&p).normalize());
        let sols = p3p(&pts, &bearings);
        assert!(!sols.is_empty());
        let best = sols
            .iter()
            .map(|s| orientation_error(s, &truth) + (s.translation - truth.translation).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-6, "best {best}");
    }
}
