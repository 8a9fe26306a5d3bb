use super::{boresight_angle, CorrespondenceField, GeoImage, ImagePair, PairSource};
use crate::augment::{sample_homography_raw, warp};
use crate::geometry::{Homography, Intrinsics, Pose};
use crate::grid::Grid;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scene geometry inducing a homography between two pinhole views: camera A
/// sits at the body origin looking along +z, the scene is the plane
/// `normal · X = 1`, and `pose_b` maps body points into camera B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarGeometry {
    pub normal: Vector3<f64>,
    pub pose_b: Pose,
}

impl PlanarGeometry {
    /// Plane point seen through pixel `(u, v)` of camera A.
    pub fn point_a(&self, k: &Intrinsics, u: f64, v: f64) -> Option<Vector3<f64>> {
        let m = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let d = self.normal.dot(&m);
        (d > 1e-12).then(|| m / d)
    }
}

/// Decomposes the pixel homography `h` (A → B, shared intrinsics `k`) into a
/// rotation, translation and plane. Returns `None` for singular input or
/// when no solution keeps the central ray in front of both cameras.
pub fn planar_geometry(h: &Homography, k: &Intrinsics) -> Option<PlanarGeometry> {
    let km = k.matrix();
    let m = km.try_inverse()? * h.matrix() * km;
    let svd = m.svd(false, false);
    let mut sv = svd.singular_values.as_slice().to_vec();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[2] <= 0.0 {
        return None;
    }
    let mut hn = m / sv[1];
    if hn.determinant() < 0.0 {
        hn = -hn;
    }
    let eig = (hn.transpose() * hn).symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let s1 = eig.eigenvalues[order[0]];
    let s3 = eig.eigenvalues[order[2]];
    let v1: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let v2: Vector3<f64> = eig.eigenvectors.column(order[1]).into();
    let v3: Vector3<f64> = eig.eigenvectors.column(order[2]).into();

    if s1 - s3 < 1e-12 {
        let svd = hn.svd(true, true);
        let r = svd.u? * svd.v_t?;
        let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        return Some(PlanarGeometry { normal: Vector3::z(), pose_b: Pose::new(rot, Vector3::zeros()) });
    }
    let a = (1.0 - s3).max(0.0).sqrt();
    let b = (s1 - 1.0).max(0.0).sqrt();
    let c = (s1 - s3).sqrt();
    let mut best: Option<(f64, PlanarGeometry)> = None;
    for u in [(a * v1 + b * v3) / c, (a * v1 - b * v3) / c] {
        let uu = Matrix3::from_columns(&[v2, u, v2.cross(&u)]);
        let hv2 = hn * v2;
        let hu = hn * u;
        let ww = Matrix3::from_columns(&[hv2, hu, hv2.cross(&hu)]);
        let r = ww * uu.transpose();
        let mut n = v2.cross(&u);
        let mut t = (hn - r) * n;
        if n.z < 0.0 {
            n = -n;
            t = -t;
        }
        if n.z <= 0.0 {
            continue;
        }
        let rot = UnitQuaternion::from_matrix(&r);
        let g = PlanarGeometry { normal: n, pose_b: Pose::new(rot, t) };
        // camera B must see the plane point on A's optical axis
        let x = Vector3::new(0.0, 0.0, 1.0 / n.z);
        if g.pose_b.transform(&x).z <= 0.0 {
            continue;
        }
        if best.as_ref().is_none_or(|(nz, _)| n.z > *nz) {
            best = Some((n.z, g));
        }
    }
    best.map(|(_, g)| g)
}

/// Pair made by warping `img` with a random homography. Both images carry
/// planar backplanes consistent with the homography.
pub fn make_synthetic_pair(id: &str, img: &Grid<u8>, lambda_r: f64, lambda_p: f64, seed: u64) -> ImagePair {
    let (w, h) = (img.width(), img.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (raw, _) = sample_homography_raw(&mut rng, w, h, lambda_r, lambda_p);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let to = Matrix3::new(1.0, 0.0, cx, 0.0, 1.0, cy, 0.0, 0.0, 1.0);
    let from = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
    let hm = Homography::new(to * raw * from);
    let hinv = hm.inverse().expect("sampled homography is invertible");

    let b_img = warp(&img.to_f32(), &hinv, w, h).to_u8();
    let mut corr = CorrespondenceField {
        map: Grid::from_fn(w, h, |x, y| match hm.apply(x as f64, y as f64) {
            Some((u, v)) => [u as f32, v as f32],
            None => [f32::NAN; 2],
        }),
    };
    corr.clip_to(w, h, 0.5);

    let mut a = GeoImage::plain(id, img.clone());
    let mut b = GeoImage::plain(format!("{id}~h{seed}"), b_img);
    let k = a.intrinsics;
    let mut phi = 0.0;
    if let Some(g) = planar_geometry(&hm, &k) {
        let coords_a = Grid::from_fn(w, h, |x, y| match g.point_a(&k, x as f64, y as f64) {
            Some(p) => [p.x as f32, p.y as f32, p.z as f32],
            None => [f32::NAN; 3],
        });
        let coords_b = Grid::from_fn(w, h, |x, y| {
            let p = hinv.apply(x as f64, y as f64).and_then(|(u, v)| {
                let p = g.point_a(&k, u, v)?;
                (g.pose_b.transform(&p).z > 0.0).then_some(p)
            });
            p.map_or([f32::NAN; 3], |p| [p.x as f32, p.y as f32, p.z as f32])
        });
        let bore_b = g.pose_b.rotation.inverse() * Vector3::z();
        let center_b = g.pose_b.center();
        a.coords = Some(coords_a);
        a.cam_distance = 1.0 / g.normal.z;
        b.coords = Some(coords_b);
        b.boresight = bore_b;
        b.cam_distance = ((1.0 - g.normal.dot(&center_b)) / g.normal.dot(&bore_b)).abs();
        phi = boresight_angle(&a.boresight, &b.boresight);
    }
    ImagePair { a, b, corr_ab: corr, phi: Some(phi), alpha: None, beta: None, source: PairSource::SyntheticHomography }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn check_consistent(h: &Homography, k: &Intrinsics) {
        let g = planar_geometry(h, k).expect("decomposition");
        for &(u, v) in &[(10.0, 20.0), (100.0, 5.0), (63.5, 47.5), (0.0, 95.0)] {
            let p = g.point_a(k, u, v).unwrap();
            let q = g.pose_b.project(k, &p).unwrap();
            let (eu, ev) = h.apply(u, v).unwrap();
            assert_relative_eq!(q.x, eu, epsilon = 1e-7);
            assert_relative_eq!(q.y, ev, epsilon = 1e-7);
        }
    }

    #[test]
    fn recovers_constructed_plane_homography() {
        let k = Intrinsics::new(128.0, 128.0, 63.5, 47.5);
        let r = UnitQuaternion::from_euler_angles(0.05, -0.1, 0.2);
        let t = Vector3::new(0.1, -0.05, 0.02);
        let n = Vector3::new(0.1, 0.2, 1.0);
        let m = r.to_rotation_matrix().into_inner() + t * n.transpose();
        let h = Homography::new(k.matrix() * m * k.matrix().try_inverse().unwrap() * 3.7);
        check_consistent(&h, &k);
    }

    #[test]
    fn sampled_homographies_decompose() {
        let k = Intrinsics::new(128.0, 128.0, 63.5, 47.5);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (raw, _) = sample_homography_raw(&mut rng, 128, 96, 20.0, 0.5);
            let c = Matrix3::new(1.0, 0.0, 63.5, 0.0, 1.0, 47.5, 0.0, 0.0, 1.0);
            let h = Homography::new(c * raw * c.try_inverse().unwrap());
            check_consistent(&h, &k);
        }
    }

    #[test]
    fn pure_rotation_decomposes() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0);
        let r = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.3);
        let h = Homography::new(k.matrix() * r.to_rotation_matrix().into_inner() * k.matrix().try_inverse().unwrap());
        check_consistent(&h, &k);
    }

    #[test]
    fn identity_warp() {
        let img = Grid::from_fn(32, 24, |x, y| (x * 5 + y * 3) as u8);
        let p = make_synthetic_pair("x", &img, 0.0, 0.0, 1);
        assert_eq!(p.b.image, img);
        assert_eq!(p.corr_ab, CorrespondenceField::identity(32, 24));
    }

    #[test]
    fn field_matches_homography() {
        let img = Grid::from_fn(64, 48, |x, y| (x * 5 + y * 3) as u8);
        let p = make_synthetic_pair("x", &img, 15.0, 0.4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (raw, _) = sample_homography_raw(&mut rng, 64, 48, 15.0, 0.4);
        let c = Matrix3::new(1.0, 0.0, 31.5, 0.0, 1.0, 23.5, 0.0, 0.0, 1.0);
        let h = Homography::new(c * raw * c.try_inverse().unwrap());
        let hi = h.inverse().unwrap();
        let mut invalid = 0;
        for y in 0..48 {
            for x in 0..64 {
                match p.corr_ab.at(x, y) {
                    Some(v) => {
                        let (bx, by) = hi.apply(v[0] as f64, v[1] as f64).unwrap();
                        assert!((bx - x as f64).abs() < 1e-3 && (by - y as f64).abs() < 1e-3);
                    }
                    None => invalid += 1,
                }
            }
        }
        assert!(invalid > 0);
    }
}
