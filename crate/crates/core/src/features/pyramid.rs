use crate::grid::{round_half_away, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub image: Grid<f32>,
    /// Nominal scale `k^{-j}` relative to the input image.
    pub scale: f64,
}

/// Levels at scales `1, k^-1, k^-2, …` with `k = 2^{1/s}`, stopping before the
/// short edge drops below `min_side`. Each level is a bilinear downscale of
/// the previous one. The full-resolution level is always present.
pub fn build_pyramid(img: &Grid<f32>, s: u32, min_side: usize) -> Vec<PyramidLevel> {
    let s = s.max(1) as f64;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut levels = vec![PyramidLevel { image: img.clone(), scale: 1.0 }];
    for j in 1.. {
        let scale = 2f64.powf(-(j as f64) / s);
        let nw = round_half_away(w * scale) as usize;
        let nh = round_half_away(h * scale) as usize;
        if nw.min(nh) < min_side.max(1) {
            break;
        }
        let prev = &levels.last().expect("non-empty").image;
        let image = prev.resize(nw, nh);
        levels.push(PyramidLevel { image, scale });
    }
    levels
}
