//! Row-major 2-D grids and the interpolation helpers shared by the image
//! operations. Pixel `(x, y)` has its center at integer coordinates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl<T: Copy> Grid<T> {
    /// Value at `(x, y)` with coordinates clamped to the grid (border replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }
}

impl Grid<f32> {
    /// Bilinear sample with border replication.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let v00 = self.get_clamped(xi, yi);
        let v10 = self.get_clamped(xi + 1, yi);
        let v01 = self.get_clamped(xi, yi + 1);
        let v11 = self.get_clamped(xi + 1, yi + 1);
        let top = v00 + (v10 - v00) * fx;
        let bot = v01 + (v11 - v01) * fx;
        top + (bot - top) * fy
    }

    pub fn to_u8(&self) -> Grid<u8> {
        self.map(|&v| round_half_away(v as f64).clamp(0.0, 255.0) as u8)
    }

    /// Resize to `(w, h)` with bilinear sampling on pixel centers.
    pub fn resize(&self, w: usize, h: usize) -> Grid<f32> {
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        Grid::from_fn(w, h, |x, y| {
            self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    /// 3×3 box filter with border replication.
    pub fn box3(&self) -> Grid<f32> {
        Grid::from_fn(self.width, self.height, |x, y| {
            let mut s = 0.0f32;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    s += self.get_clamped(x as isize + dx, y as isize + dy);
                }
            }
            s / 9.0
        })
    }
}

impl Grid<u8> {
    pub fn to_f32(&self) -> Grid<f32> {
        self.map(|&v| v as f32)
    }
}

impl Grid<[f32; 2]> {
    /// Bilinear sample of a vector field. Returns NaN unless all four
    /// neighbours are finite and inside the grid.
    pub fn sample_strict(&self, x: f64, y: f64) -> [f32; 2] {
        let nan = [f32::NAN; 2];
        let snap = |v: f64| if (v - v.round()).abs() < 1e-6 { v.round() } else { v };
        let (x, y) = (snap(x), snap(y));
        if !(x >= 0.0 && y >= 0.0) {
            return nan;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        if x0 >= self.width || y0 >= self.height {
            return nan;
        }
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        if x1 >= self.width || y1 >= self.height {
            return nan;
        }
        let p = [*self.get(x0, y0), *self.get(x1, y0), *self.get(x0, y1), *self.get(x1, y1)];
        if p.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return nan;
        }
        let mut out = [0f32; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let top = p[0][c] as f64 * (1.0 - fx) + p[1][c] as f64 * fx;
            let bot = p[2][c] as f64 * (1.0 - fx) + p[3][c] as f64 * fx;
            *o = (top * (1.0 - fy) + bot * fy) as f32;
        }
        out
    }
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}
