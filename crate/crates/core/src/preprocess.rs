//! Radiance-to-8-bit conversion and image screening.
//!
//! Raw images are mapped to 8 bits with a percentile stretch and gamma
//! correction, then screened for size, black rows, saturation and target
//! coverage. Percentiles use linear interpolation between order statistics
//! and quantization rounds half away from zero.

use crate::error::{Error, Result};
use crate::grid::{round_half_away, Grid};
use crate::stats::{percentile_sorted, sorted_copy};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Raw radiance image. Values must be finite and non-negative.
pub type RawImage = Grid<f32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessParams {
    pub p_lo: f64,
    pub p_hi: f64,
    pub gamma: f64,
    pub sat_p_lo: f64,
    pub sat_p_hi: f64,
    /// Minimum 8-bit spread between the two saturation percentiles.
    pub sat_min_spread: f64,
    pub bg_percentile: f64,
    /// Apparent target radius in pixels. `None` skips the coverage check.
    pub target_radius: Option<f64>,
    /// Minimum 8-bit contrast between foreground and background percentiles.
    pub min_target_contrast: f64,
    pub min_side: usize,
    pub max_black_row_fraction: f64,
    pub hi_margin: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            p_lo: 0.05,
            p_hi: 99.99,
            gamma: 1.8,
            sat_p_lo: 99.8,
            sat_p_hi: 99.99,
            sat_min_spread: 5.0,
            bg_percentile: 4.0,
            target_radius: None,
            min_target_contrast: 50.0,
            min_side: 256,
            max_black_row_fraction: 0.01,
            hi_margin: 1.2,
        }
    }
}

impl PreprocessParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_lo && self.p_lo < self.p_hi && self.p_hi <= 100.0) {
            return Err(Error::Invalid(format!("bad percentiles {} / {}", self.p_lo, self.p_hi)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Invalid("gamma must be positive".into()));
        }
        if let Some(r) = self.target_radius {
            if r <= 0.0 {
                return Err(Error::Invalid("target radius must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooSmall,
    BlackRows,
    Degenerate,
    Saturated,
    TargetTooSmall,
    InvalidPixels,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::TooSmall => "too_small",
            Self::BlackRows => "black_rows",
            Self::Degenerate => "degenerate",
            Self::Saturated => "saturated",
            Self::TargetTooSmall => "target_too_small",
            Self::InvalidPixels => "invalid_pixels",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    Accepted(Grid<u8>),
    Rejected(RejectReason),
}

impl FilterOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Self::Accepted(_))
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            Self::Accepted(_) => None,
            Self::Rejected(r) => Some(*r),
        }
    }
}

/// Maps one raw value given the stretch limits.
#[inline]
pub fn rescale_value(v: f64, v_lo: f64, v_hi: f64, gamma: f64, hi_margin: f64) -> u8 {
    let ratio = ((v - v_lo) / (hi_margin * v_hi - v_lo)).clamp(0.0, 1.0);
    round_half_away(255.0 * ratio.powf(1.0 / gamma)) as u8
}

/// Stretch limits `(v_lo, v_hi)` of a raw image.
pub fn stretch_limits(img: &RawImage, params: &PreprocessParams) -> (f64, f64) {
    let sorted = sorted_copy(img.data().iter().map(|&v| v as f64));
    (percentile_sorted(&sorted, params.p_lo), percentile_sorted(&sorted, params.p_hi))
}

pub fn rescale_to_8bit(img: &RawImage, params: &PreprocessParams) -> Result<Grid<u8>> {
    let (lo, hi) = stretch_limits(img, params);
    if hi <= lo {
        return Err(Error::Degenerate { lo, hi });
    }
    Ok(img.map(|&v| rescale_value(v as f64, lo, hi, params.gamma, params.hi_margin)))
}

/// Foreground percentile (as a fraction) for a half-disc target of radius `r`
/// in a `w × h` frame.
pub fn foreground_percentile(w: usize, h: usize, r: f64) -> f64 {
    1.0 - 0.5 * PI * r * r / (w as f64 * h as f64)
}

fn u8_sorted(img: &Grid<u8>) -> Vec<f64> {
    let mut hist = [0usize; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let mut out = Vec::with_capacity(img.len());
    for (v, &c) in hist.iter().enumerate() {
        out.extend(std::iter::repeat_n(v as f64, c));
    }
    out
}

pub fn black_row_fraction<T: Copy + PartialEq + Default>(img: &Grid<T>) -> f64 {
    let zero = T::default();
    let black = (0..img.height()).filter(|&y| img.row(y).iter().all(|&v| v == zero)).count();
    black as f64 / img.height() as f64
}

pub fn is_saturated(img: &Grid<u8>, params: &PreprocessParams) -> bool {
    let s = u8_sorted(img);
    percentile_sorted(&s, params.sat_p_hi) - percentile_sorted(&s, params.sat_p_lo)
        <= params.sat_min_spread
}

pub fn target_too_small(img: &Grid<u8>, params: &PreprocessParams) -> bool {
    let Some(r) = params.target_radius else {
        return false;
    };
    let s = u8_sorted(img);
    let p_fg = foreground_percentile(img.width(), img.height(), r).clamp(0.0, 1.0) * 100.0;
    percentile_sorted(&s, p_fg) - percentile_sorted(&s, params.bg_percentile)
        < params.min_target_contrast
}

/// Screens an image and returns its 8-bit form when accepted.
pub fn filter_image(img: &RawImage, params: &PreprocessParams) -> FilterOutcome {
    use FilterOutcome::Rejected;
    if img.is_empty() || img.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Rejected(RejectReason::InvalidPixels);
    }
    if img.width().min(img.height()) < params.min_side {
        return Rejected(RejectReason::TooSmall);
    }
    let out = match rescale_to_8bit(img, params) {
        Ok(o) => o,
        Err(_) => {
            // every pixel collapses to one level; a zero raw row is still a black row
            if black_row_fraction(img) > params.max_black_row_fraction {
                return Rejected(RejectReason::BlackRows);
            }
            return Rejected(RejectReason::Degenerate);
        }
    };
    if black_row_fraction(&out) > params.max_black_row_fraction {
        return Rejected(RejectReason::BlackRows);
    }
    if is_saturated(&out, params) {
        return Rejected(RejectReason::Saturated);
    }
    if target_too_small(&out, params) {
        return Rejected(RejectReason::TargetTooSmall);
    }
    FilterOutcome::Accepted(out)
}
