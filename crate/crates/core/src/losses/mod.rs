//! Forward evaluation of the R2D2, DISK and LAFE training losses.
//!
//! These are plain numeric functions without automatic differentiation. In
//! the DISK REINFORCE term the match probability is computed from detached
//! descriptor copies, which only matters for gradients; forward values are
//! identical.

mod disk;
mod lafe;
mod r2d2;

pub use disk::{
    disk_loss, disk_match_probability, disk_match_log_probability, disk_sample_features, disk_sample_with,
    DiskFeature, DiskLoss, DiskLossParams,
};
pub use lafe::{bce, lafe_distill_loss, LafeLossInputs};
pub use r2d2::{
    ap_quantized, kappa_schedule, r2d2_ap_loss, r2d2_cosim_loss, r2d2_peaky_loss, r2d2_total_loss, R2d2Components,
    R2d2LossParams, WarmupShape,
};

/// Detection non-linearity `softplus(x) / (softplus(x) + 1)`.
pub fn detection_activation(x: f64) -> f64 {
    let sp = softplus(x);
    sp / (sp + 1.0)
}

/// `ln(1 + e^x)` without overflow or underflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}
