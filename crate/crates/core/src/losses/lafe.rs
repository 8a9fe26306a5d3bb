use crate::error::{Error, Result};
use crate::features::DenseFeatureMap;

const BCE_EPS: f64 = 1e-7;

/// Dense student and teacher outputs plus the multitask log-variance
/// weights.
#[derive(Debug, Clone)]
pub struct LafeLossInputs<'a> {
    pub student: &'a DenseFeatureMap,
    pub teacher: &'a DenseFeatureMap,
    pub w1: f64,
    pub w2: f64,
}

/// Binary cross-entropy of prediction `p` against target `t`, with `p`
/// clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce(p: f64, t: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// `e^{−w1}·Σ‖δˢ − δᵗ‖² + 2e^{−w2}·Σ BCE(Kˢ, Kᵗ) + w1 + w2` over all pixels.
pub fn lafe_distill_loss(inputs: &LafeLossInputs<'_>) -> Result<f64> {
    let (s, t) = (inputs.student, inputs.teacher);
    if !s.detection.same_shape(&t.detection) || s.dim() != t.dim() {
        return Err(Error::Invalid("student and teacher maps differ in shape".into()));
    }
    let desc: f64 = s
        .descriptors()
        .iter()
        .zip(t.descriptors())
        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
        .sum();
    let det: f64 = s.detection.data().iter().zip(t.detection.data()).map(|(p, q)| bce(*p as f64, *q as f64)).sum();
    Ok((-inputs.w1).exp() * desc + 2.0 * (-inputs.w2).exp() * det + inputs.w1 + inputs.w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn map(det: Vec<f32>, desc: Vec<f32>) -> DenseFeatureMap {
        let n = det.len();
        DenseFeatureMap::new(desc.len() / n, desc, Grid::from_vec(n, 1, det), None, 1.0).unwrap()
    }

    #[test]
    fn identical_binary_targets() {
        let m = map(vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.8, 1.0, 0.0]);
        let l = lafe_distill_loss(&LafeLossInputs { student: &m, teacher: &m, w1: 0.0, w2: 0.0 }).unwrap();
        assert!(l.abs() < 1e-5);
        let l = lafe_distill_loss(&LafeLossInputs { student: &m, teacher: &m, w1: 1.0, w2: 1.0 }).unwrap();
        assert!((l - 2.0).abs() < 1e-5);
    }

    #[test]
    fn half_target() {
        assert!((bce(0.5, 0.5) - 2f64.ln()).abs() < 1e-15);
        let m = map(vec![0.5; 3], vec![1.0; 3]);
        let l = lafe_distill_loss(&LafeLossInputs { student: &m, teacher: &m, w1: 0.0, w2: 0.0 }).unwrap();
        assert!((l - 2.0 * 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn minimum_at_log_coefficients() {
        let s = map(vec![0.2, 0.9], vec![1.0, 0.0, 0.0, 1.0]);
        let t = map(vec![0.6, 0.7], vec![0.0, 1.0, 0.6, 0.8]);
        let e1: f64 = 2.0 + 0.6f64.powi(2) + 0.2f64.powi(2);
        let e2 = bce(0.2, 0.6) + bce(0.9, 0.7);
        let eval = |w1: f64, w2: f64| lafe_distill_loss(&LafeLossInputs { student: &s, teacher: &t, w1, w2 }).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -300..=300 {
            for j in -300..=300 {
                let (w1, w2) = (i as f64 * 0.01, j as f64 * 0.01);
                let v = eval(w1, w2);
                if v < best.0 {
                    best = (v, w1, w2);
                }
            }
        }
        assert!((best.1 - e1.ln()).abs() <= 0.006, "{} vs {}", best.1, e1.ln());
        assert!((best.2 - (2.0 * e2).ln()).abs() <= 0.006);
    }
}
