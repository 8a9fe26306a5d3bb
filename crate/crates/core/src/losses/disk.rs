use super::log_sum_exp;
use crate::grid::Grid;
use crate::pairing::CorrespondenceField;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiskLossParams {
    pub rho_tp: f64,
    pub rho_fp: f64,
    /// Correct-match radius in pixels.
    pub epsilon: f64,
    pub theta_m: f64,
    /// Sampling cell size in pixels.
    pub cell: usize,
    pub lambda_kp: f64,
}

impl Default for DiskLossParams {
    fn default() -> Self {
        Self { rho_tp: 1.0, rho_fp: -0.25, epsilon: 1.5, theta_m: 50.0, cell: 8, lambda_kp: 0.001 }
    }
}

/// A sampled keypoint with its detection log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskFeature {
    pub x: usize,
    pub y: usize,
    /// `ln P(i|K) = ln softmax(K^u)_i + ln K_i`.
    pub log_prob: f64,
    pub descriptor: Vec<f32>,
}

impl DiskFeature {
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }
}

/// Cell-wise sampling: one proposal per `h × h` cell (edge cells may be
/// smaller) drawn from the in-cell softmax of `k`, accepted with probability
/// `k` at the proposal. Descriptors are left empty.
pub fn disk_sample_with<R: Rng + ?Sized>(k: &Grid<f32>, h: usize, rng: &mut R) -> Vec<DiskFeature> {
    let h = h.max(1);
    let mut out = Vec::new();
    let mut logits = Vec::with_capacity(h * h);
    for cy in (0..k.height()).step_by(h) {
        for cx in (0..k.width()).step_by(h) {
            let (x1, y1) = ((cx + h).min(k.width()), (cy + h).min(k.height()));
            logits.clear();
            for y in cy..y1 {
                for x in cx..x1 {
                    logits.push(*k.get(x, y) as f64);
                }
            }
            let lse = log_sum_exp(logits.iter().copied());
            if !lse.is_finite() {
                continue;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = logits.len() - 1;
            for (i, &l) in logits.iter().enumerate() {
                acc += (l - lse).exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            while logits[pick] == f64::NEG_INFINITY {
                pick -= 1;
            }
            let cw = x1 - cx;
            let (x, y) = (cx + pick % cw, cy + pick / cw);
            let kv = (*k.get(x, y) as f64).clamp(0.0, 1.0);
            let accept: f64 = rng.random();
            if accept < kv {
                out.push(DiskFeature { x, y, log_prob: logits[pick] - lse + kv.ln(), descriptor: Vec::new() });
            }
        }
    }
    out
}

pub fn disk_sample_features(k: &Grid<f32>, h: usize, seed: u64) -> Vec<DiskFeature> {
    disk_sample_with(k, h, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Row-major `ln P(i↔j)`: log row-softmax plus log column-softmax of
/// `−θ_M·D`.
pub fn disk_match_log_probability(desc_a: &[Vec<f32>], desc_b: &[Vec<f32>], theta_m: f64) -> Vec<f64> {
    let (na, nb) = (desc_a.len(), desc_b.len());
    let s: Vec<f64> = desc_a.iter().flat_map(|a| desc_b.iter().map(move |b| -theta_m * l2(a, b))).collect();
    let row: Vec<f64> = (0..na).map(|i| log_sum_exp(s[i * nb..(i + 1) * nb].iter().copied())).collect();
    let col: Vec<f64> = (0..nb).map(|j| log_sum_exp((0..na).map(|i| s[i * nb + j]))).collect();
    (0..na * nb).map(|ij| 2.0 * s[ij] - row[ij / nb] - col[ij % nb]).collect()
}

pub fn disk_match_probability(desc_a: &[Vec<f32>], desc_b: &[Vec<f32>], theta_m: f64) -> Vec<f64> {
    disk_match_log_probability(desc_a, desc_b, theta_m).into_iter().map(f64::exp).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskLoss {
    pub reinforce: f64,
    pub keypoint: f64,
    pub total: f64,
}

/// REINFORCE loss over all sampled pairs plus the keypoint regularizer
/// `Σ ln P(i|K_A) + Σ ln P(j|K_B)`.
pub fn disk_loss(
    fa: &[DiskFeature],
    fb: &[DiskFeature],
    corr: &CorrespondenceField,
    params: &DiskLossParams,
) -> DiskLoss {
    let keypoint: f64 = fa.iter().chain(fb).map(|f| f.log_prob).sum();
    if fa.is_empty() || fb.is_empty() {
        return DiskLoss { reinforce: 0.0, keypoint, total: params.lambda_kp * keypoint };
    }
    let da: Vec<Vec<f32>> = fa.iter().map(|f| f.descriptor.clone()).collect();
    let db: Vec<Vec<f32>> = fb.iter().map(|f| f.descriptor.clone()).collect();
    let lp = disk_match_log_probability(&da, &db, params.theta_m);
    let nb = fb.len();
    let mut reinforce = 0.0;
    for (i, a) in fa.iter().enumerate() {
        let Some([gx, gy]) = corr.at(a.x, a.y) else { continue };
        for (j, b) in fb.iter().enumerate() {
            let d = (b.x as f64 - gx as f64).hypot(b.y as f64 - gy as f64);
            let r = if d <= params.epsilon { params.rho_tp } else { params.rho_fp };
            let gamma = lp[i * nb + j] + a.log_prob + b.log_prob;
            reinforce -= lp[i * nb + j].exp() * r * gamma;
        }
    }
    DiskLoss { reinforce, keypoint, total: reinforce + params.lambda_kp * keypoint }
}
