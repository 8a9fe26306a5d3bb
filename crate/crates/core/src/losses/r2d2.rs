use crate::error::{Error, Result};
use crate::features::DenseFeatureMap;
use crate::grid::Grid;
use crate::pairing::CorrespondenceField;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmupShape {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct R2d2LossParams {
    /// Repeatability weight.
    pub alpha: f64,
    /// Share of the repeatability weight given to peakiness.
    pub beta: f64,
    pub kappa: f64,
    pub kappa_warmup_steps: u64,
    pub warmup_shape: WarmupShape,
    pub n_rep: usize,
    /// Cosine-similarity patch stride; `None` uses `n_rep / 2`.
    pub cosim_stride: Option<usize>,
    pub r_pos: f64,
    pub r_neg: f64,
    pub ap_bins: usize,
    /// Sampling ratio for queries and global distractors.
    pub query_ratio: f64,
}

impl Default for R2d2LossParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            kappa: 0.5,
            kappa_warmup_steps: 1500,
            warmup_shape: WarmupShape::Linear,
            n_rep: 16,
            cosim_stride: None,
            r_pos: 1.0,
            r_neg: 10.0,
            ap_bins: 25,
            query_ratio: 1.0 / 64.0,
        }
    }
}

impl R2d2LossParams {
    /// Cosine-similarity and peakiness weights `(a, b)`.
    pub fn weights(&self) -> (f64, f64) {
        (2.0 * (1.0 - self.beta) * self.alpha, 2.0 * self.beta * self.alpha)
    }

    pub fn stride(&self) -> usize {
        self.cosim_stride.unwrap_or(self.n_rep / 2).max(1)
    }
}

/// AP threshold at a training step, ramping from 0 to `κ`.
pub fn kappa_schedule(params: &R2d2LossParams, step: u64) -> f64 {
    if params.kappa_warmup_steps == 0 || step >= params.kappa_warmup_steps {
        return params.kappa;
    }
    let t = step as f64 / params.kappa_warmup_steps as f64;
    let f = match params.warmup_shape {
        WarmupShape::Linear => t,
        WarmupShape::Cosine => 0.5 * (1.0 - (std::f64::consts::PI * t).cos()),
    };
    params.kappa * f
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Negative mean cosine similarity between `n_rep × n_rep` patches of
/// `rep_a` and the values of `rep_b` at the corresponding pixels. Missing
/// correspondences read the bottom-right value of `rep_b`; zero-norm patches
/// are skipped.
pub fn r2d2_cosim_loss(
    rep_a: &Grid<f32>,
    rep_b: &Grid<f32>,
    corr: &CorrespondenceField,
    n_rep: usize,
    stride: usize,
) -> f64 {
    let (w, h) = (rep_a.width(), rep_a.height());
    let n = n_rep.max(1);
    let stride = stride.max(1);
    if w < n || h < n {
        return 0.0;
    }
    let fill = *rep_b.get(rep_b.width() - 1, rep_b.height() - 1) as f64;
    let (wb, hb) = (rep_b.width() as f64, rep_b.height() as f64);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut sp = Vec::with_capacity(n * n);
    let mut sq = Vec::with_capacity(n * n);
    for y0 in (0..=h - n).step_by(stride) {
        for x0 in (0..=w - n).step_by(stride) {
            sp.clear();
            sq.clear();
            for y in y0..y0 + n {
                for x in x0..x0 + n {
                    sp.push(*rep_a.get(x, y) as f64);
                    let v = match corr.at(x, y) {
                        Some([u, v]) if u >= 0.0 && v >= 0.0 && (u as f64) <= wb - 1.0 && (v as f64) <= hb - 1.0 => {
                            rep_b.sample(u as f64, v as f64) as f64
                        }
                        _ => fill,
                    };
                    sq.push(v);
                }
            }
            if let Some(c) = cosine(&sp, &sq) {
                sum += c;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        -sum / count as f64
    }
}

/// Negative mean of `max − mean` over all stride-1 `n_rep × n_rep` windows
/// of every map.
pub fn r2d2_peaky_loss(reps: &[Grid<f32>], n_rep: usize) -> f64 {
    let n = n_rep.max(1);
    let mut sum = 0.0;
    let mut count = 0usize;
    for g in reps {
        if g.width() < n || g.height() < n {
            continue;
        }
        for y0 in 0..=g.height() - n {
            for x0 in 0..=g.width() - n {
                let mut mx = f64::NEG_INFINITY;
                let mut s = 0.0;
                for y in y0..y0 + n {
                    for &v in &g.row(y)[x0..x0 + n] {
                        mx = mx.max(v as f64);
                        s += v as f64;
                    }
                }
                sum += mx - s / (n * n) as f64;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        -sum / count as f64
    }
}

/// Histogram-binned AP approximation. Similarities in `[-1, 1]` are soft
/// assigned to `bins` triangular bins ordered from high to low similarity;
/// values beyond the end centres fall fully into the end bins.
pub fn ap_quantized(similarities: &[f64], positive: usize, bins: usize) -> f64 {
    let nq = bins.max(2);
    let (lo, hi) = (-1.0f64, 1.0f64);
    let a = (nq - 1) as f64 / (hi - lo);
    let weight = |x: f64, k: usize| {
        let c = hi - k as f64 / a;
        if (k == 0 && x >= c) || (k == nq - 1 && x <= c) {
            1.0
        } else {
            (1.0 - a * (x - c).abs()).max(0.0)
        }
    };
    let mut cum_pos = 0.0;
    let mut cum_all = 0.0;
    let mut ap = 0.0;
    let mut pos_total = 0.0;
    let mut terms = Vec::with_capacity(nq);
    for k in 0..nq {
        let nb: f64 = similarities.iter().map(|&s| weight(s, k)).sum();
        let rec = weight(similarities[positive], k);
        cum_pos += rec;
        cum_all += nb;
        pos_total += rec;
        terms.push((cum_pos / (1e-16 + cum_all), rec));
    }
    for (prec, rec) in terms {
        ap += prec * rec / pos_total;
    }
    ap
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Quantized-AP loss with reliability weighting.
///
/// Queries are drawn from pixels of A with a correspondence at `query_ratio`
/// of the available descriptors. The positive is the most similar B
/// descriptor within `r_pos` of the ideal location. Distractors are the
/// one-pixel ring at distance `r_neg` around the positive plus a random
/// `query_ratio` sample of B outside the `r_neg` disk around the ideal
/// location.
pub fn r2d2_ap_loss(
    desc_a: &DenseFeatureMap,
    desc_b: &DenseFeatureMap,
    rel_a: &Grid<f32>,
    corr: &CorrespondenceField,
    params: &R2d2LossParams,
    step: u64,
    seed: u64,
) -> Result<f64> {
    if !rel_a.same_shape(&desc_a.detection) || !corr.map.same_shape(&desc_a.detection) {
        return Err(Error::Invalid("reliability/correspondence shape differs from map A".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kappa = kappa_schedule(params, step);
    let valid = corr.valid();
    let (wa, ha) = (desc_a.width(), desc_a.height());
    let (wb, hb) = (desc_b.width(), desc_b.height());
    let n_q = ((wa * ha) as f64 * params.query_ratio).round().max(1.0) as usize;
    let n_q = n_q.min(valid.len());
    if n_q == 0 {
        return Ok(0.0);
    }
    let queries: Vec<_> = sample(&mut rng, valid.len(), n_q).into_iter().map(|i| valid[i]).collect();
    let n_g = ((wb * hb) as f64 * params.query_ratio).round().max(1.0) as usize;
    let global: Vec<(usize, usize)> =
        sample(&mut rng, wb * hb, n_g.min(wb * hb)).into_iter().map(|i| (i % wb, i / wb)).collect();

    let in_radius = |cx: f64, cy: f64, r: f64| {
        let (x0, x1) = ((cx - r).ceil().max(0.0) as usize, (cx + r).floor().min(wb as f64 - 1.0));
        let (y0, y1) = ((cy - r).ceil().max(0.0) as usize, (cy + r).floor().min(hb as f64 - 1.0));
        let mut out = Vec::new();
        if x1 < 0.0 || y1 < 0.0 {
            return out;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                if (x as f64 - cx).hypot(y as f64 - cy) <= r {
                    out.push((x, y));
                }
            }
        }
        out
    };

    let mut total = 0.0;
    let mut used = 0usize;
    for (qx, qy, [gx, gy]) in queries {
        let q = desc_a.descriptor(qx, qy);
        let (gx, gy) = (gx as f64, gy as f64);
        let Some((px, py)) = in_radius(gx, gy, params.r_pos)
            .into_iter()
            .map(|(x, y)| ((x, y), dot(q, desc_b.descriptor(x, y))))
            .max_by(|a, b| a.1.total_cmp(&b.1).then((b.0 .1, b.0 .0).cmp(&(a.0 .1, a.0 .0))))
            .map(|(p, _)| p)
        else {
            continue;
        };
        let mut sims = vec![dot(q, desc_b.descriptor(px, py))];
        let r = params.r_neg;
        for (x, y) in in_radius(px as f64, py as f64, r + 0.5) {
            let d = (x as f64 - px as f64).hypot(y as f64 - py as f64);
            if (d - r).abs() < 0.5 {
                sims.push(dot(q, desc_b.descriptor(x, y)));
            }
        }
        for &(x, y) in &global {
            if (x as f64 - gx).hypot(y as f64 - gy) > r {
                sims.push(dot(q, desc_b.descriptor(x, y)));
            }
        }
        let ap = ap_quantized(&sims, 0, params.ap_bins);
        let rq = *rel_a.get(qx, qy) as f64;
        total += ap * rq + kappa * (1.0 - rq);
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { -total / used as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2d2Components {
    pub ap: f64,
    pub cosim: f64,
    pub peaky: f64,
}

/// `L_AP + a·L_cosim + b·L_peaky` with `a = 2(1−β)α`, `b = 2βα`.
pub fn r2d2_total_loss(c: &R2d2Components, alpha: f64, beta: f64) -> f64 {
    let a = 2.0 * (1.0 - beta) * alpha;
    let b = 2.0 * beta * alpha;
    c.ap + a * c.cosim + b * c.peaky
}
