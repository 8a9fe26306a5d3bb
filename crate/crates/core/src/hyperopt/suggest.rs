use super::gp::{fit_surrogate, GpParams, Surrogate};
use super::space::{Config, SearchSpace};
use crate::error::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Pi,
    Ei,
    Ucb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuggestParams {
    /// Random trials drawn from the initial sub-ranges before the first fit.
    pub n_initial: usize,
    pub n_candidates: usize,
    pub n_local: usize,
    pub local_steps: usize,
    /// Improvement margin for PI and EI.
    pub xi: f64,
    /// Exploration weight for UCB.
    pub kappa: f64,
    pub gp: GpParams,
}

impl Default for SuggestParams {
    fn default() -> Self {
        Self {
            n_initial: 10,
            n_candidates: 10_000,
            n_local: 5,
            local_steps: 50,
            xi: 0.01,
            kappa: 1.96,
            gp: GpParams::default(),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Acquisition value for maximizing the score; `best` is the incumbent.
pub fn acquisition_value(kind: Acquisition, mean: f64, sd: f64, best: f64, xi: f64, kappa: f64) -> f64 {
    match kind {
        Acquisition::Ucb => mean + kappa * sd,
        Acquisition::Pi | Acquisition::Ei => {
            let imp = mean - best - xi;
            if sd <= 1e-12 {
                return match kind {
                    Acquisition::Pi => (imp > 0.0) as u8 as f64,
                    _ => imp.max(0.0),
                };
            }
            let z = imp / sd;
            let n = std_normal();
            match kind {
                Acquisition::Pi => n.cdf(z),
                _ => imp * n.cdf(z) + sd * n.pdf(z),
            }
        }
    }
}

/// Maximizes the acquisition over `[0, 1]^d`: random candidates followed by
/// projected gradient ascent from the best few. Ties in the acquisition,
/// such as regions where no improvement is expected, go to the higher
/// posterior mean.
pub fn maximize_acquisition<R: Rng + ?Sized>(
    s: &Surrogate,
    kind: Acquisition,
    best: f64,
    dim: usize,
    params: &SuggestParams,
    rng: &mut R,
) -> Vec<f64> {
    let f = |x: &[f64]| {
        let (m, sd) = s.predict(x);
        (acquisition_value(kind, m, sd, best, params.xi, params.kappa), m)
    };
    let better = |a: (f64, f64), b: (f64, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 > b.1);
    let cands: Vec<Vec<f64>> =
        (0..params.n_candidates.max(1)).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let vals: Vec<(f64, f64)> = cands.par_iter().map(|c| f(c)).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        vals[b].0.total_cmp(&vals[a].0).then(vals[b].1.total_cmp(&vals[a].1)).then(a.cmp(&b))
    });
    let starts: Vec<usize> = order.into_iter().take(params.n_local.max(1)).collect();
    let refined: Vec<(Vec<f64>, (f64, f64))> = starts
        .par_iter()
        .map(|&i| {
            let mut x = cands[i].clone();
            let mut fx = vals[i];
            let mut step = 0.05;
            let h = 1e-5;
            for _ in 0..params.local_steps {
                let grad = |pick: fn((f64, f64)) -> f64| -> Vec<f64> {
                    (0..dim)
                        .map(|k| {
                            let mut a = x.clone();
                            let mut b = x.clone();
                            a[k] = (a[k] + h).min(1.0);
                            b[k] = (b[k] - h).max(0.0);
                            let den = a[k] - b[k];
                            if den > 0.0 {
                                (pick(f(&a)) - pick(f(&b))) / den
                            } else {
                                0.0
                            }
                        })
                        .collect()
                };
                let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut g = grad(|v| v.0);
                if norm(&g) < 1e-12 {
                    g = grad(|v| v.1);
                }
                let gn = norm(&g);
                if gn < 1e-12 {
                    break;
                }
                let cand: Vec<f64> = x.iter().zip(&g).map(|(v, gv)| (v + step * gv / gn).clamp(0.0, 1.0)).collect();
                let fc = f(&cand);
                if better(fc, fx) {
                    x = cand;
                    fx = fc;
                } else {
                    step *= 0.5;
                    if step < 1e-6 {
                        break;
                    }
                }
            }
            (x, fx)
        })
        .collect();
    let mut it = refined.into_iter();
    let first = it.next().expect("at least one start");
    it.fold(first, |b, r| if better(r.1, b.1) { r } else { b }).0
}

/// Suggestion for the next trial.
///
/// `observations` are normalized configurations with their scores;
/// `pending` are suggestions still without a score, which are assigned the
/// worst observed score before the acquisition is maximized.
pub fn suggest(
    space: &SearchSpace,
    observations: &[(Vec<f64>, f64)],
    pending: &[Vec<f64>],
    params: &SuggestParams,
    seed: u64,
) -> Result<Config> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if observations.len() < params.n_initial.max(2) {
        return Ok(space.sample_initial(&mut rng));
    }
    let surrogate = fit_surrogate(observations, &params.gp, rng.random())?;
    suggest_from(space, &surrogate, observations, pending, params, &mut rng)
}

pub fn suggest_from<R: Rng + ?Sized>(
    space: &SearchSpace,
    surrogate: &Surrogate,
    observations: &[(Vec<f64>, f64)],
    pending: &[Vec<f64>],
    params: &SuggestParams,
    rng: &mut R,
) -> Result<Config> {
    let worst = observations.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    let best = observations.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let liars: Vec<(Vec<f64>, f64)> = pending.iter().map(|p| (p.clone(), worst)).collect();
    let s = surrogate.condition(&liars)?;
    let kind = [Acquisition::Pi, Acquisition::Ei, Acquisition::Ucb][rng.random_range(0..3)];
    let x = maximize_acquisition(&s, kind, best, space.dim(), params, rng);
    Ok(space.denormalize(&x))
}
