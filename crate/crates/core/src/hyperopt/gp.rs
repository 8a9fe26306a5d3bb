//! Gaussian-process regression with an ARD Matérn-5/2 kernel plus white
//! noise, fitted by maximizing the log marginal likelihood.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const SQRT5: f64 = 2.23606797749979;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpParams {
    pub restarts: usize,
    pub max_iterations: usize,
    pub length_scale_bounds: [f64; 2],
    pub signal_variance_bounds: [f64; 2],
    pub noise_variance_bounds: [f64; 2],
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 100,
            length_scale_bounds: [0.01, 100.0],
            signal_variance_bounds: [0.01, 1000.0],
            noise_variance_bounds: [1e-10, 10.0],
        }
    }
}

/// Fitted surrogate. Targets are standardized internally.
#[derive(Debug, Clone)]
pub struct Surrogate {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    /// Per-dimension length scales in normalized parameter space.
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    /// White-noise variance in standardized target units.
    pub noise_variance: f64,
    pub log_marginal_likelihood: f64,
    /// False when the inputs were degenerate and only a mean and noise level
    /// were fitted.
    pub is_gp: bool,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    y: DVector<f64>,
}

#[inline]
fn matern(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_r(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
}

/// Hyperparameters in log space: `[ln σf², ln l_1 … ln l_d, ln σn²]`.
struct Objective<'a> {
    x: &'a [Vec<f64>],
    y: &'a DVector<f64>,
}

struct Evaluation {
    lml: f64,
    grad: Vec<f64>,
}

fn kernel_matrix(x: &[Vec<f64>], sf2: f64, ls: &[f64], sn2: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| sf2 * matern(scaled_r(&x[i], &x[j], ls)) + if i == j { sn2 } else { 0.0 })
}

fn cholesky_jitter(mut k: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(k.clone()) {
            return Some(c);
        }
        let add = if jitter == 0.0 { 1e-10 } else { jitter * 9.0 };
        for i in 0..k.nrows() {
            k[(i, i)] += add;
        }
        jitter += add;
    }
    None
}

impl Objective<'_> {
    fn eval(&self, theta: &[f64]) -> Option<Evaluation> {
        let d = theta.len() - 2;
        let n = self.x.len();
        let sf2 = theta[0].exp();
        let ls: Vec<f64> = theta[1..=d].iter().map(|v| v.exp()).collect();
        let sn2 = theta[d + 1].exp();
        let k = kernel_matrix(self.x, sf2, &ls, sn2);
        let chol = cholesky_jitter(k)?;
        let alpha = chol.solve(self.y);
        let logdet: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum();
        let lml = -0.5 * self.y.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let kinv = chol.inverse();
        let mut grad = vec![0.0; d + 2];
        for i in 0..n {
            for j in 0..n {
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                if i == j {
                    grad[0] += 0.5 * w * sf2;
                    grad[d + 1] += 0.5 * w * sn2;
                    continue;
                }
                let r = scaled_r(&self.x[i], &self.x[j], &ls);
                let s = SQRT5 * r;
                grad[0] += 0.5 * w * sf2 * matern(r);
                let c = 0.5 * w * sf2 * (5.0 / 3.0) * (1.0 + s) * (-s).exp();
                for (q, l) in ls.iter().enumerate() {
                    grad[1 + q] += c * ((self.x[i][q] - self.x[j][q]) / l).powi(2);
                }
            }
        }
        Some(Evaluation { lml, grad })
    }
}

/// Projected L-BFGS ascent inside the box `[lo, hi]`.
fn maximize(obj: &Objective<'_>, start: Vec<f64>, lo: &[f64], hi: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let project = |t: &mut Vec<f64>| {
        for ((v, a), b) in t.iter_mut().zip(lo).zip(hi) {
            *v = v.clamp(*a, *b);
        }
    };
    let mut theta = start;
    project(&mut theta);
    let Some(mut cur) = obj.eval(&theta) else { return (theta, f64::NEG_INFINITY) };
    let mut hist: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let m = 8;
    for _ in 0..max_iter {
        // two-loop recursion on the negated objective
        let mut q: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
        let mut coeffs = Vec::with_capacity(hist.len());
        for (s, y) in hist.iter().rev() {
            let rho = 1.0 / dotv(y, s);
            let a = rho * dotv(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            coeffs.push((rho, a));
        }
        if let Some((s, y)) = hist.last() {
            let gamma = dotv(s, y) / dotv(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (rho, a)) in hist.iter().zip(coeffs.into_iter().rev()) {
            let b = rho * dotv(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dotv(&dir, &cur.grad) <= 0.0 {
            dir = cur.grad.clone();
            hist.clear();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            project(&mut cand);
            let moved: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            if dotv(&moved, &moved) < 1e-24 {
                break;
            }
            if let Some(e) = obj.eval(&cand) {
                if e.lml >= cur.lml + 1e-4 * dotv(&cur.grad, &moved) {
                    accepted = Some((cand, e, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, e, s)) = accepted else { break };
        let y: Vec<f64> = cur.grad.iter().zip(&e.grad).map(|(a, b)| a - b).collect();
        let improvement = e.lml - cur.lml;
        if dotv(&s, &y) > 1e-12 {
            hist.push((s, y));
            if hist.len() > m {
                hist.remove(0);
            }
        }
        theta = cand;
        cur = e;
        if improvement.abs() < 1e-9 {
            break;
        }
    }
    (theta, cur.lml)
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits a fresh surrogate to `(normalized input, score)` observations.
pub fn fit_surrogate(observations: &[(Vec<f64>, f64)], params: &GpParams, seed: u64) -> Result<Surrogate> {
    if observations.len() < 2 {
        return Err(Error::NotEnoughMatches { need: 2, got: observations.len() });
    }
    let d = observations[0].0.len();
    if observations.iter().any(|(x, y)| x.len() != d || !y.is_finite()) {
        return Err(Error::Invalid("observations must share dimension and have finite scores".into()));
    }
    let x: Vec<Vec<f64>> = observations.iter().map(|o| o.0.clone()).collect();
    let ys: Vec<f64> = observations.iter().map(|o| o.1).collect();
    let n = ys.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let y_scale = if sd > 1e-12 { sd } else { 1.0 };
    let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_scale));

    let degenerate = x.iter().all(|xi| xi.iter().zip(&x[0]).all(|(a, b)| (a - b).abs() < 1e-12));
    if degenerate {
        return Ok(Surrogate {
            x,
            y_mean,
            y_scale,
            length_scales: vec![params.length_scale_bounds[1]; d],
            signal_variance: 0.0,
            noise_variance: (y.norm_squared() / n).max(params.noise_variance_bounds[0]),
            log_marginal_likelihood: f64::NAN,
            is_gp: false,
            chol: None,
            alpha: DVector::zeros(0),
            y,
        });
    }

    let mut lo = vec![params.signal_variance_bounds[0].ln()];
    let mut hi = vec![params.signal_variance_bounds[1].ln()];
    lo.extend(std::iter::repeat_n(params.length_scale_bounds[0].ln(), d));
    hi.extend(std::iter::repeat_n(params.length_scale_bounds[1].ln(), d));
    lo.push(params.noise_variance_bounds[0].ln());
    hi.push(params.noise_variance_bounds[1].ln());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![{
        let mut t = vec![0.0; d + 2];
        t[d + 1] = (1e-2f64).ln();
        t
    }];
    for _ in 1..params.restarts.max(1) {
        starts.push(lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..=*b)).collect());
    }
    let obj = Objective { x: &x, y: &y };
    let results: Vec<(Vec<f64>, f64)> =
        starts.into_par_iter().map(|s| maximize(&obj, s, &lo, &hi, params.max_iterations)).collect();
    let (theta, lml) = results
        .into_iter()
        .fold((Vec::new(), f64::NEG_INFINITY), |best, r| if r.1 > best.1 { r } else { best });
    if theta.is_empty() {
        return Err(Error::EstimationFailed);
    }
    let sf2 = theta[0].exp();
    let ls: Vec<f64> = theta[1..=d].iter().map(|v| v.exp()).collect();
    let sn2 = theta[d + 1].exp();
    Surrogate::assemble(x, y_mean, y_scale, &y, ls, sf2, sn2, lml)
}

impl Surrogate {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        x: Vec<Vec<f64>>,
        y_mean: f64,
        y_scale: f64,
        y: &DVector<f64>,
        length_scales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        lml: f64,
    ) -> Result<Self> {
        let k = kernel_matrix(&x, signal_variance, &length_scales, noise_variance);
        let chol = cholesky_jitter(k).ok_or(Error::EstimationFailed)?;
        let alpha = chol.solve(y);
        Ok(Self {
            x,
            y_mean,
            y_scale,
            length_scales,
            signal_variance,
            noise_variance,
            log_marginal_likelihood: lml,
            is_gp: true,
            chol: Some(chol),
            alpha,
            y: y.clone(),
        })
    }

    /// Posterior mean and latent standard deviation in score units.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let Some(chol) = &self.chol else {
            return (self.y_mean, self.noise_variance.sqrt() * self.y_scale);
        };
        let kstar = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.signal_variance * matern(scaled_r(xi, q, &self.length_scales))),
        );
        let mean = kstar.dot(&self.alpha);
        let v = chol.l_dirty().solve_lower_triangular(&kstar).unwrap_or_else(|| DVector::zeros(self.x.len()));
        let var = (self.signal_variance - v.norm_squared()).max(0.0);
        (mean * self.y_scale + self.y_mean, var.sqrt() * self.y_scale)
    }

    /// Same hyperparameters conditioned on additional observations.
    pub fn condition(&self, extra: &[(Vec<f64>, f64)]) -> Result<Self> {
        if extra.is_empty() || !self.is_gp {
            return Ok(self.clone());
        }
        let mut x = self.x.clone();
        let mut ys: Vec<f64> = self.y.iter().map(|v| v * self.y_scale + self.y_mean).collect();
        for (xi, yi) in extra {
            x.push(xi.clone());
            ys.push(*yi);
        }
        let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - self.y_mean) / self.y_scale));
        Self::assemble(
            x,
            self.y_mean,
            self.y_scale,
            &y,
            self.length_scales.clone(),
            self.signal_variance,
            self.noise_variance,
            f64::NAN,
        )
    }

    pub fn n_observations(&self) -> usize {
        self.x.len()
    }
}
