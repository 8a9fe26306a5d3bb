use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AshaParams {
    pub eta: u64,
    pub r0: u64,
    pub r_max: u64,
    pub total_trials: usize,
}

impl Default for AshaParams {
    fn default() -> Self {
        Self { eta: 3, r0: 1500, r_max: 24000, total_trials: 243 }
    }
}

impl AshaParams {
    pub fn validate(&self) -> Result<()> {
        if self.eta < 2 || self.r0 == 0 || self.r_max < self.r0 || self.total_trials == 0 {
            return Err(Error::Invalid(format!("invalid ASHA parameters {self:?}")));
        }
        Ok(())
    }

    /// Decision points `r0·η^k < r_max`.
    pub fn rungs(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut r = self.r0;
        while r < self.r_max {
            out.push(r);
            r = match r.checked_mul(self.eta) {
                Some(v) => v,
                None => break,
            };
        }
        out
    }

    pub fn rung_index(&self, resource: u64) -> Option<usize> {
        self.rungs().iter().position(|&r| r == resource)
    }

    /// Resource checkpoints at which a trial reports: every `r0` up to `r_max`.
    pub fn report_points(&self) -> Vec<u64> {
        let mut v: Vec<u64> = (1..).map(|k| k * self.r0).take_while(|&r| r < self.r_max).collect();
        v.push(self.r_max);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Continue,
    Stop,
    /// Report between rungs; no decision is taken.
    Pass,
}

/// Top-`1/η` test: `score` is kept when fewer than `n/η` recorded scores
/// strictly exceed it. `rung_scores` includes `score` itself.
pub fn in_top_fraction(score: f64, rung_scores: &[f64], eta: u64) -> bool {
    let better = rung_scores.iter().filter(|&&s| s > score).count() as u64;
    better * eta < rung_scores.len() as u64
}

/// Scores recorded so far at each rung.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RungTable {
    pub scores: Vec<Vec<f64>>,
}

impl RungTable {
    pub fn new(n_rungs: usize) -> Self {
        Self { scores: vec![Vec::new(); n_rungs] }
    }
}

/// Records the report in `table` and decides whether the trial goes on.
pub fn asha_decide(resource: u64, score: f64, table: &mut RungTable, params: &AshaParams) -> Decision {
    if resource >= params.r_max {
        return Decision::Stop;
    }
    let Some(k) = params.rung_index(resource) else { return Decision::Pass };
    if table.scores.len() <= k {
        table.scores.resize(k + 1, Vec::new());
    }
    table.scores[k].push(score);
    if in_top_fraction(score, &table.scores[k], params.eta) {
        Decision::Continue
    } else {
        Decision::Stop
    }
}
