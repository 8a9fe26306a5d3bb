use super::asha::{asha_decide, AshaParams, Decision, RungTable};
use super::space::{Config, SearchSpace};
use super::suggest::{suggest, SuggestParams};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// A trainable or evaluable target scored at a given resource level.
///
/// Must be deterministic given `(config, resource, seed)`.
pub trait Objective: Sync {
    fn evaluate(&self, config: &Config, resource: u64, seed: u64) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&Config, u64, u64) -> Result<f64> + Sync,
{
    fn evaluate(&self, config: &Config, resource: u64, seed: u64) -> Result<f64> {
        self(config, resource, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Stopped,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub config: Config,
    pub seed: u64,
    /// `(resource, score)` in increasing resource order.
    pub reports: Vec<(u64, f64)>,
    pub status: TrialStatus,
    pub error: Option<String>,
}

impl Trial {
    /// Maximum score over all reports; `None` for failed or unreported trials.
    pub fn score(&self) -> Option<f64> {
        if self.status == TrialStatus::Failed {
            return None;
        }
        self.reports.iter().map(|r| r.1).reduce(f64::max)
    }

    pub fn resource(&self) -> u64 {
        self.reports.last().map_or(0, |r| r.0)
    }

    pub fn is_settled(&self) -> bool {
        self.status != TrialStatus::Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Suggester {
    Gp(SuggestParams),
    Random,
}

impl Default for Suggester {
    fn default() -> Self {
        Self::Gp(SuggestParams::default())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub asha: AshaParams,
    pub workers: usize,
    pub seed: u64,
    pub suggester: Suggester,
    pub log_path: Option<PathBuf>,
    /// Continue from the trials already settled in `log_path`.
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Start,
    Report,
    Complete,
    Stop,
    Fail,
}

/// One line of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub event: EventKind,
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl LogEvent {
    fn new(event: EventKind, trial: usize) -> Self {
        Self { event, trial, config: None, resource: None, score: None, decision: None, message: None }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    pub best: Option<usize>,
    pub total_resource: u64,
    pub events: Vec<LogEvent>,
}

impl SearchResult {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }

    /// Trials that reached the maximum resource.
    pub fn full_resource_trials(&self, asha: &AshaParams) -> usize {
        self.trials.iter().filter(|t| t.status == TrialStatus::Completed && t.resource() >= asha.r_max).count()
    }
}

/// Seed stream derived from the search seed and a trial id.
pub fn derive_seed(seed: u64, id: u64, stream: u64) -> u64 {
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reads a search log.
pub fn read_log(path: &Path) -> Result<Vec<LogEvent>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("search log line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

struct Scheduler<'a> {
    space: &'a SearchSpace,
    opts: &'a SearchOptions,
    trials: Vec<Trial>,
    table: RungTable,
    requeue: VecDeque<usize>,
    events: Vec<LogEvent>,
    log: Option<File>,
    log_error: Option<Error>,
}

impl<'a> Scheduler<'a> {
    fn new(space: &'a SearchSpace, opts: &'a SearchOptions) -> Result<Self> {
        let mut s = Self {
            space,
            opts,
            trials: Vec::new(),
            table: RungTable::new(opts.asha.rungs().len()),
            requeue: VecDeque::new(),
            events: Vec::new(),
            log: None,
            log_error: None,
        };
        if let Some(path) = &opts.log_path {
            if opts.resume && path.exists() {
                s.restore(read_log(path)?)?;
            }
            let mut o = OpenOptions::new();
            o.create(true);
            if opts.resume {
                o.append(true);
            } else {
                o.write(true).truncate(true);
            }
            s.log = Some(o.open(path)?);
        }
        Ok(s)
    }

    /// Rebuilds settled trials and the rung table; unsettled trials are queued
    /// to rerun from scratch with their logged configuration.
    fn restore(&mut self, events: Vec<LogEvent>) -> Result<()> {
        let bad = |m: &str| Error::Format(format!("search log: {m}"));
        for e in &events {
            if e.event == EventKind::Start {
                let config = e.config.clone().ok_or_else(|| bad("start without config"))?;
                if e.trial > self.trials.len() {
                    return Err(bad("non-contiguous trial ids"));
                }
                let t = Trial {
                    id: e.trial,
                    config,
                    seed: derive_seed(self.opts.seed, e.trial as u64, 0),
                    reports: Vec::new(),
                    status: TrialStatus::Running,
                    error: None,
                };
                if e.trial == self.trials.len() {
                    self.trials.push(t);
                } else {
                    self.trials[e.trial] = t;
                }
                continue;
            }
            let t = self.trials.get_mut(e.trial).ok_or_else(|| bad("event before start"))?;
            match e.event {
                EventKind::Report => {
                    let r = e.resource.ok_or_else(|| bad("report without resource"))?;
                    let s = e.score.ok_or_else(|| bad("report without score"))?;
                    t.reports.push((r, s));
                }
                EventKind::Complete => t.status = TrialStatus::Completed,
                EventKind::Stop => t.status = TrialStatus::Stopped,
                EventKind::Fail => {
                    t.status = TrialStatus::Failed;
                    t.error = e.message.clone();
                }
                EventKind::Start => unreachable!(),
            }
        }
        for e in &events {
            if e.event == EventKind::Report && self.trials[e.trial].is_settled() {
                if let (Some(r), Some(s)) = (e.resource, e.score) {
                    if let Some(k) = self.opts.asha.rung_index(r) {
                        self.table.scores[k].push(s);
                    }
                }
            }
        }
        for t in &mut self.trials {
            if !t.is_settled() {
                t.reports.clear();
                self.requeue.push_back(t.id);
            }
        }
        self.events = events;
        Ok(())
    }

    fn emit(&mut self, e: LogEvent) {
        if let Some(f) = &mut self.log {
            let line = serde_json::to_string(&e).expect("log event serializes");
            if let Err(err) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                self.log_error.get_or_insert(err.into());
            }
        }
        self.events.push(e);
    }

    fn observations(&self) -> (Vec<(Vec<f64>, f64)>, Vec<Vec<f64>>) {
        let mut obs = Vec::new();
        let mut pending = Vec::new();
        for t in &self.trials {
            let Ok(x) = self.space.normalize(&t.config) else { continue };
            match (t.status, t.score()) {
                (TrialStatus::Running, _) => pending.push(x),
                (_, Some(s)) => obs.push((x, s)),
                _ => {}
            }
        }
        (obs, pending)
    }

    fn propose(&self, id: usize) -> Config {
        let seed = derive_seed(self.opts.seed, id as u64, 1);
        match &self.opts.suggester {
            Suggester::Random => self.space.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
            Suggester::Gp(p) => {
                let (obs, pending) = self.observations();
                suggest(self.space, &obs, &pending, p, seed).unwrap_or_else(|e| {
                    log::warn!("trial {id}: suggestion failed ({e}); sampling at random");
                    self.space.sample(&mut ChaCha8Rng::seed_from_u64(seed))
                })
            }
        }
    }

    fn next_trial(&mut self) -> Option<(usize, Config, u64)> {
        let id = match self.requeue.pop_front() {
            Some(id) => id,
            None if self.trials.len() < self.opts.asha.total_trials => {
                let id = self.trials.len();
                let config = self.propose(id);
                self.trials.push(Trial {
                    id,
                    config,
                    seed: derive_seed(self.opts.seed, id as u64, 0),
                    reports: Vec::new(),
                    status: TrialStatus::Running,
                    error: None,
                });
                id
            }
            None => return None,
        };
        let t = &self.trials[id];
        let (config, seed) = (t.config.clone(), t.seed);
        let mut e = LogEvent::new(EventKind::Start, id);
        e.config = Some(config.clone());
        self.emit(e);
        Some((id, config, seed))
    }

    fn report(&mut self, id: usize, resource: u64, score: f64) -> Decision {
        let decision = asha_decide(resource, score, &mut self.table, &self.opts.asha);
        self.trials[id].reports.push((resource, score));
        let mut e = LogEvent::new(EventKind::Report, id);
        e.resource = Some(resource);
        e.score = Some(score);
        e.decision = Some(decision);
        self.emit(e);
        if decision == Decision::Stop {
            let t = &mut self.trials[id];
            let kind = if resource >= self.opts.asha.r_max {
                t.status = TrialStatus::Completed;
                EventKind::Complete
            } else {
                t.status = TrialStatus::Stopped;
                EventKind::Stop
            };
            let mut e = LogEvent::new(kind, id);
            e.resource = Some(resource);
            e.score = t.score();
            self.emit(e);
        }
        decision
    }

    fn fail(&mut self, id: usize, message: String) {
        log::warn!("trial {id} failed: {message}");
        let t = &mut self.trials[id];
        t.status = TrialStatus::Failed;
        t.error = Some(message.clone());
        let mut e = LogEvent::new(EventKind::Fail, id);
        e.message = Some(message);
        self.emit(e);
    }

    fn finish(self) -> Result<SearchResult> {
        if let Some(e) = self.log_error {
            return Err(e);
        }
        let best = self
            .trials
            .iter()
            .filter_map(|t| t.score().map(|s| (t.id, s)))
            .fold(None, |b: Option<(usize, f64)>, c| match b {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
            .map(|b| b.0);
        let total_resource = self.trials.iter().map(Trial::resource).sum();
        Ok(SearchResult { trials: self.trials, best, total_resource, events: self.events })
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn worker(sched: &Mutex<Scheduler<'_>>, objective: &dyn Objective, points: &[u64]) {
    let lock = || sched.lock().unwrap_or_else(|p| p.into_inner());
    loop {
        let Some((id, config, seed)) = lock().next_trial() else { return };
        for &r in points {
            let out = catch_unwind(AssertUnwindSafe(|| objective.evaluate(&config, r, seed)));
            let score = match out {
                Ok(Ok(s)) if s.is_finite() => s,
                Ok(Ok(s)) => {
                    lock().fail(id, format!("non-finite score {s} at resource {r}"));
                    break;
                }
                Ok(Err(e)) => {
                    lock().fail(id, e.to_string());
                    break;
                }
                Err(p) => {
                    lock().fail(id, panic_message(p));
                    break;
                }
            };
            if lock().report(id, r, score) == Decision::Stop {
                break;
            }
        }
    }
}

/// Runs ASHA with the configured suggester until `total_trials` trials are
/// created and settled.
pub fn run_search(objective: &dyn Objective, space: &SearchSpace, opts: &SearchOptions) -> Result<SearchResult> {
    opts.asha.validate()?;
    space.validate()?;
    let sched = Mutex::new(Scheduler::new(space, opts)?);
    let points = opts.asha.report_points();
    let workers = opts.workers.max(1);
    if workers == 1 {
        worker(&sched, objective, &points);
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| worker(&sched, objective, &points));
            }
        });
    }
    sched.into_inner().unwrap_or_else(|p| p.into_inner()).finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperopt::space::{Domain, Param, ParamKind, Value};

    fn space2() -> SearchSpace {
        let p = |n: &str| Param {
            name: n.into(),
            symbol: n.into(),
            kind: ParamKind::Uni,
            range: Domain::Bounds([0.0, 1.0]),
            initial: Domain::Bounds([0.0, 1.0]),
            display: None,
        };
        SearchSpace::new(vec![p("a"), p("b")]).unwrap()
    }

    fn synthetic(c: &Config, r: u64, _seed: u64) -> Result<f64> {
        let a = c["a"].as_f64().unwrap();
        let b = c["b"].as_f64().unwrap();
        let q = 1.0 - (a - 0.3).powi(2) - (b - 0.6).powi(2);
        Ok(q * (1.0 - (-(r as f64) / 3000.0).exp()))
    }

    fn small() -> AshaParams {
        AshaParams { eta: 3, r0: 1, r_max: 9, total_trials: 27 }
    }

    #[test]
    fn smoke_27_trials() {
        let opts = SearchOptions { asha: small(), workers: 1, seed: 3, suggester: Suggester::Random, ..Default::default() };
        let res = run_search(&synthetic, &space2(), &opts).unwrap();
        assert_eq!(res.trials.len(), 27);
        assert!(res.trials.iter().all(Trial::is_settled));
        assert!(res.full_resource_trials(&opts.asha) >= 1);
        assert!(res.trials.iter().all(|t| t.resource() <= 9));
        for t in &res.trials {
            assert!(t.reports.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn failures_are_excluded() {
        let obj = |c: &Config, r: u64, s: u64| -> Result<f64> {
            let a = c["a"].as_f64().unwrap();
            if a < 0.2 {
                return Err(Error::Invalid("boom".into()));
            }
            if a > 0.9 {
                panic!("worker crash");
            }
            synthetic(c, r, s)
        };
        let opts = SearchOptions { asha: small(), workers: 3, seed: 1, suggester: Suggester::Random, ..Default::default() };
        let res = run_search(&obj, &space2(), &opts).unwrap();
        assert_eq!(res.trials.len(), 27);
        let failed: Vec<&Trial> = res.trials.iter().filter(|t| t.status == TrialStatus::Failed).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|t| t.score().is_none()));
        let best = res.best_trial().unwrap();
        assert_ne!(best.status, TrialStatus::Failed);
    }

    #[test]
    fn sequential_is_deterministic_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let params = SuggestParams { n_candidates: 200, local_steps: 5, ..Default::default() };
        let opts = SearchOptions {
            asha: small(),
            workers: 1,
            seed: 9,
            suggester: Suggester::Gp(params),
            log_path: Some(path.clone()),
            resume: false,
        };
        let full = run_search(&synthetic, &space2(), &opts).unwrap();
        let again = run_search(&synthetic, &space2(), &SearchOptions { log_path: None, ..opts.clone() }).unwrap();
        assert_eq!(full.trials, again.trials);

        // truncate the log in the middle of a trial and resume
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines.iter().position(|l| l.contains("\"trial\":15") && l.contains("report")).unwrap() + 1;
        std::fs::write(&path, lines[..cut].join("\n") + "\n").unwrap();
        let resumed = run_search(&synthetic, &space2(), &SearchOptions { resume: true, ..opts }).unwrap();
        assert_eq!(resumed.trials, full.trials);
        assert_eq!(resumed.total_resource, full.total_resource);
        let replay = read_log(&path).unwrap();
        assert!(replay.iter().any(|e| e.event == EventKind::Complete));
    }

    #[test]
    fn config_round_trips_through_log() {
        let mut c = Config::new();
        c.insert("h".into(), Value::Int(8));
        c.insert("wd".into(), Value::Float(2.0));
        c.insert("synth".into(), Value::Label("true".into()));
        let mut e = LogEvent::new(EventKind::Start, 0);
        e.config = Some(c);
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<LogEvent>(&s).unwrap(), e);
    }
}
