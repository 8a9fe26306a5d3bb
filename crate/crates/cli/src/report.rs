use crate::common::{ensure_dir, num};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use navfeat::metrics::aggregate_report;
use navfeat::pairing::Difficulty;
use navfeat::{DatasetReport, PairMetrics, PairResult};
use std::path::{Path, PathBuf};

const PAIR_HEADER: [&str; 12] = [
    "pair_id",
    "difficulty",
    "m_score",
    "mma",
    "map",
    "le_px",
    "proposed",
    "possible",
    "correct",
    "pose_failed",
    "orientation_error",
    "inliers",
];

/// Per-pair results; metric columns are empty when undefined.
pub fn write_pair_results(path: &Path, results: &[PairResult]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PAIR_HEADER)?;
    for r in results {
        let m = r.metrics;
        let count = |f: fn(&PairMetrics) -> usize| m.as_ref().map_or(String::new(), |m| f(m).to_string());
        w.write_record([
            r.pair_id.clone(),
            r.difficulty.to_string(),
            num(m.map(|m| m.m_score)),
            num(m.map(|m| m.mma)),
            num(m.map(|m| m.map)),
            num(m.map(|m| m.le_px)),
            count(|m| m.proposed),
            count(|m| m.possible),
            count(|m| m.correct),
            r.pose_failed.to_string(),
            r.orientation_error.to_string(),
            r.inliers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pair_results(path: &Path) -> CliResult<Vec<PairResult>> {
    let bad = |m: String| CliError::input(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    if r.headers()?.iter().ne(PAIR_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", PAIR_HEADER[i])));
        let u = |i: usize| rec[i].parse::<usize>().map_err(|e| bad(format!("{}: {e}", PAIR_HEADER[i])));
        let difficulty = match &rec[1] {
            "easy" => Difficulty::Easy,
            "hard" => Difficulty::Hard,
            d => return Err(bad(format!("unknown difficulty {d:?}"))),
        };
        let metrics = if rec[2].is_empty() {
            None
        } else {
            Some(PairMetrics {
                m_score: f(2)?,
                mma: f(3)?,
                map: f(4)?,
                le_px: f(5)?,
                proposed: u(6)?,
                possible: u(7)?,
                correct: u(8)?,
            })
        };
        out.push(PairResult {
            pair_id: rec[0].to_string(),
            difficulty,
            metrics,
            pose_failed: rec[9].parse().map_err(|_| bad("pose_failed".into()))?,
            orientation_error: f(10)?,
            inliers: u(11)?,
        });
    }
    Ok(out)
}

struct Run {
    dir: PathBuf,
    report: DatasetReport,
    results: Vec<PairResult>,
}

fn load_run(dir: &Path) -> CliResult<Run> {
    let text = std::fs::read_to_string(dir.join("report.json"))
        .map_err(|e| CliError::input(format!("{}: {e}", dir.join("report.json").display())))?;
    let saved: serde_json::Value = serde_json::from_str(&text)?;
    let field = |k: &str| saved.get(k).and_then(|v| v.as_str()).unwrap_or_default().to_string();
    let skipped = saved.get("skipped").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let results = read_pair_results(&dir.join("pairs.csv"))?;
    let report = aggregate_report(&field("method"), &field("config_hash"), &results, skipped);
    Ok(Run { dir: dir.to_path_buf(), report, results })
}

/// Re-aggregates evaluation outputs into `summary.csv` and writes
/// `orientation_errors.csv`, the sorted error curve of every run and subset.
pub fn run(cfg: &PipelineConfig, inputs: &[PathBuf]) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let runs: Vec<Run> = inputs.iter().map(|d| load_run(d)).collect::<CliResult<_>>()?;
    if runs.iter().all(|r| r.results.is_empty()) {
        return Err(CliError::input("no pair results in the inputs"));
    }
    ensure_dir(out)?;
    let mut summary = csv::Writer::from_path(out.join("summary.csv"))?;
    summary.write_record(["run", "method", "subset", "m_score", "fail_pct", "p50", "p85", "n", "skipped", "config_hash"])?;
    let mut curve = csv::Writer::from_path(out.join("orientation_errors.csv"))?;
    curve.write_record(["run", "method", "subset", "rank", "fraction", "error_deg"])?;
    for run in &runs {
        let name = run.dir.display().to_string();
        let rep = &run.report;
        for row in &rep.rows {
            summary.write_record([
                name.clone(),
                rep.method.clone(),
                row.subset.to_string(),
                format!("{:.6}", row.m_score),
                format!("{:.2}", row.fail_pct),
                num(row.p50),
                num(row.p85),
                row.n.to_string(),
                rep.skipped.to_string(),
                rep.config_hash.clone(),
            ])?;
            let mut errs: Vec<f64> = run
                .results
                .iter()
                .filter(|r| r.difficulty == row.subset)
                .map(|r| if r.pose_failed { f64::INFINITY } else { r.orientation_error })
                .collect();
            errs.sort_by(f64::total_cmp);
            for (k, e) in errs.iter().enumerate() {
                curve.write_record([
                    name.clone(),
                    rep.method.clone(),
                    row.subset.to_string(),
                    (k + 1).to_string(),
                    ((k + 1) as f64 / errs.len() as f64).to_string(),
                    e.to_string(),
                ])?;
            }
        }
    }
    summary.flush()?;
    curve.flush()?;
    println!("report for {} runs written to {}", runs.len(), out.display());
    Ok(())
}
