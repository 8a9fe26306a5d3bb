use crate::common::{ensure_dir, load_manifest};
use crate::config::{ObjectiveKind, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::evaluate::{pair_features, prepared_pair, Source};
use navfeat::features::{label_matches, match_mutual_nn, multiscale_match};
use navfeat::hyperopt::{
    run_search, Config, Domain, Param, ParamKind, SearchOptions, SearchResult, SearchSpace, Suggester, TrialStatus,
};
use navfeat::io::PairRecord;
use navfeat::metrics::compute_pair_metrics;
use navfeat::pairing::ImagePair;
use navfeat::{Error, ExtractParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

/// Extraction parameters the pipeline-eval objective can tune.
const EXTRACT_KEYS: [&str; 4] = ["det_threshold", "feat_ratio", "nms_radius", "scales_per_octave"];

fn param(name: &str, kind: ParamKind, range: [f64; 2], initial: [f64; 2]) -> Param {
    Param {
        name: name.into(),
        symbol: name.into(),
        kind,
        range: Domain::Bounds(range),
        initial: Domain::Bounds(initial),
        display: None,
    }
}

/// Default space for the pipeline-eval objective.
pub fn extraction_space() -> SearchSpace {
    SearchSpace::new(vec![
        param("det_threshold", ParamKind::Uni, [0.0, 0.95], [0.3, 0.7]),
        param("feat_ratio", ParamKind::Log, [1e-4, 1e-2], [5e-4, 2e-3]),
        param("nms_radius", ParamKind::Int, [1.0, 4.0], [1.0, 2.0]),
    ])
    .expect("extraction space is valid")
}

fn resolve_space(cfg: &PipelineConfig) -> CliResult<SearchSpace> {
    let t = &cfg.tune;
    let space = match (t.preset, &t.space) {
        (Some(p), _) => SearchSpace::preset(p.name())?,
        (None, Some(s)) => s.clone(),
        (None, None) if t.objective == ObjectiveKind::PipelineEval => extraction_space(),
        (None, None) => return Err(CliError::input("no search space (use --preset or [tune.space])")),
    };
    if t.objective == ObjectiveKind::PipelineEval {
        if let Some(p) = space.params.iter().find(|p| !EXTRACT_KEYS.contains(&p.name.as_str())) {
            return Err(CliError::input(format!(
                "pipeline-eval can only tune {EXTRACT_KEYS:?}; parameter {} needs a training run",
                p.name
            )));
        }
    }
    Ok(space)
}

/// Smooth stand-in for a training curve: a bump in the normalized
/// configuration times a saturating progress term, plus small seeded noise.
pub fn synthetic_score(space: &SearchSpace, config: &Config, resource: u64, r_max: u64, seed: u64) -> navfeat::Result<f64> {
    let u = space.normalize(config)?;
    let target = |i: usize| (0.5 + 0.618_034 * i as f64).fract();
    let d = u.iter().enumerate().map(|(i, x)| (x - target(i)).powi(2)).sum::<f64>() / u.len() as f64;
    let progress = 1.0 - (-3.0 * resource as f64 / r_max as f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ resource.rotate_left(32));
    let noise = Normal::new(0.0, 0.005).expect("valid sd").sample(&mut rng);
    Ok((-8.0 * d).exp() * progress + noise)
}

fn apply_extract(base: &ExtractParams, config: &Config) -> navfeat::Result<ExtractParams> {
    let mut p = *base;
    for (k, v) in config {
        let x = v.as_f64().ok_or_else(|| Error::Config(format!("{k} must be numeric")))?;
        match k.as_str() {
            "det_threshold" => p.det_threshold = x,
            "feat_ratio" => p.feat_ratio = x,
            "nms_radius" => p.nms_radius = x.round().max(0.0) as usize,
            "scales_per_octave" => p.scales_per_octave = x.round().max(1.0) as u32,
            _ => return Err(Error::Config(format!("unknown extraction parameter {k}"))),
        }
    }
    Ok(p)
}

/// Mean M-Score of the baseline extractor over the first
/// `⌈n·resource/r_max⌉` validation pairs.
fn pipeline_score(
    pairs: &[(PairRecord, ImagePair)],
    cfg: &PipelineConfig,
    config: &Config,
    resource: u64,
    seed: u64,
) -> navfeat::Result<f64> {
    let mut local = cfg.clone();
    local.extract = apply_extract(&cfg.extract, config)?;
    let n = pairs.len() as u64;
    let used = ((n * resource).div_ceil(cfg.tune.asha.r_max)).clamp(1, n) as usize;
    let ep = &cfg.eval.params;
    let mut scores = Vec::new();
    for (rec, pair) in &pairs[..used] {
        let (fa, fb) = pair_features(pair, rec, Source::Baseline, &local, seed)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let raw = if ep.multiscale { multiscale_match(&fa, &fb, ep.level_factor).matches } else { match_mutual_nn(&fa, &fb) };
        let labeled = label_matches(&raw, &fa, &fb, &pair.corr_ab, ep.tolerance);
        if let Ok(m) = compute_pair_metrics(&labeled, &fa, &fb) {
            scores.push(m.m_score);
        }
    }
    if scores.is_empty() {
        return Err(Error::Invalid("no validation pair has defined metrics".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Serialize)]
struct BestOut<'a> {
    trial: usize,
    score: f64,
    resource: u64,
    config_hash: String,
    config: &'a Config,
}

fn write_outputs(cfg: &PipelineConfig, space: &SearchSpace, res: &SearchResult) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let mut w = csv::Writer::from_path(out.join("trials.csv"))?;
    w.write_record(["trial", "status", "resource", "score", "seed", "config"])?;
    for t in &res.trials {
        w.write_record([
            t.id.to_string(),
            serde_json::to_value(t.status)?.as_str().unwrap_or_default().to_string(),
            t.resource().to_string(),
            t.score().map_or(String::new(), |s| s.to_string()),
            t.seed.to_string(),
            serde_json::to_string(&t.config)?,
        ])?;
    }
    w.flush()?;
    let best = res.best_trial().ok_or_else(|| CliError::runtime("every trial failed"))?;
    if !space.contains(&best.config) {
        return Err(CliError::runtime(format!("best configuration of trial {} is outside the space", best.id)));
    }
    let text = toml::to_string(&BestOut {
        trial: best.id,
        score: best.score().unwrap_or(f64::NAN),
        resource: best.resource(),
        config_hash: cfg.hash(),
        config: &best.config,
    })
    .map_err(|e| CliError::runtime(e.to_string()))?;
    std::fs::write(out.join("best.toml"), text)?;
    Ok(())
}

/// Runs the search; the log goes to `search.jsonl` in the output directory.
pub fn run(cfg: &PipelineConfig, resume: bool, random: bool) -> CliResult<()> {
    let space = resolve_space(cfg)?;
    let out = cfg.output_dir()?;
    ensure_dir(out)?;
    let workers = if cfg.jobs == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { cfg.jobs };
    let opts = SearchOptions {
        asha: cfg.tune.asha,
        workers,
        seed: cfg.seed,
        suggester: if random { Suggester::Random } else { cfg.tune.suggester },
        log_path: Some(out.join("search.jsonl")),
        resume,
    };
    let r_max = cfg.tune.asha.r_max;
    let res = match cfg.tune.objective {
        ObjectiveKind::Synthetic => {
            let space_ref = &space;
            let objective = move |c: &Config, r: u64, s: u64| synthetic_score(space_ref, c, r, r_max, s);
            run_search(&objective, &space, &opts)?
        }
        ObjectiveKind::PipelineEval => {
            let manifest = cfg
                .paths
                .manifest
                .as_deref()
                .ok_or_else(|| CliError::input("pipeline-eval needs --manifest with validation pairs"))?;
            let (dir, rows) = load_manifest(manifest)?;
            let pairs: Vec<(PairRecord, ImagePair)> = rows
                .into_iter()
                .map(|r| prepared_pair(&dir, &r, cfg).map(|p| (r, p)))
                .collect::<CliResult<_>>()?;
            let objective = |c: &Config, r: u64, s: u64| pipeline_score(&pairs, cfg, c, r, s);
            run_search(&objective, &space, &opts)?
        }
    };
    write_outputs(cfg, &space, &res)?;
    let failed = res.trials.iter().filter(|t| t.status == TrialStatus::Failed).count();
    println!(
        "{} trials ({} failed), {} at full resource, total resource {}",
        res.trials.len(),
        failed,
        res.full_resource_trials(&cfg.tune.asha),
        res.total_resource
    );
    if let Some(b) = res.best_trial() {
        println!("best trial {} with score {:.6}", b.id, b.score().unwrap_or(f64::NAN));
    }
    Ok(())
}
