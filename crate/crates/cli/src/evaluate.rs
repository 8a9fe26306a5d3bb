use crate::common::{ensure_dir, load_manifest, load_pair, required, stem};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::extract::level_file;
use crate::report::write_pair_results;
use navfeat::augment::prepare_validation_pair;
use navfeat::features::{extract_multiscale, extract_sparse, BaselineExtractor};
use navfeat::hyperopt::derive_seed;
use navfeat::io::{load_dfm1, PairRecord};
use navfeat::metrics::{aggregate_report, evaluate_pair, oracle_features};
use navfeat::pairing::ImagePair;
use navfeat::{PairResult, SparseFeatures};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

/// Where the sparse features of a pair come from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Oracle,
    Baseline,
    Maps(&'a Path),
}

impl Source<'_> {
    pub fn method(&self) -> String {
        match self {
            Self::Oracle => "oracle".into(),
            Self::Baseline => "baseline".into(),
            Self::Maps(d) => d.file_name().map_or("maps".into(), |n| n.to_string_lossy().into_owned()),
        }
    }
}

fn load_levels(dir: &Path, image: &str, cfg: &PipelineConfig) -> CliResult<SparseFeatures> {
    let s = stem(Path::new(image));
    let mut out = SparseFeatures::default();
    for j in 0.. {
        let path = dir.join(level_file(&s, j));
        if !path.exists() {
            if j == 0 {
                return Err(CliError::input(format!("missing feature map {}", path.display())));
            }
            break;
        }
        out.extend(extract_sparse(&load_dfm1(&path)?, &cfg.extract));
    }
    Ok(out)
}

/// Loads a pair, applying the validation crop when configured.
pub fn prepared_pair(dir: &Path, rec: &PairRecord, cfg: &PipelineConfig) -> CliResult<ImagePair> {
    let pair = load_pair(dir, rec)?;
    Ok(if cfg.eval.validation_crop { prepare_validation_pair(&pair, &cfg.augment)? } else { pair })
}

pub fn pair_features(
    pair: &ImagePair,
    rec: &PairRecord,
    source: Source,
    cfg: &PipelineConfig,
    seed: u64,
) -> CliResult<(SparseFeatures, SparseFeatures)> {
    Ok(match source {
        Source::Oracle => oracle_features(pair, cfg.eval.oracle_features, cfg.eval.oracle_dim, seed),
        Source::Baseline => (
            extract_multiscale(&pair.a.image.to_f32(), &BaselineExtractor, &cfg.extract)?,
            extract_multiscale(&pair.b.image.to_f32(), &BaselineExtractor, &cfg.extract)?,
        ),
        Source::Maps(d) => (load_levels(d, &rec.image_a, cfg)?, load_levels(d, &rec.image_b, cfg)?),
    })
}

fn evaluate_one(dir: &Path, rec: &PairRecord, source: Source, cfg: &PipelineConfig, idx: usize) -> CliResult<PairResult> {
    let pair = prepared_pair(dir, rec, cfg)?;
    let seed = derive_seed(cfg.seed, idx as u64, 30);
    let (fa, fb) = pair_features(&pair, rec, source, cfg, seed)?;
    let ev = evaluate_pair(&pair, &fa, &fb, &cfg.eval.params, seed)?;
    Ok(PairResult::from_evaluation(rec.pair_id(), &ev))
}

/// Evaluates every pair in the manifest and writes `pairs.csv`,
/// `report.csv` and `report.json` to the output directory.
pub fn run(cfg: &PipelineConfig, baseline: bool, oracle: bool) -> CliResult<()> {
    let manifest = required(&cfg.paths.manifest, "--manifest")?;
    let out = cfg.output_dir()?;
    let source = match (oracle, baseline, cfg.paths.features_dir.as_deref()) {
        (true, false, None) => Source::Oracle,
        (false, true, None) => Source::Baseline,
        (false, false, Some(d)) => Source::Maps(d),
        _ => return Err(CliError::input("choose exactly one of --oracle, --baseline and --features-dir")),
    };
    if cfg.eval.validation_crop && matches!(source, Source::Maps(_)) {
        return Err(CliError::input("validation_crop cannot be combined with precomputed feature maps"));
    }
    let (dir, rows) = load_manifest(manifest)?;
    let outcomes: Vec<CliResult<PairResult>> =
        rows.par_iter().enumerate().map(|(i, rec)| evaluate_one(&dir, rec, source, cfg, i)).collect();
    let mut results = Vec::new();
    let mut skipped = 0;
    for (rec, o) in rows.iter().zip(outcomes) {
        match o {
            Ok(r) => results.push(r),
            Err(e) => {
                log::warn!("skipping pair {}: {e}", rec.pair_id());
                skipped += 1;
            }
        }
    }
    if results.is_empty() {
        return Err(CliError::runtime(format!("none of the {} pairs could be evaluated", rows.len())));
    }
    ensure_dir(out)?;
    let hash = cfg.hash();
    write_pair_results(&out.join("pairs.csv"), &results)?;
    let report = aggregate_report(&source.method(), &hash, &results, skipped);
    let mut f = std::fs::File::create(out.join("report.csv"))?;
    report.write_csv(&mut f)?;
    writeln!(f, "# skipped pairs: {skipped}")?;
    std::fs::write(out.join("report.json"), report.to_json()? + "\n")?;
    for r in &report.rows {
        println!(
            "{} {}: M-Score {:.4}, fail {:.2}%, n = {}",
            report.method, r.subset, r.m_score, r.fail_pct, r.n
        );
    }
    if skipped > 0 {
        println!("{skipped} pairs skipped");
    }
    Ok(())
}
