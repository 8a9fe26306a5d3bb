use crate::common::{ensure_dir, list_files, required, stem};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use navfeat::io::{load_raw_image, save_png_u8, sidecar_paths};
use navfeat::preprocess::{filter_image, FilterOutcome};
use rayon::prelude::*;
use std::path::Path;

enum Row {
    Accepted,
    Rejected(String),
    Error(String),
}

fn process(path: &Path, out: &Path, cfg: &PipelineConfig) -> Row {
    let img = match load_raw_image(path) {
        Ok(i) => i,
        Err(e) => return Row::Error(e.to_string()),
    };
    match filter_image(&img, &cfg.preprocess) {
        FilterOutcome::Rejected(r) => Row::Rejected(r.to_string()),
        FilterOutcome::Accepted(img8) => {
            let dst = out.join(format!("{}.png", stem(path)));
            let copy_sidecars = || -> navfeat::Result<()> {
                save_png_u8(&dst, &img8)?;
                let (src_meta, src_geo) = sidecar_paths(path);
                let (dst_meta, dst_geo) = sidecar_paths(&dst);
                for (s, d) in [(src_meta, dst_meta), (src_geo, dst_geo)] {
                    if s.exists() {
                        std::fs::copy(&s, &d)?;
                    }
                }
                Ok(())
            };
            match copy_sidecars() {
                Ok(()) => Row::Accepted,
                Err(e) => Row::Error(e.to_string()),
            }
        }
    }
}

/// Converts every raw image in the input directory; rejected and unreadable
/// files get a row in `rejections.csv`.
pub fn run(cfg: &PipelineConfig) -> CliResult<()> {
    let input = required(&cfg.paths.input, "--input")?;
    let out = cfg.output_dir()?;
    let files = list_files(input, &["rawg", "png"])?;
    if files.is_empty() {
        return Err(CliError::input(format!("no inputs in {}", input.display())));
    }
    ensure_dir(out)?;
    let rows: Vec<Row> = files.par_iter().map(|f| process(f, out, cfg)).collect();

    let mut w = csv::Writer::from_path(out.join("rejections.csv"))?;
    w.write_record(["file", "status", "reason"])?;
    let mut accepted = 0;
    for (f, row) in files.iter().zip(&rows) {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match row {
            Row::Accepted => accepted += 1,
            Row::Rejected(r) => w.write_record([name.as_str(), "rejected", r])?,
            Row::Error(e) => {
                log::warn!("{name}: {e}");
                w.write_record([name.as_str(), "error", e])?
            }
        }
    }
    w.flush()?;

    let mut s = csv::Writer::from_path(out.join("summary.csv"))?;
    s.write_record(["available", "acceptable", "config_hash"])?;
    s.write_record([files.len().to_string(), accepted.to_string(), cfg.hash()])?;
    s.flush()?;
    println!("available {}, acceptable {accepted}", files.len());
    if accepted == 0 {
        return Err(CliError::input("no image passed screening"));
    }
    Ok(())
}
