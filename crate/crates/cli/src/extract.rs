use crate::common::{ensure_dir, list_files, load_manifest, stem};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use navfeat::features::{build_pyramid, BaselineExtractor};
use navfeat::io::{load_png_u8, save_dfm1};
use navfeat::DenseExtractor;
use std::collections::BTreeSet;
use std::path::PathBuf;

/// Name of the DFM1 file holding pyramid level `level` of image `stem`.
pub fn level_file(stem: &str, level: usize) -> String {
    format!("{stem}.{level}.dfm")
}

/// Writes one baseline DFM1 map per pyramid level of every image.
pub fn run(cfg: &PipelineConfig) -> CliResult<()> {
    let out = cfg.output_dir()?;
    let images: Vec<PathBuf> = if let Some(m) = &cfg.paths.manifest {
        let (dir, rows) = load_manifest(m)?;
        let set: BTreeSet<PathBuf> = rows.iter().flat_map(|r| [dir.join(&r.image_a), dir.join(&r.image_b)]).collect();
        set.into_iter().collect()
    } else if let Some(input) = &cfg.paths.input {
        list_files(input, &["png"])?
    } else {
        return Err(CliError::input("extract needs --input or --manifest"));
    };
    if images.is_empty() {
        return Err(CliError::input("no images to extract"));
    }
    ensure_dir(out)?;
    let ex = &cfg.extract;
    for path in &images {
        let img = load_png_u8(path)?.to_f32();
        for (j, level) in build_pyramid(&img, ex.scales_per_octave, ex.min_side).iter().enumerate() {
            let map = BaselineExtractor.extract(&level.image, level.scale)?;
            save_dfm1(&out.join(level_file(&stem(path), j)), &map)?;
        }
        log::info!("extracted {}", path.display());
    }
    println!("{} images extracted to {}", images.len(), out.display());
    Ok(())
}
