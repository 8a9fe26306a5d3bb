use crate::common::{ensure_dir, list_files, load_manifest, stem};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use navfeat::augment::{augment_pair, augment_single};
use navfeat::hyperopt::derive_seed;
use navfeat::io::{load_png_u8, save_png_u8};
use navfeat::Homography;

fn matrix_text(h: &Homography) -> String {
    h.matrix().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Writes `count` augmented samples and `preview.csv` describing the random
/// choices behind each.
pub fn run(cfg: &PipelineConfig, count: usize) -> CliResult<()> {
    let out = cfg.output_dir()?;
    ensure_dir(out)?;
    let mut w = csv::Writer::from_path(out.join("preview.csv"))?;
    if let Some(manifest) = &cfg.paths.manifest {
        let (dir, rows) = load_manifest(manifest)?;
        w.write_record(["pair_id", "true_scale", "k_md", "flipped", "gain", "correspondences", "transform_a", "transform_b"])?;
        for (i, rec) in rows.iter().take(count).enumerate() {
            let pair = crate::common::load_pair(&dir, rec)?;
            let (aug, r) = augment_pair(&pair, &cfg.augment, derive_seed(cfg.seed, i as u64, 20))?;
            let id = rec.pair_id();
            save_png_u8(&out.join(format!("{id}_a.png")), &aug.a.image)?;
            save_png_u8(&out.join(format!("{id}_b.png")), &aug.b.image)?;
            w.write_record([
                id,
                r.true_scale.to_string(),
                r.k_md.to_string(),
                r.flipped.to_string(),
                r.gain.to_string(),
                aug.corr_ab.count().to_string(),
                matrix_text(&r.transform_a),
                matrix_text(&r.transform_b),
            ])?;
        }
    } else if let Some(input) = &cfg.paths.input {
        let files = list_files(input, &["png"])?;
        if files.is_empty() {
            return Err(CliError::input(format!("no images in {}", input.display())));
        }
        w.write_record(["image", "output", "transform"])?;
        for (i, f) in files.iter().take(count).enumerate() {
            let img = load_png_u8(f)?;
            let (aug, t) = augment_single(&img, &cfg.augment, derive_seed(cfg.seed, i as u64, 21))?;
            let name = format!("{}_aug.png", stem(f));
            save_png_u8(&out.join(&name), &aug)?;
            w.write_record([stem(f), name, matrix_text(&t)])?;
        }
    } else {
        return Err(CliError::input("augment-preview needs --manifest or --input"));
    }
    w.flush()?;
    Ok(())
}
