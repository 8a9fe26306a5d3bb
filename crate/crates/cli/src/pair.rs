use crate::common::{ensure_dir, list_files, required, stem};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use navfeat::hyperopt::derive_seed;
use navfeat::io::{load_geo_image, load_png_u8, save_cor1, save_geo_image, write_manifest, PairRecord};
use navfeat::pairing::{
    accept_pair, boresight_angle, build_pair_candidates, compute_correspondences, make_synthetic_pair,
    normalize_rotation, shadow_mask, GeoImage, ImagePair, PairDecision, PairSource, PairingState,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

fn real_pairs(files: &[std::path::PathBuf], cfg: &PipelineConfig) -> CliResult<Vec<ImagePair>> {
    let images: Vec<GeoImage> = files
        .par_iter()
        .map(|f| load_geo_image(f).map_err(|e| CliError::input(format!("{}: {e}", f.display()))))
        .collect::<CliResult<_>>()?;
    let mut cand = cfg.pairing.candidates;
    cand.seed = derive_seed(cfg.seed, 0, 10);
    let mut state = PairingState::default();
    let mut accepted = Vec::new();
    for (i, j) in build_pair_candidates(&images, &cand) {
        if accept_pair(&images[i], &images[j], &cfg.pairing.accept, &mut state) == PairDecision::Accept {
            accepted.push((i, j));
        }
    }
    log::info!("{} candidate pairs accepted", accepted.len());
    let kernel = cfg.pairing.correspondence.kernel;
    let masks: Vec<_> = images.par_iter().map(|g| shadow_mask(&g.image, kernel)).collect();
    let pairs: Vec<Option<ImagePair>> = accepted
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&images[i], &images[j]);
            match compute_correspondences(a, b, &masks[i], &masks[j], &cfg.pairing.correspondence) {
                Ok(corr) if corr.count() >= cfg.pairing.min_correspondences => Some(ImagePair {
                    a: a.clone(),
                    b: b.clone(),
                    corr_ab: corr,
                    phi: Some(boresight_angle(&a.boresight, &b.boresight)),
                    alpha: None,
                    beta: None,
                    source: PairSource::Real,
                }),
                Ok(corr) => {
                    log::warn!("{} / {}: only {} correspondences", a.id, b.id, corr.count());
                    None
                }
                Err(e) => {
                    log::warn!("{} / {}: {e}", a.id, b.id);
                    None
                }
            }
        })
        .collect();
    Ok(pairs.into_iter().flatten().collect())
}

fn synthetic_pairs(files: &[std::path::PathBuf], cfg: &PipelineConfig) -> CliResult<Vec<ImagePair>> {
    let n = cfg.pairing.synthetic_pairs;
    let jobs: Vec<(usize, usize)> = (0..files.len()).flat_map(|i| (0..n).map(move |k| (i, k))).collect();
    jobs.par_iter()
        .map(|&(i, k)| {
            let img = load_png_u8(&files[i]).map_err(|e| CliError::input(format!("{}: {e}", files[i].display())))?;
            let id = format!("{}-s{k}", stem(&files[i]));
            let seed = derive_seed(cfg.seed, (i * n + k) as u64, 11);
            Ok(make_synthetic_pair(&id, &img, cfg.augment.lambda_r, cfg.augment.lambda_p, seed))
        })
        .collect()
}

/// Builds pairs from the images in the input directory and writes them with
/// their correspondence fields and a manifest under the output directory.
pub fn run(cfg: &PipelineConfig) -> CliResult<()> {
    let input = required(&cfg.paths.input, "--input")?;
    let out = cfg.output_dir()?;
    let files = list_files(input, &["png"])?;
    if files.is_empty() {
        return Err(CliError::input(format!("no images in {}", input.display())));
    }
    let mut pairs =
        if cfg.pairing.synthetic_pairs > 0 { synthetic_pairs(&files, cfg)? } else { real_pairs(&files, cfg)? };
    if cfg.pairing.upright {
        let seed = derive_seed(cfg.seed, 0, 12);
        pairs = pairs
            .par_iter()
            .filter_map(|p| match normalize_rotation(p, seed) {
                Ok((r, _)) => Some(r),
                Err(e) => {
                    log::warn!("{} / {}: rotation failed: {e}", p.a.id, p.b.id);
                    None
                }
            })
            .collect();
    }
    if pairs.is_empty() {
        return Err(CliError::input("no pairs survived"));
    }

    ensure_dir(&out.join("images"))?;
    ensure_dir(&out.join("corr"))?;
    let mut images: BTreeMap<&str, &GeoImage> = BTreeMap::new();
    for p in &pairs {
        images.insert(&p.a.id, &p.a);
        images.insert(&p.b.id, &p.b);
    }
    images
        .par_iter()
        .map(|(id, img)| save_geo_image(&out.join("images").join(format!("{id}.png")), img))
        .collect::<navfeat::Result<()>>()?;
    let mut rows = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let rec = PairRecord {
            image_a: format!("images/{}.png", p.a.id),
            image_b: format!("images/{}.png", p.b.id),
            corr_file: String::new(),
            phi: p.phi,
            alpha: p.alpha,
            beta: p.beta,
            source: p.source,
        };
        let corr_file = format!("corr/{}.cor", rec.pair_id());
        save_cor1(&out.join(&corr_file), &p.corr_ab)?;
        rows.push(PairRecord { corr_file, ..rec });
    }
    write_manifest(&out.join("manifest.csv"), &rows)?;
    println!("{} pairs written to {}", rows.len(), Path::new(out).join("manifest.csv").display());
    Ok(())
}
