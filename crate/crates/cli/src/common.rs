use crate::error::{CliError, CliResult};
use navfeat::io::{load_cor1, load_geo_image, read_manifest, PairRecord};
use navfeat::pairing::ImagePair;
use std::path::{Path, PathBuf};

/// Regular files in `dir` with one of `exts` (lowercase, no dot), sorted by
/// name.
pub fn list_files(dir: &Path, exts: &[&str]) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::input(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::input(format!("missing {flag}")))
}

/// Manifest rows with the manifest directory used to resolve their paths.
pub fn load_manifest(path: &Path) -> CliResult<(PathBuf, Vec<PairRecord>)> {
    let rows = read_manifest(path)?;
    if rows.is_empty() {
        return Err(CliError::input(format!("no pairs in manifest {}", path.display())));
    }
    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((dir, rows))
}

pub fn load_pair(dir: &Path, rec: &PairRecord) -> navfeat::Result<ImagePair> {
    Ok(ImagePair {
        a: load_geo_image(&dir.join(&rec.image_a))?,
        b: load_geo_image(&dir.join(&rec.image_b))?,
        corr_ab: load_cor1(&dir.join(&rec.corr_file))?,
        phi: rec.phi,
        alpha: rec.alpha,
        beta: rec.beta,
        source: rec.source,
    })
}

/// Shortest text that parses back to the same value; empty for `None`.
pub fn num(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}
