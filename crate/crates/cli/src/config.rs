//! Pipeline configuration: one TOML file, overridden by command-line flags.

use crate::error::{CliError, CliResult};
use navfeat::hyperopt::{AshaParams, SearchSpace, Suggester};
use navfeat::pairing::{AcceptParams, CandidateParams, CorrespondenceParams};
use navfeat::{AugmentParams, EvalParams, ExtractParams, PreprocessParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub features_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    pub candidates: CandidateParams,
    pub accept: AcceptParams,
    pub correspondence: CorrespondenceParams,
    /// Pairs with fewer valid correspondences are dropped.
    pub min_correspondences: usize,
    /// Rotate both images so the body z-axis points up.
    pub upright: bool,
    /// Synthetic homography pairs per input image; 0 pairs real images.
    pub synthetic_pairs: usize,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            candidates: CandidateParams::default(),
            accept: AcceptParams::default(),
            correspondence: CorrespondenceParams::default(),
            min_correspondences: 100,
            upright: false,
            synthetic_pairs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    #[serde(flatten)]
    pub params: EvalParams,
    /// Features per image in oracle mode.
    pub oracle_features: usize,
    pub oracle_dim: usize,
    /// Rescale and crop pairs as for validation before extraction.
    pub validation_crop: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { params: EvalParams::default(), oracle_features: 1000, oracle_dim: 128, validation_crop: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Closed-form stand-in for a training run.
    #[default]
    Synthetic,
    /// Mean M-Score of the baseline extractor over the validation pairs.
    PipelineEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Disk,
    R2d2u,
    Lafe,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Disk => "disk",
            Self::R2d2u => "r2d2u",
            Self::Lafe => "lafe",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub preset: Option<Preset>,
    /// Custom space; used when no preset is set.
    pub space: Option<SearchSpace>,
    pub objective: ObjectiveKind,
    pub asha: AshaParams,
    pub suggester: Suggester,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub paths: Paths,
    pub preprocess: PreprocessParams,
    pub pairing: PairingConfig,
    pub augment: AugmentParams,
    pub extract: ExtractParams,
    pub eval: EvalConfig,
    pub tune: TuneConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            paths: Paths::default(),
            preprocess: PreprocessParams::default(),
            pairing: PairingConfig::default(),
            augment: AugmentParams::default(),
            extract: ExtractParams::default(),
            eval: EvalConfig::default(),
            tune: TuneConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
        // Relative paths in the file are taken relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.input, &mut cfg.paths.manifest, &mut cfg.paths.features_dir, &mut cfg.paths.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks parameter ranges and that every input path exists.
    pub fn validate(&self) -> CliResult<()> {
        self.preprocess.validate()?;
        self.augment.validate()?;
        self.tune.asha.validate()?;
        if let Some(s) = &self.tune.space {
            s.validate()?;
        }
        if !(self.extract.feat_ratio > 0.0 && self.extract.feat_ratio <= 1.0) {
            return Err(CliError::input("extract.feat_ratio must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.extract.det_threshold) {
            return Err(CliError::input("extract.det_threshold must lie in [0, 1]"));
        }
        if self.eval.params.tolerance <= 0.0 {
            return Err(CliError::input("eval.tolerance must be positive"));
        }
        let p = &self.paths;
        for (name, path) in [("input", &p.input), ("manifest", &p.manifest), ("features_dir", &p.features_dir)] {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(CliError::input(format!("{name} path {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }

    /// Short digest of every parameter that can change results; paths and
    /// the thread count are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.jobs = 0;
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_dir(&self) -> CliResult<&Path> {
        self.paths.output.as_deref().ok_or_else(|| CliError::input("no output directory (use --output)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = PipelineConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn hash_ignores_paths_and_jobs() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.output = Some("x".into());
        b.jobs = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("sede = 3").is_err());
        let c: PipelineConfig = toml::from_str("seed = 3\n[extract]\ndet_threshold = 0.2\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.extract.det_threshold, 0.2);
    }
}
