//! Feature-matching evaluation and training-support toolkit for vision-based
//! asteroid proximity navigation.
//!
//! The pipeline builds ground-truth image pairs from georeferenced imagery,
//! extracts and matches sparse features from dense feature maps, scores them
//! with matching metrics and a pose-estimation protocol, evaluates the R2D2,
//! DISK and LAFE training losses as forward computations, and tunes
//! hyperparameters with ASHA and Gaussian-process Bayesian optimization.

pub mod augment;
pub mod error;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod hyperopt;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pairing;
pub mod pose;
pub mod preprocess;
pub mod stats;

pub use augment::AugmentParams;
pub use error::{Error, Result};
pub use features::{DenseExtractor, DenseFeatureMap, ExtractParams, Feature, MatchSet, SparseFeatures};
pub use geometry::{Homography, Intrinsics, Pose};
pub use grid::Grid;
pub use hyperopt::{AshaParams, Config, SearchSpace, Trial};
pub use metrics::{DatasetReport, EvalParams, PairMetrics, PairResult};
pub use pairing::{Backplane, CorrespondenceField, Difficulty, GeoImage, ImagePair, PairSource};
pub use pose::{PoseOutcome, PoseParams};
pub use preprocess::{PreprocessParams, RawImage};
