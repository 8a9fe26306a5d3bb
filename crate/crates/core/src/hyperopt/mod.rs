//! ASHA early stopping combined with Gaussian-process Bayesian optimization.

mod asha;
mod gp;
pub mod presets;
mod search;
mod space;
mod suggest;

pub use asha::{asha_decide, in_top_fraction, AshaParams, Decision, RungTable};
pub use gp::{fit_surrogate, GpParams, Surrogate};
pub use search::{
    derive_seed, read_log, run_search, EventKind, LogEvent, Objective, SearchOptions, SearchResult, Suggester, Trial,
    TrialStatus,
};
pub use space::{Config, Domain, Param, ParamKind, SearchSpace, Value};
pub use suggest::{acquisition_value, maximize_acquisition, suggest, suggest_from, Acquisition, SuggestParams};
