//! Pipeline commands behind the `accd` binary: fit background models, score
//! frames, validate candidate masks, evaluate, report, and generate
//! synthetic sequences.

pub mod error;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{CliError, CliResult};
pub use pipeline::{
    read_summary, resolve_config, run_eval, run_fit, run_score, run_validate, EvalSummary, FitSummary, Overrides,
    ValidateSummary,
};
pub use report::run_report;
pub use synth::{run_synth, PlantedKind, PlantedObject, SynthParams, SYNTH_METHOD};
