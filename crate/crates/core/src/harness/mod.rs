//! Multi-cycle protocol, Monte Carlo experiments, configuration and result
//! files.

pub mod config;
pub mod experiment;
pub mod protocol;
pub mod trace;

pub use config::{PhasePolicy, Scenario, ScenarioConfig};
pub use experiment::{
    mean_crb, rmse, rmse_from_estimates, run_batch, sweep, sweep_tag, trial_seed, write_sweep_csv, BatchOutcome,
    SweepAxis, SweepRow, RUN_TAG,
};
pub use protocol::{CycleRecord, DictionaryBank, Engine, OptimizationSummary, TrialResult};
pub use trace::{read_jsonl, to_json_line, write_jsonl};
