//! Scenario configuration, trial execution, Monte-Carlo aggregation and
//! output files.

mod config;
mod output;
mod run;

pub use config::{load_scenario, save_scenario, FilterMode, FilterSection, NoiseSection, OutputSection, ScenarioConfig, ScenarioSection, TargetSection, TopologyKind, TopologySection};
pub use output::{write_errors_csv, write_mse_csv, write_outputs, write_summary, write_trajectory_csv, RunReport};
pub use run::{build_trial, run_monte_carlo, run_trial, trial_gain, KindCurve, McSummary, TrialMse, TrialSetup, TrialTrace};
