//! Scenario files, batch runs and CSV/SVG output for the `safeclf` controllers.

pub mod batch;
pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

pub use batch::{execute, run_batch, BatchOptions, BatchReport, RunOutcome, SvgMode};
pub use config::{
    load_scenario, parse_scenario, ControllerName, DynamicsKind, Overrides, PlannedRun, Plant,
    ScenarioConfig,
};
pub use error::{CliError, CliResult};
pub use output::{emit_svg, write_summary_csv, write_trajectory_csv, RunSummary, SvgTrace};
pub use scenarios::{load_shipped, resolve, SHIPPED};
