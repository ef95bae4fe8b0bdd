//! Configuration, multi-run execution, sweeps and CSV output.

pub mod cli;
pub mod config;
pub mod output;
pub mod run;
pub mod stats;
pub mod sweep;

pub use cli::run_cli;
pub use config::{ScenarioConfig, TransportKind};
pub use output::{ConfigSummary, RunRow};
pub use run::{migc_isolation, run_once, run_scenario, Completed, MigcReport};
pub use sweep::{best_mf, run_sweep, Axis, BestMf, SweepPoint, SweepSpec};
