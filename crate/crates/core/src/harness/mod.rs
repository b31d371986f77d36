//! Experiment orchestration: configuration, seeded campaigns and result files.

pub mod campaign;
pub mod config;
pub mod output;

pub use campaign::{calibrate, run_campaign, run_campaign_with, run_separation, two_source_curve, RunRecord};
pub use config::{load_config, ExperimentConfig, Regime};
pub use output::{parse_csv, records_to_csv, render_svg, write_results, write_svg};
