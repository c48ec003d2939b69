//! Experiment configuration, drivers, CSV output and the command line.

pub mod cli;
pub mod config;
pub mod output;
pub mod runners;

pub use cli::cli_main;
pub use config::{attacker_setup, scenario_placements, Config};
pub use output::{write_cdf, write_results, BoundColumns, CdfRow, ResultRow, RmseColumns};
pub use runners::{
    alb_samples, attacker_albs, ellipse_samples, empirical_cdf, run_cdf, run_heatmap, run_power_sweep,
    scene_bounds, trial_seed, HeatmapVariable,
};
