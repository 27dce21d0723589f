//! Config-driven experiments: single runs, convergence sweeps and
//! second-moment criticality sweeps.

pub mod config;
pub mod fit;
pub mod presets;
pub mod runner;

pub use config::{ReferenceKind, ScenarioConfig};
pub use fit::{first_half_of_decay, fit_loglog_slope, linear_fit, LinearFit};
pub use presets::{preset, preset_names};
pub use runner::{convergence_sweep, ks2d_criticality, run_scenario, sweep_with, CriticalityRow, Manifest, RunOutput, SweepReport};
