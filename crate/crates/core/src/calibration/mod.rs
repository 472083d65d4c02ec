//! Driver-parameter calibration from trajectory logs: smoothing, event
//! extraction, per-event estimators, distribution fitting, and a synthetic
//! episode generator for round-trip checks.

mod events;
mod fit;
mod log;
mod pipeline;
mod smoothing;
pub mod synthetic;

pub use events::{
    estimate_patience, estimate_politeness, extract_events, extract_overtakes, CutInEvent, ExtractionConfig,
    OvertakeEpisode,
};
pub use fit::{fit_distribution, ks_statistic, FitFamily, FitOptions, FitResult, MIN_SAMPLES};
pub use log::{TrajectoryLog, VehicleSeries};
pub use pipeline::{calibrate, CalibrationOptions, CalibrationReport, FittedParams};
pub use smoothing::{smooth_differentiate, DEFAULT_WINDOW};
