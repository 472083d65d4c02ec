use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::events::{estimate_patience, estimate_politeness, extract_events, extract_overtakes, ExtractionConfig};
use super::fit::{fit_distribution, FitFamily, FitOptions, FitResult, MIN_SAMPLES};
use super::log::TrajectoryLog;
use crate::dist::{DistributionConfig, Family};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub extraction: ExtractionConfig,
    /// Politeness estimates outside this interval are discarded and the t
    /// fit is renormalised over it.
    pub politeness_range: Option<(f64, f64)>,
    pub fit: FitOptions,
    /// Families tried for the patience samples.
    pub patience_families: Vec<FitFamily>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            extraction: ExtractionConfig::default(),
            politeness_range: Some((-2.0, 2.0)),
            fit: FitOptions::default(),
            patience_families: vec![
                FitFamily::GeneralizedPareto,
                FitFamily::Exponential,
                FitFamily::GeneralizedExtremeValue,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub logs: usize,
    pub cut_in_events: usize,
    /// Events whose follower was not measurably affected.
    pub unaffected_events: usize,
    pub out_of_range: usize,
    pub politeness_samples: Vec<f64>,
    pub overtakes: usize,
    pub patience_samples: Vec<f64>,
    pub politeness_fit: Option<FitResult>,
    /// Successful patience fits, best KS first.
    pub patience_fits: Vec<(FitFamily, FitResult)>,
    /// Fits that could not be made, with the reason.
    pub skipped: Vec<String>,
}

/// Fitted distributions in the form the simulator reads back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    pub politeness: Option<DistributionConfig>,
    pub patience: Option<DistributionConfig>,
}

impl CalibrationReport {
    pub fn best_patience(&self) -> Option<&(FitFamily, FitResult)> {
        self.patience_fits.first()
    }

    pub fn fitted(&self) -> FittedParams {
        FittedParams {
            politeness: self.politeness_fit.as_ref().map(|f| f.config),
            patience: self.best_patience().map(|(_, f)| f.config),
        }
    }

    /// `key = value` summary, one item per line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "logs = {}", self.logs);
        let _ = writeln!(out, "cut_in_events = {}", self.cut_in_events);
        let _ = writeln!(out, "unaffected_events = {}", self.unaffected_events);
        let _ = writeln!(out, "politeness_out_of_range = {}", self.out_of_range);
        let _ = writeln!(out, "politeness_samples = {}", self.politeness_samples.len());
        let _ = writeln!(out, "overtakes = {}", self.overtakes);
        if let Some(f) = &self.politeness_fit {
            let _ = writeln!(out, "politeness_fit = {}", describe(&f.config));
            let _ = writeln!(out, "politeness_log_likelihood = {:.4}", f.log_likelihood);
            let _ = writeln!(out, "politeness_ks = {:.5}", f.ks);
        }
        for (family, f) in &self.patience_fits {
            let key = family.name();
            let _ = writeln!(out, "patience_fit.{key} = {}", describe(&f.config));
            let _ = writeln!(out, "patience_fit.{key}.log_likelihood = {:.4}", f.log_likelihood);
            let _ = writeln!(out, "patience_fit.{key}.ks = {:.5}", f.ks);
        }
        if let Some((family, _)) = self.best_patience() {
            let _ = writeln!(out, "patience_best = {}", family.name());
        }
        for s in &self.skipped {
            let _ = writeln!(out, "skipped = {s}");
        }
        out
    }
}

fn describe(d: &DistributionConfig) -> String {
    let base = match d.family {
        Family::TLocationScale { location, scale, dof } => {
            format!("t_location_scale(location {location:.5}, scale {scale:.5}, dof {dof})")
        }
        Family::GeneralizedPareto { location, scale, shape } => {
            format!("generalized_pareto(location {location}, scale {scale:.4}, shape {shape:.5})")
        }
        Family::GeneralizedExtremeValue { location, scale, shape } => {
            format!("generalized_extreme_value(location {location:.4}, scale {scale:.4}, shape {shape:.5})")
        }
        Family::Exponential { rate, location } => format!("exponential(rate {rate:.6}, location {location})"),
    };
    match d.truncation {
        Some((lo, hi)) => format!("{base} truncated to [{lo}, {hi}]"),
        None => base,
    }
}

/// Extract events, estimate per-event parameters and fit their distributions.
/// Too few samples for a fit is reported in `skipped`, not as an error.
pub fn calibrate(logs: &[TrajectoryLog], opts: &CalibrationOptions) -> Result<CalibrationReport> {
    let events = extract_events(logs, &opts.extraction)?;
    let overtakes = extract_overtakes(logs, &opts.extraction)?;
    let raw: Vec<f64> = events
        .iter()
        .filter_map(|e| estimate_politeness(e, opts.extraction.min_follower_effect))
        .collect();
    let unaffected = events.len() - raw.len();
    let politeness: Vec<f64> = match opts.politeness_range {
        Some((lo, hi)) => raw.iter().copied().filter(|p| (lo..=hi).contains(p)).collect(),
        None => raw.clone(),
    };
    let patience: Vec<f64> = overtakes.iter().map(estimate_patience).collect();
    let mut skipped = Vec::new();

    let politeness_fit = if politeness.len() < MIN_SAMPLES {
        skipped.push(format!("politeness: {} samples, {MIN_SAMPLES} needed", politeness.len()));
        None
    } else {
        let fo = FitOptions {
            truncation: opts.politeness_range,
            ..opts.fit.clone()
        };
        match fit_distribution(&politeness, FitFamily::TLocationScale, &fo) {
            Ok(f) => Some(f),
            Err(e) => {
                skipped.push(format!("politeness: {e}"));
                None
            }
        }
    };

    let mut patience_fits = Vec::new();
    if patience.len() < MIN_SAMPLES {
        skipped.push(format!("patience: {} samples, {MIN_SAMPLES} needed", patience.len()));
    } else {
        for &family in &opts.patience_families {
            match fit_distribution(&patience, family, &opts.fit) {
                Ok(f) => patience_fits.push((family, f)),
                Err(e) => skipped.push(format!("patience {}: {e}", family.name())),
            }
        }
        patience_fits.sort_by(|a, b| a.1.ks.total_cmp(&b.1.ks));
    }

    Ok(CalibrationReport {
        logs: logs.len(),
        cut_in_events: events.len(),
        unaffected_events: unaffected,
        out_of_range: raw.len() - politeness.len(),
        politeness_samples: politeness,
        overtakes: overtakes.len(),
        patience_samples: patience,
        politeness_fit,
        patience_fits,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::synthetic::{generate, SyntheticConfig};

    #[test]
    fn round_trip_at_moderate_size() {
        let cfg = SyntheticConfig {
            episodes: 2000,
            ..SyntheticConfig::default()
        };
        let batch = generate(&cfg).unwrap();
        let opts = CalibrationOptions::default();
        let pol = calibrate(&batch.politeness_logs, &opts).unwrap();
        let Family::TLocationScale { location, scale, .. } = pol.politeness_fit.unwrap().config.family else {
            panic!("t fit expected");
        };
        assert!(location.abs() < 0.05, "location {location}");
        assert!((scale / 0.4 - 1.0).abs() < 0.1, "scale {scale}");

        let pat = calibrate(&batch.patience_logs, &opts).unwrap();
        assert_eq!(pat.overtakes, 2000);
        let (best, fit) = pat.best_patience().unwrap();
        assert_eq!(*best, FitFamily::GeneralizedPareto);
        let Family::GeneralizedPareto { scale, .. } = fit.config.family else { unreachable!() };
        assert!((scale / 200.0 - 1.0).abs() < 0.1, "scale {scale}");
    }

    #[test]
    fn empty_input_reports_skips() {
        let r = calibrate(&[], &CalibrationOptions::default()).unwrap();
        assert_eq!(r.cut_in_events, 0);
        assert!(r.politeness_fit.is_none() && r.patience_fits.is_empty());
        assert_eq!(r.skipped.len(), 2);
        assert_eq!(r.fitted(), FittedParams { politeness: None, patience: None });
    }
}
