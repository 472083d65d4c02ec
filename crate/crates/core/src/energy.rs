//! Polynomial fuel-rate model and trip-level fuel economy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of
/// `max(0, c0 + c1·v + c2·v² + c3·v³ + (b0 + b1·v)·max(0, v̇))`, in mL/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub b0: f64,
    pub b1: f64,
}

impl Default for FuelCoeffs {
    fn default() -> Self {
        Self {
            c0: 0.27,
            c1: 0.0245,
            c2: 5.0e-4,
            c3: 6.0e-5,
            b0: 0.0722,
            b1: 0.0968,
        }
    }
}

impl FuelCoeffs {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c0, self.c1, self.c2, self.c3, self.b0, self.b1];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("fuel coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Instantaneous fuel rate, mL/s. Decelerations cost nothing beyond the
/// speed polynomial (fuel cut-off).
pub fn fuel_rate(v: f64, v_dot: f64, coeffs: &FuelCoeffs) -> f64 {
    let cruise = coeffs.c0 + v * (coeffs.c1 + v * (coeffs.c2 + v * coeffs.c3));
    let accel = (coeffs.b0 + coeffs.b1 * v) * v_dot.max(0.0);
    (cruise + accel).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripMetrics {
    /// mL
    pub fuel: f64,
    /// m
    pub distance: f64,
    /// s
    pub duration: f64,
    /// km/L
    pub fuel_economy: f64,
    /// Share of the fuel burnt while stationary.
    pub idle_fuel_share: f64,
}

/// Speed below which a sample counts as idling, m/s.
const IDLE_SPEED: f64 = 0.05;

/// Trapezoidal integration of the fuel rate over a uniformly sampled trace.
pub fn trip_fuel(speed: &[f64], accel: &[f64], dt: f64, coeffs: &FuelCoeffs) -> Result<TripMetrics> {
    if speed.len() < 2 {
        return Err(Error::Input(
            "a trip needs at least two samples to integrate".into(),
        ));
    }
    if speed.len() != accel.len() {
        return Err(Error::Input(format!(
            "speed and acceleration series differ in length ({} vs {})",
            speed.len(),
            accel.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Input(format!("sampling interval must be positive, got {dt}")));
    }
    if speed.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Input("speeds must be nonnegative".into()));
    }
    let rates: Vec<f64> = speed
        .iter()
        .zip(accel)
        .map(|(&v, &a)| fuel_rate(v, a, coeffs))
        .collect();
    let mut fuel = 0.0;
    let mut idle = 0.0;
    let mut distance = 0.0;
    for k in 0..rates.len() - 1 {
        let seg = 0.5 * dt * (rates[k] + rates[k + 1]);
        fuel += seg;
        if speed[k] < IDLE_SPEED && speed[k + 1] < IDLE_SPEED {
            idle += seg;
        }
        distance += 0.5 * dt * (speed[k] + speed[k + 1]);
    }
    let duration = dt * (rates.len() - 1) as f64;
    Ok(TripMetrics {
        fuel,
        distance,
        duration,
        fuel_economy: if fuel > 0.0 {
            (distance / 1000.0) / (fuel / 1000.0)
        } else {
            f64::INFINITY
        },
        idle_fuel_share: if fuel > 0.0 { idle / fuel } else { 0.0 },
    })
}
