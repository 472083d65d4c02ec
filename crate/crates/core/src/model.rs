//! World-state value types shared by every module: vehicle kinematics, the
//! signal schedule at intersection B and the CAV's longitudinal parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lane 0 is the original (right) lane, lane 1 the passing lane.
pub const ORIGINAL_LANE: u8 = 0;
pub const PASSING_LANE: u8 = 1;

/// Kinematic state of one vehicle. `s` is the position of the front bumper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: usize,
    pub lane: u8,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
}

impl VehicleState {
    pub fn rear(&self) -> f64 {
        self.s - self.length
    }

    /// Bumper-to-bumper gap from `self` to a vehicle ahead of it.
    pub fn gap_to(&self, leader: &VehicleState) -> f64 {
        leader.rear() - self.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Green,
    Red,
}

/// Fixed-time signal at intersection B. Intersection A sits at s = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSchedule {
    pub green_duration: f64,
    pub red_duration: f64,
    /// Time within the cycle at t = 0; the cycle starts with green.
    #[serde(default)]
    pub phase_offset: f64,
}

impl Default for SignalSchedule {
    fn default() -> Self {
        Self {
            green_duration: 44.0,
            red_duration: 40.0,
            phase_offset: 0.0,
        }
    }
}

impl SignalSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.green_duration > 0.0 && self.green_duration.is_finite()) {
            return Err(Error::Config(format!(
                "green_duration must be positive, got {}",
                self.green_duration
            )));
        }
        if !(self.red_duration > 0.0 && self.red_duration.is_finite()) {
            return Err(Error::Config(format!(
                "red_duration must be positive, got {}",
                self.red_duration
            )));
        }
        if !self.phase_offset.is_finite() {
            return Err(Error::Config("phase_offset must be finite".into()));
        }
        Ok(())
    }

    pub fn cycle(&self) -> f64 {
        self.green_duration + self.red_duration
    }

    fn cycle_time(&self, t: f64) -> f64 {
        (t + self.phase_offset).rem_euclid(self.cycle())
    }

    /// Half-open phases: green on `[0, g)`, red on `[g, g + r)` of each cycle.
    pub fn phase(&self, t: f64) -> Phase {
        if self.cycle_time(t) < self.green_duration {
            Phase::Green
        } else {
            Phase::Red
        }
    }

    /// End of the green window containing `t`, or of the next one if `t` is red.
    pub fn green_end(&self, t: f64) -> f64 {
        let ct = self.cycle_time(t);
        let cycle_start = t - ct;
        if ct < self.green_duration {
            cycle_start + self.green_duration
        } else {
            cycle_start + self.cycle() + self.green_duration
        }
    }

    /// Start of the next green at or after `t`.
    pub fn next_green_start(&self, t: f64) -> f64 {
        let ct = self.cycle_time(t);
        if ct < self.green_duration {
            t
        } else {
            t - ct + self.cycle()
        }
    }
}

/// Free function form used by the examples and the acceptance suite.
pub fn signal_phase(schedule: &SignalSchedule, t: f64) -> Phase {
    schedule.phase(t)
}

/// Longitudinal model of the CAV: road-load coefficients, actuator bounds and
/// speed limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Equivalent mass, kg.
    pub mass: f64,
    pub air_density: f64,
    pub drag_coefficient: f64,
    pub frontal_area: f64,
    pub rolling_resistance: f64,
    pub gravity: f64,
    pub traction_force_min: f64,
    pub traction_force_max: f64,
    pub brake_force_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1500.0,
            air_density: 1.2,
            drag_coefficient: 0.32,
            frontal_area: 2.2,
            rolling_resistance: 0.015,
            gravity: 9.81,
            traction_force_min: 0.0,
            traction_force_max: 4500.0,
            brake_force_max: 7500.0,
            v_min: 0.0,
            v_max: 20.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("air_density", self.air_density),
            ("drag_coefficient", self.drag_coefficient),
            ("frontal_area", self.frontal_area),
            ("gravity", self.gravity),
            ("brake_force_max", self.brake_force_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.rolling_resistance >= 0.0) {
            return Err(Error::Config("rolling_resistance must be nonnegative".into()));
        }
        if !(self.traction_force_min <= self.traction_force_max) {
            return Err(Error::Config(format!(
                "traction force bounds are inverted: [{}, {}]",
                self.traction_force_min, self.traction_force_max
            )));
        }
        if !(self.v_min >= 0.0 && self.v_max > self.v_min) {
            return Err(Error::Config(format!(
                "speed bounds must satisfy 0 <= v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    /// ½ρc_dA_f, N/(m/s)².
    pub fn drag_factor(&self) -> f64 {
        0.5 * self.air_density * self.drag_coefficient * self.frontal_area
    }

    /// Deceleration from rolling resistance, c_r·g.
    pub fn rolling_decel(&self) -> f64 {
        self.rolling_resistance * self.gravity
    }

    /// V̇ for the given forces: (F_t − F_b − ½ρc_dA_fV²)/M − c_r·g.
    pub fn acceleration(&self, v: f64, traction: f64, brake: f64) -> f64 {
        (traction - brake - self.drag_factor() * v * v) / self.mass - self.rolling_decel()
    }

    /// Power lost to aerodynamic drag and rolling resistance at speed `v`, W.
    pub fn power_loss(&self, v: f64) -> f64 {
        self.drag_factor() * v * v * v + self.mass * self.rolling_decel() * v
    }

    pub fn power_loss_derivative(&self, v: f64) -> f64 {
        3.0 * self.drag_factor() * v * v + self.mass * self.rolling_decel()
    }

    /// Traction force that holds speed `v` on the flat corridor.
    pub fn steady_state_force(&self, v: f64) -> f64 {
        self.drag_factor() * v * v + self.mass * self.rolling_decel()
    }

    /// Splits a net longitudinal force into the cheapest admissible
    /// (traction, brake) pair: brake only engages below the traction floor.
    pub fn split_force(&self, net: f64) -> (f64, f64) {
        if net >= self.traction_force_min {
            (net.min(self.traction_force_max), 0.0)
        } else {
            (self.traction_force_min, self.traction_force_min - net)
        }
    }

    pub fn max_deceleration(&self) -> f64 {
        (self.brake_force_max - self.traction_force_min) / self.mass + self.rolling_decel()
    }

    pub fn max_acceleration(&self) -> f64 {
        self.traction_force_max / self.mass - self.rolling_decel()
    }
}
