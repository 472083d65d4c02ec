//! Eco-approach-and-departure speed planning for the CAV.

mod cases;
mod collocation;
mod dp;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VehicleParams;

pub use cases::{generate_case_trajectory, CaseKind, CaseSpec, ARRIVAL_MARGIN};
pub use collocation::{default_node_count, solve_ocp, solve_ocp_with, SolverSettings};
pub use dp::dp_oracle;

/// Weights of `J = φ + ∫ (W1·P_loss + W2·F_b²) dt`.
///
/// The terminal weights multiply the running-cost scale (W1, or 1 when W1 is
/// zero), so scaling W1 and W2 together scales J without moving its minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
    pub terminal_speed: f64,
    pub terminal_position: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0e-4,
            terminal_speed: 1.0e3,
            terminal_position: 1.0e3,
        }
    }
}

impl CostWeights {
    pub(crate) fn terminal_scale(&self) -> f64 {
        if self.w1 > 0.0 {
            self.w1
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpProblem {
    pub t0: f64,
    pub tf: f64,
    pub v0: f64,
    pub vf: f64,
    pub s0: f64,
    pub sf: f64,
    pub vehicle: VehicleParams,
    pub weights: CostWeights,
}

impl OcpProblem {
    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn distance(&self) -> f64 {
        self.sf - self.s0
    }

    /// Structural checks plus the distance/time feasibility sanity check.
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        let w = &self.weights;
        if [w.w1, w.w2, w.terminal_speed, w.terminal_position]
            .iter()
            .any(|x| !(*x >= 0.0 && x.is_finite()))
        {
            return Err(Error::Config("cost weights must be finite and nonnegative".into()));
        }
        if !(self.tf > self.t0) {
            return Err(Error::Infeasible(format!(
                "final time {} is not after initial time {}",
                self.tf, self.t0
            )));
        }
        if !(self.sf > self.s0) {
            return Err(Error::Infeasible(format!(
                "final position {} is not ahead of initial position {}",
                self.sf, self.s0
            )));
        }
        let veh = &self.vehicle;
        for (name, v) in [("initial", self.v0), ("terminal", self.vf)] {
            if !(v >= veh.v_min && v <= veh.v_max) {
                return Err(Error::Infeasible(format!(
                    "{name} speed {v} outside [{}, {}]",
                    veh.v_min, veh.v_max
                )));
            }
        }
        let d = self.distance();
        let h = self.horizon();
        if d > veh.v_max * h {
            return Err(Error::Infeasible(format!(
                "{d:.1} m in {h:.2} s needs a mean speed above v_max = {}",
                veh.v_max
            )));
        }
        if d < veh.v_min * h {
            return Err(Error::Infeasible(format!(
                "{d:.1} m in {h:.2} s needs a mean speed below v_min = {}",
                veh.v_min
            )));
        }
        Ok(())
    }

    /// Running cost density W1·P_loss(v) + W2·F_b².
    pub(crate) fn running_cost(&self, v: f64, brake: f64) -> f64 {
        self.weights.w1 * self.vehicle.power_loss(v) + self.weights.w2 * brake * brake
    }

    pub(crate) fn terminal_cost(&self, v_end: f64, s_end: f64) -> f64 {
        let w = &self.weights;
        let ev = v_end - self.vf;
        let es = s_end - self.sf;
        w.terminal_scale() * (w.terminal_speed * ev * ev + w.terminal_position * es * es)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub method: String,
    pub cost: f64,
    pub iterations: usize,
    /// Largest trapezoidal defect of the speed and position equations.
    pub dynamics_residual: f64,
    /// Scaled projected-gradient norm at the returned iterate.
    pub optimality_residual: f64,
    /// Terminal weights actually used (after any escalation).
    pub terminal_speed_weight: f64,
    pub terminal_position_weight: f64,
}

/// Planned speed profile on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub traction: Vec<f64>,
    pub brake: Vec<f64>,
    pub vehicle: VehicleParams,
    pub meta: SolverMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.t[0]
    }

    pub fn end_time(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn step(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn final_speed(&self) -> f64 {
        self.v[self.v.len() - 1]
    }

    pub fn final_position(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    pub fn mean_speed(&self) -> f64 {
        (self.final_position() - self.s[0]) / (self.end_time() - self.start_time())
    }

    /// Modelled acceleration at each node from the planned forces.
    pub fn accelerations(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.vehicle.acceleration(self.v[k], self.traction[k], self.brake[k]))
            .collect()
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.len();
        let t = t.clamp(self.start_time(), self.end_time());
        let x = (t - self.start_time()) / self.step();
        let k = (x.floor() as usize).min(n - 2);
        (k, (x - k as f64).clamp(0.0, 1.0))
    }

    fn interp(&self, series: &[f64], t: f64) -> f64 {
        let (k, f) = self.locate(t);
        series[k] + f * (series[k + 1] - series[k])
    }

    /// Planned speed at `t`, held at the end values outside the horizon.
    pub fn speed_at(&self, t: f64) -> f64 {
        self.interp(&self.v, t)
    }

    pub fn position_at(&self, t: f64) -> f64 {
        self.interp(&self.s, t)
    }

    /// Feed-forward acceleration at `t`; zero after the horizon ends.
    pub fn accel_at(&self, t: f64) -> f64 {
        if t > self.end_time() {
            return 0.0;
        }
        let (k, f) = self.locate(t);
        let a0 = self.vehicle.acceleration(self.v[k], self.traction[k], self.brake[k]);
        let a1 = self
            .vehicle
            .acceleration(self.v[k + 1], self.traction[k + 1], self.brake[k + 1]);
        a0 + f * (a1 - a0)
    }

    /// Linear re-sampling onto a grid of spacing `dt` (the last node is kept).
    pub fn resample(&self, dt: f64) -> Result<Trajectory> {
        if !(dt > 0.0) {
            return Err(Error::Input(format!("resampling step must be positive, got {dt}")));
        }
        let span = self.end_time() - self.start_time();
        let n = (span / dt).floor() as usize;
        let mut t: Vec<f64> = (0..=n).map(|k| self.start_time() + k as f64 * dt).collect();
        if span - n as f64 * dt > 1e-9 {
            t.push(self.end_time());
        }
        let map = |series: &[f64]| t.iter().map(|&ti| self.interp(series, ti)).collect::<Vec<_>>();
        Ok(Trajectory {
            v: map(&self.v),
            s: map(&self.s),
            traction: map(&self.traction),
            brake: map(&self.brake),
            t,
            vehicle: self.vehicle,
            meta: self.meta.clone(),
        })
    }

    /// Largest bound violation relative to `max(1, |bound|)`; zero when
    /// every node is admissible.
    pub fn bound_violation(&self) -> f64 {
        let veh = &self.vehicle;
        let rel = |x: f64, lo: f64, hi: f64| {
            let below = (lo - x).max(0.0) / lo.abs().max(1.0);
            let above = (x - hi).max(0.0) / hi.abs().max(1.0);
            below.max(above)
        };
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            worst = worst
                .max(rel(self.v[k], veh.v_min, veh.v_max))
                .max(rel(self.traction[k], veh.traction_force_min, veh.traction_force_max))
                .max(rel(self.brake[k], 0.0, veh.brake_force_max));
        }
        worst
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "t,v,s,F_t,F_b").map_err(io)?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{:.4},{:.6},{:.6},{:.3},{:.3}",
                self.t[k], self.v[k], self.s[k], self.traction[k], self.brake[k]
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
