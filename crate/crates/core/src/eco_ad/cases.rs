use serde::{Deserialize, Serialize};

use super::{default_node_count, solve_ocp, CostWeights, OcpProblem, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Phase, SignalSchedule, VehicleParams};

/// Margin kept between the planned arrival at B and the end of green, s.
pub const ARRIVAL_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseKind {
    /// Arrive at B just before the green ends.
    SlowPass,
    /// Cross B at a high mean speed, well inside the green.
    FastPass {
        #[serde(default = "default_fast_speed")]
        speed: f64,
    },
    /// Come to rest at B as the red starts.
    StopAtRed,
    /// Fixed mean speed regardless of the signal; used by sweeps.
    Cruise { speed: f64 },
}

fn default_fast_speed() -> f64 {
    18.0
}

impl CaseKind {
    pub fn fast_pass() -> Self {
        CaseKind::FastPass {
            speed: default_fast_speed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub kind: CaseKind,
    pub t0: f64,
    pub s0: f64,
    /// Distance from the start to the stop line at B, m.
    pub distance: f64,
    pub v0: f64,
    /// Target speed at B for the passing cases.
    pub terminal_speed: f64,
    #[serde(default)]
    pub weights: CostWeights,
}

impl CaseSpec {
    /// Boundary data for the case. Errors name the timing bound that fails.
    pub fn problem(&self, schedule: &SignalSchedule, vehicle: &VehicleParams) -> Result<OcpProblem> {
        schedule.validate()?;
        if !(self.distance > 0.0) {
            return Err(Error::Config(format!(
                "distance to the intersection must be positive, got {}",
                self.distance
            )));
        }
        let green_end = schedule.green_end(self.t0);
        let in_green = schedule.phase(self.t0) == Phase::Green;
        let (tf, vf) = match self.kind {
            CaseKind::SlowPass => {
                let tf = green_end - ARRIVAL_MARGIN;
                if tf <= self.t0 {
                    return Err(Error::Infeasible(format!(
                        "slow pass: green ends at {green_end:.2} s, less than the {ARRIVAL_MARGIN} s margin after t0"
                    )));
                }
                let needed = self.distance / (tf - self.t0);
                if needed > vehicle.v_max {
                    return Err(Error::Infeasible(format!(
                        "slow pass: reaching B by {tf:.2} s needs {needed:.2} m/s > v_max = {}",
                        vehicle.v_max
                    )));
                }
                (tf, self.terminal_speed)
            }
            CaseKind::FastPass { speed } => {
                if !(speed > 0.0) {
                    return Err(Error::Config(format!("fast pass speed must be positive, got {speed}")));
                }
                let tf = self.t0 + self.distance / speed;
                let deadline = green_end - ARRIVAL_MARGIN;
                if !in_green || tf > deadline {
                    return Err(Error::Infeasible(format!(
                        "fast pass at {speed} m/s reaches B at {tf:.2} s, outside the green window ending {green_end:.2} s"
                    )));
                }
                (tf, self.terminal_speed)
            }
            CaseKind::StopAtRed => {
                if !in_green {
                    return Err(Error::Infeasible(
                        "stop at red: the plan must start during green".into(),
                    ));
                }
                (green_end, 0.0)
            }
            CaseKind::Cruise { speed } => {
                if !(speed > 0.0) {
                    return Err(Error::Config(format!("cruise speed must be positive, got {speed}")));
                }
                (self.t0 + self.distance / speed, self.terminal_speed)
            }
        };
        let problem = OcpProblem {
            t0: self.t0,
            tf,
            v0: self.v0,
            vf,
            s0: self.s0,
            sf: self.s0 + self.distance,
            vehicle: *vehicle,
            weights: self.weights,
        };
        problem.validate()?;
        Ok(problem)
    }
}

pub fn generate_case_trajectory(
    case: &CaseSpec,
    schedule: &SignalSchedule,
    vehicle: &VehicleParams,
) -> Result<Trajectory> {
    let problem = case.problem(schedule, vehicle)?;
    solve_ocp(&problem, default_node_count(problem.horizon()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: CaseKind) -> CaseSpec {
        CaseSpec {
            kind,
            t0: 0.0,
            s0: 0.0,
            distance: 600.0,
            v0: 10.0,
            terminal_speed: 10.0,
            weights: CostWeights::default(),
        }
    }

    #[test]
    fn boundary_values_per_case() {
        let sched = SignalSchedule::default();
        let veh = VehicleParams::default();
        let slow = spec(CaseKind::SlowPass).problem(&sched, &veh).unwrap();
        assert_eq!(slow.tf, 43.0);
        assert!((slow.distance() / slow.horizon() - 13.95).abs() < 0.01);
        let fast = spec(CaseKind::fast_pass()).problem(&sched, &veh).unwrap();
        assert!((fast.tf - 600.0 / 18.0).abs() < 1e-12);
        let stop = spec(CaseKind::StopAtRed).problem(&sched, &veh).unwrap();
        assert_eq!((stop.tf, stop.vf), (44.0, 0.0));
    }

    #[test]
    fn case_trajectories_meet_their_targets() {
        let sched = SignalSchedule::default();
        let veh = VehicleParams::default();
        let slow = generate_case_trajectory(&spec(CaseKind::SlowPass), &sched, &veh).unwrap();
        assert!((slow.mean_speed() - 14.0).abs() < 0.1);
        assert!((slow.end_time() - 43.0).abs() < 1e-9);
        let fast = generate_case_trajectory(&spec(CaseKind::fast_pass()), &sched, &veh).unwrap();
        assert!((fast.mean_speed() - 18.0).abs() < 0.1);
        let stop = generate_case_trajectory(&spec(CaseKind::StopAtRed), &sched, &veh).unwrap();
        assert!(stop.final_speed().abs() <= 0.1);
        assert!((stop.final_position() - 600.0).abs() <= 1.0);
        for tr in [&slow, &fast, &stop] {
            assert!(tr.bound_violation() <= 1e-6);
            assert!(tr.s.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn infeasible_timings_are_named() {
        let sched = SignalSchedule {
            green_duration: 20.0,
            ..SignalSchedule::default()
        };
        let veh = VehicleParams::default();
        let err = spec(CaseKind::SlowPass).problem(&sched, &veh).unwrap_err();
        assert!(err.to_string().contains("v_max"), "{err}");
        let err = spec(CaseKind::fast_pass()).problem(&sched, &veh).unwrap_err();
        assert!(err.to_string().contains("green window"), "{err}");
    }

    #[test]
    fn case_kind_toml_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Wrap {
            case: CaseKind,
        }
        for kind in [CaseKind::SlowPass, CaseKind::fast_pass(), CaseKind::Cruise { speed: 15.0 }] {
            let text = toml::to_string(&Wrap { case: kind }).unwrap();
            assert_eq!(toml::from_str::<Wrap>(&text).unwrap().case, kind);
        }
        let parsed: Wrap = toml::from_str("case = { kind = \"fast_pass\" }").unwrap();
        assert_eq!(parsed.case, CaseKind::fast_pass());
    }
}
