//! CAV reactive control: time-headway ACC, TTC-based AEB and the mode
//! arbitration between them, the Eco-AD plan and the signal stop.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParams {
    pub kp: f64,
    pub ki: f64,
    /// Range-rate damping, 1/s. The headway PI alone is underdamped (and
    /// unstable above roughly 10 m/s with the default gains).
    pub kd: f64,
    /// Desired time headway, s.
    pub headway: f64,
    /// Anti-windup bound on |∫e dt|, s².
    pub integral_limit: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Below this speed the headway is undefined and a gap-hold law is used.
    pub low_speed: f64,
    /// Gap the gap-hold law settles at, m.
    pub standstill_gap: f64,
    /// Gap-hold gain, 1/s².
    pub creep_gain: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            kp: 0.8,
            ki: 0.1,
            kd: 0.3,
            headway: 1.5,
            integral_limit: 5.0,
            accel_min: -3.0,
            accel_max: 1.5,
            low_speed: 0.5,
            standstill_gap: 3.0,
            creep_gain: 0.3,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0) {
            return Err(Error::Config("ACC gains must be nonnegative".into()));
        }
        if !(self.headway > 0.0) {
            return Err(Error::Config("ACC headway must be positive".into()));
        }
        if !(self.integral_limit >= 0.0) {
            return Err(Error::Config("ACC integral limit must be nonnegative".into()));
        }
        if !(self.accel_min < 0.0 && self.accel_max > 0.0) {
            return Err(Error::Config(
                "ACC acceleration bounds must bracket zero".into(),
            ));
        }
        if !(self.low_speed > 0.0 && self.standstill_gap > 0.0 && self.creep_gain > 0.0) {
            return Err(Error::Config("ACC low-speed settings must be positive".into()));
        }
        Ok(())
    }
}

/// Integrator of the headway PI loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccState {
    pub integral: f64,
}

/// Time to collision −R/Ṙ; infinite for an opening or constant gap.
pub fn ttc(range: f64, range_rate: f64) -> Result<f64> {
    if !(range > 0.0) {
        return Err(Error::Input(format!(
            "range to leader must be positive to compute TTC, got {range}"
        )));
    }
    if range_rate < 0.0 {
        Ok(-range / range_rate)
    } else {
        Ok(f64::INFINITY)
    }
}

/// One PI step on the headway error plus range-rate damping. Returns the
/// clamped acceleration command and the updated integrator.
pub fn acc_command(
    state: AccState,
    range: f64,
    range_rate: f64,
    speed: f64,
    dt: f64,
    params: &AccParams,
) -> (f64, AccState) {
    if speed <= params.low_speed {
        // Headway blows up near standstill: hold the gap instead and bleed
        // the integrator so a restart does not inherit stale error.
        let a = params.creep_gain * (range - params.standstill_gap);
        let next = AccState {
            integral: state.integral * 0.9,
        };
        return (a.clamp(params.accel_min, params.accel_max), next);
    }
    let headway = range / speed;
    let error = headway - params.headway;
    let integral =
        (state.integral + error * dt).clamp(-params.integral_limit, params.integral_limit);
    let a = params.kp * error + params.ki * integral + params.kd * range_rate;
    (a.clamp(params.accel_min, params.accel_max), AccState { integral })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    EcoAD,
    ACC,
    AEB,
    StoppedAtSignal,
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ControlMode::EcoAD => "EcoAD",
            ControlMode::ACC => "ACC",
            ControlMode::AEB => "AEB",
            ControlMode::StoppedAtSignal => "StoppedAtSignal",
        };
        f.write_str(s)
    }
}

/// Same-lane leader as seen by the CAV's forward sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedLeader {
    pub range: f64,
    /// dR/dt = v_leader − v_cav.
    pub range_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// AEB activates below this TTC, s.
    pub ttc_aeb: f64,
    /// AEB releases once TTC exceeds `ttc_aeb · aeb_release_factor`.
    pub aeb_release_factor: f64,
    pub sensing_range: f64,
    /// Within this distance of the stop line the CAV counts as at the line, m.
    pub stop_line_tolerance: f64,
    /// Speed regarded as standstill, m/s.
    pub standstill_speed: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ttc_aeb: 1.5,
            aeb_release_factor: 1.5,
            sensing_range: 120.0,
            stop_line_tolerance: 2.0,
            standstill_speed: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbitrationInput {
    pub speed: f64,
    pub leader: Option<SensedLeader>,
    /// Signed distance from the CAV front to the stop line at B.
    pub distance_to_stop_line: f64,
    pub red: bool,
    /// True while the Eco-AD plan has never been interrupted.
    pub plan_valid: bool,
}

pub fn arbitrate(mode: ControlMode, input: &ArbitrationInput, th: &Thresholds) -> ControlMode {
    let leader = input
        .leader
        .filter(|l| l.range <= th.sensing_range && l.range > 0.0);
    let threat = leader
        .map(|l| ttc(l.range, l.range_rate).unwrap_or(0.0))
        .unwrap_or(f64::INFINITY);

    if threat < th.ttc_aeb {
        return ControlMode::AEB;
    }
    if mode == ControlMode::AEB
        && input.speed > th.standstill_speed
        && threat < th.ttc_aeb * th.aeb_release_factor
    {
        return ControlMode::AEB;
    }

    let at_line = input.distance_to_stop_line >= -th.stop_line_tolerance
        && input.distance_to_stop_line <= th.stop_line_tolerance;
    if input.red && at_line && input.speed <= th.standstill_speed {
        return ControlMode::StoppedAtSignal;
    }
    if leader.is_some() {
        return ControlMode::ACC;
    }
    if input.plan_valid {
        ControlMode::EcoAD
    } else {
        ControlMode::ACC
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttc_examples() {
        assert_eq!(ttc(20.0, -10.0).unwrap(), 2.0);
        assert_eq!(ttc(20.0, 3.0).unwrap(), f64::INFINITY);
        assert_eq!(ttc(20.0, 0.0).unwrap(), f64::INFINITY);
        assert!(ttc(0.0, -1.0).is_err());
        assert!(ttc(-3.0, -1.0).is_err());
    }

    fn p_only() -> AccParams {
        AccParams {
            kp: 1.0,
            ki: 0.0,
            ..AccParams::default()
        }
    }

    #[test]
    fn proportional_examples() {
        let (a, _) = acc_command(AccState::default(), 28.0, 0.0, 14.0, 0.1, &p_only());
        assert!((a - 0.5).abs() < 1e-12);
        let params = AccParams::default();
        let st = AccState { integral: 2.0 };
        let (a, next) = acc_command(st, 21.0, 0.0, 14.0, 0.1, &params);
        assert_eq!(next.integral, 2.0);
        assert!((a - params.ki * 2.0).abs() < 1e-12);
    }

    #[test]
    fn integrator_is_bounded() {
        let params = AccParams::default();
        let mut st = AccState::default();
        for _ in 0..100_000 {
            st = acc_command(st, 200.0, 0.0, 10.0, 0.1, &params).1;
        }
        assert!(st.integral <= params.integral_limit);
        for _ in 0..100_000 {
            st = acc_command(st, 1.0, 0.0, 10.0, 0.1, &params).1;
        }
        assert!(st.integral >= -params.integral_limit);
    }

    #[test]
    fn low_speed_guard_holds_gap() {
        let params = AccParams::default();
        let (a, _) = acc_command(AccState::default(), params.standstill_gap, 0.0, 0.0, 0.1, &params);
        assert_eq!(a, 0.0);
        let (a, _) = acc_command(AccState::default(), 1.0, 0.0, 0.2, 0.1, &params);
        assert!(a < 0.0);
        let (a, _) = acc_command(AccState::default(), 30.0, 0.0, 0.2, 0.1, &params);
        assert!(a > 0.0 && a <= params.accel_max);
    }

    #[test]
    fn step_response_settles() {
        // Leader at a constant 12 m/s, follower starting at e = +1 s headway.
        let params = AccParams::default();
        let dt = 0.1;
        let v_lead = 12.0;
        let mut v = 12.0;
        let mut range = 12.0 * (params.headway + 1.0);
        let mut st = AccState::default();
        let mut errors = Vec::new();
        for _ in 0..1200 {
            let (a, next) = acc_command(st, range, v_lead - v, v, dt, &params);
            st = next;
            let v_new = (v + a * dt).max(0.0);
            range += (v_lead - 0.5 * (v + v_new)) * dt;
            v = v_new;
            errors.push(range / v - params.headway);
        }
        let tail = &errors[errors.len() - 200..];
        assert!(tail.iter().all(|e| e.abs() < 0.05), "final error {}", tail[tail.len() - 1]);
        // no sustained oscillation: sign changes die out over the last 60 s
        let late = &errors[600..];
        let crossings = late.windows(2).filter(|w| w[0].signum() != w[1].signum() && w[0].abs() > 0.01).count();
        assert!(crossings <= 1, "{crossings} late sign changes");
    }

    fn input(leader: Option<SensedLeader>) -> ArbitrationInput {
        ArbitrationInput {
            speed: 14.0,
            leader,
            distance_to_stop_line: 300.0,
            red: false,
            plan_valid: true,
        }
    }

    #[test]
    fn arbitration_examples() {
        let th = Thresholds::default();
        assert_eq!(arbitrate(ControlMode::EcoAD, &input(None), &th), ControlMode::EcoAD);
        let two_s = SensedLeader {
            range: 20.0,
            range_rate: -10.0,
        };
        assert_eq!(
            arbitrate(ControlMode::EcoAD, &input(Some(two_s)), &th),
            ControlMode::ACC
        );
        let one_s = SensedLeader {
            range: 10.0,
            range_rate: -10.0,
        };
        assert_eq!(
            arbitrate(ControlMode::ACC, &input(Some(one_s)), &th),
            ControlMode::AEB
        );
    }

    #[test]
    fn aeb_latches_until_threat_clears() {
        let th = Thresholds::default();
        let mild = SensedLeader {
            range: 20.0,
            range_rate: -10.0,
        };
        assert_eq!(arbitrate(ControlMode::AEB, &input(Some(mild)), &th), ControlMode::AEB);
        let clear = SensedLeader {
            range: 40.0,
            range_rate: -10.0,
        };
        assert_eq!(arbitrate(ControlMode::AEB, &input(Some(clear)), &th), ControlMode::ACC);
    }

    #[test]
    fn stop_at_red_line() {
        let th = Thresholds::default();
        let inp = ArbitrationInput {
            speed: 0.0,
            leader: None,
            distance_to_stop_line: 0.5,
            red: true,
            plan_valid: true,
        };
        assert_eq!(arbitrate(ControlMode::EcoAD, &inp, &th), ControlMode::StoppedAtSignal);
        let green = ArbitrationInput { red: false, ..inp };
        assert_eq!(arbitrate(ControlMode::StoppedAtSignal, &green, &th), ControlMode::EcoAD);
    }

    #[test]
    fn interrupted_plan_stays_off_eco() {
        let th = Thresholds::default();
        let inp = ArbitrationInput {
            plan_valid: false,
            ..input(None)
        };
        assert_eq!(arbitrate(ControlMode::ACC, &inp, &th), ControlMode::ACC);
    }

    proptest::proptest! {
        #[test]
        fn aeb_monotone_in_range(range in 0.5f64..100.0, closing in 0.1f64..30.0, shrink in 0.0f64..1.0) {
            let th = Thresholds::default();
            let at = |r: f64| arbitrate(ControlMode::EcoAD, &input(Some(SensedLeader { range: r, range_rate: -closing })), &th);
            if at(range) == ControlMode::AEB {
                proptest::prop_assert_eq!(at(range * (1.0 - shrink).max(1e-3)), ControlMode::AEB);
            }
        }

        #[test]
        fn command_within_bounds(st in -5.0f64..5.0, range in 0.1f64..300.0, v in 0.0f64..30.0) {
            let p = AccParams::default();
            let (a, next) = acc_command(AccState { integral: st }, range, 0.0, v, 0.1, &p);
            proptest::prop_assert!(a >= p.accel_min && a <= p.accel_max);
            proptest::prop_assert!(next.integral.abs() <= p.integral_limit + 1e-12);
        }
    }
}
