//! Intelligent Driver Model longitudinal law, and the counterfactual
//! neighbour accelerations a lane-change decision needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane_change::LaneChangeContext;
use crate::model::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfParams {
    /// Free-flow speed v0, m/s. Overwritten with V_des for human drivers.
    pub desired_speed: f64,
    /// Desired time gap T, s.
    pub time_gap: f64,
    pub max_accel: f64,
    pub comfortable_decel: f64,
    /// Jam distance s0, m.
    pub min_gap: f64,
    /// Acceleration exponent δ.
    pub delta: f64,
}

impl Default for CfParams {
    fn default() -> Self {
        Self {
            desired_speed: 18.0,
            time_gap: 1.5,
            max_accel: 1.5,
            comfortable_decel: 2.0,
            min_gap: 2.0,
            delta: 4.0,
        }
    }
}

impl CfParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("desired_speed", self.desired_speed),
            ("time_gap", self.time_gap),
            ("max_accel", self.max_accel),
            ("comfortable_decel", self.comfortable_decel),
            ("min_gap", self.min_gap),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!(
                    "car-following {name} must be positive, got {x}"
                )));
            }
        }
        if !(self.delta >= 1.0) {
            return Err(Error::Config(format!(
                "car-following delta must be at least 1, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Desired dynamic gap s*(v, Δv).
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        let interaction =
            v * self.time_gap + v * dv / (2.0 * (self.max_accel * self.comfortable_decel).sqrt());
        self.min_gap + interaction.max(0.0)
    }

    /// Bumper gap at which a vehicle at steady speed `v` behind an equally fast
    /// leader has zero acceleration. Infinite at or above the free-flow speed.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        let free = 1.0 - (v / self.desired_speed).powf(self.delta);
        if free <= 0.0 {
            return f64::INFINITY;
        }
        self.desired_gap(v, 0.0) / free.sqrt()
    }
}

/// IDM acceleration. `gap` is the bumper gap to the leader (`f64::INFINITY`
/// on a free road) and `dv` the closing speed v − v_leader. A nonpositive gap
/// yields −∞; the simulation engine treats that as a collision.
pub fn cf_acceleration(v: f64, gap: f64, dv: f64, params: &CfParams) -> f64 {
    let free = 1.0 - (v.max(0.0) / params.desired_speed).powf(params.delta);
    if gap == f64::INFINITY {
        return params.max_accel * free;
    }
    if gap <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let ratio = params.desired_gap(v, dv) / gap;
    params.max_accel * (free - ratio * ratio)
}

/// One vehicle as seen by a lane-change query, with the car-following law
/// used to predict its response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneVehicle {
    pub state: VehicleState,
    pub cf: CfParams,
}

impl SceneVehicle {
    fn accel_behind(&self, leader: Option<&SceneVehicle>) -> f64 {
        match leader {
            Some(l) => cf_acceleration(
                self.state.v,
                self.state.gap_to(&l.state),
                self.state.v - l.state.v,
                &self.cf,
            ),
            None => cf_acceleration(self.state.v, f64::INFINITY, 0.0, &self.cf),
        }
    }
}

/// Nearest vehicle ahead of position `s` in `lane`, skipping `exclude`.
pub fn leader_of<'a>(
    scene: &'a [SceneVehicle],
    lane: u8,
    s: f64,
    exclude: usize,
) -> Option<&'a SceneVehicle> {
    scene
        .iter()
        .filter(|x| x.state.id != exclude && x.state.lane == lane && x.state.s > s)
        .min_by(|a, b| a.state.s.total_cmp(&b.state.s))
}

/// Nearest vehicle at or behind position `s` in `lane`, skipping `exclude`.
pub fn follower_of<'a>(
    scene: &'a [SceneVehicle],
    lane: u8,
    s: f64,
    exclude: usize,
) -> Option<&'a SceneVehicle> {
    scene
        .iter()
        .filter(|x| x.state.id != exclude && x.state.lane == lane && x.state.s <= s)
        .max_by(|a, b| a.state.s.total_cmp(&b.state.s))
}

/// Before/after accelerations for moving `subject` into `target_lane`.
///
/// Returns `None` when the target slot is physically occupied (the subject
/// would overlap its new leader or new follower). The old follower is held at
/// its current acceleration.
pub fn counterfactual_context(
    scene: &[SceneVehicle],
    subject: usize,
    target_lane: u8,
) -> Option<LaneChangeContext> {
    let me = scene.iter().find(|x| x.state.id == subject)?;
    let s = me.state.s;
    let current_leader = leader_of(scene, me.state.lane, s, subject);
    let new_leader = leader_of(scene, target_lane, s, subject);
    let new_follower = follower_of(scene, target_lane, s, subject);
    let old_follower = follower_of(scene, me.state.lane, s, subject);

    if let Some(l) = new_leader {
        if me.state.gap_to(&l.state) <= 0.0 {
            return None;
        }
    }
    if let Some(f) = new_follower {
        if f.state.gap_to(&me.state) <= 0.0 {
            return None;
        }
    }

    let a_c = me.accel_behind(current_leader);
    let a_c_tilde = me.accel_behind(new_leader);
    let (a_n, a_n_tilde) = match new_follower {
        Some(f) => (f.accel_behind(new_leader), f.accel_behind(Some(me))),
        None => (0.0, 0.0),
    };
    let a_o = old_follower.map_or(0.0, |o| o.accel_behind(Some(me)));
    Some(LaneChangeContext {
        a_c,
        a_c_tilde,
        a_n,
        a_n_tilde,
        a_o,
        a_o_tilde: a_o,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane_change::incentive_gain;

    fn params() -> CfParams {
        CfParams {
            desired_speed: 18.0,
            time_gap: 1.5,
            max_accel: 1.5,
            comfortable_decel: 2.0,
            min_gap: 2.0,
            delta: 4.0,
        }
    }

    #[test]
    fn free_road_equilibrium() {
        let p = params();
        assert!(cf_acceleration(p.desired_speed, f64::INFINITY, 0.0, &p).abs() < 1e-15);
    }

    #[test]
    fn jam_equilibrium() {
        let p = params();
        assert!(cf_acceleration(0.0, p.min_gap, 0.0, &p).abs() < 1e-15);
    }

    #[test]
    fn closed_form_value() {
        // Independent hand evaluation:
        // s* = 2 + 15·1.5 = 24.5; free = 1 − (15/18)^4 = 0.5177469...;
        // a = 1.5·(free − (24.5/40)^2)
        let p = params();
        let free = 1.0 - (15.0f64 / 18.0).powi(4);
        let expected = 1.5 * (free - (24.5f64 / 40.0).powi(2));
        let a = cf_acceleration(15.0, 40.0, 0.0, &p);
        assert!((a - expected).abs() < 1e-14);
        assert!((a - 0.213_886_0).abs() < 1e-6);
    }

    #[test]
    fn zero_gap_is_collision() {
        assert_eq!(cf_acceleration(5.0, 0.0, 0.0, &params()), f64::NEG_INFINITY);
    }

    fn veh(id: usize, lane: u8, s: f64, v: f64) -> SceneVehicle {
        SceneVehicle {
            state: VehicleState {
                id,
                lane,
                s,
                v,
                a: 0.0,
                length: 5.0,
            },
            cf: params(),
        }
    }

    #[test]
    fn empty_target_lane_has_no_follower_term() {
        let scene = [veh(0, 0, 100.0, 12.0), veh(1, 0, 70.0, 14.0)];
        let ctx = counterfactual_context(&scene, 1, 1).unwrap();
        assert_eq!(ctx.new_follower_change(), 0.0);
        assert_eq!(incentive_gain(&ctx, 1.0), ctx.driver_gain());
        assert!(ctx.driver_gain() > 0.0);
    }

    #[test]
    fn free_road_both_sides_gives_no_incentive() {
        let scene = [veh(1, 0, 70.0, 14.0)];
        let ctx = counterfactual_context(&scene, 1, 1).unwrap();
        assert_eq!(ctx.a_c, ctx.a_c_tilde);
        assert_eq!(incentive_gain(&ctx, 1.0), 0.0);
    }

    #[test]
    fn three_vehicle_scene_matches_hand_evaluation() {
        // Subject at s = 100 @ 14 m/s, leader 30 m bumper gap ahead @ 12 m/s,
        // target-lane follower 25 m bumper gap behind @ 16 m/s.
        let scene = [
            veh(0, 0, 135.0, 12.0),
            veh(1, 0, 100.0, 14.0),
            veh(2, 1, 70.0, 16.0),
        ];
        let ctx = counterfactual_context(&scene, 1, 1).unwrap();
        let root = (1.5f64 * 2.0).sqrt();
        // a_c: s* = 2 + 14·1.5 + 14·2/(2√3)
        let s_star_c = 2.0 + 21.0 + 14.0 * 2.0 / (2.0 * root);
        let free_c = 1.0 - (14.0f64 / 18.0).powi(4);
        let a_c = 1.5 * (free_c - (s_star_c / 30.0).powi(2));
        assert!((ctx.a_c - a_c).abs() < 1e-12);
        assert!((ctx.a_c_tilde - 1.5 * free_c).abs() < 1e-12);
        // follower free before, behind the subject after: s* = 2 + 24 + 16·2/(2√3)
        let free_n = 1.0 - (16.0f64 / 18.0).powi(4);
        assert!((ctx.a_n - 1.5 * free_n).abs() < 1e-12);
        let s_star_n = 2.0 + 24.0 + 16.0 * 2.0 / (2.0 * root);
        let a_n_tilde = 1.5 * (free_n - (s_star_n / 25.0).powi(2));
        assert!((ctx.a_n_tilde - a_n_tilde).abs() < 1e-12);
        assert_eq!(ctx.a_o, ctx.a_o_tilde);
    }

    #[test]
    fn occupied_slot_is_rejected() {
        let scene = [veh(1, 0, 100.0, 14.0), veh(2, 1, 102.0, 14.0)];
        assert!(counterfactual_context(&scene, 1, 1).is_none());
    }

    #[test]
    fn equilibrium_gap_zeroes_acceleration() {
        let p = params();
        for v in [0.5, 5.0, 12.0, 17.9] {
            let g = p.equilibrium_gap(v);
            assert!(cf_acceleration(v, g, 0.0, &p).abs() < 1e-9, "v = {v}");
        }
    }

    proptest::proptest! {
        #[test]
        fn never_exceeds_max_accel(v in 0.0f64..40.0, gap in 0.01f64..500.0, dv in -20.0f64..20.0) {
            let p = params();
            proptest::prop_assert!(cf_acceleration(v, gap, dv, &p) <= p.max_accel);
        }

        #[test]
        fn monotone_in_each_argument(v in 0.0f64..30.0, gap in 0.5f64..200.0, dv in -10.0f64..10.0, bump in 0.001f64..2.0) {
            let p = params();
            let a = cf_acceleration(v, gap, dv, &p);
            proptest::prop_assert!(cf_acceleration(v + bump, gap, dv, &p) <= a + 1e-12);
            proptest::prop_assert!(cf_acceleration(v, gap + bump, dv, &p) >= a - 1e-12);
            proptest::prop_assert!(cf_acceleration(v, gap, dv + bump, &p) <= a + 1e-12);
        }

        #[test]
        fn query_does_not_mutate(s1 in 0.0f64..200.0, s2 in 0.0f64..200.0, v in 0.0f64..20.0) {
            let scene = vec![veh(0, 0, 300.0, 10.0), veh(1, 0, s1, v), veh(2, 1, s2, v)];
            let before = scene.clone();
            let _ = counterfactual_context(&scene, 1, 1);
            proptest::prop_assert_eq!(scene, before);
        }
    }
}
