use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CavOutcome, Event, EventKind, SimResult, StepRecord, VehicleInfo, VehicleKind};
use crate::car_following::{cf_acceleration, counterfactual_context, follower_of, leader_of, CfParams, SceneVehicle};
use crate::config::SimConfig;
use crate::control::{acc_command, arbitrate, AccState, ArbitrationInput, ControlMode, SensedLeader};
use crate::eco_ad::{generate_case_trajectory, CaseSpec, Trajectory};
use crate::energy::{fuel_rate, trip_fuel};
use crate::error::{Error, Result};
use crate::lane_change::{
    incentive_gain, is_slower_leader, patience_triggered, patience_update, politeness_decision,
    sample_driver_params, DriverParams, PatienceState,
};
use crate::model::{Phase, VehicleState, ORIGINAL_LANE, PASSING_LANE};

/// Hardest deceleration a human driver applies, m/s².
const HUMAN_MAX_DECEL: f64 = 8.0;
/// Within this distance of the stop line a committed stop is finished in one step, m.
const STOP_SNAP_DISTANCE: f64 = 0.5;
/// Length of state history included in a collision report, s.
const DUMP_WINDOW: f64 = 5.0;

pub fn plan_for(config: &SimConfig) -> Result<Trajectory> {
    let spec = CaseSpec {
        kind: config.cav.case,
        t0: 0.0,
        s0: 0.0,
        distance: config.corridor_length,
        v0: config.cav.initial_speed,
        terminal_speed: config.cav.terminal_speed,
        weights: config.cav.weights,
    };
    generate_case_trajectory(&spec, &config.signal, &config.vehicle)
}

/// Whether a driver in the passing lane returns to the original lane: the
/// rear gap must exceed `safe_return_gap`, the new follower must not be
/// faster, and the politeness rule (with the keep-right bias added to the
/// driver's own gain) must accept.
pub fn cut_back_check(scene: &[SceneVehicle], subject: usize, params: &DriverParams, safe_return_gap: f64) -> bool {
    let Some(me) = scene.iter().find(|x| x.state.id == subject) else {
        return false;
    };
    if me.state.lane != PASSING_LANE {
        return false;
    }
    if let Some(f) = follower_of(scene, ORIGINAL_LANE, me.state.s, subject) {
        if f.state.gap_to(&me.state) <= safe_return_gap || f.state.v > me.state.v {
            return false;
        }
    }
    let Some(ctx) = counterfactual_context(scene, subject, ORIGINAL_LANE) else {
        return false;
    };
    incentive_gain(&ctx, params.politeness) + params.keep_right_bias > params.threshold
        && ctx.a_n_tilde >= -params.b_safe
}

struct CavAgent {
    plan: Trajectory,
    plan_valid: bool,
    mode: ControlMode,
    acc: AccState,
    /// A committed stop at B stays in force until this time.
    stop_until: Option<f64>,
    cruise_speed: f64,
}

struct HumanAgent {
    params: DriverParams,
    patience: PatienceState,
    trigger_reported: bool,
    last_change: f64,
    /// (red-phase index, proceed through it?)
    red_choice: Option<(i64, bool)>,
}

enum Agent {
    Cav(Box<CavAgent>),
    Human(HumanAgent),
}

struct Vehicle {
    state: VehicleState,
    agent: Agent,
}

pub struct World {
    config: SimConfig,
    step: usize,
    phase: Phase,
    vehicles: Vec<Vehicle>,
    records: Vec<StepRecord>,
    events: Vec<Event>,
}

impl World {
    pub fn new(config: &SimConfig, plan: Trajectory) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let cav = &config.cav;
        let cruise_speed = plan.mean_speed();
        let mut vehicles = vec![Vehicle {
            state: VehicleState {
                id: 0,
                lane: ORIGINAL_LANE,
                s: 0.0,
                v: cav.initial_speed,
                a: 0.0,
                length: cav.length,
            },
            agent: Agent::Cav(Box::new(CavAgent {
                plan,
                plan_valid: true,
                mode: ControlMode::EcoAD,
                acc: AccState::default(),
                stop_until: None,
                cruise_speed,
            })),
        }];
        for (k, spec) in config.humans.iter().enumerate() {
            let params = sample_driver_params(&mut rng, &spec.population(), &spec.template())?;
            vehicles.push(Vehicle {
                state: VehicleState {
                    id: k + 1,
                    lane: spec.lane,
                    s: spec.offset,
                    v: spec.initial_speed,
                    a: 0.0,
                    length: spec.length,
                },
                agent: Agent::Human(HumanAgent {
                    params,
                    patience: PatienceState::default(),
                    trigger_reported: false,
                    last_change: f64::NEG_INFINITY,
                    red_choice: None,
                }),
            });
        }
        let world = Self {
            phase: config.signal.phase(0.0),
            config: config.clone(),
            step: 0,
            vehicles,
            records: Vec::with_capacity(config.n_steps() * (config.humans.len() + 1)),
            events: Vec::new(),
        };
        if let Some((follower, leader, gap)) = world.overlap() {
            return Err(Error::Config(format!(
                "initial placement overlaps: vehicle {follower} is {gap:.2} m behind vehicle {leader}"
            )));
        }
        Ok(world)
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    fn cav(&self) -> &CavAgent {
        match &self.vehicles[0].agent {
            Agent::Cav(c) => c,
            Agent::Human(_) => unreachable!("vehicle 0 is the CAV"),
        }
    }

    fn scene(&self) -> Vec<SceneVehicle> {
        let cruise = self.cav().cruise_speed;
        self.vehicles
            .iter()
            .map(|veh| SceneVehicle {
                state: veh.state,
                cf: match &veh.agent {
                    // Humans predict the CAV as a standard follower cruising
                    // at its plan speed.
                    Agent::Cav(_) => CfParams {
                        desired_speed: cruise.max(veh.state.v).max(0.1),
                        ..CfParams::default()
                    },
                    Agent::Human(h) => h.params.cf,
                },
            })
            .collect()
    }

    fn push(&mut self, vehicle_id: Option<usize>, kind: EventKind) {
        self.events.push(Event {
            t: self.time(),
            vehicle_id,
            kind,
        });
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        let phase = self.config.signal.phase(t);
        if phase != self.phase {
            self.phase = phase;
            self.push(None, EventKind::PhaseChange { phase });
        }
        self.human_decisions();
        self.cav_control();
        self.human_control();
        self.log();
        self.integrate();
        self.step += 1;
        if let Some((follower, leader, gap)) = self.overlap() {
            return Err(Error::Collision {
                t: self.time(),
                follower,
                leader,
                gap,
                dump: self.dump(),
            });
        }
        Ok(())
    }

    fn human_decisions(&mut self) {
        let t = self.time();
        let step = self.step;
        let s_b = self.config.corridor_length;
        let lc = self.config.lane_change;
        let dt = self.config.dt;
        let scene = self.scene();
        let mut changes = Vec::new();
        let mut triggers = Vec::new();
        for (idx, veh) in self.vehicles.iter_mut().enumerate() {
            let Agent::Human(h) = &mut veh.agent else {
                continue;
            };
            let st = veh.state;
            let leader = leader_of(&scene, st.lane, st.s, st.id);
            let following = st.lane == ORIGINAL_LANE
                && leader.is_some_and(|l| {
                    is_slower_leader(l.state.v, st.gap_to(&l.state), h.params.desired_speed, lc.sensing_range)
                });
            h.patience = patience_update(h.patience, h.params.desired_speed, st.v, following, dt, step);
            if !h.patience.active {
                h.trigger_reported = false;
            }
            let triggered = patience_triggered(&h.patience, h.params.patience);
            if triggered && !h.trigger_reported {
                h.trigger_reported = true;
                triggers.push((st.id, h.patience.accumulated_loss));
            }
            let may_change = st.s < s_b && t - h.last_change >= lc.cooldown;
            if !may_change {
                continue;
            }
            if st.lane == ORIGINAL_LANE && triggered {
                if let Some(ctx) = counterfactual_context(&scene, st.id, PASSING_LANE) {
                    if politeness_decision(&ctx, &h.params) {
                        changes.push((idx, PASSING_LANE));
                    }
                }
            } else if st.lane == PASSING_LANE && cut_back_check(&scene, st.id, &h.params, lc.safe_return_gap) {
                changes.push((idx, ORIGINAL_LANE));
            }
        }
        for (id, loss) in triggers {
            self.push(Some(id), EventKind::PatienceTrigger { loss });
        }
        for (idx, to) in changes {
            let from = self.vehicles[idx].state.lane;
            self.vehicles[idx].state.lane = to;
            if let Agent::Human(h) = &mut self.vehicles[idx].agent {
                h.last_change = t;
                h.patience.reset();
                h.trigger_reported = false;
            }
            let id = self.vehicles[idx].state.id;
            self.push(Some(id), EventKind::LaneChange { from, to });
            let cav = self.vehicles[0].state;
            let me = self.vehicles[idx].state;
            if to == cav.lane && me.s > cav.s {
                let gap = cav.gap_to(&me);
                if gap <= self.config.thresholds.sensing_range {
                    self.push(Some(id), EventKind::CutIn { gap });
                }
            }
        }
    }

    fn same_lane_leader(&self, idx: usize) -> Option<VehicleState> {
        let me = self.vehicles[idx].state;
        self.vehicles
            .iter()
            .map(|v| v.state)
            .filter(|o| o.id != me.id && o.lane == me.lane && o.s > me.s)
            .min_by(|a, b| a.s.total_cmp(&b.s))
    }

    fn cav_control(&mut self) {
        let t = self.time();
        let cfg = &self.config;
        let dt = cfg.dt;
        let s_b = cfg.corridor_length;
        let th = cfg.thresholds;
        let me = self.vehicles[0].state;
        let leader = self.same_lane_leader(0).map(|l| SensedLeader {
            range: me.gap_to(&l),
            range_rate: l.v - me.v,
        });
        let distance = s_b - me.s;
        let red = self.phase == Phase::Red;
        let signal = cfg.signal;
        let cav_cfg = cfg.cav;
        let acc_params = cfg.acc;
        let veh = cfg.vehicle;

        let Agent::Cav(cav) = &mut self.vehicles[0].agent else {
            unreachable!("vehicle 0 is the CAV")
        };
        let input = ArbitrationInput {
            speed: me.v,
            leader,
            distance_to_stop_line: distance,
            red,
            plan_valid: cav.plan_valid,
        };
        let mode = arbitrate(cav.mode, &input, &th);
        let previous = cav.mode;
        if matches!(mode, ControlMode::ACC | ControlMode::AEB) {
            cav.plan_valid = false;
        }
        cav.mode = mode;

        // Stop commitment for B, latched until the next green starts.
        if cav.stop_until.is_some_and(|until| t >= until) {
            cav.stop_until = None;
        }
        if distance > 0.0 && cav.stop_until.is_none() {
            let required = me.v * me.v / (2.0 * distance);
            let can_stop = required <= veh.max_deceleration();
            let commit = if red {
                can_stop
            } else if cav.plan_valid && t <= cav.plan.end_time() {
                signal.phase(cav.plan.end_time()) == Phase::Red
            } else {
                let arrival = t + distance / me.v.max(0.1);
                can_stop && arrival > signal.green_end(t) - cav_cfg.green_margin
            };
            if commit {
                cav.stop_until = Some(signal.next_green_start(signal.green_end(t)).min(if red {
                    signal.next_green_start(t)
                } else {
                    f64::INFINITY
                }));
            }
        }

        let set_speed = if distance > 0.0 {
            cav.cruise_speed
        } else {
            cav_cfg.departure_speed
        };
        let speed_control = (cav_cfg.tracking_gain * (set_speed - me.v))
            .clamp(-cav_cfg.comfort_decel, cav_cfg.departure_accel);
        let mut a = match mode {
            ControlMode::AEB => -veh.max_deceleration(),
            ControlMode::StoppedAtSignal => -me.v / dt,
            ControlMode::EcoAD => {
                if t <= cav.plan.end_time() {
                    cav.plan.accel_at(t) + cav_cfg.tracking_gain * (cav.plan.speed_at(t) - me.v)
                } else {
                    (cav_cfg.tracking_gain * (cav_cfg.departure_speed - me.v))
                        .clamp(-cav_cfg.comfort_decel, cav_cfg.departure_accel)
                }
            }
            ControlMode::ACC => match leader {
                Some(l) => {
                    let (a_acc, next) = acc_command(cav.acc, l.range, l.range_rate, me.v, dt, &acc_params);
                    cav.acc = next;
                    a_acc.min(speed_control)
                }
                None => speed_control,
            },
        };
        if mode != ControlMode::ACC {
            cav.acc = AccState::default();
        }
        if mode != ControlMode::AEB && cav.stop_until.is_some() && distance > 0.0 {
            if distance <= STOP_SNAP_DISTANCE
                || (distance <= th.stop_line_tolerance && me.v <= 1.0)
            {
                a = -me.v / dt;
            } else {
                let required = me.v * me.v / (2.0 * distance);
                if required >= cav_cfg.comfort_decel {
                    a = a.min(-required);
                }
            }
        }
        self.vehicles[0].state.a = a.clamp(-veh.max_deceleration(), veh.max_acceleration());
        if mode != previous {
            self.push(Some(0), EventKind::ModeSwitch { from: previous, to: mode });
        }
    }

    fn human_control(&mut self) {
        let t = self.time();
        let s_b = self.config.corridor_length;
        let signal = self.config.signal;
        let red = self.phase == Phase::Red;
        let red_index = ((t + signal.phase_offset) / signal.cycle()).floor() as i64;
        for idx in 1..self.vehicles.len() {
            let leader = self.same_lane_leader(idx);
            let veh = &mut self.vehicles[idx];
            let Agent::Human(h) = &mut veh.agent else {
                continue;
            };
            let st = veh.state;
            let cf = &h.params.cf;
            let mut a = match leader {
                Some(l) => cf_acceleration(st.v, st.gap_to(&l), st.v - l.v, cf),
                None => cf_acceleration(st.v, f64::INFINITY, 0.0, cf),
            };
            let distance = s_b - st.s;
            if red && distance > 0.0 {
                let proceed = match h.red_choice {
                    Some((k, p)) if k == red_index => p,
                    _ => {
                        // Dilemma zone: go if stopping would take more than b_safe.
                        let p = st.v * st.v / (2.0 * distance) > h.params.b_safe;
                        h.red_choice = Some((red_index, p));
                        p
                    }
                };
                if !proceed {
                    a = a.min(cf_acceleration(st.v, distance, st.v, cf));
                }
            }
            veh.state.a = a.clamp(-HUMAN_MAX_DECEL, cf.max_accel);
        }
    }

    fn log(&mut self) {
        let t = self.time();
        let dt = self.config.dt;
        let mode = self.cav().mode;
        for veh in self.vehicles.iter_mut() {
            // Report the acceleration actually realized after the v >= 0 clamp.
            let v_next = (veh.state.v + veh.state.a * dt).max(0.0);
            veh.state.a = (v_next - veh.state.v) / dt;
            let st = veh.state;
            self.records.push(StepRecord {
                t,
                vehicle_id: st.id,
                lane: st.lane,
                s: st.s,
                v: st.v,
                a: st.a,
                mode: matches!(veh.agent, Agent::Cav(_)).then_some(mode),
                fuel_rate: fuel_rate(st.v, st.a, &self.config.fuel),
            });
        }
    }

    fn integrate(&mut self) {
        let dt = self.config.dt;
        let t = self.time();
        let s_b = self.config.corridor_length;
        let before: Vec<VehicleState> = self.vehicles.iter().map(|v| v.state).collect();
        for veh in self.vehicles.iter_mut() {
            let st = &mut veh.state;
            let v_next = (st.v + st.a * dt).max(0.0);
            st.s += 0.5 * (st.v + v_next) * dt;
            st.v = v_next;
        }
        let cav_before = before[0];
        let cav_after = self.vehicles[0].state;
        let mut new_events = Vec::new();
        for (old, veh) in before.iter().zip(&self.vehicles) {
            let new = veh.state;
            if old.s < s_b && new.s >= s_b {
                let frac = (s_b - old.s) / (new.s - old.s);
                let tc = t + frac * dt;
                new_events.push((tc, new.id, EventKind::Crossing { phase: self.config.signal.phase(tc) }));
            }
            if new.id != 0 && new.lane != cav_after.lane && old.s <= cav_before.s && new.s > cav_after.s {
                new_events.push((t + dt, new.id, EventKind::Overtake { overtaken: 0 }));
            }
        }
        for (tc, id, kind) in new_events {
            self.events.push(Event {
                t: tc,
                vehicle_id: Some(id),
                kind,
            });
        }
    }

    /// First pair (follower, leader, gap) in the same lane with gap <= 0.
    fn overlap(&self) -> Option<(usize, usize, f64)> {
        for lane in [ORIGINAL_LANE, PASSING_LANE] {
            let mut in_lane: Vec<VehicleState> = self
                .vehicles
                .iter()
                .map(|v| v.state)
                .filter(|s| s.lane == lane)
                .collect();
            in_lane.sort_by(|a, b| a.s.total_cmp(&b.s));
            for pair in in_lane.windows(2) {
                let gap = pair[0].gap_to(&pair[1]);
                if gap <= 0.0 {
                    return Some((pair[0].id, pair[1].id, gap));
                }
            }
        }
        None
    }

    fn dump(&self) -> String {
        let from = self.time() - DUMP_WINDOW;
        let mut out = String::from("t,vehicle_id,lane,s,v,a\n");
        for r in self.records.iter().filter(|r| r.t >= from) {
            out.push_str(&format!("{:.2},{},{},{:.3},{:.3},{:.3}\n", r.t, r.vehicle_id, r.lane, r.s, r.v, r.a));
        }
        out
    }

    pub fn finish(self) -> SimResult {
        let cfg = &self.config;
        let n_steps = self.step;
        let vehicles: Vec<VehicleInfo> = self
            .vehicles
            .iter()
            .map(|v| VehicleInfo {
                id: v.state.id,
                kind: match &v.agent {
                    Agent::Cav(_) => VehicleKind::Cav,
                    Agent::Human(h) => VehicleKind::Human(h.params),
                },
                length: v.state.length,
            })
            .collect();
        let trip = vehicles
            .iter()
            .map(|info| {
                let (v, a): (Vec<f64>, Vec<f64>) = self
                    .records
                    .iter()
                    .filter(|r| r.vehicle_id == info.id)
                    .map(|r| (r.v, r.a))
                    .unzip();
                trip_fuel(&v, &a, cfg.dt, &cfg.fuel).expect("runs log at least two steps")
            })
            .collect();

        let cav_rows: Vec<&StepRecord> = self.records.iter().filter(|r| r.vehicle_id == 0).collect();
        let window_end = cfg.corridor_length + cfg.departure_length;
        let end = cav_rows.iter().position(|r| r.s >= window_end);
        let window = &cav_rows[..end.map_or(cav_rows.len(), |e| e + 1)];
        let (v, a): (Vec<f64>, Vec<f64>) = window.iter().map(|r| (r.v, r.a)).unzip();
        let metrics = trip_fuel(&v, &a, cfg.dt, &cfg.fuel).expect("runs log at least two steps");
        let crossing_time = self
            .events
            .iter()
            .find(|e| e.vehicle_id == Some(0) && matches!(e.kind, EventKind::Crossing { .. }))
            .map(|e| e.t);
        let initial_green_end = cfg.signal.green_end(0.0);
        let plan = match self.vehicles.into_iter().next().map(|v| v.agent) {
            Some(Agent::Cav(c)) => c.plan,
            _ => unreachable!("vehicle 0 is the CAV"),
        };
        let signal_wait = cav_rows
            .iter()
            .filter(|r| r.mode == Some(ControlMode::StoppedAtSignal))
            .count() as f64
            * cfg.dt;
        SimResult {
            dt: cfg.dt,
            n_steps,
            vehicles,
            records: self.records,
            events: self.events,
            cav: CavOutcome {
                planned_arrival: plan.end_time(),
                crossing_time,
                crossed_in_initial_green: crossing_time.is_some_and(|tc| tc < initial_green_end),
                signal_wait,
                metrics,
                window_complete: end.is_some(),
            },
            plan,
            trip,
        }
    }
}
