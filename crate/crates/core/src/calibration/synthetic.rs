//! Synthetic cut-in and overtake episodes for round-trip checks.
//!
//! Each episode is a small closed-loop scene driven by the library's
//! car-following law and lane-change rules. Before a change every vehicle
//! is at a steady state, so logged accelerations are exact; during the
//! manoeuvre the subject and its new follower hold the accelerations they
//! anticipated at the decision. Politeness scenes are placed a short,
//! random lead time before the driver's indifference point so each episode
//! resolves quickly; nothing about the scene is visible to the estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::TrajectoryLog;
use crate::car_following::{cf_acceleration, counterfactual_context, leader_of, CfParams, SceneVehicle};
use crate::dist::DistributionConfig;
use crate::error::{Error, Result};
use crate::lane_change::{
    incentive_gain, is_slower_leader, patience_triggered, patience_update, politeness_decision, DriverParams, PatienceState,
};
use crate::model::{VehicleState, ORIGINAL_LANE, PASSING_LANE};

const LENGTH: f64 = 4.5;
/// Episodes that have not resolved after this long are dropped, s.
const POLITENESS_TIMEOUT: f64 = 120.0;
const PATIENCE_TIMEOUT: f64 = 3000.0;
/// Logged time after an overtake, covering the desired-speed window, s.
const OVERTAKE_TAIL: f64 = 6.0;
/// Neighbour range used by the generated drivers, m.
const SENSING_RANGE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub episodes: usize,
    pub seed: u64,
    pub politeness: DistributionConfig,
    pub patience: DistributionConfig,
    /// Desired speeds are drawn uniformly from this range, m/s.
    pub desired_speed: (f64, f64),
    pub dt: f64,
    /// How long the subject and its new follower hold their anticipated accelerations, s.
    pub maneuver_hold: f64,
    /// Free-road acceleration exponent of overtaking drivers; a large value
    /// lets them reach their desired speed within the observation window.
    pub overtake_delta: f64,
    pub overtake_max_accel: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            seed: 7,
            politeness: DistributionConfig::t_location_scale(0.0, 0.4, 3.0).truncated(-2.0, 2.0),
            patience: DistributionConfig::generalized_pareto(0.0, 200.0, 0.2),
            desired_speed: (15.0, 22.0),
            dt: 0.1,
            maneuver_hold: 2.5,
            overtake_delta: 40.0,
            overtake_max_accel: 2.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        self.politeness.validate()?;
        self.patience.validate()?;
        let (lo, hi) = self.desired_speed;
        if !(lo > 5.0 && hi >= lo) {
            return Err(Error::Config(format!("desired speed range ({lo}, {hi}) is not usable")));
        }
        if !(self.dt > 0.0 && self.maneuver_hold > 0.0 && self.overtake_delta >= 1.0 && self.overtake_max_accel > 0.0)
        {
            return Err(Error::Config("synthetic timing and driver parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub politeness_logs: Vec<TrajectoryLog>,
    pub patience_logs: Vec<TrajectoryLog>,
    /// Generating politeness of each resolved cut-in episode.
    pub politeness: Vec<f64>,
    /// Generating patience of each overtake episode.
    pub patience: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct CutInSpec {
    politeness: f64,
    desired_speed: f64,
    /// Sets the host disadvantage at indifference; uniform in [0, 1).
    shape: f64,
    rel_speed: f64,
    lead_time: f64,
}

#[derive(Debug, Clone, Copy)]
struct OvertakeSpec {
    patience: f64,
    desired_speed: f64,
    deficit: f64,
}

struct Scene {
    vehicles: Vec<SceneVehicle>,
    held: Vec<Option<(f64, usize)>>,
    log: TrajectoryLog,
    dt: f64,
}

impl Scene {
    fn new(vehicles: Vec<SceneVehicle>, dt: f64) -> Self {
        Self {
            held: vec![None; vehicles.len()],
            vehicles,
            log: TrajectoryLog::new(dt),
            dt,
        }
    }

    fn idx(&self, id: usize) -> usize {
        self.vehicles.iter().position(|v| v.state.id == id).expect("vehicle in scene")
    }

    /// Car-following accelerations (or held values), log at step `k`, integrate.
    fn advance(&mut self, k: usize) {
        let accels: Vec<f64> = (0..self.vehicles.len())
            .map(|i| match self.held[i] {
                Some((a, until)) if k < until => a,
                _ => {
                    let me = &self.vehicles[i];
                    match leader_of(&self.vehicles, me.state.lane, me.state.s, me.state.id) {
                        Some(l) => cf_acceleration(
                            me.state.v,
                            me.state.gap_to(&l.state),
                            me.state.v - l.state.v,
                            &me.cf,
                        ),
                        None => cf_acceleration(me.state.v, f64::INFINITY, 0.0, &me.cf),
                    }
                }
            })
            .collect();
        let t = k as f64 * self.dt;
        for (veh, a) in self.vehicles.iter_mut().zip(accels) {
            let st = &mut veh.state;
            self.log.push(st.id, t, st.lane, st.s, st.v);
            let v1 = (st.v + a * self.dt).max(0.0);
            st.s += 0.5 * (st.v + v1) * self.dt;
            st.v = v1;
        }
    }
}

fn vehicle(id: usize, lane: u8, s: f64, v: f64, cf: CfParams) -> SceneVehicle {
    SceneVehicle {
        state: VehicleState {
            id,
            lane,
            s,
            v,
            a: 0.0,
            length: LENGTH,
        },
        cf,
    }
}

fn cf(desired_speed: f64) -> CfParams {
    CfParams {
        desired_speed,
        ..CfParams::default()
    }
}

/// Smallest x in [lo, hi] with f(x) > 0 for increasing f, by bisection.
fn first_positive(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    if f(hi) <= 0.0 {
        return None;
    }
    if f(lo) > 0.0 {
        return Some(lo);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    Some(b)
}

/// Subject 0 changes from lane 0 into lane 1 ahead of host 2.
///
/// p ≥ 0: the subject follows a slower leader 1 at its steady gap
/// and gains by moving to the free passing lane; the host falls back, so
/// its disadvantage shrinks over time.
/// p < 0: the subject cruises alone at its desired speed; in lane 1 a
/// distant leader 1 makes the move a small fixed loss while a faster host
/// closes in from behind, so the host's disadvantage grows over time.
fn cut_in_episode(spec: &CutInSpec, cfg: &SyntheticConfig) -> Option<TrajectoryLog> {
    let p = spec.politeness;
    let v_des = spec.desired_speed;
    let driver = DriverParams::new(p, 0.0, v_des);
    // Disadvantage to the host at which the subject becomes indifferent.
    let harm = 0.3 + 3.2 * spec.shape;
    let vehicles = if p >= 0.0 {
        let sub_cf = cf(v_des);
        // Free-lane gain that makes the subject indifferent at the target harm.
        let gain = (p * harm).min(0.8 * sub_cf.max_accel);
        let v = v_des * (1.0 - gain / sub_cf.max_accel).powf(0.25);
        let lead_gap = sub_cf.equilibrium_gap(v);
        let v_host = v - spec.rel_speed;
        let scene = move |g: f64| {
            vec![
                vehicle(0, ORIGINAL_LANE, 0.0, v, sub_cf),
                vehicle(1, ORIGINAL_LANE, lead_gap + LENGTH, v, cf(v)),
                vehicle(2, PASSING_LANE, -LENGTH - g, v_host, cf(v_host)),
            ]
        };
        // The gain rises as the host falls back.
        let gap = first_positive(
            |g| {
                let ctx = counterfactual_context(&scene(g), 0, PASSING_LANE).expect("slot is open");
                incentive_gain(&ctx, p) - driver.threshold
            },
            0.05,
            500.0,
        )?;
        scene((gap - spec.rel_speed * spec.lead_time).max(0.5 * gap))
    } else {
        let sub_cf = cf(v_des);
        let v_host = v_des + spec.rel_speed;
        let loss = -p * harm;
        let lead_gap = first_positive(|g| cf_acceleration(v_des, g, 0.0, &sub_cf) + loss, 1.0, 1e7)?;
        let scene = move |g: f64, host_speed: f64| {
            vec![
                vehicle(0, ORIGINAL_LANE, 0.0, v_des, sub_cf),
                vehicle(1, PASSING_LANE, lead_gap + LENGTH, v_des, cf(v_des)),
                vehicle(2, PASSING_LANE, -LENGTH - g, v_host, cf(host_speed)),
            ]
        };
        // The gain rises as the host closes in.
        const FAR: f64 = 300.0;
        let crossing = |host_speed: f64| {
            first_positive(
                |x| {
                    let ctx = counterfactual_context(&scene(FAR - x, host_speed), 0, PASSING_LANE)
                        .expect("slot is open");
                    incentive_gain(&ctx, p) - driver.threshold
                },
                0.0,
                FAR - 0.5,
            )
            .map(|x| FAR - x)
        };
        // Tune the host's free speed so it is near steady around the crossing.
        let mut host_speed = 1.2 * v_host;
        let mut gap = crossing(host_speed)?;
        for _ in 0..2 {
            let to_leader = gap + LENGTH + lead_gap;
            host_speed = first_positive(
                |w| cf_acceleration(v_host, to_leader, spec.rel_speed, &cf(w)),
                v_host,
                10.0 * v_host,
            )?;
            gap = crossing(host_speed)?;
        }
        scene(gap + spec.rel_speed * spec.lead_time, host_speed)
    };
    let mut sc = Scene::new(vehicles, cfg.dt);
    let hold = (cfg.maneuver_hold / cfg.dt).round() as usize;
    let max_steps = (POLITENESS_TIMEOUT / cfg.dt) as usize;
    for k in 0..max_steps {
        if let Some(ctx) = counterfactual_context(&sc.vehicles, 0, PASSING_LANE) {
            if politeness_decision(&ctx, &driver) {
                let (i, h) = (sc.idx(0), sc.idx(2));
                sc.vehicles[i].state.lane = PASSING_LANE;
                sc.held[i] = Some((ctx.a_c_tilde, k + hold));
                sc.held[h] = Some((ctx.a_n_tilde, k + hold));
                for j in k..=k + hold {
                    sc.advance(j);
                }
                return Some(sc.log);
            }
        }
        sc.advance(k);
    }
    None
}

/// Subject 0 follows a slower leader 1 until its patience runs out, then
/// moves to the empty passing lane and accelerates.
fn overtake_episode(spec: &OvertakeSpec, cfg: &SyntheticConfig) -> Option<TrajectoryLog> {
    let sub_cf = CfParams {
        desired_speed: spec.desired_speed,
        delta: cfg.overtake_delta,
        max_accel: cfg.overtake_max_accel,
        ..CfParams::default()
    };
    let mut driver = DriverParams::new(0.0, spec.patience, spec.desired_speed);
    driver.cf = sub_cf;
    let v_lead = spec.desired_speed - spec.deficit;
    let gap = sub_cf.equilibrium_gap(v_lead);
    let mut sc = Scene::new(
        vec![
            vehicle(0, ORIGINAL_LANE, 0.0, v_lead, sub_cf),
            vehicle(1, ORIGINAL_LANE, gap + LENGTH, v_lead, cf(v_lead)),
        ],
        cfg.dt,
    );
    let mut patience = PatienceState::default();
    let tail = (OVERTAKE_TAIL / cfg.dt).round() as usize;
    for k in 0..(PATIENCE_TIMEOUT / cfg.dt) as usize {
        let me = sc.vehicles[0].state;
        let lead = sc.vehicles[1].state;
        let following = me.lane == ORIGINAL_LANE
            && is_slower_leader(lead.v, me.gap_to(&lead), spec.desired_speed, SENSING_RANGE);
        patience = patience_update(patience, spec.desired_speed, me.v, following, cfg.dt, k);
        if k > 0 && patience_triggered(&patience, spec.patience) {
            let ctx = counterfactual_context(&sc.vehicles, 0, PASSING_LANE)?;
            if politeness_decision(&ctx, &driver) {
                sc.vehicles[0].state.lane = PASSING_LANE;
                for j in k..=k + tail {
                    sc.advance(j);
                }
                return Some(sc.log);
            }
        }
        sc.advance(k);
    }
    None
}

/// Draws `episodes` cut-in and `episodes` overtake scenes and simulates them.
/// Draws are sequential from one seeded stream; simulation runs in parallel.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticBatch> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.desired_speed;
    let speed = |rng: &mut ChaCha8Rng| lo + (hi - lo) * rng.random::<f64>();
    let cut_ins: Vec<CutInSpec> = (0..cfg.episodes)
        .map(|_| CutInSpec {
            politeness: cfg.politeness.sample(&mut rng),
            desired_speed: speed(&mut rng),
            shape: rng.random(),
            rel_speed: 0.2 + 0.3 * rng.random::<f64>(),
            lead_time: 2.0 + 4.0 * rng.random::<f64>(),
        })
        .collect();
    let overtakes: Vec<OvertakeSpec> = (0..cfg.episodes)
        .map(|_| OvertakeSpec {
            patience: cfg.patience.sample(&mut rng),
            desired_speed: speed(&mut rng),
            deficit: 2.0 + 3.0 * rng.random::<f64>(),
        })
        .collect();
    let cut_in_logs: Vec<(f64, TrajectoryLog)> = cut_ins
        .par_iter()
        .filter_map(|s| cut_in_episode(s, cfg).map(|l| (s.politeness, l)))
        .collect();
    let overtake_logs: Vec<(f64, TrajectoryLog)> = overtakes
        .par_iter()
        .filter_map(|s| overtake_episode(s, cfg).map(|l| (s.patience, l)))
        .collect();
    let (politeness, politeness_logs) = cut_in_logs.into_iter().unzip();
    let (patience, patience_logs) = overtake_logs.into_iter().unzip();
    Ok(SyntheticBatch {
        politeness_logs,
        patience_logs,
        politeness,
        patience,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{
        estimate_patience, estimate_politeness, extract_events, extract_overtakes, ExtractionConfig,
    };

    fn spec(p: f64) -> CutInSpec {
        CutInSpec {
            politeness: p,
            desired_speed: 18.0,
            shape: 0.5,
            rel_speed: 0.3,
            lead_time: 3.0,
        }
    }

    #[test]
    fn single_cut_ins_recover_politeness() {
        let cfg = SyntheticConfig::default();
        let ex = ExtractionConfig::default();
        for p in [-1.5, -0.6, -0.2, 0.1, 0.4, 1.0, 1.9] {
            let log = cut_in_episode(&spec(p), &cfg).unwrap_or_else(|| panic!("p = {p} unresolved"));
            let ev = extract_events(&[log], &ex).unwrap();
            assert_eq!(ev.len(), 1, "p = {p}");
            let est = estimate_politeness(&ev[0], ex.min_follower_effect).unwrap();
            assert!((est - p).abs() < 0.02 * p.abs().max(0.5), "p = {p}, estimate {est}");
        }
    }

    #[test]
    fn single_overtakes_recover_patience() {
        let cfg = SyntheticConfig::default();
        for alpha in [0.0, 50.0, 500.0, 3000.0] {
            let s = OvertakeSpec {
                patience: alpha,
                desired_speed: 19.0,
                deficit: 4.0,
            };
            let log = overtake_episode(&s, &cfg).unwrap();
            let ep = extract_overtakes(&[log], &ExtractionConfig::default()).unwrap();
            assert_eq!(ep.len(), 1);
            let est = estimate_patience(&ep[0]);
            assert!(est > alpha - 0.5 && est <= alpha + 8.5, "alpha = {alpha}, estimate {est}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            episodes: 40,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert!(a.politeness_logs.len() >= 35);
        assert_eq!(a.patience_logs.len(), 40);
    }
}
