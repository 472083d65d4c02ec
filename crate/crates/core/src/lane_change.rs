//! Human lane-change decisions: the acceleration-based politeness criterion,
//! the patience accumulator that gates overtaking, and sampling of
//! per-driver parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::car_following::CfParams;
use crate::dist::ParamSource;
use crate::error::{Error, Result};

/// Sampling interval the patience factor is expressed in, seconds.
pub const PATIENCE_SAMPLE_INTERVAL: f64 = 0.1;

/// Slack below the desired speed under which a leader counts as slow, m/s.
pub const SLOW_LEADER_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    /// Politeness factor p.
    pub politeness: f64,
    /// Patience factor α_pa, in accumulated (m/s)·samples at 10 Hz.
    pub patience: f64,
    /// Desired speed V_des, m/s.
    pub desired_speed: f64,
    /// Lane-change threshold Δa_th, m/s².
    #[serde(default)]
    pub threshold: f64,
    /// Largest deceleration a lane change may impose on the new follower, m/s².
    #[serde(default = "default_b_safe")]
    pub b_safe: f64,
    /// Extra incentive for returning to the original lane, m/s².
    #[serde(default = "default_keep_right_bias")]
    pub keep_right_bias: f64,
    pub cf: CfParams,
}

fn default_b_safe() -> f64 {
    4.0
}

fn default_keep_right_bias() -> f64 {
    0.2
}

impl DriverParams {
    /// Driver with the given politeness, patience and desired speed and
    /// conventional car-following parameters (v0 = V_des).
    pub fn new(politeness: f64, patience: f64, desired_speed: f64) -> Self {
        Self {
            politeness,
            patience,
            desired_speed,
            threshold: 0.0,
            b_safe: default_b_safe(),
            keep_right_bias: default_keep_right_bias(),
            cf: CfParams {
                desired_speed,
                ..CfParams::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.desired_speed > 0.0 && self.desired_speed.is_finite()) {
            return Err(Error::Config(format!(
                "desired speed must be positive, got {}",
                self.desired_speed
            )));
        }
        if !(self.b_safe > 0.0) {
            return Err(Error::Config(format!("b_safe must be positive, got {}", self.b_safe)));
        }
        if !(self.patience >= 0.0) {
            return Err(Error::Config(format!(
                "patience factor must be nonnegative, got {}",
                self.patience
            )));
        }
        if !self.politeness.is_finite() || !self.threshold.is_finite() {
            return Err(Error::Config("politeness and threshold must be finite".into()));
        }
        self.cf.validate()
    }
}

/// Accelerations of the three affected vehicles before (`a_*`) and after
/// (`a_*_tilde`) a hypothetical lane change. c = subject, n = new follower,
/// o = old follower.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneChangeContext {
    pub a_c: f64,
    pub a_c_tilde: f64,
    pub a_n: f64,
    pub a_n_tilde: f64,
    pub a_o: f64,
    pub a_o_tilde: f64,
}

impl LaneChangeContext {
    pub fn is_finite(&self) -> bool {
        [
            self.a_c,
            self.a_c_tilde,
            self.a_n,
            self.a_n_tilde,
            self.a_o,
            self.a_o_tilde,
        ]
        .iter()
        .all(|x| x.is_finite())
    }

    pub fn driver_gain(&self) -> f64 {
        self.a_c_tilde - self.a_c
    }

    pub fn new_follower_change(&self) -> f64 {
        self.a_n_tilde - self.a_n
    }

    pub fn old_follower_change(&self) -> f64 {
        self.a_o_tilde - self.a_o
    }
}

/// (ã_c − a_c) + p·(ã_n − a_n). The old follower is assumed unaffected.
pub fn incentive_gain(ctx: &LaneChangeContext, politeness: f64) -> f64 {
    ctx.driver_gain() + politeness * ctx.new_follower_change()
}

/// (ã_c − a_c) + p·[(ã_n − a_n) + (ã_o − a_o)].
pub fn full_incentive_gain(ctx: &LaneChangeContext, politeness: f64) -> f64 {
    ctx.driver_gain() + politeness * (ctx.new_follower_change() + ctx.old_follower_change())
}

/// Accept the change when the gain strictly exceeds the threshold and the
/// new follower is not forced to brake harder than `b_safe`.
pub fn politeness_decision(ctx: &LaneChangeContext, params: &DriverParams) -> bool {
    incentive_gain(ctx, params.politeness) > params.threshold && ctx.a_n_tilde >= -params.b_safe
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PatienceState {
    /// Running sum of speed deficits, (m/s)·samples.
    pub accumulated_loss: f64,
    /// Whether a slower leader is currently being followed.
    pub active: bool,
    /// Step index at which the current following episode began (N_t1).
    pub start_index: usize,
}

impl PatienceState {
    pub fn reset(&mut self) {
        *self = PatienceState::default();
    }
}

/// One accumulator update. `dt` is the simulation step; deficits are scaled
/// by `dt / 0.1 s` so the patience factor keeps its 10 Hz meaning.
pub fn patience_update(
    state: PatienceState,
    desired_speed: f64,
    speed: f64,
    following_slower_leader: bool,
    dt: f64,
    step_index: usize,
) -> PatienceState {
    if !following_slower_leader {
        return PatienceState::default();
    }
    let start_index = if state.active {
        state.start_index
    } else {
        step_index
    };
    let weight = dt / PATIENCE_SAMPLE_INTERVAL;
    PatienceState {
        accumulated_loss: (state.accumulated_loss + (desired_speed - speed) * weight).max(0.0),
        active: true,
        start_index,
    }
}

pub fn patience_triggered(state: &PatienceState, patience: f64) -> bool {
    state.accumulated_loss > patience
}

/// Whether a leader at `leader_speed` and bumper gap `gap` counts as a slow
/// vehicle the driver is stuck behind.
pub fn is_slower_leader(leader_speed: f64, gap: f64, desired_speed: f64, sensing_range: f64) -> bool {
    gap <= sensing_range && leader_speed < desired_speed - SLOW_LEADER_MARGIN
}

/// Distributions (or fixed values) for the three heterogeneous driver traits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverPopulation {
    pub politeness: ParamSource,
    pub patience: ParamSource,
    pub desired_speed: ParamSource,
}

impl DriverPopulation {
    pub fn validate(&self) -> Result<()> {
        self.politeness.validate()?;
        self.patience.validate()?;
        self.desired_speed.validate()
    }
}

/// Draws (p, α_pa, V_des) in that order. Patience is floored at zero.
pub fn sample_driver_params<R: Rng + ?Sized>(
    rng: &mut R,
    population: &DriverPopulation,
    template: &DriverParams,
) -> Result<DriverParams> {
    population.validate()?;
    let politeness = population.politeness.draw(rng);
    let patience = population.patience.draw(rng).max(0.0);
    let desired_speed = population.desired_speed.draw(rng);
    let params = DriverParams {
        politeness,
        patience,
        desired_speed,
        cf: CfParams {
            desired_speed,
            ..template.cf
        },
        ..*template
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(dc: f64, dn: f64) -> LaneChangeContext {
        LaneChangeContext {
            a_c: 0.2,
            a_c_tilde: 0.2 + dc,
            a_n: -0.1,
            a_n_tilde: -0.1 + dn,
            a_o: 0.0,
            a_o_tilde: 0.0,
        }
    }

    #[test]
    fn incentive_examples() {
        let c = ctx(1.0, -0.5);
        assert!((incentive_gain(&c, 1.0) - 0.5).abs() < 1e-12);
        assert!((incentive_gain(&c, 0.0) - 1.0).abs() < 1e-12);
        assert!(incentive_gain(&c, 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_form_examples() {
        let c = ctx(1.0, -0.5);
        assert_eq!(full_incentive_gain(&c, 0.7), incentive_gain(&c, 0.7));
        let mut c2 = c;
        c2.a_o_tilde = -0.5;
        assert!(full_incentive_gain(&c2, 1.0).abs() < 1e-12);
        assert_eq!(full_incentive_gain(&LaneChangeContext::default(), 3.0), 0.0);
    }

    fn driver(threshold: f64, b_safe: f64) -> DriverParams {
        DriverParams {
            threshold,
            b_safe,
            ..DriverParams::new(1.0, 500.0, 18.0)
        }
    }

    #[test]
    fn decision_examples() {
        // gain 0.5 with ã_n = −1
        let c = LaneChangeContext {
            a_c: 0.0,
            a_c_tilde: 1.5,
            a_n: 0.0,
            a_n_tilde: -1.0,
            ..Default::default()
        };
        assert!(politeness_decision(&c, &driver(0.0, 4.0)));
        let vetoed = LaneChangeContext {
            a_c_tilde: 5.5,
            a_n_tilde: -5.0,
            ..c
        };
        assert!((incentive_gain(&vetoed, 1.0) - 0.5).abs() < 1e-12);
        assert!(!politeness_decision(&vetoed, &driver(0.0, 4.0)));
        let zero = LaneChangeContext {
            a_c_tilde: 1.0,
            ..c
        };
        assert_eq!(incentive_gain(&zero, 1.0), 0.0);
        assert!(!politeness_decision(&zero, &driver(0.0, 4.0)));
    }

    #[test]
    fn patience_examples() {
        let mut s = PatienceState::default();
        s = patience_update(s, 18.0, 14.0, true, 0.1, 0);
        assert_eq!(s.accumulated_loss, 4.0);
        for k in 1..125 {
            s = patience_update(s, 18.0, 14.0, true, 0.1, k);
        }
        assert!((s.accumulated_loss - 500.0).abs() < 1e-9);
        assert_eq!(s.start_index, 0);

        let s = PatienceState {
            accumulated_loss: 10.0,
            active: true,
            start_index: 3,
        };
        let s = patience_update(s, 14.0, 18.0, true, 0.1, 4);
        assert!((s.accumulated_loss - 6.0).abs() < 1e-12);
        let s = patience_update(s, 14.0, 30.0, true, 0.1, 5);
        assert_eq!(s.accumulated_loss, 0.0);

        let s = PatienceState {
            accumulated_loss: 300.0,
            active: true,
            start_index: 0,
        };
        let s = patience_update(s, 18.0, 14.0, false, 0.1, 9);
        assert_eq!(s, PatienceState::default());
    }

    #[test]
    fn trigger_is_strict() {
        let st = |x| PatienceState {
            accumulated_loss: x,
            active: true,
            start_index: 0,
        };
        assert!(patience_triggered(&st(500.5), 500.0));
        assert!(!patience_triggered(&st(500.0), 500.0));
        assert!(!patience_triggered(&st(0.0), 0.0));
        assert!(!patience_triggered(&st(1e9), f64::INFINITY));
    }

    #[test]
    fn constant_deficit_trigger_count() {
        let count = |alpha: f64, delta: f64| {
            let mut s = PatienceState::default();
            let mut n = 0usize;
            while !patience_triggered(&s, alpha) {
                s = patience_update(s, 20.0, 20.0 - delta, true, 0.1, n);
                n += 1;
            }
            n
        };
        // α/Δ integral: the strict trigger needs ceil(α/Δ) + 1 samples.
        assert_eq!(count(500.0, 4.0), 126);
        assert_eq!(count(0.0, 1.0), 1);
        assert_eq!(count(99.5, 0.5), 200);
        // otherwise the first sample past α/Δ
        assert_eq!(count(10.0, 3.0), 4);
    }

    #[test]
    fn sampled_drivers_are_reproducible() {
        let pop = DriverPopulation {
            politeness: ParamSource::Sampled(
                DistributionConfig::t_location_scale(0.0, 0.4, 3.0).truncated(-2.0, 2.0),
            ),
            patience: ParamSource::Sampled(DistributionConfig::generalized_pareto(0.0, 200.0, 0.2)),
            desired_speed: ParamSource::Sampled(
                DistributionConfig::t_location_scale(18.5, 1.0, 30.0).truncated(14.0, 24.0),
            ),
        };
        let template = DriverParams::new(0.0, 0.0, 18.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_driver_params(&mut rng, &pop, &template).unwrap()
        };
        assert_eq!(draw(42), draw(42));
        let d = draw(7);
        assert!((-2.0..=2.0).contains(&d.politeness));
        assert!(d.patience >= 0.0);
        assert!((14.0..=24.0).contains(&d.desired_speed));
        assert_eq!(d.cf.desired_speed, d.desired_speed);
    }

    #[test]
    fn empty_support_rejected() {
        let pop = DriverPopulation {
            politeness: ParamSource::Sampled(
                DistributionConfig::generalized_pareto(0.0, 1.0, 0.1).truncated(-3.0, -1.0),
            ),
            patience: ParamSource::fixed(1.0),
            desired_speed: ParamSource::fixed(18.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_driver_params(&mut rng, &pop, &DriverParams::new(0.0, 0.0, 18.0)).is_err());
    }
}
