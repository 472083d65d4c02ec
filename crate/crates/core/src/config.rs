//! Scenario configuration, read from and written to TOML. All units SI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::car_following::CfParams;
use crate::control::{AccParams, Thresholds};
use crate::dist::{DistributionConfig, ParamSource};
use crate::eco_ad::{CaseKind, CostWeights};
use crate::energy::FuelCoeffs;
use crate::error::{Error, Result};
use crate::lane_change::{DriverParams, DriverPopulation};
use crate::model::{SignalSchedule, VehicleParams, ORIGINAL_LANE, PASSING_LANE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Distance from intersection A (s = 0) to the stop line at B, m.
    pub corridor_length: f64,
    /// Stretch past B included in the CAV's fuel-economy window, m.
    #[serde(default = "default_departure_length")]
    pub departure_length: f64,
    #[serde(default)]
    pub signal: SignalSchedule,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub fuel: FuelCoeffs,
    #[serde(default)]
    pub acc: AccParams,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub lane_change: LaneChangeConfig,
    pub cav: CavConfig,
    #[serde(default)]
    pub humans: Vec<HumanSpec>,
}

fn default_departure_length() -> f64 {
    200.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavConfig {
    pub case: CaseKind,
    #[serde(default = "default_cav_speed")]
    pub initial_speed: f64,
    /// Planned speed at B for the passing cases.
    #[serde(default = "default_cav_speed")]
    pub terminal_speed: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default)]
    pub weights: CostWeights,
    /// Proportional correction on top of the plan's feed-forward, 1/s.
    #[serde(default = "default_tracking_gain")]
    pub tracking_gain: f64,
    /// Speed the CAV resumes after the plan ends or after a stop, m/s.
    #[serde(default = "default_departure_speed")]
    pub departure_speed: f64,
    #[serde(default = "default_departure_accel")]
    pub departure_accel: f64,
    /// Braking level at which a committed stop starts, m/s².
    #[serde(default = "default_comfort_decel")]
    pub comfort_decel: f64,
    /// Without a plan the CAV only goes for the green when it predicts to
    /// clear B this long before the red, s.
    #[serde(default = "default_green_margin")]
    pub green_margin: f64,
}

fn default_cav_speed() -> f64 {
    10.0
}
fn default_length() -> f64 {
    4.5
}
fn default_tracking_gain() -> f64 {
    0.5
}
fn default_departure_speed() -> f64 {
    14.0
}
fn default_departure_accel() -> f64 {
    1.5
}
fn default_comfort_decel() -> f64 {
    1.5
}
fn default_green_margin() -> f64 {
    5.0
}

impl CavConfig {
    pub fn new(case: CaseKind) -> Self {
        Self {
            case,
            initial_speed: default_cav_speed(),
            terminal_speed: default_cav_speed(),
            length: default_length(),
            weights: CostWeights::default(),
            tracking_gain: default_tracking_gain(),
            departure_speed: default_departure_speed(),
            departure_accel: default_departure_accel(),
            comfort_decel: default_comfort_decel(),
            green_margin: default_green_margin(),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("cav.length", self.length),
            ("cav.tracking_gain", self.tracking_gain),
            ("cav.departure_speed", self.departure_speed),
            ("cav.departure_accel", self.departure_accel),
            ("cav.comfort_decel", self.comfort_decel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.initial_speed >= 0.0 && self.terminal_speed >= 0.0 && self.green_margin >= 0.0) {
            return Err(Error::Config(
                "cav speeds and green margin must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChangeConfig {
    /// Minimum gap to the new follower before returning to the original lane, m.
    pub safe_return_gap: f64,
    /// Minimum time between two lane changes of the same driver, s.
    pub cooldown: f64,
    /// Distance within which a slower leader counts for patience, m.
    pub sensing_range: f64,
}

impl Default for LaneChangeConfig {
    fn default() -> Self {
        Self {
            safe_return_gap: 15.0,
            cooldown: 3.0,
            sensing_range: 100.0,
        }
    }
}

/// One human agent: where it starts and how its traits are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSpec {
    /// Front position relative to the CAV's front at t = 0, m.
    pub offset: f64,
    #[serde(default)]
    pub lane: u8,
    #[serde(default = "default_cav_speed")]
    pub initial_speed: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    pub politeness: ParamSource,
    pub patience: ParamSource,
    pub desired_speed: ParamSource,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default = "default_b_safe")]
    pub b_safe: f64,
    #[serde(default = "default_keep_right_bias")]
    pub keep_right_bias: f64,
    #[serde(default)]
    pub cf: CfParams,
}

fn default_b_safe() -> f64 {
    4.0
}
fn default_keep_right_bias() -> f64 {
    0.2
}

pub const DEFAULT_DESIRED_SPEED: f64 = 18.5;

/// Politeness: t location-scale (0, 0.4, ν = 3) truncated to [−2, 2].
pub fn default_politeness() -> DistributionConfig {
    DistributionConfig::t_location_scale(0.0, 0.4, 3.0).truncated(-2.0, 2.0)
}

/// Patience: generalized Pareto with scale 200 and shape 0.2.
pub fn default_patience() -> DistributionConfig {
    DistributionConfig::generalized_pareto(0.0, 200.0, 0.2)
}

impl HumanSpec {
    /// The default follower: 20 m behind the CAV, p = 1, α_pa = 500.
    pub fn default_follower() -> Self {
        Self {
            offset: -20.0,
            lane: ORIGINAL_LANE,
            initial_speed: default_cav_speed(),
            length: default_length(),
            politeness: ParamSource::fixed(1.0),
            patience: ParamSource::fixed(500.0),
            desired_speed: ParamSource::fixed(DEFAULT_DESIRED_SPEED),
            threshold: 0.0,
            b_safe: default_b_safe(),
            keep_right_bias: default_keep_right_bias(),
            cf: CfParams::default(),
        }
    }

    /// The default follower with politeness and patience drawn from the
    /// default driver distributions.
    pub fn sampled_follower() -> Self {
        Self {
            politeness: ParamSource::Sampled(default_politeness()),
            patience: ParamSource::Sampled(default_patience()),
            ..Self::default_follower()
        }
    }

    pub fn population(&self) -> DriverPopulation {
        DriverPopulation {
            politeness: self.politeness,
            patience: self.patience,
            desired_speed: self.desired_speed,
        }
    }

    /// Template whose non-sampled fields are copied into every draw.
    pub fn template(&self) -> DriverParams {
        DriverParams {
            politeness: 0.0,
            patience: 0.0,
            desired_speed: self.cf.desired_speed,
            threshold: self.threshold,
            b_safe: self.b_safe,
            keep_right_bias: self.keep_right_bias,
            cf: self.cf,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lane != ORIGINAL_LANE && self.lane != PASSING_LANE {
            return Err(Error::Config(format!("human lane must be 0 or 1, got {}", self.lane)));
        }
        if !(self.length > 0.0 && self.initial_speed >= 0.0 && self.offset.is_finite()) {
            return Err(Error::Config(
                "human length must be positive, initial speed nonnegative, offset finite".into(),
            ));
        }
        if !(self.b_safe > 0.0) {
            return Err(Error::Config("b_safe must be positive".into()));
        }
        self.cf.validate()?;
        self.population().validate()
    }
}

impl SimConfig {
    /// The Case 1 scenario: SlowPass CAV and the default follower.
    pub fn case_study(case: CaseKind) -> Self {
        Self {
            dt: 0.1,
            duration: 120.0,
            seed: 0,
            corridor_length: 600.0,
            departure_length: default_departure_length(),
            signal: SignalSchedule::default(),
            vehicle: VehicleParams::default(),
            fuel: FuelCoeffs::default(),
            acc: AccParams::default(),
            thresholds: Thresholds::default(),
            lane_change: LaneChangeConfig::default(),
            cav: CavConfig::new(case),
            humans: vec![HumanSpec::default_follower()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.corridor_length > 0.0) {
            return Err(Error::Config("corridor_length must be positive".into()));
        }
        if !(self.departure_length >= 0.0) {
            return Err(Error::Config("departure_length must be nonnegative".into()));
        }
        self.signal.validate()?;
        self.vehicle.validate()?;
        self.fuel.validate()?;
        self.acc.validate()?;
        let th = &self.thresholds;
        if !(th.ttc_aeb > 0.0 && th.aeb_release_factor >= 1.0 && th.sensing_range > 0.0) {
            return Err(Error::Config(
                "thresholds: ttc_aeb and sensing_range must be positive, release factor >= 1".into(),
            ));
        }
        let lc = &self.lane_change;
        if !(lc.safe_return_gap >= 0.0 && lc.cooldown >= 0.0 && lc.sensing_range > 0.0) {
            return Err(Error::Config("lane_change settings must be nonnegative".into()));
        }
        self.cav.validate()?;
        for h in &self.humans {
            h.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("TOML: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionConfig;

    #[test]
    fn toml_round_trip() {
        let mut cfg = SimConfig::case_study(CaseKind::SlowPass);
        cfg.humans.push(HumanSpec {
            offset: -60.0,
            politeness: ParamSource::Sampled(DistributionConfig::t_location_scale(0.0, 0.4, 3.0).truncated(-2.0, 2.0)),
            patience: ParamSource::Sampled(DistributionConfig::generalized_pareto(0.0, 200.0, 0.2)),
            ..HumanSpec::default_follower()
        });
        let text = cfg.to_toml().unwrap();
        let back = SimConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"
            dt = 0.1
            duration = 120.0
            seed = 3
            corridor_length = 600.0
            [cav]
            case = { kind = "slow_pass" }
            [[humans]]
            offset = -20.0
            politeness = { fixed = 1.0 }
            patience = { fixed = 500.0 }
            desired_speed = { fixed = 18.5 }
        "#;
        let cfg = SimConfig::from_toml(text).unwrap();
        let mut expected = SimConfig::case_study(CaseKind::SlowPass);
        expected.seed = 3;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = SimConfig::case_study(CaseKind::SlowPass);
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::case_study(CaseKind::SlowPass);
        cfg.humans[0].lane = 2;
        assert!(cfg.validate().is_err());
        assert!(SimConfig::from_toml("dt = 0.1\nbogus = 1").is_err());
    }

    #[test]
    fn step_count() {
        let cfg = SimConfig::case_study(CaseKind::SlowPass);
        assert_eq!(cfg.n_steps(), 1201);
    }
}
