//! Distribution families used for driver heterogeneity: t location-scale
//! (politeness), generalized Pareto / generalized extreme value /
//! exponential (patience). Each supports density, CDF, quantile and
//! inverse-CDF sampling with optional truncation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    TLocationScale {
        location: f64,
        scale: f64,
        dof: f64,
    },
    GeneralizedPareto {
        #[serde(default)]
        location: f64,
        scale: f64,
        shape: f64,
    },
    GeneralizedExtremeValue {
        location: f64,
        scale: f64,
        shape: f64,
    },
    Exponential {
        rate: f64,
        #[serde(default)]
        location: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::TLocationScale { .. } => "t_location_scale",
            Family::GeneralizedPareto { .. } => "generalized_pareto",
            Family::GeneralizedExtremeValue { .. } => "generalized_extreme_value",
            Family::Exponential { .. } => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<(f64, f64)>,
}

impl From<Family> for DistributionConfig {
    fn from(family: Family) -> Self {
        Self {
            family,
            truncation: None,
        }
    }
}

// Quantile tails used to bound numeric work on heavy-tailed families.
const TAIL_EPS: f64 = 1e-12;

impl DistributionConfig {
    pub fn t_location_scale(location: f64, scale: f64, dof: f64) -> Self {
        Family::TLocationScale {
            location,
            scale,
            dof,
        }
        .into()
    }

    pub fn generalized_pareto(location: f64, scale: f64, shape: f64) -> Self {
        Family::GeneralizedPareto {
            location,
            scale,
            shape,
        }
        .into()
    }

    pub fn generalized_extreme_value(location: f64, scale: f64, shape: f64) -> Self {
        Family::GeneralizedExtremeValue {
            location,
            scale,
            shape,
        }
        .into()
    }

    pub fn exponential(rate: f64) -> Self {
        Family::Exponential {
            rate,
            location: 0.0,
        }
        .into()
    }

    pub fn truncated(mut self, lo: f64, hi: f64) -> Self {
        self.truncation = Some((lo, hi));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::Distribution(format!("{name} must be finite, got {x}")))
            }
        };
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Distribution(format!("{name} must be positive, got {x}")))
            }
        };
        match self.family {
            Family::TLocationScale {
                location,
                scale,
                dof,
            } => {
                finite("location", location)?;
                positive("scale", scale)?;
                positive("dof", dof)?;
            }
            Family::GeneralizedPareto {
                location,
                scale,
                shape,
            }
            | Family::GeneralizedExtremeValue {
                location,
                scale,
                shape,
            } => {
                finite("location", location)?;
                positive("scale", scale)?;
                finite("shape", shape)?;
            }
            Family::Exponential { rate, location } => {
                positive("rate", rate)?;
                finite("location", location)?;
            }
        }
        if let Some((lo, hi)) = self.truncation {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Distribution(format!(
                    "truncation interval [{lo}, {hi}] is empty"
                )));
            }
            let mass = self.base_cdf(hi) - self.base_cdf(lo);
            if !(mass > 0.0) && lo != hi {
                return Err(Error::Distribution(format!(
                    "truncation interval [{lo}, {hi}] carries no probability mass"
                )));
            }
            let (slo, shi) = self.base_support();
            if hi < slo || lo > shi {
                return Err(Error::Distribution(format!(
                    "truncation interval [{lo}, {hi}] misses the support [{slo}, {shi}]"
                )));
            }
        }
        Ok(())
    }

    /// Support of the untruncated family.
    pub fn base_support(&self) -> (f64, f64) {
        match self.family {
            Family::TLocationScale { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::GeneralizedPareto {
                location,
                scale,
                shape,
            } => {
                if shape < 0.0 {
                    (location, location - scale / shape)
                } else {
                    (location, f64::INFINITY)
                }
            }
            Family::GeneralizedExtremeValue {
                location,
                scale,
                shape,
            } => {
                if shape > 0.0 {
                    (location - scale / shape, f64::INFINITY)
                } else if shape < 0.0 {
                    (f64::NEG_INFINITY, location - scale / shape)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
            Family::Exponential { location, .. } => (location, f64::INFINITY),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.base_support();
        match self.truncation {
            Some((a, b)) => (lo.max(a), hi.min(b)),
            None => (lo, hi),
        }
    }

    pub fn base_ln_pdf(&self, x: f64) -> f64 {
        match self.family {
            Family::TLocationScale {
                location,
                scale,
                dof,
            } => {
                let z = (x - location) / scale;
                ln_gamma(0.5 * (dof + 1.0))
                    - ln_gamma(0.5 * dof)
                    - 0.5 * (dof * std::f64::consts::PI).ln()
                    - scale.ln()
                    - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
            }
            Family::GeneralizedPareto {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                if z < 0.0 {
                    return f64::NEG_INFINITY;
                }
                if shape.abs() < 1e-12 {
                    -scale.ln() - z
                } else {
                    let arg = 1.0 + shape * z;
                    if arg <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    -scale.ln() - (1.0 / shape + 1.0) * arg.ln()
                }
            }
            Family::GeneralizedExtremeValue {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                let ln_t = if shape.abs() < 1e-12 {
                    -z
                } else {
                    let arg = 1.0 + shape * z;
                    if arg <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    -arg.ln() / shape
                };
                -scale.ln() + (shape + 1.0) * ln_t - ln_t.exp()
            }
            Family::Exponential { rate, location } => {
                if x < location {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * (x - location)
                }
            }
        }
    }

    pub fn base_cdf(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match self.family {
            Family::TLocationScale {
                location,
                scale,
                dof,
            } => StudentsT::new(location, scale, dof)
                .map(|t| t.cdf(x))
                .unwrap_or(f64::NAN),
            Family::GeneralizedPareto {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                if z <= 0.0 {
                    0.0
                } else if shape.abs() < 1e-12 {
                    -(-z).exp_m1()
                } else {
                    let arg = 1.0 + shape * z;
                    if arg <= 0.0 {
                        1.0
                    } else {
                        -(-(arg.ln()) / shape).exp_m1()
                    }
                }
            }
            Family::GeneralizedExtremeValue {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                if shape.abs() < 1e-12 {
                    (-(-z).exp()).exp()
                } else {
                    let arg = 1.0 + shape * z;
                    if arg <= 0.0 {
                        if shape > 0.0 {
                            0.0
                        } else {
                            1.0
                        }
                    } else {
                        (-(-(arg.ln()) / shape).exp()).exp()
                    }
                }
            }
            Family::Exponential { rate, location } => {
                if x <= location {
                    0.0
                } else {
                    -(-rate * (x - location)).exp_m1()
                }
            }
        }
    }

    pub fn base_quantile(&self, u: f64) -> f64 {
        match self.family {
            Family::TLocationScale {
                location,
                scale,
                dof,
            } => StudentsT::new(location, scale, dof)
                .map(|t| t.inverse_cdf(u))
                .unwrap_or(f64::NAN),
            Family::GeneralizedPareto {
                location,
                scale,
                shape,
            } => {
                if shape.abs() < 1e-12 {
                    location - scale * (-u).ln_1p()
                } else {
                    location + scale * ((-shape * (-u).ln_1p()).exp_m1()) / shape
                }
            }
            Family::GeneralizedExtremeValue {
                location,
                scale,
                shape,
            } => {
                let y = -u.ln();
                if shape.abs() < 1e-12 {
                    location - scale * y.ln()
                } else {
                    location + scale * ((-shape * y.ln()).exp_m1()) / shape
                }
            }
            Family::Exponential { rate, location } => location - (-u).ln_1p() / rate,
        }
    }

    /// (F(lo), F(hi) - F(lo)) of the untruncated CDF over the truncation interval.
    pub fn truncation_mass(&self) -> (f64, f64) {
        match self.truncation {
            Some((a, b)) => {
                let fa = self.base_cdf(a);
                let fb = self.base_cdf(b);
                (fa, fb - fa)
            }
            None => (0.0, 1.0),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if let Some((a, b)) = self.truncation {
            if x < a || x > b {
                return f64::NEG_INFINITY;
            }
            let (_, mass) = self.truncation_mass();
            return self.base_ln_pdf(x) - mass.ln();
        }
        self.base_ln_pdf(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.truncation {
            Some((a, b)) => {
                if x <= a {
                    0.0
                } else if x >= b {
                    1.0
                } else {
                    let (fa, mass) = self.truncation_mass();
                    ((self.base_cdf(x) - fa) / mass).clamp(0.0, 1.0)
                }
            }
            None => self.base_cdf(x),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self.truncation {
            Some((a, b)) => {
                if a == b {
                    return a;
                }
                let (fa, mass) = self.truncation_mass();
                self.base_quantile(fa + u * mass).clamp(a, b)
            }
            None => self.base_quantile(u),
        }
    }

    /// Inverse-CDF draw; consumes exactly one uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>().clamp(TAIL_EPS, 1.0 - TAIL_EPS);
        self.quantile(u)
    }

    /// Mean of the (possibly truncated) distribution; `None` when it does
    /// not exist.
    pub fn mean(&self) -> Option<f64> {
        if self.truncation.is_some() {
            // Numeric: E[X] = ∫ x f(x) dx over the truncated support, by
            // quantile-space midpoint integration.
            let n = 200_000;
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.quantile((i as f64 + 0.5) / n as f64);
            }
            return Some(acc / n as f64);
        }
        match self.family {
            Family::TLocationScale { location, dof, .. } => (dof > 1.0).then_some(location),
            Family::GeneralizedPareto {
                location,
                scale,
                shape,
            } => (shape < 1.0).then(|| location + scale / (1.0 - shape)),
            Family::GeneralizedExtremeValue {
                location,
                scale,
                shape,
            } => {
                if shape >= 1.0 {
                    None
                } else if shape.abs() < 1e-12 {
                    Some(location + scale * 0.577_215_664_901_532_9)
                } else {
                    Some(location + scale * (ln_gamma(1.0 - shape).exp() - 1.0) / shape)
                }
            }
            Family::Exponential { rate, location } => Some(location + 1.0 / rate),
        }
    }

    /// Variance of the untruncated family, when finite.
    pub fn variance(&self) -> Option<f64> {
        match self.family {
            Family::TLocationScale { scale, dof, .. } => {
                (dof > 2.0).then(|| scale * scale * dof / (dof - 2.0))
            }
            Family::GeneralizedPareto { scale, shape, .. } => (shape < 0.5)
                .then(|| scale * scale / ((1.0 - shape).powi(2) * (1.0 - 2.0 * shape))),
            Family::GeneralizedExtremeValue { .. } => None,
            Family::Exponential { rate, .. } => Some(1.0 / (rate * rate)),
        }
    }
}

/// A per-agent parameter: either a fixed value or a draw from a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSource {
    Fixed { fixed: f64 },
    Sampled(DistributionConfig),
}

impl ParamSource {
    pub fn fixed(value: f64) -> Self {
        ParamSource::Fixed { fixed: value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ParamSource::Fixed { fixed } if fixed.is_finite() || *fixed == f64::INFINITY => Ok(()),
            ParamSource::Fixed { fixed } => Err(Error::Distribution(format!(
                "fixed parameter value {fixed} is not usable"
            ))),
            ParamSource::Sampled(d) => d.validate(),
        }
    }

    /// Draws a value. Fixed sources still consume one uniform so that the
    /// random stream stays aligned when a config switches between the two.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParamSource::Fixed { fixed } => {
                let _: f64 = rng.random();
                *fixed
            }
            ParamSource::Sampled(d) => d.sample(rng),
        }
    }
}
