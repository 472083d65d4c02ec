use serde::{Deserialize, Serialize};

use crate::dist::{DistributionConfig, Family};
use crate::error::{Error, Result};

/// Fewest samples a fit accepts.
pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    TLocationScale,
    GeneralizedPareto,
    GeneralizedExtremeValue,
    Exponential,
}

impl FitFamily {
    pub fn name(self) -> &'static str {
        match self {
            FitFamily::TLocationScale => "t_location_scale",
            FitFamily::GeneralizedPareto => "generalized_pareto",
            FitFamily::GeneralizedExtremeValue => "generalized_extreme_value",
            FitFamily::Exponential => "exponential",
        }
    }

    pub const ALL: [FitFamily; 4] = [
        FitFamily::TLocationScale,
        FitFamily::GeneralizedPareto,
        FitFamily::GeneralizedExtremeValue,
        FitFamily::Exponential,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Known truncation of the data; the likelihood is renormalised over it.
    pub truncation: Option<(f64, f64)>,
    /// Degrees of freedom tried for the t family.
    pub dof_grid: Vec<f64>,
    pub max_iterations: usize,
    /// Relative spread of simplex values at which the search stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            truncation: None,
            dof_grid: vec![2.0, 3.0, 5.0, 10.0, 30.0],
            max_iterations: 2000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub config: DistributionConfig,
    pub log_likelihood: f64,
    /// Kolmogorov–Smirnov distance between the sample and the fit.
    pub ks: f64,
    pub iterations: usize,
    /// Best log-likelihood after each simplex iteration.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Nelder–Mead with standard coefficients. The best vertex never gets
/// worse, so `trace` is non-increasing.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], max_iter: usize, tol: f64) -> Minimum {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), eval(x0))];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.is_finite() && (worst - best).abs() <= tol * (best.abs() + tol) && size <= 1e-7 {
            converged = true;
            break;
        }
        it += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x_best) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *fx = eval(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    trace.push(simplex[0].1);
    let (x, f) = simplex.swap_remove(0);
    Minimum {
        x,
        f,
        iterations: it,
        converged,
        trace,
    }
}

/// Kolmogorov–Smirnov distance sup |F_n(x) − F(x)|.
pub fn ks_statistic(samples: &[f64], dist: &DistributionConfig) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn log_likelihood(samples: &[f64], dist: &DistributionConfig) -> f64 {
    let shift = match dist.truncation {
        Some(_) => {
            let (_, mass) = dist.truncation_mass();
            if !(mass > 0.0) {
                return f64::NEG_INFINITY;
            }
            samples.len() as f64 * mass.ln()
        }
        None => 0.0,
    };
    let (lo, hi) = dist.support();
    let mut sum = 0.0;
    for &x in samples {
        if x < lo || x > hi {
            return f64::NEG_INFINITY;
        }
        sum += dist.base_ln_pdf(x);
    }
    sum - shift
}

fn moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn median(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// Maximum-likelihood fit of one family. GPD and exponential fits hold the
/// location at 0; the t fit profiles over `dof_grid`.
pub fn fit_distribution(samples: &[f64], family: FitFamily, opts: &FitOptions) -> Result<FitResult> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples given, at least {MIN_SAMPLES} needed",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Fit(format!("non-finite sample {x}")));
    }
    let (mean, var) = moments(samples);
    if !(var > 0.0) {
        return Err(Error::Fit("samples have zero variance".into()));
    }
    let nonnegative = || {
        if samples.iter().any(|&x| x < 0.0) {
            Err(Error::Fit(format!("{family:?} fit needs nonnegative samples")))
        } else {
            Ok(())
        }
    };
    let with_trunc = |family: Family| DistributionConfig {
        family,
        truncation: opts.truncation,
    };
    let run = |make: &dyn Fn(&[f64]) -> Family, x0: &[f64], step: &[f64]| {
        nelder_mead(
            |x| -log_likelihood(samples, &with_trunc(make(x))),
            x0,
            step,
            opts.max_iterations,
            opts.tolerance,
        )
    };
    let (config, min) = match family {
        FitFamily::Exponential => {
            nonnegative()?;
            let make = |x: &[f64]| Family::Exponential {
                rate: x[0].exp(),
                location: 0.0,
            };
            let m = run(&make, &[(1.0 / mean).ln()], &[0.1]);
            (make(&m.x), m)
        }
        FitFamily::GeneralizedPareto => {
            nonnegative()?;
            let r = mean * mean / var;
            let shape0 = (0.5 * (1.0 - r)).clamp(-0.4, 0.8);
            let scale0 = (0.5 * mean * (r + 1.0)).max(1e-6);
            let make = |x: &[f64]| Family::GeneralizedPareto {
                location: 0.0,
                scale: x[0].exp(),
                shape: x[1],
            };
            let m = run(&make, &[scale0.ln(), shape0], &[0.1, 0.05]);
            (make(&m.x), m)
        }
        FitFamily::GeneralizedExtremeValue => {
            let scale0 = 6f64.sqrt() * var.sqrt() / std::f64::consts::PI;
            let loc0 = mean - 0.5772 * scale0;
            let make = |x: &[f64]| Family::GeneralizedExtremeValue {
                location: x[0],
                scale: x[1].exp(),
                shape: x[2],
            };
            let m = run(&make, &[loc0, scale0.ln(), 0.1], &[0.1 * scale0, 0.1, 0.05]);
            (make(&m.x), m)
        }
        FitFamily::TLocationScale => {
            let loc0 = median(samples);
            let mut dev: Vec<f64> = samples.iter().map(|x| (x - loc0).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let scale0 = (dev[dev.len() / 2] * 1.4826).max(1e-6);
            let mut best: Option<(Family, Minimum)> = None;
            for &dof in &opts.dof_grid {
                let make = |x: &[f64]| Family::TLocationScale {
                    location: x[0],
                    scale: x[1].exp(),
                    dof,
                };
                let m = run(&make, &[loc0, scale0.ln()], &[0.1 * scale0, 0.1]);
                if best.as_ref().is_none_or(|(_, b)| m.f < b.f) {
                    best = Some((make(&m.x), m));
                }
            }
            best.ok_or_else(|| Error::Fit("empty degrees-of-freedom grid".into()))?
        }
    };
    let config = with_trunc(config);
    if !min.converged || !min.f.is_finite() {
        return Err(Error::Fit(format!(
            "{family:?} fit did not converge after {} iterations; last iterate {config:?}, log-likelihood {}",
            min.iterations, -min.f
        )));
    }
    config.validate()?;
    Ok(FitResult {
        ks: ks_statistic(samples, &config),
        log_likelihood: -min.f,
        iterations: min.iterations,
        trace: min.trace.iter().map(|f| -f).collect(),
        config,
    })
}
