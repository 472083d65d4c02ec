//! Overtake probability and CAV fuel economy over sampled drivers, at a
//! slow and a fast cruise speed.
//!
//! cargo run --release --example monte_carlo [runs]

use cav_cutin::cli::{monte_carlo, summarize};
use cav_cutin::config::{HumanSpec, SimConfig};
use cav_cutin::eco_ad::CaseKind;

fn main() -> cav_cutin::Result<()> {
    let runs: usize = std::env::args().nth(1).map_or(500, |s| s.parse().expect("run count"));
    for speed in [14.0, 16.0, 18.0] {
        let mut cfg = SimConfig::case_study(CaseKind::Cruise { speed });
        cfg.humans = vec![HumanSpec::sampled_follower()];
        cfg.seed = 1;
        let s = summarize(&monte_carlo(&cfg, runs, &|_, _| Ok(()))?);
        println!(
            "cruise {speed:>4} m/s: P(overtake) = {:.3} ± {:.3}, fuel economy {:.2} ± {:.2} km/L  (N = {})",
            s.overtake_probability, s.overtake_half_width, s.mean_fuel_economy, s.fuel_economy_half_width, s.runs
        );
    }
    Ok(())
}
