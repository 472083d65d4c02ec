//! Sensitivity of the overtake to the CAV's cruise speed and to the
//! follower's patience.
//!
//! cargo run --release --example cruise_sweep

use cav_cutin::cli::{sweep, SweepAxis};
use cav_cutin::config::SimConfig;
use cav_cutin::eco_ad::CaseKind;

fn main() -> cav_cutin::Result<()> {
    let base = SimConfig::case_study(CaseKind::SlowPass);
    for spec in ["cruise_speed:12:19:15", "patience:0:3000:13"] {
        let axis: SweepAxis = spec.parse().expect("valid axis");
        println!("== {spec}");
        let rows = sweep(&base, &axis)?;
        for r in &rows {
            let crossing = r.crossing_time.map_or("-".into(), |t| format!("{t:.1} s"));
            println!(
                "{:>8.1}  {:<9} crossing {:>7}  {:.2} km/L",
                r.value,
                if r.overtook { "overtake" } else { "-" },
                crossing,
                r.fuel_economy
            );
        }
        if let Some(w) = rows.windows(2).find(|w| w[0].overtook != w[1].overtook) {
            println!("outcome changes between {} and {}\n", w[0].value, w[1].value);
        }
    }
    Ok(())
}
