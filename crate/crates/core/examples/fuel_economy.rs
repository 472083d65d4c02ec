//! Fuel economy of the three planned signal cases on an empty road, and the
//! cost of a cut-in in Case 1.
//!
//! cargo run --release --example fuel_economy

use cav_cutin::config::SimConfig;
use cav_cutin::eco_ad::CaseKind;
use cav_cutin::sim::run;

fn main() -> cav_cutin::Result<()> {
    let mut fe = Vec::new();
    for (name, case) in [
        ("1 slow pass", CaseKind::SlowPass),
        ("2 fast pass", CaseKind::fast_pass()),
        ("3 stop at red", CaseKind::StopAtRed),
    ] {
        let mut cfg = SimConfig::case_study(case);
        cfg.humans.clear();
        let m = run(&cfg)?.cav.metrics;
        println!(
            "case {name:<14} {:>6.1} mL over {:>5.0} m in {:>5.1} s: {:>5.2} km/L, idle share {:>4.1}%",
            m.fuel,
            m.distance,
            m.duration,
            m.fuel_economy,
            100.0 * m.idle_fuel_share
        );
        fe.push(m.fuel_economy);
    }
    println!("case 2 over case 3: {:+.1}%", 100.0 * (fe[1] / fe[2] - 1.0));

    let with_human = run(&SimConfig::case_study(CaseKind::SlowPass))?.cav.metrics.fuel_economy;
    println!(
        "case 1 with the cut-in: {with_human:.2} km/L ({:+.1}% against no cut-in)",
        100.0 * (with_human / fe[0] - 1.0)
    );
    Ok(())
}
