//! Case 1 and Case 2 of the signal corridor: a slow eco-driving CAV invites an
//! overtake and cut-in, a fast one does not.
//!
//! cargo run --release --example case_study [out_dir]

use std::path::PathBuf;

use cav_cutin::config::SimConfig;
use cav_cutin::eco_ad::CaseKind;
use cav_cutin::sim::run;

fn main() -> cav_cutin::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-out/case_study".into()));

    for (name, case) in [("case1_slow_pass", CaseKind::SlowPass), ("case2_fast_pass", CaseKind::fast_pass())] {
        let result = run(&SimConfig::case_study(case))?;
        println!("== {name}: planned arrival at B {:.1} s", result.cav.planned_arrival);
        for e in result.events.iter().filter(|e| e.kind.name() != "phase_change") {
            let who = e.vehicle_id.map_or("-".to_string(), |id| id.to_string());
            println!("{:>7.1} s  vehicle {who:<2} {:<17} {}", e.t, e.kind.name(), e.kind);
        }
        let c = &result.cav;
        println!(
            "waited {:.1} s at the signal, fuel economy {:.2} km/L\n",
            c.signal_wait, c.metrics.fuel_economy
        );
        result.write_dir(&out.join(name))?;
    }
    println!("step and event CSVs written under {}", out.display());
    Ok(())
}
