//! Energy-optimal speed plans for the three signal cases, checked against
//! a dynamic-programming solution of the same problem.
//!
//! cargo run --release --example eco_plans [out_dir]

use std::path::PathBuf;

use cav_cutin::eco_ad::{default_node_count, dp_oracle, solve_ocp, CaseKind, CaseSpec, CostWeights};
use cav_cutin::model::{SignalSchedule, VehicleParams};

fn main() -> cav_cutin::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-out/eco_plans".into()));
    std::fs::create_dir_all(&out).expect("output directory");
    let signal = SignalSchedule::default();
    let vehicle = VehicleParams::default();

    println!("{:<12} {:>8} {:>8} {:>8} {:>12} {:>8}", "case", "arrive", "v_mean", "v_end", "cost", "vs DP");
    for (name, kind) in [
        ("slow_pass", CaseKind::SlowPass),
        ("fast_pass", CaseKind::fast_pass()),
        ("stop_at_red", CaseKind::StopAtRed),
    ] {
        let spec = CaseSpec {
            kind,
            t0: 0.0,
            s0: 0.0,
            distance: 600.0,
            v0: 10.0,
            terminal_speed: 10.0,
            weights: CostWeights::default(),
        };
        let problem = spec.problem(&signal, &vehicle)?;
        let plan = solve_ocp(&problem, default_node_count(problem.horizon()))?;
        let dp = dp_oracle(&problem, 151, 151)?;
        println!(
            "{name:<12} {:>7.1}s {:>8.2} {:>8.2} {:>12.4e} {:>+7.2}%",
            plan.end_time(),
            plan.mean_speed(),
            plan.final_speed(),
            plan.meta.cost,
            100.0 * (plan.meta.cost / dp.meta.cost - 1.0)
        );
        plan.write_csv(&out.join(format!("{name}.csv")))?;
    }
    Ok(())
}
