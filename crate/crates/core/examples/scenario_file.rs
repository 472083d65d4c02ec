//! Build a scenario in code, save it as TOML, load it back and run it.
//! Two humans: the default follower and a sampled driver in the passing lane.
//!
//! cargo run --release --example scenario_file [path.toml]

use std::path::PathBuf;

use cav_cutin::config::{HumanSpec, SimConfig};
use cav_cutin::eco_ad::CaseKind;
use cav_cutin::model::PASSING_LANE;
use cav_cutin::sim::run;

fn main() -> cav_cutin::Result<()> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-out/scenario.toml".into()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).expect("output directory");
    }

    let mut cfg = SimConfig::case_study(CaseKind::SlowPass);
    cfg.seed = 42;
    cfg.humans.push(HumanSpec {
        offset: -80.0,
        lane: PASSING_LANE,
        initial_speed: 14.0,
        ..HumanSpec::sampled_follower()
    });
    cfg.save(&path)?;
    println!("wrote {}:\n{}", path.display(), std::fs::read_to_string(&path).expect("just written"));

    let loaded = SimConfig::load(&path)?;
    assert_eq!(loaded, cfg);
    let result = run(&loaded)?;
    for v in &result.vehicles[1..] {
        if let cav_cutin::sim::VehicleKind::Human(p) = &v.kind {
            println!(
                "human {}: p = {:.3}, patience = {:.1}, V_des = {:.1}",
                v.id, p.politeness, p.patience, p.desired_speed
            );
        }
    }
    print!("{}", result.summary());
    Ok(())
}
