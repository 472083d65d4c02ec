//! Generate lane-change and overtake episodes from known driver-parameter
//! distributions, then recover those distributions from the logs alone.
//!
//! cargo run --release --example calibration_round_trip [episodes]

use cav_cutin::calibration::synthetic::{generate, SyntheticConfig};
use cav_cutin::calibration::{calibrate, CalibrationOptions};

fn main() -> cav_cutin::Result<()> {
    let episodes: usize = std::env::args().nth(1).map_or(10_000, |s| s.parse().expect("episode count"));
    let cfg = SyntheticConfig {
        episodes,
        ..SyntheticConfig::default()
    };
    println!("generating politeness from {:?}", cfg.politeness);
    println!("generating patience from {:?}\n", cfg.patience);
    let batch = generate(&cfg)?;

    // Cut-in scenes also contain a short slower-leader phase, so each
    // parameter is calibrated from its own episode type.
    let opts = CalibrationOptions::default();
    let cut_ins = calibrate(&batch.politeness_logs, &opts)?;
    println!(
        "{} cut-in events, {} politeness samples",
        cut_ins.cut_in_events,
        cut_ins.politeness_samples.len()
    );
    if let Some(fit) = &cut_ins.politeness_fit {
        println!("politeness fit: {:?}  (KS {:.4})\n", fit.config.family, fit.ks);
    }

    let overtakes = calibrate(&batch.patience_logs, &opts)?;
    println!("{} overtake episodes", overtakes.overtakes);
    for (family, fit) in &overtakes.patience_fits {
        println!(
            "{:<26} log-likelihood {:>11.2}  KS {:.4}  {:?}",
            family.name(),
            fit.log_likelihood,
            fit.ks,
            fit.config.family
        );
    }
    Ok(())
}
