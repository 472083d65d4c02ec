//! The human driver's decision rules on a hand-built scene: the politeness
//! criterion at several politeness values, the patience accumulator, and
//! the check for returning to the original lane.
//!
//! cargo run --example lane_change_rules

use cav_cutin::car_following::{counterfactual_context, CfParams, SceneVehicle};
use cav_cutin::lane_change::{
    incentive_gain, patience_triggered, patience_update, politeness_decision, DriverParams, PatienceState,
};
use cav_cutin::model::{VehicleState, ORIGINAL_LANE, PASSING_LANE};
use cav_cutin::sim::cut_back_check;

fn car(id: usize, lane: u8, s: f64, v: f64, desired: f64) -> SceneVehicle {
    SceneVehicle {
        state: VehicleState { id, lane, s, v, a: 0.0, length: 4.5 },
        cf: CfParams { desired_speed: desired, ..CfParams::default() },
    }
}

fn main() {
    // Driver 1 is stuck behind a 14 m/s vehicle; driver 2 comes up the
    // passing lane 30 m behind.
    let scene = [
        car(0, ORIGINAL_LANE, 30.0, 14.0, 14.0),
        car(1, ORIGINAL_LANE, 0.0, 14.0, 18.5),
        car(2, PASSING_LANE, -30.0, 16.0, 18.0),
    ];
    let ctx = counterfactual_context(&scene, 1, PASSING_LANE).expect("slot is free");
    println!("a_c {:+.3} -> {:+.3}, new follower {:+.3} -> {:+.3}", ctx.a_c, ctx.a_c_tilde, ctx.a_n, ctx.a_n_tilde);
    for p in [-0.5, 0.0, 0.5, 1.0, 2.0] {
        let driver = DriverParams::new(p, 500.0, 18.5);
        println!(
            "p = {p:+.1}: gain {:+.3}, change {}",
            incentive_gain(&ctx, p),
            politeness_decision(&ctx, &driver)
        );
    }

    // 4.5 m/s below the desired speed, every 10 Hz sample adds 4.5 to the loss.
    let mut state = PatienceState::default();
    let mut k = 0;
    while !patience_triggered(&state, 500.0) {
        state = patience_update(state, 18.5, 14.0, true, 0.1, k);
        k += 1;
    }
    println!("\npatience 500 runs out after {k} samples ({:.1} s), loss {:.1}", k as f64 * 0.1, state.accumulated_loss);

    // After overtaking: driver 1 is in the passing lane, ahead of the slow car.
    let driver = DriverParams::new(1.0, 500.0, 18.5);
    for gap in [5.0, 15.0, 30.0] {
        let after = [car(0, ORIGINAL_LANE, 0.0, 14.0, 14.0), car(1, PASSING_LANE, 4.5 + gap, 18.0, 18.5)];
        println!("return with {gap:>4} m to the slow car: {}", cut_back_check(&after, 1, &driver, 15.0));
    }
}
