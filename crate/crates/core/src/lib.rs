pub mod calibration;
pub mod car_following;
pub mod cli;
pub mod config;
pub mod control;
pub mod dist;
pub mod eco_ad;
pub mod energy;
pub mod error;
pub mod lane_change;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
