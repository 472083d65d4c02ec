//! Fixed-step closed-loop simulation of the A→B corridor.

mod output;
mod world;

use std::fmt;

use serde::Serialize;

use crate::control::ControlMode;
use crate::eco_ad::Trajectory;
use crate::energy::TripMetrics;
use crate::error::Result;
use crate::config::SimConfig;
use crate::lane_change::DriverParams;
use crate::model::Phase;

pub use world::{cut_back_check, plan_for, World};

/// One vehicle's row at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub vehicle_id: usize,
    pub lane: u8,
    pub s: f64,
    pub v: f64,
    /// Acceleration applied over `[t, t + dt)`.
    pub a: f64,
    /// Control mode; only the CAV has one.
    pub mode: Option<ControlMode>,
    pub fuel_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventKind {
    /// The driver's accumulated speed loss exceeded its patience.
    PatienceTrigger { loss: f64 },
    LaneChange { from: u8, to: u8 },
    /// A vehicle entered the CAV's lane ahead of it.
    CutIn { gap: f64 },
    /// The vehicle's front passed the CAV's front.
    Overtake { overtaken: usize },
    ModeSwitch { from: ControlMode, to: ControlMode },
    PhaseChange { phase: Phase },
    /// The vehicle's front crossed the stop line at B.
    Crossing { phase: Phase },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub vehicle_id: Option<usize>,
    pub kind: EventKind,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::PatienceTrigger { .. } => "patience_trigger",
            EventKind::LaneChange { .. } => "lane_change",
            EventKind::CutIn { .. } => "cut_in",
            EventKind::Overtake { .. } => "overtake",
            EventKind::ModeSwitch { .. } => "mode_switch",
            EventKind::PhaseChange { .. } => "phase_change",
            EventKind::Crossing { .. } => "crossing",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::PatienceTrigger { loss } => write!(f, "loss={loss:.3}"),
            EventKind::LaneChange { from, to } => write!(f, "from={from} to={to}"),
            EventKind::CutIn { gap } => write!(f, "gap={gap:.3}"),
            EventKind::Overtake { overtaken } => write!(f, "overtaken={overtaken}"),
            EventKind::ModeSwitch { from, to } => write!(f, "from={from} to={to}"),
            EventKind::PhaseChange { phase } => write!(f, "phase={phase:?}"),
            EventKind::Crossing { phase } => write!(f, "phase={phase:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum VehicleKind {
    Cav,
    Human(DriverParams),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleInfo {
    pub id: usize,
    pub kind: VehicleKind,
    pub length: f64,
}

/// CAV outcome over the fuel window (start until `s_B + departure_length`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavOutcome {
    pub planned_arrival: f64,
    pub crossing_time: Option<f64>,
    pub crossed_in_initial_green: bool,
    /// Time spent in StoppedAtSignal, s.
    pub signal_wait: f64,
    pub metrics: TripMetrics,
    /// False when the run ended before the CAV left the window.
    pub window_complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub dt: f64,
    pub n_steps: usize,
    pub vehicles: Vec<VehicleInfo>,
    /// Row-major: all vehicles of step 0, then step 1, …
    pub records: Vec<StepRecord>,
    pub events: Vec<Event>,
    pub plan: Trajectory,
    pub trip: Vec<TripMetrics>,
    pub cav: CavOutcome,
}

impl SimResult {
    /// Records of one vehicle in time order.
    pub fn vehicle_records(&self, id: usize) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.vehicle_id == id)
    }

    pub fn events_of(&self, name: &str) -> impl Iterator<Item = &Event> + '_ {
        let name = name.to_string();
        self.events.iter().filter(move |e| e.kind.name() == name)
    }

    pub fn lane_change_count(&self) -> usize {
        self.events_of("lane_change").count()
    }

    pub fn overtook(&self) -> bool {
        self.events_of("overtake").next().is_some()
    }
}

/// Plans the CAV trajectory for the config and runs it.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let plan = plan_for(config)?;
    run_with_plan(config, plan)
}

/// Runs with a precomputed plan, so batches can share one solve.
pub fn run_with_plan(config: &SimConfig, plan: Trajectory) -> Result<SimResult> {
    let mut world = World::new(config, plan)?;
    for _ in 0..config.n_steps() {
        world.step()?;
    }
    Ok(world.finish())
}
