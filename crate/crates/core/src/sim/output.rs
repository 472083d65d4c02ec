use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use super::SimResult;
use crate::error::{Error, Result};

impl SimResult {
    /// Per-step state of every vehicle; readable as a calibration log.
    pub fn write_steps_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["t", "vehicle_id", "lane", "s", "v", "a", "mode", "fuel_rate"])?;
        for r in &self.records {
            w.write_record([
                format!("{:.3}", r.t),
                r.vehicle_id.to_string(),
                r.lane.to_string(),
                format!("{:.4}", r.s),
                format!("{:.4}", r.v),
                format!("{:.4}", r.a),
                r.mode.map(|m| m.to_string()).unwrap_or_default(),
                format!("{:.6}", r.fuel_rate),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_events_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["t", "vehicle_id", "event", "detail"])?;
        for e in &self.events {
            w.write_record([
                format!("{:.3}", e.t),
                e.vehicle_id.map(|id| id.to_string()).unwrap_or_default(),
                e.kind.name().to_string(),
                e.kind.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `key = value` lines.
    pub fn summary(&self) -> String {
        let c = &self.cav;
        let mut out = String::new();
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(out, "steps = {}", self.n_steps);
        let _ = writeln!(out, "planned_arrival = {:.3}", c.planned_arrival);
        let _ = writeln!(out, "crossing_time = {}", opt(c.crossing_time));
        let _ = writeln!(out, "crossed_in_initial_green = {}", c.crossed_in_initial_green);
        let _ = writeln!(out, "signal_wait = {:.3}", c.signal_wait);
        let _ = writeln!(out, "cav_fuel = {:.5}", c.metrics.fuel);
        let _ = writeln!(out, "cav_distance = {:.3}", c.metrics.distance);
        let _ = writeln!(out, "cav_duration = {:.3}", c.metrics.duration);
        let _ = writeln!(out, "cav_fuel_economy = {:.4}", c.metrics.fuel_economy);
        let _ = writeln!(out, "cav_idle_fuel_share = {:.4}", c.metrics.idle_fuel_share);
        let _ = writeln!(out, "window_complete = {}", c.window_complete);
        let _ = writeln!(out, "lane_changes = {}", self.lane_change_count());
        let _ = writeln!(out, "cut_ins = {}", self.events_of("cut_in").count());
        let _ = writeln!(out, "overtakes = {}", self.events_of("overtake").count());
        for (info, trip) in self.vehicles.iter().zip(&self.trip).skip(1) {
            let _ = writeln!(out, "vehicle_{}_fuel = {:.5}", info.id, trip.fuel);
        }
        out
    }

    /// Writes steps.csv, events.csv and summary.txt into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_steps_csv(&dir.join("steps.csv"))?;
        self.write_events_csv(&dir.join("events.csv"))?;
        let p = dir.join("summary.txt");
        std::fs::write(&p, self.summary()).map_err(|e| Error::io(&p, e))
    }
}
