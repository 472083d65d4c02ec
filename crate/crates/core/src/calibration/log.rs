use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::SimResult;

/// Tolerance on the sampling interval, s.
const SAMPLING_TOL: f64 = 1e-6;

/// Time series of one vehicle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VehicleSeries {
    pub t: Vec<f64>,
    pub lane: Vec<u8>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

impl VehicleSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, t: f64, lane: u8, s: f64, v: f64) {
        self.t.push(t);
        self.lane.push(lane);
        self.s.push(s);
        self.v.push(v);
    }

    /// Index of the sample at time `t`, if on the grid.
    pub fn index_at(&self, t: f64, dt: f64) -> Option<usize> {
        let first = *self.t.first()?;
        let k = ((t - first) / dt).round();
        if k < 0.0 {
            return None;
        }
        let k = k as usize;
        (k < self.len() && (self.t[k] - t).abs() <= SAMPLING_TOL).then_some(k)
    }
}

/// Vehicles observed together in one scene, sampled on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub vehicles: BTreeMap<usize, VehicleSeries>,
}

impl TrajectoryLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            vehicles: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, id: usize, t: f64, lane: u8, s: f64, v: f64) {
        self.vehicles.entry(id).or_default().push(t, lane, s, v);
    }

    /// Checks strictly increasing time and a common sampling interval.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Input(format!("sampling interval must be positive, got {}", self.dt)));
        }
        for (id, series) in &self.vehicles {
            for w in series.t.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::Input(format!("vehicle {id}: time is not increasing at t = {}", w[0])));
                }
                if ((w[1] - w[0]) - self.dt).abs() > SAMPLING_TOL {
                    return Err(Error::Input(format!(
                        "vehicle {id}: interval {} at t = {} differs from {}",
                        w[1] - w[0],
                        w[0],
                        self.dt
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_sim(result: &SimResult) -> Self {
        let mut log = Self::new(result.dt);
        for r in &result.records {
            log.push(r.vehicle_id, r.t, r.lane, r.s, r.v);
        }
        log
    }

    /// Reads columns `t, vehicle_id, lane, s, v` by header name; other
    /// columns are ignored. The sampling interval is inferred.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Input(format!("{}: missing column '{name}'", path.display())))
        };
        let cols = [col("t")?, col("vehicle_id")?, col("lane")?, col("s")?, col("v")?];
        let mut log = Self::new(f64::NAN);
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let field = |k: usize| -> Result<&str> {
                row.get(cols[k])
                    .map(str::trim)
                    .ok_or_else(|| Error::Input(format!("{}: short row {}", path.display(), line + 2)))
            };
            let bad = |what: &str| Error::Input(format!("{}: bad {what} on row {}", path.display(), line + 2));
            let t: f64 = field(0)?.parse().map_err(|_| bad("t"))?;
            let id: usize = field(1)?.parse().map_err(|_| bad("vehicle_id"))?;
            let lane: u8 = field(2)?.parse().map_err(|_| bad("lane"))?;
            let s: f64 = field(3)?.parse().map_err(|_| bad("s"))?;
            let v: f64 = field(4)?.parse().map_err(|_| bad("v"))?;
            log.push(id, t, lane, s, v);
        }
        log.dt = log
            .vehicles
            .values()
            .find(|s| s.len() >= 2)
            .map(|s| s.t[1] - s.t[0])
            .ok_or_else(|| Error::Input(format!("{}: no vehicle has two samples", path.display())))?;
        // Rounded output columns carry about 1e-3 s of jitter.
        log.dt = (log.dt * 1e3).round() / 1e3;
        log.validate()?;
        Ok(log)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["t", "vehicle_id", "lane", "s", "v"])?;
        let mut rows: Vec<(f64, usize, u8, f64, f64)> = Vec::new();
        for (&id, ser) in &self.vehicles {
            for k in 0..ser.len() {
                rows.push((ser.t[k], id, ser.lane[k], ser.s[k], ser.v[k]));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, id, lane, s, v) in rows {
            w.write_record([
                format!("{t:.3}"),
                id.to_string(),
                lane.to_string(),
                format!("{s:.6}"),
                format!("{v:.9}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_extra_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        std::fs::write(
            &path,
            "t,vehicle_id,lane,s,v,a,mode\n0.0,1,0,0.0,10.0,0,\n0.0,2,1,5.0,9.0,0,ACC\n0.1,1,0,1.0,10.0,0,\n0.1,2,1,5.9,9.0,0,ACC\n",
        )
        .unwrap();
        let log = TrajectoryLog::read_csv(&path).unwrap();
        assert!((log.dt - 0.1).abs() < 1e-12);
        assert_eq!(log.vehicles.len(), 2);
        assert_eq!(log.vehicles[&2].lane, vec![1, 1]);
        let out = dir.path().join("out.csv");
        log.write_csv(&out).unwrap();
        assert_eq!(TrajectoryLog::read_csv(&out).unwrap(), log);
    }

    #[test]
    fn irregular_sampling_rejected() {
        let mut log = TrajectoryLog::new(0.1);
        for t in [0.0, 0.1, 0.25] {
            log.push(1, t, 0, t, 1.0);
        }
        assert!(log.validate().is_err());
    }

    #[test]
    fn missing_column_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        std::fs::write(&path, "t,vehicle_id,s,v\n0,1,0,1\n").unwrap();
        let err = TrajectoryLog::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("lane"));
    }
}
