use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::{TrajectoryLog, VehicleSeries};
use super::smoothing::{smooth_differentiate, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::lane_change::{PATIENCE_SAMPLE_INTERVAL, SLOW_LEADER_MARGIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Offset before the change instant at which a_c and a_n are read, s.
    pub before_offset: f64,
    /// Offset after the change instant at which ã_c and ã_n are read, s.
    pub after_offset: f64,
    /// Savitzky–Golay window, samples.
    pub window: usize,
    /// Longest front-to-front distance at which another vehicle counts as a neighbour, m.
    pub sensing_range: f64,
    /// Window after a lane change over which the desired speed is the maximum speed, s.
    pub desired_speed_window: f64,
    /// Politeness events with |ã_n − a_n| at or below this are skipped, m/s².
    pub min_follower_effect: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            before_offset: 0.5,
            after_offset: 1.5,
            window: DEFAULT_WINDOW,
            sensing_range: 100.0,
            desired_speed_window: 5.0,
            min_follower_effect: 1e-3,
        }
    }
}

impl ExtractionConfig {
    fn offsets(&self, dt: f64) -> (usize, usize) {
        (
            (self.before_offset / dt).round() as usize,
            (self.after_offset / dt).round() as usize,
        )
    }
}

/// A cut-in seen by a host that keeps its lane: the subject moves into the
/// host's lane ahead of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutInEvent {
    pub subject: usize,
    pub host: usize,
    /// First sample of the subject in its new lane.
    pub index: usize,
    pub t: f64,
    pub a_c: f64,
    pub a_c_tilde: f64,
    pub a_n: f64,
    pub a_n_tilde: f64,
}

/// A lane change preceded by a stretch of following a slower leader.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvertakeEpisode {
    pub subject: usize,
    /// First sample of the following stretch (N_t1).
    pub start: usize,
    /// First sample in the new lane (N_t2).
    pub index: usize,
    pub t: f64,
    /// Maximum speed in the window after the change.
    pub desired_speed: f64,
    /// Speeds over samples `start..=index`.
    pub speeds: Vec<f64>,
    pub dt: f64,
}

fn lane_changes(series: &VehicleSeries) -> impl Iterator<Item = usize> + '_ {
    (1..series.len()).filter(|&k| series.lane[k] != series.lane[k - 1])
}

fn accelerations(log: &TrajectoryLog, window: usize) -> BTreeMap<usize, Vec<f64>> {
    log.vehicles
        .iter()
        .filter_map(|(&id, s)| smooth_differentiate(&s.v, log.dt, window).ok().map(|a| (id, a)))
        .collect()
}

fn cut_ins_in(log: &TrajectoryLog, cfg: &ExtractionConfig) -> Vec<CutInEvent> {
    let (nb, na) = cfg.offsets(log.dt);
    let acc = accelerations(log, cfg.window);
    let mut out = Vec::new();
    for (&subject, sub) in &log.vehicles {
        let Some(sub_a) = acc.get(&subject) else {
            continue;
        };
        for k in lane_changes(sub) {
            if k < nb || k + na >= sub.len() {
                continue;
            }
            let lane = sub.lane[k];
            // The subject holds both lanes steadily around the change.
            if sub.lane[k - nb..k].iter().any(|&l| l != sub.lane[k - 1])
                || sub.lane[k..=k + na].iter().any(|&l| l != lane)
            {
                continue;
            }
            let t = sub.t[k];
            // Nearest vehicle behind in the target lane at the change instant.
            let host = log
                .vehicles
                .iter()
                .filter(|(&id, _)| id != subject)
                .filter_map(|(&id, ser)| ser.index_at(t, log.dt).map(|j| (id, ser, j)))
                .filter(|(_, ser, j)| ser.lane[*j] == lane && ser.s[*j] < sub.s[k])
                .filter(|(_, ser, j)| sub.s[k] - ser.s[*j] <= cfg.sensing_range)
                .max_by(|a, b| a.1.s[a.2].total_cmp(&b.1.s[b.2]));
            let Some((host, ser, j)) = host else {
                continue;
            };
            if j < nb || j + na >= ser.len() || ser.lane[j - nb..=j + na].iter().any(|&l| l != lane) {
                continue;
            }
            let Some(host_a) = acc.get(&host) else {
                continue;
            };
            out.push(CutInEvent {
                subject,
                host,
                index: k,
                t,
                a_c: sub_a[k - nb],
                a_c_tilde: sub_a[k + na],
                a_n: host_a[j - nb],
                a_n_tilde: host_a[j + na],
            });
        }
    }
    out
}

fn overtakes_in(log: &TrajectoryLog, cfg: &ExtractionConfig) -> Vec<OvertakeEpisode> {
    let window = (cfg.desired_speed_window / log.dt).round() as usize;
    let mut out = Vec::new();
    for (&subject, sub) in &log.vehicles {
        for k in lane_changes(sub) {
            let end = (k + window).min(sub.len() - 1);
            let desired_speed = sub.v[k..=end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lane = sub.lane[k - 1];
            let following = |j: usize| {
                let t = sub.t[j];
                log.vehicles
                    .iter()
                    .filter(|(&id, _)| id != subject)
                    .filter_map(|(_, ser)| ser.index_at(t, log.dt).map(|i| (ser, i)))
                    .filter(|(ser, i)| ser.lane[*i] == lane && ser.s[*i] > sub.s[j])
                    .min_by(|a, b| a.0.s[a.1].total_cmp(&b.0.s[b.1]))
                    .is_some_and(|(ser, i)| {
                        ser.s[i] - sub.s[j] <= cfg.sensing_range
                            && ser.v[i] < desired_speed - SLOW_LEADER_MARGIN
                    })
            };
            if !following(k) {
                continue;
            }
            let mut start = k;
            while start > 0 && sub.lane[start - 1] == lane && following(start - 1) {
                start -= 1;
            }
            out.push(OvertakeEpisode {
                subject,
                start,
                index: k,
                t: sub.t[k],
                desired_speed,
                speeds: sub.v[start..=k].to_vec(),
                dt: log.dt,
            });
        }
    }
    out
}

fn check(logs: &[TrajectoryLog], cfg: &ExtractionConfig) -> Result<()> {
    if cfg.window < 3 || cfg.window % 2 == 0 {
        return Err(Error::Config(format!("window must be odd and at least 3, got {}", cfg.window)));
    }
    if !(cfg.before_offset >= 0.0 && cfg.after_offset >= 0.0 && cfg.sensing_range > 0.0) {
        return Err(Error::Config("extraction offsets and range must be nonnegative".into()));
    }
    logs.iter().try_for_each(TrajectoryLog::validate)
}

/// Cut-in events across a batch of logs, sorted by (subject, time, host).
/// Each log is one scene; vehicles of different logs never interact.
pub fn extract_events(logs: &[TrajectoryLog], cfg: &ExtractionConfig) -> Result<Vec<CutInEvent>> {
    use rayon::prelude::*;
    check(logs, cfg)?;
    let mut out: Vec<CutInEvent> = logs.par_iter().flat_map_iter(|l| cut_ins_in(l, cfg)).collect();
    out.sort_by(|a, b| {
        a.subject
            .cmp(&b.subject)
            .then(a.t.total_cmp(&b.t))
            .then(a.host.cmp(&b.host))
            .then(a.a_c.total_cmp(&b.a_c))
            .then(a.a_n_tilde.total_cmp(&b.a_n_tilde))
    });
    Ok(out)
}

/// Lane changes preceded by following a slower leader, sorted by (subject, time).
pub fn extract_overtakes(logs: &[TrajectoryLog], cfg: &ExtractionConfig) -> Result<Vec<OvertakeEpisode>> {
    use rayon::prelude::*;
    check(logs, cfg)?;
    let mut out: Vec<OvertakeEpisode> = logs.par_iter().flat_map_iter(|l| overtakes_in(l, cfg)).collect();
    out.sort_by(|a, b| {
        a.subject
            .cmp(&b.subject)
            .then(a.t.total_cmp(&b.t))
            .then(a.speeds.len().cmp(&b.speeds.len()))
            .then(a.desired_speed.total_cmp(&b.desired_speed))
    });
    Ok(out)
}

/// Politeness at which the observed change is exactly indifferent:
/// p = −(ã_c − a_c) / (ã_n − a_n). `None` when the host was unaffected.
pub fn estimate_politeness(event: &CutInEvent, min_follower_effect: f64) -> Option<f64> {
    let dn = event.a_n_tilde - event.a_n;
    (dn.abs() > min_follower_effect).then(|| -(event.a_c_tilde - event.a_c) / dn)
}

/// Accumulated speed loss over the following stretch, in 10 Hz samples.
pub fn estimate_patience(episode: &OvertakeEpisode) -> f64 {
    let weight = episode.dt / PATIENCE_SAMPLE_INTERVAL;
    let loss: f64 = episode.speeds.iter().map(|v| (episode.desired_speed - v) * weight).sum();
    loss.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.1;

    /// Constant-acceleration kinematics sampled at 10 Hz.
    fn drive(log: &mut TrajectoryLog, id: usize, s0: f64, v0: f64, n: usize, plan: impl Fn(usize) -> (u8, f64)) {
        let (mut s, mut v) = (s0, v0);
        for k in 0..n {
            let (lane, a) = plan(k);
            log.push(id, k as f64 * DT, lane, s, v);
            let v1 = v + a * DT;
            s += 0.5 * (v + v1) * DT;
            v = v1;
        }
    }

    /// Subject cuts from lane 0 into lane 1 at sample `at`, 10 m ahead of a host.
    fn scripted(log: &mut TrajectoryLog, subject: usize, host: usize, at: usize, host_changes: bool) {
        drive(log, subject, 10.0, 14.0, 80, |k| if k < at { (0, 0.0) } else { (1, 0.6) });
        drive(log, host, 0.0, 14.0, 80, |k| {
            let lane = if host_changes && k >= at + 5 { 0 } else { 1 };
            (lane, if k < at { 0.0 } else { -0.3 })
        });
    }

    #[test]
    fn one_scripted_cut_in() {
        let mut log = TrajectoryLog::new(DT);
        scripted(&mut log, 1, 2, 30, false);
        let ev = extract_events(&[log], &ExtractionConfig::default()).unwrap();
        assert_eq!(ev.len(), 1);
        let e = ev[0];
        assert_eq!((e.subject, e.host, e.index), (1, 2, 30));
        assert!(e.a_c.abs() < 1e-9 && (e.a_c_tilde - 0.6).abs() < 1e-9);
        assert!(e.a_n.abs() < 1e-9 && (e.a_n_tilde + 0.3).abs() < 1e-9);
        assert!((estimate_politeness(&e, 1e-3).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn host_changing_lane_excludes_event() {
        let mut log = TrajectoryLog::new(DT);
        scripted(&mut log, 1, 2, 30, true);
        assert!(extract_events(&[log], &ExtractionConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn batch_is_found_and_order_independent() {
        let times = [20, 25, 33, 41, 50];
        let logs: Vec<TrajectoryLog> = times
            .iter()
            .enumerate()
            .map(|(i, &at)| {
                let mut log = TrajectoryLog::new(DT);
                scripted(&mut log, 2 * i, 2 * i + 1, at, false);
                log
            })
            .collect();
        let cfg = ExtractionConfig::default();
        let ev = extract_events(&logs, &cfg).unwrap();
        assert_eq!(ev.len(), times.len());
        for (e, &at) in ev.iter().zip(&times) {
            assert!(e.index.abs_diff(at) <= 1);
        }
        let mut rev = logs.clone();
        rev.reverse();
        assert_eq!(extract_events(&rev, &cfg).unwrap(), ev);
        assert_eq!(extract_events(&logs, &cfg).unwrap(), ev);
    }

    #[test]
    fn politeness_arithmetic() {
        let e = |dc: f64, dn: f64| CutInEvent {
            subject: 0,
            host: 1,
            index: 0,
            t: 0.0,
            a_c: 0.1,
            a_c_tilde: 0.1 + dc,
            a_n: -0.2,
            a_n_tilde: -0.2 + dn,
        };
        assert!((estimate_politeness(&e(0.8, -0.8), 1e-3).unwrap() - 1.0).abs() < 1e-12);
        assert!((estimate_politeness(&e(0.8, -0.4), 1e-3).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(estimate_politeness(&e(0.8, 0.0), 1e-3), None);
    }

    fn episode(speeds: Vec<f64>, desired_speed: f64) -> OvertakeEpisode {
        OvertakeEpisode {
            subject: 0,
            start: 0,
            index: speeds.len() - 1,
            t: 0.0,
            desired_speed,
            speeds,
            dt: DT,
        }
    }

    #[test]
    fn patience_arithmetic() {
        assert!((estimate_patience(&episode(vec![14.0; 125], 18.0)) - 500.0).abs() < 1e-9);
        assert_eq!(estimate_patience(&episode(vec![18.0; 40], 18.0)), 0.0);
    }

    #[test]
    fn overtake_following_stretch() {
        let mut log = TrajectoryLog::new(DT);
        // Leader at 12 m/s, 110 m ahead of a subject at 14 m/s. The subject
        // comes within sensing range at sample 50, changes lane at 60 and
        // accelerates to 14.8 m/s.
        drive(&mut log, 1, 110.0, 12.0, 150, |_| (0, 0.0));
        drive(&mut log, 0, 0.0, 14.0, 150, |k| match k {
            0..60 => (0, 0.0),
            _ if k < 80 => (1, 0.4),
            _ => (1, 0.0),
        });
        let ep = extract_overtakes(&[log], &ExtractionConfig::default()).unwrap();
        assert_eq!(ep.len(), 1);
        assert_eq!(ep[0].index, 60);
        assert!((ep[0].desired_speed - 14.8).abs() < 1e-9);
        assert_eq!(ep[0].start, 50);
        assert_eq!(ep[0].speeds.len(), 11);
    }
}
