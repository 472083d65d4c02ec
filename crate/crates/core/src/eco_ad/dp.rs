//! Dynamic-programming oracle over a (t, v) grid.
//!
//! Position is not a state: the distance target enters through a Lagrange
//! multiplier on travelled distance, found by bisection, and the true cost
//! (with the terminal position penalty) of every multiplier tried is kept.

use super::{OcpProblem, SolverMeta, Trajectory};
use crate::error::{Error, Result};

pub fn dp_oracle(problem: &OcpProblem, v_grid: usize, t_grid: usize) -> Result<Trajectory> {
    problem.validate()?;
    if !(3..=200).contains(&v_grid) || !(3..=200).contains(&t_grid) {
        return Err(Error::Input(format!(
            "DP grids must have between 3 and 200 points, got {v_grid} x {t_grid}"
        )));
    }
    let grid = Grid::new(problem, v_grid, t_grid);
    let (v_lo, v_hi) = grid.reachable_speeds();
    if problem.vf < v_lo - grid.dv || problem.vf > v_hi + grid.dv {
        return Err(Error::Infeasible(format!(
            "DP grid too coarse to reach the terminal set: speeds [{v_lo:.2}, {v_hi:.2}] m/s reachable at tf, target {}",
            problem.vf
        )));
    }

    let mut best: Option<Path> = None;
    let consider = |path: Path, best: &mut Option<Path>| {
        if best.as_ref().is_none_or(|b| path.cost < b.cost) {
            *best = Some(path);
        }
    };

    // Bracket the multiplier: a larger reward per metre travels further.
    let unit = problem.weights.terminal_scale() * problem.vehicle.steady_state_force(problem.vf.max(1.0));
    let mut lo = -unit;
    let mut hi = unit;
    let mut p_lo = grid.solve(lo);
    let mut p_hi = grid.solve(hi);
    for _ in 0..30 {
        if p_lo.distance <= problem.distance() {
            break;
        }
        lo *= 4.0;
        p_lo = grid.solve(lo);
    }
    for _ in 0..30 {
        if p_hi.distance >= problem.distance() {
            break;
        }
        hi *= 4.0;
        p_hi = grid.solve(hi);
    }
    let slack = grid.h * grid.dv;
    if p_lo.distance > problem.distance() + slack || p_hi.distance < problem.distance() - slack {
        return Err(Error::Infeasible(format!(
            "DP grid too coarse to reach the terminal set: reachable distances [{:.2}, {:.2}] m miss {:.2} m",
            p_lo.distance,
            p_hi.distance,
            problem.distance()
        )));
    }
    consider(p_lo, &mut best);
    consider(p_hi, &mut best);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let path = grid.solve(mid);
        let short = path.distance < problem.distance();
        consider(path, &mut best);
        if short {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * unit {
            break;
        }
    }
    let best = best.expect("at least one multiplier was evaluated");

    Ok(grid.trajectory(&best))
}

struct Grid {
    prob: OcpProblem,
    speeds: Vec<f64>,
    dv: f64,
    h: f64,
    steps: usize,
    start: usize,
}

struct Path {
    nodes: Vec<usize>,
    distance: f64,
    cost: f64,
}

impl Grid {
    fn new(prob: &OcpProblem, v_grid: usize, t_grid: usize) -> Self {
        let veh = &prob.vehicle;
        let dv = (veh.v_max - veh.v_min) / (v_grid - 1) as f64;
        // Anchor the grid at v0 so the initial state is exact.
        let below = ((prob.v0 - veh.v_min) / dv + 1e-9).floor();
        let first = prob.v0 - below * dv;
        let speeds: Vec<f64> = (0..v_grid)
            .map(|j| first + j as f64 * dv)
            .filter(|v| *v <= veh.v_max + 1e-9)
            .collect();
        Self {
            prob: *prob,
            start: below as usize,
            speeds,
            dv,
            h: prob.horizon() / (t_grid - 1) as f64,
            steps: t_grid - 1,
        }
    }

    /// Net force that takes `vi` to `vj` in one interval under trapezoidal
    /// dynamics with the force held constant.
    fn force(&self, vi: f64, vj: f64) -> f64 {
        let veh = &self.prob.vehicle;
        veh.mass * ((vj - vi) / self.h + veh.rolling_decel())
            + veh.drag_factor() * 0.5 * (vi * vi + vj * vj)
    }

    fn admissible(&self, u: f64) -> bool {
        let veh = &self.prob.vehicle;
        u >= veh.traction_force_min - veh.brake_force_max && u <= veh.traction_force_max
    }

    /// Range of grid speeds reachable at the final time from v0.
    fn reachable_speeds(&self) -> (f64, f64) {
        let nv = self.speeds.len();
        let mut reach = vec![false; nv];
        reach[self.start] = true;
        for _ in 0..self.steps {
            let mut next = vec![false; nv];
            for i in (0..nv).filter(|&i| reach[i]) {
                for j in 0..nv {
                    if self.admissible(self.force(self.speeds[i], self.speeds[j])) {
                        next[j] = true;
                    }
                }
            }
            reach = next;
        }
        let lo = reach.iter().position(|&r| r).unwrap_or(self.start);
        let hi = reach.iter().rposition(|&r| r).unwrap_or(self.start);
        (self.speeds[lo], self.speeds[hi])
    }

    fn stage(&self, vi: f64, vj: f64, u: f64) -> f64 {
        let (_, fb) = self.prob.vehicle.split_force(u);
        0.5 * self.h * (self.prob.running_cost(vi, fb) + self.prob.running_cost(vj, fb))
    }

    fn solve(&self, lambda: f64) -> Path {
        let nv = self.speeds.len();
        let w = &self.prob.weights;
        let scale = w.terminal_scale();
        let mut value: Vec<f64> = self
            .speeds
            .iter()
            .map(|v| scale * w.terminal_speed * (v - self.prob.vf).powi(2))
            .collect();
        let mut policy = vec![vec![usize::MAX; nv]; self.steps];
        for k in (0..self.steps).rev() {
            let mut next = vec![f64::INFINITY; nv];
            for i in 0..nv {
                let vi = self.speeds[i];
                // The holding force is increasing in the target speed, so the
                // admissible targets form a contiguous run.
                let mut relax = |j: usize| -> bool {
                    let vj = self.speeds[j];
                    let u = self.force(vi, vj);
                    if !self.admissible(u) {
                        return false;
                    }
                    if value[j].is_finite() {
                        let c = self.stage(vi, vj, u) - lambda * 0.5 * self.h * (vi + vj) + value[j];
                        if c < next[i] {
                            next[i] = c;
                            policy[k][i] = j;
                        }
                    }
                    true
                };
                let mut j = i;
                while relax(j) && j + 1 < nv {
                    j += 1;
                }
                let mut j = i;
                while j > 0 {
                    j -= 1;
                    if !relax(j) {
                        break;
                    }
                }
            }
            value = next;
        }
        let mut nodes = vec![self.start];
        let mut distance = 0.0;
        let mut running = 0.0;
        for row in &policy {
            let i = nodes[nodes.len() - 1];
            let j = row[i];
            let (vi, vj) = (self.speeds[i], self.speeds[j]);
            distance += 0.5 * self.h * (vi + vj);
            running += self.stage(vi, vj, self.force(vi, vj));
            nodes.push(j);
        }
        let v_end = self.speeds[nodes[nodes.len() - 1]];
        let cost = running + self.prob.terminal_cost(v_end, self.prob.s0 + distance);
        Path { nodes, distance, cost }
    }

    fn trajectory(&self, path: &Path) -> Trajectory {
        let p = &self.prob;
        let veh = p.vehicle;
        let n = path.nodes.len();
        let v: Vec<f64> = path.nodes.iter().map(|&i| self.speeds[i]).collect();
        let mut s = vec![p.s0; n];
        for k in 0..n - 1 {
            s[k + 1] = s[k] + 0.5 * self.h * (v[k] + v[k + 1]);
        }
        // Forces are piecewise constant per interval; node k carries the
        // force of the interval it starts, the last node repeats the last.
        let mut traction = Vec::with_capacity(n);
        let mut brake = Vec::with_capacity(n);
        for k in 0..n {
            let seg = k.min(n - 2);
            let (ft, fb) = veh.split_force(self.force(v[seg], v[seg + 1]));
            traction.push(ft);
            brake.push(fb);
        }
        Trajectory {
            t: (0..n).map(|k| p.t0 + k as f64 * self.h).collect(),
            v,
            s,
            traction,
            brake,
            vehicle: veh,
            meta: SolverMeta {
                method: "dynamic programming".into(),
                cost: path.cost,
                iterations: 0,
                dynamics_residual: 0.0,
                optimality_residual: 0.0,
                terminal_speed_weight: p.weights.terminal_speed,
                terminal_position_weight: p.weights.terminal_position,
            },
        }
    }
}
