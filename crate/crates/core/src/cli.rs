//! The `cutin` command line. Each subcommand is also callable as a function
//! returning its exit code: 0 success, 1 usage or input error, 2 runtime abort.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::calibration::{calibrate, CalibrationOptions, TrajectoryLog};
use crate::config::{HumanSpec, SimConfig};
use crate::dist::ParamSource;
use crate::eco_ad::{dp_oracle, CaseKind, CaseSpec, Trajectory};
use crate::error::{Error, Result};
use crate::sim::{plan_for, run_with_plan, SimResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cutin", version, about = "Eco-driving CAV and human cut-in simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario.
    Run(RunArgs),
    /// Repeat a scenario over one swept parameter.
    Sweep(SweepArgs),
    /// Seeded batch with sampled driver parameters.
    Montecarlo(MonteCarloArgs),
    /// Fit driver-parameter distributions to trajectory logs.
    Calibrate(CalibrateArgs),
    /// Export the planned CAV trajectories of the three signal cases.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML; the Case 1 study when omitted (with sampled driver
    /// traits for `montecarlo`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// `param:lo:hi:steps`; param is one of cruise_speed, fast_speed,
    /// politeness, patience, desired_speed, initial_speed.
    #[arg(long)]
    pub sweep: SweepAxis,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub runs: usize,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write each run's trajectories under `logs/` for `calibrate`.
    #[arg(long)]
    pub logs: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Directory of trajectory CSVs (columns t, vehicle_id, lane, s, v).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Cross-check each plan against the dynamic-programming oracle.
    #[arg(long)]
    pub dp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    CruiseSpeed,
    FastSpeed,
    Politeness,
    Patience,
    DesiredSpeed,
    InitialSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [name, lo, hi, steps] = parts[..] else {
            return Err(format!("expected param:lo:hi:steps, got '{s}'"));
        };
        let param = match name {
            "cruise_speed" => SweepParam::CruiseSpeed,
            "fast_speed" => SweepParam::FastSpeed,
            "politeness" => SweepParam::Politeness,
            "patience" => SweepParam::Patience,
            "desired_speed" => SweepParam::DesiredSpeed,
            "initial_speed" => SweepParam::InitialSpeed,
            other => return Err(format!("unknown sweep parameter '{other}'")),
        };
        let num = |x: &str| x.parse::<f64>().map_err(|_| format!("bad number '{x}'"));
        let (lo, hi) = (num(lo)?, num(hi)?);
        let steps: usize = steps.parse().map_err(|_| format!("bad step count '{steps}'"))?;
        if steps == 0 || !(lo <= hi) || (steps == 1 && lo != hi) {
            return Err(format!("empty sweep range {lo}..{hi} in {steps} steps"));
        }
        Ok(Self { param, lo, hi, steps })
    }
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.lo + h * k as f64).collect()
    }

    /// Applies one value. Driver parameters are fixed for every human.
    pub fn apply(&self, cfg: &mut SimConfig, value: f64) {
        let set_humans = |cfg: &mut SimConfig, f: fn(&mut HumanSpec, ParamSource)| {
            for h in &mut cfg.humans {
                f(h, ParamSource::fixed(value));
            }
        };
        match self.param {
            SweepParam::CruiseSpeed => cfg.cav.case = CaseKind::Cruise { speed: value },
            SweepParam::FastSpeed => cfg.cav.case = CaseKind::FastPass { speed: value },
            SweepParam::InitialSpeed => cfg.cav.initial_speed = value,
            SweepParam::Politeness => set_humans(cfg, |h, p| h.politeness = p),
            SweepParam::Patience => set_humans(cfg, |h, p| h.patience = p),
            SweepParam::DesiredSpeed => set_humans(cfg, |h, p| h.desired_speed = p),
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Plan(a) => cmd_plan(&a),
    }
}

/// Exit code for an error, after printing it.
pub fn report(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Input(_) | Error::Distribution(_) | Error::Io { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn finish(result: Result<()>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

pub fn load_scenario(args: &ScenarioArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::case_study(CaseKind::SlowPass),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(Error::Input("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.3}"))
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    finish((|| {
        let cfg = load_scenario(&args.scenario)?;
        let result = crate::sim::run(&cfg)?;
        result.write_dir(&args.out)?;
        print!("{}", result.summary());
        Ok(())
    })())
}

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub overtook: bool,
    pub lane_changes: usize,
    pub crossing_time: Option<f64>,
    pub fuel_economy: f64,
}

pub fn sweep(cfg: &SimConfig, axis: &SweepAxis) -> Result<Vec<SweepRow>> {
    axis.values()
        .into_par_iter()
        .map(|value| {
            let mut c = cfg.clone();
            axis.apply(&mut c, value);
            let r = crate::sim::run(&c)?;
            Ok(SweepRow {
                value,
                overtook: r.overtook(),
                lane_changes: r.lane_change_count(),
                crossing_time: r.cav.crossing_time,
                fuel_economy: r.cav.metrics.fuel_economy,
            })
        })
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> i32 {
    finish((|| {
        let cfg = load_scenario(&args.scenario)?;
        let rows = pool(args.jobs)?.install(|| sweep(&cfg, &args.sweep))?;
        create_dir(&args.out)?;
        let path = args.out.join("sweep.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["value", "overtook", "lane_changes", "crossing_time", "fuel_economy"])?;
        for r in &rows {
            w.write_record([
                format!("{:.4}", r.value),
                r.overtook.to_string(),
                r.lane_changes.to_string(),
                opt(r.crossing_time),
                format!("{:.4}", r.fuel_economy),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        for r in &rows {
            println!(
                "{:>8.3}  overtook {:<5}  crossing {:>8}  fe {:.3}",
                r.value,
                r.overtook,
                opt(r.crossing_time),
                r.fuel_economy
            );
        }
        Ok(())
    })())
}

/// Outcome of one Monte-Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub overtook: bool,
    pub lane_changes: usize,
    pub crossing_time: Option<f64>,
    pub fuel_economy: f64,
    pub signal_wait: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub overtake_probability: f64,
    /// 95% normal-approximation half-width.
    pub overtake_half_width: f64,
    pub mean_fuel_economy: f64,
    pub fuel_economy_half_width: f64,
}

/// Seed of run `i` in a batch started from `seed`.
pub fn run_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// `runs` seeded runs sharing one CAV plan. `keep` receives each result
/// before it is dropped.
pub fn monte_carlo(
    cfg: &SimConfig,
    runs: usize,
    keep: &(dyn Fn(usize, &SimResult) -> Result<()> + Sync),
) -> Result<Vec<RunOutcome>> {
    if runs == 0 {
        return Err(Error::Input("--runs must be at least 1".into()));
    }
    cfg.validate()?;
    let plan: Trajectory = plan_for(cfg)?;
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = run_seed(cfg.seed, i);
            let r = run_with_plan(&c, plan.clone())?;
            keep(i, &r)?;
            Ok(RunOutcome {
                run: i,
                seed: c.seed,
                overtook: r.overtook(),
                lane_changes: r.lane_change_count(),
                crossing_time: r.cav.crossing_time,
                fuel_economy: r.cav.metrics.fuel_economy,
                signal_wait: r.cav.signal_wait,
            })
        })
        .collect()
}

pub fn summarize(outcomes: &[RunOutcome]) -> MonteCarloSummary {
    let n = outcomes.len() as f64;
    let p = outcomes.iter().filter(|o| o.overtook).count() as f64 / n;
    let mean = outcomes.iter().map(|o| o.fuel_economy).sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.fuel_economy - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MonteCarloSummary {
        runs: outcomes.len(),
        overtake_probability: p,
        overtake_half_width: 1.96 * (p * (1.0 - p) / n).sqrt(),
        mean_fuel_economy: mean,
        fuel_economy_half_width: 1.96 * (var / n).sqrt(),
    }
}

pub fn cmd_montecarlo(args: &MonteCarloArgs) -> i32 {
    finish((|| {
        let mut cfg = load_scenario(&args.scenario)?;
        if args.scenario.config.is_none() {
            cfg.humans = vec![HumanSpec::sampled_follower()];
        }
        create_dir(&args.out)?;
        let log_dir = args.out.join("logs");
        if args.logs {
            create_dir(&log_dir)?;
        }
        let keep = |i: usize, r: &SimResult| {
            if args.logs {
                TrajectoryLog::from_sim(r).write_csv(&log_dir.join(format!("run_{i:05}.csv")))?;
            }
            Ok(())
        };
        let outcomes = pool(args.jobs)?.install(|| monte_carlo(&cfg, args.runs, &keep))?;
        let path = args.out.join("runs.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["run", "seed", "overtook", "lane_changes", "crossing_time", "fuel_economy", "signal_wait"])?;
        for o in &outcomes {
            w.write_record([
                o.run.to_string(),
                o.seed.to_string(),
                o.overtook.to_string(),
                o.lane_changes.to_string(),
                opt(o.crossing_time),
                format!("{:.4}", o.fuel_economy),
                format!("{:.3}", o.signal_wait),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let s = summarize(&outcomes);
        let mut text = String::new();
        let _ = writeln!(text, "runs = {}", s.runs);
        let _ = writeln!(text, "overtake_probability = {:.4}", s.overtake_probability);
        let _ = writeln!(text, "overtake_probability_ci95 = {:.4}", s.overtake_half_width);
        let _ = writeln!(text, "mean_fuel_economy = {:.4}", s.mean_fuel_economy);
        let _ = writeln!(text, "mean_fuel_economy_ci95 = {:.4}", s.fuel_economy_half_width);
        write_text(&args.out.join("summary.txt"), &text)?;
        print!("{text}");
        Ok(())
    })())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> i32 {
    finish((|| {
        if !args.input.is_dir() {
            return Err(Error::Input(format!("{} is not a directory", args.input.display())));
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.input)
            .map_err(|e| Error::io(&args.input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let logs: Vec<TrajectoryLog> = paths
            .par_iter()
            .map(|p| TrajectoryLog::read_csv(p))
            .collect::<Result<_>>()?;
        let report = calibrate(&logs, &CalibrationOptions::default())?;
        create_dir(&args.out)?;
        write_text(&args.out.join("report.txt"), &report.summary())?;
        let fitted = toml::to_string(&report.fitted()).map_err(|e| Error::Input(format!("TOML: {e}")))?;
        write_text(&args.out.join("fitted.toml"), &fitted)?;
        print!("{}", report.summary());
        Ok(())
    })())
}

/// DP grid used by `plan --dp`.
pub const PLAN_DP_GRID: (usize, usize) = (199, 199);

pub fn cmd_plan(args: &PlanArgs) -> i32 {
    finish((|| {
        let cfg = load_scenario(&args.scenario)?;
        create_dir(&args.out)?;
        let mut text = String::new();
        for (name, kind) in [
            ("slow_pass", CaseKind::SlowPass),
            ("fast_pass", CaseKind::fast_pass()),
            ("stop_at_red", CaseKind::StopAtRed),
        ] {
            let spec = CaseSpec {
                kind,
                t0: 0.0,
                s0: 0.0,
                distance: cfg.corridor_length,
                v0: cfg.cav.initial_speed,
                terminal_speed: cfg.cav.terminal_speed,
                weights: cfg.cav.weights,
            };
            let problem = spec.problem(&cfg.signal, &cfg.vehicle)?;
            let plan = crate::eco_ad::solve_ocp(&problem, crate::eco_ad::default_node_count(problem.horizon()))?;
            plan.write_csv(&args.out.join(format!("plan_{name}.csv")))?;
            let _ = writeln!(text, "{name}.arrival = {:.3}", plan.end_time());
            let _ = writeln!(text, "{name}.mean_speed = {:.4}", plan.mean_speed());
            let _ = writeln!(text, "{name}.cost = {:.6e}", plan.meta.cost);
            if args.dp {
                let dp = dp_oracle(&problem, PLAN_DP_GRID.0, PLAN_DP_GRID.1)?;
                let gap = (plan.meta.cost - dp.meta.cost) / dp.meta.cost;
                let _ = writeln!(text, "{name}.dp_cost = {:.6e}", dp.meta.cost);
                let _ = writeln!(text, "{name}.dp_gap = {gap:.5}");
            }
        }
        write_text(&args.out.join("plan_summary.txt"), &text)?;
        print!("{text}");
        Ok(())
    })())
}
