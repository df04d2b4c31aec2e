//! Control-experiment harness: seeded scenario generation, world stepping
//! with the antipodal wrap, trial batches with the paper-style failure
//! accounting (every failure costs the full timeout), and the three
//! parameter sweeps.

use crate::dataset_replay::ReplaySequence;
use crate::planner::{replan_loop, ExecutionTrace, PlannerKind, TrialOutcome, WorldDriver};
use crate::types::{Obstacle, ObstacleSet, ScenarioConfig, StateTime, Vec2};
use crate::world::WorldSnapshot;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Obstacle speeds are sampled uniformly from this range, m/s.
pub const OBSTACLE_SPEED_RANGE: (f64, f64) = (1.2, 1.8);
/// Obstacles are (re)sampled outside this clearance of the robot start.
pub const SPAWN_CLEARANCE_MARGIN: f64 = 0.2;
/// Each trial burns the world in for a uniform time from this range before
/// planning starts, realizing the random start time point.
pub const BURN_IN_RANGE: (f64, f64) = (0.0, 10.0);

/// Which scenario parameter a sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    ObstacleCount(Vec<usize>),
    SafeDistance(Vec<f64>),
    VMax(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::ObstacleCount(v) => v.iter().map(|&n| n as f64).collect(),
            Sweep::SafeDistance(v) => v.clone(),
            Sweep::VMax(v) => v.clone(),
        }
    }
}

/// A batch experiment: a base scenario, the planners to run, one sweep, and
/// the trial count per sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base: ScenarioConfig,
    /// Planners to evaluate on the same seeds.
    pub planner: Vec<PlannerKind>,
    pub sweep: Sweep,
    pub trials: usize,
    /// Obstacle count when the sweep varies another parameter.
    #[serde(default = "default_obstacles")]
    pub n_obstacles: usize,
}

fn default_obstacles() -> usize {
    40
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.planner.is_empty() {
            return Err(Error::InvalidConfig("no planner selected".into()));
        }
        let positive = match &self.sweep {
            Sweep::ObstacleCount(_) => true,
            Sweep::SafeDistance(v) => v.iter().all(|&x| x > 0.0),
            Sweep::VMax(v) => v.iter().all(|&x| x > 0.0),
        };
        if !positive || self.sweep.values().is_empty() {
            return Err(Error::InvalidConfig(
                "sweep values must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scenario at one sweep point.
    pub fn scenario_at(&self, value: f64) -> (ScenarioConfig, usize) {
        let mut cfg = self.base.clone();
        let mut n = self.n_obstacles;
        match self.sweep {
            Sweep::ObstacleCount(_) => n = value as usize,
            Sweep::SafeDistance(_) => cfg.safe_distance = value,
            Sweep::VMax(_) => cfg.v_max = Vec2::new(value, value),
        }
        (cfg, n)
    }
}

/// One trial's accounting entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub outcome: TrialOutcome,
    pub time_cost: f64,
}

/// Aggregated metrics for one (sweep value, planner) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sweep_value: f64,
    pub planner: PlannerKind,
    pub success_rate: f64,
    pub mean_time_cost: f64,
    pub outcomes: Vec<TrialSummary>,
}

impl MetricsRow {
    pub fn from_outcomes(
        sweep_value: f64,
        planner: PlannerKind,
        timeout: f64,
        outcomes: Vec<TrialSummary>,
    ) -> Self {
        let n = outcomes.len().max(1) as f64;
        let successes = outcomes.iter().filter(|o| o.outcome.is_success()).count();
        let mean_time_cost = outcomes.iter().map(|o| o.time_cost).sum::<f64>() / n;
        debug_assert!(mean_time_cost <= timeout + 1e-9);
        MetricsRow {
            sweep_value,
            planner,
            success_rate: successes as f64 / n,
            mean_time_cost,
            outcomes,
        }
    }
}

/// Places `n_obstacles` uniformly in the workspace with uniformly random
/// headings and speeds from [`OBSTACLE_SPEED_RANGE`]; positions within
/// `c_eff + `[`SPAWN_CLEARANCE_MARGIN`] of the robot start are redrawn. The
/// robot starts at `cfg.start` at rest.
pub fn init_scenario(
    cfg: &ScenarioConfig,
    n_obstacles: usize,
    seed: u64,
) -> (WorldSnapshot, StateTime) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = cfg.workspace_extent;
    let keep_out = cfg.c_eff() + SPAWN_CLEARANCE_MARGIN;
    let mut obstacles = Vec::with_capacity(n_obstacles);
    for id in 0..n_obstacles {
        let p = sample_clear_position(&mut rng, extent, cfg.start, keep_out);
        let heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = rng.gen_range(OBSTACLE_SPEED_RANGE.0..OBSTACLE_SPEED_RANGE.1);
        obstacles.push(Obstacle {
            id: id as u32,
            p,
            v: Vec2::new(heading.cos(), heading.sin()) * speed,
        });
    }
    let world = WorldSnapshot {
        obstacles: ObstacleSet {
            obstacles,
            radius: cfg.safe_distance,
        },
        t_now: 0.0,
        workspace_extent: extent,
    };
    let robot = StateTime {
        p: cfg.start,
        v: Vec2::ZERO,
        t: 0.0,
    };
    (world, robot)
}

fn sample_clear_position(
    rng: &mut ChaCha8Rng,
    extent: Vec2,
    start: Vec2,
    keep_out: f64,
) -> Vec2 {
    loop {
        let p = Vec2::new(rng.gen_range(0.0..extent.x), rng.gen_range(0.0..extent.y));
        if p.dist(start) > keep_out {
            return p;
        }
    }
}

/// Advances all obstacles by `v * dt`, then applies the antipodal wrap.
pub fn step_world(world: &WorldSnapshot, dt: f64) -> WorldSnapshot {
    let mut out = world.clone();
    for o in &mut out.obstacles.obstacles {
        o.p = o.p + o.v * dt;
    }
    out.t_now += dt;
    out.wrap_obstacles()
}

/// Builds a world ready for one trial: seeded placement, a burn-in of
/// uniform duration (the random start time point, unknown to the robot),
/// then a final redraw of any obstacle that drifted onto the start.
pub fn prepare_trial(
    cfg: &ScenarioConfig,
    n_obstacles: usize,
    seed: u64,
) -> (WorldSnapshot, StateTime) {
    let (mut world, mut robot) = init_scenario(cfg, n_obstacles, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let burn = rng.gen_range(BURN_IN_RANGE.0..BURN_IN_RANGE.1);
    let steps = (burn / cfg.dt).floor() as usize;
    for _ in 0..steps {
        world = step_world(&world, cfg.dt);
    }
    let keep_out = cfg.c_eff() + SPAWN_CLEARANCE_MARGIN;
    for i in 0..world.obstacles.len() {
        if world.obstacles.obstacles[i].p.dist(cfg.start) <= keep_out {
            world.obstacles.obstacles[i].p =
                sample_clear_position(&mut rng, cfg.workspace_extent, cfg.start, keep_out);
        }
    }
    robot.t = world.t_now;
    (world, robot)
}

/// Runs a single synthetic trial to completion.
pub fn run_trial(
    world: WorldSnapshot,
    robot: StateTime,
    planner: PlannerKind,
    cfg: &ScenarioConfig,
) -> ExecutionTrace {
    replan_loop(WorldDriver::Synthetic(world), robot, planner, cfg)
}

/// Runs the full experiment: for every sweep value and planner, `trials`
/// seeded trials (seed = base seed + trial index, shared across planners).
/// Trials run in parallel; aggregation order is deterministic.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    Ok(run_experiment_traced(config)?
        .into_iter()
        .map(|(row, _)| row)
        .collect())
}

/// As [`run_experiment`], also returning each trial's full execution trace.
pub fn run_experiment_traced(
    config: &ExperimentConfig,
) -> Result<Vec<(MetricsRow, Vec<ExecutionTrace>)>> {
    config.validate()?;
    let mut rows = Vec::new();
    for value in config.sweep.values() {
        let (cfg, n_obstacles) = config.scenario_at(value);
        cfg.validate()?;
        for &planner in &config.planner {
            let traced: Vec<(TrialSummary, ExecutionTrace)> = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = cfg.rng_seed.wrapping_add(trial as u64);
                    let (world, robot) = prepare_trial(&cfg, n_obstacles, seed);
                    let trace = run_trial(world, robot, planner, &cfg);
                    let summary = TrialSummary {
                        seed,
                        time_cost: trace.outcome.time_cost(cfg.timeout),
                        outcome: trace.outcome.clone(),
                    };
                    (summary, trace)
                })
                .collect();
            let (outcomes, traces): (Vec<_>, Vec<_>) = traced.into_iter().unzip();
            rows.push((
                MetricsRow::from_outcomes(value, planner, cfg.timeout, outcomes),
                traces,
            ));
        }
    }
    Ok(rows)
}

/// Benchmark counterpart of [`run_experiment`] over a replay sequence:
/// `trials` runs starting at seeded random time points of the recording.
pub fn run_bench(
    seq: &ReplaySequence,
    cfg: &ScenarioConfig,
    planner: PlannerKind,
    trials: usize,
    base_seed: u64,
) -> MetricsRow {
    let (t_lo, t_hi) = seq.span();
    let outcomes: Vec<TrialSummary> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = base_seed.wrapping_add(trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = rng.gen_range(t_lo..t_hi.max(t_lo + 1e-9));
            let t_start = t_lo + ((raw - t_lo) / cfg.dt).floor() * cfg.dt;
            let robot = StateTime {
                p: cfg.start,
                v: Vec2::ZERO,
                t: t_start,
            };
            let driver = WorldDriver::Replay {
                seq,
                radius: cfg.safe_distance,
            };
            let trace = replan_loop(driver, robot, planner, cfg);
            TrialSummary {
                seed,
                time_cost: trace.outcome.time_cost(cfg.timeout),
                outcome: trace.outcome,
            }
        })
        .collect();
    MetricsRow::from_outcomes(0.0, planner, cfg.timeout, outcomes)
}

/// Benchmark-protocol scenario for a replay sequence: start and goal at the
/// middle left and right of the fitted bounds, 1.5 m/s per-axis speed limit,
/// 0.4 m safe distance.
pub fn bench_config(seq: &ReplaySequence, base: &ScenarioConfig) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.workspace_extent = seq.extent;
    cfg.start = Vec2::new(0.0, seq.extent.y / 2.0);
    cfg.goal = Vec2::new(seq.extent.x, seq.extent.y / 2.0);
    cfg.v_max = Vec2::new(1.5, 1.5);
    cfg.safe_distance = 0.4;
    cfg
}

/// Metrics CSV with the schema `sweep_value,planner,success_rate,`
/// `mean_time_cost,n_trials`; formatting is fixed so identical runs emit
/// identical bytes.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("sweep_value,planner,success_rate,mean_time_cost,n_trials\n");
    for row in rows {
        out.push_str(&format!(
            "{:.6},{},{:.6},{:.6},{}\n",
            row.sweep_value,
            row.planner,
            row.success_rate,
            row.mean_time_cost,
            row.outcomes.len()
        ));
    }
    out
}
