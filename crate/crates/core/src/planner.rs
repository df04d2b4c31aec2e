//! The full planning pipeline (front end, densification, MAP back end), the
//! receding-horizon replanning loop, and the wait-and-go and
//! velocity-obstacle baseline planners.

use crate::dataset_replay::ReplaySequence;
use crate::gp_prior::GpParams;
use crate::map_optimizer::{self, FactorGraph, SolveReport, DEFAULT_LAMBDA0, DEFAULT_MAX_ITERS,
    DEFAULT_SIGMA_OBS};
use crate::st_graph::{self, StPath};
use crate::timed_esdf::{self, TimedEsdf};
use crate::types::{clamp_velocity, ScenarioConfig, StateTime, Trajectory, Vec2};
use crate::world::WorldSnapshot;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Goal-reached radius of the replanning loop, meters.
pub const GOAL_RADIUS: f64 = 0.2;
/// Power-spectral density of the planning prior. Larger values weaken the
/// smoothing so the executed trajectory tracks the near-time-optimal front
/// end more tightly.
pub const PLAN_QC: f64 = 4.0;
/// Time-to-collision window of the velocity-obstacle baseline, seconds.
pub const VO_TTC_WINDOW: f64 = 2.0;
/// Substeps per control tick used by the collision audit and the baseline
/// sweep checks.
pub const AUDIT_SUBSTEPS: usize = 10;

/// Which planner drives the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    St,
    Vo,
    Wg,
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "st" => Ok(PlannerKind::St),
            "vo" => Ok(PlannerKind::Vo),
            "wg" => Ok(PlannerKind::Wg),
            other => Err(Error::InvalidConfig(format!("unknown planner '{other}'"))),
        }
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlannerKind::St => "st",
            PlannerKind::Vo => "vo",
            PlannerKind::Wg => "wg",
        })
    }
}

/// Output of one state-time planning query.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub complete: bool,
    pub front_end_ms: f64,
    pub back_end_ms: f64,
    pub report: SolveReport,
}

/// Densifies a front-end path onto the dt grid by sampling its piecewise
/// constant-velocity motion. The terminal waypoint pins the path terminus,
/// with zero velocity when the path is complete.
pub fn densify_path(path: &StPath, t0: f64, dt: f64) -> Trajectory {
    if path.nodes.len() < 2 {
        // Nothing to execute: hold position for one tick.
        let s = path
            .nodes
            .first()
            .map(|n| n.state)
            .unwrap_or(StateTime {
                p: Vec2::ZERO,
                v: Vec2::ZERO,
                t: t0,
            });
        return Trajectory::from_states(t0, dt, vec![(s.p, Vec2::ZERO), (s.p, Vec2::ZERO)])
            .expect("hold trajectory");
    }
    let t_end = path.nodes.last().unwrap().state.t;
    let n = (((t_end - t0) / dt - 1e-9).ceil() as usize).max(1);
    let states = (0..=n).map(|i| {
        let t = (t0 + i as f64 * dt).min(t_end);
        sample_path(path, t, i == n)
    });
    Trajectory::from_states(t0, dt, states).expect("densified trajectory")
}

fn sample_path(path: &StPath, t: f64, terminal: bool) -> (Vec2, Vec2) {
    let nodes = &path.nodes;
    let last = nodes.last().unwrap().state;
    if terminal {
        let v = if path.complete {
            Vec2::ZERO
        } else {
            segment_velocity(nodes, nodes.len() - 1)
        };
        return (last.p, v);
    }
    if t >= last.t {
        return (last.p, Vec2::ZERO);
    }
    let mut k = 0;
    while k + 1 < nodes.len() && nodes[k + 1].state.t <= t {
        k += 1;
    }
    let a = nodes[k].state;
    if k + 1 == nodes.len() {
        return (a.p, Vec2::ZERO);
    }
    let b = nodes[k + 1].state;
    let span = b.t - a.t;
    let alpha = if span > 0.0 { (t - a.t) / span } else { 0.0 };
    let v = (b.p - a.p) / span;
    (a.p + (b.p - a.p) * alpha, v)
}

fn segment_velocity(nodes: &[st_graph::DualNode], end: usize) -> Vec2 {
    if end == 0 {
        return Vec2::ZERO;
    }
    let a = nodes[end - 1].state;
    let b = nodes[end].state;
    let span = b.t - a.t;
    if span > 0.0 {
        (b.p - a.p) / span
    } else {
        Vec2::ZERO
    }
}

/// Runs the full state-time pipeline: front-end search, densification,
/// Timed-ESDF construction over the path span, and the MAP solve. A partial
/// front-end path propagates as `complete = false`; a back-end solver
/// failure falls back to the densified initialization.
pub fn plan_st(
    snapshot: &WorldSnapshot,
    start: &StateTime,
    goal: Vec2,
    cfg: &ScenarioConfig,
) -> Result<PlanResult> {
    let t0 = start.t;
    let front_timer = Instant::now();
    let path = st_graph::state_time_astar(start, goal, cfg.horizon, snapshot, cfg)?;
    let init = densify_path(&path, t0, cfg.dt);
    let front_end_ms = front_timer.elapsed().as_secs_f64() * 1e3;

    let back_timer = Instant::now();
    let horizon = (init.len() as f64) * cfg.dt;
    let esdf = TimedEsdf::build(snapshot, t0, horizon, cfg.dt, cfg.c_eff(), cfg.epsilon);
    let graph = FactorGraph::new(
        &init,
        &esdf,
        GpParams::new(PLAN_QC).expect("positive density"),
        DEFAULT_SIGMA_OBS,
    )?;
    let (trajectory, report) =
        match map_optimizer::optimize(&init, &graph, DEFAULT_MAX_ITERS, DEFAULT_LAMBDA0) {
            Ok(out) => out,
            Err(Error::SolverFailure { report }) => (init, *report),
            Err(e) => return Err(e),
        };
    let back_end_ms = back_timer.elapsed().as_secs_f64() * 1e3;

    Ok(PlanResult {
        trajectory,
        complete: path.complete,
        front_end_ms,
        back_end_ms,
        report,
    })
}

/// Wait-and-go baseline: the fastest per-axis-feasible velocity straight at
/// the goal when the next tick's swept motion stays clear of every
/// extrapolated obstacle, else a zero command.
pub fn plan_wg(
    snapshot: &WorldSnapshot,
    start: &StateTime,
    goal: Vec2,
    cfg: &ScenarioConfig,
) -> Vec2 {
    let delta = goal - start.p;
    let dist = delta.norm();
    if dist < 1e-9 {
        return Vec2::ZERO;
    }
    let dir = delta / dist;
    let sx = if dir.x.abs() > 1e-12 {
        cfg.v_max.x / dir.x.abs()
    } else {
        f64::INFINITY
    };
    let sy = if dir.y.abs() > 1e-12 {
        cfg.v_max.y / dir.y.abs()
    } else {
        f64::INFINITY
    };
    let speed = sx.min(sy).min(dist / cfg.dt);
    let v = dir * speed;
    if sweep_is_clear(snapshot, start, v, cfg) {
        v
    } else {
        Vec2::ZERO
    }
}

fn sweep_is_clear(snapshot: &WorldSnapshot, start: &StateTime, v: Vec2, cfg: &ScenarioConfig) -> bool {
    let c_eff = cfg.c_eff();
    for k in 1..=AUDIT_SUBSTEPS {
        let tau = cfg.dt * k as f64 / AUDIT_SUBSTEPS as f64;
        let p = start.p + v * tau;
        let clear = snapshot
            .min_clearance(p, start.t + tau, c_eff)
            .unwrap_or(f64::INFINITY);
        if clear < 0.0 {
            return false;
        }
    }
    true
}

/// Velocity-obstacle baseline: over the node-placement velocity grid plus
/// the zero velocity, discard candidates inside any obstacle's velocity
/// obstacle within a [`VO_TTC_WINDOW`] time-to-collision window, then pick
/// the survivor with most progress toward the goal. Zero when none survive.
pub fn plan_vo(
    snapshot: &WorldSnapshot,
    start: &StateTime,
    goal: Vec2,
    cfg: &ScenarioConfig,
) -> Vec2 {
    let c_eff = cfg.c_eff();
    let p_rg_hat = (goal - start.p).normalized();
    let mut candidates = st_graph::candidate_velocities(cfg.v_max);
    candidates.push(Vec2::ZERO);
    let mut best: Option<(f64, Vec2)> = None;
    for v in candidates {
        let blocked = snapshot.obstacles.obstacles.iter().any(|o| {
            let pos = o.p + o.v * (start.t - snapshot.t_now);
            timed_esdf::in_velocity_obstacle_within(v, start.p, pos, o.v, c_eff, VO_TTC_WINDOW)
        });
        if blocked {
            continue;
        }
        let score = p_rg_hat.dot(v);
        if best.map_or(true, |(s, _)| score > s) {
            best = Some((score, v));
        }
    }
    best.map_or(Vec2::ZERO, |(_, v)| v)
}

/// Earliest `t > 0` at which the relative motion first reaches the combined
/// radius; infinity when it never does.
fn first_contact_time(w: Vec2, u: Vec2, c_eff: f64) -> f64 {
    let c = w.norm_sq() - c_eff * c_eff;
    if c <= 0.0 {
        return 0.0;
    }
    let a = u.norm_sq();
    if a == 0.0 {
        return f64::INFINITY;
    }
    let b = 2.0 * w.dot(u);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    if t > 0.0 {
        t
    } else {
        f64::INFINITY
    }
}

/// Evasion command for a cornered robot: over the candidate grid plus zero,
/// lexicographically maximize (time to first contact capped at the VO
/// window, goal progress). With contact-free candidates available this
/// coincides with the velocity-obstacle pick; otherwise it buys the most
/// time.
fn evade_command(
    snapshot: &WorldSnapshot,
    start: &StateTime,
    goal: Vec2,
    cfg: &ScenarioConfig,
) -> Vec2 {
    let c_eff = cfg.c_eff();
    let p_rg_hat = (goal - start.p).normalized();
    let mut candidates = st_graph::candidate_velocities(cfg.v_max);
    candidates.push(Vec2::ZERO);
    let mut best: Option<(f64, f64, Vec2)> = None;
    for v in candidates {
        let mut ttc = f64::INFINITY;
        for o in &snapshot.obstacles.obstacles {
            let pos = o.p + o.v * (start.t - snapshot.t_now);
            ttc = ttc.min(first_contact_time(start.p - pos, v - o.v, c_eff));
        }
        let ttc = ttc.min(VO_TTC_WINDOW);
        let progress = p_rg_hat.dot(v);
        let better = match best {
            None => true,
            Some((bt, bp, _)) => ttc > bt + 1e-12 || (ttc > bt - 1e-12 && progress > bp),
        };
        if better {
            best = Some((ttc, progress, v));
        }
    }
    best.map_or(Vec2::ZERO, |(_, _, v)| v)
}

/// World the replanning loop runs against: either a synthetic
/// constant-velocity world with boundary wrap, or a recorded replay.
pub enum WorldDriver<'a> {
    Synthetic(WorldSnapshot),
    Replay {
        seq: &'a ReplaySequence,
        radius: f64,
    },
}

impl WorldDriver<'_> {
    fn snapshot(&self, t: f64) -> WorldSnapshot {
        match self {
            WorldDriver::Synthetic(w) => w.clone(),
            WorldDriver::Replay { seq, radius } => seq.snapshot_open(t, *radius),
        }
    }

    fn advance(&mut self, dt: f64) {
        if let WorldDriver::Synthetic(w) = self {
            let mut advanced = w.clone();
            for o in &mut advanced.obstacles.obstacles {
                o.p = o.p + o.v * dt;
            }
            advanced.t_now += dt;
            *self = WorldDriver::Synthetic(advanced.wrap_obstacles());
        }
    }
}

/// One control tick of an execution trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub p: Vec2,
    pub v: Vec2,
    /// Velocity executed over this tick.
    pub command: Vec2,
    /// Whether the tick's plan reached the goal (ST only).
    pub plan_complete: Option<bool>,
    pub front_ms: f64,
    pub back_ms: f64,
}

/// Why a trial ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialOutcome {
    /// Goal reached; arrival measured from the trial start.
    Success { arrival: f64 },
    /// The dt/10 substep audit found a penetration.
    Collision { t: f64 },
    Timeout,
    PlannerError { t: f64, message: String },
}

impl TrialOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, TrialOutcome::Success { .. })
    }

    /// Trial time cost under the failure-accounting rule: failures of any
    /// kind cost the full timeout.
    pub fn time_cost(&self, timeout: f64) -> f64 {
        match self {
            TrialOutcome::Success { arrival } => *arrival,
            _ => timeout,
        }
    }
}

/// Full record of one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub ticks: Vec<TickRecord>,
    pub outcome: TrialOutcome,
}

impl ExecutionTrace {
    /// JSON lines, one record per tick plus a final outcome line. Wall-clock
    /// timings are zeroed when `deterministic` is set.
    pub fn to_jsonl(&self, deterministic: bool) -> String {
        let mut out = String::new();
        for tick in &self.ticks {
            let mut tick = tick.clone();
            if deterministic {
                tick.front_ms = 0.0;
                tick.back_ms = 0.0;
            }
            out.push_str(&serde_json::to_string(&tick).expect("tick serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&serde_json::json!({ "outcome": self.outcome }))
                .expect("outcome serializes"),
        );
        out.push('\n');
        out
    }

    /// Decision-relevant content, excluding wall-clock timings.
    pub fn decisions(&self) -> Vec<(f64, Vec2, Vec2, Vec2)> {
        self.ticks
            .iter()
            .map(|t| (t.t, t.p, t.v, t.command))
            .collect()
    }
}

/// Minimum audited clearance of a linearly executed tick against the true
/// obstacle motion, sampled at dt/10 substeps.
pub fn audit_tick(
    world: &WorldSnapshot,
    p0: Vec2,
    p1: Vec2,
    dt: f64,
    c_eff: f64,
) -> f64 {
    let mut worst = f64::INFINITY;
    for k in 1..=AUDIT_SUBSTEPS {
        let tau = dt * k as f64 / AUDIT_SUBSTEPS as f64;
        let p = p0 + (p1 - p0) * (tau / dt);
        let clear = world
            .min_clearance(p, world.t_now + tau, c_eff)
            .unwrap_or(f64::INFINITY);
        worst = worst.min(clear);
    }
    worst
}

/// Receding-horizon replanning loop: at every control tick take a snapshot,
/// plan, execute the first dt of the plan, audit it against the true world,
/// and advance the simulator. Ends on goal arrival (within [`GOAL_RADIUS`]),
/// an audited collision, the timeout, or a planner error.
pub fn replan_loop(
    mut driver: WorldDriver,
    start: StateTime,
    planner: PlannerKind,
    cfg: &ScenarioConfig,
) -> ExecutionTrace {
    let t_start = start.t;
    let mut robot = start;
    let mut ticks = Vec::new();
    let c_eff = cfg.c_eff();

    let spawn_world = driver.snapshot(t_start);
    if spawn_world
        .min_clearance(robot.p, t_start, c_eff)
        .unwrap_or(f64::INFINITY)
        < 0.0
    {
        return ExecutionTrace {
            ticks,
            outcome: TrialOutcome::Collision { t: 0.0 },
        };
    }

    loop {
        let elapsed = robot.t - t_start;
        if robot.p.dist(cfg.goal) <= GOAL_RADIUS {
            return ExecutionTrace {
                ticks,
                outcome: TrialOutcome::Success { arrival: elapsed },
            };
        }
        if elapsed >= cfg.timeout {
            return ExecutionTrace {
                ticks,
                outcome: TrialOutcome::Timeout,
            };
        }

        let snapshot = driver.snapshot(robot.t);
        let (command, plan_complete, front_ms, back_ms) = match planner {
            PlannerKind::St => match plan_st(&snapshot, &robot, cfg.goal, cfg) {
                Ok(plan) => {
                    let hold = !plan.complete
                        && plan.trajectory.len() == 2
                        && plan.trajectory.waypoints()[0].p == plan.trajectory.waypoints()[1].p;
                    let mut v = if hold {
                        Vec2::ZERO
                    } else {
                        let target = plan
                            .trajectory
                            .sample(robot.t + cfg.dt)
                            .unwrap_or(robot);
                        clamp_velocity((target.p - robot.p) / cfg.dt, cfg.v_max)
                    };
                    // Execution safety monitor. A cornered search degenerates
                    // to a hold, and the optimizer's first step is only
                    // softly guarded (waypoint 0 is pinned, so no factor
                    // covers the first slice); if the tick's sweep is not
                    // clear, evade instead.
                    if hold || !sweep_is_clear(&snapshot, &robot, v, cfg) {
                        v = evade_command(&snapshot, &robot, cfg.goal, cfg);
                    }
                    (v, Some(plan.complete), plan.front_end_ms, plan.back_end_ms)
                }
                Err(e) => {
                    return ExecutionTrace {
                        ticks,
                        outcome: TrialOutcome::PlannerError {
                            t: elapsed,
                            message: e.to_string(),
                        },
                    };
                }
            },
            PlannerKind::Vo => {
                let timer = Instant::now();
                let v = plan_vo(&snapshot, &robot, cfg.goal, cfg);
                (v, None, timer.elapsed().as_secs_f64() * 1e3, 0.0)
            }
            PlannerKind::Wg => {
                let timer = Instant::now();
                let v = plan_wg(&snapshot, &robot, cfg.goal, cfg);
                (v, None, timer.elapsed().as_secs_f64() * 1e3, 0.0)
            }
        };

        ticks.push(TickRecord {
            t: robot.t,
            p: robot.p,
            v: robot.v,
            command,
            plan_complete,
            front_ms,
            back_ms,
        });

        let mut new_p = robot.p + command * cfg.dt;
        // The workspace boundary is a wall.
        new_p.x = new_p.x.clamp(0.0, snapshot.workspace_extent.x);
        new_p.y = new_p.y.clamp(0.0, snapshot.workspace_extent.y);

        let clearance = audit_tick(&snapshot, robot.p, new_p, cfg.dt, c_eff);
        if clearance < 0.0 {
            return ExecutionTrace {
                ticks,
                outcome: TrialOutcome::Collision {
                    t: elapsed + cfg.dt,
                },
            };
        }

        driver.advance(cfg.dt);
        robot = StateTime {
            p: new_p,
            v: command,
            t: robot.t + cfg.dt,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Obstacle, ObstacleSet};
    use rand::{Rng, SeedableRng};

    fn world(obstacles: Vec<(Vec2, Vec2)>) -> WorldSnapshot {
        let obstacles = obstacles
            .into_iter()
            .enumerate()
            .map(|(i, (p, v))| Obstacle {
                id: i as u32,
                p,
                v,
            })
            .collect();
        WorldSnapshot {
            obstacles: ObstacleSet::new(obstacles, 0.3).unwrap(),
            t_now: 0.0,
            workspace_extent: Vec2::new(10.0, 10.0),
        }
    }

    fn empty_world() -> WorldSnapshot {
        WorldSnapshot {
            obstacles: ObstacleSet {
                obstacles: vec![],
                radius: 0.3,
            },
            t_now: 0.0,
            workspace_extent: Vec2::new(10.0, 10.0),
        }
    }

    fn st(p: (f64, f64), v: (f64, f64), t: f64) -> StateTime {
        StateTime::new(Vec2::new(p.0, p.1), Vec2::new(v.0, v.1), t).unwrap()
    }

    #[test]
    fn plan_st_empty_world_is_straight_and_complete() {
        let cfg = ScenarioConfig::default();
        let start = st((0.0, 5.0), (0.0, 0.0), 0.0);
        let plan = plan_st(&empty_world(), &start, cfg.goal, &cfg).unwrap();
        assert!(plan.complete);
        // The residual objective is pure boundary-condition control effort
        // (rest-to-rest); no obstacle term survives.
        assert!(plan.report.final_objective <= plan.report.initial_objective);
        let wps = plan.trajectory.waypoints();
        for w in wps {
            assert!((w.p.y - 5.0).abs() < 1e-6, "deviates from the corridor");
        }
        assert!(wps.last().unwrap().p.dist(cfg.goal) < 1e-6);
        // A re-plan from cruise speed keeps only the terminal deceleration
        // effort; no obstacle term is active anywhere.
        let cruising = st((2.0, 5.0), (1.8, 0.0), 0.0);
        let plan2 = plan_st(&empty_world(), &cruising, cfg.goal, &cfg).unwrap();
        assert!(plan2.complete);
        assert!(plan2.report.final_objective <= plan2.report.initial_objective);
        for w in plan2.trajectory.waypoints() {
            assert!((w.p.y - 5.0).abs() < 1e-6);
        }
    }

    #[test]
    fn plan_st_crossing_obstacle_is_audited_clear() {
        let cfg = ScenarioConfig::default();
        let w = world(vec![(Vec2::new(5.0, 8.0), Vec2::new(0.0, -0.8))]);
        let start = st((0.5, 5.0), (0.0, 0.0), 0.0);
        let plan = plan_st(&w, &start, Vec2::new(9.5, 5.0), &cfg).unwrap();
        let traj = &plan.trajectory;
        let substep = cfg.dt / 10.0;
        let mut t = traj.start_time();
        while t < traj.end_time() {
            let s = traj.sample(t).unwrap();
            let clear = w.min_clearance(s.p, t, cfg.c_eff()).unwrap();
            assert!(clear >= 0.0, "penetration at t={t}: {clear}");
            t += substep;
        }
    }

    #[test]
    fn plan_st_budget_limited_is_partial() {
        let mut cfg = ScenarioConfig::default();
        cfg.horizon = 0.1;
        // Box in the start so no direct goal connection exists.
        let w = world(vec![
            (Vec2::new(2.0, 5.0), Vec2::ZERO),
            (Vec2::new(1.0, 4.0), Vec2::ZERO),
            (Vec2::new(1.0, 6.0), Vec2::ZERO),
        ]);
        let start = st((1.0, 5.0), (0.0, 0.0), 0.0);
        let plan = plan_st(&w, &start, cfg.goal, &cfg).unwrap();
        assert!(!plan.complete);
        assert!(plan.trajectory.len() >= 2);
    }

    #[test]
    fn plan_st_rejects_inadmissible_start() {
        let cfg = ScenarioConfig::default();
        let w = world(vec![(Vec2::new(1.0, 5.0), Vec2::ZERO)]);
        let start = st((1.0, 5.0), (0.0, 0.0), 0.0);
        assert!(plan_st(&w, &start, cfg.goal, &cfg).is_err());
    }

    #[test]
    fn densify_grid_and_terminal_velocity() {
        let cfg = ScenarioConfig::default();
        let start = st((0.0, 5.0), (0.0, 0.0), 0.0);
        let path = st_graph::state_time_astar(&start, cfg.goal, 10.0, &empty_world(), &cfg)
            .unwrap();
        let traj = densify_path(&path, 0.0, cfg.dt);
        assert!(traj.end_time() >= path.end_time() - 1e-9);
        let last = traj.waypoints().last().unwrap();
        assert_eq!(last.v, Vec2::ZERO, "complete path ends at rest");
        for w in traj.waypoints() {
            assert!((w.t / cfg.dt - (w.t / cfg.dt).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn wg_commands() {
        let cfg = ScenarioConfig::default();
        let start = st((0.0, 5.0), (0.0, 0.0), 0.0);
        // Clear line: full speed toward the goal.
        let v = plan_wg(&empty_world(), &start, cfg.goal, &cfg);
        assert!(v.dist(Vec2::new(1.8, 0.0)) < 1e-9);
        // Obstacle immediately ahead: wait.
        let w = world(vec![(Vec2::new(0.3, 5.0), Vec2::ZERO)]);
        assert_eq!(plan_wg(&w, &start, cfg.goal, &cfg), Vec2::ZERO);
        // Obstacle behind: only the forward sweep is checked.
        let start2 = st((2.0, 5.0), (0.0, 0.0), 0.0);
        let w = world(vec![(Vec2::new(1.4, 5.0), Vec2::ZERO)]);
        let v = plan_wg(&w, &start2, cfg.goal, &cfg);
        assert!(v.dist(Vec2::new(1.8, 0.0)) < 1e-9);
    }

    #[test]
    fn vo_empty_world_picks_goal_aligned_max_speed() {
        let cfg = ScenarioConfig::default();
        let start = st((0.5, 5.0), (0.0, 0.0), 0.0);
        let v = plan_vo(&empty_world(), &start, Vec2::new(9.5, 5.0), &cfg);
        assert!(v.dist(Vec2::new(1.8, 0.0)) < 1e-9, "got {v:?}");
    }

    #[test]
    fn vo_encircled_robot_stops() {
        // Obstacles closing in from every heading put every candidate
        // inside some velocity obstacle.
        let mut obs = Vec::new();
        for j in 0..16 {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
            let dir = Vec2::new(theta.cos(), theta.sin());
            obs.push((Vec2::new(5.0, 5.0) + dir * 1.2, -dir * 1.5));
        }
        let w = world(obs);
        let cfg = ScenarioConfig::default();
        let start = st((5.0, 5.0), (0.0, 0.0), 0.0);
        assert_eq!(plan_vo(&w, &start, Vec2::new(9.5, 5.0), &cfg), Vec2::ZERO);
    }

    #[test]
    fn vo_single_blocker_yields_lateral_winner() {
        let cfg = ScenarioConfig::default();
        let start = st((2.0, 5.0), (0.0, 0.0), 0.0);
        let goal = Vec2::new(9.5, 5.0);
        let w = world(vec![(Vec2::new(3.0, 5.0), Vec2::ZERO)]);
        let v = plan_vo(&w, &start, goal, &cfg);
        assert!(v.norm() > 0.0, "robot should not freeze");
        // Exhaustive grid oracle: the selected velocity beats every
        // surviving candidate and is itself outside all velocity obstacles.
        let mut grid = st_graph::candidate_velocities(cfg.v_max);
        grid.push(Vec2::ZERO);
        let p_rg_hat = (goal - start.p).normalized();
        let mut best: Option<(f64, Vec2)> = None;
        for cand in grid {
            let blocked = w.obstacles.obstacles.iter().any(|o| {
                timed_esdf::in_velocity_obstacle_within(
                    cand,
                    start.p,
                    o.p,
                    o.v,
                    cfg.c_eff(),
                    VO_TTC_WINDOW,
                )
            });
            if !blocked && best.map_or(true, |(s, _)| p_rg_hat.dot(cand) > s) {
                best = Some((p_rg_hat.dot(cand), cand));
            }
        }
        let (_, expect) = best.unwrap();
        assert!(v.dist(expect) < 1e-12);
        assert!(
            !w.obstacles.obstacles.iter().any(|o| {
                timed_esdf::in_velocity_obstacle_within(
                    v,
                    start.p,
                    o.p,
                    o.v,
                    cfg.c_eff(),
                    VO_TTC_WINDOW,
                )
            })
        );
    }

    #[test]
    fn replan_loop_empty_corridor_succeeds_quickly() {
        let cfg = ScenarioConfig::default();
        let start = st((0.0, 5.0), (0.0, 0.0), 0.0);
        let trace = replan_loop(
            WorldDriver::Synthetic(empty_world()),
            start,
            PlannerKind::St,
            &cfg,
        );
        // Straight 10 m corridor, 1.8 m/s, 0.2 m goal radius: the closed
        // form gives 9.8 / 1.8 = 5.44 s, plus tick quantization.
        match trace.outcome {
            TrialOutcome::Success { arrival } => {
                assert!(
                    (5.3..6.5).contains(&arrival),
                    "arrival {arrival} outside expected window"
                );
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn replan_loop_spawn_in_collision_fails_immediately() {
        let cfg = ScenarioConfig::default();
        let w = world(vec![(Vec2::new(0.1, 5.0), Vec2::ZERO)]);
        let trace = replan_loop(
            WorldDriver::Synthetic(w),
            st((0.0, 5.0), (0.0, 0.0), 0.0),
            PlannerKind::St,
            &cfg,
        );
        assert_eq!(trace.outcome, TrialOutcome::Collision { t: 0.0 });
        assert!(trace.ticks.is_empty());
    }

    #[test]
    fn replan_loop_unreachable_goal_times_out() {
        let mut cfg = ScenarioConfig::default();
        // 10 m at 0.2 m/s needs 50 s; timeout is 30 s.
        cfg.v_max = Vec2::new(0.2, 0.2);
        let trace = replan_loop(
            WorldDriver::Synthetic(empty_world()),
            st((0.0, 5.0), (0.0, 0.0), 0.0),
            PlannerKind::St,
            &cfg,
        );
        assert_eq!(trace.outcome, TrialOutcome::Timeout);
        assert_eq!(trace.outcome.time_cost(cfg.timeout), 30.0);
    }

    #[test]
    fn replan_loop_is_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<_> = (0..12)
            .map(|_| {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                (
                    Vec2::new(rng.gen_range(2.0..9.0), rng.gen_range(0.5..9.5)),
                    Vec2::new(theta.cos(), theta.sin()) * rng.gen_range(1.2..1.8),
                )
            })
            .collect();
        let cfg = ScenarioConfig::default();
        let run = |obs: Vec<(Vec2, Vec2)>| {
            replan_loop(
                WorldDriver::Synthetic(world(obs)),
                st((0.0, 5.0), (0.0, 0.0), 0.0),
                PlannerKind::St,
                &cfg,
            )
        };
        let a = run(obs.clone());
        let b = run(obs);
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.decisions(), b.decisions());
    }

    #[test]
    fn audit_detects_crossing_penetration() {
        // Robot and obstacle swap positions within one tick; endpoint
        // clearances alone would miss the crossing.
        let w = world(vec![(Vec2::new(1.0, 5.0), Vec2::new(-10.0, 0.0))]);
        let clear = audit_tick(&w, Vec2::new(0.5, 5.0), Vec2::new(1.5, 5.0), 0.1, 0.3);
        assert!(clear < 0.0);
    }

    #[test]
    fn trace_jsonl_has_one_line_per_tick_plus_outcome() {
        let cfg = ScenarioConfig::default();
        let trace = replan_loop(
            WorldDriver::Synthetic(empty_world()),
            st((0.0, 5.0), (0.0, 0.0), 0.0),
            PlannerKind::Wg,
            &cfg,
        );
        let jsonl = trace.to_jsonl(true);
        assert_eq!(jsonl.lines().count(), trace.ticks.len() + 1);
        assert!(jsonl.contains("\"outcome\""));
        assert!(jsonl.contains("\"front_ms\":0.0"));
    }
}
