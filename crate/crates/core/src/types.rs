//! Shared domain vocabulary: states, trajectories, obstacles, and scenario
//! configuration.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// 2D vector in meters (or m/s when used as a velocity).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector, or zero when the norm vanishes.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl std::ops::Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

/// Robot state (position, velocity) stamped with a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateTime {
    pub p: Vec2,
    pub v: Vec2,
    pub t: f64,
}

impl StateTime {
    pub fn new(p: Vec2, v: Vec2, t: f64) -> Result<Self> {
        if !p.is_finite() || !v.is_finite() || !t.is_finite() {
            return Err(Error::Degenerate("non-finite state component".into()));
        }
        if t < 0.0 {
            return Err(Error::InvalidTime {
                t,
                reason: "negative time",
            });
        }
        Ok(StateTime { p, v, t })
    }
}

/// Ordered sequence of waypoints with uniform time spacing.
///
/// Waypoint times are always regenerated as `t0 + i * dt`, never accumulated,
/// so the spacing invariant holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    waypoints: Vec<StateTime>,
    dt: f64,
}

impl Trajectory {
    /// Builds a trajectory from `(position, velocity)` pairs at times
    /// `t0 + i * dt`.
    pub fn from_states(
        t0: f64,
        dt: f64,
        states: impl IntoIterator<Item = (Vec2, Vec2)>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        let waypoints = states
            .into_iter()
            .enumerate()
            .map(|(i, (p, v))| StateTime::new(p, v, t0 + i as f64 * dt))
            .collect::<Result<Vec<_>>>()?;
        if waypoints.len() < 2 {
            return Err(Error::Degenerate(format!(
                "trajectory needs at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        Ok(Trajectory { waypoints, dt })
    }

    pub fn waypoints(&self) -> &[StateTime] {
        &self.waypoints
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].t
    }

    /// Replaces the state at `index`, keeping its time stamp.
    pub(crate) fn set_state(&mut self, index: usize, p: Vec2, v: Vec2) {
        self.waypoints[index].p = p;
        self.waypoints[index].v = v;
    }

    /// Samples the trajectory at time `t`: exact at knots, linear
    /// interpolation of position and velocity between them.
    pub fn sample(&self, t: f64) -> Result<StateTime> {
        let t0 = self.start_time();
        let tf = self.end_time();
        if t < t0 || t > tf {
            return Err(Error::OutOfRange {
                what: "sample time",
                value: t,
                lo: t0,
                hi: tf,
            });
        }
        let idx = ((t - t0) / self.dt).floor() as usize;
        let idx = idx.min(self.waypoints.len() - 2);
        let a = &self.waypoints[idx];
        let b = &self.waypoints[idx + 1];
        let alpha = ((t - a.t) / self.dt).clamp(0.0, 1.0);
        Ok(StateTime {
            p: a.p + (b.p - a.p) * alpha,
            v: a.v + (b.v - a.v) * alpha,
            t,
        })
    }
}

/// Samples a trajectory at time `t`; see [`Trajectory::sample`].
pub fn sample_trajectory(traj: &Trajectory, t: f64) -> Result<StateTime> {
    traj.sample(t)
}

/// Clips each velocity component into `[-v_max, +v_max]`.
pub fn clamp_velocity(v: Vec2, v_max: Vec2) -> Vec2 {
    Vec2::new(v.x.clamp(-v_max.x, v_max.x), v.y.clamp(-v_max.y, v_max.y))
}

/// Moving disc obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub p: Vec2,
    pub v: Vec2,
}

/// Set of disc obstacles sharing a common radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub obstacles: Vec<Obstacle>,
    /// Shared disc radius in meters.
    pub radius: f64,
}

impl ObstacleSet {
    pub fn new(obstacles: Vec<Obstacle>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "obstacle radius must be positive, got {radius}"
            )));
        }
        let mut ids: Vec<u32> = obstacles.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != obstacles.len() {
            return Err(Error::InvalidConfig("duplicate obstacle id".into()));
        }
        for o in &obstacles {
            if !o.p.is_finite() || !o.v.is_finite() {
                return Err(Error::Degenerate("non-finite obstacle state".into()));
            }
        }
        Ok(ObstacleSet { obstacles, radius })
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }
}

/// Scenario configuration shared by the planner, simulator, and CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub workspace_extent: Vec2,
    pub v_max: Vec2,
    /// Obstacle radius used for planning clearance (C_s).
    pub safe_distance: f64,
    pub robot_radius: f64,
    /// Safety margin of the obstacle likelihood hinge.
    pub epsilon: f64,
    pub dt: f64,
    /// Front-end search time budget, seconds.
    pub horizon: f64,
    /// Trial timeout, seconds; failures are accounted at this value.
    pub timeout: f64,
    pub start: Vec2,
    pub goal: Vec2,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            workspace_extent: Vec2::new(10.0, 10.0),
            v_max: Vec2::new(1.8, 1.8),
            safe_distance: 0.3,
            robot_radius: 0.0,
            epsilon: 0.2,
            dt: 0.1,
            horizon: 10.0,
            timeout: 30.0,
            start: Vec2::new(0.0, 5.0),
            goal: Vec2::new(10.0, 5.0),
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.horizon < self.dt {
            return fail(format!(
                "horizon {} must be at least dt {}",
                self.horizon, self.dt
            ));
        }
        if self.epsilon < 0.0 {
            return fail(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.timeout > 0.0) {
            return fail(format!("timeout must be positive, got {}", self.timeout));
        }
        if !(self.v_max.x > 0.0 && self.v_max.y > 0.0) {
            return fail("v_max must be positive per axis".into());
        }
        if !(self.workspace_extent.x > 0.0 && self.workspace_extent.y > 0.0) {
            return fail("workspace_extent must be positive per axis".into());
        }
        if !(self.safe_distance > 0.0) {
            return fail("safe_distance must be positive".into());
        }
        if self.robot_radius < 0.0 {
            return fail("robot_radius must be non-negative".into());
        }
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !self.in_workspace(p) {
                return fail(format!("{name} ({}, {}) outside workspace", p.x, p.y));
            }
        }
        Ok(())
    }

    /// Inflated clearance radius: obstacle radius plus robot radius.
    pub fn c_eff(&self) -> f64 {
        self.safe_distance + self.robot_radius
    }

    pub fn in_workspace(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.workspace_extent.x && p.y >= 0.0 && p.y <= self.workspace_extent.y
    }

    /// Checks the per-axis speed bound and workspace containment of a state.
    pub fn check_state(&self, s: &StateTime) -> Result<()> {
        if s.v.x.abs() > self.v_max.x + 1e-9 || s.v.y.abs() > self.v_max.y + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "velocity ({}, {}) exceeds v_max ({}, {})",
                s.v.x, s.v.y, self.v_max.x, self.v_max.y
            )));
        }
        if !self.in_workspace(s.p) {
            return Err(Error::InvalidConfig(format!(
                "position ({}, {}) outside workspace",
                s.p.x, s.p.y
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
