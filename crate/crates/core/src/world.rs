//! Moving-obstacle kinematics: constant-velocity extrapolation, clearance
//! queries, and the antipodal wraparound rule of the simulation environment.

use crate::types::{ObstacleSet, Vec2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Clearance reported when no obstacle exists.
pub const CLEARANCE_INF: f64 = f64::INFINITY;

/// Immutable snapshot of the world at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub obstacles: ObstacleSet,
    pub t_now: f64,
    pub workspace_extent: Vec2,
}

impl WorldSnapshot {
    /// Predicted position of obstacle `idx` at time `t` under constant
    /// velocity. No wrap is applied: the planner does not know about
    /// boundary teleports.
    pub fn obstacle_position(&self, idx: usize, t: f64) -> Vec2 {
        let o = &self.obstacles.obstacles[idx];
        o.p + o.v * (t - self.t_now)
    }

    /// Constant-velocity extrapolation of every obstacle to time `t`.
    pub fn extrapolate(&self, t: f64) -> Result<Vec<Vec2>> {
        if t < self.t_now {
            return Err(Error::InvalidTime {
                t,
                reason: "extrapolation target before snapshot time",
            });
        }
        Ok((0..self.obstacles.len())
            .map(|i| self.obstacle_position(i, t))
            .collect())
    }

    /// Minimum of `|p - position_i(t)| - c_eff` over obstacles; negative
    /// means the state-time is inadmissible. Returns [`CLEARANCE_INF`] when
    /// the obstacle set is empty.
    pub fn min_clearance(&self, p: Vec2, t: f64, c_eff: f64) -> Result<f64> {
        if t < self.t_now {
            return Err(Error::InvalidTime {
                t,
                reason: "clearance query before snapshot time",
            });
        }
        let mut best = CLEARANCE_INF;
        for i in 0..self.obstacles.len() {
            let d = p.dist(self.obstacle_position(i, t)) - c_eff;
            if d < best {
                best = d;
            }
        }
        Ok(best)
    }

    /// Teleports every obstacle that left the workspace to the antipodal
    /// boundary point: the position is reflected through the workspace
    /// center, then the exited coordinate is set exactly on the entry
    /// boundary. Velocity is unchanged. Simulator-only; the planner's
    /// predictive model never wraps.
    pub fn wrap_obstacles(&self) -> WorldSnapshot {
        let e = self.workspace_extent;
        let mut out = self.clone();
        for o in &mut out.obstacles.obstacles {
            let exited_x = o.p.x < 0.0 || o.p.x > e.x;
            let exited_y = o.p.y < 0.0 || o.p.y > e.y;
            if !(exited_x || exited_y) {
                continue;
            }
            let mut q = Vec2::new(e.x - o.p.x, e.y - o.p.y);
            if exited_x {
                q.x = if o.p.x > e.x { 0.0 } else { e.x };
            }
            if exited_y {
                q.y = if o.p.y > e.y { 0.0 } else { e.y };
            }
            // The reflected coordinate of a non-exited axis is already
            // inside the box; clamp guards rounding at the boundary.
            q.x = q.x.clamp(0.0, e.x);
            q.y = q.y.clamp(0.0, e.y);
            o.p = q;
        }
        out
    }
}
