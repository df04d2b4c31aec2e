//! State-time trajectory planning for a holonomic disc robot among
//! constant-velocity moving obstacles.
//!
//! The pipeline has two stages. A front end searches a time-sliced dual graph
//! built over per-slice Delaunay triangulations of the predicted obstacle
//! positions ([`st_graph`]) and returns a near-time-optimal piecewise
//! constant-velocity path. The back end densifies that path and refines it by
//! solving a MAP problem ([`map_optimizer`]) that combines a Gaussian-process
//! smoothness prior ([`gp_prior`]) with an obstacle likelihood backed by a
//! time-sliced signed distance field ([`timed_esdf`]).
//!
//! [`planner`] wires the stages into a receding-horizon replanning loop with
//! wait-and-go and velocity-obstacle baselines, [`sim_harness`] reproduces the
//! control experiments, and [`dataset_replay`] feeds recorded pedestrian
//! tracks through the same loop.

pub mod dataset_replay;
mod error;
pub mod gp_prior;
pub mod map_optimizer;
pub mod planner;
pub mod sim_harness;
pub mod st_graph;
pub mod timed_esdf;
pub mod triangulation;
pub mod types;
pub mod world;

pub use error::{Error, Result};
pub use types::{Obstacle, ObstacleSet, ScenarioConfig, StateTime, Trajectory, Vec2};
pub use world::WorldSnapshot;
