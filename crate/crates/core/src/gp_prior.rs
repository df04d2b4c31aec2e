//! Gaussian-process trajectory prior generated by the constant-velocity
//! LTV-SDE (white noise on acceleration).
//!
//! The state is `[p; v]` in R^4 with dynamics `A = [[0, I], [0, 0]]` and
//! noise injection `F = [0; I]`, the minimal model whose state matches the
//! planner's (position, velocity) waypoints. The Markov structure makes the
//! negative log density a sum of consecutive-pair energies with closed-form
//! transition and process-noise blocks.

use crate::types::{StateTime, Trajectory};
use crate::{Error, Result};
use nalgebra::{Matrix4, Vector4};

/// Prior hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct GpParams {
    /// Scalar power-spectral density multiplying the 2x2 identity. The
    /// exogenous input is fixed to zero.
    pub q: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams { q: 1.0 }
    }
}

impl GpParams {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "power-spectral density must be positive, got {q}"
            )));
        }
        Ok(GpParams { q })
    }
}

/// Stacks a state as `[p.x, p.y, v.x, v.y]`.
pub fn state_vec(s: &StateTime) -> Vector4<f64> {
    Vector4::new(s.p.x, s.p.y, s.v.x, s.v.y)
}

/// Transition matrix of the constant-velocity model:
/// `Phi(dt) = [[I, dt*I], [0, I]]` (the matrix exponential truncates exactly
/// because A is nilpotent).
pub fn transition(delta_t: f64) -> Matrix4<f64> {
    let mut phi = Matrix4::identity();
    phi[(0, 2)] = delta_t;
    phi[(1, 3)] = delta_t;
    phi
}

/// Process-noise covariance over one step:
/// `Q = q * [[dt^3/3 I, dt^2/2 I], [dt^2/2 I, dt I]]`.
pub fn process_noise_cov(delta_t: f64, params: &GpParams) -> Result<Matrix4<f64>> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidTime {
            t: delta_t,
            reason: "process noise needs a positive step",
        });
    }
    let (a, b, c) = (
        delta_t.powi(3) / 3.0,
        delta_t * delta_t / 2.0,
        delta_t,
    );
    Ok(block_sym(a, b, c) * params.q)
}

/// Closed-form inverse of [`process_noise_cov`]:
/// `Q^-1 = q^-1 * [[12/dt^3 I, -6/dt^2 I], [-6/dt^2 I, 4/dt I]]`.
pub fn process_noise_inv(delta_t: f64, params: &GpParams) -> Result<Matrix4<f64>> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidTime {
            t: delta_t,
            reason: "process noise needs a positive step",
        });
    }
    let (a, b, c) = (
        12.0 / delta_t.powi(3),
        -6.0 / (delta_t * delta_t),
        4.0 / delta_t,
    );
    Ok(block_sym(a, b, c) / params.q)
}

fn block_sym(a: f64, b: f64, c: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 0)] = a;
    m[(1, 1)] = a;
    m[(0, 2)] = b;
    m[(1, 3)] = b;
    m[(2, 0)] = b;
    m[(3, 1)] = b;
    m[(2, 2)] = c;
    m[(3, 3)] = c;
    m
}

/// One consecutive-pair factor of the sparse prior.
#[derive(Debug, Clone)]
pub struct PriorFactor {
    /// Index of the later waypoint of the pair.
    pub i: usize,
    pub phi: Matrix4<f64>,
    pub qi: Matrix4<f64>,
    pub qi_inv: Matrix4<f64>,
}

impl PriorFactor {
    pub fn new(i: usize, delta_t: f64, params: &GpParams) -> Result<Self> {
        Ok(PriorFactor {
            i,
            phi: transition(delta_t),
            qi: process_noise_cov(delta_t, params)?,
            qi_inv: process_noise_inv(delta_t, params)?,
        })
    }
}

/// Prior error of a consecutive pair: `e = Phi(dt) * prev - cur` (zero
/// exogenous input). Vanishes exactly on constant-velocity motion.
pub fn prior_error(prev: &StateTime, cur: &StateTime) -> Result<Vector4<f64>> {
    let delta_t = cur.t - prev.t;
    if !(delta_t > 0.0) {
        return Err(Error::InvalidTime {
            t: cur.t,
            reason: "prior error needs strictly increasing times",
        });
    }
    Ok(transition(delta_t) * state_vec(prev) - state_vec(cur))
}

/// Sparse negative log density: `1/2 * sum_i e_i^T Q_i^-1 e_i` over
/// consecutive pairs (normalization constant dropped).
pub fn prior_neg_log_density(traj: &Trajectory, params: &GpParams) -> f64 {
    let qi_inv = process_noise_inv(traj.dt(), params).expect("trajectory dt positive");
    let wps = traj.waypoints();
    let mut total = 0.0;
    for pair in wps.windows(2) {
        let e = prior_error(&pair[0], &pair[1]).expect("strictly increasing knot times");
        total += 0.5 * (e.transpose() * qi_inv * e)[0];
    }
    total
}
