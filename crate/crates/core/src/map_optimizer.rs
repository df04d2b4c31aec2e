//! MAP trajectory optimization: prior factors over consecutive waypoint
//! pairs plus per-waypoint obstacle hinge factors, minimized by damped
//! Gauss-Newton (Levenberg-Marquardt).
//!
//! The normal equations are block tridiagonal (each prior factor couples two
//! neighboring waypoints, each obstacle factor one), so steps are solved with
//! a block Thomas factorization in O(n) instead of a dense solve.

use crate::gp_prior::{self, GpParams};
use crate::timed_esdf::{hinge, TimedEsdf};
use crate::types::{Trajectory, Vec2};
use crate::{Error, Result};
use nalgebra::{Cholesky, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// Default shared obstacle-factor weight (standard deviation, meters).
pub const DEFAULT_SIGMA_OBS: f64 = 0.05;
/// Default LM iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 30;
/// Default initial damping.
pub const DEFAULT_LAMBDA0: f64 = 1e-4;

const LAMBDA_MAX: f64 = 1e12;
const REL_OBJECTIVE_TOL: f64 = 1e-6;
const STEP_NORM_TOL: f64 = 1e-8;

/// Factor layout over a trajectory: both endpoints fixed, one prior factor
/// per consecutive pair, one obstacle factor per free waypoint.
pub struct FactorGraph<'a> {
    esdf: &'a TimedEsdf,
    params: GpParams,
    sigma_obs: f64,
    n: usize,
    whitener: Matrix4<f64>,
    phi: Matrix4<f64>,
}

impl<'a> FactorGraph<'a> {
    pub fn new(
        shape: &Trajectory,
        esdf: &'a TimedEsdf,
        params: GpParams,
        sigma_obs: f64,
    ) -> Result<Self> {
        if !(sigma_obs > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_obs must be positive, got {sigma_obs}"
            )));
        }
        let n = shape.len();
        for w in &shape.waypoints()[1..n - 1] {
            if esdf.slice_index(w.t).is_err() {
                return Err(Error::OutOfRange {
                    what: "waypoint time vs field horizon",
                    value: w.t,
                    lo: esdf.t0(),
                    hi: esdf.t0() + esdf.horizon(),
                });
            }
        }
        let qi_inv = gp_prior::process_noise_inv(shape.dt(), &params)?;
        let chol = Cholesky::new(qi_inv)
            .ok_or_else(|| Error::Degenerate("process noise inverse not PD".into()))?;
        Ok(FactorGraph {
            esdf,
            params,
            sigma_obs,
            n,
            // r = L^T e gives |r|^2 = e^T Qi^-1 e.
            whitener: chol.l().transpose(),
            phi: gp_prior::transition(shape.dt()),
        })
    }

    pub fn n_waypoints(&self) -> usize {
        self.n
    }

    pub fn n_free(&self) -> usize {
        self.n - 2
    }

    /// Stacked residual dimension: 4 per pair plus 1 per free waypoint.
    pub fn residual_dim(&self) -> usize {
        4 * (self.n - 1) + (self.n - 2)
    }

    pub fn sigma_obs(&self) -> f64 {
        self.sigma_obs
    }

    pub fn esdf(&self) -> &TimedEsdf {
        self.esdf
    }

    fn check_shape(&self, traj: &Trajectory) -> Result<()> {
        if traj.len() != self.n {
            return Err(Error::InvalidConfig(format!(
                "trajectory length {} does not match graph ({})",
                traj.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// MAP objective: prior negative log density plus the weighted squared
/// hinge over free waypoints.
pub fn objective(traj: &Trajectory, graph: &FactorGraph) -> Result<f64> {
    graph.check_shape(traj)?;
    let mut total = gp_prior::prior_neg_log_density(traj, &graph.params);
    let w = 0.5 / (graph.sigma_obs * graph.sigma_obs);
    for wp in &traj.waypoints()[1..traj.len() - 1] {
        let d = graph.esdf.query(wp)?.d;
        let h = hinge(d, graph.esdf.epsilon());
        total += w * h * h;
    }
    Ok(total)
}

/// Sparse Jacobian in factor-block form. Rows are ordered prior factors
/// first (4 rows per pair `(i-1, i)`, i = 1..n-1), then obstacle factors
/// (1 row per free waypoint). Columns cover free waypoints only.
#[derive(Debug, Clone)]
pub struct SparseJacobian {
    /// Whitened prior blocks: `(i, d r_i / d xi_{i-1}, d r_i / d xi_i)`.
    /// Blocks touching a fixed endpoint are dropped at assembly.
    pub prior_blocks: Vec<(usize, Matrix4<f64>, Matrix4<f64>)>,
    /// Obstacle rows: `(i, d r / d xi_i)` for free waypoints, zero when the
    /// hinge is inactive.
    pub obstacle_rows: Vec<(usize, Vector4<f64>)>,
    n: usize,
}

impl SparseJacobian {
    /// Dense form for verification; columns are the free waypoints stacked
    /// as 4-blocks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n_free = self.n - 2;
        let rows = 4 * (self.n - 1) + n_free;
        let mut j = nalgebra::DMatrix::zeros(rows, 4 * n_free);
        let col_of = |wp: usize| (wp - 1) * 4; // waypoint index -> column block
        for &(i, ref j_prev, ref j_cur) in &self.prior_blocks {
            let row = 4 * (i - 1);
            if i - 1 >= 1 {
                j.view_mut((row, col_of(i - 1)), (4, 4))
                    .copy_from(j_prev);
            }
            if i <= self.n - 2 {
                j.view_mut((row, col_of(i)), (4, 4)).copy_from(j_cur);
            }
        }
        for &(i, ref g) in &self.obstacle_rows {
            let row = 4 * (self.n - 1) + (i - 1);
            j.view_mut((row, col_of(i)), (1, 4))
                .copy_from(&g.transpose());
        }
        j
    }
}

/// Whitened residual vector and sparse Jacobian; `0.5 * |r|^2` equals the
/// objective exactly.
pub fn residuals_and_jacobian(
    traj: &Trajectory,
    graph: &FactorGraph,
) -> Result<(DVector<f64>, SparseJacobian)> {
    graph.check_shape(traj)?;
    let n = graph.n;
    let wps = traj.waypoints();
    let mut r = DVector::zeros(graph.residual_dim());
    let mut prior_blocks = Vec::with_capacity(n - 1);
    let mut obstacle_rows = Vec::with_capacity(n - 2);
    let lt = &graph.whitener;

    for i in 1..n {
        let e = gp_prior::prior_error(&wps[i - 1], &wps[i])?;
        let ri = lt * e;
        r.rows_mut(4 * (i - 1), 4).copy_from(&ri);
        prior_blocks.push((i, lt * graph.phi, -lt));
    }

    let inv_sigma = 1.0 / graph.sigma_obs;
    for i in 1..n - 1 {
        let q = graph.esdf.query(&wps[i])?;
        let h = hinge(q.d, graph.esdf.epsilon());
        r[4 * (n - 1) + (i - 1)] = inv_sigma * h;
        let row = if q.d < graph.esdf.epsilon() {
            // dh/dd = -1 on the active side
            Vector4::new(-q.grad_p.x, -q.grad_p.y, -q.grad_v.x, -q.grad_v.y) * inv_sigma
        } else {
            Vector4::zeros()
        };
        obstacle_rows.push((i, row));
    }

    Ok((
        r,
        SparseJacobian {
            prior_blocks,
            obstacle_rows,
            n,
        },
    ))
}

/// Solve report for one optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value;
    /// non-increasing by construction.
    pub trace: Vec<f64>,
}

/// Symmetric block-tridiagonal system over 4-vector unknowns.
struct BlockTridiag {
    diag: Vec<Matrix4<f64>>,
    upper: Vec<Matrix4<f64>>,
}

impl BlockTridiag {
    /// Block Thomas solve via per-block Cholesky; None when a pivot block is
    /// not positive definite.
    fn solve(&self, rhs: &[Vector4<f64>]) -> Option<Vec<Vector4<f64>>> {
        let m = self.diag.len();
        let mut chols: Vec<Cholesky<f64, nalgebra::U4>> = Vec::with_capacity(m);
        let mut y: Vec<Vector4<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let (c, b) = if i == 0 {
                (self.diag[0], rhs[0])
            } else {
                // W_i = U_{i-1}^T C_{i-1}^{-1}
                let wi = chols[i - 1]
                    .solve(&self.upper[i - 1])
                    .transpose();
                let c = self.diag[i] - wi * self.upper[i - 1];
                let b = rhs[i] - wi * y[i - 1];
                (c, b)
            };
            chols.push(Cholesky::new(c)?);
            y.push(b);
        }
        let mut x = vec![Vector4::zeros(); m];
        x[m - 1] = chols[m - 1].solve(&y[m - 1]);
        for i in (0..m - 1).rev() {
            x[i] = chols[i].solve(&(y[i] - self.upper[i] * x[i + 1]));
        }
        Some(x)
    }
}

/// Assembles the Gauss-Newton normal equations `J^T J` (block tridiagonal
/// over free waypoints) and gradient `J^T r`.
fn normal_equations(
    jac: &SparseJacobian,
    r: &DVector<f64>,
) -> (BlockTridiag, Vec<Vector4<f64>>) {
    let n = jac.n;
    let n_free = n - 2;
    let mut diag = vec![Matrix4::zeros(); n_free];
    let mut upper = vec![Matrix4::zeros(); n_free.saturating_sub(1)];
    let mut grad = vec![Vector4::zeros(); n_free];

    for &(i, ref j_prev, ref j_cur) in &jac.prior_blocks {
        let ri = r.rows(4 * (i - 1), 4).into_owned();
        // free-column index of waypoint k is k - 1
        if i - 1 >= 1 {
            let c = i - 2;
            diag[c] += j_prev.transpose() * j_prev;
            grad[c] += j_prev.transpose() * &ri;
        }
        if i <= n - 2 {
            let c = i - 1;
            diag[c] += j_cur.transpose() * j_cur;
            grad[c] += j_cur.transpose() * &ri;
        }
        if i - 1 >= 1 && i <= n - 2 {
            upper[i - 2] += j_prev.transpose() * j_cur;
        }
    }
    for &(i, ref g) in &jac.obstacle_rows {
        let ri = r[4 * (n - 1) + (i - 1)];
        let c = i - 1;
        diag[c] += g * g.transpose();
        grad[c] += g * ri;
    }
    (BlockTridiag { diag, upper }, grad)
}

/// Levenberg-Marquardt minimization of the MAP objective over the free
/// waypoints. Endpoints are never touched. Accepted steps divide the
/// damping by 3, rejected steps multiply it by 3; stops on relative
/// objective change below 1e-6, step norm below 1e-8, or `max_iters`.
pub fn optimize(
    init: &Trajectory,
    graph: &FactorGraph,
    max_iters: usize,
    lambda0: f64,
) -> Result<(Trajectory, SolveReport)> {
    graph.check_shape(init)?;
    let mut traj = init.clone();
    let initial_objective = objective(&traj, graph)?;
    let mut report = SolveReport {
        iterations: 0,
        initial_objective,
        final_objective: initial_objective,
        converged: false,
        trace: vec![initial_objective],
    };
    let n_free = graph.n_free();
    if n_free == 0 || max_iters == 0 {
        report.converged = n_free == 0;
        return Ok((traj, report));
    }

    let mut lambda = lambda0;
    let mut current = initial_objective;
    let (mut r, mut jac) = residuals_and_jacobian(&traj, graph)?;

    while report.iterations < max_iters {
        report.iterations += 1;
        let (h, grad) = normal_equations(&jac, &r);

        // Damped system: H + lambda * diag(H).
        let mut damped = BlockTridiag {
            diag: h.diag.clone(),
            upper: h.upper.clone(),
        };
        for block in &mut damped.diag {
            for k in 0..4 {
                block[(k, k)] += lambda * block[(k, k)].max(1e-12);
            }
        }
        let rhs: Vec<Vector4<f64>> = grad.iter().map(|g| -g).collect();
        let Some(delta) = damped.solve(&rhs) else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                report.final_objective = current;
                return Err(Error::SolverFailure {
                    report: Box::new(report),
                });
            }
            continue;
        };

        let step_norm: f64 = delta.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
        let mut candidate = traj.clone();
        for (k, d) in delta.iter().enumerate() {
            let wp = candidate.waypoints()[k + 1];
            candidate.set_state(
                k + 1,
                wp.p + Vec2::new(d[0], d[1]),
                wp.v + Vec2::new(d[2], d[3]),
            );
        }
        let trial = objective(&candidate, graph)?;

        if trial < current {
            traj = candidate;
            let improvement = current - trial;
            current = trial;
            report.trace.push(current);
            lambda = (lambda / 3.0).max(1e-12);
            if improvement <= REL_OBJECTIVE_TOL * current.max(1e-12)
                || step_norm < STEP_NORM_TOL
            {
                report.converged = true;
                break;
            }
            let refreshed = residuals_and_jacobian(&traj, graph)?;
            r = refreshed.0;
            jac = refreshed.1;
        } else {
            // A vanishing rejected step means the iterate is stationary.
            if step_norm < STEP_NORM_TOL {
                report.converged = true;
                break;
            }
            lambda *= 3.0;
            if lambda > LAMBDA_MAX {
                report.converged = true;
                break;
            }
        }
    }

    report.final_objective = current;
    Ok((traj, report))
}
