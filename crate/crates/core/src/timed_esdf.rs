//! Time-sliced signed distance field over swept obstacle segments, with
//! state-time distance and gradient queries, the hinge likelihood, and the
//! classic velocity-obstacle membership test.
//!
//! Within a slice each obstacle sweeps a line segment. A query holds the
//! robot's own within-slice motion against that sweep: the distance is the
//! closed-form minimum over the slice of the relative-motion separation,
//! evaluated analytically rather than from a voxel grid (obstacles are discs
//! on lines, so the field is exact).

use crate::types::{StateTime, Vec2};
use crate::world::{WorldSnapshot, CLEARANCE_INF};
use crate::{Error, Result};

/// One obstacle's swept segment within a slice.
#[derive(Debug, Clone, Copy)]
pub struct ObstacleSegment {
    /// Obstacle position at the slice start.
    pub a: Vec2,
    /// Obstacle position at the slice end (`a + v * dt`).
    pub b: Vec2,
    /// Combined clearance radius (obstacle plus robot).
    pub radius: f64,
}

impl ObstacleSegment {
    fn velocity(&self, dt: f64) -> Vec2 {
        (self.b - self.a) / dt
    }
}

/// Minimum of `|w + u * tau|` over `tau in [0, tau_max]`, with the
/// minimizing offset. The squared distance is a convex quadratic, so the
/// minimizer is its clamped stationary point; ties resolve to `tau = 0`.
pub(crate) fn min_dist_linear(w: Vec2, u: Vec2, tau_max: f64) -> (f64, f64) {
    let uu = u.norm_sq();
    let tau = if uu > 0.0 {
        (-w.dot(u) / uu).clamp(0.0, tau_max)
    } else {
        0.0
    };
    ((w + u * tau).norm(), tau)
}

/// Distance query result.
#[derive(Debug, Clone, Copy)]
pub struct DistanceResult {
    /// Signed clearance; negative means the combined radius is violated.
    pub d: f64,
    /// d(d)/d(p_r): unit vector from the nearest obstacle point to the
    /// nearest robot point (zero on exact contact or an empty field).
    pub grad_p: Vec2,
    /// d(d)/d(v) = tau_star * grad_p.
    pub grad_v: Vec2,
    /// Offset within the slice at which the minimum is attained.
    pub tau_star: f64,
}

/// Per-time-slice set of swept obstacle segments.
#[derive(Debug, Clone)]
pub struct TimedEsdf {
    slices: Vec<Vec<ObstacleSegment>>,
    t0: f64,
    dt: f64,
    epsilon: f64,
}

impl TimedEsdf {
    /// Builds `ceil(horizon / dt)` slices starting at `t0`; slice `i` covers
    /// `[t0 + i*dt, t0 + (i+1)*dt)` and holds each obstacle's segment between
    /// the extrapolated slice-boundary positions.
    pub fn build(
        world: &WorldSnapshot,
        t0: f64,
        horizon: f64,
        dt: f64,
        c_eff: f64,
        epsilon: f64,
    ) -> Self {
        let n_slices = ((horizon / dt).ceil() as usize).max(1);
        let slices = (0..n_slices)
            .map(|i| {
                let t_lo = t0 + i as f64 * dt;
                world
                    .obstacles
                    .obstacles
                    .iter()
                    .map(|o| {
                        let a = o.p + o.v * (t_lo - world.t_now);
                        ObstacleSegment {
                            a,
                            b: a + o.v * dt,
                            radius: c_eff,
                        }
                    })
                    .collect()
            })
            .collect();
        TimedEsdf {
            slices,
            t0,
            dt,
            epsilon,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn horizon(&self) -> f64 {
        self.slices.len() as f64 * self.dt
    }

    pub fn slice_segments(&self, i: usize) -> &[ObstacleSegment] {
        &self.slices[i]
    }

    pub fn slice_index(&self, t: f64) -> Result<usize> {
        let rel = t - self.t0;
        if rel < 0.0 || rel >= self.horizon() {
            return Err(Error::OutOfRange {
                what: "query time",
                value: t,
                lo: self.t0,
                hi: self.t0 + self.horizon(),
            });
        }
        Ok(((rel / self.dt).floor() as usize).min(self.slices.len() - 1))
    }

    /// State-time distance query. The waypoint guards its whole slice: the
    /// robot position is anchored at the slice start and both robot and
    /// obstacle move at their own velocities over `tau in [0, dt]` (closed
    /// interval, so consecutive slices leave no gap). Ties between obstacles
    /// resolve to the lowest-indexed one.
    pub fn query(&self, s: &StateTime) -> Result<DistanceResult> {
        let slice = &self.slices[self.slice_index(s.t)?];
        let mut best = DistanceResult {
            d: CLEARANCE_INF,
            grad_p: Vec2::ZERO,
            grad_v: Vec2::ZERO,
            tau_star: 0.0,
        };
        for seg in slice {
            let w = s.p - seg.a;
            let u = s.v - seg.velocity(self.dt);
            let (sep, tau) = min_dist_linear(w, u, self.dt);
            let d = sep - seg.radius;
            if d < best.d {
                let diff = w + u * tau;
                let grad_p = if sep > 1e-12 { diff / sep } else { Vec2::ZERO };
                best = DistanceResult {
                    d,
                    grad_p,
                    grad_v: grad_p * tau,
                    tau_star: tau,
                };
            }
        }
        Ok(best)
    }

    /// Samples `query` on a uniform grid of one slice (robot velocity zero)
    /// as `x,y,d` CSV rows, for rendering heatmaps.
    pub fn sample_grid_csv(&self, slice: usize, extent: Vec2, resolution: f64) -> Result<String> {
        if slice >= self.slices.len() {
            return Err(Error::OutOfRange {
                what: "slice index",
                value: slice as f64,
                lo: 0.0,
                hi: self.slices.len() as f64 - 1.0,
            });
        }
        let t = self.t0 + slice as f64 * self.dt;
        let mut out = String::from("x,y,d\n");
        let (nx, ny) = (
            (extent.x / resolution).round() as usize,
            (extent.y / resolution).round() as usize,
        );
        for iy in 0..=ny {
            for ix in 0..=nx {
                let p = Vec2::new(ix as f64 * resolution, iy as f64 * resolution);
                let r = self.query(&StateTime { p, v: Vec2::ZERO, t })?;
                out.push_str(&format!("{},{},{:.6}\n", p.x, p.y, r.d));
            }
        }
        Ok(out)
    }
}

/// Hinge loss of the obstacle likelihood: `max(epsilon - d, 0)`, flat (zero
/// value and zero subgradient) at and above the margin.
pub fn hinge(d: f64, epsilon: f64) -> f64 {
    (epsilon - d).max(0.0)
}

/// Classic velocity-obstacle membership: true iff some `t > 0` brings the
/// relative motion within the combined radius (a ray-versus-disc test).
pub fn in_velocity_obstacle(v: Vec2, p_r: Vec2, p_k: Vec2, v_k: Vec2, c_eff: f64) -> bool {
    in_velocity_obstacle_within(v, p_r, p_k, v_k, c_eff, f64::INFINITY)
}

/// Velocity-obstacle membership truncated to collision times `t <= window`.
pub fn in_velocity_obstacle_within(
    v: Vec2,
    p_r: Vec2,
    p_k: Vec2,
    v_k: Vec2,
    c_eff: f64,
    window: f64,
) -> bool {
    let w = p_r - p_k;
    if w.norm() <= c_eff {
        return true;
    }
    let u = v - v_k;
    let uu = u.norm_sq();
    if uu == 0.0 {
        return false;
    }
    let tau = (-w.dot(u) / uu).clamp(0.0, window);
    if tau <= 0.0 {
        return false;
    }
    (w + u * tau).norm() <= c_eff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Obstacle, ObstacleSet};
    use proptest::prelude::*;
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

    /// Dense tau-sampling oracle for the slice minimum.
    fn dense_min(field: &TimedEsdf, s: &StateTime, samples: usize) -> f64 {
        let i = field.slice_index(s.t).unwrap();
        let mut best = f64::INFINITY;
        for seg in field.slice_segments(i) {
            let vk = (seg.b - seg.a) / field.dt();
            for k in 0..=samples {
                let tau = field.dt() * k as f64 / samples as f64;
                let d = ((s.p + s.v * tau) - (seg.a + vk * tau)).norm() - seg.radius;
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn build_static_obstacle_degenerate_segments() {
        let w = world(vec![(Vec2::new(1.0, 0.0), Vec2::ZERO)]);
        let f = TimedEsdf::build(&w, 0.0, 1.0, 0.1, 0.3, 0.2);
        assert_eq!(f.n_slices(), 10);
        for i in 0..f.n_slices() {
            let seg = f.slice_segments(i)[0];
            assert_eq!(seg.a, seg.b);
        }
    }

    #[test]
    fn build_moving_obstacle_segment_endpoints() {
        let w = world(vec![(Vec2::new(2.0, 1.0), Vec2::new(1.0, 0.0))]);
        let f = TimedEsdf::build(&w, 0.0, 0.5, 0.1, 0.3, 0.2);
        let seg = f.slice_segments(0)[0];
        assert_eq!(seg.a, Vec2::new(2.0, 1.0));
        assert!(seg.b.dist(Vec2::new(2.1, 1.0)) < 1e-12);
        assert_eq!(f.n_slices(), 5);
    }

    #[test]
    fn query_static_geometry() {
        let w = world(vec![(Vec2::new(1.0, 0.0), Vec2::ZERO)]);
        let f = TimedEsdf::build(&w, 0.0, 1.0, 0.1, 0.3, 0.2);
        let r = f
            .query(&StateTime {
                p: Vec2::ZERO,
                v: Vec2::ZERO,
                t: 0.0,
            })
            .unwrap();
        assert!((r.d - 0.7).abs() < 1e-12);
        assert!(r.grad_p.dist(Vec2::new(-1.0, 0.0)) < 1e-12);
        assert_eq!(r.grad_v, Vec2::ZERO);
        assert_eq!(r.tau_star, 0.0);
    }

    #[test]
    fn query_head_on_approach() {
        let w = world(vec![(Vec2::new(2.0, 0.0), Vec2::new(-1.0, 0.0))]);
        let s = StateTime {
            p: Vec2::ZERO,
            v: Vec2::new(1.0, 0.0),
            t: 0.0,
        };
        // dt = 0.5: the closing relative motion ends the slice 1 m away.
        let f = TimedEsdf::build(&w, 0.0, 0.5, 0.5, 0.3, 0.2);
        let r = f.query(&s).unwrap();
        assert!((r.d - 0.7).abs() < 1e-9, "d = {}", r.d);
        assert!((r.tau_star - 0.5).abs() < 1e-12);
        assert!((r.d - dense_min(&f, &s, 10_000)).abs() < 1e-6);

        // dt = 1.0: contact at the end of the slice.
        let f = TimedEsdf::build(&w, 0.0, 1.0, 1.0, 0.3, 0.2);
        let r = f.query(&s).unwrap();
        assert!((r.d + 0.3).abs() < 1e-9, "d = {}", r.d);
        assert!((r.tau_star - 1.0).abs() < 1e-12);
        assert!((r.d - dense_min(&f, &s, 10_000)).abs() < 1e-6);
    }

    #[test]
    fn query_outside_horizon_errors() {
        let w = world(vec![(Vec2::new(1.0, 0.0), Vec2::ZERO)]);
        let f = TimedEsdf::build(&w, 0.0, 1.0, 0.1, 0.3, 0.2);
        let s = StateTime {
            p: Vec2::ZERO,
            v: Vec2::ZERO,
            t: 1.0,
        };
        assert!(matches!(f.query(&s), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn empty_field_reports_infinite_clearance() {
        let f = TimedEsdf::build(&world(vec![]), 0.0, 1.0, 0.1, 0.3, 0.2);
        let r = f
            .query(&StateTime {
                p: Vec2::new(5.0, 5.0),
                v: Vec2::ZERO,
                t: 0.5,
            })
            .unwrap();
        assert_eq!(r.d, CLEARANCE_INF);
        assert_eq!(hinge(r.d, 0.2), 0.0);
    }

    #[test]
    fn query_matches_dense_sampling_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let m = rng.gen_range(1..6);
            let obs: Vec<_> = (0..m)
                .map(|_| {
                    (
                        Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
                        Vec2::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.8..1.8)),
                    )
                })
                .collect();
            let f = TimedEsdf::build(&world(obs), 0.0, 1.0, 0.1, 0.3, 0.2);
            let s = StateTime {
                p: Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
                v: Vec2::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.8..1.8)),
                t: rng.gen_range(0.0..1.0),
            };
            let r = f.query(&s).unwrap();
            let oracle = dense_min(&f, &s, 10_000);
            assert!(
                (r.d - oracle).abs() < 1e-6,
                "query {} vs oracle {oracle}",
                r.d
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 200 {
            let obs: Vec<_> = (0..3)
                .map(|_| {
                    (
                        Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
                        Vec2::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.8..1.8)),
                    )
                })
                .collect();
            let f = TimedEsdf::build(&world(obs), 0.0, 1.0, 0.1, 0.3, 0.2);
            let s = StateTime {
                p: Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
                v: Vec2::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.8..1.8)),
                t: rng.gen_range(0.0..1.0),
            };
            if !nondegenerate(&f, &s) {
                continue;
            }
            checked += 1;
            let r = f.query(&s).unwrap();
            let h = 1e-6;
            for k in 0..4 {
                let mut s2 = s;
                let mut s3 = s;
                match k {
                    0 => {
                        s2.p.x += h;
                        s3.p.x -= h;
                    }
                    1 => {
                        s2.p.y += h;
                        s3.p.y -= h;
                    }
                    2 => {
                        s2.v.x += h;
                        s3.v.x -= h;
                    }
                    _ => {
                        s2.v.y += h;
                        s3.v.y -= h;
                    }
                }
                let fd = (f.query(&s2).unwrap().d - f.query(&s3).unwrap().d) / (2.0 * h);
                let analytic = match k {
                    0 => r.grad_p.x,
                    1 => r.grad_p.y,
                    2 => r.grad_v.x,
                    _ => r.grad_v.y,
                };
                let rel = (fd - analytic).abs() / fd.abs().max(1.0);
                assert!(rel < 1e-4, "component {k}: fd {fd} analytic {analytic}");
            }
        }
    }

    /// Rejects configurations near gradient-nondifferentiable ties: a
    /// nearest-obstacle switch, an interior/clamped tau transition, or
    /// contact.
    fn nondegenerate(f: &TimedEsdf, s: &StateTime) -> bool {
        let i = match f.slice_index(s.t) {
            Ok(i) => i,
            Err(_) => return false,
        };
        let mut dists: Vec<f64> = Vec::new();
        for seg in f.slice_segments(i) {
            let w = s.p - seg.a;
            let u = s.v - (seg.b - seg.a) / f.dt();
            let uu = u.norm_sq();
            let tau_raw = if uu > 0.0 { -w.dot(u) / uu } else { 0.0 };
            if (tau_raw - 0.0).abs() < 1e-3 || (tau_raw - f.dt()).abs() < 1e-3 {
                // fine when the unclamped stationary point is far outside
                if tau_raw > -1e-3 && tau_raw < f.dt() + 1e-3 {
                    return false;
                }
            }
            let (sep, _) = min_dist_linear(w, u, f.dt());
            if sep < 1e-3 {
                return false;
            }
            dists.push(sep - seg.radius);
        }
        dists.sort_by(f64::total_cmp);
        dists.len() < 2 || dists[1] - dists[0] > 1e-3
    }

    #[test]
    fn hinge_cases() {
        assert!((hinge(0.2, 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(hinge(0.6, 0.5), 0.0);
        assert_eq!(hinge(0.5, 0.5), 0.0);
    }

    #[test]
    fn velocity_obstacle_cases() {
        let p_r = Vec2::ZERO;
        let p_k = Vec2::new(2.0, 0.0);
        let v_k = Vec2::ZERO;
        assert!(in_velocity_obstacle(Vec2::new(1.0, 0.0), p_r, p_k, v_k, 0.5));
        assert!(!in_velocity_obstacle(Vec2::new(0.0, 1.0), p_r, p_k, v_k, 0.5));
        // ray-to-center distance 0.6/sqrt(1.09) ~ 0.574 > 0.5
        assert!(!in_velocity_obstacle(Vec2::new(1.0, 0.3), p_r, p_k, v_k, 0.5));
    }

    #[test]
    fn velocity_obstacle_matches_sampled_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p_r = Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
            let p_k = Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
            let v = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let v_k = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if in_velocity_obstacle(v, p_r, p_k, v_k, 0.5) {
                let w = p_r - p_k;
                let u = v - v_k;
                if u.norm() < 0.05 {
                    continue;
                }
                // The relative separation grows past t = |w|/|u|, so dense
                // sampling up to there covers any minimum.
                let t_hi = w.norm() / u.norm() + 1.0;
                let sampled = (1..=200_000)
                    .map(|k| (w + u * (t_hi * k as f64 / 200_000.0)).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    sampled <= 0.5 + 1e-3 || w.norm() <= 0.5,
                    "membership without sampled contact: min {sampled}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn distance_is_one_lipschitz_in_position(
            px in 0.0..10.0, py in 0.0..10.0,
            qx in 0.0..10.0, qy in 0.0..10.0,
            vx in -1.8..1.8, vy in -1.8..1.8,
        ) {
            let w = world(vec![
                (Vec2::new(3.0, 3.0), Vec2::new(1.0, -0.4)),
                (Vec2::new(7.0, 6.0), Vec2::new(-0.8, 0.3)),
            ]);
            let f = TimedEsdf::build(&w, 0.0, 1.0, 0.1, 0.3, 0.2);
            let v = Vec2::new(vx, vy);
            let a = f.query(&StateTime { p: Vec2::new(px, py), v, t: 0.35 }).unwrap();
            let b = f.query(&StateTime { p: Vec2::new(qx, qy), v, t: 0.35 }).unwrap();
            let dist = Vec2::new(px, py).dist(Vec2::new(qx, qy));
            prop_assert!((a.d - b.d).abs() <= dist + 1e-9);
        }

        #[test]
        fn grad_v_is_tau_scaled_grad_p(
            px in 0.0..10.0, py in 0.0..10.0,
            vx in -1.8..1.8, vy in -1.8..1.8,
            t in 0.0..0.999,
        ) {
            let w = world(vec![(Vec2::new(5.0, 5.0), Vec2::new(0.7, -0.2))]);
            let f = TimedEsdf::build(&w, 0.0, 1.0, 0.1, 0.3, 0.2);
            let r = f.query(&StateTime { p: Vec2::new(px, py), v: Vec2::new(vx, vy), t }).unwrap();
            prop_assert!(r.grad_v.dist(r.grad_p * r.tau_star) < 1e-12);
            if r.d > -0.29 {
                prop_assert!((r.grad_p.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
