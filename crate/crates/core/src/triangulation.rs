//! 2D Delaunay triangulation over obstacle positions plus the four workspace
//! corners, with point location and adjacency queries.
//!
//! Construction is incremental Bowyer-Watson inside a far-away super
//! triangle, followed by a Lawson legalization sweep. Orientation and
//! in-circle predicates use f64 determinants with an exact rational fallback
//! when the determinant magnitude falls below tolerance, so near-degenerate
//! inputs (collinear points, cocircular corners) resolve consistently.

use crate::types::Vec2;
use crate::{Error, Result};
use num::BigRational;
use std::collections::HashMap;

/// Provenance of a triangulation vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    /// Tracks the obstacle with this id; moves under extrapolation.
    Obstacle(u32),
    /// Static workspace corner; carries no collision radius.
    Corner,
}

/// Relative tolerance below which predicate determinants are recomputed
/// exactly.
const PREDICATE_TOL: f64 = 1e-12;

/// Merge tolerance for duplicate input points, meters.
const DEDUP_TOL: f64 = 1e-9;

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

/// Sign of the orientation determinant of (a, b, c): +1 when c lies to the
/// left of a->b, -1 to the right, 0 when collinear.
pub fn orient2d_sign(a: Vec2, b: Vec2, c: Vec2) -> i8 {
    let t1 = (b.x - a.x) * (c.y - a.y);
    let t2 = (b.y - a.y) * (c.x - a.x);
    let det = t1 - t2;
    let mag = t1.abs() + t2.abs();
    if det.abs() > PREDICATE_TOL * mag {
        return if det > 0.0 { 1 } else { -1 };
    }
    // Exact fallback: f64 inputs are dyadic rationals.
    let det = (rational(b.x) - rational(a.x)) * (rational(c.y) - rational(a.y))
        - (rational(b.y) - rational(a.y)) * (rational(c.x) - rational(a.x));
    match det.cmp(&BigRational::from_integer(0.into())) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
    }
}

/// Sign of the in-circle determinant: +1 when `d` lies strictly inside the
/// circumcircle of the CCW triangle (a, b, c), 0 on the circle.
pub fn incircle_sign(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> i8 {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let m0 = ax * (by * c2 - b2 * cy);
    let m1 = ay * (bx * c2 - b2 * cx);
    let m2 = a2 * (bx * cy - by * cx);
    let det = m0 - m1 + m2;
    let mag = m0.abs() + m1.abs() + m2.abs();
    if det.abs() > PREDICATE_TOL * mag {
        return if det > 0.0 { 1 } else { -1 };
    }
    let (ax, ay) = (rational(a.x) - rational(d.x), rational(a.y) - rational(d.y));
    let (bx, by) = (rational(b.x) - rational(d.x), rational(b.y) - rational(d.y));
    let (cx, cy) = (rational(c.x) - rational(d.x), rational(c.y) - rational(d.y));
    let a2 = ax.clone() * ax.clone() + ay.clone() * ay.clone();
    let b2 = bx.clone() * bx.clone() + by.clone() * by.clone();
    let c2 = cx.clone() * cx.clone() + cy.clone() * cy.clone();
    let det = ax * (by.clone() * c2.clone() - b2.clone() * cy.clone())
        - ay * (bx.clone() * c2 - b2 * cx.clone())
        + a2 * (bx * cy - by * cx);
    match det.cmp(&BigRational::from_integer(0.into())) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
    }
}

/// Delaunay triangulation of obstacle positions and workspace corners.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<(Vec2, VertexKind)>,
    /// CCW vertex-index triples, canonically ordered.
    triangles: Vec<[usize; 3]>,
    /// `neighbors[t][k]` is the triangle across edge `(v[k], v[k+1])`.
    neighbors: Vec<[Option<usize>; 3]>,
}

/// Builds the Delaunay triangulation of `points` plus the four workspace
/// corners. Duplicates within [`DEDUP_TOL`] are merged (the first occurrence
/// wins). Points on the workspace boundary (wrapped obstacles) subdivide the
/// hull edges; points outside the workspace (extrapolated obstacles) extend
/// the hull beyond the box. The exact predicates keep collinear boundary
/// chains consistent.
pub fn delaunay(extent: Vec2, points: &[(Vec2, VertexKind)]) -> Result<Triangulation> {
    if !(extent.x > 0.0 && extent.y > 0.0) {
        return Err(Error::Degenerate(format!(
            "workspace extent ({}, {}) must be positive",
            extent.x, extent.y
        )));
    }
    let mut vertices: Vec<(Vec2, VertexKind)> = vec![
        (Vec2::new(0.0, 0.0), VertexKind::Corner),
        (Vec2::new(extent.x, 0.0), VertexKind::Corner),
        (Vec2::new(extent.x, extent.y), VertexKind::Corner),
        (Vec2::new(0.0, extent.y), VertexKind::Corner),
    ];
    // Coordinates within tolerance of the box edges snap onto them, so the
    // hull stays exactly the box there (wrap arithmetic leaves residues like
    // 10 - 9.999999999999995 that would otherwise dent the hull past
    // points lying exactly on the boundary).
    let snap = |v: f64, hi: f64| {
        if v.abs() < DEDUP_TOL {
            0.0
        } else if (v - hi).abs() < DEDUP_TOL {
            hi
        } else {
            v
        }
    };
    'outer: for &(p, kind) in points {
        if !p.is_finite() {
            return Err(Error::Degenerate("non-finite triangulation point".into()));
        }
        let q = Vec2::new(snap(p.x, extent.x), snap(p.y, extent.y));
        for &(existing, _) in &vertices {
            if existing.dist(q) < DEDUP_TOL {
                continue 'outer;
            }
        }
        vertices.push((q, kind));
    }

    let triangles = bowyer_watson(&vertices)?;
    Ok(Triangulation::from_parts(vertices, triangles))
}

impl Triangulation {
    fn from_parts(vertices: Vec<(Vec2, VertexKind)>, mut triangles: Vec<[usize; 3]>) -> Self {
        legalize(&vertices, &mut triangles);
        canonicalize(&mut triangles);
        let neighbors = build_neighbors(&triangles);
        Triangulation {
            vertices,
            triangles,
            neighbors,
        }
    }

    pub fn vertices(&self) -> &[(Vec2, VertexKind)] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_vertices(&self, id: usize) -> Result<[(Vec2, VertexKind); 3]> {
        let t = self.triangles.get(id).ok_or(Error::InvalidTriangle(id))?;
        Ok([self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]])
    }

    /// Inclusive point-in-triangle test against the stored (CCW) triangle.
    pub fn contains(&self, id: usize, p: Vec2) -> bool {
        let t = &self.triangles[id];
        let (a, b, c) = (
            self.vertices[t[0]].0,
            self.vertices[t[1]].0,
            self.vertices[t[2]].0,
        );
        orient2d_sign(a, b, p) >= 0 && orient2d_sign(b, c, p) >= 0 && orient2d_sign(c, a, p) >= 0
    }

    /// Id of a triangle containing `p`. Points on shared edges resolve to
    /// the lowest incident triangle id (ids are scanned in ascending order).
    pub fn locate(&self, p: Vec2) -> Result<usize> {
        (0..self.triangles.len())
            .find(|&id| self.contains(id, p))
            .ok_or(Error::PointNotFound { x: p.x, y: p.y })
    }

    /// The up-to-three edge-adjacent triangles of `id`.
    pub fn neighbors(&self, id: usize) -> Result<Vec<usize>> {
        let n = self.neighbors.get(id).ok_or(Error::InvalidTriangle(id))?;
        Ok(n.iter().filter_map(|&x| x).collect())
    }

    pub fn triangle_area(&self, id: usize) -> f64 {
        let t = &self.triangles[id];
        let (a, b, c) = (
            self.vertices[t[0]].0,
            self.vertices[t[1]].0,
            self.vertices[t[2]].0,
        );
        0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
    }
}

/// Incremental Bowyer-Watson inside a far super triangle. Returns the
/// triangle list over the input vertex indices (super vertices removed).
fn bowyer_watson(vertices: &[(Vec2, VertexKind)]) -> Result<Vec<[usize; 3]>> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::Degenerate("fewer than 3 vertices".into()));
    }
    let (mut lo, mut hi) = (vertices[0].0, vertices[0].0);
    for &(p, _) in vertices {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let center = (lo + hi) * 0.5;
    let radius = 1e5 * ((hi - lo).norm() + 1.0);
    // Equilateral super triangle (CCW), circumradius `radius` around center.
    let sup = [
        center + Vec2::new(0.0, radius),
        center + Vec2::new(-radius * 0.8660254037844386, -radius * 0.5),
        center + Vec2::new(radius * 0.8660254037844386, -radius * 0.5),
    ];

    // Working vertex list: super vertices occupy slots 0..3.
    let pts: Vec<Vec2> = sup
        .iter()
        .copied()
        .chain(vertices.iter().map(|&(p, _)| p))
        .collect();
    let mut tris: Vec<[usize; 3]> = vec![[0, 1, 2]];
    let mut alive: Vec<bool> = vec![true];

    for pi in 3..pts.len() {
        let p = pts[pi];
        // Directed edge -> owning triangle, over alive triangles.
        let mut edge: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, t) in tris.iter().enumerate() {
            if alive[ti] {
                edge.insert((t[0], t[1]), ti);
                edge.insert((t[1], t[2]), ti);
                edge.insert((t[2], t[0]), ti);
            }
        }
        let seed = (0..tris.len())
            .find(|&ti| {
                alive[ti] && {
                    let t = &tris[ti];
                    orient2d_sign(pts[t[0]], pts[t[1]], p) >= 0
                        && orient2d_sign(pts[t[1]], pts[t[2]], p) >= 0
                        && orient2d_sign(pts[t[2]], pts[t[0]], p) >= 0
                }
            })
            .ok_or_else(|| Error::Degenerate("insertion point escaped super triangle".into()))?;

        // Grow the cavity of triangles whose circumcircle strictly contains p.
        let mut bad = vec![false; tris.len()];
        bad[seed] = true;
        let mut queue = vec![seed];
        let mut cavity = vec![seed];
        while let Some(ti) = queue.pop() {
            let t = tris[ti];
            for k in 0..3 {
                let (u, w) = (t[k], t[(k + 1) % 3]);
                if let Some(&ni) = edge.get(&(w, u)) {
                    if !bad[ni] {
                        let nt = &tris[ni];
                        if incircle_sign(pts[nt[0]], pts[nt[1]], pts[nt[2]], p) > 0 {
                            bad[ni] = true;
                            queue.push(ni);
                            cavity.push(ni);
                        }
                    }
                }
            }
        }

        // Retriangulate the cavity boundary as a fan around p. The cavity
        // is star-shaped around p, so each fan triangle is CCW; an exactly
        // collinear boundary edge cannot occur for a point strictly inside
        // the cavity, but a degenerate fan is skipped rather than stored.
        let mut new_tris = Vec::new();
        for &ti in &cavity {
            let t = tris[ti];
            for k in 0..3 {
                let (u, w) = (t[k], t[(k + 1) % 3]);
                let boundary = match edge.get(&(w, u)) {
                    Some(&ni) => !bad[ni],
                    None => true,
                };
                if boundary {
                    let sign = orient2d_sign(pts[u], pts[w], p);
                    debug_assert!(sign > 0, "degenerate cavity fan");
                    if sign > 0 {
                        new_tris.push([u, w, pi]);
                    }
                }
            }
            alive[ti] = false;
        }
        for t in new_tris {
            tris.push(t);
            alive.push(true);
        }
    }

    // Drop super-vertex triangles and shift indices back.
    let mut out = Vec::new();
    for (ti, t) in tris.iter().enumerate() {
        if alive[ti] && t.iter().all(|&v| v >= 3) {
            out.push([t[0] - 3, t[1] - 3, t[2] - 3]);
        }
    }
    Ok(out)
}

/// Lawson sweep: flips strictly non-Delaunay internal edges until none
/// remain. Rarely fires; the Bowyer-Watson output is already Delaunay except
/// for hull-adjacent effects of the super triangle.
fn legalize(vertices: &[(Vec2, VertexKind)], triangles: &mut Vec<[usize; 3]>) {
    let max_rounds = 10 * triangles.len() + 100;
    for _ in 0..max_rounds {
        let neighbors = build_neighbors(triangles);
        let mut flipped = false;
        'scan: for ti in 0..triangles.len() {
            for k in 0..3 {
                let Some(ui) = neighbors[ti][k] else { continue };
                let t = triangles[ti];
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let u = triangles[ui];
                let d = *u.iter().find(|&&v| v != a && v != b).expect("opposite vertex");
                if incircle_sign(vertices[a].0, vertices[b].0, vertices[c].0, vertices[d].0) > 0 {
                    triangles[ti] = [a, d, c];
                    triangles[ui] = [d, b, c];
                    flipped = true;
                    break 'scan;
                }
            }
        }
        if !flipped {
            return;
        }
    }
}

/// Rotates each triangle so its smallest vertex index comes first (keeping
/// the CCW cycle) and sorts the list, so ids are deterministic.
fn canonicalize(triangles: &mut [[usize; 3]]) {
    for t in triangles.iter_mut() {
        let k = (0..3).min_by_key(|&k| t[k]).unwrap();
        *t = [t[k], t[(k + 1) % 3], t[(k + 2) % 3]];
    }
    triangles.sort_unstable();
}

fn build_neighbors(triangles: &[[usize; 3]]) -> Vec<[Option<usize>; 3]> {
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (ti, t) in triangles.iter().enumerate() {
        for k in 0..3 {
            owner.insert((t[k], t[(k + 1) % 3]), ti);
        }
    }
    triangles
        .iter()
        .map(|t| {
            [0, 1, 2].map(|k| owner.get(&(t[(k + 1) % 3], t[k])).copied())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigRational;

    fn unit_square() -> Triangulation {
        delaunay(Vec2::new(1.0, 1.0), &[]).unwrap()
    }

    /// Independent exact in-circle check used by the audit below.
    fn exact_incircle(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> std::cmp::Ordering {
        let r = |x: f64| BigRational::from_float(x).unwrap();
        let m = [
            [r(a.x) - r(d.x), r(a.y) - r(d.y)],
            [r(b.x) - r(d.x), r(b.y) - r(d.y)],
            [r(c.x) - r(d.x), r(c.y) - r(d.y)],
        ];
        let sq: Vec<BigRational> = m
            .iter()
            .map(|row| row[0].clone() * row[0].clone() + row[1].clone() * row[1].clone())
            .collect();
        let det = m[0][0].clone() * (m[1][1].clone() * sq[2].clone() - sq[1].clone() * m[2][1].clone())
            - m[0][1].clone() * (m[1][0].clone() * sq[2].clone() - sq[1].clone() * m[2][0].clone())
            + sq[0].clone() * (m[1][0].clone() * m[2][1].clone() - m[1][1].clone() * m[2][0].clone());
        det.cmp(&BigRational::from_integer(0.into()))
    }

    /// Brute-force Delaunay audit: no vertex strictly inside any
    /// circumcircle, every triangle CCW, adjacency symmetric.
    fn audit(tri: &Triangulation) {
        for id in 0..tri.n_triangles() {
            assert!(tri.triangle_area(id) > 0.0, "triangle {id} not CCW");
            let t = tri.triangles()[id];
            let [a, b, c] = t.map(|v| tri.vertices()[v].0);
            for (vi, &(p, _)) in tri.vertices().iter().enumerate() {
                if t.contains(&vi) {
                    continue;
                }
                assert_ne!(
                    exact_incircle(a, b, c, p),
                    std::cmp::Ordering::Greater,
                    "vertex {vi} strictly inside circumcircle of triangle {id}"
                );
            }
        }
        for id in 0..tri.n_triangles() {
            for n in tri.neighbors(id).unwrap() {
                assert!(
                    tri.neighbors(n).unwrap().contains(&id),
                    "adjacency not symmetric between {id} and {n}"
                );
            }
        }
    }

    fn edge_count(tri: &Triangulation) -> usize {
        let mut edges = std::collections::HashSet::new();
        for t in tri.triangles() {
            for k in 0..3 {
                let (u, w) = (t[k], t[(k + 1) % 3]);
                edges.insert((u.min(w), u.max(w)));
            }
        }
        edges.len()
    }

    #[test]
    fn empty_input_gives_square_split() {
        let tri = unit_square();
        assert_eq!(tri.n_triangles(), 2);
        assert_eq!(edge_count(&tri), 5);
        audit(&tri);
    }

    #[test]
    fn center_point_gives_fan_of_four() {
        let tri = delaunay(
            Vec2::new(1.0, 1.0),
            &[(Vec2::new(0.5, 0.5), VertexKind::Obstacle(0))],
        )
        .unwrap();
        assert_eq!(tri.n_triangles(), 4);
        audit(&tri);
    }

    #[test]
    fn collinear_points_are_fine_with_corners() {
        let pts: Vec<_> = (1..=3)
            .map(|i| (Vec2::new(0.25 * i as f64, 0.5), VertexKind::Obstacle(i as u32)))
            .collect();
        let tri = delaunay(Vec2::new(1.0, 1.0), &pts).unwrap();
        assert_eq!(tri.vertices().len(), 7);
        audit(&tri);
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let tri = unit_square();
        let id = tri.locate(Vec2::new(0.25, 0.25)).unwrap();
        assert!(tri.contains(id, Vec2::new(0.25, 0.25)));
    }

    #[test]
    fn locate_on_shared_edge_returns_lowest_id() {
        let tri = unit_square();
        // Both triangles share the diagonal; the scan returns the lower id.
        let p = Vec2::new(0.5, 0.5);
        let id = tri.locate(p).unwrap();
        let incident: Vec<usize> = (0..tri.n_triangles())
            .filter(|&t| tri.contains(t, p))
            .collect();
        assert_eq!(id, *incident.iter().min().unwrap());
        assert!(incident.len() >= 2);
    }

    #[test]
    fn locate_outside_hull_errors() {
        let tri = unit_square();
        assert!(matches!(
            tri.locate(Vec2::new(2.0, 2.0)),
            Err(Error::PointNotFound { .. })
        ));
    }

    #[test]
    fn two_triangle_square_neighbors_each_other() {
        let tri = unit_square();
        assert_eq!(tri.neighbors(0).unwrap(), vec![1]);
        assert_eq!(tri.neighbors(1).unwrap(), vec![0]);
        assert!(tri.neighbors(7).is_err());
    }

    #[test]
    fn fan_adjacency_matches_shared_edge_brute_force() {
        let tri = delaunay(
            Vec2::new(1.0, 1.0),
            &[(Vec2::new(0.5, 0.5), VertexKind::Obstacle(0))],
        )
        .unwrap();
        for id in 0..tri.n_triangles() {
            let expected: Vec<usize> = (0..tri.n_triangles())
                .filter(|&other| {
                    other != id && {
                        let a = tri.triangles()[id];
                        let b = tri.triangles()[other];
                        a.iter().filter(|v| b.contains(v)).count() == 2
                    }
                })
                .collect();
            let mut got = tri.neighbors(id).unwrap();
            got.sort_unstable();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn single_triangle_has_no_neighbors() {
        let tri = Triangulation::from_parts(
            vec![
                (Vec2::new(0.0, 0.0), VertexKind::Corner),
                (Vec2::new(1.0, 0.0), VertexKind::Corner),
                (Vec2::new(0.0, 1.0), VertexKind::Corner),
            ],
            vec![[0, 1, 2]],
        );
        assert_eq!(tri.neighbors(0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn random_sets_pass_audit_and_tile_the_box() {
        use rand::{Rng, SeedableRng};
        let extent = Vec2::new(10.0, 10.0);
        for seed in 0..20u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(0..40);
            let pts: Vec<_> = (0..n)
                .map(|i| {
                    (
                        Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
                        VertexKind::Obstacle(i),
                    )
                })
                .collect();
            let tri = delaunay(extent, &pts).unwrap();
            audit(&tri);
            let area: f64 = (0..tri.n_triangles()).map(|t| tri.triangle_area(t)).sum();
            assert!(
                (area - 100.0).abs() < 1e-9 * 100.0,
                "area {area} != workspace area (seed {seed})"
            );
            // locate followed by point-in-triangle always verifies
            for _ in 0..20 {
                let p = Vec2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
                let id = tri.locate(p).unwrap();
                assert!(tri.contains(id, p));
            }
        }
    }

    #[test]
    fn points_outside_workspace_are_triangulated() {
        // Extrapolated obstacles may leave the box; the box stays covered.
        let pts = vec![
            (Vec2::new(12.0, 5.0), VertexKind::Obstacle(0)),
            (Vec2::new(-3.0, 2.0), VertexKind::Obstacle(1)),
            (Vec2::new(5.0, 5.0), VertexKind::Obstacle(2)),
        ];
        let tri = delaunay(Vec2::new(10.0, 10.0), &pts).unwrap();
        audit(&tri);
        for p in [Vec2::new(0.1, 9.9), Vec2::new(9.9, 0.1), Vec2::new(5.0, 1.0)] {
            assert!(tri.locate(p).is_ok());
        }
    }

    #[test]
    fn boundary_points_are_handled() {
        // Wrapped obstacles sit exactly on the boundary.
        let pts = vec![
            (Vec2::new(0.0, 6.0), VertexKind::Obstacle(0)),
            (Vec2::new(10.0, 4.0), VertexKind::Obstacle(1)),
            (Vec2::new(5.0, 0.0), VertexKind::Obstacle(2)),
        ];
        let tri = delaunay(Vec2::new(10.0, 10.0), &pts).unwrap();
        audit(&tri);
        let area: f64 = (0..tri.n_triangles()).map(|t| tri.triangle_area(t)).sum();
        assert!((area - 100.0).abs() < 1e-6);
    }

    #[test]
    fn duplicates_merge_to_one_vertex() {
        let pts = vec![
            (Vec2::new(5.0, 5.0), VertexKind::Obstacle(0)),
            (Vec2::new(5.0, 5.0 + 1e-12), VertexKind::Obstacle(1)),
        ];
        let tri = delaunay(Vec2::new(10.0, 10.0), &pts).unwrap();
        assert_eq!(tri.vertices().len(), 5);
    }
}
