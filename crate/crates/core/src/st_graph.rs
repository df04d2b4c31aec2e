//! Front-end path searching on the timed triangle graph: time-sliced
//! triangulation slices, node placement by discretized forward simulation,
//! the proximity-penalized edge cost, and a state-time A*.
//!
//! Clearance along candidate moves is evaluated with the closed-form minimum
//! of the relative-motion separation over the whole move (the continuous
//! limit of substep simulation), so every returned edge also passes the
//! dt/10 substep audit.

use crate::triangulation::{self, Triangulation, VertexKind};
use crate::types::{ScenarioConfig, StateTime, Vec2};
use crate::world::WorldSnapshot;
use crate::{timed_esdf::min_dist_linear, Error, Result};
use serde::Serialize;
use std::collections::{BinaryHeap, HashMap, HashSet};

/// Number of candidate headings in the node-placement grid.
pub const PLACE_HEADINGS: usize = 16;
/// Speed fractions of the heading-independent maximum (the smaller per-axis
/// bound, so every candidate respects the velocity box) tried per heading.
/// Full speed enumerates first: a half-speed move over the full duration and
/// a full-speed move over half the duration share an endpoint and a
/// placement score, and the tie should go to the earlier arrival.
pub const PLACE_SPEED_FRACTIONS: [f64; 2] = [1.0, 0.5];
/// Number of move durations tried, uniform over `(0, PLACE_T_MAX]`.
pub const PLACE_TIME_STEPS: usize = 10;
/// Longest single move, seconds.
pub const PLACE_T_MAX: f64 = 1.0;
/// Weight (meters) making the goal-alignment term commensurable with the
/// travel-distance term of the placement objective.
pub const ALIGN_WEIGHT: f64 = 1.0;
/// Arrival-time component of the search cost, meters per second: edges are
/// charged `navi_cost + TIME_WEIGHT * dt`, realizing the time objective in
/// the front end (the back end keeps the time assignment frozen). Zero would
/// make same-length slow and fast moves indistinguishable.
pub const TIME_WEIGHT: f64 = 1.0;
/// Hard cap on A* expansions; exceeding it returns the best partial path.
pub const MAX_EXPANSIONS: usize = 1500;

/// One time slice of the state-time graph.
#[derive(Debug, Clone)]
pub struct SliceGraph {
    pub t_index: usize,
    pub tri: Triangulation,
}

/// Builds the Delaunay slice at `t0 + t_index * dt` over extrapolated
/// obstacle positions plus the workspace corners, where `t0` is the
/// snapshot time.
pub fn build_slice(world: &WorldSnapshot, t_index: usize, dt: f64) -> Result<SliceGraph> {
    let t = world.t_now + t_index as f64 * dt;
    let points: Vec<(Vec2, VertexKind)> = world
        .obstacles
        .obstacles
        .iter()
        .map(|o| (o.p + o.v * (t - world.t_now), VertexKind::Obstacle(o.id)))
        .collect();
    Ok(SliceGraph {
        t_index,
        tri: triangulation::delaunay(world.workspace_extent, &points)?,
    })
}

/// Node of the searched dual graph.
#[derive(Debug, Clone, Serialize)]
pub struct DualNode {
    pub state: StateTime,
    /// Containing triangle id in the node's own slice.
    pub triangle: usize,
    pub g_cost: f64,
    pub h_cost: f64,
    /// Index of the predecessor within the path (None for the start).
    pub parent: Option<usize>,
}

/// Search result: the chain of nodes from the start, and whether the goal
/// was reached or the path is a best-effort partial solution.
#[derive(Debug, Clone)]
pub struct StPath {
    pub nodes: Vec<DualNode>,
    pub complete: bool,
}

impl StPath {
    /// Total accumulated edge cost.
    pub fn cost(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.g_cost)
    }

    pub fn end_time(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.state.t)
    }
}

/// The candidate velocity grid: uniform headings at speed fractions of
/// `min(v_max.x, v_max.y)`, so the box bound holds for every heading.
/// Enumeration order is headings outer, fractions inner; ties in the
/// placement objective resolve to the first candidate in this order.
pub fn candidate_velocities(v_max: Vec2) -> Vec<Vec2> {
    let speed_max = v_max.x.min(v_max.y);
    let mut out = Vec::with_capacity(PLACE_HEADINGS * PLACE_SPEED_FRACTIONS.len());
    for j in 0..PLACE_HEADINGS {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / PLACE_HEADINGS as f64;
        let dir = Vec2::new(theta.cos(), theta.sin());
        for frac in PLACE_SPEED_FRACTIONS {
            out.push(dir * (speed_max * frac));
        }
    }
    out
}

/// A feasible move before target-triangle filtering.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    v: Vec2,
    t_move: f64,
    endpoint: Vec2,
    score: f64,
}

/// Enumerates the P x Q move grid from `current`, keeping candidates that
/// stay inside the workspace, make progress along the start-goal direction,
/// and keep clearance above `c_eff` against every extrapolated obstacle over
/// the whole move.
fn enumerate_candidates(
    current: &StateTime,
    world: &WorldSnapshot,
    start_p: Vec2,
    goal: Vec2,
    cfg: &ScenarioConfig,
) -> Vec<Candidate> {
    let c_eff = cfg.c_eff();
    let extent = world.workspace_extent;
    let p_sg = goal - start_p;
    let p_rg_hat = (goal - current.p).normalized();
    let velocities = candidate_velocities(cfg.v_max);

    // Per-obstacle relative state at the current node time.
    let rel: Vec<(Vec2, Vec2)> = world
        .obstacles
        .obstacles
        .iter()
        .map(|o| {
            let pos = o.p + o.v * (current.t - world.t_now);
            (current.p - pos, o.v)
        })
        .collect();

    let mut out = Vec::new();
    for v in velocities {
        if p_sg.dot(v) <= 0.0 {
            continue;
        }
        let v_hat = v.normalized();
        let align = ALIGN_WEIGHT * p_rg_hat.dot(v_hat);
        let speed = v.norm();
        for k in 1..=PLACE_TIME_STEPS {
            let t_move = PLACE_T_MAX * k as f64 / PLACE_TIME_STEPS as f64;
            let endpoint = current.p + v * t_move;
            if !(endpoint.x > 0.0 && endpoint.x < extent.x && endpoint.y > 0.0 && endpoint.y < extent.y)
            {
                continue;
            }
            let clear = rel.iter().all(|&(w, v_obs)| {
                min_dist_linear(w, v - v_obs, t_move).0 > c_eff
            });
            if !clear {
                continue;
            }
            out.push(Candidate {
                v,
                t_move,
                endpoint,
                score: align + speed * t_move,
            });
        }
    }
    out
}

/// Extrapolated positions of a slice triangle's vertices at time `t`.
#[cfg(test)]
fn triangle_at(
    slice: &SliceGraph,
    world: &WorldSnapshot,
    triangle: usize,
    t: f64,
) -> Result<[Vec2; 3]> {
    let verts = slice.tri.triangle_vertices(triangle)?;
    Ok(verts.map(|(p, kind)| match kind {
        VertexKind::Corner => p,
        VertexKind::Obstacle(id) => {
            match world.obstacles.obstacles.iter().find(|o| o.id == id) {
                Some(o) => o.p + o.v * (t - world.t_now),
                None => p,
            }
        }
    }))
}

/// Inclusive point-in-triangle irrespective of orientation (extrapolated
/// triangles may invert as obstacles cross).
fn point_in_moving_triangle(tri: &[Vec2; 3], p: Vec2) -> bool {
    let s0 = triangulation::orient2d_sign(tri[0], tri[1], p);
    let s1 = triangulation::orient2d_sign(tri[1], tri[2], p);
    let s2 = triangulation::orient2d_sign(tri[2], tri[0], p);
    (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0)
}

/// Places a node in `target_triangle` (a triangle id of `slice`, which must
/// contain or neighbor the triangle holding `current`) by maximizing the
/// placement objective over the candidate grid. Returns `None` when no
/// candidate is feasible.
pub fn place_node(
    current: &StateTime,
    target_triangle: usize,
    slice: &SliceGraph,
    world: &WorldSnapshot,
    start_p: Vec2,
    goal: Vec2,
    cfg: &ScenarioConfig,
) -> Option<StateTime> {
    let candidates = enumerate_candidates(current, world, start_p, goal, cfg);
    best_in_triangle(&candidates, target_triangle, slice, world, current.t)
}

fn best_in_triangle(
    candidates: &[Candidate],
    target_triangle: usize,
    slice: &SliceGraph,
    world: &WorldSnapshot,
    t_now: f64,
) -> Option<StateTime> {
    // Resolve each vertex to (anchor, velocity) once; the per-candidate
    // extrapolation then matches triangle_at bit for bit.
    let verts = slice.tri.triangle_vertices(target_triangle).ok()?;
    let motion: [(Vec2, Vec2); 3] = verts.map(|(p, kind)| match kind {
        VertexKind::Corner => (p, Vec2::ZERO),
        VertexKind::Obstacle(id) => world
            .obstacles
            .obstacles
            .iter()
            .find(|o| o.id == id)
            .map_or((p, Vec2::ZERO), |o| (o.p, o.v)),
    });
    let mut best: Option<(f64, &Candidate)> = None;
    for c in candidates {
        if best.map_or(false, |(s, _)| c.score <= s) {
            continue;
        }
        let arrival = t_now + c.t_move;
        let tri = motion.map(|(p, v)| p + v * (arrival - world.t_now));
        if point_in_moving_triangle(&tri, c.endpoint) {
            best = Some((c.score, c));
        }
    }
    best.map(|(_, c)| StateTime {
        p: c.endpoint,
        v: c.v,
        t: t_now + c.t_move,
    })
}

/// Edge cost penalizing obstacle proximity: with `d` the segment length and
/// `d_obs` the minimum robot-to-obstacle-center distance along the move,
/// returns `d` when `d_obs > d0 = 2 * c_s`, else `d * (2 - d_obs / d0)`.
/// Never smaller than the segment length, which keeps the Euclidean
/// heuristic admissible.
pub fn navi_cost(a: &StateTime, b: &StateTime, world: &WorldSnapshot, c_s: f64) -> f64 {
    let d = a.p.dist(b.p);
    let span = b.t - a.t;
    debug_assert!(span > 0.0, "navi_cost needs a.t < b.t");
    let v_seg = if span > 0.0 {
        (b.p - a.p) / span
    } else {
        Vec2::ZERO
    };
    let mut d_obs = f64::INFINITY;
    for o in &world.obstacles.obstacles {
        let pos = o.p + o.v * (a.t - world.t_now);
        let (sep, _) = min_dist_linear(a.p - pos, v_seg - o.v, span);
        d_obs = d_obs.min(sep);
    }
    let d0 = 2.0 * c_s;
    if d_obs > d0 {
        d
    } else {
        d * (2.0 - d_obs / d0)
    }
}

/// Edge cost used by the search: proximity-penalized length plus the
/// arrival-time charge. Still dominates the Euclidean heuristic.
pub fn search_edge_cost(a: &StateTime, b: &StateTime, world: &WorldSnapshot, c_s: f64) -> f64 {
    navi_cost(a, b, world, c_s) + TIME_WEIGHT * (b.t - a.t)
}

/// Direct constant-velocity connection to the goal: picks the fastest
/// per-axis-feasible velocity and accepts when the whole segment keeps
/// clearance against every extrapolated obstacle. Returns the goal arrival
/// state.
pub fn goal_connection(
    from: &StateTime,
    goal: Vec2,
    world: &WorldSnapshot,
    cfg: &ScenarioConfig,
) -> Option<StateTime> {
    let delta = goal - from.p;
    let dist = delta.norm();
    if dist < 1e-9 {
        return Some(StateTime {
            p: goal,
            v: Vec2::ZERO,
            t: from.t,
        });
    }
    let t_goal = (delta.x.abs() / cfg.v_max.x).max(delta.y.abs() / cfg.v_max.y);
    let v = delta / t_goal;
    let c_eff = cfg.c_eff();
    for o in &world.obstacles.obstacles {
        let pos = o.p + o.v * (from.t - world.t_now);
        if min_dist_linear(from.p - pos, v - o.v, t_goal).0 <= c_eff {
            return None;
        }
    }
    Some(StateTime {
        p: goal,
        v,
        t: from.t + t_goal,
    })
}

#[derive(Debug, Clone)]
struct SearchNode {
    state: StateTime,
    triangle: usize,
    slice: usize,
    g: f64,
    h: f64,
    parent: Option<usize>,
}

/// Dual-graph key: one node per triangle per slice, plus the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Cell(usize, usize),
    Goal,
}

struct OpenEntry {
    f: f64,
    idx: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.idx == other.idx
    }
}
impl Eq for OpenEntry {}
impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on f; the tie-break on idx keeps popping deterministic.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Per-search cache of lazily built slices.
struct SliceCache<'a> {
    world: &'a WorldSnapshot,
    dt: f64,
    slices: Vec<Option<SliceGraph>>,
}

impl<'a> SliceCache<'a> {
    fn new(world: &'a WorldSnapshot, dt: f64, max_slices: usize) -> Self {
        SliceCache {
            world,
            dt,
            slices: vec![None; max_slices],
        }
    }

    fn get(&mut self, i: usize) -> Result<&SliceGraph> {
        if i >= self.slices.len() {
            self.slices.resize(i + 1, None);
        }
        if self.slices[i].is_none() {
            self.slices[i] = Some(build_slice(self.world, i, self.dt)?);
        }
        Ok(self.slices[i].as_ref().unwrap())
    }
}

/// Recorded node of an explored search graph, for the debug dump.
#[derive(Debug, Clone, Serialize)]
pub struct RecordedNode {
    pub state: StateTime,
    pub g: f64,
    pub h: f64,
    pub parent: Option<usize>,
    pub triangle: usize,
}

/// Exploration record; one line per node in insertion order.
#[derive(Debug, Clone, Default)]
pub struct SearchRecord {
    pub nodes: Vec<RecordedNode>,
    pub expansions: usize,
}

impl SearchRecord {
    pub fn to_jsonl(&self) -> String {
        self.nodes
            .iter()
            .map(|n| serde_json::to_string(n).expect("node serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// State-time A* over the dual graph.
///
/// Returns a complete path when the goal key is popped (the goal is relaxed
/// like any other node, so complete paths are cost-optimal over the
/// discretization). On budget exhaustion — a popped node beyond the time
/// budget, the expansion cap, or an empty frontier — returns the pending
/// complete path if one was found, otherwise a partial path backtracked from
/// the expanded node nearest the goal.
pub fn state_time_astar(
    start: &StateTime,
    goal: Vec2,
    budget: f64,
    world: &WorldSnapshot,
    cfg: &ScenarioConfig,
) -> Result<StPath> {
    search(start, goal, budget, world, cfg, None)
}

/// As [`state_time_astar`], also returning the explored-graph record.
pub fn state_time_astar_recorded(
    start: &StateTime,
    goal: Vec2,
    budget: f64,
    world: &WorldSnapshot,
    cfg: &ScenarioConfig,
) -> Result<(StPath, SearchRecord)> {
    let mut record = SearchRecord::default();
    let path = search(start, goal, budget, world, cfg, Some(&mut record))?;
    Ok((path, record))
}

fn search(
    start: &StateTime,
    goal: Vec2,
    budget: f64,
    world: &WorldSnapshot,
    cfg: &ScenarioConfig,
    mut record: Option<&mut SearchRecord>,
) -> Result<StPath> {
    let t0 = start.t;
    let c_eff = cfg.c_eff();
    let clearance = world.min_clearance(start.p, t0, c_eff)?;
    if clearance < 0.0 {
        return Err(Error::InadmissibleStart(format!(
            "start clearance {clearance:.3} m"
        )));
    }
    cfg.check_state(start)?;

    let max_slices = ((budget + PLACE_T_MAX) / cfg.dt).ceil() as usize + 2;
    let mut cache = SliceCache::new(world, cfg.dt, max_slices);
    let start_tri = cache.get(0)?.tri.locate(start.p)?;

    let mut nodes: Vec<SearchNode> = vec![SearchNode {
        state: *start,
        triangle: start_tri,
        slice: 0,
        g: 0.0,
        h: start.p.dist(goal),
        parent: None,
    }];
    let mut best_g: HashMap<Key, f64> = HashMap::new();
    best_g.insert(Key::Cell(0, start_tri), 0.0);
    let mut closed: HashSet<Key> = HashSet::new();
    let mut open = BinaryHeap::new();
    open.push(OpenEntry {
        f: nodes[0].h,
        idx: 0,
    });
    let mut nearest = (nodes[0].h, 0usize);
    let mut goal_idx: Option<usize> = None;
    let mut expansions = 0usize;

    let key_of = |n: &SearchNode, goal_node: bool| {
        if goal_node {
            Key::Goal
        } else {
            Key::Cell(n.slice, n.triangle)
        }
    };

    let finish = |nodes: &[SearchNode],
                  idx: usize,
                  complete: bool,
                  record: &mut Option<&mut SearchRecord>,
                  expansions: usize| {
        if let Some(rec) = record.as_deref_mut() {
            rec.expansions = expansions;
        }
        backtrack(nodes, idx, complete)
    };

    while let Some(entry) = open.pop() {
        let idx = entry.idx;
        let is_goal = goal_idx == Some(idx);
        let key = key_of(&nodes[idx], is_goal);
        if closed.contains(&key) {
            continue;
        }
        if best_g.get(&key).copied().unwrap_or(f64::INFINITY) < nodes[idx].g {
            continue; // stale heap entry
        }
        if is_goal {
            return Ok(finish(&nodes, idx, true, &mut record, expansions));
        }
        if nodes[idx].state.t - t0 >= budget || expansions >= MAX_EXPANSIONS {
            // Budget exhausted: prefer a pending complete path.
            return Ok(match goal_idx {
                Some(g) => finish(&nodes, g, true, &mut record, expansions),
                None => finish(&nodes, nearest.1, false, &mut record, expansions),
            });
        }
        closed.insert(key);
        expansions += 1;
        if let Some(rec) = record.as_deref_mut() {
            rec.nodes.push(RecordedNode {
                state: nodes[idx].state,
                g: nodes[idx].g,
                h: nodes[idx].h,
                parent: nodes[idx].parent,
                triangle: nodes[idx].triangle,
            });
        }
        if nodes[idx].h < nearest.0 {
            nearest = (nodes[idx].h, idx);
        }

        let cur = nodes[idx].clone();

        // Direct goal connection, relaxed like an ordinary successor.
        if let Some(goal_state) = goal_connection(&cur.state, goal, world, cfg) {
            let cost = if goal_state.t > cur.state.t {
                search_edge_cost(&cur.state, &goal_state, world, cfg.safe_distance)
            } else {
                0.0
            };
            let g = cur.g + cost;
            if g < best_g.get(&Key::Goal).copied().unwrap_or(f64::INFINITY) {
                best_g.insert(Key::Goal, g);
                let node = SearchNode {
                    state: goal_state,
                    triangle: 0,
                    slice: 0,
                    g,
                    h: 0.0,
                    parent: Some(idx),
                };
                match goal_idx {
                    Some(gi) => nodes[gi] = node,
                    None => {
                        nodes.push(node);
                        goal_idx = Some(nodes.len() - 1);
                    }
                }
                open.push(OpenEntry {
                    f: g,
                    idx: goal_idx.unwrap(),
                });
            }
        }

        // Triangle successors: the current triangle and its slice neighbors.
        let candidates = enumerate_candidates(&cur.state, world, start.p, goal, cfg);
        if candidates.is_empty() {
            continue;
        }
        let slice = cache.get(cur.slice)?;
        let mut targets = vec![cur.triangle];
        targets.extend(slice.tri.neighbors(cur.triangle)?);
        let mut placed: Vec<StateTime> = Vec::new();
        for target in targets {
            if let Some(s) = best_in_triangle(&candidates, target, slice, world, cur.state.t) {
                placed.push(s);
            }
        }
        for succ in placed {
            let arrival_slice = ((succ.t - t0) / cfg.dt).round() as usize;
            let succ_tri = cache.get(arrival_slice)?.tri.locate(succ.p)?;
            let key = Key::Cell(arrival_slice, succ_tri);
            if closed.contains(&key) {
                continue;
            }
            let g = cur.g + search_edge_cost(&cur.state, &succ, world, cfg.safe_distance);
            if g < best_g.get(&key).copied().unwrap_or(f64::INFINITY) {
                best_g.insert(key, g);
                nodes.push(SearchNode {
                    state: succ,
                    triangle: succ_tri,
                    slice: arrival_slice,
                    g,
                    h: succ.p.dist(goal),
                    parent: Some(idx),
                });
                open.push(OpenEntry {
                    f: g + succ.p.dist(goal),
                    idx: nodes.len() - 1,
                });
            }
        }
    }

    // Frontier exhausted.
    Ok(match goal_idx {
        Some(g) if best_g.contains_key(&Key::Goal) => {
            finish(&nodes, g, true, &mut record, expansions)
        }
        _ => finish(&nodes, nearest.1, false, &mut record, expansions),
    })
}

fn backtrack(nodes: &[SearchNode], idx: usize, complete: bool) -> StPath {
    let mut chain = Vec::new();
    let mut cur = Some(idx);
    while let Some(i) = cur {
        chain.push(i);
        cur = nodes[i].parent;
    }
    chain.reverse();
    let path_nodes = chain
        .iter()
        .enumerate()
        .map(|(k, &i)| DualNode {
            state: nodes[i].state,
            triangle: nodes[i].triangle,
            g_cost: nodes[i].g,
            h_cost: nodes[i].h,
            parent: if k == 0 { None } else { Some(k - 1) },
        })
        .collect();
    StPath {
        nodes: path_nodes,
        complete,
    }
}
