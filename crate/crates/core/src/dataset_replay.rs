//! Pedestrian track ingestion and replay: normalized TSV files are
//! interpolated onto a 10 Hz grid and exposed as time-indexed obstacle
//! snapshots with finite-difference velocities. Agents appear and vanish
//! with their recorded lifetimes, so the planner meets obstacles that occur
//! or disappear without warning, as at the simulator's boundaries.

use crate::types::{Obstacle, ObstacleSet, Vec2};
use crate::world::WorldSnapshot;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Playback grid spacing, seconds (10 Hz).
pub const REPLAY_DT: f64 = 0.1;
/// Margin added around the data bounding box, meters.
pub const BOUNDS_MARGIN: f64 = 1.0;

/// One agent's raw samples, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: u32,
    pub samples: Vec<(f64, Vec2)>,
}

impl AgentTrack {
    pub fn span(&self) -> (f64, f64) {
        (
            self.samples.first().map_or(0.0, |s| s.0),
            self.samples.last().map_or(0.0, |s| s.0),
        )
    }
}

/// Parses the normalized track format: a `# source_fps: <float>` header
/// line, then whitespace-separated rows `frame_id agent_id x y`. Rows may
/// arrive out of order; they are sorted per agent.
pub fn load_str(content: &str) -> Result<Vec<AgentTrack>> {
    let mut fps: Option<f64> = None;
    let mut by_agent: BTreeMap<u32, Vec<(f64, Vec2)>> = BTreeMap::new();
    for (lineno, raw) in content.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(value) = rest.strip_prefix("source_fps:") {
                let parsed: f64 = value.trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad source_fps '{}'", value.trim()),
                })?;
                if !(parsed > 0.0) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "source_fps must be positive".into(),
                    });
                }
                fps = Some(parsed);
            }
            continue;
        }
        let fps = fps.ok_or(Error::Parse {
            line: lineno,
            message: "data before '# source_fps:' header".into(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let frame: i64 = fields[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad frame id '{}'", fields[0]),
        })?;
        let agent: u32 = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad agent id '{}'", fields[1]),
        })?;
        let x: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad x '{}'", fields[2]),
        })?;
        let y: f64 = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad y '{}'", fields[3]),
        })?;
        by_agent
            .entry(agent)
            .or_default()
            .push((frame as f64 / fps, Vec2::new(x, y)));
    }
    if by_agent.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(by_agent
        .into_iter()
        .map(|(id, mut samples)| {
            samples.sort_by(|a, b| a.0.total_cmp(&b.0));
            AgentTrack { id, samples }
        })
        .collect())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<AgentTrack>> {
    load_str(&std::fs::read_to_string(path)?)
}

/// Writes tracks back to the normalized format (frame ids reconstructed
/// from times at the given fps); `load_str(write_tracks(..))` round-trips.
pub fn write_tracks(tracks: &[AgentTrack], fps: f64) -> String {
    let mut rows: Vec<(i64, u32, Vec2)> = Vec::new();
    for track in tracks {
        for &(t, p) in &track.samples {
            rows.push(((t * fps).round() as i64, track.id, p));
        }
    }
    rows.sort_by_key(|&(frame, id, _)| (frame, id));
    let mut out = format!("# source_fps: {fps}\n");
    for (frame, id, p) in rows {
        out.push_str(&format!("{frame} {id} {} {}\n", p.x, p.y));
    }
    out
}

/// Tracks resampled onto the 10 Hz grid, shifted into a workspace box
/// fitted to the data plus [`BOUNDS_MARGIN`].
#[derive(Debug, Clone)]
pub struct ReplaySequence {
    tracks: Vec<AgentTrack>,
    /// Fitted workspace extent after shifting the data to the origin.
    pub extent: Vec2,
    /// Offset subtracted from raw coordinates.
    pub shift: Vec2,
    /// Single-sample tracks dropped during interpolation.
    pub dropped: usize,
}

/// Linearly interpolates each track onto the 0.1 s grid spanning its own
/// lifetime (no extrapolation past the first or last sample). Tracks with
/// fewer than two samples are dropped and counted.
pub fn interpolate_10hz(tracks: &[AgentTrack]) -> ReplaySequence {
    let mut dropped = 0;
    let mut gridded: Vec<AgentTrack> = Vec::new();
    for track in tracks {
        if track.samples.len() < 2 {
            dropped += 1;
            continue;
        }
        let (t_first, t_last) = track.span();
        let count = ((t_last - t_first) / REPLAY_DT + 1e-9).floor() as usize + 1;
        let mut samples = Vec::with_capacity(count);
        let mut seg = 0;
        for k in 0..count {
            let t = t_first + k as f64 * REPLAY_DT;
            while seg + 2 < track.samples.len() && track.samples[seg + 1].0 <= t {
                seg += 1;
            }
            let (ta, pa) = track.samples[seg];
            let (tb, pb) = track.samples[seg + 1];
            let alpha = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
            samples.push((t, pa + (pb - pa) * alpha));
        }
        gridded.push(AgentTrack {
            id: track.id,
            samples,
        });
    }

    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for track in &gridded {
        for &(_, p) in &track.samples {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
    }
    if gridded.is_empty() {
        lo = Vec2::ZERO;
        hi = Vec2::ZERO;
    }
    let shift = Vec2::new(lo.x - BOUNDS_MARGIN, lo.y - BOUNDS_MARGIN);
    let extent = Vec2::new(
        hi.x - lo.x + 2.0 * BOUNDS_MARGIN,
        hi.y - lo.y + 2.0 * BOUNDS_MARGIN,
    );
    let tracks = gridded
        .into_iter()
        .map(|t| AgentTrack {
            id: t.id,
            samples: t.samples.iter().map(|&(t, p)| (t, p - shift)).collect(),
        })
        .collect();
    ReplaySequence {
        tracks,
        extent,
        shift,
        dropped,
    }
}

impl ReplaySequence {
    pub fn tracks(&self) -> &[AgentTrack] {
        &self.tracks
    }

    /// Earliest and latest grid times over all tracks.
    pub fn span(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.tracks {
            let (a, b) = t.span();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if self.tracks.is_empty() {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// Obstacle snapshot at time `t`: agents alive at `t` contribute their
    /// grid position and a central-finite-difference velocity (one-sided at
    /// track ends); absent agents are excluded.
    pub fn snapshot(&self, t: f64, radius: f64) -> Result<WorldSnapshot> {
        let (lo, hi) = self.span();
        if t < lo || t > hi {
            return Err(Error::OutOfRange {
                what: "replay time",
                value: t,
                lo,
                hi,
            });
        }
        Ok(self.snapshot_open(t, radius))
    }

    /// As [`ReplaySequence::snapshot`], but silently empty outside the data
    /// span (all agents have left). Used by the replanning loop, whose
    /// trials may outlive the recording.
    pub fn snapshot_open(&self, t: f64, radius: f64) -> WorldSnapshot {
        let mut obstacles = Vec::new();
        for track in &self.tracks {
            let (t_first, t_last) = track.span();
            if t < t_first - 1e-9 || t > t_last + 1e-9 {
                continue;
            }
            let n = track.samples.len();
            let idx = (((t - t_first) / REPLAY_DT).floor() as usize).min(n - 1);
            let p = track.samples[idx].1;
            let v = if n == 1 {
                Vec2::ZERO
            } else if idx == 0 {
                (track.samples[1].1 - track.samples[0].1) / REPLAY_DT
            } else if idx == n - 1 {
                (track.samples[n - 1].1 - track.samples[n - 2].1) / REPLAY_DT
            } else {
                (track.samples[idx + 1].1 - track.samples[idx - 1].1) / (2.0 * REPLAY_DT)
            };
            obstacles.push(Obstacle {
                id: track.id,
                p,
                v,
            });
        }
        WorldSnapshot {
            obstacles: ObstacleSet {
                obstacles,
                radius,
            },
            t_now: t,
            workspace_extent: self.extent,
        }
    }
}
