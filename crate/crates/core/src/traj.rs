//! Trajectory datasets: CSV ingestion at a fixed time step, linear
//! resampling, and connectivity-constrained route inference.
//!
//! The CSV wire format has header `id,type,t,x,y` with meters and seconds;
//! one row per agent per sample. Output datasets serialize back to the same
//! format.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::roadnet::RoadNetwork;

/// Default simulation time step, seconds.
pub const DEFAULT_DT: f64 = 0.4;
/// A road farther than this from a trajectory point is never added to its route.
pub const ROUTE_INSERT_MAX_DIST: f64 = 20.0;
/// No road within this distance of an agent's first position makes it unroutable.
pub const ROUTE_START_MAX_DIST: f64 = 50.0;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("failed to open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: unknown vehicle type {ty:?}")]
    UnknownVehicleType { line: u64, ty: String },
    #[error("agent {agent}: no road within {max:.0} m of its first position")]
    Unroutable { agent: u64, max: f64 },
    #[error("agent {agent}: timestamps are not strictly increasing")]
    NonMonotonicTime { agent: u64 },
    #[error("empty trajectory input")]
    Empty,
}

/// The six vehicle categories carried by the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleType {
    Motorcycle,
    Car,
    Taxi,
    Bus,
    Medium,
    Heavy,
}

pub const VEHICLE_TYPES: [VehicleType; 6] = [
    VehicleType::Motorcycle,
    VehicleType::Car,
    VehicleType::Taxi,
    VehicleType::Bus,
    VehicleType::Medium,
    VehicleType::Heavy,
];

impl VehicleType {
    pub fn index(self) -> usize {
        match self {
            VehicleType::Motorcycle => 0,
            VehicleType::Car => 1,
            VehicleType::Taxi => 2,
            VehicleType::Bus => 3,
            VehicleType::Medium => 4,
            VehicleType::Heavy => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VehicleType::Motorcycle => "motorcycle",
            VehicleType::Car => "car",
            VehicleType::Taxi => "taxi",
            VehicleType::Bus => "bus",
            VehicleType::Medium => "medium",
            VehicleType::Heavy => "heavy",
        }
    }
}

impl FromStr for VehicleType {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        VEHICLE_TYPES
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or(())
    }
}

impl fmt::Display for VehicleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One agent's resampled trajectory on the `dt` grid.
#[derive(Clone, Debug)]
pub struct AgentRecord {
    pub id: u64,
    pub vehicle_type: VehicleType,
    /// Grid index of the first sample; time of sample `k` is `(first_step + k) * dt`.
    pub first_step: i64,
    /// Positions at consecutive grid steps.
    pub positions: Vec<Vec2>,
    /// Road indices, pairwise connected in the network.
    pub route: Vec<usize>,
}

impl AgentRecord {
    pub fn last_step(&self) -> i64 {
        self.first_step + self.positions.len() as i64 - 1
    }

    pub fn first_time(&self, dt: f64) -> f64 {
        self.first_step as f64 * dt
    }

    pub fn last_time(&self, dt: f64) -> f64 {
        self.last_step() as f64 * dt
    }

    pub fn position_at_step(&self, step: i64) -> Option<Vec2> {
        let k = step - self.first_step;
        if k < 0 {
            return None;
        }
        self.positions.get(k as usize).copied()
    }

    pub fn final_position(&self) -> Vec2 {
        *self.positions.last().expect("non-empty record")
    }

    /// History slice ending at `step` (inclusive), at most `max_len` samples.
    pub fn history_until(&self, step: i64, max_len: usize) -> &[Vec2] {
        let k = (step - self.first_step).max(0) as usize;
        let end = (k + 1).min(self.positions.len());
        let start = end.saturating_sub(max_len);
        &self.positions[start..end]
    }
}

/// Time-indexed multi-agent trajectories at a fixed `dt`.
#[derive(Clone, Debug)]
pub struct TrajectoryDataset {
    pub dt: f64,
    pub agents: Vec<AgentRecord>,
}

impl TrajectoryDataset {
    pub fn first_step(&self) -> i64 {
        self.agents.iter().map(|a| a.first_step).min().unwrap_or(0)
    }

    pub fn last_step(&self) -> i64 {
        self.agents.iter().map(|a| a.last_step()).max().unwrap_or(0)
    }

    /// Indices of agents active at `step`.
    pub fn active_at(&self, step: i64) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.first_step <= step && step <= a.last_step())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn agent_by_id(&self, id: u64) -> Option<&AgentRecord> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrajError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| TrajError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        writeln!(w, "id,type,t,x,y").map_err(|source| TrajError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut agents: Vec<&AgentRecord> = self.agents.iter().collect();
        agents.sort_by_key(|a| a.id);
        for a in agents {
            for (k, p) in a.positions.iter().enumerate() {
                let t = (a.first_step + k as i64) as f64 * self.dt;
                writeln!(w, "{},{},{},{},{}", a.id, a.vehicle_type, t, p.x, p.y).map_err(
                    |source| TrajError::Io {
                        path: path.display().to_string(),
                        source,
                    },
                )?;
            }
        }
        Ok(())
    }
}

struct RawTrack {
    vehicle_type: VehicleType,
    samples: Vec<(f64, Vec2)>,
}

/// Load a `id,type,t,x,y` CSV, resample every agent onto the `dt` grid, and
/// infer routes against `network`. Agents with fewer than `2 * history_steps`
/// grid samples, and agents that cannot be routed, are dropped with a log line.
pub fn load_trajectories(
    path: impl AsRef<Path>,
    network: &RoadNetwork,
    dt: f64,
    history_steps: usize,
) -> Result<TrajectoryDataset, TrajError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TrajError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let mut tracks: BTreeMap<u64, RawTrack> = BTreeMap::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 5 {
            return Err(TrajError::MalformedRow {
                line,
                reason: format!("expected 5 fields, got {}", record.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<f64, TrajError> {
            record[i].trim().parse().map_err(|_| TrajError::MalformedRow {
                line,
                reason: format!("bad {name} value {:?}", &record[i]),
            })
        };
        let id: u64 = record[0].trim().parse().map_err(|_| TrajError::MalformedRow {
            line,
            reason: format!("bad id {:?}", &record[0]),
        })?;
        let ty = VehicleType::from_str(record[1].trim()).map_err(|_| {
            TrajError::UnknownVehicleType {
                line,
                ty: record[1].trim().to_string(),
            }
        })?;
        let t = field(2, "t")?;
        let x = field(3, "x")?;
        let y = field(4, "y")?;
        if !t.is_finite() || !x.is_finite() || !y.is_finite() {
            return Err(TrajError::MalformedRow {
                line,
                reason: "non-finite value".into(),
            });
        }
        tracks
            .entry(id)
            .or_insert_with(|| RawTrack {
                vehicle_type: ty,
                samples: Vec::new(),
            })
            .samples
            .push((t, Vec2::new(x, y)));
    }
    if tracks.is_empty() {
        return Err(TrajError::Empty);
    }

    let mut agents = Vec::new();
    for (id, mut track) in tracks {
        track
            .samples
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        if track.samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(TrajError::NonMonotonicTime { agent: id });
        }
        let Some((first_step, positions)) = resample(&track.samples, dt) else {
            log::info!("agent {id}: dropped (cannot be resampled onto the {dt} s grid)");
            continue;
        };
        if positions.len() < 2 * history_steps {
            log::info!(
                "agent {id}: dropped ({} < {} grid samples)",
                positions.len(),
                2 * history_steps
            );
            continue;
        }
        match infer_route(&positions, network) {
            Ok(route) => agents.push(AgentRecord {
                id,
                vehicle_type: track.vehicle_type,
                first_step,
                positions,
                route,
            }),
            Err(e) => log::warn!("agent {id}: dropped ({e})"),
        }
    }
    Ok(TrajectoryDataset { dt, agents })
}

/// Linearly resample irregular `(t, position)` samples onto the `k * dt` grid.
/// Returns `None` when no grid point falls inside the sampled span.
fn resample(samples: &[(f64, Vec2)], dt: f64) -> Option<(i64, Vec<Vec2>)> {
    const EPS: f64 = 1e-9;
    let (t0, t1) = (samples.first()?.0, samples.last()?.0);
    let k0 = ((t0 - EPS) / dt).ceil() as i64;
    let k1 = ((t1 + EPS) / dt).floor() as i64;
    if k1 < k0 {
        return None;
    }
    let mut out = Vec::with_capacity((k1 - k0 + 1) as usize);
    let mut cursor = 0usize;
    for k in k0..=k1 {
        let t = k as f64 * dt;
        while cursor + 1 < samples.len() && samples[cursor + 1].0 < t - EPS {
            cursor += 1;
        }
        let (ta, pa) = samples[cursor];
        let p = if cursor + 1 < samples.len() {
            let (tb, pb) = samples[cursor + 1];
            if (tb - ta).abs() < EPS {
                pa
            } else {
                let u = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
                pa.lerp(pb, u)
            }
        } else {
            pa
        };
        out.push(p);
    }
    Some((k0, out))
}

/// Greedy nearest-road route inference constrained to network connectivity.
///
/// The route starts at the nearest road to the first position (failing when
/// none is within [`ROUTE_START_MAX_DIST`]); at each subsequent point the
/// current road's successors are considered and adopted when strictly closer
/// than the current road and within [`ROUTE_INSERT_MAX_DIST`]. Consecutive
/// duplicates never occur by construction.
pub fn infer_route(positions: &[Vec2], network: &RoadNetwork) -> Result<Vec<usize>, TrajError> {
    assert!(!positions.is_empty(), "need at least one position");
    let first = network.project(positions[0], None);
    if first.distance_moved > ROUTE_START_MAX_DIST {
        return Err(TrajError::Unroutable {
            agent: 0,
            max: ROUTE_START_MAX_DIST,
        });
    }
    let mut route = vec![first.road];
    let mut cur = first.road;
    for &p in &positions[1..] {
        let cur_dist = network
            .project_restricted(p, &[cur])
            .map(|pp| pp.distance_moved)
            .unwrap_or(f64::INFINITY);
        let mut best: Option<(f64, usize)> = None;
        for &succ in &network.road(cur).successors {
            if let Some(pp) = network.project_restricted(p, &[succ]) {
                let better = match best {
                    None => true,
                    Some((d, _)) => pp.distance_moved < d,
                };
                if better {
                    best = Some((pp.distance_moved, succ));
                }
            }
        }
        if let Some((d, succ)) = best {
            if d < cur_dist && d <= ROUTE_INSERT_MAX_DIST {
                route.push(succ);
                cur = succ;
            }
        }
    }
    Ok(route)
}
