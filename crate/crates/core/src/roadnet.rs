//! Road-network geometry: lanes as widened polylines, road connectivity,
//! signal schedules, on-road projection, and network editing.
//!
//! The network is immutable after load; [`RoadNetwork::edit_road`] returns a
//! new value. The JSON schema is documented in the repository README:
//!
//! ```json
//! {
//!   "roads": [
//!     {"id": "a", "lanes": [{"centerline": [[0,0],[100,0]], "width": [3.5, 3.5]}],
//!      "successors": ["b"]}
//!   ],
//!   "signals": [
//!     {"road_id": "a", "first_green": 0.0, "green_time": 30.0, "cycle": 90.0}
//!   ]
//! }
//! ```
//!
//! Lengths are meters, times are seconds. `width[i]` applies to the segment
//! from `centerline[i]` to `centerline[i+1]` (piecewise constant); the final
//! entry is kept for symmetry and must also be positive.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{cumulative_lengths, project_to_segment, Vec2};

/// Grid cell size for the projection accelerator, meters.
const GRID_CELL: f64 = 20.0;
/// Off-road threshold, meters: a point is off-road when it lies strictly
/// more than this far from every lane area.
pub const OFFROAD_THRESHOLD: f64 = 1.5;
/// Junction endpoints closer than this are merged into one junction.
const JUNCTION_MERGE_DIST: f64 = 2.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("network parse error: {0}")]
    Parse(String),
    #[error("road {road}: lane {lane}: non-positive lane width")]
    NonPositiveWidth { road: String, lane: usize },
    #[error("road {road}: lane {lane}: centerline has fewer than 2 vertices")]
    ShortCenterline { road: String, lane: usize },
    #[error("road {road}: lane {lane}: consecutive centerline vertices coincide at index {index}")]
    DuplicateVertex {
        road: String,
        lane: usize,
        index: usize,
    },
    #[error("road {road}: lane {lane}: width array length {got} != centerline length {want}")]
    WidthLengthMismatch {
        road: String,
        lane: usize,
        got: usize,
        want: usize,
    },
    #[error("road {road}: has no lanes")]
    EmptyRoad { road: String },
    #[error("duplicate road id {0}")]
    DuplicateRoadId(String),
    #[error("unknown road id {0}")]
    UnknownRoad(String),
    #[error("signal for road {road}: {reason}")]
    BadSignal { road: String, reason: String },
    #[error("route is empty")]
    EmptyRoute,
    #[error("route roads {a} -> {b} are not connected")]
    DisconnectedRoute { a: String, b: String },
}

/// One lane: a centerline polyline with a piecewise-constant width.
#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub centerline: Vec<Vec2>,
    pub width: Vec<f64>,
    cum: Vec<f64>,
}

impl Lane {
    pub fn new(centerline: Vec<Vec2>, width: Vec<f64>) -> Result<Lane, NetworkError> {
        let mut lane = Lane {
            centerline,
            width,
            cum: Vec::new(),
        };
        lane.cum = cumulative_lengths(&lane.centerline);
        Ok(lane)
    }

    /// Uniform-width convenience constructor.
    pub fn with_uniform_width(centerline: Vec<Vec2>, width: f64) -> Result<Lane, NetworkError> {
        let n = centerline.len();
        Lane::new(centerline, vec![width; n])
    }

    pub fn total_length(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    fn segment_count(&self) -> usize {
        self.centerline.len().saturating_sub(1)
    }

    /// Segment index containing arc-length station `s` (clamped).
    fn segment_at(&self, s: f64) -> usize {
        if self.segment_count() == 0 {
            return 0;
        }
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => i.saturating_sub(1).min(self.segment_count() - 1),
        }
    }

    /// Point, unit tangent, and width at arc-length station `s` (clamped to the lane).
    pub fn eval_at(&self, s: f64) -> (Vec2, Vec2, f64) {
        let seg = self.segment_at(s.clamp(0.0, self.total_length()));
        let a = self.centerline[seg];
        let b = self.centerline[seg + 1];
        let len = b.dist(a);
        let t = if len > 0.0 {
            ((s - self.cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (a.lerp(b, t), (b - a).normalized(), self.width[seg])
    }

    pub fn start(&self) -> Vec2 {
        self.centerline[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.centerline.last().unwrap()
    }

    fn validate(&self, road: &str, lane: usize) -> Result<(), NetworkError> {
        if self.centerline.len() < 2 {
            return Err(NetworkError::ShortCenterline {
                road: road.to_string(),
                lane,
            });
        }
        if self.width.len() != self.centerline.len() {
            return Err(NetworkError::WidthLengthMismatch {
                road: road.to_string(),
                lane,
                got: self.width.len(),
                want: self.centerline.len(),
            });
        }
        for (i, w) in self.width.iter().enumerate() {
            if !(*w > 0.0) {
                let _ = i;
                return Err(NetworkError::NonPositiveWidth {
                    road: road.to_string(),
                    lane,
                });
            }
        }
        for (i, w) in self.centerline.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(NetworkError::DuplicateVertex {
                    road: road.to_string(),
                    lane,
                    index: i,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Road {
    pub id: String,
    pub lanes: Vec<Lane>,
    /// Indices into `RoadNetwork::roads`.
    pub successors: Vec<usize>,
}

impl Road {
    /// Reference lane used for stations, waypoints, and the synthetic generator.
    pub fn reference_lane(&self) -> &Lane {
        &self.lanes[0]
    }

    pub fn total_lane_length(&self) -> f64 {
        self.lanes.iter().map(Lane::total_length).sum()
    }
}

/// A connection point where one or more roads end and their successors begin.
#[derive(Clone, Debug)]
pub struct Junction {
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub position: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LightState {
    Green,
    Red,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalSchedule {
    /// Index into `RoadNetwork::roads`.
    pub road: usize,
    pub first_green: f64,
    pub green_time: f64,
    pub cycle: f64,
}

impl SignalSchedule {
    /// Light state at time `t >= 0`: green on `[first_green, first_green + green_time)`
    /// modulo the cycle.
    pub fn state_at(&self, t: f64) -> LightState {
        let phase = (t - self.first_green).rem_euclid(self.cycle);
        if phase < self.green_time {
            LightState::Green
        } else {
            LightState::Red
        }
    }
}

/// Result of projecting a point onto the nearest lane area.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedPoint {
    /// Nearest on-road point.
    pub position: Vec2,
    /// Road index of the matched lane.
    pub road: usize,
    pub lane_index: usize,
    /// Signed perpendicular offset from the lane centerline, positive to the
    /// left of travel. Clamped to half the lane width.
    pub signed_lateral_offset: f64,
    /// Euclidean distance from the query point to `position`.
    pub distance_moved: f64,
    /// Arc-length station of the centerline foot point along the matched lane.
    pub station: f64,
}

#[derive(Clone, Copy, Debug)]
struct SegmentRef {
    road: u32,
    lane: u32,
    seg: u32,
    a: Vec2,
    b: Vec2,
    half_width: f64,
    station0: f64,
}

#[derive(Clone, Debug)]
struct SpatialGrid {
    cells: HashMap<(i32, i32), Vec<u32>>,
    min_cell: (i32, i32),
    max_cell: (i32, i32),
    max_half_width: f64,
}

impl SpatialGrid {
    fn cell_of(p: Vec2) -> (i32, i32) {
        (
            (p.x / GRID_CELL).floor() as i32,
            (p.y / GRID_CELL).floor() as i32,
        )
    }

    fn build(segments: &[SegmentRef]) -> SpatialGrid {
        let mut grid = SpatialGrid {
            cells: HashMap::new(),
            min_cell: (i32::MAX, i32::MAX),
            max_cell: (i32::MIN, i32::MIN),
            max_half_width: 0.0,
        };
        for (idx, s) in segments.iter().enumerate() {
            grid.max_half_width = grid.max_half_width.max(s.half_width);
            let (ax, ay) = Self::cell_of(s.a);
            let (bx, by) = Self::cell_of(s.b);
            for cx in ax.min(bx)..=ax.max(bx) {
                for cy in ay.min(by)..=ay.max(by) {
                    grid.cells.entry((cx, cy)).or_default().push(idx as u32);
                    grid.min_cell = (grid.min_cell.0.min(cx), grid.min_cell.1.min(cy));
                    grid.max_cell = (grid.max_cell.0.max(cx), grid.max_cell.1.max(cy));
                }
            }
        }
        grid
    }
}

/// Immutable road network with derived junctions and a projection accelerator.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    roads: Vec<Road>,
    junctions: Vec<Junction>,
    signals: Vec<SignalSchedule>,
    id_to_index: HashMap<String, usize>,
    signal_by_road: Vec<Option<usize>>,
    segments: Vec<SegmentRef>,
    grid: SpatialGrid,
}

// --- JSON wire format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RawLane {
    centerline: Vec<Vec2>,
    width: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRoad {
    id: String,
    lanes: Vec<RawLane>,
    #[serde(default)]
    successors: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawSignal {
    road_id: String,
    first_green: f64,
    green_time: f64,
    cycle: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    roads: Vec<RawRoad>,
    #[serde(default)]
    signals: Vec<RawSignal>,
}

impl RoadNetwork {
    pub fn load(path: impl AsRef<Path>) -> Result<RoadNetwork, NetworkError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<RoadNetwork, NetworkError> {
        let raw: RawNetwork =
            serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawNetwork) -> Result<RoadNetwork, NetworkError> {
        let mut id_to_index = HashMap::new();
        for (i, r) in raw.roads.iter().enumerate() {
            if id_to_index.insert(r.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateRoadId(r.id.clone()));
            }
        }
        let mut roads = Vec::with_capacity(raw.roads.len());
        for r in &raw.roads {
            let mut lanes = Vec::with_capacity(r.lanes.len());
            for l in &r.lanes {
                lanes.push(Lane::new(l.centerline.clone(), l.width.clone())?);
            }
            let successors = r
                .successors
                .iter()
                .map(|s| {
                    id_to_index
                        .get(s)
                        .copied()
                        .ok_or_else(|| NetworkError::UnknownRoad(s.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            roads.push(Road {
                id: r.id.clone(),
                lanes,
                successors,
            });
        }
        let mut signals = Vec::with_capacity(raw.signals.len());
        for s in &raw.signals {
            let road = *id_to_index
                .get(&s.road_id)
                .ok_or_else(|| NetworkError::UnknownRoad(s.road_id.clone()))?;
            signals.push(SignalSchedule {
                road,
                first_green: s.first_green,
                green_time: s.green_time,
                cycle: s.cycle,
            });
        }
        Self::assemble(roads, signals)
    }

    /// Programmatic construction; validates all invariants.
    pub fn from_parts(
        roads: Vec<Road>,
        signals: Vec<SignalSchedule>,
    ) -> Result<RoadNetwork, NetworkError> {
        Self::assemble(roads, signals)
    }

    fn assemble(
        roads: Vec<Road>,
        signals: Vec<SignalSchedule>,
    ) -> Result<RoadNetwork, NetworkError> {
        let mut id_to_index = HashMap::new();
        for (i, r) in roads.iter().enumerate() {
            if id_to_index.insert(r.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateRoadId(r.id.clone()));
            }
        }
        for r in &roads {
            if r.lanes.is_empty() {
                return Err(NetworkError::EmptyRoad { road: r.id.clone() });
            }
            for (li, lane) in r.lanes.iter().enumerate() {
                lane.validate(&r.id, li)?;
            }
            if !(r.total_lane_length() > 0.0) {
                return Err(NetworkError::EmptyRoad { road: r.id.clone() });
            }
            for &s in &r.successors {
                if s >= roads.len() {
                    return Err(NetworkError::UnknownRoad(format!("#{s}")));
                }
            }
        }
        let mut signal_by_road = vec![None; roads.len()];
        for (si, s) in signals.iter().enumerate() {
            let road_id = roads[s.road].id.clone();
            if s.cycle != 45.0 && s.cycle != 90.0 {
                return Err(NetworkError::BadSignal {
                    road: road_id,
                    reason: format!("cycle must be 45 or 90 seconds, got {}", s.cycle),
                });
            }
            if !(s.green_time > 0.0 && s.green_time < s.cycle) {
                return Err(NetworkError::BadSignal {
                    road: road_id,
                    reason: "green_time must satisfy 0 < green_time < cycle".into(),
                });
            }
            if !(s.first_green >= 0.0) {
                return Err(NetworkError::BadSignal {
                    road: road_id,
                    reason: "first_green must be >= 0".into(),
                });
            }
            if signal_by_road[s.road].is_some() {
                return Err(NetworkError::BadSignal {
                    road: road_id,
                    reason: "duplicate signal for road".into(),
                });
            }
            signal_by_road[s.road] = Some(si);
        }

        let mut segments = Vec::new();
        for (ri, r) in roads.iter().enumerate() {
            for (li, lane) in r.lanes.iter().enumerate() {
                for si in 0..lane.segment_count() {
                    segments.push(SegmentRef {
                        road: ri as u32,
                        lane: li as u32,
                        seg: si as u32,
                        a: lane.centerline[si],
                        b: lane.centerline[si + 1],
                        half_width: lane.width[si] / 2.0,
                        station0: lane.cum[si],
                    });
                }
            }
        }
        let grid = SpatialGrid::build(&segments);
        let junctions = derive_junctions(&roads);
        Ok(RoadNetwork {
            roads,
            junctions,
            signals,
            id_to_index,
            signal_by_road,
            segments,
            grid,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawNetwork {
            roads: self
                .roads
                .iter()
                .map(|r| RawRoad {
                    id: r.id.clone(),
                    lanes: r
                        .lanes
                        .iter()
                        .map(|l| RawLane {
                            centerline: l.centerline.clone(),
                            width: l.width.clone(),
                        })
                        .collect(),
                    successors: r
                        .successors
                        .iter()
                        .map(|&s| self.roads[s].id.clone())
                        .collect(),
                })
                .collect(),
            signals: self
                .signals
                .iter()
                .map(|s| RawSignal {
                    road_id: self.roads[s.road].id.clone(),
                    first_green: s.first_green,
                    green_time: s.green_time,
                    cycle: s.cycle,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("network serialization cannot fail")
    }

    // --- accessors -----------------------------------------------------

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    pub fn road(&self, idx: usize) -> &Road {
        &self.roads[idx]
    }

    pub fn road_index(&self, id: &str) -> Option<usize> {
        self.id_to_index.get(id).copied()
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn signals(&self) -> &[SignalSchedule] {
        &self.signals
    }

    pub fn signal_for_road(&self, road: usize) -> Option<&SignalSchedule> {
        self.signal_by_road[road].map(|si| &self.signals[si])
    }

    pub fn is_empty(&self) -> bool {
        self.roads.is_empty()
    }

    // --- projection ------------------------------------------------------

    fn eval_segment(&self, q: Vec2, s: &SegmentRef) -> ProjectedPoint {
        let (t, c) = project_to_segment(q, s.a, s.b);
        let delta = q - c;
        let d = delta.norm();
        let dir = (s.b - s.a).normalized();
        let sign = if dir.cross(delta) >= 0.0 { 1.0 } else { -1.0 };
        let (position, offset, moved) = if d <= s.half_width {
            (q, sign * d, 0.0)
        } else {
            (
                c + delta * (s.half_width / d),
                sign * s.half_width,
                d - s.half_width,
            )
        };
        ProjectedPoint {
            position,
            road: s.road as usize,
            lane_index: s.lane as usize,
            signed_lateral_offset: offset,
            distance_moved: moved,
            station: s.station0 + t * s.b.dist(s.a),
        }
    }

    fn better(best: &Option<ProjectedPoint>, cand: &ProjectedPoint) -> bool {
        match best {
            None => true,
            Some(b) => {
                let kb = (b.distance_moved, b.road, b.lane_index, b.station);
                let kc = (cand.distance_moved, cand.road, cand.lane_index, cand.station);
                kc.partial_cmp(&kb) == Some(std::cmp::Ordering::Less)
            }
        }
    }

    fn project_segments<'a>(
        &self,
        q: Vec2,
        idxs: impl Iterator<Item = &'a u32>,
        best: &mut Option<ProjectedPoint>,
    ) {
        for &i in idxs {
            let cand = self.eval_segment(q, &self.segments[i as usize]);
            if Self::better(best, &cand) {
                *best = Some(cand);
            }
        }
    }

    /// Nearest on-road point over every lane of the network. `hint` roads are
    /// searched first and accepted when the query is within the off-road
    /// threshold of them; otherwise the full network is searched.
    ///
    /// Panics if the network has no roads (projection precondition).
    pub fn project(&self, q: Vec2, hint: Option<&[usize]>) -> ProjectedPoint {
        assert!(!self.roads.is_empty(), "projection on an empty network");
        if let Some(roads) = hint {
            if !roads.is_empty() {
                let p = self.project_restricted(q, roads);
                if let Some(p) = p {
                    if p.distance_moved <= OFFROAD_THRESHOLD {
                        return p;
                    }
                }
            }
        }
        self.project_global(q)
    }

    /// Nearest on-road point among the given roads only.
    pub fn project_restricted(&self, q: Vec2, roads: &[usize]) -> Option<ProjectedPoint> {
        let set: HashSet<usize> = roads.iter().copied().collect();
        let mut best = None;
        for s in &self.segments {
            if set.contains(&(s.road as usize)) {
                let cand = self.eval_segment(q, s);
                if Self::better(&best, &cand) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    fn project_global(&self, q: Vec2) -> ProjectedPoint {
        let grid = &self.grid;
        let (qx, qy) = SpatialGrid::cell_of(q);
        // Far outside the indexed area the ring walk degenerates; brute force.
        let outside = qx < grid.min_cell.0 - 1
            || qx > grid.max_cell.0 + 1
            || qy < grid.min_cell.1 - 1
            || qy > grid.max_cell.1 + 1;
        if outside {
            let mut best = None;
            self.project_segments(q, (0..self.segments.len() as u32).collect::<Vec<_>>().iter(), &mut best);
            return best.expect("non-empty network");
        }
        let max_ring = (grid.max_cell.0 - grid.min_cell.0)
            .max(grid.max_cell.1 - grid.min_cell.1)
            .max(0)
            + 2;
        let mut best: Option<ProjectedPoint> = None;
        for r in 0..=max_ring {
            // Any segment in an unvisited cell is at least (r-1) cells away.
            if let Some(b) = &best {
                let lower = (r as f64 - 1.0) * GRID_CELL - grid.max_half_width;
                if b.distance_moved <= lower {
                    break;
                }
            }
            for (cx, cy) in ring_cells(qx, qy, r) {
                if let Some(idxs) = grid.cells.get(&(cx, cy)) {
                    self.project_segments(q, idxs.iter(), &mut best);
                }
            }
        }
        best.expect("non-empty network")
    }

    /// Distance from `q` to the nearest lane area; 0 when on-road.
    pub fn offroad_distance(&self, q: Vec2) -> f64 {
        self.project(q, None).distance_moved
    }

    /// Vehicles per kilometer of total lane length on `road`.
    pub fn road_density(&self, road: usize, positions: &[ProjectedPoint]) -> f64 {
        let count = positions.iter().filter(|p| p.road == road).count();
        let km = self.roads[road].total_lane_length() / 1000.0;
        count as f64 / km
    }

    /// Replace one road's lane geometry, leaving connectivity unchanged.
    pub fn edit_road(&self, road: usize, new_lanes: Vec<Lane>) -> Result<RoadNetwork, NetworkError> {
        if road >= self.roads.len() {
            return Err(NetworkError::UnknownRoad(format!("#{road}")));
        }
        let mut roads = self.roads.clone();
        roads[road].lanes = new_lanes;
        Self::assemble(roads, self.signals.clone())
    }

    /// `count` points spaced `interval` meters by arc length along the
    /// reference-lane centerlines of `route`, starting ahead of `start`.
    /// When the route is exhausted the final route point is repeated.
    /// Returns `(point, lane width at point)` pairs.
    pub fn waypoints_along_route(
        &self,
        route: &[usize],
        start: Vec2,
        interval: f64,
        count: usize,
    ) -> Result<Vec<(Vec2, f64)>, NetworkError> {
        assert!(interval > 0.0 && count > 0, "need interval > 0 and count > 0");
        if route.is_empty() {
            return Err(NetworkError::EmptyRoute);
        }
        for w in route.windows(2) {
            if !self.roads[w[0]].successors.contains(&w[1]) {
                return Err(NetworkError::DisconnectedRoute {
                    a: self.roads[w[0]].id.clone(),
                    b: self.roads[w[1]].id.clone(),
                });
            }
        }
        // Station of `start` on the first route road.
        let first = self
            .project_restricted(start, &route[..1])
            .expect("route road has segments");
        let mut road_pos = 0usize;
        let mut station = first.station;
        let mut out = Vec::with_capacity(count);
        let mut exhausted: Option<(Vec2, f64)> = None;
        for _ in 0..count {
            if let Some(last) = exhausted {
                out.push(last);
                continue;
            }
            let mut remaining = interval;
            loop {
                let lane = self.roads[route[road_pos]].reference_lane();
                let left = lane.total_length() - station;
                if remaining <= left {
                    station += remaining;
                    let (p, _, w) = lane.eval_at(station);
                    out.push((p, w));
                    break;
                }
                if road_pos + 1 < route.len() {
                    remaining -= left;
                    road_pos += 1;
                    station = 0.0;
                } else {
                    let (p, _, w) = lane.eval_at(lane.total_length());
                    exhausted = Some((p, w));
                    out.push((p, w));
                    break;
                }
            }
        }
        Ok(out)
    }
}

fn ring_cells(cx: i32, cy: i32, r: i32) -> Vec<(i32, i32)> {
    if r == 0 {
        return vec![(cx, cy)];
    }
    let mut out = Vec::with_capacity((8 * r) as usize);
    for dx in -r..=r {
        out.push((cx + dx, cy - r));
        out.push((cx + dx, cy + r));
    }
    for dy in (-r + 1)..r {
        out.push((cx - r, cy + dy));
        out.push((cx + r, cy + dy));
    }
    out
}

fn derive_junctions(roads: &[Road]) -> Vec<Junction> {
    // A junction forms at the end of every road that has successors; ends
    // within JUNCTION_MERGE_DIST of each other merge.
    let ends: Vec<(usize, Vec2)> = roads
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.successors.is_empty())
        .map(|(i, r)| (i, r.reference_lane().end()))
        .collect();
    let n = ends.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if ends[i].1.dist(ends[j].1) <= JUNCTION_MERGE_DIST {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut junctions: Vec<Junction> = groups
        .into_values()
        .map(|members| {
            let mut incoming: Vec<usize> = members.iter().map(|&m| ends[m].0).collect();
            incoming.sort_unstable();
            let mut outgoing: Vec<usize> = incoming
                .iter()
                .flat_map(|&r| roads[r].successors.iter().copied())
                .collect();
            outgoing.sort_unstable();
            outgoing.dedup();
            let position = members
                .iter()
                .fold(Vec2::ZERO, |acc, &m| acc + ends[m].1)
                / members.len() as f64;
            Junction {
                incoming,
                outgoing,
                position,
            }
        })
        .collect();
    junctions.sort_by_key(|j| j.incoming.clone());
    junctions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{master, RngExt};
    use approx::assert_abs_diff_eq;

    /// Two-road straight corridor: a (0,0)->(100,0), b (100,0)->(200,0).
    pub(crate) fn corridor() -> RoadNetwork {
        let a = Road {
            id: "a".into(),
            lanes: vec![Lane::with_uniform_width(
                vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)],
                3.0,
            )
            .unwrap()],
            successors: vec![1],
        };
        let b = Road {
            id: "b".into(),
            lanes: vec![Lane::with_uniform_width(
                vec![Vec2::new(100.0, 0.0), Vec2::new(200.0, 0.0)],
                3.0,
            )
            .unwrap()],
            successors: vec![],
        };
        RoadNetwork::from_parts(vec![a, b], vec![]).unwrap()
    }

    fn corridor_json() -> &'static str {
        r#"{
          "roads": [
            {"id": "a",
             "lanes": [{"centerline": [[0,0],[100,0]], "width": [3.0,3.0]}],
             "successors": ["b"]},
            {"id": "b",
             "lanes": [{"centerline": [[100,0],[200,0]], "width": [3.0,3.0]}],
             "successors": []}
          ],
          "signals": []
        }"#
    }

    #[test]
    fn corridor_fixture_loads_with_one_junction() {
        let net = RoadNetwork::from_json_str(corridor_json()).unwrap();
        assert_eq!(net.roads().len(), 2);
        assert_eq!(net.junctions().len(), 1);
        assert_eq!(net.junctions()[0].incoming, vec![0]);
        assert_eq!(net.junctions()[0].outgoing, vec![1]);
    }

    #[test]
    fn zero_width_lane_is_rejected() {
        let bad = r#"{"roads": [{"id": "a",
            "lanes": [{"centerline": [[0,0],[100,0]], "width": [0.0, 0.0]}],
            "successors": []}]}"#;
        let err = RoadNetwork::from_json_str(bad).unwrap_err();
        assert!(
            err.to_string().contains("non-positive lane width"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn save_load_round_trip_is_structural_identity() {
        let net = RoadNetwork::from_json_str(corridor_json()).unwrap();
        let text = net.to_json_string();
        let again = RoadNetwork::from_json_str(&text).unwrap();
        assert_eq!(again.to_json_string(), text);
        assert_eq!(again.roads().len(), net.roads().len());
        for (a, b) in net.roads().iter().zip(again.roads()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.successors, b.successors);
            assert_eq!(a.lanes.len(), b.lanes.len());
            for (la, lb) in a.lanes.iter().zip(&b.lanes) {
                assert_eq!(la.centerline, lb.centerline);
                assert_eq!(la.width, lb.width);
            }
        }
    }

    #[test]
    fn on_centerline_point_projects_to_itself() {
        let net = corridor();
        let p = net.project(Vec2::new(37.5, 0.0), None);
        assert_eq!(p.position, Vec2::new(37.5, 0.0));
        assert_eq!(p.distance_moved, 0.0);
        assert_eq!(p.road, 0);
    }

    #[test]
    fn lateral_clamp_at_half_width() {
        // Width 3.0 -> half-width 1.5; a point 3.0 m off is clamped to 1.5 m.
        let net = corridor();
        let p = net.project(Vec2::new(50.0, 3.0), None);
        assert_abs_diff_eq!(p.signed_lateral_offset, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.distance_moved, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.position.y, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.position.x, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn offroad_threshold_is_strict() {
        let net = corridor();
        // Exactly 1.5 m beyond the lane edge is NOT off-road (strict "more than").
        let d = net.offroad_distance(Vec2::new(50.0, 1.5 + 1.5));
        assert_abs_diff_eq!(d, 1.5, epsilon = 1e-12);
        assert!(!(d > OFFROAD_THRESHOLD));
        let d2 = net.offroad_distance(Vec2::new(50.0, 1.5 + 1.5 + 0.001));
        assert!(d2 > OFFROAD_THRESHOLD);
    }

    /// Brute-force oracle: minimum over a dense station grid of the distance
    /// to the half-width disc at each station.
    pub(crate) fn grid_projection_oracle(net: &RoadNetwork, q: Vec2, step: f64) -> f64 {
        let mut best = f64::INFINITY;
        for road in net.roads() {
            for lane in &road.lanes {
                let total = lane.total_length();
                let mut s = 0.0;
                while s <= total {
                    let (c, _, w) = lane.eval_at(s);
                    best = best.min((q.dist(c) - w / 2.0).max(0.0));
                    s += step;
                }
                let (c, _, w) = lane.eval_at(total);
                best = best.min((q.dist(c) - w / 2.0).max(0.0));
            }
        }
        best
    }

    #[test]
    fn projection_matches_dense_grid_oracle() {
        let net = bent_fixture();
        let mut rng = master(42);
        for _ in 0..200 {
            let q = Vec2::new(rng.uniform_in(-30.0, 230.0), rng.uniform_in(-40.0, 80.0));
            let got = net.project(q, None).distance_moved;
            let want = grid_projection_oracle(&net, q, 0.01);
            assert!(
                (got - want).abs() <= 1e-3,
                "query {q}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let net = bent_fixture();
        let mut rng = master(7);
        for _ in 0..200 {
            let q = Vec2::new(rng.uniform_in(-30.0, 230.0), rng.uniform_in(-40.0, 80.0));
            let p1 = net.project(q, None);
            let p2 = net.project(p1.position, None);
            assert!(p1.position.dist(p2.position) < 1e-9);
        }
    }

    /// Three roads with a bend and different widths; exercises the grid.
    pub(crate) fn bent_fixture() -> RoadNetwork {
        let a = Road {
            id: "a".into(),
            lanes: vec![Lane::with_uniform_width(
                vec![Vec2::new(0.0, 0.0), Vec2::new(80.0, 0.0), Vec2::new(120.0, 30.0)],
                3.5,
            )
            .unwrap()],
            successors: vec![1],
        };
        let b = Road {
            id: "b".into(),
            lanes: vec![
                Lane::with_uniform_width(
                    vec![Vec2::new(120.0, 30.0), Vec2::new(200.0, 30.0)],
                    3.0,
                )
                .unwrap(),
                Lane::with_uniform_width(
                    vec![Vec2::new(120.0, 34.0), Vec2::new(200.0, 34.0)],
                    3.0,
                )
                .unwrap(),
            ],
            successors: vec![2],
        };
        let c = Road {
            id: "c".into(),
            lanes: vec![Lane::with_uniform_width(
                vec![Vec2::new(200.0, 30.0), Vec2::new(200.0, -60.0)],
                4.0,
            )
            .unwrap()],
            successors: vec![],
        };
        RoadNetwork::from_parts(vec![a, b, c], vec![]).unwrap()
    }

    #[test]
    fn density_arithmetic_and_enumeration() {
        // One road with two 500 m lanes -> 1.0 km total lane length.
        let r = Road {
            id: "long".into(),
            lanes: vec![
                Lane::with_uniform_width(vec![Vec2::new(0.0, 0.0), Vec2::new(500.0, 0.0)], 3.0)
                    .unwrap(),
                Lane::with_uniform_width(vec![Vec2::new(0.0, 4.0), Vec2::new(500.0, 4.0)], 3.0)
                    .unwrap(),
            ],
            successors: vec![],
        };
        let net = RoadNetwork::from_parts(vec![r], vec![]).unwrap();
        assert_eq!(net.road_density(0, &[]), 0.0);
        let pos: Vec<ProjectedPoint> = (0..4)
            .map(|i| net.project(Vec2::new(100.0 + 50.0 * i as f64, 0.0), None))
            .collect();
        assert_abs_diff_eq!(net.road_density(0, &pos), 4.0, epsilon = 1e-12);

        // Enumeration oracle on a 3-road fixture: hand-count per road.
        let net3 = bent_fixture();
        let mut rng = master(11);
        let queries: Vec<Vec2> = (0..40)
            .map(|_| Vec2::new(rng.uniform_in(0.0, 200.0), rng.uniform_in(-60.0, 40.0)))
            .collect();
        let projected: Vec<ProjectedPoint> =
            queries.iter().map(|&q| net3.project(q, None)).collect();
        for road in 0..3 {
            let hand = projected.iter().filter(|p| p.road == road).count() as f64;
            let km = net3.road(road).total_lane_length() / 1000.0;
            assert_abs_diff_eq!(net3.road_density(road, &projected), hand / km, epsilon = 1e-12);
        }
        // Density is a linear count: doubling the matching vehicles doubles it.
        let doubled: Vec<ProjectedPoint> = projected
            .iter()
            .chain(projected.iter())
            .copied()
            .collect();
        for road in 0..3 {
            assert_abs_diff_eq!(
                net3.road_density(road, &doubled),
                2.0 * net3.road_density(road, &projected),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn light_state_examples_and_periodicity() {
        let s = SignalSchedule {
            road: 0,
            first_green: 0.0,
            green_time: 30.0,
            cycle: 90.0,
        };
        assert_eq!(s.state_at(10.0), LightState::Green);
        // Half-open interval: exactly green_time is red.
        assert_eq!(s.state_at(30.0), LightState::Red);
        assert_eq!(s.state_at(89.999), LightState::Red);
        assert_eq!(s.state_at(90.0), LightState::Green);

        let mut rng = master(3);
        for _ in 0..1000 {
            let t = rng.uniform_in(0.0, 10_000.0);
            assert_eq!(s.state_at(t), s.state_at(t + s.cycle));
        }
        // Duty cycle measured over one cycle equals green_time/cycle.
        let n = 90_000;
        let greens = (0..n)
            .filter(|i| s.state_at(*i as f64 * (90.0 / n as f64)) == LightState::Green)
            .count();
        assert_abs_diff_eq!(greens as f64 / n as f64, 30.0 / 90.0, epsilon = 1e-4);
    }

    #[test]
    fn edit_road_replaces_geometry_and_preserves_connectivity() {
        let net = corridor();
        // Identity edit -> structurally equal.
        let same = net
            .edit_road(0, net.road(0).lanes.clone())
            .unwrap();
        assert_eq!(same.to_json_string(), net.to_json_string());

        // Narrow lane 3.5 -> 2.5: length unchanged, half-width changes.
        let narrow = Lane::with_uniform_width(
            vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)],
            2.5,
        )
        .unwrap();
        let edited = net.edit_road(0, vec![narrow]).unwrap();
        assert_abs_diff_eq!(
            edited.road(0).total_lane_length(),
            net.road(0).total_lane_length(),
            epsilon = 1e-12
        );
        let p = edited.project(Vec2::new(50.0, 3.0), Some(&[0]));
        assert_abs_diff_eq!(p.signed_lateral_offset, 1.25, epsilon = 1e-12);
        assert_eq!(edited.road(0).successors, net.road(0).successors);

        assert!(net.edit_road(99, vec![]).is_err());
    }

    #[test]
    fn edit_road_changes_projection_only_near_edited_road() {
        // Locality oracle: positions near road b keep identical projections
        // when road a is narrowed.
        let net = corridor();
        let narrow = Lane::with_uniform_width(
            vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)],
            2.0,
        )
        .unwrap();
        let edited = net.edit_road(0, vec![narrow]).unwrap();
        let mut rng = master(5);
        let mut projected_b = Vec::new();
        let mut projected_b_edited = Vec::new();
        for _ in 0..50 {
            let q = Vec2::new(rng.uniform_in(120.0, 200.0), rng.uniform_in(-3.0, 3.0));
            projected_b.push(net.project(q, None));
            projected_b_edited.push(edited.project(q, None));
        }
        for (p, q) in projected_b.iter().zip(&projected_b_edited) {
            assert_eq!(p.road, q.road);
            assert!(p.position.dist(q.position) < 1e-12);
        }
        assert_abs_diff_eq!(
            net.road_density(1, &projected_b),
            edited.road_density(1, &projected_b_edited),
            epsilon = 1e-12
        );
    }

    #[test]
    fn waypoints_straight_road_and_padding() {
        let one = Road {
            id: "r".into(),
            lanes: vec![Lane::with_uniform_width(
                vec![Vec2::new(0.0, 0.0), Vec2::new(1000.0, 0.0)],
                3.5,
            )
            .unwrap()],
            successors: vec![],
        };
        let net = RoadNetwork::from_parts(vec![one], vec![]).unwrap();
        let wps = net
            .waypoints_along_route(&[0], Vec2::new(0.0, 0.0), 5.0, 30)
            .unwrap();
        assert_eq!(wps.len(), 30);
        for (i, (p, w)) in wps.iter().enumerate() {
            assert_abs_diff_eq!(p.x, 5.0 * (i + 1) as f64, epsilon = 1e-9);
            assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
            assert_eq!(*w, 3.5);
        }

        // Route exhausted after 10 points: the remaining 20 repeat the end.
        let wps = net
            .waypoints_along_route(&[0], Vec2::new(950.0, 0.0), 5.0, 30)
            .unwrap();
        assert_eq!(wps.len(), 30);
        for (p, _) in &wps[10..] {
            assert_eq!(*p, Vec2::new(1000.0, 0.0));
        }
        assert_abs_diff_eq!(wps[9].0.x, 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn waypoint_spacing_matches_arclength_integration() {
        // Polyline with bends; verify consecutive waypoint stations differ by
        // the interval when integrated numerically along the polyline.
        let zig = Road {
            id: "z".into(),
            lanes: vec![Lane::with_uniform_width(
                vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(30.0, 40.0),
                    Vec2::new(60.0, 0.0),
                    Vec2::new(120.0, 0.0),
                ],
                3.0,
            )
            .unwrap()],
            successors: vec![],
        };
        let net = RoadNetwork::from_parts(vec![zig], vec![]).unwrap();
        let lane = net.road(0).reference_lane().clone();
        let wps = net
            .waypoints_along_route(&[0], Vec2::new(0.0, 0.0), 7.0, 15)
            .unwrap();
        // Numeric arc-length integration: walk the polyline in 1 mm steps and
        // record the station at which each waypoint is (nearly) reached.
        let mut stations = Vec::new();
        for (p, _) in &wps {
            let mut s = 0.0;
            let mut best = (f64::INFINITY, 0.0);
            while s <= lane.total_length() {
                let (c, _, _) = lane.eval_at(s);
                let d = c.dist(*p);
                if d < best.0 {
                    best = (d, s);
                }
                s += 0.001;
            }
            stations.push(best.1);
        }
        for (i, pair) in stations.windows(2).enumerate() {
            let gap = pair[1] - pair[0];
            if stations[i + 1] < lane.total_length() - 0.01 {
                assert!((gap - 7.0).abs() < 0.01, "gap {gap} at {i}");
            }
        }
    }

    #[test]
    fn projection_hint_prefers_route_roads() {
        let net = corridor();
        // Point on the seam projects to road b when hinted there.
        let p = net.project(Vec2::new(100.0, 0.5), Some(&[1]));
        assert_eq!(p.road, 1);
        // Without a hint the tie at the seam breaks to the lower road index.
        let p = net.project(Vec2::new(100.0, 0.5), None);
        assert_eq!(p.road, 0);
        // A hint too far away falls back to the global search.
        let p = net.project(Vec2::new(10.0, 0.0), Some(&[1]));
        assert_eq!(p.road, 0);
    }
}
