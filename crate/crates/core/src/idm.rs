//! Synthetic expert traffic: intelligent-driver-model (IDM) car following
//! along route centerlines, with red signals treated as a standing lead
//! vehicle at the stop line.
//!
//! The generator is single-lane-per-road and longitudinal only; it exists to
//! produce desk-scale ground truth with known dynamics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::rng::{agent_stream, Purpose, RngExt};
use crate::roadnet::{LightState, RoadNetwork};
use crate::traj::{AgentRecord, TrajectoryDataset, VehicleType, VEHICLE_TYPES};

/// How far ahead (meters) a vehicle looks for a leader.
const LEADER_LOOKAHEAD: f64 = 200.0;
/// Discrete-integration guard: never advance closer than this to a leader.
const CONTACT_BUFFER: f64 = 0.05;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("spawn {index}: unknown road id {road}")]
    UnknownRoad { index: usize, road: String },
    #[error("spawn {index}: empty route")]
    EmptyRoute { index: usize },
    #[error("spawn {index}: route roads {a} -> {b} are not connected")]
    DisconnectedRoute { index: usize, a: String, b: String },
}

/// Longitudinal IDM parameters for one vehicle type.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    /// m/s
    pub desired_speed: f64,
    /// m/s^2
    pub max_accel: f64,
    /// m/s^2
    pub comfort_decel: f64,
    /// m
    pub min_gap: f64,
    /// s
    pub time_headway: f64,
}

impl IdmParams {
    /// IDM acceleration given own speed, gap to the leader, and leader speed.
    pub fn acceleration(&self, v: f64, gap: Option<(f64, f64)>, _t: f64) -> f64 {
        let free = 1.0 - (v / self.desired_speed).powi(4);
        let interaction = match gap {
            None => 0.0,
            Some((gap, v_lead)) => {
                let gap = gap.max(1e-3);
                let dv = v - v_lead;
                let desired_gap = self.min_gap
                    + v * self.time_headway
                    + v * dv / (2.0 * (self.max_accel * self.comfort_decel).sqrt());
                (desired_gap.max(0.0) / gap).powi(2)
            }
        };
        self.max_accel * (free - interaction)
    }

    /// Steady-state gap behind a leader cruising at `v` (exact closed form).
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        let desired_gap = self.min_gap + v * self.time_headway;
        desired_gap / (1.0 - (v / self.desired_speed).powi(4)).sqrt()
    }
}

/// Per-type IDM parameters, indexed by [`VehicleType::index`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdmTable(pub [IdmParams; 6]);

impl Default for IdmTable {
    /// Tuned per-type values: desired speed differs for buses and heavy
    /// vehicles; the remaining parameters are shared.
    fn default() -> Self {
        let base = |desired_speed: f64| IdmParams {
            desired_speed,
            max_accel: 2.5,
            comfort_decel: 10.0,
            min_gap: 0.1,
            time_headway: 0.1,
        };
        IdmTable([
            base(30.0),  // motorcycle
            base(30.0),  // car
            base(30.0),  // taxi
            base(11.70), // bus
            base(30.0),  // medium
            base(17.38), // heavy
        ])
    }
}

impl IdmTable {
    pub fn get(&self, ty: VehicleType) -> &IdmParams {
        &self.0[ty.index()]
    }
}

/// One requested vehicle in a demand schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    pub spawn_time: f64,
    /// Road ids, pairwise connected.
    pub route: Vec<String>,
    #[serde(rename = "type")]
    pub vehicle_type: VehicleType,
}

struct Vehicle {
    id: u64,
    ty: VehicleType,
    route: Vec<usize>,
    /// Cumulative station of each route road's start, plus the total.
    route_cum: Vec<f64>,
    station: f64,
    speed: f64,
    first_step: i64,
    positions: Vec<Vec2>,
}

impl Vehicle {
    fn road_pos(&self) -> (usize, f64) {
        let mut k = 0;
        while k + 1 < self.route.len() && self.station >= self.route_cum[k + 1] {
            k += 1;
        }
        (k, self.station - self.route_cum[k])
    }

    fn total_length(&self) -> f64 {
        *self.route_cum.last().unwrap()
    }
}

/// Generate an IDM-driven expert dataset on `network` from a demand schedule.
/// Deterministic given `seed` (used for per-vehicle initial speeds).
pub fn generate_synthetic_expert(
    network: &RoadNetwork,
    demand: &[SpawnSpec],
    idm: &IdmTable,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryDataset, GenError> {
    // Bind road ids and validate connectivity up front.
    let mut spawns = Vec::with_capacity(demand.len());
    for (index, s) in demand.iter().enumerate() {
        if s.route.is_empty() {
            return Err(GenError::EmptyRoute { index });
        }
        let route: Vec<usize> = s
            .route
            .iter()
            .map(|id| {
                network
                    .road_index(id)
                    .ok_or_else(|| GenError::UnknownRoad {
                        index,
                        road: id.clone(),
                    })
            })
            .collect::<Result<_, _>>()?;
        for w in route.windows(2) {
            if !network.road(w[0]).successors.contains(&w[1]) {
                return Err(GenError::DisconnectedRoute {
                    index,
                    a: network.road(w[0]).id.clone(),
                    b: network.road(w[1]).id.clone(),
                });
            }
        }
        let spawn_step = (s.spawn_time / dt).ceil() as i64;
        spawns.push((spawn_step, route, s.vehicle_type));
    }
    spawns.sort_by_key(|(step, _, _)| *step);

    let steps = (horizon / dt).floor() as i64;
    let mut pending: std::collections::VecDeque<(i64, Vec<usize>, VehicleType, u64)> = spawns
        .into_iter()
        .enumerate()
        .map(|(i, (step, route, ty))| (step, route, ty, i as u64 + 1))
        .collect();
    let mut active: Vec<Vehicle> = Vec::new();
    let mut finished: Vec<Vehicle> = Vec::new();

    for step in 0..=steps {
        let t = step as f64 * dt;

        // Spawn due vehicles whose entry point is clear.
        let mut still_pending = std::collections::VecDeque::new();
        while let Some((spawn_step, route, ty, id)) = pending.pop_front() {
            if spawn_step > step {
                still_pending.push_back((spawn_step, route, ty, id));
                continue;
            }
            let entry_road = route[0];
            let blocked = active.iter().any(|v| {
                let (k, s_on) = v.road_pos();
                v.route[k] == entry_road && s_on < idm.get(ty).min_gap + 2.0
            });
            if blocked {
                still_pending.push_back((spawn_step, route, ty, id));
                continue;
            }
            let mut cum = vec![0.0];
            for &r in &route {
                let len = network.road(r).reference_lane().total_length();
                cum.push(cum.last().unwrap() + len);
            }
            let params = idm.get(ty);
            let mut rng = agent_stream(seed, 0, id, Purpose::SpawnInit);
            let v0 = rng.uniform_in(0.0, (params.desired_speed / 2.0).min(5.0));
            active.push(Vehicle {
                id,
                ty,
                route,
                route_cum: cum,
                station: 0.0,
                speed: v0,
                first_step: step,
                positions: Vec::new(),
            });
        }
        pending = still_pending;
        active.sort_by_key(|v| v.id);

        // Record positions at this step.
        for v in &mut active {
            let (k, s_on) = v.road_pos();
            let (p, _, _) = network.road(v.route[k]).reference_lane().eval_at(s_on);
            v.positions.push(p);
        }

        // Per-road occupancy for leader lookup: (road, station, speed, id).
        let mut occupancy: Vec<(usize, f64, f64, u64)> = active
            .iter()
            .map(|v| {
                let (k, s_on) = v.road_pos();
                (v.route[k], s_on, v.speed, v.id)
            })
            .collect();
        occupancy.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());

        // Synchronous update: accelerations from current state only.
        let mut advances = Vec::with_capacity(active.len());
        for v in &active {
            let params = idm.get(v.ty);
            let (k, s_on) = v.road_pos();
            let leader = find_leader(network, v, k, s_on, &occupancy, t);
            let accel = params.acceleration(v.speed, leader.map(|(g, vl)| (g, vl)), t);
            let v_new = (v.speed + accel * dt).max(0.0);
            let mut advance = 0.5 * (v.speed + v_new) * dt;
            if let Some((gap, _)) = leader {
                advance = advance.min((gap - CONTACT_BUFFER).max(0.0));
            }
            let v_consistent = (2.0 * advance / dt - v.speed).max(0.0);
            advances.push((advance, v_consistent.min(v_new)));
        }
        for (v, (advance, v_new)) in active.iter_mut().zip(advances) {
            v.station += advance;
            v.speed = v_new;
        }

        // Retire vehicles that ran off their route end.
        let mut i = 0;
        while i < active.len() {
            if active[i].station >= active[i].total_length() {
                finished.push(active.remove(i));
            } else {
                i += 1;
            }
        }
    }
    finished.extend(active);
    finished.sort_by_key(|v| v.id);

    let agents = finished
        .into_iter()
        .filter(|v| !v.positions.is_empty())
        .map(|v| AgentRecord {
            id: v.id,
            vehicle_type: v.ty,
            first_step: v.first_step,
            positions: v.positions,
            route: v.route,
        })
        .collect();
    Ok(TrajectoryDataset { dt, agents })
}

/// Nearest constraint ahead of the vehicle along its route: a real leader or,
/// on a red light, a standing phantom at the current road's stop line.
/// Returns `(gap, leader_speed)`.
fn find_leader(
    network: &RoadNetwork,
    v: &Vehicle,
    k: usize,
    s_on: f64,
    occupancy: &[(usize, f64, f64, u64)],
    t: f64,
) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut ahead = -s_on; // distance from me to the start of road k' below
    for k2 in k..v.route.len() {
        let road = v.route[k2];
        let road_len = network.road(road).reference_lane().total_length();
        if ahead > LEADER_LOOKAHEAD {
            break;
        }
        let lo = occupancy.partition_point(|e| e.0 < road);
        for e in &occupancy[lo..] {
            if e.0 != road {
                break;
            }
            let gap = ahead + e.1;
            if gap > 0.0 && e.3 != v.id {
                if best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, e.2));
                }
                break; // occupancy is sorted by station; first ahead is nearest
            }
        }
        ahead += road_len;
    }
    // Red light: phantom standing vehicle at the current road's stop line.
    if let Some(sig) = network.signal_for_road(v.route[k]) {
        if sig.state_at(t) == LightState::Red {
            let gap = network.road(v.route[k]).reference_lane().total_length() - s_on;
            if gap > 0.0 && best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, 0.0));
            }
        }
    }
    best
}

/// Demand schedule JSON ([{spawn_time, route, type}]) helpers.
pub fn load_demand(path: impl AsRef<std::path::Path>) -> anyhow::Result<Vec<SpawnSpec>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_demand(path: impl AsRef<std::path::Path>, demand: &[SpawnSpec]) -> anyhow::Result<()> {
    Ok(std::fs::write(
        path.as_ref(),
        serde_json::to_string_pretty(demand)?,
    )?)
}

/// All six types with their default parameters, for table-driven tests.
pub fn default_params_by_type() -> Vec<(VehicleType, IdmParams)> {
    let table = IdmTable::default();
    VEHICLE_TYPES.into_iter().map(|t| (t, *table.get(t))).collect()
}
