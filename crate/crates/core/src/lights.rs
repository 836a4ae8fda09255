//! Traffic-light schedule estimation from recorded trajectories.
//!
//! Vehicles stopping and starting near a signaled road's stop line betray the
//! signal's phase: start events whose gap to the previous start exceeds seven
//! seconds are treated as candidate green onsets, and the onset grid
//! (first green time at 0.01 s resolution, cycle of 45 or 90 s) that best
//! matches them is selected by a matching cost. Red onsets, from stop events,
//! give the green duration the same way.

use rayon::prelude::*;

use crate::roadnet::{RoadNetwork, SignalSchedule};
use crate::traj::TrajectoryDataset;

/// Speed threshold for stop/start events, m/s.
const SPEED_THRESHOLD: f64 = 0.5;
/// Events count only within this distance of the stop line, meters.
const STOP_LINE_RADIUS: f64 = 30.0;
/// Start/stop events closer than this to the previous one are queue
/// discharge, not phase changes, seconds.
const EVENT_GAP: f64 = 7.0;
/// A candidate matches a predicted onset within this tolerance, seconds.
const MATCH_TOL: f64 = 2.0;
/// Enumeration resolution for the first onset, seconds.
const ENUM_STEP: f64 = 0.01;
/// Candidate cycle lengths, seconds.
const CYCLES: [f64; 2] = [45.0, 90.0];
/// Minimum candidate events for an estimate.
const MIN_CANDIDATES: usize = 3;

/// Estimation result for one road.
#[derive(Clone, Debug)]
pub struct LightEstimate {
    pub road: usize,
    /// `None` when fewer than three candidate events were found.
    pub schedule: Option<SignalSchedule>,
    pub green_candidates: usize,
    pub red_candidates: usize,
}

/// Fit of a periodic onset grid to candidate event times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnsetFit {
    /// -1 per matched candidate, +1 per unmatched predicted onset.
    pub cost: i64,
    /// Total |event - onset| over matched candidates; deterministic tie break.
    pub abs_dev: f64,
    /// First onset in `[0, cycle)`.
    pub first: f64,
    pub cycle: f64,
}

/// Estimate schedules for `signaled_roads`. Per-road estimation is
/// independent; results are returned in input order.
pub fn estimate_traffic_lights(
    dataset: &TrajectoryDataset,
    network: &RoadNetwork,
    signaled_roads: &[usize],
) -> Vec<LightEstimate> {
    let window = (
        dataset.first_step() as f64 * dataset.dt,
        dataset.last_step() as f64 * dataset.dt,
    );
    signaled_roads
        .par_iter()
        .map(|&road| estimate_road(dataset, network, road, window))
        .collect()
}

fn estimate_road(
    dataset: &TrajectoryDataset,
    network: &RoadNetwork,
    road: usize,
    window: (f64, f64),
) -> LightEstimate {
    let (starts, stops) = stop_start_events(dataset, network, road);
    let green_candidates = phase_candidates(&starts);
    let red_candidates = phase_candidates(&stops);
    if green_candidates.len() < MIN_CANDIDATES || red_candidates.len() < MIN_CANDIDATES {
        return LightEstimate {
            road,
            schedule: None,
            green_candidates: green_candidates.len(),
            red_candidates: red_candidates.len(),
        };
    }
    let green_fit = CYCLES
        .iter()
        .map(|&cycle| fit_onsets(&green_candidates, window, cycle))
        .min_by(|a, b| {
            (a.cost, a.abs_dev, a.cycle, a.first)
                .partial_cmp(&(b.cost, b.abs_dev, b.cycle, b.first))
                .unwrap()
        })
        .unwrap();
    // Red onsets share the chosen cycle.
    let red_fit = fit_onsets(&red_candidates, window, green_fit.cycle);
    let green_time = (red_fit.first - green_fit.first).rem_euclid(green_fit.cycle);
    let schedule = if green_time > 0.0 && green_time < green_fit.cycle {
        Some(SignalSchedule {
            road,
            first_green: green_fit.first,
            green_time,
            cycle: green_fit.cycle,
        })
    } else {
        None
    };
    LightEstimate {
        road,
        schedule,
        green_candidates: green_candidates.len(),
        red_candidates: red_candidates.len(),
    }
}

/// Start and stop event times near the road's stop line, each sorted.
fn stop_start_events(
    dataset: &TrajectoryDataset,
    network: &RoadNetwork,
    road: usize,
) -> (Vec<f64>, Vec<f64>) {
    let lane = network.road(road).reference_lane();
    let lane_len = lane.total_length();
    let mut starts = Vec::new();
    let mut stops = Vec::new();
    for agent in &dataset.agents {
        if !agent.route.contains(&road) {
            continue;
        }
        for k in 1..agent.positions.len() {
            let prev = agent.positions[k - 1];
            let cur = agent.positions[k];
            let speed_prev = if k >= 2 {
                agent.positions[k - 2].dist(prev) / dataset.dt
            } else {
                continue;
            };
            let speed = prev.dist(cur) / dataset.dt;
            let crossing_down = speed_prev >= SPEED_THRESHOLD && speed < SPEED_THRESHOLD;
            let crossing_up = speed_prev < SPEED_THRESHOLD && speed >= SPEED_THRESHOLD;
            if !(crossing_down || crossing_up) {
                continue;
            }
            let Some(p) = network.project_restricted(cur, &[road]) else {
                continue;
            };
            if p.distance_moved > 3.0 || lane_len - p.station > STOP_LINE_RADIUS {
                continue;
            }
            let t = (agent.first_step + k as i64) as f64 * dataset.dt;
            if crossing_down {
                stops.push(t);
            } else {
                starts.push(t);
            }
        }
    }
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (starts, stops)
}

/// Keep events whose gap to the previous event exceeds [`EVENT_GAP`]; these
/// mark phase changes rather than queue discharge.
fn phase_candidates(events: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, &t) in events.iter().enumerate() {
        if i == 0 || t - events[i - 1] > EVENT_GAP {
            out.push(t);
        }
    }
    out
}

/// Exhaustive onset-grid fit for one cycle length: enumerate the first onset
/// over `[0, cycle)` at [`ENUM_STEP`] resolution and score each grid by the
/// matching cost. Ties break toward the smallest total deviation, then the
/// earliest onset.
pub fn fit_onsets(candidates: &[f64], window: (f64, f64), cycle: f64) -> OnsetFit {
    let n_grid = (cycle / ENUM_STEP).round() as usize;
    let mut best = OnsetFit {
        cost: i64::MAX,
        abs_dev: f64::INFINITY,
        first: 0.0,
        cycle,
    };
    for i in 0..n_grid {
        let fg = i as f64 * ENUM_STEP;
        let fit = score_grid(candidates, window, cycle, fg);
        if (fit.cost, fit.abs_dev, fit.first)
            .partial_cmp(&(best.cost, best.abs_dev, best.first))
            == Some(std::cmp::Ordering::Less)
        {
            best = fit;
        }
    }
    best
}

fn score_grid(candidates: &[f64], window: (f64, f64), cycle: f64, fg: f64) -> OnsetFit {
    let mut cost = 0i64;
    let mut abs_dev = 0.0;
    // Matched candidates: distance to the nearest onset of the infinite grid.
    for &c in candidates {
        let phase = (c - fg).rem_euclid(cycle);
        let dev = phase.min(cycle - phase);
        if dev <= MATCH_TOL {
            cost -= 1;
            abs_dev += dev;
        }
    }
    // Unmatched predicted onsets inside the observation window.
    let k0 = ((window.0 - fg) / cycle).ceil() as i64;
    let k1 = ((window.1 - fg) / cycle).floor() as i64;
    for k in k0..=k1 {
        let onset = fg + k as f64 * cycle;
        let matched = candidates.iter().any(|&c| (c - onset).abs() <= MATCH_TOL);
        if !matched {
            cost += 1;
        }
    }
    OnsetFit {
        cost,
        abs_dev,
        first: fg,
        cycle,
    }
}
