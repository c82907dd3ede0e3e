//! UE mobility (bounded random walk) and downlink traffic demand.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datalake::Imsi;
use crate::engine::CellId;
use crate::scenario::{Point, Rect, TrafficConfig};

pub const MIN_SPEED_MPS: f64 = 1.0;
pub const MAX_SPEED_MPS: f64 = 3.0;
/// Heading and speed are re-drawn after this much walking time.
pub const WALK_EPOCH_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrafficClass {
    /// Constant bit rate (UDP-like); unserved traffic queues up.
    Cbr { rate_mbps: f64 },
    /// Full-buffer up to the elastic cap (TCP-like); nothing queues.
    Elastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    pub imsi: Imsi,
    pub position: Point,
    pub heading: f64,
    pub speed_mps: f64,
    /// Walking time since the last heading/speed draw.
    pub walk_elapsed_s: f64,
    pub traffic_class: TrafficClass,
    pub demand_mbps: f64,
    pub serving_cell: CellId,
    pub backlog_mbits: f64,
    pub served_mbps: f64,
    pub sinr_db: f64,
}

pub fn draw_heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..TAU)
}

pub fn draw_speed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(MIN_SPEED_MPS..=MAX_SPEED_MPS)
}

/// Folds `v` back into `[lo, hi]` by mirroring at the walls. Returns the
/// folded value and whether the direction of travel flipped.
fn reflect(mut v: f64, lo: f64, hi: f64) -> (f64, bool) {
    let mut flipped = false;
    while v < lo || v > hi {
        if v < lo {
            v = 2.0 * lo - v;
        } else {
            v = 2.0 * hi - v;
        }
        flipped = !flipped;
    }
    (v, flipped)
}

fn normalize_heading(h: f64) -> f64 {
    let h = h.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU
    if h >= TAU {
        0.0
    } else {
        h
    }
}

/// Advances the UE by `speed·dt` along its heading, reflecting off the area
/// walls. Heading and speed are re-drawn every [`WALK_EPOCH_S`].
pub fn step_mobility<R: Rng + ?Sized>(ue: &mut UeState, dt_s: f64, bounds: &Rect, rng: &mut R) {
    debug_assert!(dt_s > 0.0);
    let step = ue.speed_mps * dt_s;
    let (x, flip_x) = reflect(ue.position.x + step * ue.heading.cos(), bounds.min_x, bounds.max_x);
    let (y, flip_y) = reflect(ue.position.y + step * ue.heading.sin(), bounds.min_y, bounds.max_y);
    ue.position = Point::new(x, y);

    let mut heading = ue.heading;
    if flip_x {
        heading = std::f64::consts::PI - heading;
    }
    if flip_y {
        heading = -heading;
    }
    ue.heading = normalize_heading(heading);

    ue.walk_elapsed_s += dt_s;
    // tolerance absorbs accumulated rounding of repeated 0.1 s steps
    if ue.walk_elapsed_s + 1e-9 >= WALK_EPOCH_S {
        ue.walk_elapsed_s = (ue.walk_elapsed_s - WALK_EPOCH_S).max(0.0);
        ue.heading = draw_heading(rng);
        ue.speed_mps = draw_speed(rng);
    }
}

/// Offered downlink rate for the coming period: the class base rate plus
/// whatever backlog is waiting to be drained within `dt_s`.
pub fn traffic_demand(ue: &UeState, dt_s: f64, traffic: &TrafficConfig) -> f64 {
    let base = match ue.traffic_class {
        TrafficClass::Cbr { rate_mbps } => rate_mbps,
        TrafficClass::Elastic => traffic.elastic_cap_mbps,
    };
    base + ue.backlog_mbits / dt_s
}

/// Books `served_mbps` against the period's demand. Unserved CBR traffic
/// stays queued; elastic flows back off instead of queueing.
pub fn settle_backlog(ue: &mut UeState, served_mbps: f64, dt_s: f64) {
    ue.backlog_mbits = match ue.traffic_class {
        TrafficClass::Cbr { .. } => ((ue.demand_mbps - served_mbps) * dt_s).max(0.0),
        TrafficClass::Elastic => 0.0,
    };
}
