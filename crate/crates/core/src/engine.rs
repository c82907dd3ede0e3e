//! Discrete-time simulation core.
//!
//! One [`Simulation`] holds the full network state. Each call to
//! [`Simulation::tick`] advances one control period in a fixed order:
//! mobility, channel, handover, service, energy, KPM emission, clock.
//! Actions are applied before the tick with [`Simulation::apply_action`].

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{self, CellKind, LinkTable};
use crate::datalake::{CellKpmRow, Imsi, KpmRecord};
use crate::energy::{cell_power_w, period_energy_j};
use crate::env::ActionBits;
use crate::mobility::{self, TrafficClass, UeState};
use crate::numeric::exact_sum;
use crate::rng::{self, SimRng};
use crate::scenario::{self, Point, ScenarioConfig};
use crate::{Error, Result};

/// Index of a cell: gNBs are `0..N`, the LTE anchor is `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub usize);

impl CellId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Served and offered rates live on a dyadic grid of 2^-20 Mbps (about
/// 1 bit/s) so that totals are exact regardless of summation order.
const RATE_GRID: f64 = (1u64 << 20) as f64;

fn rate_nearest(mbps: f64) -> f64 {
    (mbps * RATE_GRID).round() / RATE_GRID
}

fn rate_floor(mbps: f64) -> f64 {
    (mbps * RATE_GRID).floor() / RATE_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub id: CellId,
    pub kind: CellKind,
    pub position: Point,
    pub active: bool,
    pub attached_ues: BTreeSet<Imsi>,
    pub load: f64,
    pub power_w: f64,
    pub served_mbps: f64,
    pub ho_in: u32,
    pub ho_out: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimClock {
    pub step_index: u64,
    pub sim_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub ue_rows: Vec<KpmRecord>,
    pub cell_rows: Vec<CellKpmRow>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: Arc<ScenarioConfig>,
    clock: SimClock,
    cells: Vec<CellState>,
    ues: Vec<UeState>,
    links: LinkTable,
    mobility_rng: SimRng,
    mobility_enabled: bool,
    cell_rows: Vec<CellKpmRow>,
}

impl Simulation {
    /// Builds the initial state: every gNB active, UEs placed and attached
    /// to the strongest qualifying cell.
    pub fn reset(config: ScenarioConfig) -> Result<Self> {
        let violations = scenario::validate(&config);
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let config = Arc::new(config);
        let seed = config.seed;
        let positions = scenario::place_ues(&config);

        let mut traffic_rng = rng::stream(seed, rng::TRAFFIC);
        let mut mobility_rng = rng::stream(seed, rng::MOBILITY);
        let mut channel_rng = rng::stream(seed, rng::CHANNEL);

        let n_cbr = config.n_cbr_ues();
        let rates = &config.traffic.cbr_rates_mbps;
        let anchor = CellId(config.n_gnbs);
        let ues: Vec<UeState> = positions
            .iter()
            .enumerate()
            .map(|(k, &position)| {
                use rand::Rng;
                let traffic_class = if k < n_cbr {
                    TrafficClass::Cbr {
                        rate_mbps: rates[traffic_rng.random_range(0..rates.len())],
                    }
                } else {
                    TrafficClass::Elastic
                };
                UeState {
                    imsi: Imsi(k as u64 + 1),
                    position,
                    heading: mobility::draw_heading(&mut mobility_rng),
                    speed_mps: mobility::draw_speed(&mut mobility_rng),
                    walk_elapsed_s: 0.0,
                    traffic_class,
                    demand_mbps: 0.0,
                    serving_cell: anchor,
                    backlog_mbits: 0.0,
                    served_mbps: 0.0,
                    sinr_db: 0.0,
                }
            })
            .collect();

        let sites = channel::radio_sites(&config);
        let links = LinkTable::draw(sites.clone(), &positions, config.ue_height_m, &mut channel_rng)?;
        let cells = sites
            .iter()
            .enumerate()
            .map(|(i, site)| CellState {
                id: CellId(i),
                kind: site.kind,
                position: site.position,
                active: true,
                attached_ues: BTreeSet::new(),
                load: 0.0,
                power_w: 0.0,
                served_mbps: 0.0,
                ho_in: 0,
                ho_out: 0,
            })
            .collect();

        let mut sim = Self {
            config,
            clock: SimClock::default(),
            cells,
            ues,
            links,
            mobility_rng,
            mobility_enabled: true,
            cell_rows: Vec::new(),
        };
        for u in 0..sim.ues.len() {
            sim.ues[u].serving_cell = sim.select_serving(u, None);
        }
        sim.rebuild_attachment();
        sim.evaluate_service(false);
        sim.cell_rows = sim.build_cell_rows(0.0);
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn shared_config(&self) -> Arc<ScenarioConfig> {
        Arc::clone(&self.config)
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn ues(&self) -> &[UeState] {
        &self.ues
    }

    pub fn links(&self) -> &LinkTable {
        &self.links
    }

    pub fn n_gnbs(&self) -> usize {
        self.config.n_gnbs
    }

    pub fn anchor(&self) -> CellId {
        CellId(self.config.n_gnbs)
    }

    /// Cell KPMs from the latest tick, or the initial measurement after
    /// reset. One row per cell, anchor last.
    pub fn cell_rows(&self) -> &[CellKpmRow] {
        &self.cell_rows
    }

    /// Freezes or resumes UE movement.
    pub fn set_mobility(&mut self, enabled: bool) {
        self.mobility_enabled = enabled;
    }

    pub fn active_gnbs(&self) -> ActionBits {
        ActionBits::from_bools(self.cells[..self.n_gnbs()].iter().map(|c| c.active).collect())
    }

    /// Total offered downlink demand of the latest period.
    pub fn offered_demand_mbps(&self) -> f64 {
        exact_sum(self.ues.iter().map(|u| u.demand_mbps))
    }

    /// Total served downlink throughput, summed over UEs.
    pub fn total_served_mbps(&self) -> f64 {
        exact_sum(self.ues.iter().map(|u| u.served_mbps))
    }

    /// Total instantaneous power of all base stations, anchor included.
    pub fn total_power_w(&self) -> f64 {
        exact_sum(self.cells.iter().map(|c| c.power_w))
    }

    /// Sets gNB activity. UEs left on a switched-off gNB are re-attached at
    /// once and counted as handovers; loads and powers are refreshed for the
    /// new active set.
    pub fn apply_action(&mut self, action: &ActionBits) -> Result<()> {
        let n = self.n_gnbs();
        if action.len() != n {
            return Err(Error::InvalidArgument(format!(
                "action has {} bits, expected {n}",
                action.len()
            )));
        }
        for (i, cell) in self.cells[..n].iter_mut().enumerate() {
            cell.active = action.is_on(i);
        }
        for u in 0..self.ues.len() {
            let current = self.ues[u].serving_cell;
            if !self.cells[current.index()].active {
                let next = self.select_serving(u, None);
                self.handover(u, next);
            }
        }
        self.rebuild_attachment();
        self.evaluate_service(false);
        Ok(())
    }

    /// Advances one control period and returns the period's telemetry.
    pub fn tick(&mut self) -> TickOutput {
        let dt = self.config.control_period_s();

        if self.mobility_enabled {
            let bounds = self.config.area_bounds;
            for ue in &mut self.ues {
                mobility::step_mobility(ue, dt, &bounds, &mut self.mobility_rng);
            }
        }

        let positions: Vec<Point> = self.ues.iter().map(|u| u.position).collect();
        self.links
            .update(&positions)
            .expect("validated config yields valid path-loss arguments");

        for u in 0..self.ues.len() {
            let current = self.ues[u].serving_cell;
            let next = self.select_serving(u, Some(current));
            if next != current {
                self.handover(u, next);
            }
        }
        self.rebuild_attachment();

        self.evaluate_service(true);

        let timestamp_ms = self.clock.sim_time_ms;
        let ue_rows = self
            .ues
            .iter()
            .enumerate()
            .map(|(u, ue)| KpmRecord {
                imsi: ue.imsi,
                timestamp_ms,
                serving_cell_id: ue.serving_cell.index(),
                dl_throughput_mbps: ue.served_mbps,
                sinr_db: ue.sinr_db,
                rsrp_dbm: self.links.rsrp_dbm(u, ue.serving_cell.index()),
                demand_mbps: ue.demand_mbps,
                backlog_mbits: ue.backlog_mbits,
            })
            .collect();
        self.cell_rows = self.build_cell_rows(dt);
        let cell_rows = self.cell_rows.clone();

        self.clock.step_index += 1;
        self.clock.sim_time_ms = self.clock.step_index * self.config.control_period_ms;
        for cell in &mut self.cells {
            cell.ho_in = 0;
            cell.ho_out = 0;
        }

        TickOutput { ue_rows, cell_rows }
    }

    fn handover(&mut self, u: usize, to: CellId) {
        let from = self.ues[u].serving_cell;
        if from == to {
            return;
        }
        self.cells[from.index()].ho_out += 1;
        self.cells[to.index()].ho_in += 1;
        self.ues[u].serving_cell = to;
    }

    /// Strongest active gNB at or above the RSRP floor; ties go to the
    /// lowest cell id.
    fn best_gnb(&self, u: usize) -> Option<(usize, f64)> {
        let floor = self.config.min_rsrp_dbm;
        let mut best: Option<(usize, f64)> = None;
        for c in 0..self.n_gnbs() {
            if !self.cells[c].active {
                continue;
            }
            let rsrp = self.links.rsrp_dbm(u, c);
            if rsrp >= floor && best.is_none_or(|(_, b)| rsrp > b) {
                best = Some((c, rsrp));
            }
        }
        best
    }

    /// Attachment rule. A UE on a usable gNB only moves when a candidate
    /// beats it by more than the hysteresis margin; a UE without a usable
    /// gNB (or on the anchor) takes the best qualifying gNB, falling back
    /// to the LTE anchor.
    fn select_serving(&self, u: usize, current: Option<CellId>) -> CellId {
        let n = self.n_gnbs();
        let best = self.best_gnb(u);
        match current {
            Some(c) if c.index() < n && self.cells[c.index()].active => {
                let serving_rsrp = self.links.rsrp_dbm(u, c.index());
                if serving_rsrp >= self.config.min_rsrp_dbm {
                    return match best {
                        Some((b, rsrp)) if b != c.index() && rsrp > serving_rsrp + self.config.hysteresis_db => {
                            CellId(b)
                        }
                        _ => c,
                    };
                }
                best.map_or(self.anchor(), |(b, _)| CellId(b))
            }
            _ => best.map_or(self.anchor(), |(b, _)| CellId(b)),
        }
    }

    fn rebuild_attachment(&mut self) {
        for cell in &mut self.cells {
            cell.attached_ues.clear();
        }
        for ue in &self.ues {
            self.cells[ue.serving_cell.index()].attached_ues.insert(ue.imsi);
        }
    }

    /// Equal bandwidth split per cell, SINR, served rate, PRB load and
    /// power. `settle` books the period against UE backlogs.
    fn evaluate_service(&mut self, settle: bool) {
        let cfg = Arc::clone(&self.config);
        let dt = cfg.control_period_s();
        let active: Vec<bool> = self.cells.iter().map(|c| c.active).collect();
        let counts: Vec<usize> = self.cells.iter().map(|c| c.attached_ues.len()).collect();
        let mut used_hz = vec![0.0; self.cells.len()];

        for (u, ue) in self.ues.iter_mut().enumerate() {
            let c = ue.serving_cell.index();
            let bandwidth = self.links.sites()[c].bandwidth_hz;
            let share = bandwidth / counts[c] as f64;
            let demand = rate_nearest(mobility::traffic_demand(ue, dt, &cfg.traffic));
            let sinr = self
                .links
                .sinr_db(u, c, &active, cfg.noise_figure_db)
                .expect("UEs are never attached to inactive cells");
            let capacity = channel::ue_capacity_mbps(sinr, share, cfg.max_spectral_efficiency);
            let served = rate_floor(channel::ue_throughput_mbps(sinr, share, cfg.max_spectral_efficiency, demand));

            used_hz[c] += if capacity > 0.0 {
                share * (served / capacity).min(1.0)
            } else if demand > 0.0 {
                share
            } else {
                0.0
            };

            ue.demand_mbps = demand;
            ue.sinr_db = sinr;
            ue.served_mbps = served;
            if settle {
                mobility::settle_backlog(ue, served, dt);
            }
        }

        for (c, cell) in self.cells.iter_mut().enumerate() {
            let bandwidth = self.links.sites()[c].bandwidth_hz;
            cell.load = if cell.active {
                (used_hz[c] / bandwidth).clamp(0.0, 1.0)
            } else {
                0.0
            };
            cell.power_w = cell_power_w(cell.active, cell.load, &cfg.energy).expect("load clamped to [0, 1]");
            cell.served_mbps = cell
                .attached_ues
                .iter()
                .map(|imsi| self.ues[(imsi.0 - 1) as usize].served_mbps)
                .sum();
        }
    }

    fn build_cell_rows(&self, dt_s: f64) -> Vec<CellKpmRow> {
        self.cells
            .iter()
            .map(|cell| {
                let members: Vec<(usize, &UeState)> = cell
                    .attached_ues
                    .iter()
                    .map(|imsi| {
                        let u = (imsi.0 - 1) as usize;
                        (u, &self.ues[u])
                    })
                    .collect();
                let n = members.len();
                let mean = |f: &dyn Fn(usize, &UeState) -> f64| -> f64 {
                    if n == 0 {
                        0.0
                    } else {
                        members.iter().map(|&(u, ue)| f(u, ue)).sum::<f64>() / n as f64
                    }
                };
                let violations = members.iter().filter(|(_, ue)| ue.served_mbps < ue.demand_mbps).count();
                CellKpmRow {
                    cell_id: cell.id.index(),
                    timestamp_ms: self.clock.sim_time_ms,
                    dl_throughput_mbps: cell.served_mbps,
                    num_attached_ues: n as u32,
                    prb_utilization: cell.load,
                    avg_sinr_db: mean(&|_, ue| ue.sinr_db),
                    avg_rsrp_dbm: mean(&|u, _| self.links.rsrp_dbm(u, cell.id.index())),
                    power_w: cell.power_w,
                    energy_j_last_period: period_energy_j(cell.power_w, dt_s),
                    is_active: cell.active,
                    ho_in: cell.ho_in,
                    ho_out: cell.ho_out,
                    avg_backlog_mbits: mean(&|_, ue| ue.backlog_mbits),
                    qos_violation_ratio: if n == 0 { 0.0 } else { violations as f64 / n as f64 },
                }
            })
            .collect()
    }
}
