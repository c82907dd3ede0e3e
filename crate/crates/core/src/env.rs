//! Gym-style energy-saving environment over the simulation engine.
//!
//! * Action: an N-bit list of desired gNB states, or equivalently an index
//!   in `[0, 2^N)` expanded LSB-first.
//! * Observation: 12 cell-level KPMs for each gNB in cell-id order, then the
//!   total offered demand; `12·N + 1` values.
//! * Reward: normalised throughput minus normalised power minus an activation
//!   cost and a switching cost that decays exponentially with the time since
//!   the previous change.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datalake::{CellKpmRow, Datalake, KpmRecord, CELL_KPM_COUNT};
use crate::energy::EnergyParams;
use crate::engine::Simulation;
use crate::scenario::ScenarioConfig;
use crate::{Error, Result};

/// Largest N for which [`decode_action`] is defined.
pub const MAX_INDEXED_GNBS: usize = 63;

/// Desired activity of each gNB; bit `i` is gNB `i`.
///
/// Serialises as a JSON array of `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionBits(Vec<bool>);

impl ActionBits {
    pub fn from_bools(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidArgument(format!("action bit must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn all_on(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn all_off(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_on(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i] = on;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }

    pub fn count_on(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// Number of positions that differ from `other`.
    pub fn hamming(&self, other: &ActionBits) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Number of cells that are off in `prev` and on in `self`.
    pub fn switched_on_from(&self, prev: &ActionBits) -> usize {
        self.0.iter().zip(&prev.0).filter(|(now, before)| **now && !**before).count()
    }
}

impl Serialize for ActionBits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_bits().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ActionBits {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(d)?;
        ActionBits::from_bits(&bits).map_err(serde::de::Error::custom)
    }
}

/// LSB-first expansion of `index` into `n` bits.
pub fn decode_action(index: u64, n: usize) -> Result<ActionBits> {
    if n > MAX_INDEXED_GNBS {
        return Err(Error::InvalidArgument(format!("indexed actions support at most {MAX_INDEXED_GNBS} gNBs")));
    }
    if index >= 1u64 << n {
        return Err(Error::InvalidArgument(format!("action index {index} outside [0, 2^{n})")));
    }
    Ok(ActionBits((0..n).map(|i| (index >> i) & 1 == 1).collect()))
}

pub fn encode_action(action: &ActionBits) -> u64 {
    action
        .0
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (u64::from(b) << i))
}

pub fn observation_len(n_gnbs: usize) -> usize {
    CELL_KPM_COUNT * n_gnbs + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The 12-value block of gNB `cell`.
    pub fn cell_block(&self, cell: usize) -> &[f64] {
        &self.0[cell * CELL_KPM_COUNT..(cell + 1) * CELL_KPM_COUNT]
    }

    pub fn n_cells(&self) -> usize {
        (self.0.len().saturating_sub(1)) / CELL_KPM_COUNT
    }

    pub fn scenario_kpm(&self) -> f64 {
        *self.0.last().expect("observation is never empty")
    }
}

/// Positions of the KPMs inside one cell block.
pub mod kpm {
    pub const DL_THROUGHPUT_MBPS: usize = 0;
    pub const NUM_ATTACHED_UES: usize = 1;
    pub const PRB_UTILIZATION: usize = 2;
    pub const AVG_SINR_DB: usize = 3;
    pub const AVG_RSRP_DBM: usize = 4;
    pub const POWER_W: usize = 5;
    pub const ENERGY_J_LAST_PERIOD: usize = 6;
    pub const IS_ACTIVE: usize = 7;
    pub const HO_IN: usize = 8;
    pub const HO_OUT: usize = 9;
    pub const AVG_BACKLOG_MBITS: usize = 10;
    pub const QOS_VIOLATION_RATIO: usize = 11;
}

/// Concatenates the gNB rows (anchor excluded) and appends the offered
/// demand.
pub fn get_obs(cell_rows: &[CellKpmRow], n_gnbs: usize, offered_demand_mbps: f64) -> Observation {
    let mut v = Vec::with_capacity(observation_len(n_gnbs));
    for row in cell_rows.iter().filter(|r| r.cell_id < n_gnbs) {
        v.extend_from_slice(&row.kpm_vector());
    }
    v.push(offered_demand_mbps);
    debug_assert_eq!(v.len(), observation_len(n_gnbs));
    Observation(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_throughput: f64,
    pub w_energy: f64,
    pub c_activation: f64,
    pub c_switch: f64,
    /// Decay time constant of the switching cost, seconds.
    pub tau_s: f64,
    pub t_max_mbps: f64,
    pub p_max_w: f64,
}

impl RewardWeights {
    /// Defaults with the power normaliser set to every base station
    /// (gNBs plus anchor) at full load.
    pub fn for_network(n_gnbs: usize, energy: &EnergyParams) -> Self {
        Self {
            w_throughput: 1.0,
            w_energy: 0.5,
            c_activation: 0.05,
            c_switch: 0.05,
            tau_s: 1.0,
            t_max_mbps: 500.0,
            p_max_w: (n_gnbs + 1) as f64 * energy.full_load_w(),
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, value) in [
            ("w_throughput", self.w_throughput),
            ("w_energy", self.w_energy),
            ("c_activation", self.c_activation),
            ("c_switch", self.c_switch),
        ] {
            if !(value >= 0.0) {
                v.push(format!("reward.{name} must be ≥ 0"));
            }
        }
        for (name, value) in [("tau_s", self.tau_s), ("t_max_mbps", self.t_max_mbps), ("p_max_w", self.p_max_w)] {
            if !(value > 0.0) {
                v.push(format!("reward.{name} must be > 0"));
            }
        }
        v
    }
}

/// Raw quantities the reward is computed from. All of them are reported in
/// the step info so the reward can be recomputed outside the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub throughput_mbps: f64,
    pub power_w: f64,
    pub n_on: usize,
    pub n_changed: usize,
    pub t_since_last_change_s: f64,
}

/// Activation plus decayed switching cost.
pub fn switching_penalty(weights: &RewardWeights, n_on: usize, n_changed: usize, t_since_last_change_s: f64) -> f64 {
    weights.c_activation * n_on as f64
        + weights.c_switch * n_changed as f64 * (-t_since_last_change_s / weights.tau_s).exp()
}

pub fn compute_reward(weights: &RewardWeights, inputs: &RewardInputs) -> f64 {
    weights.w_throughput * (inputs.throughput_mbps / weights.t_max_mbps)
        - weights.w_energy * (inputs.power_w / weights.p_max_w)
        - switching_penalty(weights, inputs.n_on, inputs.n_changed, inputs.t_since_last_change_s)
}

pub type Info = BTreeMap<String, f64>;

pub mod info_keys {
    pub const THROUGHPUT_MBPS: &str = "throughput_mbps";
    pub const POWER_W: &str = "power_w";
    pub const ENERGY_J: &str = "energy_j";
    pub const N_ON: &str = "n_on";
    pub const N_CHANGED: &str = "n_changed";
    pub const T_SINCE_LAST_CHANGE_S: &str = "t_since_last_change_s";
    pub const OFFERED_MBPS: &str = "offered_mbps";
    pub const ACTIVE_GNBS: &str = "active_gnbs";
    pub const HANDOVERS: &str = "handovers";
    pub const STEP: &str = "step";
    pub const SIM_TIME_MS: &str = "sim_time_ms";
}

/// Recomputes the reward from the raw fields of a step's info map.
pub fn reward_from_info(weights: &RewardWeights, info: &Info) -> Option<f64> {
    let get = |k: &str| info.get(k).copied();
    Some(compute_reward(
        weights,
        &RewardInputs {
            throughput_mbps: get(info_keys::THROUGHPUT_MBPS)?,
            power_w: get(info_keys::POWER_W)?,
            n_on: get(info_keys::N_ON)? as usize,
            n_changed: get(info_keys::N_CHANGED)? as usize,
            t_since_last_change_s: get(info_keys::T_SINCE_LAST_CHANGE_S)?,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub info: Info,
}

/// The energy-saving environment: one engine instance, its datalake and
/// the cell-level KPM history kept beside it.
#[derive(Debug, Clone)]
pub struct EnergySavingEnv {
    config: ScenarioConfig,
    episode: Option<Episode>,
}

#[derive(Debug, Clone)]
struct Episode {
    sim: Simulation,
    datalake: Datalake,
    cell_history: Vec<CellKpmRow>,
    last_ue_rows: Vec<KpmRecord>,
    prev_action: ActionBits,
    /// Sim time (ms) of the most recent step whose action changed.
    last_change_ms: Option<u64>,
    steps: u64,
    terminated: bool,
}

impl EnergySavingEnv {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let violations = config.validate();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        Ok(Self { config, episode: None })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn n_gnbs(&self) -> usize {
        self.config.n_gnbs
    }

    pub fn observation_len(&self) -> usize {
        observation_len(self.config.n_gnbs)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    /// Starts a new episode and returns the initial observation.
    pub fn reset(&mut self) -> Result<(Observation, Info)> {
        let sim = Simulation::reset(self.config.clone())?;
        let n = sim.n_gnbs();
        let episode = Episode {
            prev_action: ActionBits::all_on(n),
            sim,
            datalake: Datalake::new(),
            cell_history: Vec::new(),
            last_ue_rows: Vec::new(),
            last_change_ms: None,
            steps: 0,
            terminated: false,
        };
        let obs = episode.observation();
        let mut info = Info::new();
        episode.fill_common_info(&mut info);
        self.episode = Some(episode);
        Ok((obs, info))
    }

    pub fn step(&mut self, action: &ActionBits) -> Result<EnvStep> {
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Lifecycle("reset required".into()))?;
        if ep.terminated {
            return Err(Error::Lifecycle("episode terminated; reset required".into()));
        }
        let n = ep.sim.n_gnbs();
        if action.len() != n {
            return Err(Error::InvalidArgument(format!("action has {} bits, expected {n}", action.len())));
        }

        let now_ms = ep.sim.clock().sim_time_ms;
        let n_changed = action.hamming(&ep.prev_action);
        let n_on = action.switched_on_from(&ep.sim.active_gnbs());
        // The first change of an episode pays the full switching cost.
        let t_since_last_change_s = match ep.last_change_ms {
            Some(t) => (now_ms - t) as f64 / 1000.0,
            None => 0.0,
        };
        if n_changed > 0 {
            ep.last_change_ms = Some(now_ms);
        }

        ep.sim.apply_action(action)?;
        let out = ep.sim.tick();
        ep.datalake.insert_ue_rows(&out.ue_rows)?;
        ep.cell_history.extend_from_slice(&out.cell_rows);
        ep.last_ue_rows = out.ue_rows;
        ep.prev_action = action.clone();
        ep.steps += 1;
        ep.terminated = ep.steps >= self.config.episode_steps;

        let inputs = RewardInputs {
            throughput_mbps: ep.sim.total_served_mbps(),
            power_w: ep.sim.total_power_w(),
            n_on,
            n_changed,
            t_since_last_change_s,
        };
        let reward = compute_reward(&self.config.reward, &inputs);

        let mut info = Info::new();
        ep.fill_common_info(&mut info);
        info.insert(info_keys::N_ON.into(), n_on as f64);
        info.insert(info_keys::N_CHANGED.into(), n_changed as f64);
        info.insert(info_keys::T_SINCE_LAST_CHANGE_S.into(), t_since_last_change_s);
        info.insert(
            info_keys::ENERGY_J.into(),
            out.cell_rows.iter().map(|r| r.energy_j_last_period).sum(),
        );
        info.insert(
            info_keys::HANDOVERS.into(),
            out.cell_rows.iter().map(|r| f64::from(r.ho_in)).sum(),
        );

        Ok(EnvStep {
            observation: ep.observation(),
            reward,
            terminated: ep.terminated,
            info,
        })
    }

    pub fn is_terminated(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.terminated)
    }

    pub fn is_reset(&self) -> bool {
        self.episode.is_some()
    }

    pub fn simulation(&self) -> Option<&Simulation> {
        self.episode.as_ref().map(|e| &e.sim)
    }

    pub fn datalake(&self) -> Option<&Datalake> {
        self.episode.as_ref().map(|e| &e.datalake)
    }

    /// Cell-level KPM rows of every completed step, kept outside the datalake.
    pub fn cell_history(&self) -> &[CellKpmRow] {
        self.episode.as_ref().map_or(&[], |e| &e.cell_history)
    }

    /// UE rows emitted by the latest step.
    pub fn last_ue_rows(&self) -> &[KpmRecord] {
        self.episode.as_ref().map_or(&[], |e| &e.last_ue_rows)
    }

    pub fn observation(&self) -> Option<Observation> {
        self.episode.as_ref().map(Episode::observation)
    }
}

impl Episode {
    fn observation(&self) -> Observation {
        get_obs(self.sim.cell_rows(), self.sim.n_gnbs(), self.sim.offered_demand_mbps())
    }

    fn fill_common_info(&self, info: &mut Info) {
        let clock = self.sim.clock();
        info.insert(info_keys::THROUGHPUT_MBPS.into(), self.sim.total_served_mbps());
        info.insert(info_keys::POWER_W.into(), self.sim.total_power_w());
        info.insert(info_keys::OFFERED_MBPS.into(), self.sim.offered_demand_mbps());
        info.insert(info_keys::ACTIVE_GNBS.into(), self.sim.active_gnbs().count_on() as f64);
        info.insert(info_keys::STEP.into(), clock.step_index as f64);
        info.insert(info_keys::SIM_TIME_MS.into(), clock.sim_time_ms as f64);
    }
}
