//! Heuristic controllers and the episode runner.
//!
//! Controllers see exactly what an external agent sees: the observation
//! vector. The runner records one [`StepRow`] per step; report totals are
//! plain sums over those rows, so they can be audited from the exported CSV.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{info_keys, kpm, ActionBits, EnergySavingEnv, EnvStep, Info, Observation};
use crate::protocol::WireMessage;
use crate::rng::{self, SimRng};
use crate::scenario::{Point, ScenarioConfig};

pub const SUMMARY_CSV_HEADER: &str = "controller,seed,energy_j,mean_tput_mbps,switches,reward_sum";
pub const STEPS_CSV_HEADER: &str =
    "step,sim_time_ms,throughput_mbps,power_w,energy_j,n_on,n_changed,active_gnbs,reward";

/// Neighbours of a gNB are the gNBs within this factor of its nearest
/// neighbour distance.
const NEIGHBOUR_SLACK: f64 = 1.1;
const EXTERNAL_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    /// A gNB with fewer attached UEs than this is a switch-off candidate.
    pub u_low: u32,
    /// PRB utilisation above which a cell counts as overloaded.
    pub theta_high: f64,
    /// Minimum steps between two changes of the same cell.
    pub hold_steps: u64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            u_low: 2,
            theta_high: 0.8,
            hold_steps: 10,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.hold_steps < 1 {
            return Err("hold_steps must be ≥ 1".into());
        }
        if !(self.theta_high > 0.0 && self.theta_high <= 1.0) {
            return Err("theta_high must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    AllOn,
    Random,
    Threshold(ThresholdParams),
    /// Actions come from an agent listening at this address.
    External(String),
}

impl Controller {
    pub fn label(&self) -> &'static str {
        match self {
            Controller::AllOn => "all_on",
            Controller::Random => "random",
            Controller::Threshold(_) => "threshold",
            Controller::External(_) => "external",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Controller::External(addr) => write!(f, "external:{addr}"),
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for Controller {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all_on" | "all-on" => Ok(Controller::AllOn),
            "random" => Ok(Controller::Random),
            "threshold" => Ok(Controller::Threshold(ThresholdParams::default())),
            other => match other.strip_prefix("external:") {
                Some(addr) if !addr.is_empty() => Ok(Controller::External(s["external:".len()..].to_string())),
                _ => Err(format!(
                    "unknown controller {s:?} (expected all_on, random, threshold or external:<host:port>)"
                )),
            },
        }
    }
}

/// Per-cell memory of the threshold rule.
#[derive(Debug, Clone, Default)]
pub struct ThresholdHistory {
    step: u64,
    last_change: Vec<Option<u64>>,
}

impl ThresholdHistory {
    pub fn new(n_gnbs: usize) -> Self {
        Self {
            step: 0,
            last_change: vec![None; n_gnbs],
        }
    }

    fn may_change(&self, cell: usize, hold_steps: u64) -> bool {
        self.last_change[cell].is_none_or(|t| self.step - t >= hold_steps)
    }
}

fn neighbours(positions: &[Point], cell: usize) -> impl Iterator<Item = usize> + '_ {
    let here = positions[cell];
    let nearest = positions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != cell)
        .map(|(_, p)| here.distance(p))
        .fold(f64::INFINITY, f64::min);
    positions
        .iter()
        .enumerate()
        .filter(move |&(j, p)| j != cell && here.distance(p) <= nearest * NEIGHBOUR_SLACK)
        .map(|(j, _)| j)
}

/// Load-threshold heuristic.
///
/// * An active gNB with fewer than `u_low` UEs is switched off when it is not
///   overloaded itself and every active neighbour that would absorb its UEs
///   is at or below `theta_high`.
/// * For every active gNB above `theta_high` (in id order) the nearest
///   switched-off gNB is switched back on. Distances are compared in whole
///   millimetres and ties go to the lowest id.
/// * A cell never changes twice within `hold_steps`.
pub fn threshold_policy(
    obs: &Observation,
    params: &ThresholdParams,
    gnb_positions: &[Point],
    history: &mut ThresholdHistory,
) -> ActionBits {
    let n = gnb_positions.len();
    if history.last_change.len() != n {
        history.last_change = vec![None; n];
    }
    let active = |c: usize| obs.cell_block(c)[kpm::IS_ACTIVE] >= 0.5;
    let util = |c: usize| obs.cell_block(c)[kpm::PRB_UTILIZATION];
    let attached = |c: usize| obs.cell_block(c)[kpm::NUM_ATTACHED_UES];
    let overloaded = |c: usize| active(c) && util(c) > params.theta_high;

    let mut action = ActionBits::from_bools((0..n).map(active).collect());

    for o in (0..n).filter(|&c| overloaded(c)) {
        let here = gnb_positions[o];
        let wake = (0..n)
            .filter(|&c| !action.is_on(c) && history.may_change(c, params.hold_steps))
            .min_by_key(|&c| ((here.distance(&gnb_positions[c]) * 1e3).round() as u64, c));
        if let Some(c) = wake {
            action.set(c, true);
        }
    }

    for c in 0..n {
        if !active(c) || !history.may_change(c, params.hold_steps) {
            continue;
        }
        let light = attached(c) < f64::from(params.u_low) && util(c) <= params.theta_high;
        let absorbers_ok = neighbours(gnb_positions, c)
            .filter(|&j| active(j))
            .all(|j| util(j) <= params.theta_high);
        if light && absorbers_ok {
            action.set(c, false);
        }
    }

    for c in 0..n {
        if action.is_on(c) != active(c) {
            history.last_change[c] = Some(history.step);
        }
    }
    history.step += 1;
    action
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] crate::Error),

    #[error("invalid controller: {0}")]
    Controller(String),

    #[error("episode aborted after {} steps: {reason}", .report.steps.len())]
    Aborted { reason: String, report: Box<EpisodeReport> },
}

/// Anything that turns observations into actions.
trait Policy {
    fn act(&mut self, obs: &Observation, last: Option<&EnvStep>) -> Result<ActionBits, String>;

    fn finish(&mut self) {}
}

struct AllOnPolicy(usize);

impl Policy for AllOnPolicy {
    fn act(&mut self, _: &Observation, _: Option<&EnvStep>) -> Result<ActionBits, String> {
        Ok(ActionBits::all_on(self.0))
    }
}

struct RandomPolicy {
    n: usize,
    rng: SimRng,
}

impl Policy for RandomPolicy {
    fn act(&mut self, _: &Observation, _: Option<&EnvStep>) -> Result<ActionBits, String> {
        Ok(ActionBits::from_bools((0..self.n).map(|_| self.rng.random::<bool>()).collect()))
    }
}

struct ThresholdPolicy {
    params: ThresholdParams,
    positions: Vec<Point>,
    history: ThresholdHistory,
}

impl Policy for ThresholdPolicy {
    fn act(&mut self, obs: &Observation, _: Option<&EnvStep>) -> Result<ActionBits, String> {
        Ok(threshold_policy(obs, &self.params, &self.positions, &mut self.history))
    }
}

/// Sends `STEP_RESULT` lines to an agent and reads back `STEP` lines.
struct ExternalPolicy {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
    n: usize,
}

impl ExternalPolicy {
    fn connect(addr: &str, n: usize) -> Result<Self, String> {
        let writer = TcpStream::connect(addr).map_err(|e| format!("connect {addr}: {e}"))?;
        writer.set_read_timeout(Some(EXTERNAL_TIMEOUT)).map_err(|e| e.to_string())?;
        let reader = BufReader::new(writer.try_clone().map_err(|e| e.to_string())?);
        Ok(Self { reader, writer, next_id: 1, n })
    }

    fn send(&mut self, msg: &WireMessage) -> Result<(), String> {
        let mut line = msg.to_line();
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(|e| format!("agent write: {e}"))
    }
}

impl Policy for ExternalPolicy {
    fn act(&mut self, obs: &Observation, last: Option<&EnvStep>) -> Result<ActionBits, String> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&WireMessage::StepResult {
            id,
            observation: obs.clone(),
            reward: last.map_or(0.0, |s| s.reward),
            terminated: false,
            info: last.map_or_else(Info::new, |s| s.info.clone()),
        })?;
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => return Err("agent closed the connection".into()),
            Ok(_) => {}
            Err(e) => return Err(format!("agent read: {e}")),
        }
        match WireMessage::from_line(line.trim_end()) {
            Ok(WireMessage::Step { action, .. }) if action.len() == self.n => Ok(action),
            Ok(WireMessage::Step { action, .. }) => {
                Err(format!("agent sent {} action bits, expected {}", action.len(), self.n))
            }
            Ok(other) => Err(format!("agent sent unexpected message {other:?}")),
            Err(e) => Err(format!("agent sent malformed line: {e}")),
        }
    }

    fn finish(&mut self) {
        let id = self.next_id;
        let _ = self.send(&WireMessage::Bye { id });
    }
}

fn make_policy(controller: &Controller, config: &ScenarioConfig) -> Result<Box<dyn Policy>, EpisodeError> {
    let n = config.n_gnbs;
    Ok(match controller {
        Controller::AllOn => Box::new(AllOnPolicy(n)),
        Controller::Random => Box::new(RandomPolicy {
            n,
            rng: rng::stream(config.seed, rng::CONTROLLER),
        }),
        Controller::Threshold(params) => {
            params.validate().map_err(EpisodeError::Controller)?;
            Box::new(ThresholdPolicy {
                params: *params,
                positions: config.gnb_positions.clone(),
                history: ThresholdHistory::new(n),
            })
        }
        Controller::External(addr) => Box::new(ExternalPolicy::connect(addr, n).map_err(|reason| {
            EpisodeError::Aborted {
                reason,
                report: Box::new(EpisodeReport::empty(controller, config.seed)),
            }
        })?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub sim_time_ms: u64,
    pub throughput_mbps: f64,
    pub power_w: f64,
    pub energy_j: f64,
    pub n_on: u32,
    pub n_changed: u32,
    pub active_gnbs: u32,
    pub reward: f64,
}

impl StepRow {
    fn from_step(step: u64, s: &EnvStep) -> Self {
        let get = |k: &str| s.info.get(k).copied().unwrap_or(0.0);
        Self {
            step,
            sim_time_ms: get(info_keys::SIM_TIME_MS) as u64,
            throughput_mbps: get(info_keys::THROUGHPUT_MBPS),
            power_w: get(info_keys::POWER_W),
            energy_j: get(info_keys::ENERGY_J),
            n_on: get(info_keys::N_ON) as u32,
            n_changed: get(info_keys::N_CHANGED) as u32,
            active_gnbs: get(info_keys::ACTIVE_GNBS) as u32,
            reward: s.reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub controller: String,
    pub seed: u64,
    pub energy_j: f64,
    pub mean_tput_mbps: f64,
    pub switches: u64,
    pub reward_sum: f64,
}

impl SummaryRow {
    /// Totals recomputed from per-step rows, in step order.
    pub fn from_steps(controller: &str, seed: u64, steps: &[StepRow]) -> Self {
        let mut energy_j = 0.0;
        let mut tput = 0.0;
        let mut switches = 0;
        let mut reward_sum = 0.0;
        for row in steps {
            energy_j += row.energy_j;
            tput += row.throughput_mbps;
            switches += u64::from(row.n_changed);
            reward_sum += row.reward;
        }
        Self {
            controller: controller.to_string(),
            seed,
            energy_j,
            mean_tput_mbps: if steps.is_empty() { 0.0 } else { tput / steps.len() as f64 },
            switches,
            reward_sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub summary: SummaryRow,
    pub steps: Vec<StepRow>,
    pub aborted: bool,
}

impl EpisodeReport {
    fn empty(controller: &Controller, seed: u64) -> Self {
        Self {
            summary: SummaryRow::from_steps(controller.label(), seed, &[]),
            steps: Vec::new(),
            aborted: true,
        }
    }

    fn finalize(controller: &Controller, seed: u64, steps: Vec<StepRow>, aborted: bool) -> Self {
        Self {
            summary: SummaryRow::from_steps(controller.label(), seed, &steps),
            steps,
            aborted,
        }
    }

    pub fn write_steps_csv(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        write_steps_csv(&self.steps, path)
    }
}

/// Runs one episode of `config.episode_steps` steps under `controller`,
/// with `seed` replacing the config seed.
pub fn run_episode(config: &ScenarioConfig, controller: &Controller, seed: u64) -> Result<EpisodeReport, EpisodeError> {
    let mut config = config.clone();
    config.seed = seed;
    let mut env = EnergySavingEnv::new(config.clone())?;
    let (mut obs, _) = env.reset()?;
    let mut policy = make_policy(controller, &config)?;

    let mut steps = Vec::with_capacity(config.episode_steps as usize);
    let mut last: Option<EnvStep> = None;
    for k in 0..config.episode_steps {
        let action = match policy.act(&obs, last.as_ref()) {
            Ok(a) => a,
            Err(reason) => {
                return Err(EpisodeError::Aborted {
                    reason,
                    report: Box::new(EpisodeReport::finalize(controller, seed, steps, true)),
                })
            }
        };
        let step = env.step(&action)?;
        steps.push(StepRow::from_step(k, &step));
        obs = step.observation.clone();
        let done = step.terminated;
        last = Some(step);
        if done {
            break;
        }
    }
    policy.finish();
    Ok(EpisodeReport::finalize(controller, seed, steps, false))
}

/// Runs every (controller, seed) pair, in parallel, and returns the reports
/// ordered by controller position then seed.
pub fn compare(
    config: &ScenarioConfig,
    controllers: &[Controller],
    seeds: &[u64],
) -> Result<Vec<EpisodeReport>, EpisodeError> {
    let jobs: Vec<(usize, &Controller, u64)> = controllers
        .iter()
        .enumerate()
        .flat_map(|(i, c)| seeds.iter().map(move |&s| (i, c, s)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));

    let mut results: Vec<(usize, u64, Result<EpisodeReport, EpisodeError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let jobs = &jobs;
                scope.spawn(move || {
                    jobs.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&(i, c, s)| (i, s, run_episode(config, c, s)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("episode worker panicked"))
            .collect()
    });
    results.sort_by_key(|&(i, s, _)| (i, s));
    results.into_iter().map(|(_, _, r)| r).collect()
}

pub fn write_steps_csv(steps: &[StepRow], path: impl AsRef<Path>) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in steps {
        w.serialize(row)?;
    }
    if steps.is_empty() {
        w.write_record(STEPS_CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_steps_csv(path: impl AsRef<Path>) -> crate::Result<Vec<StepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<StepRow>, _>>()?)
}

pub fn write_summary_csv<'a, I>(rows: I, path: impl AsRef<Path>) -> crate::Result<()>
where
    I: IntoIterator<Item = &'a SummaryRow>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(SUMMARY_CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> crate::Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<SummaryRow>, _>>()?)
}
