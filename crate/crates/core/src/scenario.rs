//! Scenario construction and validation.
//!
//! A [`ScenarioConfig`] is the immutable description of one simulation:
//! where the cells are, how many UEs roam the area, and every radio, traffic,
//! energy and reward parameter. It serialises to `scenario.json` with the
//! same snake_case field names.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::env::RewardWeights;
use crate::rng;
use crate::Result;

pub const DEFAULT_INTER_SITE_DISTANCE_M: f64 = 1700.0;
pub const DEFAULT_N_UES: usize = 63;
pub const DEFAULT_RING_GNBS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle, meters. Bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn square(half_side: f64) -> Self {
        Self {
            min_x: -half_side,
            min_y: -half_side,
            max_x: half_side,
            max_y: half_side,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Downlink traffic mix. CBR flows stand in for UDP applications, elastic
/// flows for TCP ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub cbr_fraction: f64,
    pub cbr_rates_mbps: Vec<f64>,
    pub elastic_cap_mbps: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            cbr_fraction: 0.5,
            cbr_rates_mbps: vec![0.75, 1.5, 3.0],
            elastic_cap_mbps: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_gnbs: usize,
    pub gnb_positions: Vec<Point>,
    pub lte_anchor_position: Point,
    pub inter_site_distance_m: f64,
    pub n_ues: usize,
    pub area_bounds: Rect,
    pub carrier_freq_ghz: f64,
    pub lte_freq_ghz: f64,
    pub bandwidth_hz: f64,
    pub lte_bandwidth_hz: f64,
    pub gnb_tx_power_dbm: f64,
    pub lte_tx_power_dbm: f64,
    pub gnb_height_m: f64,
    pub ue_height_m: f64,
    pub noise_figure_db: f64,
    pub control_period_ms: u64,
    pub episode_steps: u64,
    pub traffic: TrafficConfig,
    pub energy: EnergyParams,
    pub reward: RewardWeights,
    pub min_rsrp_dbm: f64,
    pub hysteresis_db: f64,
    pub max_spectral_efficiency: f64,
    pub seed: u64,
}

/// Hexagonal deployment: one gNB co-located with the LTE anchor at the
/// origin and `ring` gNBs evenly spaced on a circle of radius `isd`.
pub fn hex_layout(isd: f64, ring: usize) -> Vec<Point> {
    let mut positions = vec![Point::ORIGIN];
    positions.extend((0..ring).map(|k| {
        let angle = 2.0 * PI * k as f64 / ring as f64;
        Point::new(isd * angle.cos(), isd * angle.sin())
    }));
    positions
}

/// The dense-urban NSA demo scenario: an LTE anchor and gNB at the origin,
/// six gNBs on a 1700 m hexagon, 63 UEs, 100 ms control period.
pub fn build_default_scenario(seed: u64) -> ScenarioConfig {
    let isd = DEFAULT_INTER_SITE_DISTANCE_M;
    let gnb_positions = hex_layout(isd, DEFAULT_RING_GNBS);
    let n_gnbs = gnb_positions.len();
    let energy = EnergyParams::default();
    ScenarioConfig {
        n_gnbs,
        gnb_positions,
        lte_anchor_position: Point::ORIGIN,
        inter_site_distance_m: isd,
        n_ues: DEFAULT_N_UES,
        area_bounds: Rect::square(1.5 * isd),
        carrier_freq_ghz: 3.5,
        lte_freq_ghz: 0.85,
        bandwidth_hz: 20e6,
        lte_bandwidth_hz: 10e6,
        gnb_tx_power_dbm: 30.0,
        lte_tx_power_dbm: 43.0,
        gnb_height_m: 10.0,
        ue_height_m: 1.5,
        noise_figure_db: 7.0,
        control_period_ms: 100,
        episode_steps: 600,
        traffic: TrafficConfig::default(),
        reward: RewardWeights::for_network(n_gnbs, &energy),
        energy,
        min_rsrp_dbm: -110.0,
        hysteresis_db: 3.0,
        max_spectral_efficiency: 7.4,
        seed,
    }
}

impl ScenarioConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn control_period_s(&self) -> f64 {
        self.control_period_ms as f64 / 1000.0
    }

    /// Number of CBR UEs; the first `⌈cbr_fraction·n_ues⌉` IMSIs are CBR.
    pub fn n_cbr_ues(&self) -> usize {
        ((self.traffic.cbr_fraction * self.n_ues as f64).ceil() as usize).min(self.n_ues)
    }

    pub fn validate(&self) -> Vec<String> {
        validate(self)
    }
}

/// Lists every violated invariant; empty means the config is usable.
pub fn validate(config: &ScenarioConfig) -> Vec<String> {
    let mut violations = Vec::new();
    let mut check = |ok: bool, msg: String| {
        if !ok {
            violations.push(msg);
        }
    };

    check(config.n_gnbs >= 1, "n_gnbs must be ≥ 1".into());
    check(config.n_ues >= 1, "n_ues must be ≥ 1".into());
    check(config.control_period_ms > 0, "control_period_ms must be > 0".into());
    check(config.episode_steps > 0, "episode_steps must be > 0".into());
    check(
        config.gnb_positions.len() == config.n_gnbs,
        format!(
            "gnb_positions has {} entries but n_gnbs = {}",
            config.gnb_positions.len(),
            config.n_gnbs
        ),
    );
    let b = &config.area_bounds;
    check(
        b.min_x < b.max_x && b.min_y < b.max_y,
        "area_bounds must have positive width and height".into(),
    );
    for (i, p) in config.gnb_positions.iter().enumerate() {
        check(
            b.contains(p),
            format!("gnb_positions[{i}] = ({}, {}) lies outside area_bounds", p.x, p.y),
        );
    }
    check(
        b.contains(&config.lte_anchor_position),
        "lte_anchor_position lies outside area_bounds".into(),
    );
    check(config.bandwidth_hz > 0.0, "bandwidth_hz must be > 0".into());
    check(config.lte_bandwidth_hz > 0.0, "lte_bandwidth_hz must be > 0".into());
    check(
        config.max_spectral_efficiency > 0.0,
        "max_spectral_efficiency must be > 0".into(),
    );
    check(config.carrier_freq_ghz > 0.0, "carrier_freq_ghz must be > 0".into());
    check(config.lte_freq_ghz > 0.0, "lte_freq_ghz must be > 0".into());
    check(config.ue_height_m >= 1.5, "ue_height_m must be ≥ 1.5".into());
    check(config.hysteresis_db >= 0.0, "hysteresis_db must be ≥ 0".into());
    check(!config.min_rsrp_dbm.is_nan(), "min_rsrp_dbm must be a number".into());

    let t = &config.traffic;
    check(
        (0.0..=1.0).contains(&t.cbr_fraction),
        "traffic.cbr_fraction must lie in [0, 1]".into(),
    );
    check(
        config.n_cbr_ues() == 0 || !t.cbr_rates_mbps.is_empty(),
        "traffic.cbr_rates_mbps must not be empty when CBR UEs exist".into(),
    );
    check(
        t.cbr_rates_mbps.iter().all(|r| *r > 0.0),
        "traffic.cbr_rates_mbps must all be > 0".into(),
    );
    check(t.elastic_cap_mbps > 0.0, "traffic.elastic_cap_mbps must be > 0".into());

    violations.extend(config.energy.violations());
    violations.extend(config.reward.violations());
    violations
}

/// Initial UE positions, uniform over the area, drawn from the placement
/// stream of `config.seed`. Index `k` belongs to IMSI `k + 1`.
pub fn place_ues(config: &ScenarioConfig) -> Vec<Point> {
    let mut rng = rng::stream(config.seed, rng::PLACEMENT);
    let b = config.area_bounds;
    (0..config.n_ues)
        .map(|_| {
            Point::new(
                rng.random_range(b.min_x..=b.max_x),
                rng.random_range(b.min_y..=b.max_y),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_shape() {
        let c = build_default_scenario(42);
        assert_eq!(c.n_gnbs, 7);
        assert_eq!(c.n_ues, 63);
        assert_eq!(c.control_period_ms, 100);
        let d = c.gnb_positions[1].distance(&c.lte_anchor_position);
        assert!((d - 1700.0).abs() < 1e-9, "{d}");
        assert_eq!(c.area_bounds, Rect::square(2550.0));
    }

    #[test]
    fn hexagon_neighbours_are_one_isd_apart() {
        let c = build_default_scenario(0);
        for k in 1..=6 {
            let next = if k == 6 { 1 } else { k + 1 };
            let d = c.gnb_positions[k].distance(&c.gnb_positions[next]);
            assert!((d - 1700.0).abs() < 1e-6, "gNB {k}-{next}: {d}");
        }
    }

    #[test]
    fn seed_changes_placement_only() {
        let a = build_default_scenario(1);
        let b = build_default_scenario(2);
        assert_eq!(a.gnb_positions, b.gnb_positions);
        assert_eq!(a.lte_anchor_position, b.lte_anchor_position);
        assert_ne!(place_ues(&a), place_ues(&b));
        assert_eq!(place_ues(&a), place_ues(&build_default_scenario(1)));
    }

    #[test]
    fn pure_function_of_seed() {
        let a = serde_json::to_string(&build_default_scenario(9)).unwrap();
        let b = serde_json::to_string(&build_default_scenario(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validate_reports_violations() {
        assert!(validate(&build_default_scenario(42)).is_empty());

        let mut c = build_default_scenario(42);
        c.n_gnbs = 0;
        c.gnb_positions.clear();
        assert_eq!(validate(&c), vec!["n_gnbs must be ≥ 1".to_string()]);

        let mut c = build_default_scenario(42);
        c.gnb_positions[3] = Point::new(9000.0, 0.0);
        let v = validate(&c);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("gnb_positions[3]"), "{v:?}");
    }

    #[test]
    fn placement_inside_bounds() {
        for seed in 0..20 {
            let c = build_default_scenario(seed);
            assert!(place_ues(&c).iter().all(|p| c.area_bounds.contains(p)));
        }
    }

    #[test]
    fn json_round_trip() {
        let c = build_default_scenario(5);
        let text = serde_json::to_string(&c).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
        assert!(text.contains("\"inter_site_distance_m\":1700.0"));
    }
}
