//! Radio channel: 3GPP UMi Street Canyon path loss, RSRP, SINR and a
//! Shannon-capped throughput abstraction.
//!
//! Link conditions are quasi-static within a control period. LOS state and
//! shadowing are drawn once per (UE, cell) at episode reset; only the
//! distance-dependent path loss follows the UE as it moves.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scenario::{Point, ScenarioConfig};
use crate::{Error, Result};

pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
pub const SHADOWING_SIGMA_LOS_DB: f64 = 4.0;
pub const SHADOWING_SIGMA_NLOS_DB: f64 = 7.82;
/// Distances below this are clamped before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Radio access technology of a cell. Cells interfere only with active
/// cells of the same kind (same carrier).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CellKind {
    Gnb,
    LteAnchor,
}

/// Static radio parameters of one transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioSite {
    pub kind: CellKind,
    pub position: Point,
    pub tx_power_dbm: f64,
    pub freq_ghz: f64,
    pub height_m: f64,
    pub bandwidth_hz: f64,
}

/// The N gNBs in cell-id order followed by the LTE anchor at index N.
pub fn radio_sites(config: &ScenarioConfig) -> Vec<RadioSite> {
    let mut sites: Vec<RadioSite> = config
        .gnb_positions
        .iter()
        .map(|&position| RadioSite {
            kind: CellKind::Gnb,
            position,
            tx_power_dbm: config.gnb_tx_power_dbm,
            freq_ghz: config.carrier_freq_ghz,
            height_m: config.gnb_height_m,
            bandwidth_hz: config.bandwidth_hz,
        })
        .collect();
    sites.push(RadioSite {
        kind: CellKind::LteAnchor,
        position: config.lte_anchor_position,
        tx_power_dbm: config.lte_tx_power_dbm,
        freq_ghz: config.lte_freq_ghz,
        height_m: config.gnb_height_m,
        bandwidth_hz: config.lte_bandwidth_hz,
    });
    sites
}

/// UMi Street Canyon path loss in dB.
///
/// LOS uses the single-slope form `32.4 + 21·log10(d3d) + 20·log10(fc)`; the
/// second slope beyond the breakpoint distance is not modelled. NLOS is
/// `max(PL_LOS, 22.4 + 35.3·log10(d3d) + 21.3·log10(fc) − 0.3·(h_ut − 1.5))`.
pub fn path_loss_umi(d2d_m: f64, fc_ghz: f64, h_bs_m: f64, h_ut_m: f64, is_los: bool) -> Result<f64> {
    if !(d2d_m > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be > 0, got {d2d_m}")));
    }
    if !(fc_ghz > 0.0) {
        return Err(Error::InvalidArgument(format!("frequency must be > 0, got {fc_ghz}")));
    }
    if !(h_ut_m >= 1.5) {
        return Err(Error::InvalidArgument(format!("UE height must be ≥ 1.5 m, got {h_ut_m}")));
    }
    let d3d = d2d_m.hypot(h_bs_m - h_ut_m);
    let los = 32.4 + 21.0 * d3d.log10() + 20.0 * fc_ghz.log10();
    if is_los {
        return Ok(los);
    }
    let nlos = 22.4 + 35.3 * d3d.log10() + 21.3 * fc_ghz.log10() - 0.3 * (h_ut_m - 1.5);
    Ok(los.max(nlos))
}

pub fn los_probability(d2d_m: f64) -> f64 {
    if d2d_m <= 18.0 {
        1.0
    } else {
        18.0 / d2d_m + (-d2d_m / 36.0).exp() * (1.0 - 18.0 / d2d_m)
    }
}

pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// SINR in dB from received powers in dBm.
pub fn sinr_from_powers<I>(serving_dbm: f64, interferers_dbm: I, bandwidth_hz: f64, noise_figure_db: f64) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let noise = dbm_to_mw(noise_power_dbm(bandwidth_hz, noise_figure_db));
    let interference: f64 = interferers_dbm.into_iter().map(dbm_to_mw).sum();
    10.0 * (dbm_to_mw(serving_dbm) / (interference + noise)).log10()
}

/// Served downlink rate: `min(demand, share · min(log2(1+SINR), max_se))`.
pub fn ue_throughput_mbps(sinr_db: f64, bandwidth_share_hz: f64, max_se: f64, demand_mbps: f64) -> f64 {
    ue_capacity_mbps(sinr_db, bandwidth_share_hz, max_se).min(demand_mbps).max(0.0)
}

pub fn ue_capacity_mbps(sinr_db: f64, bandwidth_share_hz: f64, max_se: f64) -> f64 {
    let se = (1.0 + db_to_linear(sinr_db)).log2().min(max_se);
    bandwidth_share_hz.max(0.0) * se / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub ue_index: usize,
    pub cell_index: usize,
    pub is_los: bool,
    pub shadowing_db: f64,
    pub path_loss_db: f64,
    pub rsrp_dbm: f64,
}

/// Link state for every (UE, cell) pair, UE-major.
#[derive(Debug, Clone)]
pub struct LinkTable {
    sites: Vec<RadioSite>,
    ue_height_m: f64,
    links: Vec<LinkState>,
}

impl LinkTable {
    /// Draws LOS state and shadowing for every pair and evaluates the
    /// initial path loss.
    pub fn draw<R: Rng + ?Sized>(
        sites: Vec<RadioSite>,
        ue_positions: &[Point],
        ue_height_m: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let los_shadow = Normal::new(0.0, SHADOWING_SIGMA_LOS_DB).expect("valid sigma");
        let nlos_shadow = Normal::new(0.0, SHADOWING_SIGMA_NLOS_DB).expect("valid sigma");
        let mut links = Vec::with_capacity(ue_positions.len() * sites.len());
        for (ue_index, pos) in ue_positions.iter().enumerate() {
            for (cell_index, site) in sites.iter().enumerate() {
                let d2d = pos.distance(&site.position).max(MIN_DISTANCE_M);
                let is_los = rng.random::<f64>() < los_probability(d2d);
                let shadowing_db = if is_los {
                    los_shadow.sample(rng)
                } else {
                    nlos_shadow.sample(rng)
                };
                links.push(LinkState {
                    ue_index,
                    cell_index,
                    is_los,
                    shadowing_db,
                    path_loss_db: 0.0,
                    rsrp_dbm: 0.0,
                });
            }
        }
        let mut table = Self { sites, ue_height_m, links };
        table.update(ue_positions)?;
        Ok(table)
    }

    /// Re-evaluates path loss and RSRP from current UE positions. LOS state
    /// and shadowing are kept.
    pub fn update(&mut self, ue_positions: &[Point]) -> Result<()> {
        let n_cells = self.sites.len();
        for (ue_index, pos) in ue_positions.iter().enumerate() {
            for (cell_index, site) in self.sites.iter().enumerate() {
                let link = &mut self.links[ue_index * n_cells + cell_index];
                let d2d = pos.distance(&site.position).max(MIN_DISTANCE_M);
                link.path_loss_db =
                    path_loss_umi(d2d, site.freq_ghz, site.height_m, self.ue_height_m, link.is_los)?;
                link.rsrp_dbm = site.tx_power_dbm - link.path_loss_db - link.shadowing_db;
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[RadioSite] {
        &self.sites
    }

    pub fn get(&self, ue_index: usize, cell_index: usize) -> &LinkState {
        &self.links[ue_index * self.sites.len() + cell_index]
    }

    pub fn rsrp_dbm(&self, ue_index: usize, cell_index: usize) -> f64 {
        self.get(ue_index, cell_index).rsrp_dbm
    }

    /// SINR of `ue_index` served by `serving`, with every other active cell
    /// of the same kind as interferer. `active` is indexed by cell.
    pub fn sinr_db(
        &self,
        ue_index: usize,
        serving: usize,
        active: &[bool],
        noise_figure_db: f64,
    ) -> Result<f64> {
        if !active.get(serving).copied().unwrap_or(false) {
            return Err(Error::InvalidState(format!("serving cell {serving} is inactive")));
        }
        let kind = self.sites[serving].kind;
        let interferers = self
            .sites
            .iter()
            .enumerate()
            .filter(|&(c, site)| c != serving && site.kind == kind && active[c])
            .map(|(c, _)| self.rsrp_dbm(ue_index, c));
        Ok(sinr_from_powers(
            self.rsrp_dbm(ue_index, serving),
            interferers,
            self.sites[serving].bandwidth_hz,
            noise_figure_db,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scenario::build_default_scenario;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn umi_reference_values() {
        // d3d = sqrt(100² + 8.5²) = 100.3606 m
        let los = path_loss_umi(100.0, 3.5, 10.0, 1.5, true).unwrap();
        let nlos = path_loss_umi(100.0, 3.5, 10.0, 1.5, false).unwrap();
        assert_abs_diff_eq!(los, 85.3142, epsilon = 1e-4);
        assert_abs_diff_eq!(nlos, 104.6438, epsilon = 1e-4);
        let near_los = path_loss_umi(1.0, 3.5, 10.0, 1.5, true).unwrap();
        let near_nlos = path_loss_umi(1.0, 3.5, 10.0, 1.5, false).unwrap();
        assert!(near_los <= near_nlos);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(path_loss_umi(0.0, 3.5, 10.0, 1.5, true), Err(Error::InvalidArgument(_))));
        assert!(path_loss_umi(-5.0, 3.5, 10.0, 1.5, true).is_err());
        assert!(path_loss_umi(10.0, 0.0, 10.0, 1.5, true).is_err());
        assert!(path_loss_umi(10.0, 3.5, 10.0, 1.0, true).is_err());
    }

    #[test]
    fn los_probability_reference_values() {
        assert_eq!(los_probability(10.0), 1.0);
        assert_eq!(los_probability(18.0), 1.0);
        assert_abs_diff_eq!(los_probability(36.0), 0.683_939_7, epsilon = 1e-6);
        assert!(los_probability(1e6) < 1e-4);
    }

    #[test]
    fn single_cell_sinr_and_throughput() {
        let noise = noise_power_dbm(20e6, 7.0);
        assert_abs_diff_eq!(noise, -93.9897, epsilon = 1e-4);
        let sinr = sinr_from_powers(-55.31, [], 20e6, 7.0);
        assert_abs_diff_eq!(sinr, 38.6797, epsilon = 1e-4);
        assert_abs_diff_eq!(ue_throughput_mbps(sinr, 20e6, 7.4, f64::INFINITY), 148.0, epsilon = 1e-9);
        assert_eq!(ue_throughput_mbps(sinr, 20e6, 7.4, 1.5), 1.5);
        assert_eq!(ue_throughput_mbps(sinr, 0.0, 7.4, 10.0), 0.0);
    }

    #[test]
    fn equal_interferer_gives_zero_db() {
        let sinr = sinr_from_powers(-50.0, [-50.0], 20e6, 7.0);
        assert_abs_diff_eq!(sinr, 0.0, epsilon = 1e-3);
    }

    #[test]
    fn link_table_sinr_guards_inactive_serving() {
        let cfg = build_default_scenario(3);
        let positions = crate::scenario::place_ues(&cfg);
        let table = LinkTable::draw(radio_sites(&cfg), &positions, cfg.ue_height_m, &mut rng::stream(3, rng::CHANNEL)).unwrap();
        let mut active = vec![true; 8];
        active[2] = false;
        assert!(matches!(table.sinr_db(0, 2, &active, 7.0), Err(Error::InvalidState(_))));
        let with_all = table.sinr_db(0, 0, &[true; 8], 7.0).unwrap();
        let without_one = table.sinr_db(0, 0, &active, 7.0).unwrap();
        assert!(without_one > with_all);
        // the anchor has no co-channel interferers
        let anchor = table.sinr_db(0, 7, &active, 7.0).unwrap();
        let expected = table.rsrp_dbm(0, 7) - noise_power_dbm(cfg.lte_bandwidth_hz, 7.0);
        assert_abs_diff_eq!(anchor, expected, epsilon = 1e-9);
    }

    #[test]
    fn rsrp_identity() {
        let cfg = build_default_scenario(11);
        let positions = crate::scenario::place_ues(&cfg);
        let table = LinkTable::draw(radio_sites(&cfg), &positions, cfg.ue_height_m, &mut rng::stream(11, rng::CHANNEL)).unwrap();
        for u in 0..positions.len() {
            for c in 0..table.n_cells() {
                let l = table.get(u, c);
                let tx = table.sites()[c].tx_power_dbm;
                assert!(l.path_loss_db > 0.0);
                assert_eq!(l.rsrp_dbm, tx - l.path_loss_db - l.shadowing_db);
            }
        }
    }

    proptest! {
        #[test]
        fn path_loss_monotone_in_distance(a in 1.0f64..5000.0, b in 1.0f64..5000.0, los in any::<bool>()) {
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let pn = path_loss_umi(near, 3.5, 10.0, 1.5, los).unwrap();
            let pf = path_loss_umi(far, 3.5, 10.0, 1.5, los).unwrap();
            prop_assert!(pn <= pf);
        }

        #[test]
        fn nlos_never_below_los(d in 1.0f64..5000.0, fc in 0.5f64..30.0, h_ut in 1.5f64..22.5) {
            let los = path_loss_umi(d, fc, 10.0, h_ut, true).unwrap();
            let nlos = path_loss_umi(d, fc, 10.0, h_ut, false).unwrap();
            prop_assert!(nlos >= los);
        }

        #[test]
        fn removing_interferer_never_lowers_sinr(
            s in -120.0f64..-40.0,
            others in prop::collection::vec(-130.0f64..-40.0, 1..8),
            drop in any::<prop::sample::Index>(),
        ) {
            let i = drop.index(others.len());
            let full = sinr_from_powers(s, others.iter().copied(), 20e6, 7.0);
            let reduced = sinr_from_powers(
                s,
                others.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, v)| *v),
                20e6,
                7.0,
            );
            prop_assert!(reduced >= full);
        }

        #[test]
        fn throughput_bounded(sinr in -20.0f64..60.0, share in 0.0f64..40e6, demand in 0.0f64..500.0) {
            let t = ue_throughput_mbps(sinr, share, 7.4, demand);
            prop_assert!(t <= demand);
            prop_assert!(t <= share * 7.4 / 1e6 + 1e-9);
            prop_assert!(t >= 0.0);
        }
    }
}
