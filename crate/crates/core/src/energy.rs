//! Base station power model.
//!
//! Linear load-dependent model: an active cell draws `p0 + Δp·load·P_tx,max`,
//! a cell with its RF frontend switched off draws a constant sleep power.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Power of an active cell at zero load, W.
    pub p0_w: f64,
    /// Load slope.
    pub delta_p: f64,
    /// Maximum RF output power, W.
    pub p_max_tx_w: f64,
    /// Power with the RF frontend deactivated, W.
    pub p_sleep_w: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p0_w: 130.0,
            delta_p: 4.7,
            p_max_tx_w: 20.0,
            p_sleep_w: 75.0,
        }
    }
}

impl EnergyParams {
    /// Power of an active cell at full load.
    pub fn full_load_w(&self) -> f64 {
        self.p0_w + self.delta_p * self.p_max_tx_w
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let fields = [
            ("p0_w", self.p0_w),
            ("delta_p", self.delta_p),
            ("p_max_tx_w", self.p_max_tx_w),
            ("p_sleep_w", self.p_sleep_w),
        ];
        for (name, value) in fields {
            if !(value >= 0.0) {
                v.push(format!("energy.{name} must be ≥ 0"));
            }
        }
        if !(self.p_sleep_w < self.p0_w) {
            v.push("energy.p_sleep_w must be < energy.p0_w".into());
        }
        v
    }
}

pub fn cell_power_w(active: bool, load: f64, params: &EnergyParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&load) {
        return Err(Error::InvalidArgument(format!("load {load} outside [0, 1]")));
    }
    Ok(if active {
        params.p0_w + params.delta_p * load * params.p_max_tx_w
    } else {
        params.p_sleep_w
    })
}

pub fn period_energy_j(power_w: f64, dt_s: f64) -> f64 {
    power_w * dt_s
}
