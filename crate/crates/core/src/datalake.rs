//! UE-level telemetry store keyed by `(imsi, timestamp_ms)`.
//!
//! Cell-centric energy-saving KPMs ([`CellKpmRow`]) do not fit that key and
//! are kept by the environment in a separate side store; they never enter the
//! [`Datalake`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Subscriber identity of a UE. IMSIs start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Imsi(pub u64);

impl fmt::Display for Imsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub const KPM_CSV_HEADER: &str =
    "imsi,timestamp_ms,serving_cell_id,dl_throughput_mbps,sinr_db,rsrp_dbm,demand_mbps,backlog_mbits";

/// One UE measurement for one control period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpmRecord {
    pub imsi: Imsi,
    pub timestamp_ms: u64,
    pub serving_cell_id: usize,
    pub dl_throughput_mbps: f64,
    pub sinr_db: f64,
    pub rsrp_dbm: f64,
    pub demand_mbps: f64,
    pub backlog_mbits: f64,
}

impl KpmRecord {
    pub fn key(&self) -> (Imsi, u64) {
        (self.imsi, self.timestamp_ms)
    }
}

/// Cell-level energy-saving KPMs for one cell and one control period.
///
/// The twelve KPMs are listed in observation order; see
/// [`CellKpmRow::kpm_vector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKpmRow {
    pub cell_id: usize,
    pub timestamp_ms: u64,
    pub dl_throughput_mbps: f64,
    pub num_attached_ues: u32,
    pub prb_utilization: f64,
    pub avg_sinr_db: f64,
    pub avg_rsrp_dbm: f64,
    pub power_w: f64,
    pub energy_j_last_period: f64,
    pub is_active: bool,
    pub ho_in: u32,
    pub ho_out: u32,
    pub avg_backlog_mbits: f64,
    pub qos_violation_ratio: f64,
}

pub const CELL_KPM_COUNT: usize = 12;

impl CellKpmRow {
    pub fn kpm_vector(&self) -> [f64; CELL_KPM_COUNT] {
        [
            self.dl_throughput_mbps,
            f64::from(self.num_attached_ues),
            self.prb_utilization,
            self.avg_sinr_db,
            self.avg_rsrp_dbm,
            self.power_w,
            self.energy_j_last_period,
            if self.is_active { 1.0 } else { 0.0 },
            f64::from(self.ho_in),
            f64::from(self.ho_out),
            self.avg_backlog_mbits,
            self.qos_violation_ratio,
        ]
    }
}

/// Optional filters for [`Datalake::query_window`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RowFilter {
    pub imsi: Option<Imsi>,
    pub cell_id: Option<usize>,
}

/// In-memory UE telemetry store.
///
/// Rows are indexed by `(timestamp_ms, imsi)`, which is the same key as
/// `(imsi, timestamp_ms)` for uniqueness purposes but yields window queries
/// already ordered by time.
#[derive(Debug, Clone, Default)]
pub struct Datalake {
    rows: BTreeMap<(u64, Imsi), KpmRecord>,
}

impl Datalake {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, imsi: Imsi, timestamp_ms: u64) -> bool {
        self.rows.contains_key(&(timestamp_ms, imsi))
    }

    /// Inserts a batch. If any key is already stored, or appears twice in
    /// the batch, nothing is inserted.
    pub fn insert_ue_rows(&mut self, rows: &[KpmRecord]) -> Result<usize> {
        let mut seen = BTreeSet::new();
        for row in rows {
            let key = (row.timestamp_ms, row.imsi);
            if self.rows.contains_key(&key) || !seen.insert(key) {
                return Err(Error::DuplicateKey {
                    imsi: row.imsi,
                    timestamp_ms: row.timestamp_ms,
                });
            }
        }
        for row in rows {
            self.rows.insert((row.timestamp_ms, row.imsi), *row);
        }
        Ok(rows.len())
    }

    /// Rows with `t_from_ms <= timestamp < t_to_ms`, ordered by
    /// `(timestamp, imsi)`.
    pub fn query_window(&self, filter: RowFilter, t_from_ms: u64, t_to_ms: u64) -> Result<Vec<KpmRecord>> {
        if t_from_ms > t_to_ms {
            return Err(Error::InvalidArgument(format!(
                "inverted window [{t_from_ms}, {t_to_ms})"
            )));
        }
        Ok(self
            .rows
            .range((t_from_ms, Imsi(0))..(t_to_ms, Imsi(0)))
            .map(|(_, r)| r)
            .filter(|r| filter.imsi.is_none_or(|i| r.imsi == i))
            .filter(|r| filter.cell_id.is_none_or(|c| r.serving_cell_id == c))
            .copied()
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &KpmRecord> {
        self.rows.values()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<usize> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(KPM_CSV_HEADER.split(','))?;
        for row in self.rows.values() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(self.rows.len())
    }

    /// Writes the header plus one line per stored row.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<usize> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parses a CSV produced by [`Datalake::export_csv`].
pub fn read_kpm_csv(path: impl AsRef<Path>) -> Result<Vec<KpmRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<KpmRecord>, _>>()?;
    Ok(rows)
}
