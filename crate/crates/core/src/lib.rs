//! Deterministic 5G NSA network simulator with a gym-style environment for
//! cell on/off energy saving.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] builds and validates the immutable [`ScenarioConfig`].
//! * [`channel`], [`mobility`] and [`energy`] hold the pure per-link, per-UE
//!   and per-cell models.
//! * [`engine`] advances one simulation in 100 ms control periods.
//! * [`datalake`] stores UE telemetry keyed by `(imsi, timestamp)`.
//! * [`env`] wraps the engine in reset/step semantics with the
//!   `2^N` action space, the `12·N+1` observation and the switching-aware reward.
//! * [`protocol`] serves the environment over newline-delimited JSON.
//! * [`baselines`] provides heuristic controllers and the episode runner.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod datalake;
pub mod energy;
pub mod engine;
pub mod env;
mod error;
pub mod mobility;
pub mod numeric;
pub mod protocol;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::ScenarioConfig;
