//! Capability-graph based configuration and reconfiguration of serial flow
//! lines.

#![allow(clippy::needless_range_loop)]

pub mod analog;
pub mod error;
pub mod graph;
pub mod line;
pub mod monitor;
pub mod optimizer;
pub mod scenario;
pub mod selector;
pub mod sim;
pub mod time_model;

pub use error::{Error, Result};
pub use graph::{load_graph, save_graph, CapabilityGraph, EntityId, EntityKind, Predicate, Triple};
pub use line::{
    bottleneck_time, derive_stations, expected_station_times, load_config, save_config, validate,
    DisturbanceScenario, LineConfiguration, Station, StationView,
};
pub use time_model::TimeModel;
