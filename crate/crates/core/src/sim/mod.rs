//! Discrete-event simulation of a serial flow line.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CapabilityGraph;
use crate::line::{derive_stations, validate, DisturbanceScenario, LineConfiguration};
use crate::time_model::TimeModel;

mod engine;
mod stats;

pub use stats::{compare_reports, summarize, welch, Summary, WelchTest};

/// Who may perform an operation, with routing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Performer {
    pub agent: usize,
    pub fraction: f64,
    pub model: TimeModel,
    /// (multiplier, onset) when the agent is disturbed on this operation.
    pub disturbance: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOp {
    pub name: String,
    pub performers: Vec<Performer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStation {
    pub agent: usize,
    pub ops: Vec<SimOp>,
}

/// A minority share of an operation handed to another agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub op: String,
    pub donor: String,
    pub recipient: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub agents: Vec<String>,
    pub stations: Vec<SimStation>,
    /// Capacity of the buffer after each station but the last.
    pub buffer_capacities: Vec<usize>,
    pub routes: Vec<Route>,
    pub horizon: f64,
    pub seed: u64,
    pub record_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    PartEnter,
    OpStart,
    OpFinish,
    PartDepart,
    BufferFull,
    BufferFree,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PartEnter => "PartEnter",
            EventKind::OpStart => "OpStart",
            EventKind::OpFinish => "OpFinish",
            EventKind::PartDepart => "PartDepart",
            EventKind::BufferFull => "BufferFull",
            EventKind::BufferFree => "BufferFree",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub station: usize,
    pub part: u64,
    pub agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationStats {
    pub agent: String,
    /// Time from a part entering the station to its last operation finishing.
    pub mean_time: f64,
    pub max_time: f64,
    pub parts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferStats {
    pub capacity: usize,
    /// Time-weighted mean occupancy.
    pub mean_occupancy: f64,
    pub max_occupancy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    pub op: String,
    pub recipient: String,
    pub fraction: f64,
    pub routed: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Parts completed after the first departure, which ends the pipeline
    /// fill.
    pub throughput: u64,
    pub completed: u64,
    pub entered: u64,
    pub wip: u64,
    pub horizon: f64,
    pub seed: u64,
    pub stations: Vec<StationStats>,
    pub op_mean_times: BTreeMap<String, f64>,
    pub buffers: Vec<BufferStats>,
    pub routes: Vec<RouteStats>,
    pub cycle_time_mean: f64,
    pub cycle_time_p95: f64,
    /// Inter-departure times.
    pub cycle_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEvent>,
}

impl SimReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn trace_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "kind", "station", "part", "agent"])
            .expect("in-memory write");
        for e in &self.trace {
            w.write_record([
                format!("{}", e.time),
                e.kind.as_str().to_string(),
                e.station.to_string(),
                e.part.to_string(),
                e.agent.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Builds a simulation model; the configuration must validate against the
/// graph.
pub fn build_sim(
    config: &LineConfiguration,
    graph: &CapabilityGraph,
    scenarios: &[DisturbanceScenario],
    horizon: f64,
    seed: u64,
) -> Result<SimModel> {
    let violations = validate(config, graph);
    if !violations.is_empty() {
        return Err(Error::InvalidConfiguration(violations));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    for s in scenarios {
        s.validate(config)?;
    }
    let view = derive_stations(config)?;
    let mut agents: Vec<String> = Vec::new();
    let agent_index = |name: &str, agents: &mut Vec<String>| match agents.iter().position(|a| a == name) {
        Some(i) => i,
        None => {
            agents.push(name.to_string());
            agents.len() - 1
        }
    };
    let mut stations = Vec::with_capacity(view.stations.len());
    let mut routes = Vec::new();
    for st in &view.stations {
        let owner = agent_index(&st.agent, &mut agents);
        let mut ops = Vec::new();
        for j in st.op_range() {
            let op = &config.operations[j];
            let mut performers = Vec::new();
            for (agent, fraction) in config.holders(op) {
                let model = graph
                    .time_model(&agent, op)
                    .ok_or_else(|| Error::MissingTimeModel {
                        agent: agent.clone(),
                        op: op.clone(),
                    })?
                    .clone();
                let disturbance = scenarios
                    .iter()
                    .find(|s| s.agent == agent && s.affected_ops.contains(op))
                    .map(|s| (s.time_multiplier, s.onset));
                performers.push(Performer {
                    agent: agent_index(&agent, &mut agents),
                    fraction,
                    model,
                    disturbance,
                });
            }
            // Owner first, then sharers in agent order.
            performers.sort_by_key(|p| p.agent != owner);
            ops.push(SimOp {
                name: op.clone(),
                performers,
            });
        }
        for share in &st.shared {
            routes.push(Route {
                op: share.op.clone(),
                donor: st.agent.clone(),
                recipient: share.agent.clone(),
                fraction: share.fraction,
            });
        }
        stations.push(SimStation { agent: owner, ops });
    }
    Ok(SimModel {
        agents,
        stations,
        buffer_capacities: view.buffer_capacities,
        routes,
        horizon,
        seed,
        record_trace: false,
    })
}

impl SimModel {
    pub fn with_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut m = self.clone();
        m.seed = seed;
        m
    }

    /// Expected station time per station, including disturbances active
    /// from time zero.
    pub fn expected_station_times(&self) -> Vec<f64> {
        let mut per_agent = vec![0.0; self.agents.len()];
        for st in &self.stations {
            for op in &st.ops {
                for p in &op.performers {
                    let m = p.disturbance.map(|(m, _)| m).unwrap_or(1.0);
                    per_agent[p.agent] += p.fraction * p.model.expected() * m;
                }
            }
        }
        self.stations.iter().map(|s| per_agent[s.agent]).collect()
    }

    pub fn expected_bottleneck(&self) -> f64 {
        self.expected_station_times().into_iter().fold(0.0, f64::max)
    }
}

pub fn run(model: &SimModel) -> SimReport {
    engine::Engine::new(model).run()
}

/// Per-metric mean and standard deviation over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub reports: Vec<SimReport>,
    pub throughput: Summary,
    pub cycle_time_mean: Summary,
}

impl Replication {
    /// Standard error of the mean throughput.
    pub fn throughput_se(&self) -> f64 {
        self.throughput.sd / (self.reports.len() as f64).sqrt()
    }
}

/// Runs `n` replications with seeds `base_seed, base_seed + 1, ...`.
pub fn replicate(model: &SimModel, n: usize, base_seed: u64) -> Result<Replication> {
    if n == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    let reports: Vec<SimReport> = (0..n as u64)
        .into_par_iter()
        .map(|i| run(&model.with_seed(base_seed.wrapping_add(i))))
        .collect();
    let throughput = summarize(&reports.iter().map(|r| r.throughput as f64).collect::<Vec<_>>());
    let cycle_time_mean = summarize(&reports.iter().map(|r| r.cycle_time_mean).collect::<Vec<_>>());
    Ok(Replication {
        reports,
        throughput,
        cycle_time_mean,
    })
}

/// Independent random stream for one (agent, operation) pair or routing
/// decision, so adding a station does not shift other stations' draws.
pub(crate) fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
