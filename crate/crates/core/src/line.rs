//! Line configurations and the station structure derived from them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CapabilityGraph;

/// Column sums must match 1 within this tolerance.
pub const FRACTION_TOL: f64 = 1e-9;

/// Ordered operations plus a (possibly fractional) agent assignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineConfiguration {
    pub operations: Vec<String>,
    /// (agent, operation) -> fraction of the operation the agent performs.
    pub assignment: BTreeMap<(String, String), f64>,
    /// Operations allowed to carry fractional assignments.
    pub scoped_ops: BTreeSet<String>,
    /// Buffer capacity overrides keyed by the index of the upstream station.
    pub buffers: BTreeMap<usize, usize>,
    pub default_buffer_capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedShare {
    pub op: String,
    pub agent: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub agent: String,
    /// Inclusive operation index range.
    pub first_op: usize,
    pub last_op: usize,
    /// Minority shares of this station's operations held by other agents.
    pub shared: Vec<SharedShare>,
}

impl Station {
    pub fn op_range(&self) -> std::ops::RangeInclusive<usize> {
        self.first_op..=self.last_op
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationView {
    pub stations: Vec<Station>,
    /// Capacity of the buffer after station `i`, for `i < stations.len() - 1`.
    pub buffer_capacities: Vec<usize>,
}

impl StationView {
    pub fn station_of_agent(&self, agent: &str) -> Vec<usize> {
        self.stations
            .iter()
            .enumerate()
            .filter(|(_, s)| s.agent == agent)
            .map(|(i, _)| i)
            .collect()
    }
}

/// An agent slowing down on some of its operations from `onset` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceScenario {
    pub agent: String,
    pub time_multiplier: f64,
    pub affected_ops: Vec<String>,
    #[serde(default)]
    pub onset: f64,
}

impl DisturbanceScenario {
    /// Disturbance on every operation the agent currently holds.
    pub fn on_all_ops(config: &LineConfiguration, agent: &str, multiplier: f64, onset: f64) -> Self {
        DisturbanceScenario {
            agent: agent.to_string(),
            time_multiplier: multiplier,
            affected_ops: config.ops_of_agent(agent),
            onset,
        }
    }

    pub fn validate(&self, config: &LineConfiguration) -> Result<()> {
        if !(self.time_multiplier.is_finite() && self.time_multiplier > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "disturbance multiplier must be positive, got {}",
                self.time_multiplier
            )));
        }
        let held: BTreeSet<String> = config.ops_of_agent(&self.agent).into_iter().collect();
        if let Some(op) = self.affected_ops.iter().find(|op| !held.contains(*op)) {
            return Err(Error::InvalidArgument(format!(
                "disturbance on `{}` names operation `{op}` the agent is not assigned",
                self.agent
            )));
        }
        Ok(())
    }
}

// ---- file format ----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    operations: Vec<String>,
    assignment: Vec<AssignmentRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    buffers: Vec<BufferRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    scoped_ops: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default_buffer_capacity: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentRecord {
    agent: String,
    op: String,
    fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BufferRecord {
    after_station_index: usize,
    capacity: usize,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<LineConfiguration> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LineConfiguration::from_json_str(&text, &path.display().to_string())
}

pub fn save_config(config: &LineConfiguration, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, config.to_json_string()).map_err(|e| Error::io(path, e))
}

impl LineConfiguration {
    pub fn new(operations: Vec<String>) -> Self {
        LineConfiguration {
            operations,
            default_buffer_capacity: 1,
            ..Default::default()
        }
    }

    /// 0/1 configuration from consecutive blocks of (agent, operation count).
    pub fn from_blocks(operations: Vec<String>, blocks: &[(&str, usize)]) -> Self {
        let mut config = LineConfiguration::new(operations);
        let mut j = 0;
        for (agent, len) in blocks {
            for _ in 0..*len {
                let op = config.operations[j].clone();
                config.set(agent, &op, 1.0);
                j += 1;
            }
        }
        config
    }

    pub fn set(&mut self, agent: &str, op: &str, fraction: f64) {
        let key = (agent.to_string(), op.to_string());
        if fraction == 0.0 {
            self.assignment.remove(&key);
        } else {
            self.assignment.insert(key, fraction);
        }
    }

    pub fn fraction(&self, agent: &str, op: &str) -> f64 {
        self.assignment
            .get(&(agent.to_string(), op.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| Error::from_json(source_name, e))?;
        let mut config = LineConfiguration::new(file.operations);
        for rec in file.assignment {
            let key = (rec.agent, rec.op);
            if config.assignment.insert(key.clone(), rec.fraction).is_some() {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: 0,
                    column: 0,
                    message: format!("duplicate assignment entry for {}/{}", key.0, key.1),
                });
            }
        }
        for b in file.buffers {
            if b.capacity == 0 {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: 0,
                    column: 0,
                    message: format!("buffer after station {} has zero capacity", b.after_station_index),
                });
            }
            config.buffers.insert(b.after_station_index, b.capacity);
        }
        config.scoped_ops = file.scoped_ops.into_iter().collect();
        if let Some(cap) = file.default_buffer_capacity {
            if cap == 0 {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: 0,
                    column: 0,
                    message: "default buffer capacity must be at least 1".into(),
                });
            }
            config.default_buffer_capacity = cap;
        }
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        let position: HashMap<&str, usize> = self
            .operations
            .iter()
            .enumerate()
            .map(|(i, o)| (o.as_str(), i))
            .collect();
        let mut records: Vec<AssignmentRecord> = self
            .assignment
            .iter()
            .map(|((agent, op), f)| AssignmentRecord {
                agent: agent.clone(),
                op: op.clone(),
                fraction: *f,
            })
            .collect();
        records.sort_by(|a, b| {
            let pa = position.get(a.op.as_str()).copied().unwrap_or(usize::MAX);
            let pb = position.get(b.op.as_str()).copied().unwrap_or(usize::MAX);
            pa.cmp(&pb).then_with(|| a.agent.cmp(&b.agent))
        });
        let file = ConfigFile {
            operations: self.operations.clone(),
            assignment: records,
            buffers: self
                .buffers
                .iter()
                .map(|(&after_station_index, &capacity)| BufferRecord {
                    after_station_index,
                    capacity,
                })
                .collect(),
            scoped_ops: self.scoped_ops.iter().cloned().collect(),
            default_buffer_capacity: (self.default_buffer_capacity != 1)
                .then_some(self.default_buffer_capacity),
        };
        serde_json::to_string_pretty(&file).expect("configuration serializes") + "\n"
    }

    /// Positive shares of `op`, in agent order.
    pub fn holders(&self, op: &str) -> Vec<(String, f64)> {
        let order = self.agent_order();
        let mut out: Vec<(String, f64)> = self
            .assignment
            .iter()
            .filter(|((_, o), f)| o == op && **f > 0.0)
            .map(|((a, _), f)| (a.clone(), *f))
            .collect();
        out.sort_by_key(|(a, _)| order.get(a.as_str()).copied().unwrap_or(usize::MAX));
        out
    }

    /// Agents ranked by the first operation they hold, then by name. This is
    /// the "agent index" used for deterministic tie-breaking.
    pub fn agent_order(&self) -> HashMap<&str, usize> {
        let position: HashMap<&str, usize> = self
            .operations
            .iter()
            .enumerate()
            .map(|(i, o)| (o.as_str(), i))
            .collect();
        let mut first: BTreeMap<&str, usize> = BTreeMap::new();
        for ((agent, op), f) in &self.assignment {
            if *f <= 0.0 {
                continue;
            }
            let p = position.get(op.as_str()).copied().unwrap_or(usize::MAX);
            let e = first.entry(agent.as_str()).or_insert(p);
            *e = (*e).min(p);
        }
        let mut ranked: Vec<(&str, usize)> = first.into_iter().collect();
        ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        ranked
            .into_iter()
            .enumerate()
            .map(|(i, (a, _))| (a, i))
            .collect()
    }

    pub fn agents_used(&self) -> BTreeSet<String> {
        self.assignment
            .iter()
            .filter(|(_, f)| **f > 0.0)
            .map(|((a, _), _)| a.clone())
            .collect()
    }

    /// Operations with a positive share for `agent`, in sequence order.
    pub fn ops_of_agent(&self, agent: &str) -> Vec<String> {
        self.operations
            .iter()
            .filter(|op| self.fraction(agent, op) > 0.0)
            .cloned()
            .collect()
    }

    pub fn is_integral(&self) -> bool {
        self.assignment.values().all(|f| *f == 1.0 || *f == 0.0)
    }

    /// Majority owner of each operation; exact ties go to the lower agent
    /// index.
    pub fn owners(&self) -> Vec<Option<String>> {
        self.operations
            .iter()
            .map(|op| {
                let mut best: Option<(String, f64)> = None;
                for (agent, f) in self.holders(op) {
                    if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                        best = Some((agent, f));
                    }
                }
                best.map(|(a, _)| a)
            })
            .collect()
    }

    /// Sum of |self - other| over all (agent, op) entries.
    pub fn adjustment_from(&self, other: &LineConfiguration) -> f64 {
        let keys: BTreeSet<&(String, String)> =
            self.assignment.keys().chain(other.assignment.keys()).collect();
        keys.into_iter()
            .map(|(a, o)| (self.fraction(a, o) - other.fraction(a, o)).abs())
            .sum()
    }
}

pub fn expected_station_times(
    config: &LineConfiguration,
    graph: &CapabilityGraph,
) -> Result<BTreeMap<String, f64>> {
    let mut times: BTreeMap<String, f64> = BTreeMap::new();
    for op in &config.operations {
        for (agent, f) in config.holders(op) {
            let model = graph
                .time_model(&agent, op)
                .ok_or_else(|| Error::MissingTimeModel {
                    agent: agent.clone(),
                    op: op.clone(),
                })?;
            *times.entry(agent).or_insert(0.0) += model.expected() * f;
        }
    }
    Ok(times)
}

pub fn bottleneck_time(config: &LineConfiguration, graph: &CapabilityGraph) -> Result<f64> {
    Ok(expected_station_times(config, graph)?
        .values()
        .copied()
        .fold(0.0, f64::max))
}

/// Groups maximal runs of operations with the same majority owner into
/// stations. Minority shares stay attached to the owning station.
pub fn derive_stations(config: &LineConfiguration) -> Result<StationView> {
    let owners = config.owners();
    let mut stations: Vec<Station> = Vec::new();
    for (j, owner) in owners.iter().enumerate() {
        let owner = owner.as_ref().ok_or_else(|| {
            Error::InvalidConfiguration(vec![format!(
                "operation `{}` has no assigned agent",
                config.operations[j]
            )])
        })?;
        match stations.last_mut() {
            Some(s) if &s.agent == owner => s.last_op = j,
            _ => stations.push(Station {
                agent: owner.clone(),
                first_op: j,
                last_op: j,
                shared: Vec::new(),
            }),
        }
        let station = stations.last_mut().expect("pushed above");
        let op = &config.operations[j];
        for (agent, f) in config.holders(op) {
            if &agent != owner {
                station.shared.push(SharedShare {
                    op: op.clone(),
                    agent,
                    fraction: f,
                });
            }
        }
    }
    let buffer_capacities = (0..stations.len().saturating_sub(1))
        .map(|i| {
            config
                .buffers
                .get(&i)
                .copied()
                .unwrap_or(config.default_buffer_capacity)
        })
        .collect();
    Ok(StationView {
        stations,
        buffer_capacities,
    })
}

/// Every invariant violation, or an empty list.
pub fn validate(config: &LineConfiguration, graph: &CapabilityGraph) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    let known_ops: BTreeSet<String> = graph.operations().into_iter().collect();
    let known_agents: BTreeSet<String> = graph.agents().into_iter().collect();
    for op in &config.operations {
        if !seen.insert(op) {
            violations.push(format!("operation `{op}` listed twice"));
        }
        if !known_ops.contains(op) {
            violations.push(format!("operation `{op}` is not in the capability graph"));
        }
    }
    let listed: BTreeSet<&String> = config.operations.iter().collect();
    for ((agent, op), f) in &config.assignment {
        if !listed.contains(op) {
            violations.push(format!("assignment {agent}/{op} names an unlisted operation"));
            continue;
        }
        if !known_agents.contains(agent) {
            violations.push(format!("assignment {agent}/{op} names an unknown agent"));
            continue;
        }
        if !(f.is_finite() && (0.0..=1.0).contains(f)) {
            violations.push(format!("assignment {agent}/{op} has fraction {f} outside [0, 1]"));
        }
        if *f > 0.0 {
            let capable = graph
                .achievable_operations(agent)
                .map(|ops| ops.contains(op))
                .unwrap_or(false);
            if !capable {
                violations.push(format!("agent `{agent}` cannot perform operation `{op}`"));
            } else if graph.time_model(agent, op).is_none() {
                violations.push(format!("no time model for agent `{agent}` on operation `{op}`"));
            }
        }
        if *f > 0.0 && *f < 1.0 && !config.scoped_ops.contains(op) {
            violations.push(format!(
                "fractional assignment {agent}/{op} = {f} on an operation outside the reconfiguration scope"
            ));
        }
    }
    for op in &config.operations {
        let total: f64 = config
            .assignment
            .iter()
            .filter(|((_, o), _)| o == op)
            .map(|(_, f)| *f)
            .sum();
        if (total - 1.0).abs() > FRACTION_TOL {
            violations.push(format!("operation `{op}` fractions sum to {total}, not 1"));
        }
    }
    violations
}

/// Agents whose stations lie within `radius` stations of any station of
/// `agent`, excluding `agent` itself.
pub fn adjacent_agents(view: &StationView, agent: &str, radius: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in view.station_of_agent(agent) {
        let lo = s.saturating_sub(radius);
        let hi = (s + radius).min(view.stations.len() - 1);
        for t in lo..=hi {
            let a = &view.stations[t].agent;
            if a != agent && !out.contains(a) {
                out.push(a.clone());
            }
        }
    }
    out
}
