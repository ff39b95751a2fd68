//! Capability graph: a small triple store describing agents, operations,
//! capabilities, resources, stations and lines, plus per-(agent, operation)
//! time models.
//!
//! An agent can perform an operation when it `has` every capability the
//! operation `needs`. Stations and lines inherit what their contained
//! entities have (one hop), and a contained resource counts as had.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time_model::TimeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Agent,
    Operation,
    Station,
    Capability,
    Resource,
    Line,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Agent => "Agent",
            EntityKind::Operation => "Operation",
            EntityKind::Station => "Station",
            EntityKind::Capability => "Capability",
            EntityKind::Resource => "Resource",
            EntityKind::Line => "Line",
        }
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "Agent" => EntityKind::Agent,
            "Operation" => EntityKind::Operation,
            "Station" => EntityKind::Station,
            "Capability" => EntityKind::Capability,
            "Resource" => EntityKind::Resource,
            "Line" => EntityKind::Line,
            other => return Err(format!("unknown entity kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId {
    pub kind: EntityKind,
    pub name: String,
}

impl EntityId {
    pub fn new(kind: EntityKind, name: impl Into<String>) -> Self {
        EntityId {
            kind,
            name: name.into(),
        }
    }

    pub fn agent(name: impl Into<String>) -> Self {
        Self::new(EntityKind::Agent, name)
    }

    pub fn operation(name: impl Into<String>) -> Self {
        Self::new(EntityKind::Operation, name)
    }

    pub fn capability(name: impl Into<String>) -> Self {
        Self::new(EntityKind::Capability, name)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.name)
    }
}

impl FromStr for EntityId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, name) = s
            .split_once(':')
            .ok_or_else(|| format!("entity reference `{s}` is not of the form Kind:name"))?;
        if name.is_empty() {
            return Err(format!("entity reference `{s}` has an empty name"));
        }
        Ok(EntityId::new(kind.parse()?, name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Has,
    Needs,
    Contains,
    Performs,
    Precedes,
}

impl Predicate {
    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Has => "has",
            Predicate::Needs => "needs",
            Predicate::Contains => "contains",
            Predicate::Performs => "performs",
            Predicate::Precedes => "precedes",
        }
    }

    fn admits(self, subject: EntityKind, object: EntityKind) -> bool {
        use EntityKind::*;
        match self {
            Predicate::Has => {
                matches!(subject, Agent | Station | Line) && matches!(object, Capability | Resource)
            }
            Predicate::Needs => subject == Operation && matches!(object, Capability | Resource),
            Predicate::Contains => {
                matches!(subject, Station | Line)
                    && matches!(object, Agent | Resource | Station | Operation)
            }
            Predicate::Performs => matches!(subject, Agent | Station) && object == Operation,
            Predicate::Precedes => subject == Operation && object == Operation,
        }
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "has" => Predicate::Has,
            "needs" => Predicate::Needs,
            "contains" => Predicate::Contains,
            "performs" => Predicate::Performs,
            "precedes" => Predicate::Precedes,
            other => return Err(format!("unknown predicate `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: Predicate,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: Predicate, object: EntityId) -> Self {
        Triple {
            subject,
            predicate,
            object,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.subject, self.predicate.as_str(), self.object)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CapabilityGraph {
    entities: Vec<EntityId>,
    index: HashMap<EntityId, usize>,
    agent_types: BTreeMap<String, String>,
    triples: BTreeSet<Triple>,
    time_models: BTreeMap<(String, String), TimeModel>,
}

// ---- file format ----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    entities: Vec<EntityRecord>,
    #[serde(default)]
    triples: Vec<[String; 3]>,
    #[serde(default)]
    time_models: Vec<TimeModelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    kind: EntityKind,
    name: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    agent_type: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeModelRecord {
    agent: String,
    op: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<f64>>,
}

impl TimeModelRecord {
    fn into_model(self) -> std::result::Result<(String, String, TimeModel), String> {
        let need = |v: Option<f64>, field: &str| {
            v.ok_or_else(|| format!("time model {}/{} is missing `{field}`", self.agent, self.op))
        };
        let model = match self.kind.as_str() {
            "constant" => TimeModel::Constant {
                mean: need(self.mean, "mean")?,
            },
            "trunc_normal" => TimeModel::TruncNormal {
                mean: need(self.mean, "mean")?,
                sd: need(self.sd, "sd")?,
            },
            "log_normal" => TimeModel::LogNormal {
                mean: need(self.mean, "mean")?,
                sd: need(self.sd, "sd")?,
            },
            "empirical" => TimeModel::Empirical {
                samples: self.samples.clone().ok_or_else(|| {
                    format!("time model {}/{} is missing `samples`", self.agent, self.op)
                })?,
            },
            other => return Err(format!("unknown time model kind `{other}`")),
        };
        Ok((self.agent, self.op, model))
    }

    fn from_model(agent: &str, op: &str, model: &TimeModel) -> Self {
        let (kind, mean, sd, samples) = match model {
            TimeModel::Constant { mean } => ("constant", Some(*mean), None, None),
            TimeModel::TruncNormal { mean, sd } => ("trunc_normal", Some(*mean), Some(*sd), None),
            TimeModel::LogNormal { mean, sd } => ("log_normal", Some(*mean), Some(*sd), None),
            TimeModel::Empirical { samples } => ("empirical", None, None, Some(samples.clone())),
        };
        TimeModelRecord {
            agent: agent.to_string(),
            op: op.to_string(),
            kind: kind.to_string(),
            mean,
            sd,
            samples,
        }
    }
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<CapabilityGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CapabilityGraph::from_json_str(&text, &path.display().to_string())
}

pub fn save_graph(graph: &CapabilityGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, graph.to_json_string()).map_err(|e| Error::io(path, e))
}

impl CapabilityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::from_json(source_name, e))?;
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: 0,
            column: 0,
            message,
        };

        let mut graph = CapabilityGraph::new();
        for rec in file.entities {
            let id = EntityId::new(rec.kind, rec.name);
            match rec.agent_type {
                Some(t) if rec.kind == EntityKind::Agent => graph.add_agent(&id.name, &t)?,
                Some(_) => {
                    return Err(Error::Consistency(format!(
                        "entity {id} has a type but is not an agent"
                    )))
                }
                None => graph.add_entity(id)?,
            }
        }
        for [s, p, o] in file.triples {
            let subject: EntityId = s.parse().map_err(parse_err)?;
            let predicate: Predicate = p.parse().map_err(parse_err)?;
            let object: EntityId = o.parse().map_err(parse_err)?;
            graph.add_triple(Triple::new(subject, predicate, object))?;
        }
        for rec in file.time_models {
            let (agent, op, model) = rec.into_model().map_err(parse_err)?;
            graph.time_models.insert((agent, op), model);
        }
        graph.check_consistency()?;
        Ok(graph)
    }

    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            entities: self
                .entities
                .iter()
                .map(|id| EntityRecord {
                    kind: id.kind,
                    name: id.name.clone(),
                    agent_type: self.agent_types.get(&id.name).filter(|_| id.kind == EntityKind::Agent).cloned(),
                })
                .collect(),
            triples: self
                .triples
                .iter()
                .map(|t| {
                    [
                        t.subject.to_string(),
                        t.predicate.as_str().to_string(),
                        t.object.to_string(),
                    ]
                })
                .collect(),
            time_models: self
                .time_models
                .iter()
                .map(|((a, o), m)| TimeModelRecord::from_model(a, o, m))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes") + "\n"
    }

    // ---- construction ------------------------------------------------------

    pub fn add_entity(&mut self, id: EntityId) -> Result<()> {
        if id.name.is_empty() {
            return Err(Error::Consistency(format!(
                "{} entity with an empty name",
                id.kind.as_str()
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Consistency(format!("duplicate entity {id}")));
        }
        self.index.insert(id.clone(), self.entities.len());
        self.entities.push(id);
        Ok(())
    }

    pub fn add_agent(&mut self, name: &str, agent_type: &str) -> Result<()> {
        self.add_entity(EntityId::agent(name))?;
        self.agent_types
            .insert(name.to_string(), agent_type.to_string());
        Ok(())
    }

    /// Adds a triple after checking that both ends exist and the predicate
    /// admits their kinds.
    pub fn add_triple(&mut self, triple: Triple) -> Result<()> {
        for end in [&triple.subject, &triple.object] {
            if !self.index.contains_key(end) {
                return Err(Error::Consistency(format!(
                    "triple {triple} references undeclared entity {end}"
                )));
            }
        }
        if !triple.predicate.admits(triple.subject.kind, triple.object.kind) {
            return Err(Error::Consistency(format!(
                "triple {triple}: `{}` does not relate {} to {}",
                triple.predicate.as_str(),
                triple.subject.kind.as_str(),
                triple.object.kind.as_str()
            )));
        }
        self.triples.insert(triple);
        Ok(())
    }

    pub fn set_time_model(&mut self, agent: &str, op: &str, model: TimeModel) -> Result<()> {
        model.validate()?;
        self.require(&EntityId::agent(agent))?;
        self.require(&EntityId::operation(op))?;
        self.time_models
            .insert((agent.to_string(), op.to_string()), model);
        Ok(())
    }

    pub fn check_consistency(&self) -> Result<()> {
        let mut position = HashMap::new();
        for (i, op) in self.operations().iter().enumerate() {
            position.insert(op.clone(), i);
        }
        for t in self.query(None, Some(Predicate::Precedes), None) {
            if position[&t.subject.name] >= position[&t.object.name] {
                return Err(Error::Consistency(format!(
                    "triple {t} contradicts the declared operation order"
                )));
            }
        }
        for ((agent, op), model) in &self.time_models {
            self.require(&EntityId::agent(agent.as_str()))
                .map_err(|_| Error::Consistency(format!("time model for undeclared agent `{agent}`")))?;
            self.require(&EntityId::operation(op.as_str()))
                .map_err(|_| Error::Consistency(format!("time model for undeclared operation `{op}`")))?;
            model
                .validate()
                .map_err(|e| Error::Consistency(format!("time model {agent}/{op}: {e}")))?;
            if !self.agent_can_perform(agent, op) {
                return Err(Error::Consistency(format!(
                    "time model {agent}/{op}: agent lacks a capability the operation needs"
                )));
            }
        }
        for t in self.query(None, Some(Predicate::Contains), None) {
            if t.subject.kind == EntityKind::Line && t.object.kind == EntityKind::Operation {
                let capable = self.capable_agents(&t.object.name)?;
                if capable.is_empty() {
                    return Err(Error::Consistency(format!(
                        "triple {t}: no agent can perform {}",
                        t.object
                    )));
                }
            }
        }
        Ok(())
    }

    // ---- queries -----------------------------------------------------------

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn time_models(&self) -> impl Iterator<Item = (&(String, String), &TimeModel)> {
        self.time_models.iter()
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.index.contains_key(id)
    }

    fn require(&self, id: &EntityId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownEntity(id.to_string()))
        }
    }

    fn names_of(&self, kind: EntityKind) -> Vec<String> {
        self.entities
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.name.clone())
            .collect()
    }

    /// Operation names in sequence (declaration) order.
    pub fn operations(&self) -> Vec<String> {
        self.names_of(EntityKind::Operation)
    }

    /// Agent names in declaration order.
    pub fn agents(&self) -> Vec<String> {
        self.names_of(EntityKind::Agent)
    }

    pub fn agent_type(&self, agent: &str) -> Option<&str> {
        self.agent_types.get(agent).map(String::as_str)
    }

    /// Wildcard pattern match over stored triples.
    pub fn query(
        &self,
        subject: Option<&EntityId>,
        predicate: Option<Predicate>,
        object: Option<&EntityId>,
    ) -> Vec<&Triple> {
        self.triples
            .iter()
            .filter(|t| subject.is_none_or(|s| &t.subject == s))
            .filter(|t| predicate.is_none_or(|p| t.predicate == p))
            .filter(|t| object.is_none_or(|o| &t.object == o))
            .collect()
    }

    /// Everything `entity` has, directly or through one `contains` hop.
    /// A contained resource is itself counted as had.
    pub fn derived_has(&self, entity: &EntityId) -> BTreeSet<EntityId> {
        let mut out: BTreeSet<EntityId> = self
            .query(Some(entity), Some(Predicate::Has), None)
            .into_iter()
            .map(|t| t.object.clone())
            .collect();
        for t in self.query(Some(entity), Some(Predicate::Contains), None) {
            if t.object.kind == EntityKind::Resource {
                out.insert(t.object.clone());
            }
            for inner in self.query(Some(&t.object), Some(Predicate::Has), None) {
                out.insert(inner.object.clone());
            }
        }
        out
    }

    fn needs(&self, op: &EntityId) -> Vec<&EntityId> {
        self.query(Some(op), Some(Predicate::Needs), None)
            .into_iter()
            .map(|t| &t.object)
            .collect()
    }

    /// True when the station (or line) has every capability and resource
    /// the operation needs.
    pub fn station_satisfies(&self, station: &EntityId, op: &str) -> Result<bool> {
        self.require(station)?;
        let op_id = EntityId::operation(op);
        self.require(&op_id)?;
        let has = self.derived_has(station);
        let needs = self.needs(&op_id);
        Ok(!needs.is_empty() && needs.into_iter().all(|n| has.contains(n)))
    }

    /// Agent-level check: only capability needs count; resources are a
    /// station concern. Operations without any capability need are not
    /// achievable by anyone.
    fn agent_can_perform(&self, agent: &str, op: &str) -> bool {
        let agent_id = EntityId::agent(agent);
        let needed: Vec<&EntityId> = self
            .needs(&EntityId::operation(op))
            .into_iter()
            .filter(|n| n.kind == EntityKind::Capability)
            .collect();
        if needed.is_empty() {
            return false;
        }
        let has = self.derived_has(&agent_id);
        needed.into_iter().all(|n| has.contains(n))
    }

    pub fn achievable_operations(&self, agent: &str) -> Result<Vec<String>> {
        self.require(&EntityId::agent(agent))?;
        Ok(self
            .operations()
            .into_iter()
            .filter(|op| self.agent_can_perform(agent, op))
            .collect())
    }

    pub fn capable_agents(&self, op: &str) -> Result<Vec<String>> {
        self.require(&EntityId::operation(op))?;
        Ok(self
            .agents()
            .into_iter()
            .filter(|a| self.agent_can_perform(a, op))
            .collect())
    }

    pub fn operation_time(&self, agent: &str, op: &str) -> Result<&TimeModel> {
        self.require(&EntityId::agent(agent))?;
        self.require(&EntityId::operation(op))?;
        if !self.agent_can_perform(agent, op) {
            return Err(Error::NoCapability {
                agent: agent.to_string(),
                op: op.to_string(),
            });
        }
        self.time_models
            .get(&(agent.to_string(), op.to_string()))
            .ok_or_else(|| Error::MissingTimeModel {
                agent: agent.to_string(),
                op: op.to_string(),
            })
    }

    /// Stored model without the capability check (used by simulation and
    /// monitoring, which operate on already validated assignments).
    pub fn time_model(&self, agent: &str, op: &str) -> Option<&TimeModel> {
        self.time_models.get(&(agent.to_string(), op.to_string()))
    }

    // ---- versioned updates -------------------------------------------------

    pub fn update_time_model(&self, agent: &str, op: &str, model: TimeModel) -> Result<Self> {
        let mut next = self.clone();
        next.set_time_model(agent, op, model)?;
        Ok(next)
    }

    /// Removes `agent has capability` and drops time models the agent can no
    /// longer use.
    pub fn remove_capability(&self, agent: &str, capability: &str) -> Result<Self> {
        let agent_id = EntityId::agent(agent);
        let cap_id = EntityId::capability(capability);
        self.require(&agent_id)?;
        self.require(&cap_id)?;
        let mut next = self.clone();
        next.triples
            .remove(&Triple::new(agent_id, Predicate::Has, cap_id));
        let stale: Vec<(String, String)> = next
            .time_models
            .keys()
            .filter(|(a, o)| a == agent && !next.agent_can_perform(a, o))
            .cloned()
            .collect();
        for key in stale {
            next.time_models.remove(&key);
        }
        Ok(next)
    }
}
