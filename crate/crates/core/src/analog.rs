//! Synthetic 51-operation, 40-agent battery-line dataset.
//!
//! The original line has 20 stations and a 43.9 s bottleneck set by the
//! leak test (operation 38), which only leak testers can do.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{CapabilityGraph, EntityId, Predicate, Triple};
use crate::line::LineConfiguration;
use crate::monitor::{samples_csv, Sample, Thresholds};
use crate::optimizer::Weights;
use crate::scenario::{Scenario, WeightSpec};
use crate::selector::SelectionPolicy;
use crate::time_model::TimeModel;

pub const DISTURBED_AGENT: &str = "Worker2";
/// Neighbours of the disturbed station used as sharing partners.
pub const ADJACENT_AGENTS: [&str; 3] = ["LargeRobot3", "WeldingMachine0", "Worker3"];
pub const HORIZON_S: f64 = 16.0 * 3600.0;
pub const BUFFER_CAPACITY: usize = 3;

pub const WORKER_CV: f64 = 0.08;
pub const MACHINE_CV: f64 = 0.015;

const FLEET: [(&str, usize); 8] = [
    ("Worker", 5),
    ("LargeRobot", 6),
    ("MiddleRobot", 6),
    ("SmallRobot", 6),
    ("CameraInspector", 4),
    ("Scanner", 5),
    ("WeldingMachine", 4),
    ("LeakTester", 4),
];

/// Capability needed by each operation, with base times in seconds.
const OPERATIONS: [(&str, f64); 51] = [
    ("Label", 12.0),
    ("Label", 14.0),
    ("Kitting", 10.5),
    ("Kitting", 11.0),
    ("Kitting", 10.8),
    ("Kitting", 10.6),
    ("Installing", 9.6),
    ("Installing", 10.4),
    ("Installing", 11.0),
    ("Installing", 10.0),
    ("Manual", 12.0),
    ("Manual", 13.5),
    ("Manual", 11.5),
    ("Stacking", 8.9),
    ("Stacking", 8.5),
    ("Stacking", 9.0),
    ("Stacking", 8.7),
    ("Stacking", 8.8),
    ("Stacking", 5.0),
    ("Stacking", 5.5),
    ("Stacking", 5.5),
    ("Manual", 3.0),
    ("Manual", 2.5),
    ("Manual", 2.5),
    ("Manual", 15.5),
    ("Welding", 30.0),
    ("Welding", 8.0),
    ("Manual", 10.0),
    ("Manual", 10.47),
    ("Manual", 10.0),
    ("Inspection", 20.0),
    ("Fastening", 13.0),
    ("Fastening", 14.0),
    ("Fastening", 13.5),
    ("Installing", 14.9),
    ("Installing", 14.5),
    ("Installing", 14.5),
    ("LeakTest", 43.9),
    ("Manual", 12.0),
    ("Manual", 12.5),
    ("Manual", 13.0),
    ("Kitting", 18.0),
    ("Kitting", 19.0),
    ("Fastening", 16.0),
    ("Fastening", 17.5),
    ("Welding", 35.0),
    ("Inspection", 25.0),
    ("Manual", 18.0),
    ("Manual", 20.0),
    ("Scan", 22.0),
    ("Scan", 23.6),
];

/// Original stations: agent and its last operation (1-based).
const STATIONS: [(&str, usize); 20] = [
    ("Scanner0", 2),
    ("LargeRobot0", 6),
    ("MiddleRobot0", 10),
    ("Worker0", 13),
    ("LargeRobot3", 18),
    ("Worker2", 25),
    ("WeldingMachine0", 27),
    ("Worker3", 30),
    ("CameraInspector0", 31),
    ("SmallRobot0", 34),
    ("MiddleRobot1", 37),
    ("LeakTester0", 38),
    ("Worker4", 41),
    ("LargeRobot1", 43),
    ("SmallRobot1", 45),
    ("WeldingMachine1", 46),
    ("CameraInspector1", 47),
    ("Worker1", 49),
    ("Scanner1", 50),
    ("Scanner2", 51),
];

/// Time factor of an agent type on a capability, `None` if it lacks it.
fn speed(agent_type: &str, capability: &str) -> Option<f64> {
    match (agent_type, capability) {
        ("Scanner", "Label" | "Scan") => Some(1.0),
        ("LargeRobot", "Kitting" | "Stacking") => Some(1.0),
        ("MiddleRobot", "Kitting" | "Installing") => Some(1.0),
        ("SmallRobot", "Installing" | "Fastening") => Some(1.0),
        ("Worker", "Manual" | "Stacking" | "Fastening") => Some(1.0),
        ("Worker", "Kitting") => Some(1.3),
        ("Worker", "Installing") => Some(1.2),
        ("WeldingMachine", "Welding") => Some(1.0),
        ("CameraInspector", "Inspection") => Some(1.0),
        ("LeakTester", "LeakTest") => Some(1.0),
        _ => None,
    }
}

pub fn operation_names() -> Vec<String> {
    (1..=OPERATIONS.len()).map(|i| format!("Op{i}")).collect()
}

fn model(agent_type: &str, mean: f64) -> TimeModel {
    if agent_type == "Worker" {
        TimeModel::LogNormal {
            mean,
            sd: WORKER_CV * mean,
        }
    } else {
        TimeModel::TruncNormal {
            mean,
            sd: MACHINE_CV * mean,
        }
    }
}

pub fn graph() -> CapabilityGraph {
    let mut g = CapabilityGraph::new();
    let ops = operation_names();
    let mut capabilities: Vec<&str> = OPERATIONS.iter().map(|(c, _)| *c).collect();
    capabilities.sort_unstable();
    capabilities.dedup();
    for c in &capabilities {
        g.add_entity(EntityId::capability(*c)).expect("fresh capability");
    }
    for (op, (cap, _)) in ops.iter().zip(OPERATIONS) {
        g.add_entity(EntityId::operation(op.as_str())).expect("fresh operation");
        g.add_triple(Triple::new(
            EntityId::operation(op.as_str()),
            Predicate::Needs,
            EntityId::capability(cap),
        ))
        .expect("valid triple");
    }
    for (kind, count) in FLEET {
        for i in 0..count {
            let agent = format!("{kind}{i}");
            g.add_agent(&agent, kind).expect("fresh agent");
            for c in &capabilities {
                if speed(kind, c).is_some() {
                    g.add_triple(Triple::new(
                        EntityId::agent(agent.as_str()),
                        Predicate::Has,
                        EntityId::capability(*c),
                    ))
                    .expect("valid triple");
                }
            }
            for (op, (cap, base)) in ops.iter().zip(OPERATIONS) {
                if let Some(f) = speed(kind, cap) {
                    g.set_time_model(&agent, op, model(kind, base * f))
                        .expect("declared pair");
                }
            }
        }
    }
    g
}

pub fn original_config() -> LineConfiguration {
    let mut blocks = Vec::with_capacity(STATIONS.len());
    let mut first = 1;
    for (agent, last) in STATIONS {
        blocks.push((agent, last + 1 - first));
        first = last + 1;
    }
    let mut c = LineConfiguration::from_blocks(operation_names(), &blocks);
    c.default_buffer_capacity = BUFFER_CAPACITY;
    c
}

/// Operation-time log of one agent on its operations in `config`: `parts`
/// cycles, with every duration multiplied by `multiplier` from part
/// `onset_part` on. Parts start no sooner than one bottleneck apart.
pub fn sample_log(
    graph: &CapabilityGraph,
    config: &LineConfiguration,
    agent: &str,
    parts: usize,
    onset_part: usize,
    multiplier: f64,
    seed: u64,
) -> Vec<Sample> {
    let ops = config.ops_of_agent(agent);
    let cycle = crate::line::bottleneck_time(config, graph).unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(parts * ops.len());
    let mut t: f64 = 0.0;
    for part in 0..parts {
        t = t.max(part as f64 * cycle);
        let m = if part >= onset_part { multiplier } else { 1.0 };
        for op in &ops {
            let tm = graph.time_model(agent, op).expect("configured pair has a model");
            let d = tm.sample(&mut rng) * m;
            t += d;
            out.push(Sample {
                timestamp_s: (t * 1000.0).round() / 1000.0,
                agent: agent.to_string(),
                op: op.clone(),
                duration_s: (d * 1000.0).round() / 1000.0,
            });
        }
    }
    out
}

pub const LOG_PARTS: usize = 200;
pub const LOG_ONSET_PART: usize = 100;

/// Disturbance scenarios shipped with the dataset: file stem and multiplier.
pub const SCENARIOS: [(&str, f64); 3] = [("baseline", 1.0), ("s1", 1.5), ("s2", 3.0)];

/// Weight sets tried for every reconfiguration: one that favours keeping the
/// agent count, one that favours the bottleneck.
pub fn weight_sets() -> Vec<WeightSpec> {
    vec![Weights::new(0.1, 0.9).into(), Weights::new(0.6, 0.4).into()]
}

pub fn scenario(stem: &str) -> Scenario {
    Scenario {
        name: stem.to_string(),
        graph: "graph.json".into(),
        config: Some("config.json".into()),
        samples: Some(format!("samples_{stem}.csv").into()),
        init_weights: None,
        weight_sets: weight_sets(),
        adjacent: Some(ADJACENT_AGENTS.iter().map(|s| s.to_string()).collect()),
        allow_sharing: true,
        thresholds: Thresholds::default(),
        policy: SelectionPolicy::default(),
        horizon_s: HORIZON_S,
        replications: 10,
        seed: 1,
    }
}

/// Writes the graph, the original configuration, one sample log per
/// scenario and the scenario files into `dir`.
pub fn export(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = graph();
    let c = original_config();
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    put("graph.json".into(), g.to_json_string())?;
    put("config.json".into(), c.to_json_string())?;
    for (i, (stem, m)) in SCENARIOS.iter().enumerate() {
        let log = sample_log(&g, &c, DISTURBED_AGENT, LOG_PARTS, LOG_ONSET_PART, *m, 100 + i as u64);
        put(format!("samples_{stem}.csv"), samples_csv(&log))?;
        put(
            format!("scenario_{stem}.json"),
            serde_json::to_string_pretty(&scenario(stem)).expect("serializable") + "\n",
        )?;
    }
    Ok(written)
}
