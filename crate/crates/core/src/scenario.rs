//! End-to-end pipeline: monitor a sample log, reconfigure on triggers,
//! simulate every candidate and select one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_graph, CapabilityGraph};
use crate::line::{load_config, save_config, LineConfiguration};
use crate::monitor::{parse_samples, replay, Thresholds, Trigger};
use crate::optimizer::reconfig::ReconfigMode;
use crate::optimizer::{solve_init, solve_reconfig, InitProblem, ReconfigProblem, Solution, Weights};
use crate::selector::{select, Candidate, Decision, SelectionPolicy};
use crate::sim::{build_sim, compare_reports, replicate, Replication, WelchTest};

/// Objective weights as written in files; a missing `c_x` gets the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub c_t: f64,
    pub c_z: f64,
    #[serde(default)]
    pub c_x: Option<f64>,
}

impl WeightSpec {
    pub fn weights(&self) -> Weights {
        match self.c_x {
            Some(c_x) => Weights::with_adjustment(self.c_t, self.c_z, c_x),
            None => Weights::new(self.c_t, self.c_z),
        }
    }
}

impl From<Weights> for WeightSpec {
    fn from(w: Weights) -> Self {
        WeightSpec {
            c_t: w.c_t,
            c_z: w.c_z,
            c_x: Some(w.c_x),
        }
    }
}

fn default_weight_sets() -> Vec<WeightSpec> {
    vec![Weights::default().into()]
}

fn default_true() -> bool {
    true
}

fn default_replications() -> usize {
    10
}

/// Scenario file. Paths are relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub graph: PathBuf,
    /// Running configuration; solved from `init_weights` when absent.
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub samples: Option<PathBuf>,
    #[serde(default)]
    pub init_weights: Option<WeightSpec>,
    #[serde(default = "default_weight_sets")]
    pub weight_sets: Vec<WeightSpec>,
    /// Sharing partners of the disturbed agents; defaults to neighbouring
    /// stations.
    #[serde(default)]
    pub adjacent: Option<Vec<String>>,
    #[serde(default = "default_true")]
    pub allow_sharing: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub policy: SelectionPolicy,
    pub horizon_s: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: Scenario =
        serde_json::from_str(&text).map_err(|e| Error::from_json(&path.display().to_string(), e))?;
    if s.weight_sets.is_empty() {
        return Err(Error::InvalidArgument("scenario needs at least one weight set".into()));
    }
    if !(s.horizon_s.is_finite() && s.horizon_s > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", s.horizon_s)));
    }
    if s.replications < 2 {
        return Err(Error::InvalidArgument("at least 2 replications are required".into()));
    }
    Ok(s)
}

/// One reconfiguration found for a weight set.
#[derive(Debug, Clone)]
pub struct Reconfiguration {
    pub mode: ReconfigMode,
    pub weights: Weights,
    pub solution: Solution,
}

/// Solves the scoped reconfiguration for every weight set. Results with the
/// same configuration are reported once, under the first weight set.
pub fn reconfigure_all(
    graph: &CapabilityGraph,
    original: &LineConfiguration,
    disturbed: &[String],
    adjacent: Option<&[String]>,
    weight_sets: &[Weights],
    allow_sharing: bool,
) -> Result<Vec<Reconfiguration>> {
    let mut out: Vec<Reconfiguration> = Vec::new();
    for &w in weight_sets {
        let base = InitProblem::from_graph(graph, w)?;
        let r = ReconfigProblem::new(base, original, disturbed, adjacent, allow_sharing)?;
        let solution = solve_reconfig(&r)?;
        let mode = ReconfigMode::classify(original, &solution.config);
        if out
            .iter()
            .any(|o| o.solution.config.adjustment_from(&solution.config) <= 1e-9)
        {
            continue;
        }
        out.push(Reconfiguration {
            mode,
            weights: w,
            solution,
        });
    }
    Ok(out)
}

/// Scales the trigger agent's time models on its affected operations.
pub fn apply_trigger(graph: &CapabilityGraph, trigger: &Trigger) -> Result<CapabilityGraph> {
    let mut g = graph.clone();
    for op in &trigger.ops {
        let model = graph.operation_time(&trigger.agent, op)?.scaled(trigger.multiplier);
        g.set_time_model(&trigger.agent, op, model)?;
    }
    Ok(g)
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    pub agents: usize,
    pub bottleneck_s: f64,
    pub throughput: f64,
    pub throughput_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub name: String,
    pub mode: ReconfigMode,
    pub weights: Option<WeightSpec>,
    pub agents: usize,
    pub bottleneck_s: f64,
    pub adjustment: f64,
    pub objective: Option<f64>,
    pub solve_seconds: Option<f64>,
    pub throughput: f64,
    pub throughput_se: f64,
    pub cycle_time_mean: f64,
    /// Cycle times against the unreconfigured line under the disturbance.
    pub welch_vs_disturbed: Option<WelchTest>,
}

/// Decision as written to disk, with candidate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFile {
    pub chosen: String,
    pub ranking: Vec<String>,
    pub exclusions: Vec<ExclusionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionFile {
    pub candidate: String,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub triggers: Vec<Trigger>,
    /// Undisturbed original first, then the disturbed original when a trigger
    /// fired, then each reconfiguration.
    pub summary: Vec<SummaryRow>,
    pub candidates: Vec<CandidateReport>,
    pub configs: Vec<(String, LineConfiguration)>,
    pub decision: Decision,
    pub decision_file: DecisionFile,
    pub updated_graph: CapabilityGraph,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

struct Simulated {
    rep: Replication,
    bottleneck: f64,
}

fn simulate(
    graph: &CapabilityGraph,
    config: &LineConfiguration,
    s: &Scenario,
) -> Result<Simulated> {
    let model = build_sim(config, graph, &[], s.horizon_s, s.seed)?;
    let bottleneck = model.expected_bottleneck();
    let rep = replicate(&model, s.replications, s.seed)?;
    Ok(Simulated { rep, bottleneck })
}

/// Runs the scenario; `base_dir` resolves its relative paths.
pub fn run_scenario(s: &Scenario, base_dir: &Path) -> Result<ScenarioOutcome> {
    let graph = staged("load graph", load_graph(resolve(base_dir, &s.graph)))?;
    let original = match &s.config {
        Some(p) => staged("load configuration", load_config(resolve(base_dir, p)))?,
        None => {
            let w = s.init_weights.map(|w| w.weights()).unwrap_or_default();
            let p = staged("initialize", InitProblem::from_graph(&graph, w))?;
            staged("initialize", solve_init(&p))?.config
        }
    };

    let (triggers, updated) = match &s.samples {
        Some(p) => {
            let path = resolve(base_dir, p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e).in_stage("monitor"))?;
            let samples = staged("monitor", parse_samples(&text))?;
            let r = staged("monitor", replay(&graph, &original, &samples, s.thresholds))?;
            let g = staged("monitor", r.monitor.updated_graph(&graph))?;
            (r.triggers, g)
        }
        None => (Vec::new(), graph.clone()),
    };

    let reconfigs = if triggers.is_empty() {
        Vec::new()
    } else {
        let disturbed: Vec<String> = triggers.iter().map(|t| t.agent.clone()).collect();
        let weights: Vec<Weights> = s.weight_sets.iter().map(WeightSpec::weights).collect();
        staged(
            "reconfigure",
            reconfigure_all(
                &updated,
                &original,
                &disturbed,
                s.adjacent.as_deref(),
                &weights,
                s.allow_sharing,
            ),
        )?
    };

    let baseline = staged("simulate", simulate(&graph, &original, s))?;
    let mut summary = vec![row("original", &original, &baseline)];
    let current = staged("simulate", simulate(&updated, &original, s))?;
    let mut candidates = vec![CandidateReport {
        name: if triggers.is_empty() { "original" } else { "disturbed" }.to_string(),
        mode: ReconfigMode::Unchanged,
        weights: None,
        agents: original.agents_used().len(),
        bottleneck_s: current.bottleneck,
        adjustment: 0.0,
        objective: None,
        solve_seconds: None,
        throughput: current.rep.throughput.mean,
        throughput_se: current.rep.throughput_se(),
        cycle_time_mean: current.rep.cycle_time_mean.mean,
        welch_vs_disturbed: None,
    }];
    let mut configs = vec![(candidates[0].name.clone(), original.clone())];
    if !triggers.is_empty() {
        summary.push(row("disturbed", &original, &current));
    }
    for r in &reconfigs {
        let base_name = r.mode.as_str();
        let taken = candidates.iter().filter(|c| c.name.starts_with(base_name)).count();
        let name = if taken == 0 {
            base_name.to_string()
        } else {
            format!("{base_name}_{}", taken + 1)
        };
        let sim = staged("simulate", simulate(&updated, &r.solution.config, s))?;
        let welch = staged(
            "simulate",
            compare_reports(&current.rep.reports[0], &sim.rep.reports[0]),
        )?;
        summary.push(row(&name, &r.solution.config, &sim));
        candidates.push(CandidateReport {
            name: name.clone(),
            mode: r.mode,
            weights: Some(r.weights.into()),
            agents: r.solution.agents_used,
            bottleneck_s: sim.bottleneck,
            adjustment: r.solution.adjustment,
            objective: Some(r.solution.objective),
            solve_seconds: Some(r.solution.seconds),
            throughput: sim.rep.throughput.mean,
            throughput_se: sim.rep.throughput_se(),
            cycle_time_mean: sim.rep.cycle_time_mean.mean,
            welch_vs_disturbed: Some(welch),
        });
        configs.push((name, r.solution.config.clone()));
    }

    let pool: Vec<Candidate> = candidates
        .iter()
        .map(|c| Candidate {
            name: c.name.clone(),
            agents: c.agents,
            bottleneck: c.bottleneck_s,
            adjustment: c.adjustment,
            throughput: c.throughput,
            throughput_se: c.throughput_se,
        })
        .collect();
    let decision = staged("select", select(&pool, &s.policy))?;
    let decision_file = DecisionFile {
        chosen: pool[decision.chosen].name.clone(),
        ranking: decision.ranking.iter().map(|&i| pool[i].name.clone()).collect(),
        exclusions: decision
            .exclusions
            .iter()
            .map(|e| ExclusionFile {
                candidate: pool[e.candidate].name.clone(),
                violations: e.violations.clone(),
            })
            .collect(),
    };
    Ok(ScenarioOutcome {
        name: s.name.clone(),
        triggers,
        summary,
        candidates,
        configs,
        decision,
        decision_file,
        updated_graph: updated,
    })
}

fn row(name: &str, config: &LineConfiguration, sim: &Simulated) -> SummaryRow {
    SummaryRow {
        config: name.to_string(),
        agents: config.agents_used().len(),
        bottleneck_s: sim.bottleneck,
        throughput: sim.rep.throughput.mean,
        throughput_se: sim.rep.throughput_se(),
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config", "agents", "bottleneck_s", "throughput"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.agents.to_string(),
            format!("{:.2}", r.bottleneck_s),
            format!("{:.1}", r.throughput),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

impl ScenarioOutcome {
    /// Writes `decision.json`, `summary.csv`, `report.json`,
    /// `triggers.json`, `graph_updated.json` and one `config_<name>.json`
    /// per candidate.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write(
            "decision.json",
            serde_json::to_string_pretty(&self.decision_file).expect("serializable") + "\n",
        )?;
        write("summary.csv", summary_csv(&self.summary))?;
        write(
            "report.json",
            serde_json::to_string_pretty(&serde_json::json!({
                "name": self.name,
                "summary": self.summary,
                "candidates": self.candidates,
                "decision": self.decision_file,
            }))
            .expect("serializable")
                + "\n",
        )?;
        write(
            "triggers.json",
            serde_json::to_string_pretty(&self.triggers).expect("serializable") + "\n",
        )?;
        write("graph_updated.json", self.updated_graph.to_json_string())?;
        for (name, config) in &self.configs {
            save_config(config, dir.join(format!("config_{name}.json")))?;
        }
        Ok(())
    }

    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.config == name)
    }
}
