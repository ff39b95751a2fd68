//! Initialization and reconfiguration solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CapabilityGraph;
use crate::line::LineConfiguration;

pub mod init;
pub mod lp;
pub mod milp;
pub mod oracle;
pub mod reconfig;

pub use init::{pareto_frontier, solve_init, solve_init_milp, sweep_pareto, ParetoPoint};
pub use oracle::{brute_force_init, brute_force_reconfig, ReconfigOracle};
pub use reconfig::{solve_reconfig, ReconfigProblem, Scope};

/// Objective weights for bottleneck time, agent count and adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub c_t: f64,
    pub c_z: f64,
    #[serde(default)]
    pub c_x: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights::new(0.6, 0.4)
    }
}

impl Weights {
    /// Bottleneck and agent weights with the default adjustment weight.
    pub fn new(c_t: f64, c_z: f64) -> Self {
        Weights {
            c_t,
            c_z,
            c_x: 0.001 * Self::positive_min(c_t, c_z),
        }
    }

    pub fn with_adjustment(c_t: f64, c_z: f64, c_x: f64) -> Self {
        Weights { c_t, c_z, c_x }
    }

    fn positive_min(c_t: f64, c_z: f64) -> f64 {
        match (c_t > 0.0, c_z > 0.0) {
            (true, true) => c_t.min(c_z),
            (true, false) => c_t,
            _ => c_z,
        }
    }

    pub fn scaled(&self, factor: f64) -> Weights {
        Weights {
            c_t: self.c_t * factor,
            c_z: self.c_z * factor,
            c_x: self.c_x * factor,
        }
    }

    pub fn validate(&self, reconfiguration: bool) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !(ok(self.c_t) && ok(self.c_z) && ok(self.c_x)) {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and non-negative, got {self:?}"
            )));
        }
        if self.c_t + self.c_z <= 0.0 {
            return Err(Error::InvalidArgument(
                "bottleneck and agent weights cannot both be zero".into(),
            ));
        }
        if reconfiguration {
            let cap = 0.01 * Self::positive_min(self.c_t, self.c_z);
            if self.c_x <= 0.0 || self.c_x > cap * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "adjustment weight must lie in (0, {cap}], got {}",
                    self.c_x
                )));
            }
        }
        Ok(())
    }
}

/// Expected operation times per agent, the input to both solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct InitProblem {
    pub operations: Vec<String>,
    pub agents: Vec<String>,
    /// `times[k][j]`: expected time of agent `k` on operation `j`, `None` if
    /// the agent lacks the capability.
    pub times: Vec<Vec<Option<f64>>>,
    pub weights: Weights,
}

impl InitProblem {
    pub fn from_graph(graph: &CapabilityGraph, weights: Weights) -> Result<Self> {
        let operations = graph.operations();
        let agents = graph.agents();
        let mut times = Vec::with_capacity(agents.len());
        for agent in &agents {
            let capable = graph.achievable_operations(agent)?;
            let row = operations
                .iter()
                .map(|op| {
                    if capable.contains(op) {
                        graph.operation_time(agent, op).map(|m| Some(m.expected()))
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            times.push(row);
        }
        let p = InitProblem {
            operations,
            agents,
            times,
            weights,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        self.weights.validate(false)?;
        if self.times.len() != self.agents.len()
            || self.times.iter().any(|r| r.len() != self.operations.len())
        {
            return Err(Error::InvalidArgument("time matrix shape mismatch".into()));
        }
        for row in &self.times {
            if let Some(t) = row.iter().flatten().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(Error::InvalidArgument(format!("expected time {t} is not positive")));
            }
        }
        for (j, op) in self.operations.iter().enumerate() {
            if self.times.iter().all(|r| r[j].is_none()) {
                return Err(Error::Infeasible(format!(
                    "no agent can perform operation `{op}`; check if more agents are available"
                )));
            }
        }
        Ok(())
    }

    pub fn agent_index(&self, agent: &str) -> Option<usize> {
        self.agents.iter().position(|a| a == agent)
    }

    pub fn op_index(&self, op: &str) -> Option<usize> {
        self.operations.iter().position(|o| o == op)
    }

    /// Dense `[k][j]` fraction matrix of a configuration.
    pub fn fractions_of(&self, config: &LineConfiguration) -> Result<Vec<Vec<f64>>> {
        let mut f = vec![vec![0.0; self.operations.len()]; self.agents.len()];
        for ((agent, op), v) in &config.assignment {
            let k = self
                .agent_index(agent)
                .ok_or_else(|| Error::UnknownEntity(format!("Agent:{agent}")))?;
            let j = self
                .op_index(op)
                .ok_or_else(|| Error::UnknownEntity(format!("Operation:{op}")))?;
            f[k][j] = *v;
        }
        Ok(f)
    }

    pub fn config_from_fractions(&self, fractions: &[Vec<f64>]) -> LineConfiguration {
        let mut c = LineConfiguration::new(self.operations.clone());
        for (k, row) in fractions.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                if *f > 0.0 {
                    c.set(&self.agents[k], &self.operations[j], *f);
                }
            }
        }
        c
    }

    /// Σ_j E(T_kj)·fraction for each agent.
    pub fn station_times(&self, fractions: &[Vec<f64>]) -> Vec<f64> {
        fractions
            .iter()
            .zip(&self.times)
            .map(|(fr, tr)| {
                fr.iter()
                    .zip(tr)
                    .filter(|(f, _)| **f > 0.0)
                    .map(|(f, t)| f * t.unwrap_or(f64::INFINITY))
                    .sum()
            })
            .collect()
    }
}

/// Number of maximal runs of positive entries.
pub fn usage_count(row: &[f64]) -> u32 {
    let mut runs = 0;
    let mut prev = false;
    for f in row {
        let on = *f > 0.0;
        if on && !prev {
            runs += 1;
        }
        prev = on;
    }
    runs
}

/// A solved assignment with its objective terms and solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub config: LineConfiguration,
    /// Contiguous usage count per agent, in problem agent order.
    pub usage: Vec<u32>,
    pub station_times: Vec<f64>,
    pub bottleneck: f64,
    /// Distinct agents with a positive share.
    pub agents_used: usize,
    pub adjustment: f64,
    pub objective: f64,
    pub nodes: u64,
    pub seconds: f64,
}

impl Solution {
    pub fn stats(&self) -> SolveStats {
        SolveStats {
            objective: self.objective,
            bottleneck: self.bottleneck,
            agents_used: self.agents_used,
            nodes: self.nodes,
            seconds: self.seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub objective: f64,
    pub bottleneck: f64,
    pub agents_used: usize,
    pub nodes: u64,
    pub seconds: f64,
}
