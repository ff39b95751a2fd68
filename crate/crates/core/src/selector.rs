//! Threshold filtering and lexicographic choice among simulated candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::Solution;
use crate::sim::Replication;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    ThroughputDesc,
    AgentsAsc,
    AdjustmentAsc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPolicy {
    #[serde(default)]
    pub min_throughput: Option<f64>,
    #[serde(default)]
    pub max_agents: Option<usize>,
    #[serde(default = "default_order")]
    pub order: Vec<SortKey>,
}

fn default_order() -> Vec<SortKey> {
    vec![SortKey::ThroughputDesc, SortKey::AgentsAsc, SortKey::AdjustmentAsc]
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            min_throughput: None,
            max_agents: None,
            order: default_order(),
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.order.is_empty() {
            return Err(Error::InvalidArgument("selection order is empty".into()));
        }
        for (i, k) in self.order.iter().enumerate() {
            if self.order[..i].contains(k) {
                return Err(Error::InvalidArgument(format!("selection key {k:?} appears twice")));
            }
        }
        Ok(())
    }
}

/// What the selector needs to know about one candidate configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub agents: usize,
    pub bottleneck: f64,
    pub adjustment: f64,
    /// Mean over replications.
    pub throughput: f64,
    /// Standard error of that mean.
    pub throughput_se: f64,
}

impl Candidate {
    pub fn new(name: impl Into<String>, solution: &Solution, sim: &Replication) -> Self {
        Candidate {
            name: name.into(),
            agents: solution.agents_used,
            bottleneck: solution.bottleneck,
            adjustment: solution.adjustment,
            throughput: sim.throughput.mean,
            throughput_se: sim.throughput_se(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub candidate: usize,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen: usize,
    /// Candidates equal to the chosen one on every key; the lowest index wins.
    pub tied: Vec<usize>,
    /// Feasible candidates, best first.
    pub ranking: Vec<usize>,
    pub exclusions: Vec<Exclusion>,
}

const ADJUSTMENT_TOL: f64 = 1e-9;

fn violations(c: &Candidate, policy: &SelectionPolicy) -> Vec<String> {
    let mut v = Vec::new();
    if let Some(min) = policy.min_throughput {
        if c.throughput < min {
            v.push(format!("throughput {} below minimum {min}", c.throughput));
        }
    }
    if let Some(max) = policy.max_agents {
        if c.agents > max {
            v.push(format!("{} agents above maximum {max}", c.agents));
        }
    }
    v
}

/// Excludes candidates that break a threshold and ranks the rest by the
/// policy's keys in order. Throughputs closer than the standard error of
/// their difference count as equal; remaining ties go to the lower index.
pub fn select(candidates: &[Candidate], policy: &SelectionPolicy) -> Result<Decision> {
    policy.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    let mut exclusions = Vec::new();
    let mut remaining = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let v = violations(c, policy);
        if v.is_empty() {
            remaining.push(i);
        } else {
            exclusions.push(Exclusion {
                candidate: i,
                violations: v,
            });
        }
    }
    if remaining.is_empty() {
        return Err(Error::NoFeasibleCandidate(
            exclusions
                .iter()
                .map(|e| format!("{}: {}", candidates[e.candidate].name, e.violations.join(", ")))
                .collect(),
        ));
    }
    let tied = front(candidates, &remaining, &policy.order);
    let mut ranking = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = front(candidates, &remaining, &policy.order)[0];
        remaining.retain(|&i| i != best);
        ranking.push(best);
    }
    Ok(Decision {
        chosen: ranking[0],
        tied,
        ranking,
        exclusions,
    })
}

/// Candidates that survive every key, in index order.
fn front(candidates: &[Candidate], pool: &[usize], order: &[SortKey]) -> Vec<usize> {
    let mut set: Vec<usize> = pool.to_vec();
    for key in order {
        if set.len() == 1 {
            break;
        }
        match key {
            SortKey::ThroughputDesc => {
                // Keep whoever no other candidate beats by more than the
                // standard error of the difference.
                let keep: Vec<usize> = set
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let c = &candidates[i];
                        set.iter().all(|&j| {
                            let o = &candidates[j];
                            o.throughput - c.throughput <= o.throughput_se.hypot(c.throughput_se)
                        })
                    })
                    .collect();
                set = keep;
            }
            SortKey::AgentsAsc => {
                let min = set.iter().map(|&i| candidates[i].agents).min().expect("non-empty");
                set.retain(|&i| candidates[i].agents == min);
            }
            SortKey::AdjustmentAsc => {
                let min = set
                    .iter()
                    .map(|&i| candidates[i].adjustment)
                    .fold(f64::INFINITY, f64::min);
                set.retain(|&i| candidates[i].adjustment <= min + ADJUSTMENT_TOL);
            }
        }
    }
    set.sort_unstable();
    set
}
