//! Scoped reconfiguration after a disturbance.
//!
//! Only the disturbed agent's operations may move. Disturbed and adjacent
//! agents may take fractional shares of them on top of their existing
//! blocks; other line agents and unused agents may take whole operations as
//! long as their assignment stays one contiguous block.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, LpStatus, Sense};
use super::milp::{MixedIntegerProgram, DEFAULT_NODE_LIMIT};
use super::{usage_count, InitProblem, Solution};
use crate::error::{Error, Result};
use crate::line::{adjacent_agents, derive_stations, LineConfiguration};

/// Default station radius for adjacent agents.
pub const ADJACENCY_RADIUS: usize = 2;
const SNAP: f64 = 1e-9;

/// Partition of agents and the operations open for change, as indices into
/// the base problem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scope {
    pub disturbed_ops: Vec<usize>,
    pub disturbed: Vec<usize>,
    pub adjacent: Vec<usize>,
    pub line: Vec<usize>,
    pub unused: Vec<usize>,
}

impl Scope {
    /// Agents allowed fractional shares.
    pub fn sharing(&self) -> impl Iterator<Item = usize> + '_ {
        self.disturbed.iter().chain(&self.adjacent).copied()
    }

    pub fn is_sharing(&self, k: usize) -> bool {
        self.disturbed.contains(&k) || self.adjacent.contains(&k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigProblem {
    /// Operations, agents and (updated) expected times plus weights.
    pub base: InitProblem,
    /// Original 0/1 assignment `[k][j]`.
    pub original: Vec<Vec<f64>>,
    pub original_config: LineConfiguration,
    pub scope: Scope,
    pub allow_sharing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconfigMode {
    Unchanged,
    /// Operations move among agents already in the line.
    PlanSwitch,
    /// The set of agents in the line changes.
    ConfigSwitch,
}

impl ReconfigMode {
    pub fn classify(original: &LineConfiguration, new: &LineConfiguration) -> Self {
        if original.agents_used() != new.agents_used() {
            ReconfigMode::ConfigSwitch
        } else if original.adjustment_from(new) > SNAP {
            ReconfigMode::PlanSwitch
        } else {
            ReconfigMode::Unchanged
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReconfigMode::Unchanged => "unchanged",
            ReconfigMode::PlanSwitch => "plan_switch",
            ReconfigMode::ConfigSwitch => "config_switch",
        }
    }
}

impl ReconfigProblem {
    /// Builds the scope from the disturbed agents. `adjacent` overrides the
    /// default radius-based neighbourhood.
    pub fn new(
        base: InitProblem,
        original_config: &LineConfiguration,
        disturbed: &[String],
        adjacent: Option<&[String]>,
        allow_sharing: bool,
    ) -> Result<Self> {
        base.weights.validate(true)?;
        if original_config.operations != base.operations {
            return Err(Error::InvalidArgument(
                "configuration operations differ from the problem's operation sequence".into(),
            ));
        }
        if !original_config.is_integral() {
            return Err(Error::InvalidArgument(
                "the original configuration must be a 0/1 assignment".into(),
            ));
        }
        let original = base.fractions_of(original_config)?;
        let index = |a: &String| {
            base.agent_index(a)
                .ok_or_else(|| Error::UnknownEntity(format!("Agent:{a}")))
        };
        let mut scope = Scope::default();
        for a in disturbed {
            let k = index(a)?;
            if original[k].iter().all(|f| *f == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "disturbed agent `{a}` is not part of the line"
                )));
            }
            if !scope.disturbed.contains(&k) {
                scope.disturbed.push(k);
            }
        }
        let adjacent_names: Vec<String> = match adjacent {
            Some(list) => list.to_vec(),
            None => {
                let view = derive_stations(original_config)?;
                let mut names = Vec::new();
                for a in disturbed {
                    for n in adjacent_agents(&view, a, ADJACENCY_RADIUS) {
                        if !names.contains(&n) {
                            names.push(n);
                        }
                    }
                }
                names
            }
        };
        for a in &adjacent_names {
            let k = index(a)?;
            if !scope.disturbed.contains(&k) && !scope.adjacent.contains(&k) {
                scope.adjacent.push(k);
            }
        }
        for k in 0..base.agents.len() {
            if scope.is_sharing(k) {
                continue;
            }
            if original[k].iter().any(|f| *f > 0.0) {
                scope.line.push(k);
            } else {
                scope.unused.push(k);
            }
        }
        scope.disturbed_ops = (0..base.operations.len())
            .filter(|&j| scope.disturbed.iter().any(|&k| original[k][j] > 0.0))
            .collect();
        Ok(ReconfigProblem {
            base,
            original,
            original_config: original_config.clone(),
            scope,
            allow_sharing,
        })
    }

    /// Objective and derived quantities for an assignment of this problem.
    /// Usage of disturbed and adjacent agents is that of the original block
    /// structure, since their shares come on top of it.
    pub fn evaluate(&self, fractions: &[Vec<f64>], nodes: u64, start: Instant) -> Solution {
        let p = &self.base;
        let usage: Vec<u32> = (0..p.agents.len())
            .map(|k| {
                if self.scope.is_sharing(k) {
                    usage_count(&self.original[k])
                } else {
                    usage_count(&fractions[k])
                }
            })
            .collect();
        let station_times = p.station_times(fractions);
        let bottleneck = station_times.iter().copied().fold(0.0, f64::max);
        let agents_used = fractions
            .iter()
            .filter(|r| r.iter().any(|f| *f > 0.0))
            .count();
        let adjustment: f64 = fractions
            .iter()
            .zip(&self.original)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .sum();
        let w = &p.weights;
        let objective = w.c_t * bottleneck
            + w.c_z * usage.iter().sum::<u32>() as f64
            + w.c_x * adjustment;
        let mut config = p.config_from_fractions(fractions);
        config.scoped_ops = self
            .scope
            .disturbed_ops
            .iter()
            .map(|&j| p.operations[j].clone())
            .collect();
        config.default_buffer_capacity = self.original_config.default_buffer_capacity;
        if same_station_agents(&self.original_config, &config) {
            config.buffers = self.original_config.buffers.clone();
        }
        Solution {
            config,
            usage,
            station_times,
            bottleneck,
            agents_used,
            adjustment,
            objective,
            nodes,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn same_station_agents(a: &LineConfiguration, b: &LineConfiguration) -> bool {
    match (derive_stations(a), derive_stations(b)) {
        (Ok(va), Ok(vb)) => va
            .stations
            .iter()
            .map(|s| &s.agent)
            .eq(vb.stations.iter().map(|s| &s.agent)),
        _ => false,
    }
}

/// Optimal scoped reconfiguration.
pub fn solve_reconfig(r: &ReconfigProblem) -> Result<Solution> {
    let start = Instant::now();
    let p = &r.base;
    p.check()?;
    p.weights.validate(true)?;
    let n_ops = p.operations.len();
    let n_agents = p.agents.len();
    let w = p.weights;
    let in_scope: BTreeSet<usize> = r.scope.disturbed_ops.iter().copied().collect();

    let mut m = MixedIntegerProgram::new(LinearProgram::default());
    let t_max = m.add_var(w.c_t, 0.0, f64::INFINITY, false);
    // Per agent and operation: either a fixed value or a variable index.
    let mut var = vec![vec![None; n_ops]; n_agents];
    // Integer variable values reproducing the original assignment.
    let mut seed_values: Vec<(usize, f64)> = Vec::new();
    for k in 0..n_agents {
        for &j in &r.scope.disturbed_ops {
            if p.times[k][j].is_none() {
                continue;
            }
            let x0 = r.original[k][j];
            let sharing = r.scope.is_sharing(k);
            let integer = !sharing || !r.allow_sharing;
            // |a - x0| is linear for x0 in {0, 1}.
            let cost = if x0 > 0.5 { -w.c_x } else { w.c_x };
            let v = m.add_var(cost, 0.0, 1.0, integer);
            var[k][j] = Some(v);
            if integer {
                seed_values.push((v, x0));
            }
        }
    }
    let fixed = |k: usize, j: usize| if in_scope.contains(&j) { 0.0 } else { r.original[k][j] };

    for &j in &r.scope.disturbed_ops {
        let row: Vec<(usize, f64)> = (0..n_agents).filter_map(|k| var[k][j].map(|v| (v, 1.0))).collect();
        if row.is_empty() {
            return Err(Error::Infeasible(format!(
                "no agent can take operation `{}`",
                p.operations[j]
            )));
        }
        m.lp.add_row(row, Sense::Eq, 1.0);
    }

    for k in 0..n_agents {
        // Station time.
        let mut row = vec![(t_max, 1.0)];
        let mut constant = 0.0;
        for j in 0..n_ops {
            let Some(t) = p.times[k][j] else { continue };
            match var[k][j] {
                Some(v) => row.push((v, -t)),
                None => constant += t * fixed(k, j),
            }
        }
        m.lp.add_row(row, Sense::Ge, constant);

        if r.scope.is_sharing(k) || var[k].iter().all(Option::is_none) {
            continue;
        }
        // Block starts: y_j >= x_j - x_{j-1}; at most one block.
        let mut starts: Vec<(usize, f64)> = Vec::new();
        let mut constant_starts = 0.0;
        for j in 0..n_ops {
            let mut lin: Vec<(usize, f64)> = Vec::new();
            let mut c = 0.0;
            match var[k][j] {
                Some(v) => lin.push((v, 1.0)),
                None => c += fixed(k, j),
            }
            if j > 0 {
                match var[k][j - 1] {
                    Some(v) => lin.push((v, -1.0)),
                    None => c -= fixed(k, j - 1),
                }
            }
            if lin.is_empty() {
                constant_starts += c.max(0.0);
                continue;
            }
            let y = m.add_var(0.0, 0.0, 1.0, false);
            let mut yrow = vec![(y, 1.0)];
            yrow.extend(lin.iter().map(|&(v, a)| (v, -a)));
            m.lp.add_row(yrow, Sense::Ge, c);
            starts.push((y, 1.0));
        }
        if r.scope.unused.contains(&k) {
            let z = m.add_var(w.c_z, 0.0, 1.0, false);
            starts.push((z, -1.0));
            m.lp.add_row(starts, Sense::Eq, 0.0);
        } else {
            m.lp.add_row(starts, Sense::Le, 1.0 - constant_starts);
        }
    }

    // The original assignment is feasible; use it as the first incumbent.
    let mut seed_lp = m.lp.clone();
    for &(v, x0) in &seed_values {
        seed_lp.lower[v] = x0;
        seed_lp.upper[v] = x0;
    }
    for k in r.scope.sharing() {
        for &j in &r.scope.disturbed_ops {
            if let Some(v) = var[k][j] {
                seed_lp.lower[v] = r.original[k][j];
                seed_lp.upper[v] = r.original[k][j];
            }
        }
    }
    let incumbent = match super::lp::solve_lp(&seed_lp)? {
        LpStatus::Optimal { x, .. } => Some(x),
        _ => None,
    };

    let sol = m
        .solve(incumbent, DEFAULT_NODE_LIMIT)?
        .ok_or_else(|| Error::Infeasible("no reconfiguration satisfies the constraints".into()))?;

    let mut fractions: Vec<Vec<f64>> = (0..n_agents)
        .map(|k| {
            (0..n_ops)
                .map(|j| match var[k][j] {
                    Some(v) => sol.x[v],
                    None => fixed(k, j),
                })
                .collect()
        })
        .collect();
    clean_columns(&mut fractions, &r.scope.disturbed_ops);
    Ok(r.evaluate(&fractions, sol.nodes, start))
}

/// Snaps values within tolerance of 0 or 1 and makes each scoped column sum
/// to exactly one.
fn clean_columns(fractions: &mut [Vec<f64>], columns: &[usize]) {
    for &j in columns {
        for row in fractions.iter_mut() {
            let v = row[j].clamp(0.0, 1.0);
            row[j] = if v < SNAP {
                0.0
            } else if v > 1.0 - SNAP {
                1.0
            } else {
                v
            };
        }
        let Some(big) = (0..fractions.len()).max_by(|&a, &b| fractions[a][j].total_cmp(&fractions[b][j])) else {
            continue;
        };
        let rest: f64 = (0..fractions.len()).filter(|&k| k != big).map(|k| fractions[k][j]).sum();
        fractions[big][j] = 1.0 - rest;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::Weights;

    fn base(times: Vec<Vec<Option<f64>>>) -> InitProblem {
        let n_ops = times[0].len();
        InitProblem {
            operations: (1..=n_ops).map(|j| format!("Op{j}")).collect(),
            agents: (0..times.len()).map(|k| format!("A{k}")).collect(),
            times,
            weights: Weights::new(0.6, 0.4),
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_disturbance_keeps_plan() {
        let p = base(vec![
            vec![Some(10.0), Some(10.0), Some(10.0), Some(10.0)],
            vec![Some(10.0), Some(10.0), Some(10.0), Some(10.0)],
        ]);
        let x0 = LineConfiguration::from_blocks(p.operations.clone(), &[("A0", 2), ("A1", 2)]);
        let r = ReconfigProblem::new(p, &x0, &names(&["A1"]), None, true).unwrap();
        let s = solve_reconfig(&r).unwrap();
        assert_eq!(s.adjustment, 0.0);
        assert_eq!(s.config.assignment, x0.assignment);
    }

    #[test]
    fn disturbed_agent_shares_with_neighbour() {
        // A1 slowed to 30 s per op. A0 takes a total share S of ops 3-4:
        // 20 + 10S = 30(2 - S) gives S = 1 and a 30 s bottleneck.
        let mut p = base(vec![
            vec![Some(10.0); 4],
            vec![Some(30.0); 4],
        ]);
        p.weights = Weights::new(1.0, 0.5);
        let x0 = LineConfiguration::from_blocks(p.operations.clone(), &[("A0", 2), ("A1", 2)]);
        let r = ReconfigProblem::new(p, &x0, &names(&["A1"]), None, true).unwrap();
        let s = solve_reconfig(&r).unwrap();
        assert!((s.bottleneck - 30.0).abs() < 1e-9, "{}", s.bottleneck);
        assert_eq!(ReconfigMode::classify(&x0, &s.config), ReconfigMode::PlanSwitch);
    }

    #[test]
    fn fractional_balance_point() {
        let mut p = base(vec![
            vec![Some(5.0), Some(8.0)],
            vec![None, Some(15.0)],
        ]);
        p.weights = Weights::new(1.0, 1.0);
        let x0 = LineConfiguration::from_blocks(p.operations.clone(), &[("A0", 1), ("A1", 1)]);
        let r = ReconfigProblem::new(p, &x0, &names(&["A1"]), None, true).unwrap();
        let s = solve_reconfig(&r).unwrap();
        // 5 + 8s = 15(1 - s) -> s = 10/23
        let share = s.config.fraction("A0", "Op2");
        assert!((share - 10.0 / 23.0).abs() < 1e-9, "{share}");
        let total = s.config.fraction("A0", "Op2") + s.config.fraction("A1", "Op2");
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unused_agent_added_when_time_dominates() {
        let mut p = base(vec![
            vec![Some(10.0), Some(10.0), None],
            vec![None, Some(90.0), Some(10.0)],
            vec![Some(10.0), Some(10.0), Some(10.0)],
        ]);
        p.weights = Weights::new(1.0, 0.1);
        let x0 = LineConfiguration::from_blocks(p.operations.clone(), &[("A0", 1), ("A1", 2)]);
        let r = ReconfigProblem::new(p, &x0, &names(&["A1"]), Some(&[]), false).unwrap();
        assert_eq!(r.scope.unused, vec![2]);
        let s = solve_reconfig(&r).unwrap();
        assert_eq!(ReconfigMode::classify(&x0, &s.config), ReconfigMode::ConfigSwitch);
        assert!(s.config.is_integral());
        assert!((s.bottleneck - 10.0).abs() < 1e-9);
    }
}
