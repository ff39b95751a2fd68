//! Exact line initialization.
//!
//! Every agent takes at most one contiguous block of operations, so a
//! configuration is a partition of the operation sequence into blocks with
//! distinct agents. Agents with identical capabilities and times are
//! interchangeable; the search works on these classes and only tracks how
//! many members of each class are in use. For every suffix of the line it
//! keeps the Pareto frontier of (bottleneck, block count), from which the
//! weighted optimum is read off directly.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, Sense};
use super::milp::{MixedIntegerProgram, DEFAULT_NODE_LIMIT};
use super::{usage_count, InitProblem, Solution, Weights};
use crate::error::{Error, Result};

/// One non-dominated (bottleneck, agent count) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub bottleneck: f64,
    pub agents: u32,
}

type Frontier = Vec<(f64, u32)>;

struct ClassSearch<'a> {
    p: &'a InitProblem,
    /// Members of each class, ascending agent index.
    members: Vec<Vec<usize>>,
    /// Index into the usage key, or `None` if the class can never run out.
    slot: Vec<Option<usize>>,
    memo: HashMap<(usize, Vec<u8>), Frontier>,
}

impl<'a> ClassSearch<'a> {
    fn new(p: &'a InitProblem) -> Self {
        let mut members: Vec<Vec<usize>> = Vec::new();
        for k in 0..p.agents.len() {
            if p.times[k].iter().all(Option::is_none) {
                continue;
            }
            match members.iter_mut().find(|m| p.times[m[0]] == p.times[k]) {
                Some(m) => m.push(k),
                None => members.push(vec![k]),
            }
        }
        let mut slot = Vec::with_capacity(members.len());
        let mut next = 0;
        for m in &members {
            let capable = p.times[m[0]].iter().filter(|t| t.is_some()).count();
            if m.len() >= capable {
                slot.push(None);
            } else {
                slot.push(Some(next));
                next += 1;
            }
        }
        ClassSearch {
            p,
            members,
            slot,
            memo: HashMap::new(),
        }
    }

    fn times(&self, c: usize) -> &[Option<f64>] {
        &self.p.times[self.members[c][0]]
    }

    fn available(&self, c: usize, usage: &[u8]) -> bool {
        match self.slot[c] {
            Some(s) => (usage[s] as usize) < self.members[c].len(),
            None => true,
        }
    }

    fn bump(&self, c: usize, usage: &[u8]) -> Vec<u8> {
        let mut u = usage.to_vec();
        if let Some(s) = self.slot[c] {
            u[s] += 1;
        }
        u
    }

    fn initial_usage(&self) -> Vec<u8> {
        vec![0; self.slot.iter().flatten().count()]
    }

    /// Non-dominated (max block time, block count) pairs covering `pos..`.
    fn frontier(&mut self, pos: usize, usage: &[u8]) -> Frontier {
        let n_ops = self.p.operations.len();
        if pos == n_ops {
            return vec![(0.0, 0)];
        }
        let key = (pos, usage.to_vec());
        if let Some(f) = self.memo.get(&key) {
            return f.clone();
        }
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        for c in 0..self.members.len() {
            if !self.available(c, usage) {
                continue;
            }
            let next_usage = self.bump(c, usage);
            let mut cost = 0.0;
            for e in pos..n_ops {
                let Some(t) = self.times(c)[e] else { break };
                cost += t;
                for (sub_t, sub_n) in self.frontier(e + 1, &next_usage) {
                    candidates.push((cost.max(sub_t), sub_n + 1));
                }
            }
        }
        let front = prune(candidates);
        self.memo.insert(key, front.clone());
        front
    }

    /// Block list `(agent, first, last)` realizing `(t_max, n_max)`.
    fn reconstruct(&mut self, t_max: f64, n_max: u32) -> Result<Vec<(usize, usize, usize)>> {
        let n_ops = self.p.operations.len();
        let mut usage = self.initial_usage();
        let mut taken = vec![0usize; self.members.len()];
        let mut pos = 0;
        let mut remaining = n_max;
        let mut blocks = Vec::new();
        'outer: while pos < n_ops {
            for c in 0..self.members.len() {
                if !self.available(c, &usage) || taken[c] >= self.members[c].len() {
                    continue;
                }
                let next_usage = self.bump(c, &usage);
                let mut cost = 0.0;
                let first = pos;
                for e in first..n_ops {
                    let Some(t) = self.times(c)[e] else { break };
                    cost += t;
                    if cost > t_max {
                        break;
                    }
                    let fits = self
                        .frontier(e + 1, &next_usage)
                        .iter()
                        .any(|&(st, sn)| st <= t_max && sn < remaining);
                    if fits {
                        blocks.push((self.members[c][taken[c]], pos, e));
                        taken[c] += 1;
                        usage = next_usage;
                        remaining -= 1;
                        pos = e + 1;
                        continue 'outer;
                    }
                }
            }
            return Err(Error::Internal(format!(
                "frontier point ({t_max}, {n_max}) could not be reconstructed at operation {pos}"
            )));
        }
        Ok(blocks)
    }
}

fn prune(mut candidates: Vec<(f64, u32)>) -> Frontier {
    candidates.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let mut front: Frontier = Vec::new();
    for (t, n) in candidates {
        if front.last().is_none_or(|&(bt, _)| t < bt) {
            front.push((t, n));
        }
    }
    front
}

fn solution_from_blocks(p: &InitProblem, blocks: &[(usize, usize, usize)], nodes: u64, start: Instant) -> Solution {
    let mut fractions = vec![vec![0.0; p.operations.len()]; p.agents.len()];
    for &(k, first, last) in blocks {
        for row in fractions[k][first..=last].iter_mut() {
            *row = 1.0;
        }
    }
    integral_solution(p, &fractions, nodes, start)
}

pub(crate) fn integral_solution(
    p: &InitProblem,
    fractions: &[Vec<f64>],
    nodes: u64,
    start: Instant,
) -> Solution {
    let usage: Vec<u32> = fractions.iter().map(|r| usage_count(r)).collect();
    let station_times = p.station_times(fractions);
    let bottleneck = station_times.iter().copied().fold(0.0, f64::max);
    let total_usage: u32 = usage.iter().sum();
    let agents_used = usage.iter().filter(|u| **u > 0).count();
    let objective = p.weights.c_t * bottleneck + p.weights.c_z * total_usage as f64;
    Solution {
        config: p.config_from_fractions(fractions),
        usage,
        station_times,
        bottleneck,
        agents_used,
        adjustment: 0.0,
        objective,
        nodes,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn explore(p: &InitProblem) -> Result<(ClassSearch<'_>, Vec<ParetoPoint>)> {
    p.check()?;
    let mut search = ClassSearch::new(p);
    let usage = search.initial_usage();
    let front = search.frontier(0, &usage);
    if front.is_empty() {
        return Err(Error::Infeasible(
            "not enough agents to cover every operation; check if more agents are available".into(),
        ));
    }
    let front = front
        .into_iter()
        .map(|(bottleneck, agents)| ParetoPoint { bottleneck, agents })
        .collect();
    Ok((search, front))
}

/// The full (bottleneck, agent count) trade-off curve, agent count
/// ascending.
pub fn pareto_frontier(p: &InitProblem) -> Result<Vec<ParetoPoint>> {
    Ok(explore(p)?.1)
}

fn pick(front: &[ParetoPoint], w: &Weights) -> ParetoPoint {
    let score = |pt: &ParetoPoint| w.c_t * pt.bottleneck + w.c_z * pt.agents as f64;
    let mut best = front[0];
    for pt in &front[1..] {
        let (a, b) = (score(pt), score(&best));
        let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
        let better = a < b - tol
            || (a <= b + tol
                && (pt.bottleneck < best.bottleneck
                    || (pt.bottleneck == best.bottleneck && pt.agents < best.agents)));
        if better {
            best = *pt;
        }
    }
    best
}

fn solve_with_search(
    p: &InitProblem,
    search: &mut ClassSearch,
    front: &[ParetoPoint],
    weights: &Weights,
    start: Instant,
) -> Result<Solution> {
    let target = pick(front, weights);
    let blocks = search.reconstruct(target.bottleneck, target.agents)?;
    let nodes = search.memo.len() as u64;
    let mut problem = p.clone();
    problem.weights = *weights;
    Ok(solution_from_blocks(&problem, &blocks, nodes, start))
}

/// Globally optimal 0/1 initialization under the problem's weights.
pub fn solve_init(p: &InitProblem) -> Result<Solution> {
    let start = Instant::now();
    let (mut search, front) = explore(p)?;
    solve_with_search(p, &mut search, &front, &p.weights, start)
}

/// One optimal solution per `c_t` in `grid` (with `c_z = 1 - c_t`), in
/// increasing `c_t`.
pub fn sweep_pareto(p: &InitProblem, grid: &[f64]) -> Result<Vec<(f64, Solution)>> {
    if let Some(g) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::InvalidArgument(format!("grid value {g} outside [0, 1]")));
    }
    let start = Instant::now();
    let (mut search, front) = explore(p)?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, Solution)> = Vec::new();
    for c_t in sorted {
        let w = Weights::new(c_t, 1.0 - c_t);
        out.push((c_t, solve_with_search(p, &mut search, &front, &w, start)?));
    }
    Ok(out)
}

/// The same model solved as a MILP by branch-and-bound. Exponential; meant
/// for cross-checking on small instances.
pub fn solve_init_milp(p: &InitProblem) -> Result<Solution> {
    p.check()?;
    let start = Instant::now();
    let n_ops = p.operations.len();
    let n_agents = p.agents.len();
    let mut m = MixedIntegerProgram::new(LinearProgram::default());
    let t_max = m.add_var(p.weights.c_t, 0.0, f64::INFINITY, false);
    let mut x = vec![vec![None; n_ops]; n_agents];
    let mut z = vec![None; n_agents];
    for k in 0..n_agents {
        if p.times[k].iter().all(Option::is_none) {
            continue;
        }
        for j in 0..n_ops {
            if p.times[k][j].is_some() {
                x[k][j] = Some(m.add_var(0.0, 0.0, 1.0, true));
            }
        }
        let zk = m.add_var(p.weights.c_z, 0.0, 1.0, false);
        z[k] = Some(zk);
        // y_kj >= x_kj - x_k,j-1 counts block starts; z_k = sum_j y_kj <= 1.
        let mut starts = vec![(zk, -1.0)];
        for j in 0..n_ops {
            let Some(xj) = x[k][j] else { continue };
            let y = m.add_var(0.0, 0.0, 1.0, false);
            let mut row = vec![(y, 1.0), (xj, -1.0)];
            if j > 0 {
                if let Some(prev) = x[k][j - 1] {
                    row.push((prev, 1.0));
                }
            }
            m.lp.add_row(row, Sense::Ge, 0.0);
            starts.push((y, 1.0));
        }
        m.lp.add_row(starts, Sense::Eq, 0.0);
        let mut time_row = vec![(t_max, 1.0)];
        for j in 0..n_ops {
            if let (Some(xj), Some(t)) = (x[k][j], p.times[k][j]) {
                time_row.push((xj, -t));
            }
        }
        m.lp.add_row(time_row, Sense::Ge, 0.0);
    }
    for j in 0..n_ops {
        let row: Vec<(usize, f64)> = (0..n_agents).filter_map(|k| x[k][j].map(|v| (v, 1.0))).collect();
        m.lp.add_row(row, Sense::Eq, 1.0);
    }
    // Twins are used in ascending index order.
    for k in 0..n_agents {
        for k2 in (k + 1)..n_agents {
            if p.times[k2] == p.times[k] {
                if let (Some(a), Some(b)) = (z[k], z[k2]) {
                    m.lp.add_row(vec![(a, 1.0), (b, -1.0)], Sense::Ge, 0.0);
                }
                break;
            }
        }
    }
    let sol = m
        .solve(None, DEFAULT_NODE_LIMIT)?
        .ok_or_else(|| Error::Infeasible("no contiguous assignment covers every operation".into()))?;
    let fractions: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| v.map(|i| sol.x[i].round()).unwrap_or(0.0))
                .collect()
        })
        .collect();
    Ok(integral_solution(p, &fractions, sol.nodes, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(times: Vec<Vec<Option<f64>>>, c_t: f64, c_z: f64) -> InitProblem {
        let n_ops = times[0].len();
        InitProblem {
            operations: (1..=n_ops).map(|j| format!("Op{j}")).collect(),
            agents: (0..times.len()).map(|k| format!("A{k}")).collect(),
            times,
            weights: Weights::new(c_t, c_z),
        }
    }

    #[test]
    fn single_operation() {
        let p = problem(vec![vec![Some(5.0)]], 0.7, 0.3);
        let s = solve_init(&p).unwrap();
        assert!((s.objective - (0.7 * 5.0 + 0.3)).abs() < 1e-12);
        assert_eq!(s.agents_used, 1);
    }

    #[test]
    fn three_ops_two_agents() {
        // B alone: 9 s, 1 agent -> 9.1. Split A|B: best max is 6 with 2 agents -> 6.2.
        let p = problem(
            vec![vec![Some(4.0); 3], vec![Some(3.0); 3]],
            1.0,
            0.1,
        );
        let s = solve_init(&p).unwrap();
        assert!((s.objective - 6.2).abs() < 1e-12, "{}", s.objective);
        let m = solve_init_milp(&p).unwrap();
        assert!((m.objective - s.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_when_operation_uncovered() {
        let p = problem(vec![vec![Some(1.0), None]], 0.5, 0.5);
        assert!(matches!(solve_init(&p), Err(Error::Infeasible(_))));
        // Enough capability but only one agent for two disjoint blocks.
        let p = problem(vec![vec![Some(1.0), None, Some(1.0)], vec![None, Some(1.0), None]], 0.5, 0.5);
        assert!(matches!(solve_init(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn twins_use_lowest_indices() {
        let p = problem(vec![vec![Some(5.0); 4]; 4], 1.0, 0.01);
        let s = solve_init(&p).unwrap();
        assert_eq!(s.agents_used, 4);
        let p = problem(vec![vec![Some(5.0); 4]; 4], 0.01, 1.0);
        let s = solve_init(&p).unwrap();
        assert_eq!(s.usage, vec![1, 0, 0, 0]);
    }

    #[test]
    fn frontier_is_monotone() {
        let p = problem(
            vec![
                vec![Some(3.0), Some(4.0), Some(2.0), Some(6.0)],
                vec![Some(5.0), Some(1.0), Some(2.0), Some(2.0)],
                vec![None, Some(3.0), Some(3.0), Some(3.0)],
            ],
            0.5,
            0.5,
        );
        let f = pareto_frontier(&p).unwrap();
        for w in f.windows(2) {
            assert!(w[0].agents < w[1].agents && w[0].bottleneck > w[1].bottleneck);
        }
        let sweep = sweep_pareto(&p, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(sweep[0].1.agents_used as u32, f[0].agents);
    }
}
