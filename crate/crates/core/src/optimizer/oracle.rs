//! Exhaustive reference solvers for small instances.

use std::time::Instant;

use super::init::integral_solution;
use super::reconfig::ReconfigProblem;
use super::{usage_count, InitProblem, Solution};
use crate::error::{Error, Result};

pub const MAX_OPS: usize = 10;
pub const MAX_AGENTS: usize = 6;
/// Fraction grid resolution for shared operations.
pub const GRID_STEPS: usize = 100;
const MAX_GRID_POINTS: u64 = 20_000_000;
const MAX_VERTEX_CANDIDATES: u64 = 5_000_000;
const FEAS_TOL: f64 = 1e-9;

/// (agent, fraction, added station time) for one holder of a split.
type Share = (usize, f64, f64);
/// Objective, bottleneck, block count and (agent, first, last) blocks.
type Enumerated = (f64, f64, usize, Vec<(usize, usize, usize)>);

fn guard(n_ops: usize, n_agents: usize) -> Result<()> {
    if n_ops > MAX_OPS || n_agents > MAX_AGENTS {
        return Err(Error::TooLarge(format!(
            "{n_ops} operations and {n_agents} agents exceed the limit of {MAX_OPS} and {MAX_AGENTS}"
        )));
    }
    Ok(())
}

/// Enumerates every split of the line into contiguous blocks and every
/// assignment of distinct agents to those blocks.
pub fn brute_force_init(p: &InitProblem) -> Result<Solution> {
    p.check()?;
    let n = p.operations.len();
    let n_agents = p.agents.len();
    guard(n, n_agents)?;
    let start = Instant::now();
    let mut best: Option<Enumerated> = None;
    let mut evaluated = 0u64;
    for cuts in 0u32..(1 << (n.saturating_sub(1))) {
        let mut blocks = Vec::new();
        let mut first = 0;
        for j in 0..n {
            if j == n - 1 || cuts & (1 << j) != 0 {
                blocks.push((first, j));
                first = j + 1;
            }
        }
        let mut chosen = Vec::with_capacity(blocks.len());
        let mut used = vec![false; n_agents];
        assign_blocks(p, &blocks, &mut chosen, &mut used, &mut |agents| {
            evaluated += 1;
            let mut t_max: f64 = 0.0;
            for (b, &k) in blocks.iter().zip(agents) {
                let t: f64 = (b.0..=b.1).map(|j| p.times[k][j].unwrap()).sum();
                t_max = t_max.max(t);
            }
            let obj = p.weights.c_t * t_max + p.weights.c_z * blocks.len() as f64;
            let better = match &best {
                None => true,
                Some((bo, bt, bn, _)) => {
                    obj < bo - 1e-12
                        || (obj <= bo + 1e-12
                            && (t_max < *bt || (t_max == *bt && blocks.len() < *bn)))
                }
            };
            if better {
                let plan = blocks.iter().zip(agents).map(|(b, &k)| (k, b.0, b.1)).collect();
                best = Some((obj, t_max, blocks.len(), plan));
            }
        });
    }
    let (_, _, _, plan) = best.ok_or_else(|| {
        Error::Infeasible("no contiguous assignment covers every operation".into())
    })?;
    let mut fractions = vec![vec![0.0; n]; n_agents];
    for (k, first, last) in plan {
        for f in fractions[k][first..=last].iter_mut() {
            *f = 1.0;
        }
    }
    Ok(integral_solution(p, &fractions, evaluated, start))
}

fn assign_blocks(
    p: &InitProblem,
    blocks: &[(usize, usize)],
    chosen: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == blocks.len() {
        visit(chosen);
        return;
    }
    let (first, last) = blocks[chosen.len()];
    for k in 0..p.agents.len() {
        if used[k] || (first..=last).any(|j| p.times[k][j].is_none()) {
            continue;
        }
        used[k] = true;
        chosen.push(k);
        assign_blocks(p, blocks, chosen, used, visit);
        chosen.pop();
        used[k] = false;
    }
}

/// Grid optimum and exact optimum of a reconfiguration problem.
#[derive(Debug, Clone)]
pub struct ReconfigOracle {
    /// Best solution with shared fractions restricted to the 0.01 grid.
    pub grid: Solution,
    /// Best solution with shared fractions optimized exactly.
    pub exact: Solution,
}

#[derive(Clone, Copy, PartialEq)]
enum Owner {
    Agent(usize),
    Pool,
}

/// Enumerates every whole-operation assignment of the scoped operations and,
/// for operations left to the sharing agents, every split on the fraction
/// grid as well as the exact optimal split.
pub fn brute_force_reconfig(r: &ReconfigProblem) -> Result<ReconfigOracle> {
    let p = &r.base;
    p.check()?;
    let n = p.operations.len();
    let n_agents = p.agents.len();
    guard(n, n_agents)?;
    let start = Instant::now();
    let scoped = &r.scope.disturbed_ops;

    let options: Vec<Vec<Owner>> = scoped
        .iter()
        .map(|&j| {
            let mut o = Vec::new();
            for k in 0..n_agents {
                if p.times[k][j].is_none() {
                    continue;
                }
                if !r.scope.is_sharing(k) || !r.allow_sharing {
                    o.push(Owner::Agent(k));
                }
            }
            if r.allow_sharing && r.scope.sharing().any(|k| p.times[k][j].is_some()) {
                o.push(Owner::Pool);
            }
            o
        })
        .collect();

    if let Some(i) = options.iter().position(Vec::is_empty) {
        return Err(Error::Infeasible(format!(
            "no agent can take operation `{}`",
            p.operations[scoped[i]]
        )));
    }
    let mut best_grid: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut best_exact: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut budget = MAX_GRID_POINTS;
    let mut pattern = vec![Owner::Pool; scoped.len()];
    let mut stack = vec![0usize; scoped.len()];
    // Odometer over the option lists.
    'patterns: loop {
        for (i, &c) in stack.iter().enumerate() {
            pattern[i] = options[i][c];
        }
        evaluate_pattern(r, &pattern, &mut budget, &mut best_grid, &mut best_exact)?;
        let mut i = 0;
        loop {
            if i == stack.len() {
                break 'patterns;
            }
            stack[i] += 1;
            if stack[i] < options[i].len() {
                break;
            }
            stack[i] = 0;
            i += 1;
        }
    }
    let evaluated = MAX_GRID_POINTS - budget;
    let (_, grid) = best_grid.ok_or_else(|| {
        Error::Infeasible("no reconfiguration satisfies the constraints".into())
    })?;
    let (_, exact) = best_exact.expect("exact optimum exists whenever a grid point does");
    Ok(ReconfigOracle {
        grid: r.evaluate(&grid, evaluated, start),
        exact: r.evaluate(&exact, evaluated, start),
    })
}

fn evaluate_pattern(
    r: &ReconfigProblem,
    pattern: &[Owner],
    budget: &mut u64,
    best_grid: &mut Option<(f64, Vec<Vec<f64>>)>,
    best_exact: &mut Option<(f64, Vec<Vec<f64>>)>,
) -> Result<()> {
    let p = &r.base;
    let scoped = &r.scope.disturbed_ops;
    let mut fractions: Vec<Vec<f64>> = r.original.clone();
    for &j in scoped {
        for row in fractions.iter_mut() {
            row[j] = 0.0;
        }
    }
    for (i, &j) in scoped.iter().enumerate() {
        if let Owner::Agent(k) = pattern[i] {
            fractions[k][j] = 1.0;
        }
    }
    // Whole-operation holders outside the sharing set keep one block.
    for k in 0..p.agents.len() {
        if !r.scope.is_sharing(k) && usage_count(&fractions[k]) > 1 {
            return Ok(());
        }
    }
    let pool: Vec<usize> = scoped
        .iter()
        .enumerate()
        .filter(|(i, _)| pattern[*i] == Owner::Pool)
        .map(|(_, &j)| j)
        .collect();
    let sharers: Vec<usize> = r.scope.sharing().collect();

    // Splits per pooled column on the grid: (agent, fraction, time added).
    let splits: Vec<Vec<Vec<Share>>> = pool
        .iter()
        .map(|&j| {
            let capable: Vec<usize> = sharers
                .iter()
                .copied()
                .filter(|&k| p.times[k][j].is_some())
                .collect();
            let mut out = Vec::new();
            compositions(GRID_STEPS, capable.len(), &mut Vec::new(), &mut |parts| {
                out.push(
                    capable
                        .iter()
                        .zip(parts)
                        .map(|(&k, &q)| {
                            let f = q as f64 / GRID_STEPS as f64;
                            (k, f, f * p.times[k][j].unwrap())
                        })
                        .collect(),
                );
            });
            out
        })
        .collect();
    let points: u64 = splits.iter().map(|s| s.len() as u64).product();
    if points > *budget {
        return Err(Error::TooLarge(format!(
            "fraction grid exceeds {MAX_GRID_POINTS} points"
        )));
    }
    *budget -= points;

    let score = |f: &[Vec<f64>]| -> f64 { r.evaluate(f, 0, Instant::now()).objective };
    let base_times = p.station_times(&fractions);
    if base_times.iter().any(|t| !t.is_finite()) {
        return Ok(());
    }
    let w = p.weights;
    let usage_term = {
        let s = r.evaluate(&fractions, 0, Instant::now());
        w.c_z * s.usage.iter().sum::<u32>() as f64
    };
    let mut adj_fixed = 0.0;
    for (k, row) in fractions.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            if !pool.contains(&j) {
                adj_fixed += (f - r.original[k][j]).abs();
            }
        }
    }
    let mut times = base_times.clone();
    let mut choice = vec![0usize; splits.len()];
    let mut grid_best: Option<(f64, Vec<usize>)> = None;
    grid_walk(&splits, 0, &mut times, &mut choice, &mut |times, choice| {
        let mut adj = adj_fixed;
        for (c, &s) in choice.iter().enumerate() {
            for &(k, f, _) in &splits[c][s] {
                adj += (f - r.original[k][pool[c]]).abs();
            }
        }
        let bottleneck = times.iter().copied().fold(0.0, f64::max);
        let obj = w.c_t * bottleneck + usage_term + w.c_x * adj;
        if grid_best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
            grid_best = Some((obj, choice.to_vec()));
        }
    });
    if let Some((_, choice)) = grid_best {
        let mut f = fractions.clone();
        for (c, &s) in choice.iter().enumerate() {
            for &(k, v, _) in &splits[c][s] {
                f[k][pool[c]] = v;
            }
        }
        let obj = score(&f);
        if best_grid.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
            *best_grid = Some((obj, f));
        }
    }

    let exact = exact_split(r, &fractions, &pool, &sharers)?;
    let obj = score(&exact);
    if best_exact.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
        *best_exact = Some((obj, exact));
    }
    Ok(())
}

fn compositions(total: usize, parts: usize, acc: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if parts == 0 {
        return;
    }
    if parts == 1 {
        acc.push(total);
        visit(acc);
        acc.pop();
        return;
    }
    for q in 0..=total {
        acc.push(q);
        compositions(total - q, parts - 1, acc, visit);
        acc.pop();
    }
}

fn grid_walk(
    splits: &[Vec<Vec<Share>>],
    c: usize,
    times: &mut [f64],
    choice: &mut [usize],
    visit: &mut dyn FnMut(&[f64], &[usize]),
) {
    if c == splits.len() {
        visit(times, choice);
        return;
    }
    for (s, split) in splits[c].iter().enumerate() {
        choice[c] = s;
        let saved: Vec<f64> = split.iter().map(|&(k, _, _)| times[k]).collect();
        for &(k, _, dt) in split {
            times[k] += dt;
        }
        grid_walk(splits, c + 1, times, choice, visit);
        for (&(k, _, _), v) in split.iter().zip(saved) {
            times[k] = v;
        }
    }
}

/// Exact optimal split of the pooled columns among the sharing agents, by
/// enumerating the vertices of the small linear program
/// `min c_t·t + c_x·adj  s.t.  t >= t_k(a), column sums 1, 0 <= a <= 1`.
fn exact_split(
    r: &ReconfigProblem,
    fractions: &[Vec<f64>],
    pool: &[usize],
    sharers: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let p = &r.base;
    let w = p.weights;
    let mut vars: Vec<(usize, usize)> = Vec::new();
    for &j in pool {
        for &k in sharers {
            if p.times[k][j].is_some() {
                vars.push((k, j));
            }
        }
    }
    let base_times = p.station_times(fractions);
    let n = vars.len() + 1; // last variable is t
    if vars.is_empty() {
        return Ok(fractions.to_vec());
    }
    // Constraints as (coeffs, rhs): equality rows first, then a·v >= rhs.
    let mut eqs: Vec<(Vec<f64>, f64)> = Vec::new();
    for &j in pool {
        let mut row = vec![0.0; n];
        for (i, &(_, jj)) in vars.iter().enumerate() {
            if jj == j {
                row[i] = 1.0;
            }
        }
        eqs.push((row, 1.0));
    }
    let mut ineqs: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..vars.len() {
        let mut lo = vec![0.0; n];
        lo[i] = 1.0;
        ineqs.push((lo, 0.0));
        let mut hi = vec![0.0; n];
        hi[i] = -1.0;
        ineqs.push((hi, -1.0));
    }
    let others_max = (0..p.agents.len())
        .filter(|k| !sharers.contains(k))
        .map(|k| base_times[k])
        .fold(0.0, f64::max);
    let mut t_floor = vec![0.0; n];
    t_floor[n - 1] = 1.0;
    ineqs.push((t_floor, others_max));
    for &k in sharers {
        let mut row = vec![0.0; n];
        row[n - 1] = 1.0;
        for (i, &(kk, j)) in vars.iter().enumerate() {
            if kk == k {
                row[i] = -p.times[k][j].unwrap();
            }
        }
        ineqs.push((row, base_times[k]));
    }
    let mut cost = vec![0.0; n];
    cost[n - 1] = w.c_t;
    for (i, &(k, j)) in vars.iter().enumerate() {
        cost[i] = if r.original[k][j] > 0.5 { -w.c_x } else { w.c_x };
    }

    let need = n - eqs.len();
    let candidates = binomial(ineqs.len() as u64, need as u64);
    if candidates > MAX_VERTEX_CANDIDATES {
        return Err(Error::TooLarge(format!(
            "{candidates} vertex candidates for the shared split"
        )));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset: Vec<usize> = (0..need).collect();
    loop {
        let mut a: Vec<Vec<f64>> = eqs.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = eqs.iter().map(|(_, v)| *v).collect();
        for &s in &subset {
            a.push(ineqs[s].0.clone());
            b.push(ineqs[s].1);
        }
        if let Some(v) = solve_square(a, b) {
            let feasible = eqs
                .iter()
                .all(|(row, rhs)| (dot(row, &v) - rhs).abs() <= FEAS_TOL)
                && ineqs.iter().all(|(row, rhs)| dot(row, &v) >= rhs - FEAS_TOL);
            if feasible {
                let obj = dot(&cost, &v);
                if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
                    best = Some((obj, v));
                }
            }
        }
        if !next_subset(&mut subset, ineqs.len()) {
            break;
        }
    }
    let (_, v) = best.ok_or_else(|| Error::Internal("shared split LP has no vertex".into()))?;
    let mut out = fractions.to_vec();
    for (i, &(k, j)) in vars.iter().enumerate() {
        let x = v[i].clamp(0.0, 1.0);
        out[k][j] = if x < FEAS_TOL { 0.0 } else { x };
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn next_subset(s: &mut [usize], n: usize) -> bool {
    let k = s.len();
    for i in (0..k).rev() {
        if s[i] < n - k + i {
            s[i] += 1;
            for l in i + 1..k {
                s[l] = s[l - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                if f != 0.0 {
                    for l in c..n {
                        a[i][l] -= f * a[c][l];
                    }
                    b[i] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}
