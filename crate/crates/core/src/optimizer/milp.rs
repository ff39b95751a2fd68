//! Best-first branch-and-bound over an LP relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::lp::{solve_lp, LinearProgram, LpStatus};
use crate::error::{Error, Result};

pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    pub integer: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub nodes: u64,
}

struct Node {
    bound: f64,
    seq: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl MixedIntegerProgram {
    pub fn new(lp: LinearProgram) -> Self {
        let n = lp.num_vars();
        MixedIntegerProgram {
            lp,
            integer: vec![false; n],
        }
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64, integer: bool) -> usize {
        self.integer.push(integer);
        self.lp.add_var(cost, lower, upper)
    }

    fn with_bounds(&self, lower: &[f64], upper: &[f64]) -> LinearProgram {
        let mut lp = self.lp.clone();
        lp.lower = lower.to_vec();
        lp.upper = upper.to_vec();
        lp
    }

    /// Most fractional integer variable, ties to the lowest index.
    fn branching_var(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in x.iter().enumerate() {
            if !self.integer[j] {
                continue;
            }
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > INT_TOL && best.is_none_or(|(_, b)| frac > b + 1e-12) {
                best = Some((j, frac));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Re-solves with integer variables fixed to their rounded values so the
    /// continuous part is exact.
    fn polish(&self, x: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
        let mut lower = self.lp.lower.clone();
        let mut upper = self.lp.upper.clone();
        for (j, v) in x.iter().enumerate() {
            if self.integer[j] {
                lower[j] = v.round();
                upper[j] = v.round();
            }
        }
        match solve_lp(&self.with_bounds(&lower, &upper))? {
            LpStatus::Optimal { x, objective } => Ok(Some((x, objective))),
            _ => Ok(None),
        }
    }

    /// `incumbent` is a known feasible point used for pruning. Returns `None`
    /// if no feasible point exists.
    pub fn solve(
        &self,
        incumbent: Option<Vec<f64>>,
        node_limit: usize,
    ) -> Result<Option<MilpSolution>> {
        let gap = |best: f64| 1e-9 * (1.0 + best.abs());
        let mut best: Option<(Vec<f64>, f64)> = incumbent.map(|x| {
            let obj = self.lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            (x, obj)
        });
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Node {
            bound: f64::NEG_INFINITY,
            seq,
            lower: self.lp.lower.clone(),
            upper: self.lp.upper.clone(),
        });
        let mut nodes = 0u64;
        while let Some(node) = heap.pop() {
            if let Some((_, b)) = &best {
                if node.bound >= b - gap(*b) {
                    break;
                }
            }
            if nodes as usize >= node_limit {
                return Err(Error::HitNodeLimit(node_limit));
            }
            nodes += 1;
            let (x, obj) = match solve_lp(&self.with_bounds(&node.lower, &node.upper))? {
                LpStatus::Optimal { x, objective } => (x, objective),
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    return Err(Error::NumericalFailure("MILP relaxation is unbounded".into()))
                }
            };
            if let Some((_, b)) = &best {
                if obj >= b - gap(*b) {
                    continue;
                }
            }
            match self.branching_var(&x) {
                None => {
                    if let Some((px, pobj)) = self.polish(&x)? {
                        if best.as_ref().is_none_or(|(_, b)| pobj < *b - gap(*b)) {
                            best = Some((px, pobj));
                        }
                    }
                }
                Some(j) => {
                    let v = x[j];
                    let mut down_upper = node.upper.clone();
                    down_upper[j] = v.floor();
                    let mut up_lower = node.lower.clone();
                    up_lower[j] = v.ceil();
                    seq += 1;
                    heap.push(Node {
                        bound: obj,
                        seq,
                        lower: node.lower.clone(),
                        upper: down_upper,
                    });
                    seq += 1;
                    heap.push(Node {
                        bound: obj,
                        seq,
                        lower: up_lower,
                        upper: node.upper,
                    });
                }
            }
        }
        Ok(best.map(|(x, objective)| MilpSolution {
            x,
            objective,
            nodes,
        }))
    }
}
