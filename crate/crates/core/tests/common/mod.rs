#![allow(dead_code, clippy::needless_range_loop)]

use linereconf_core::line::LineConfiguration;
use linereconf_core::optimizer::{solve_init, InitProblem, ReconfigProblem, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random initialization instance; every operation has at least one capable
/// agent and times lie in [1, 50].
pub fn random_init(seed: u64, max_ops: usize, max_agents: usize) -> InitProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_ops = rng.random_range(1..=max_ops);
    let n_agents = rng.random_range(1..=max_agents);
    let mut times: Vec<Vec<Option<f64>>> = (0..n_agents)
        .map(|_| {
            (0..n_ops)
                .map(|_| {
                    rng.random_bool(0.75)
                        .then(|| (rng.random_range(1.0..=50.0_f64) * 10.0).round() / 10.0)
                })
                .collect()
        })
        .collect();
    // Occasionally duplicate an agent to exercise interchangeable agents.
    if n_agents > 1 && rng.random_bool(0.3) {
        times[n_agents - 1] = times[0].clone();
    }
    for j in 0..n_ops {
        if times.iter().all(|r| r[j].is_none()) {
            let k = rng.random_range(0..n_agents);
            times[k][j] = Some(rng.random_range(1.0..=50.0));
        }
    }
    let c_t = (rng.random_range(0.0..=1.0_f64) * 20.0).round() / 20.0;
    InitProblem {
        operations: (1..=n_ops).map(|j| format!("Op{j}")).collect(),
        agents: (0..n_agents).map(|k| format!("Agent{k}")).collect(),
        times,
        weights: Weights::new(c_t.max(0.05), 1.0 - c_t.max(0.05)),
    }
}

/// Random reconfiguration instance: a feasible initial plan on base times,
/// then one agent holding at most two operations is slowed down. One
/// neighbouring agent may share.
pub fn random_reconfig(seed: u64) -> Option<ReconfigProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut p = random_init(seed, 5, 4);
    if p.operations.len() < 2 {
        return None;
    }
    let x0 = solve_init(&p).ok()?.config;
    let view = linereconf_core::derive_stations(&x0).ok()?;
    let candidates: Vec<usize> = (0..view.stations.len())
        .filter(|&s| {
            let st = &view.stations[s];
            st.last_op - st.first_op < 2 && view.station_of_agent(&st.agent).len() == 1
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let s = candidates[rng.random_range(0..candidates.len())];
    let disturbed = view.stations[s].agent.clone();
    let k = p.agent_index(&disturbed)?;
    let m = rng.random_range(1.0..=3.0_f64);
    for t in p.times[k].iter_mut().flatten() {
        *t *= m;
    }
    let mut neighbours = Vec::new();
    if s > 0 {
        neighbours.push(view.stations[s - 1].agent.clone());
    }
    if s + 1 < view.stations.len() {
        neighbours.push(view.stations[s + 1].agent.clone());
    }
    let adjacent: Vec<String> = if neighbours.is_empty() {
        vec![]
    } else {
        vec![neighbours[rng.random_range(0..neighbours.len())].clone()]
    };
    let c_t = rng.random_range(0.1..=0.9_f64);
    p.weights = Weights::new(c_t, 1.0 - c_t);
    let sharing = rng.random_bool(0.8);
    ReconfigProblem::new(p, &x0, &[disturbed], Some(&adjacent), sharing).ok()
}

/// Independent constraint check for a reconfiguration solution.
pub fn reconfig_violations(r: &ReconfigProblem, c: &LineConfiguration) -> Vec<String> {
    let p = &r.base;
    let f = p.fractions_of(c).unwrap();
    let mut v = Vec::new();
    for j in 0..p.operations.len() {
        let sum: f64 = f.iter().map(|row| row[j]).sum();
        if (sum - 1.0).abs() > 1e-9 {
            v.push(format!("column {j} sums to {sum}"));
        }
        let scoped = r.scope.disturbed_ops.contains(&j);
        for k in 0..p.agents.len() {
            let x = f[k][j];
            if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                v.push(format!("fraction {x} out of range"));
            }
            if x > 0.0 && p.times[k][j].is_none() {
                v.push(format!("agent {k} cannot do op {j}"));
            }
            if !scoped && x != r.original[k][j] {
                v.push(format!("unscoped entry ({k}, {j}) changed"));
            }
            let fractional = x > 0.0 && x < 1.0;
            if fractional && (!scoped || !r.scope.is_sharing(k) || !r.allow_sharing) {
                v.push(format!("fractional entry ({k}, {j}) outside the sharing scope"));
            }
        }
    }
    for k in 0..p.agents.len() {
        if !r.scope.is_sharing(k) {
            let runs = linereconf_core::optimizer::usage_count(&f[k]);
            if runs > 1 {
                v.push(format!("agent {k} has {runs} blocks"));
            }
        }
    }
    v
}

use linereconf_core::graph::{CapabilityGraph, EntityId, Predicate, Triple};
use linereconf_core::TimeModel;

/// A serial line where station `i` is agent `Agent{i}` doing its listed
/// operations with the given time models. Every agent has the one shared
/// capability but only has time models for its own operations.
pub fn line(stations: &[Vec<TimeModel>]) -> (CapabilityGraph, LineConfiguration) {
    let mut g = CapabilityGraph::new();
    g.add_entity(EntityId::capability("Any")).unwrap();
    let mut ops = Vec::new();
    for (s, models) in stations.iter().enumerate() {
        for i in 0..models.len() {
            let op = format!("Op{s}_{i}");
            g.add_entity(EntityId::operation(op.as_str())).unwrap();
            g.add_triple(Triple::new(
                EntityId::operation(op.as_str()),
                Predicate::Needs,
                EntityId::capability("Any"),
            ))
            .unwrap();
            ops.push(op);
        }
    }
    let mut blocks = Vec::new();
    let names: Vec<String> = (0..stations.len()).map(|s| format!("Agent{s}")).collect();
    for (s, models) in stations.iter().enumerate() {
        let a = &names[s];
        g.add_agent(a, "Worker").unwrap();
        g.add_triple(Triple::new(EntityId::agent(a.as_str()), Predicate::Has, EntityId::capability("Any")))
            .unwrap();
        for (i, m) in models.iter().enumerate() {
            g.set_time_model(a, &format!("Op{s}_{i}"), m.clone()).unwrap();
        }
    }
    for (s, models) in stations.iter().enumerate() {
        blocks.push((names[s].as_str(), models.len()));
    }
    let c = LineConfiguration::from_blocks(ops, &blocks);
    (g, c)
}

pub fn constant(mean: f64) -> TimeModel {
    TimeModel::Constant { mean }
}
