//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{constant, line, random_init, random_reconfig, reconfig_violations};
use linereconf_core::monitor::{replay, update_time_model_from_stream, Baseline, MonitorState, Thresholds};
use linereconf_core::optimizer::{
    brute_force_init, brute_force_reconfig, solve_init, solve_reconfig, sweep_pareto, usage_count, InitProblem,
    Weights,
};
use linereconf_core::scenario::{load_scenario, run_scenario, ScenarioOutcome};
use linereconf_core::selector::{select, Candidate, SelectionPolicy, SortKey};
use linereconf_core::sim::{build_sim, run};
use linereconf_core::{analog, Error, LineConfiguration, TimeModel};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Tolerances.
const INIT_TOL: f64 = 1e-6;
const GRID_TOL: f64 = 1e-4;
const ORACLE_BUDGET_S: f64 = 60.0;
const PLATEAU_TOL: f64 = 0.01;
const RECONFIG_BUDGET_S: f64 = 1.0;
const INIT_BUDGET_S: f64 = 30.0;
const SIM_BUDGET_S: f64 = 144.0;
const WELCH_P: f64 = 0.001;
const MIN_PROPERTY_CASES: u32 = 1000;

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/analog")
}

fn oracle_exactness() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..200 {
        let p = random_init(seed, 8, 5);
        match (solve_init(&p), brute_force_init(&p)) {
            (Ok(s), Ok(o)) if (s.objective - o.objective).abs() <= INIT_TOL => {}
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
            (s, o) => failures.push(format!("init seed {seed}: {:?} vs {:?}", s.map(|s| s.objective), o.map(|o| o.objective))),
        }
    }
    let mut reconfigs = 0;
    let mut seed = 0;
    while reconfigs < 100 {
        seed += 1;
        let Some(r) = random_reconfig(seed) else { continue };
        reconfigs += 1;
        match (solve_reconfig(&r), brute_force_reconfig(&r)) {
            (Ok(s), Ok(o)) => {
                if s.objective > o.grid.objective + GRID_TOL || s.objective < o.exact.objective - INIT_TOL {
                    failures.push(format!(
                        "reconfig seed {seed}: {} outside [{}, {}]",
                        s.objective, o.exact.objective, o.grid.objective
                    ));
                }
            }
            (s, o) => failures.push(format!("reconfig seed {seed}: {:?} / {:?}", s.err(), o.err())),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures.is_empty() && secs <= ORACLE_BUDGET_S,
        format!("200 init + 100 reconfig instances in {secs:.2} s; mismatches {failures:?}"),
    )
}

fn plateau() -> Outcome {
    let graph = linereconf_core::load_graph(data().join("graph.json")).map_err(|e| e.to_string())?;
    let p = InitProblem::from_graph(&graph, Weights::default()).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let sweep = sweep_pareto(&p, &grid).map_err(|e| e.to_string())?;
    let mut off = Vec::new();
    for (c_t, s) in &sweep {
        let inside = *c_t >= 0.4 - 1e-9 && *c_t <= 0.85 + 1e-9;
        if inside && ((s.bottleneck - 43.9).abs() > PLATEAU_TOL || s.agents_used != 20) {
            off.push(format!("c_t {c_t:.2}: {:.2} s, {} agents", s.bottleneck, s.agents_used));
        }
    }
    check(
        off.is_empty() && sweep.len() == grid.len(),
        format!("43.9 s / 20 agents over c_t 0.40-0.85; off-plateau {off:?}"),
    )
}

fn scenario(stem: &str) -> std::result::Result<ScenarioOutcome, String> {
    let path = data().join(format!("scenario_{stem}.json"));
    let s = load_scenario(&path).map_err(|e| e.to_string())?;
    run_scenario(&s, &data()).map_err(|e| e.to_string())
}

fn band(o: &ScenarioOutcome, row: &str, agents: Option<usize>, bottleneck: Option<(f64, f64)>, tp: (f64, f64)) -> Vec<String> {
    let Some(r) = o.row(row) else {
        return vec![format!("{}: no `{row}` row", o.name)];
    };
    let mut bad = Vec::new();
    if agents.is_some_and(|a| a != r.agents) {
        bad.push(format!("{}/{row}: {} agents", o.name, r.agents));
    }
    if let Some((b, tol)) = bottleneck {
        if (r.bottleneck_s - b).abs() > tol {
            bad.push(format!("{}/{row}: bottleneck {:.2}", o.name, r.bottleneck_s));
        }
    }
    let (target, rel) = tp;
    if (r.throughput - target).abs() > rel * target {
        bad.push(format!("{}/{row}: throughput {:.1} vs {target} ± {:.0}%", o.name, r.throughput, rel * 100.0));
    }
    bad
}

fn table_recovery(s1: &ScenarioOutcome, s2: &ScenarioOutcome) -> Outcome {
    let mut bad = Vec::new();
    bad.extend(band(s1, "original", Some(20), Some((43.9, 0.5)), (1295.0, 0.02)));
    bad.extend(band(s1, "disturbed", None, None, (962.0, 0.03)));
    bad.extend(band(s1, "plan_switch", Some(20), Some((43.9, 0.5)), (1292.0, 0.02)));
    bad.extend(band(s2, "disturbed", None, None, (480.0, 0.03)));
    bad.extend(band(s2, "plan_switch", Some(20), Some((48.8, 1.5)), (1161.0, 0.03)));
    bad.extend(band(s2, "config_switch", Some(21), Some((43.9, 0.5)), (1275.0, 0.02)));
    let mut worst_p: f64 = 0.0;
    for o in [s1, s2] {
        for c in o.candidates.iter().filter(|c| c.name != "disturbed") {
            match &c.welch_vs_disturbed {
                Some(w) => worst_p = worst_p.max(w.p_value),
                None => bad.push(format!("{}/{}: no Welch test", o.name, c.name)),
            }
        }
    }
    if worst_p >= WELCH_P {
        bad.push(format!("Welch p {worst_p}"));
    }
    check(bad.is_empty(), format!("six summary rows in band, max Welch p {worst_p:.2e}; misses {bad:?}"))
}

fn solve_speed(s1: &ScenarioOutcome, s2: &ScenarioOutcome) -> Outcome {
    let reconfig = [s1, s2]
        .iter()
        .flat_map(|o| o.candidates.iter().filter_map(|c| c.solve_seconds))
        .fold(0.0, f64::max);
    let graph = linereconf_core::load_graph(data().join("graph.json")).map_err(|e| e.to_string())?;
    let p = InitProblem::from_graph(&graph, Weights::new(0.6, 0.4)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    solve_init(&p).map_err(|e| e.to_string())?;
    let init = start.elapsed().as_secs_f64();
    check(
        reconfig > 0.0 && reconfig <= RECONFIG_BUDGET_S && init <= INIT_BUDGET_S,
        format!("slowest reconfiguration {reconfig:.3} s, initialization {init:.2} s"),
    )
}

fn simulation_speed() -> Outcome {
    let graph = analog::graph();
    let config = analog::original_config();
    let model = build_sim(&config, &graph, &[], analog::HORIZON_S, 11).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let a = run(&model).to_json_string();
    let secs = start.elapsed().as_secs_f64();
    let b = run(&model).to_json_string();
    check(
        secs <= SIM_BUDGET_S && a == b,
        format!("16 h in {secs:.3} s ({:.0}x real time), identical reports: {}", analog::HORIZON_S / secs, a == b),
    )
}

fn deterministic_law() -> Outcome {
    let (g, mut c) = line(&[vec![constant(10.0)], vec![constant(20.0)], vec![constant(15.0)]]);
    c.default_buffer_capacity = 10_000;
    let r = run(&build_sim(&c, &g, &[], 10_000.0, 1).map_err(|e| e.to_string())?);
    check(r.throughput == 497, format!("throughput {}", r.throughput))
}

fn monitor_suite() -> Outcome {
    // A baseline-only stream of the disturbed agent on the analog line.
    let graph = analog::graph();
    let config = analog::original_config();
    let per_part = config.ops_of_agent(analog::DISTURBED_AGENT).len();
    let parts = 10_000usize.div_ceil(per_part);
    let mut log = analog::sample_log(&graph, &config, analog::DISTURBED_AGENT, parts, parts, 1.0, 2024);
    log.truncate(10_000);
    let quiet = replay(&graph, &config, &log, Thresholds::default()).map_err(|e| e.to_string())?;

    let model = TimeModel::LogNormal { mean: 20.0, sd: 20.0 * analog::WORKER_CV };
    let base = Baseline {
        mean: model.expected(),
        sd: model.std_dev(),
        model: model.clone(),
    };
    let shifted = model.scaled(1.5);
    let (mut detected, mut close) = (0, 0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = MonitorState::new(&base, Thresholds::default()).map_err(|e| e.to_string())?;
        let mut early = false;
        for _ in 0..20 + (seed as usize * 7) % 31 {
            early |= s.push(model.sample(&mut rng)).map_err(|e| e.to_string())?.is_some();
        }
        if early {
            continue;
        }
        let mut hit = false;
        for _ in 0..20 {
            hit |= s.push(shifted.sample(&mut rng)).map_err(|e| e.to_string())?.is_some();
            if hit {
                break;
            }
        }
        detected += hit as usize;
        for _ in 0..10 {
            s.push(shifted.sample(&mut rng)).map_err(|e| e.to_string())?;
        }
        if let Ok(fit) = update_time_model_from_stream(&s, &base) {
            close += ((fit.expected() / base.mean - 1.5).abs() <= 0.05 * 1.5) as usize;
        }
    }
    check(
        quiet.triggers.is_empty() && detected >= 99 && close >= 90,
        format!(
            "{} triggers on {} baseline samples ({} raw window events), detected {detected}/100, within 5% {close}/100",
            quiet.triggers.len(),
            log.len(),
            quiet.events.len()
        ),
    )
}

fn column_sums_are_one(c: &LineConfiguration) -> bool {
    c.operations
        .iter()
        .all(|op| (c.holders(op).iter().map(|(_, f)| f).sum::<f64>() - 1.0).abs() <= 1e-9)
}

fn invariants() -> Outcome {
    let cases = 200;
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let runner = || TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let mut total = 0;
    let mut failures = Vec::new();
    let mut record = |name: &str, r: std::result::Result<(), String>| {
        total += cases;
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    record(
        "init conservation and contiguity",
        runner()
            .run(&any::<u64>(), |seed| {
                let p = random_init(seed, 8, 5);
                if let Ok(s) = solve_init(&p) {
                    prop_assert!(column_sums_are_one(&s.config));
                    for row in p.fractions_of(&s.config).unwrap() {
                        prop_assert!(usage_count(&row) <= 1);
                    }
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "reconfiguration conservation and scope",
        runner()
            .run(&any::<u64>(), |seed| {
                if let Some(r) = random_reconfig(seed) {
                    let s = solve_reconfig(&r).unwrap();
                    prop_assert!(column_sums_are_one(&s.config));
                    let v = reconfig_violations(&r, &s.config);
                    prop_assert!(v.is_empty(), "{:?}", v);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let stations = prop::collection::vec(prop::collection::vec((1.0f64..30.0, 0.0f64..0.5), 1..4), 1..6);
    record(
        "simulated parts are conserved",
        runner()
            .run(&(stations, 1usize..4, any::<u64>()), |(stations, cap, seed)| {
                let models: Vec<Vec<TimeModel>> = stations
                    .iter()
                    .map(|ops| ops.iter().map(|&(m, cv)| TimeModel::LogNormal { mean: m, sd: m * cv }).collect())
                    .collect();
                let (g, mut c) = line(&models);
                c.default_buffer_capacity = cap;
                let r = run(&build_sim(&c, &g, &[], 2000.0, seed).unwrap());
                prop_assert_eq!(r.entered, r.completed + r.wip);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let candidates = prop::collection::vec((15usize..25, 1000u32..1300, 0u32..5, 0u32..20), 1..8);
    record(
        "selection ignores candidate order",
        runner()
            .run(&(candidates, any::<u64>()), |(raw, perm)| {
                let cs: Vec<Candidate> = raw
                    .iter()
                    .enumerate()
                    .map(|(i, &(agents, tp, se, adj))| Candidate {
                        name: format!("c{i}"),
                        agents,
                        bottleneck: 40.0,
                        adjustment: adj as f64,
                        throughput: tp as f64,
                        throughput_se: se as f64,
                    })
                    .collect();
                let mut shuffled = cs.clone();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm));
                let p = SelectionPolicy::default();
                let (a, b) = (select(&cs, &p).unwrap(), select(&shuffled, &p).unwrap());
                if a.tied.len() == 1 {
                    prop_assert_eq!(&cs[a.chosen], &shuffled[b.chosen]);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "selection respects thresholds",
        runner()
            .run(
                &(prop::collection::vec((15usize..25, 1000u32..1300), 1..8), 1000u32..1300, 15usize..25),
                |(raw, min_tp, max_agents)| {
                    let cs: Vec<Candidate> = raw
                        .iter()
                        .enumerate()
                        .map(|(i, &(agents, tp))| Candidate {
                            name: format!("c{i}"),
                            agents,
                            bottleneck: 40.0,
                            adjustment: 0.0,
                            throughput: tp as f64,
                            throughput_se: 1.0,
                        })
                        .collect();
                    let p = SelectionPolicy {
                        min_throughput: Some(min_tp as f64),
                        max_agents: Some(max_agents),
                        order: vec![SortKey::AgentsAsc, SortKey::ThroughputDesc],
                    };
                    if let Ok(d) = select(&cs, &p) {
                        let c = &cs[d.chosen];
                        prop_assert!(c.throughput >= min_tp as f64 && c.agents <= max_agents);
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );
    check(
        failures.is_empty() && total >= MIN_PROPERTY_CASES,
        format!("{total} randomized cases over 5 invariants; failures {failures:?}"),
    )
}

fn guarded<T>(f: impl FnOnce() -> std::result::Result<T, String>) -> std::result::Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

#[test]
fn acceptance_criteria() {
    let scenarios = guarded(|| Ok((scenario("s1")?, scenario("s2")?)));
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 oracle exactness", guarded(oracle_exactness)),
        ("2 pareto plateau", guarded(plateau)),
    ];
    match &scenarios {
        Ok((s1, s2)) => {
            results.push(("3 disturbance table", guarded(|| table_recovery(s1, s2))));
            results.push(("4 solve speed", guarded(|| solve_speed(s1, s2))));
        }
        Err(e) => {
            results.push(("3 disturbance table", Err(e.clone())));
            results.push(("4 solve speed", Err(e.clone())));
        }
    }
    results.push(("5 simulation speed and determinism", guarded(simulation_speed)));
    results.push(("6 deterministic line law", guarded(deterministic_law)));
    results.push(("7 monitor suite", guarded(monitor_suite)));
    results.push(("8 property invariants", guarded(invariants)));

    // Written straight to stderr so the lines show even when output is captured.
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (name, r) in &results {
        let line = match r {
            Ok(d) => format!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed.push(*name);
                format!("FAIL criterion {name}: {d}")
            }
        };
        writeln!(err, "{line}").unwrap();
    }
    drop(err);
    assert!(failed.is_empty(), "failed: {failed:?}");
}
