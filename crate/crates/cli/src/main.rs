use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use linereconf_core::monitor::{parse_samples, replay, Thresholds, Trigger};
use linereconf_core::optimizer::reconfig::ReconfigMode;
use linereconf_core::optimizer::{solve_init, sweep_pareto, InitProblem, Weights};
use linereconf_core::scenario::{apply_trigger, load_scenario, reconfigure_all, run_scenario, summary_csv};
use linereconf_core::sim::{build_sim, replicate, run};
use linereconf_core::{analog, load_config, load_graph, save_config, DisturbanceScenario, Error};

#[derive(Parser)]
#[command(name = "linereconf", version, about = "Manufacturing line configuration, monitoring and reconfiguration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the initial line configuration.
    Init(InitArgs),
    /// Sweep the bottleneck weight and report the optimal trade-offs.
    Pareto(ParetoArgs),
    /// Replay an operation-time log and emit disturbance triggers.
    Monitor(MonitorArgs),
    /// Reconfigure a line after a trigger.
    Reconfigure(ReconfigureArgs),
    /// Simulate a configuration.
    Simulate(SimulateArgs),
    /// Run the full pipeline described by a scenario file.
    RunScenario(RunScenarioArgs),
    /// Write the bundled 51-operation analog dataset.
    ExportAnalog(ExportArgs),
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Bottleneck and agent-count weights, `c_t,c_z`.
    #[arg(long, default_value = "0.6,0.4")]
    weights: String,
    #[arg(long)]
    out: PathBuf,
    /// Solve statistics; defaults to the output path with `.stats.json`.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct ParetoArgs {
    #[arg(long)]
    graph: PathBuf,
    /// `start:end:step` or a comma-separated list of `c_t` values.
    #[arg(long, default_value = "0:1:0.05")]
    grid: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    /// Output directory for `trigger_<agent>.json`, `events.json` and
    /// `graph_updated.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    k: f64,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    persistence: usize,
}

#[derive(Args)]
struct ReconfigureArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trigger: PathBuf,
    /// `c_t,c_z[,c_x]`; repeat for several weight sets.
    #[arg(long, default_value = "0.6,0.4")]
    weights: Vec<String>,
    /// Comma-separated sharing partners; defaults to neighbouring stations.
    #[arg(long)]
    adjacent: Option<String>,
    /// Whole operations only, no fractional sharing.
    #[arg(long)]
    no_sharing: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// `agent:multiplier:onset_s` on all of the agent's operations; repeatable.
    #[arg(long)]
    disturb: Vec<String>,
    #[arg(long, default_value_t = 16.0)]
    hours: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Event trace CSV of the first replication.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct RunScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(4),
    }
}

/// The error chain, skipping causes the library already spells out.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(err) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 2;
    };
    match err.root() {
        Error::Infeasible(_) | Error::NoFeasibleCandidate(_) | Error::HitNodeLimit(_) => 3,
        Error::Internal(_) | Error::NumericalFailure(_) => 4,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init(a) => init(a),
        Command::Pareto(a) => pareto(a),
        Command::Monitor(a) => monitor(a),
        Command::Reconfigure(a) => reconfigure(a),
        Command::Simulate(a) => simulate(a),
        Command::RunScenario(a) => {
            let s = load_scenario(&a.scenario)?;
            let base = a.scenario.parent().unwrap_or(Path::new("."));
            let outcome = run_scenario(&s, base)?;
            outcome.write(&a.out_dir)?;
            print!("{}", summary_csv(&outcome.summary));
            println!("chosen: {}", outcome.decision_file.chosen);
            Ok(())
        }
        Command::ExportAnalog(a) => {
            for p in analog::export(&a.out_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn input_error(msg: String) -> anyhow::Error {
    Error::InvalidArgument(msg).into()
}

fn parse_weights(text: &str) -> Result<Weights> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_error(format!("bad weights `{text}`: {e}")))?;
    match parts[..] {
        [c_t, c_z] => Ok(Weights::new(c_t, c_z)),
        [c_t, c_z, c_x] => Ok(Weights::with_adjustment(c_t, c_z, c_x)),
        _ => Err(input_error(format!("weights `{text}` must be c_t,c_z or c_t,c_z,c_x"))),
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |e: String| input_error(format!("bad grid `{text}`: {e}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
    if let [a, b, step] = text.split(':').collect::<Vec<_>>()[..] {
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        let ordered = step > 0.0 && b >= a;
        if !ordered {
            return Err(bad("need start <= end and a positive step".into()));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| round(a + i as f64 * step)).collect());
    }
    text.split(',').map(num).collect()
}

fn round(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn init(a: InitArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let p = InitProblem::from_graph(&graph, parse_weights(&a.weights)?)?;
    let s = solve_init(&p)?;
    save_config(&s.config, &a.out)?;
    let stats = a.stats.unwrap_or_else(|| a.out.with_extension("stats.json"));
    write(&stats, json(&s.stats()))
}

fn pareto(a: ParetoArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let grid = parse_grid(&a.grid)?;
    let p = InitProblem::from_graph(&graph, Weights::default())?;
    let mut out = String::from("c_t,bottleneck_s,agents\n");
    for (c_t, s) in sweep_pareto(&p, &grid)? {
        out.push_str(&format!("{},{},{}\n", round(c_t), round(s.bottleneck), s.agents_used));
    }
    write(&a.out, out)
}

fn monitor(a: MonitorArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let config = load_config(&a.config)?;
    let path = &a.samples;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let samples = parse_samples(&text)?;
    let thresholds = Thresholds {
        k: a.k,
        window: a.window,
        persistence: a.persistence,
    };
    let r = replay(&graph, &config, &samples, thresholds)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out.join("events.json"), json(&r.events))?;
    for t in &r.triggers {
        write(&a.out.join(format!("trigger_{}.json", t.agent)), t.to_json_string())?;
    }
    write(&a.out.join("graph_updated.json"), r.monitor.updated_graph(&graph)?.to_json_string())?;
    println!("{} events, {} triggers", r.events.len(), r.triggers.len());
    Ok(())
}

fn reconfigure(a: ReconfigureArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let config = load_config(&a.config)?;
    let text = std::fs::read_to_string(&a.trigger).map_err(|e| Error::Io {
        path: a.trigger.clone(),
        source: e,
    })?;
    let trigger = Trigger::from_json_str(&text)?;
    if !config.agents_used().contains(&trigger.agent) {
        return Err(input_error(format!("trigger agent `{}` is not in the configuration", trigger.agent)));
    }
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    if trigger.multiplier <= 1.0 {
        // Speed-ups and null triggers leave the line as it is.
        save_config(&config, a.out_dir.join("config_unchanged.json"))?;
        println!("unchanged");
        return Ok(());
    }
    let updated = apply_trigger(&graph, &trigger)?;
    let weights: Vec<Weights> = a.weights.iter().map(|w| parse_weights(w)).collect::<Result<_>>()?;
    let adjacent: Option<Vec<String>> = a
        .adjacent
        .map(|s| s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect());
    let found = reconfigure_all(
        &updated,
        &config,
        std::slice::from_ref(&trigger.agent),
        adjacent.as_deref(),
        &weights,
        !a.no_sharing,
    )?;
    let mut summary = Vec::new();
    let mut seen: Vec<ReconfigMode> = Vec::new();
    for r in &found {
        let name = if seen.contains(&r.mode) {
            format!("{}_{}", r.mode.as_str(), seen.iter().filter(|m| **m == r.mode).count() + 1)
        } else {
            r.mode.as_str().to_string()
        };
        seen.push(r.mode);
        save_config(&r.solution.config, a.out_dir.join(format!("config_{name}.json")))?;
        summary.push(serde_json::json!({
            "name": name,
            "mode": r.mode,
            "weights": r.weights,
            "stats": r.solution.stats(),
            "adjustment": r.solution.adjustment,
        }));
        println!("{name}: bottleneck {:.2} s, {} agents", r.solution.bottleneck, r.solution.agents_used);
    }
    write(&a.out_dir.join("reconfigure.json"), json(&summary))
}

fn parse_disturbance(text: &str, config: &linereconf_core::LineConfiguration) -> Result<DisturbanceScenario> {
    let parts: Vec<&str> = text.split(':').collect();
    let (agent, mult, onset) = match parts[..] {
        [agent, mult] => (agent, mult, "0"),
        [agent, mult, onset] => (agent, mult, onset),
        _ => bail!(input_error(format!("disturbance `{text}` must be agent:multiplier[:onset]"))),
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| input_error(format!("bad number `{s}` in `{text}`: {e}")))
    };
    if config.ops_of_agent(agent).is_empty() {
        bail!(Error::UnknownEntity(agent.to_string()));
    }
    Ok(DisturbanceScenario::on_all_ops(config, agent, num(mult)?, num(onset)?))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let config = load_config(&a.config)?;
    let scenarios: Vec<DisturbanceScenario> = a
        .disturb
        .iter()
        .map(|d| parse_disturbance(d, &config))
        .collect::<Result<_>>()?;
    let model = build_sim(&config, &graph, &scenarios, a.hours * 3600.0, a.seed)?;
    if a.reps == 0 {
        return Err(input_error("--reps must be at least 1".into()));
    }
    if let Some(trace) = &a.trace {
        let report = run(&model.clone().with_trace(true));
        write(trace, report.trace_csv())?;
    }
    if a.reps == 1 {
        let report = run(&model);
        println!("throughput {}", report.throughput);
        write(&a.out, report.to_json_string())
    } else {
        let rep = replicate(&model, a.reps, a.seed)?;
        println!("throughput {:.1} ± {:.1}", rep.throughput.mean, rep.throughput_se());
        write(&a.out, json(&rep))
    }
}
