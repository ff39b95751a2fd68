//! Stream monitoring of operation times and disturbance triggers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CapabilityGraph;
use crate::line::{expected_station_times, DisturbanceScenario, LineConfiguration};
use crate::time_model::TimeModel;

/// Detection thresholds: a window of `window` samples breaches when its mean
/// exceeds `μ₀ + k·σ₀/√window`; an event needs `persistence` consecutive
/// breaching windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub k: f64,
    pub window: usize,
    pub persistence: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            k: 3.0,
            window: 10,
            persistence: 1,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidArgument(format!("k must be non-negative, got {}", self.k)));
        }
        if self.window < 2 {
            return Err(Error::InvalidArgument(format!(
                "window must hold at least 2 samples, got {}",
                self.window
            )));
        }
        if self.persistence == 0 {
            return Err(Error::InvalidArgument("persistence must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mean: f64,
    pub sd: f64,
    pub model: TimeModel,
}

/// Expected operation time distribution per (agent, operation).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineStats {
    pairs: BTreeMap<(String, String), Baseline>,
}

impl BaselineStats {
    pub fn from_graph(graph: &CapabilityGraph) -> Self {
        let pairs = graph
            .time_models()
            .map(|(key, model)| {
                (
                    key.clone(),
                    Baseline {
                        mean: model.expected(),
                        sd: model.std_dev(),
                        model: model.clone(),
                    },
                )
            })
            .collect();
        BaselineStats { pairs }
    }

    pub fn get(&self, agent: &str, op: &str) -> Result<&Baseline> {
        self.pairs
            .get(&(agent.to_string(), op.to_string()))
            .ok_or_else(|| Error::UnknownPair {
                agent: agent.to_string(),
                op: op.to_string(),
            })
    }
}

/// Detection state of one (agent, operation) stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorState {
    mean: f64,
    sd: f64,
    thresholds: Thresholds,
    window: Vec<f64>,
    breaches: usize,
    fast_windows: u64,
    count: u64,
    /// Recent (sample, timestamp) pairs kept for onset estimation.
    history: VecDeque<(f64, Option<f64>)>,
    latch: Option<Latch>,
}

#[derive(Debug, Clone, PartialEq)]
struct Latch {
    /// Stream index of `trail[0]`.
    trail_start: u64,
    /// Samples from the pre-event history onward.
    trail: Vec<f64>,
    times: Vec<Option<f64>>,
}

impl MonitorState {
    pub fn new(baseline: &Baseline, thresholds: Thresholds) -> Result<Self> {
        thresholds.validate()?;
        let valid = baseline.mean > 0.0 && baseline.sd >= 0.0;
        if !valid {
            return Err(Error::InvalidArgument(format!(
                "baseline needs a positive mean and non-negative sd, got {} and {}",
                baseline.mean, baseline.sd
            )));
        }
        Ok(MonitorState {
            mean: baseline.mean,
            sd: baseline.sd,
            thresholds,
            window: Vec::with_capacity(thresholds.window),
            breaches: 0,
            fast_windows: 0,
            count: 0,
            history: VecDeque::new(),
            latch: None,
        })
    }

    pub fn samples_seen(&self) -> u64 {
        self.count
    }

    /// Windows whose mean fell below `μ₀ − k·σ₀/√W`; logged only.
    pub fn fast_windows(&self) -> u64 {
        self.fast_windows
    }

    pub fn is_latched(&self) -> bool {
        self.latch.is_some()
    }

    /// Allowed deviation of a window mean; the relative slack absorbs
    /// rounding in the window sum.
    fn limit(&self) -> f64 {
        self.thresholds.k * self.sd / (self.thresholds.window as f64).sqrt() + 1e-12 * self.mean
    }

    /// Adds one sample. Returns `(onset index, multiplier)` when this sample
    /// completes the last breaching window of an event. After an event the
    /// stream is latched until `reset`.
    pub fn push(&mut self, duration: f64) -> Result<Option<(u64, f64)>> {
        self.push_at(duration, None)
    }

    pub fn push_at(&mut self, duration: f64, timestamp: Option<f64>) -> Result<Option<(u64, f64)>> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::NonPositiveDuration(duration));
        }
        let index = self.count;
        self.count += 1;
        if let Some(latch) = &mut self.latch {
            latch.trail.push(duration);
            latch.times.push(timestamp);
            return Ok(None);
        }
        let w = self.thresholds.window;
        self.history.push_back((duration, timestamp));
        while self.history.len() > (self.thresholds.persistence + 1) * w {
            self.history.pop_front();
        }
        self.window.push(duration);
        if self.window.len() < w {
            return Ok(None);
        }
        let mean = self.window.iter().sum::<f64>() / w as f64;
        self.window.clear();
        if mean > self.mean + self.limit() {
            self.breaches += 1;
        } else {
            self.breaches = 0;
            if mean < self.mean - self.limit() {
                self.fast_windows += 1;
            }
        }
        if self.breaches < self.thresholds.persistence {
            return Ok(None);
        }
        let (trail, times): (Vec<f64>, Vec<Option<f64>>) = self.history.iter().copied().unzip();
        let trail_start = index + 1 - trail.len() as u64;
        let (tau, multiplier) = change_point(&trail, self.mean);
        let onset = trail_start + tau as u64;
        self.latch = Some(Latch {
            trail_start,
            trail,
            times,
        });
        Ok(Some((onset, multiplier)))
    }

    /// Clears detection state, keeping the baseline.
    pub fn reset(&mut self) {
        self.window.clear();
        self.breaches = 0;
        self.history.clear();
        self.latch = None;
    }

    /// Current estimate of the (onset index, multiplier), re-fitted on all
    /// samples seen since the event.
    pub fn estimate(&self) -> Option<(u64, f64)> {
        let latch = self.latch.as_ref()?;
        let (tau, m) = change_point(&latch.trail, self.mean);
        Some((latch.trail_start + tau as u64, m))
    }

    /// Timestamp of the sample at stream index `index`, if it is still held
    /// and was ingested with one.
    pub fn timestamp_of(&self, index: u64) -> Option<f64> {
        let latch = self.latch.as_ref()?;
        let i = index.checked_sub(latch.trail_start)? as usize;
        latch.times.get(i).copied().flatten()
    }

    fn samples_since_onset(&self) -> Option<u64> {
        let latch = self.latch.as_ref()?;
        let (onset, _) = self.estimate()?;
        Some(latch.trail_start + latch.trail.len() as u64 - onset)
    }
}

/// Most likely start of an upward mean shift from a known mean `mu`, and the
/// ratio of the post-shift mean to `mu`.
fn change_point(samples: &[f64], mu: f64) -> (usize, f64) {
    let n = samples.len();
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut tail = 0.0;
    for tau in (0..n).rev() {
        tail += samples[tau] - mu;
        let score = if tail > 0.0 { tail * tail / (n - tau) as f64 } else { 0.0 };
        if score >= best.1 {
            best = (tau, score);
        }
    }
    let post = &samples[best.0..];
    let mean = post.iter().sum::<f64>() / post.len() as f64;
    (best.0, mean / mu)
}

/// A detected slow-down of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub agent: String,
    pub ops: Vec<String>,
    /// Post-onset mean divided by the baseline mean.
    pub multiplier: f64,
    /// Index of the first disturbed sample within the stream.
    pub onset: u64,
    /// Timestamp of that sample, when ingested with one.
    pub onset_time: Option<f64>,
    pub line_impacting: bool,
}

/// Reconfiguration request for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub agent: String,
    pub ops: Vec<String>,
    pub multiplier: f64,
    /// Seconds.
    pub onset: f64,
    pub line_impacting: bool,
}

impl Trigger {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let t: Trigger = serde_json::from_str(text).map_err(|e| Error::from_json("trigger", e))?;
        if !(t.multiplier.is_finite() && t.multiplier > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trigger multiplier must be positive, got {}",
                t.multiplier
            )));
        }
        Ok(t)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trigger serializes") + "\n"
    }

    /// The disturbance as seen by the simulator, active from `onset`.
    pub fn scenario(&self, onset: f64) -> DisturbanceScenario {
        DisturbanceScenario {
            agent: self.agent.clone(),
            time_multiplier: self.multiplier,
            affected_ops: self.ops.clone(),
            onset,
        }
    }
}

/// All streams of one line.
#[derive(Debug, Clone)]
pub struct Monitor {
    baseline: BaselineStats,
    thresholds: Thresholds,
    streams: BTreeMap<(String, String), MonitorState>,
    station_times: BTreeMap<String, f64>,
    bottleneck: f64,
    config: LineConfiguration,
}

impl Monitor {
    pub fn new(graph: &CapabilityGraph, config: &LineConfiguration, thresholds: Thresholds) -> Result<Self> {
        thresholds.validate()?;
        let station_times = expected_station_times(config, graph)?;
        let bottleneck = station_times.values().copied().fold(0.0, f64::max);
        Ok(Monitor {
            baseline: BaselineStats::from_graph(graph),
            thresholds,
            streams: BTreeMap::new(),
            station_times,
            bottleneck,
            config: config.clone(),
        })
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn stream(&self, agent: &str, op: &str) -> Option<&MonitorState> {
        self.streams.get(&(agent.to_string(), op.to_string()))
    }

    pub fn ingest_sample(&mut self, agent: &str, op: &str, duration: f64) -> Result<Option<DisturbanceEvent>> {
        self.ingest(None, agent, op, duration)
    }

    pub fn ingest_timed(
        &mut self,
        timestamp: f64,
        agent: &str,
        op: &str,
        duration: f64,
    ) -> Result<Option<DisturbanceEvent>> {
        self.ingest(Some(timestamp), agent, op, duration)
    }

    fn ingest(
        &mut self,
        timestamp: Option<f64>,
        agent: &str,
        op: &str,
        duration: f64,
    ) -> Result<Option<DisturbanceEvent>> {
        let key = (agent.to_string(), op.to_string());
        if !self.streams.contains_key(&key) {
            let b = self.baseline.get(agent, op)?;
            self.streams.insert(key.clone(), MonitorState::new(b, self.thresholds)?);
        }
        let state = self.streams.get_mut(&key).expect("inserted above");
        let Some((onset, multiplier)) = state.push_at(duration, timestamp)? else {
            return Ok(None);
        };
        let onset_time = state.timestamp_of(onset);
        let projected = self.projected_station_time(agent);
        Ok(Some(DisturbanceEvent {
            agent: agent.to_string(),
            ops: vec![op.to_string()],
            multiplier,
            onset,
            onset_time,
            line_impacting: projected > self.bottleneck + 1e-9,
        }))
    }

    /// Expected station time of `agent` with every latched stream of that
    /// agent scaled by its estimated multiplier.
    pub fn projected_station_time(&self, agent: &str) -> f64 {
        let mut t = self.station_times.get(agent).copied().unwrap_or(0.0);
        for ((a, op), s) in &self.streams {
            if a != agent {
                continue;
            }
            if let Some((_, m)) = s.estimate() {
                t += self.config.fraction(a, op) * s.mean * (m - 1.0);
            }
        }
        t
    }

    pub fn bottleneck(&self) -> f64 {
        self.bottleneck
    }

    /// Fitted time model of a disturbed stream: the baseline scaled by the
    /// current multiplier estimate.
    pub fn update_time_model_from_stream(&self, agent: &str, op: &str) -> Result<TimeModel> {
        let b = self.baseline.get(agent, op)?;
        let state = self
            .stream(agent, op)
            .ok_or_else(|| Error::InsufficientSamples(format!("no samples for `{agent}` on `{op}`")))?;
        update_time_model_from_stream(state, b)
    }

    /// Graph with every disturbed stream's time model replaced by its fit;
    /// streams without enough post-onset samples use the event estimate.
    pub fn updated_graph(&self, graph: &CapabilityGraph) -> Result<CapabilityGraph> {
        let mut g = graph.clone();
        for ((agent, op), state) in &self.streams {
            let Some((_, m)) = state.estimate() else {
                continue;
            };
            let b = self.baseline.get(agent, op)?;
            let model = match update_time_model_from_stream(state, b) {
                Ok(model) => model,
                Err(Error::InsufficientSamples(_)) => b.model.scaled(m),
                Err(e) => return Err(e),
            };
            g.set_time_model(agent, op, model)?;
        }
        Ok(g)
    }

    /// Consolidates events per agent into triggers; only agents whose
    /// projected station time exceeds the line bottleneck are returned.
    pub fn triggers(&self, events: &[DisturbanceEvent]) -> Vec<Trigger> {
        let mut by_agent: BTreeMap<&str, Vec<&DisturbanceEvent>> = BTreeMap::new();
        for e in events {
            by_agent.entry(e.agent.as_str()).or_default().push(e);
        }
        let order: BTreeMap<&str, usize> = self
            .config
            .operations
            .iter()
            .enumerate()
            .map(|(i, op)| (op.as_str(), i))
            .collect();
        let mut out = Vec::new();
        for (agent, evs) in by_agent {
            let projected = self.projected_station_time(agent);
            if projected <= self.bottleneck + 1e-9 {
                continue;
            }
            let ops: BTreeSet<&str> = evs.iter().flat_map(|e| e.ops.iter().map(String::as_str)).collect();
            let mut ops: Vec<String> = ops.into_iter().map(str::to_string).collect();
            ops.sort_by_key(|op| order.get(op.as_str()).copied().unwrap_or(usize::MAX));
            // Multiplier weighted by each operation's baseline time.
            let (mut num, mut den) = (0.0, 0.0);
            for op in &ops {
                let Some(state) = self.stream(agent, op) else { continue };
                let Some((_, m)) = state.estimate() else { continue };
                num += state.mean * m;
                den += state.mean;
            }
            // Onset from the refitted estimates, which can move past an
            // early false alarm that latched a stream.
            let onset = ops
                .iter()
                .filter_map(|op| {
                    let state = self.stream(agent, op)?;
                    let (index, _) = state.estimate()?;
                    Some(state.timestamp_of(index).unwrap_or(index as f64))
                })
                .fold(f64::INFINITY, f64::min);
            out.push(Trigger {
                agent: agent.to_string(),
                ops,
                multiplier: if den > 0.0 { num / den } else { 1.0 },
                onset,
                line_impacting: true,
            });
        }
        out
    }
}

/// Baseline model of a latched stream scaled by its fitted multiplier; the
/// coefficient of variation is preserved.
pub fn update_time_model_from_stream(state: &MonitorState, baseline: &Baseline) -> Result<TimeModel> {
    let w = state.thresholds.window as u64;
    let seen = state.samples_since_onset().unwrap_or(0);
    if seen < w {
        return Err(Error::InsufficientSamples(format!(
            "{seen} samples after onset, {w} required"
        )));
    }
    let (_, m) = state.estimate().expect("latched");
    Ok(baseline.model.scaled(m))
}

/// Monte-Carlo estimate of events per window on an undisturbed stream drawn
/// from `baseline`. The stream is reset after each event.
pub fn false_positive_rate<R: Rng + ?Sized>(
    baseline: &TimeModel,
    thresholds: Thresholds,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    thresholds.validate()?;
    if n_samples < 10 * thresholds.window {
        return Err(Error::InvalidArgument(format!(
            "at least {} samples are required, got {n_samples}",
            10 * thresholds.window
        )));
    }
    let b = Baseline {
        mean: baseline.expected(),
        sd: baseline.std_dev(),
        model: baseline.clone(),
    };
    let mut state = MonitorState::new(&b, thresholds)?;
    let mut events = 0u64;
    for _ in 0..n_samples {
        if state.push(baseline.sample(rng))?.is_some() {
            events += 1;
            state.reset();
        }
    }
    Ok(events as f64 / (n_samples / thresholds.window) as f64)
}

/// One row of a sample log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp_s: f64,
    pub agent: String,
    pub op: String,
    pub duration_s: f64,
}

const SAMPLE_HEADER: [&str; 4] = ["timestamp_s", "agent", "op", "duration_s"];

pub fn parse_samples(text: &str) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: "sample log".into(),
        line,
        column: 0,
        message,
    };
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != SAMPLE_HEADER {
        return Err(parse_err(1, format!("expected header `{}`", SAMPLE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Sample>().enumerate() {
        let line = i + 2;
        let s = row.map_err(|e| parse_err(line, e.to_string()))?;
        if !s.timestamp_s.is_finite() || !s.duration_s.is_finite() {
            return Err(parse_err(line, "non-finite number".into()));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn samples_csv(samples: &[Sample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(s).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Result of replaying a sample log.
#[derive(Debug, Clone)]
pub struct Replay {
    pub events: Vec<DisturbanceEvent>,
    pub triggers: Vec<Trigger>,
    pub monitor: Monitor,
}

pub fn replay(
    graph: &CapabilityGraph,
    config: &LineConfiguration,
    samples: &[Sample],
    thresholds: Thresholds,
) -> Result<Replay> {
    let mut monitor = Monitor::new(graph, config, thresholds)?;
    let mut events = Vec::new();
    for s in samples {
        if let Some(e) = monitor.ingest_timed(s.timestamp_s, &s.agent, &s.op, s.duration_s)? {
            events.push(e);
        }
    }
    let triggers = monitor.triggers(&events);
    Ok(Replay {
        events,
        triggers,
        monitor,
    })
}
