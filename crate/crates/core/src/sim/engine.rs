use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    stream, BufferStats, EventKind, RouteStats, SimModel, SimReport, StationStats, TraceEvent,
};

#[derive(Debug, Clone, Copy)]
struct Part {
    id: u64,
    entered_station: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Empty,
    WaitingAgent,
    Working,
    Blocked,
}

struct StationState {
    part: Option<Part>,
    cursor: usize,
    phase: Phase,
    /// Performer index chosen for the current operation.
    performer: usize,
    time_sum: f64,
    time_max: f64,
    parts: u64,
}

struct Finish {
    time: f64,
    seq: u64,
    station: usize,
    agent: usize,
}

impl PartialEq for Finish {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Finish {}
impl PartialOrd for Finish {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Finish {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct BufferState {
    parts: VecDeque<Part>,
    area: f64,
    last_change: f64,
    max: usize,
}

pub(super) struct Engine<'a> {
    m: &'a SimModel,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Finish>,
    stations: Vec<StationState>,
    buffers: Vec<BufferState>,
    agent_busy: Vec<bool>,
    agent_queue: Vec<VecDeque<usize>>,
    /// `op_rng[s][i][p]`: duration stream of performer `p` on op `i` of station `s`.
    op_rng: Vec<Vec<Vec<ChaCha8Rng>>>,
    route_rng: Vec<Vec<ChaCha8Rng>>,
    route_counts: BTreeMap<(String, String), (u64, u64)>,
    op_times: BTreeMap<String, (f64, u64)>,
    next_part: u64,
    completed: u64,
    departures: Vec<f64>,
    trace: Vec<TraceEvent>,
}

impl<'a> Engine<'a> {
    pub(super) fn new(m: &'a SimModel) -> Self {
        let op_rng = m
            .stations
            .iter()
            .map(|st| {
                st.ops
                    .iter()
                    .map(|op| {
                        op.performers
                            .iter()
                            .map(|p| stream(m.seed, &format!("{}\u{0}{}", m.agents[p.agent], op.name)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let route_rng = m
            .stations
            .iter()
            .map(|st| {
                st.ops
                    .iter()
                    .map(|op| stream(m.seed, &format!("route\u{0}{}", op.name)))
                    .collect()
            })
            .collect();
        Engine {
            m,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            stations: m
                .stations
                .iter()
                .map(|_| StationState {
                    part: None,
                    cursor: 0,
                    phase: Phase::Empty,
                    performer: 0,
                    time_sum: 0.0,
                    time_max: 0.0,
                    parts: 0,
                })
                .collect(),
            buffers: m
                .buffer_capacities
                .iter()
                .map(|_| BufferState {
                    parts: VecDeque::new(),
                    area: 0.0,
                    last_change: 0.0,
                    max: 0,
                })
                .collect(),
            agent_busy: vec![false; m.agents.len()],
            agent_queue: vec![VecDeque::new(); m.agents.len()],
            op_rng,
            route_rng,
            route_counts: BTreeMap::new(),
            op_times: BTreeMap::new(),
            next_part: 0,
            completed: 0,
            departures: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn log(&mut self, kind: EventKind, station: usize, part: u64, agent: Option<usize>) {
        if self.m.record_trace {
            self.trace.push(TraceEvent {
                time: self.now,
                kind,
                station,
                part,
                agent: agent.map(|a| self.m.agents[a].clone()),
            });
        }
    }

    pub(super) fn run(mut self) -> SimReport {
        if !self.m.stations.is_empty() {
            self.feed_first_station();
        }
        while let Some(ev) = self.heap.peek() {
            if ev.time > self.m.horizon {
                break;
            }
            let ev = self.heap.pop().expect("peeked");
            self.now = ev.time;
            self.finish_op(ev.station, ev.agent);
        }
        assert!(
            self.m.stations.is_empty() || !self.heap.is_empty(),
            "flow line stalled before the horizon"
        );
        self.now = self.m.horizon;
        self.report()
    }

    fn feed_first_station(&mut self) {
        let part = Part {
            id: self.next_part,
            entered_station: self.now,
        };
        self.next_part += 1;
        self.enter_station(0, part);
    }

    fn enter_station(&mut self, s: usize, mut part: Part) {
        part.entered_station = self.now;
        self.stations[s].part = Some(part);
        self.stations[s].cursor = 0;
        self.log(EventKind::PartEnter, s, part.id, None);
        self.next_op(s);
    }

    fn next_op(&mut self, s: usize) {
        let m = self.m;
        let cursor = self.stations[s].cursor;
        if cursor == m.stations[s].ops.len() {
            self.finish_station(s);
            return;
        }
        let op = &m.stations[s].ops[cursor];
        let performer = if op.performers.len() == 1 {
            0
        } else {
            let u: f64 = self.route_rng[s][cursor].random();
            let mut acc = 0.0;
            let mut chosen = op.performers.len() - 1;
            for (i, p) in op.performers.iter().enumerate() {
                acc += p.fraction;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            for (i, p) in op.performers.iter().enumerate().skip(1) {
                let e = self
                    .route_counts
                    .entry((op.name.clone(), m.agents[p.agent].clone()))
                    .or_insert((0, 0));
                e.1 += 1;
                if i == chosen {
                    e.0 += 1;
                }
            }
            chosen
        };
        self.stations[s].performer = performer;
        let agent = op.performers[performer].agent;
        if self.agent_busy[agent] {
            self.stations[s].phase = Phase::WaitingAgent;
            self.agent_queue[agent].push_back(s);
        } else {
            self.begin_op(s, agent);
        }
    }

    fn begin_op(&mut self, s: usize, agent: usize) {
        let m = self.m;
        let cursor = self.stations[s].cursor;
        let op = &m.stations[s].ops[cursor];
        let pi = self.stations[s].performer;
        let perf = &op.performers[pi];
        let mut d = perf.model.sample(&mut self.op_rng[s][cursor][pi]);
        if let Some((mult, onset)) = perf.disturbance {
            if onset <= self.now {
                d *= mult;
            }
        }
        let e = self.op_times.entry(op.name.clone()).or_insert((0.0, 0));
        e.0 += d;
        e.1 += 1;
        self.agent_busy[agent] = true;
        self.stations[s].phase = Phase::Working;
        let part = self.stations[s].part.expect("station holds a part").id;
        self.log(EventKind::OpStart, s, part, Some(agent));
        self.seq += 1;
        self.heap.push(Finish {
            time: self.now + d,
            seq: self.seq,
            station: s,
            agent,
        });
    }

    fn finish_op(&mut self, s: usize, agent: usize) {
        let part = self.stations[s].part.expect("station holds a part").id;
        self.log(EventKind::OpFinish, s, part, Some(agent));
        self.agent_busy[agent] = false;
        self.stations[s].cursor += 1;
        if let Some(waiting) = self.agent_queue[agent].pop_front() {
            self.begin_op(waiting, agent);
        }
        self.next_op(s);
    }

    fn finish_station(&mut self, s: usize) {
        let part = self.stations[s].part.expect("station holds a part");
        let st = &mut self.stations[s];
        let t = self.now - part.entered_station;
        st.time_sum += t;
        st.time_max = st.time_max.max(t);
        st.parts += 1;
        self.try_push(s);
    }

    fn touch_buffer(&mut self, b: usize) {
        let buf = &mut self.buffers[b];
        buf.area += buf.parts.len() as f64 * (self.now - buf.last_change);
        buf.last_change = self.now;
    }

    fn try_push(&mut self, s: usize) {
        let part = self.stations[s].part.expect("station holds a part");
        let last = self.m.stations.len() - 1;
        if s == last {
            self.completed += 1;
            self.departures.push(self.now);
            self.log(EventKind::PartDepart, s, part.id, None);
            self.vacate(s);
            return;
        }
        let next_empty = self.stations[s + 1].phase == Phase::Empty;
        if next_empty && self.buffers[s].parts.is_empty() {
            self.vacate(s);
            self.enter_station(s + 1, part);
        } else if self.buffers[s].parts.len() < self.m.buffer_capacities[s] {
            self.touch_buffer(s);
            self.buffers[s].parts.push_back(part);
            let len = self.buffers[s].parts.len();
            self.buffers[s].max = self.buffers[s].max.max(len);
            self.vacate(s);
        } else {
            self.stations[s].phase = Phase::Blocked;
            self.log(EventKind::BufferFull, s, part.id, None);
        }
    }

    /// Empties station `s` and pulls in the next part.
    fn vacate(&mut self, s: usize) {
        self.stations[s].part = None;
        self.stations[s].phase = Phase::Empty;
        if s == 0 {
            self.feed_first_station();
            return;
        }
        let up = s - 1;
        if let Some(part) = {
            self.touch_buffer(up);
            self.buffers[up].parts.pop_front()
        } {
            self.enter_station(s, part);
            if self.stations[up].phase == Phase::Blocked {
                let id = self.stations[up].part.expect("blocked station holds a part").id;
                self.log(EventKind::BufferFree, up, id, None);
                self.try_push(up);
            }
        } else if self.stations[up].phase == Phase::Blocked {
            // Only reachable with zero-capacity buffers.
            self.try_push(up);
        }
    }

    fn report(mut self) -> SimReport {
        for b in 0..self.buffers.len() {
            self.touch_buffer(b);
        }
        let horizon = self.m.horizon;
        let cycle_times: Vec<f64> = self.departures.windows(2).map(|w| w[1] - w[0]).collect();
        let cycle_time_mean = if cycle_times.is_empty() {
            0.0
        } else {
            cycle_times.iter().sum::<f64>() / cycle_times.len() as f64
        };
        let cycle_time_p95 = {
            let mut sorted = cycle_times.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.is_empty() {
                0.0
            } else {
                let rank = (0.95 * sorted.len() as f64).ceil() as usize;
                sorted[rank.max(1) - 1]
            }
        };
        let in_stations = self.stations.iter().filter(|s| s.part.is_some()).count() as u64;
        let in_buffers: u64 = self.buffers.iter().map(|b| b.parts.len() as u64).sum();
        let routes = self
            .m
            .routes
            .iter()
            .map(|r| {
                let (routed, total) = self
                    .route_counts
                    .get(&(r.op.clone(), r.recipient.clone()))
                    .copied()
                    .unwrap_or((0, 0));
                RouteStats {
                    op: r.op.clone(),
                    recipient: r.recipient.clone(),
                    fraction: r.fraction,
                    routed,
                    total,
                }
            })
            .collect();
        SimReport {
            throughput: self.completed.saturating_sub(1),
            completed: self.completed,
            entered: self.next_part,
            wip: in_stations + in_buffers,
            horizon,
            seed: self.m.seed,
            stations: self
                .stations
                .iter()
                .zip(&self.m.stations)
                .map(|(st, ms)| StationStats {
                    agent: self.m.agents[ms.agent].clone(),
                    mean_time: if st.parts > 0 { st.time_sum / st.parts as f64 } else { 0.0 },
                    max_time: st.time_max,
                    parts: st.parts,
                })
                .collect(),
            op_mean_times: self
                .op_times
                .iter()
                .map(|(k, (sum, n))| (k.clone(), sum / *n as f64))
                .collect(),
            buffers: self
                .buffers
                .iter()
                .zip(&self.m.buffer_capacities)
                .map(|(b, &capacity)| BufferStats {
                    capacity,
                    mean_occupancy: b.area / horizon,
                    max_occupancy: b.max,
                })
                .collect(),
            routes,
            cycle_time_mean,
            cycle_time_p95,
            cycle_times,
            trace: self.trace,
        }
    }
}
