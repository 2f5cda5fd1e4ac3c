//! Discrete-event simulation of a [`BpsModel`].
//!
//! Cases arrive by sampling the inter-arrival distribution. Each case plays
//! the token game on its own; activity instances queue FIFO per resource
//! pool and run on the idle member that has been free the longest.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::event_log::{Event, EventLog, LogError, Timestamp, Trace, AUTO_RESOURCE};
use crate::parameters::BpsModel;
use crate::process_model::{FlowId, Marking, NodeId, NodeKind};

/// Monday 2020-01-06 00:00:00 UTC.
pub const DEFAULT_START: Timestamp = 1_578_268_800;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("case {0}: no node can fire and the case is not complete")]
    Deadlock(String),
    #[error("case {case_id}: more than {cap} activity instances")]
    Runaway { case_id: String, cap: usize },
    #[error("pool {0:?} has no available hours")]
    NoAvailability(String),
    #[error("trace count must be at least 1")]
    TraceCount,
    #[error("model: {0}")]
    Model(#[from] crate::process_model::ModelError),
    #[error("invalid BPS model: {0}")]
    Parameters(#[from] crate::parameters::ParameterError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DurationMode {
    /// Work pauses outside the pool timetable and resumes in the next window.
    #[default]
    WorkingTime,
    /// Once started, an activity runs to completion regardless of the timetable.
    RunToCompletion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Defaults to the model's trace count.
    pub trace_count: Option<usize>,
    /// Defaults to the model's start timestamp, then [`DEFAULT_START`].
    pub start_timestamp: Option<Timestamp>,
    pub duration_mode: DurationMode,
    pub max_activities_per_case: usize,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            trace_count: None,
            start_timestamp: None,
            duration_mode: DurationMode::default(),
            max_activities_per_case: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLog {
    pub log: EventLog,
    /// Enablement time of every event, indexed like `log.traces()[i].events()[j]`.
    pub enablement: Vec<Vec<Timestamp>>,
}

impl SimulatedLog {
    /// Waiting time (start minus enablement) of every event, in log order.
    pub fn waiting_times(&self) -> Vec<Vec<i64>> {
        self.log
            .traces()
            .iter()
            .zip(&self.enablement)
            .map(|(t, en)| t.events().iter().zip(en).map(|(e, en)| e.start - en).collect())
            .collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed of `seed` for stream `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

fn seconds(x: f64) -> i64 {
    x.round().max(0.0) as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Complete { node: NodeId, resource: usize },
    Arrival,
}

/// Heap key: earliest time, then case arrival order, then activity label.
type Key = Reverse<(Timestamp, usize, String, u64, Kind)>;

struct Case {
    id: String,
    rng: ChaCha8Rng,
    marking: Marking,
    /// Activity nodes queued or running.
    busy: Vec<bool>,
    events: Vec<(Event, Timestamp)>,
    started: usize,
}

struct Item {
    case: usize,
    node: NodeId,
    enabled: Timestamp,
}

struct Pool {
    id: String,
    /// Indices into the global resource table.
    members: Vec<usize>,
    queue: VecDeque<Item>,
}

struct Resource {
    name: String,
    pool: usize,
    free_since: Timestamp,
    busy: bool,
}

struct Engine<'a> {
    bps: &'a BpsModel,
    mode: DurationMode,
    cap: usize,
    heap: BinaryHeap<Key>,
    seq: u64,
    cases: Vec<Case>,
    pools: Vec<Pool>,
    resources: Vec<Resource>,
    /// Pool index per activity node; `None` for AUTO activities.
    node_pool: Vec<Option<usize>>,
    branch_weights: HashMap<NodeId, Vec<(FlowId, f64)>>,
}

impl<'a> Engine<'a> {
    fn new(bps: &'a BpsModel, cfg: &SimConfig) -> Self {
        let model = &bps.model;
        let mut pools = Vec::new();
        let mut resources = Vec::new();
        let mut pool_index = HashMap::new();
        for p in bps.pools.iter().filter(|p| !p.is_auto()) {
            let idx = pools.len();
            pool_index.insert(p.id.as_str(), idx);
            let members = p
                .members
                .iter()
                .map(|m| {
                    resources.push(Resource {
                        name: m.clone(),
                        pool: idx,
                        free_since: Timestamp::MIN,
                        busy: false,
                    });
                    resources.len() - 1
                })
                .collect();
            pools.push(Pool {
                id: p.id.clone(),
                members,
                queue: VecDeque::new(),
            });
        }
        let node_pool = model
            .node_ids()
            .map(|n| {
                model
                    .label(n)
                    .and_then(|l| bps.activity_pool.get(l))
                    .and_then(|p| pool_index.get(p.as_str()).copied())
            })
            .collect();
        let branch_weights = model
            .nodes_of_kind(NodeKind::XorSplit)
            .map(|g| {
                let w = model
                    .outputs(g)
                    .iter()
                    .map(|f| (*f, bps.branching.get(f).copied().unwrap_or(0.0)))
                    .collect();
                (g, w)
            })
            .collect();
        Self {
            bps,
            mode: cfg.duration_mode,
            cap: cfg.max_activities_per_case,
            heap: BinaryHeap::new(),
            seq: 0,
            cases: Vec::new(),
            pools,
            resources,
            node_pool,
            branch_weights,
        }
    }

    fn push(&mut self, time: Timestamp, case: usize, label: &str, kind: Kind) {
        self.seq += 1;
        self.heap.push(Reverse((time, case, label.to_string(), self.seq, kind)));
    }

    fn pick_branch(&mut self, case: usize, gateway: NodeId) -> FlowId {
        let weights = &self.branch_weights[&gateway];
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut u = self.cases[case].rng.random::<f64>() * total;
        for (f, w) in weights {
            if u < *w {
                return *f;
            }
            u -= w;
        }
        weights
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map_or(weights[0].0, |(f, _)| *f)
    }

    /// Fires silent nodes to quiescence, then requests every newly enabled activity.
    fn advance(&mut self, case: usize, now: Timestamp) -> Result<(), SimulationError> {
        let model = &self.bps.model;
        loop {
            let marking = self.cases[case].marking.clone();
            let Some(node) = model
                .candidate_nodes(&marking)
                .into_iter()
                .find(|&n| model.kind(n).is_silent())
            else {
                break;
            };
            let branch = (model.kind(node) == NodeKind::XorSplit).then(|| self.pick_branch(case, node));
            self.cases[case].marking = model.fire(&marking, node, branch)?;
        }
        let marking = self.cases[case].marking.clone();
        let mut touched = Vec::new();
        for node in model.candidate_nodes(&marking) {
            if model.kind(node) != NodeKind::Activity || self.cases[case].busy[node.0] {
                continue;
            }
            let c = &mut self.cases[case];
            c.busy[node.0] = true;
            c.started += 1;
            if c.started > self.cap {
                return Err(SimulationError::Runaway {
                    case_id: c.id.clone(),
                    cap: self.cap,
                });
            }
            match self.node_pool[node.0] {
                None => {
                    let label = model.label(node).expect("activity has a label").to_string();
                    let c = &mut self.cases[case];
                    c.events
                        .push((Event::new(c.id.clone(), &label, AUTO_RESOURCE, now, now)?, now));
                    self.push(
                        now,
                        case,
                        &label,
                        Kind::Complete {
                            node,
                            resource: usize::MAX,
                        },
                    );
                }
                Some(p) => {
                    self.pools[p].queue.push_back(Item {
                        case,
                        node,
                        enabled: now,
                    });
                    touched.push(p);
                }
            }
        }
        for p in touched {
            self.dispatch(p, now)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, pool: usize, now: Timestamp) -> Result<(), SimulationError> {
        while !self.pools[pool].queue.is_empty() {
            let Some(r) = self.pools[pool]
                .members
                .iter()
                .copied()
                .filter(|&r| !self.resources[r].busy)
                .min_by_key(|&r| (self.resources[r].free_since, r))
            else {
                return Ok(());
            };
            let item = self.pools[pool].queue.pop_front().expect("non-empty queue");
            let model = &self.bps.model;
            let label = model.label(item.node).expect("activity has a label").to_string();
            let pool_def = self.bps.pool(&self.pools[pool].id).expect("pool exists");
            let timetable = &pool_def.timetable;
            let start = timetable
                .next_available(now)
                .ok_or_else(|| SimulationError::NoAvailability(pool_def.id.clone()))?;
            let work = seconds(self.bps.durations[&label].sample(&mut self.cases[item.case].rng));
            let end = match self.mode {
                DurationMode::RunToCompletion => start + work,
                DurationMode::WorkingTime => timetable
                    .finish(start, work)
                    .ok_or_else(|| SimulationError::NoAvailability(pool_def.id.clone()))?,
            };
            self.resources[r].busy = true;
            let c = &mut self.cases[item.case];
            c.events.push((
                Event::new(c.id.clone(), &label, &self.resources[r].name, start, end)?,
                item.enabled,
            ));
            self.push(
                end,
                item.case,
                &label,
                Kind::Complete {
                    node: item.node,
                    resource: r,
                },
            );
        }
        Ok(())
    }

    fn run(mut self, cfg: &SimConfig) -> Result<SimulatedLog, SimulationError> {
        let count = cfg.trace_count.unwrap_or(self.bps.trace_count);
        if count == 0 {
            return Err(SimulationError::TraceCount);
        }
        let model = &self.bps.model;
        let mut arrivals = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
        let mut t = cfg
            .start_timestamp
            .or(self.bps.start_timestamp)
            .unwrap_or(DEFAULT_START);
        for k in 0..count {
            if k > 0 {
                t += seconds(self.bps.inter_arrival.sample(&mut arrivals));
            }
            self.cases.push(Case {
                id: (k + 1).to_string(),
                rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, k as u64)),
                marking: model.initial_marking(),
                busy: vec![false; model.nodes().len()],
                events: Vec::new(),
                started: 0,
            });
            self.push(t, k, "", Kind::Arrival);
        }

        while let Some(Reverse((now, case, _, _, kind))) = self.heap.pop() {
            match kind {
                Kind::Arrival => self.advance(case, now)?,
                Kind::Complete { node, resource } => {
                    let c = &mut self.cases[case];
                    c.busy[node.0] = false;
                    c.marking = self.bps.model.fire(&c.marking, node, None)?;
                    self.advance(case, now)?;
                    if resource != usize::MAX {
                        let r = &mut self.resources[resource];
                        r.busy = false;
                        r.free_since = now;
                        let pool = r.pool;
                        self.dispatch(pool, now)?;
                    }
                }
            }
        }

        let mut traces = Vec::with_capacity(count);
        let mut enablement: HashMap<String, Vec<Timestamp>> = HashMap::new();
        for c in self.cases {
            if !c.marking.is_final() || c.events.is_empty() {
                return Err(SimulationError::Deadlock(c.id));
            }
            let mut events = c.events;
            events.sort_by(|(a, _), (b, _)| {
                (a.start, a.end, &a.activity, &a.resource).cmp(&(b.start, b.end, &b.activity, &b.resource))
            });
            let (events, en): (Vec<Event>, Vec<Timestamp>) = events.into_iter().unzip();
            enablement.insert(c.id.clone(), en);
            traces.push(Trace::from_ordered(c.id, events)?);
        }
        let log = EventLog::new(traces)?;
        let enablement = log
            .traces()
            .iter()
            .map(|t| enablement.remove(t.case_id()).unwrap_or_default())
            .collect();
        Ok(SimulatedLog { log, enablement })
    }
}

pub fn simulate(bps: &BpsModel, cfg: &SimConfig) -> Result<SimulatedLog, SimulationError> {
    bps.validate()?;
    Engine::new(bps, cfg).run(cfg)
}

/// One independent simulation per seed, in seed order.
pub fn run_batch(bps: &BpsModel, cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<SimulatedLog>, SimulationError> {
    seeds
        .par_iter()
        .map(|&seed| simulate(bps, &SimConfig { seed, ..cfg.clone() }))
        .collect()
}

/// Per-resource busy intervals of a log, sorted by start.
pub fn resource_intervals(log: &EventLog) -> BTreeMap<String, Vec<(Timestamp, Timestamp)>> {
    let mut out: BTreeMap<String, Vec<(Timestamp, Timestamp)>> = BTreeMap::new();
    for e in log.events().filter(|e| !e.is_auto()) {
        out.entry(e.resource.clone()).or_default().push((e.start, e.end));
    }
    for v in out.values_mut() {
        v.sort();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::write_csv;
    use crate::parameters::fixtures::xor_bps;
    use crate::parameters::{Distribution, Pdf, ResourcePool, Timetable};
    use crate::process_model::fixtures::linear;
    use std::collections::BTreeSet;

    fn pool(id: &str, members: &[&str]) -> ResourcePool {
        ResourcePool {
            id: id.into(),
            members: members.iter().map(|m| m.to_string()).collect::<BTreeSet<_>>(),
            timetable: Timetable::always(),
        }
    }

    fn linear_bps(shared: bool) -> BpsModel {
        let pools = if shared {
            vec![pool("p", &["r"])]
        } else {
            vec![pool("pa", &["ra"]), pool("pb", &["rb"])]
        };
        let (pa, pb) = if shared { ("p", "p") } else { ("pa", "pb") };
        BpsModel {
            model: linear(&["a", "b"]),
            inter_arrival: Distribution::fixed(0.0),
            durations: [
                ("a".to_string(), Distribution::fixed(10.0)),
                ("b".to_string(), Distribution::fixed(20.0)),
            ]
            .into(),
            branching: Default::default(),
            pools,
            activity_pool: [("a".to_string(), pa.to_string()), ("b".to_string(), pb.to_string())].into(),
            trace_count: 1,
            start_timestamp: Some(1000),
        }
    }

    fn spans(log: &EventLog, case: &str) -> Vec<(String, i64, i64)> {
        log.trace(case)
            .unwrap()
            .events()
            .iter()
            .map(|e| (e.activity.clone(), e.start, e.end))
            .collect()
    }

    #[test]
    fn deterministic_linear_schedule() {
        let out = simulate(&linear_bps(false), &SimConfig::new(1)).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(
            spans(&out.log, "1"),
            [("a".into(), 1000, 1010), ("b".into(), 1010, 1030)]
        );
        assert_eq!(out.waiting_times(), vec![vec![0, 0]]);
    }

    #[test]
    fn shared_resource_queues_fifo_by_enablement() {
        let mut bps = linear_bps(true);
        bps.trace_count = 2;
        let out = simulate(&bps, &SimConfig::new(1)).unwrap();
        // hand-run FIFO queue on the single resource:
        // t=1000 queue [1a, 2a]; 1a runs to 1010; queue [2a, 1b]
        // 2a runs 1010-1020; queue [1b, 2b]; 1b 1020-1040; 2b 1040-1060
        assert_eq!(
            spans(&out.log, "1"),
            [("a".into(), 1000, 1010), ("b".into(), 1020, 1040)]
        );
        assert_eq!(
            spans(&out.log, "2"),
            [("a".into(), 1010, 1020), ("b".into(), 1040, 1060)]
        );
        let waits = out.waiting_times();
        let idx = |c: &str| out.log.traces().iter().position(|t| t.case_id() == c).unwrap();
        assert_eq!(waits[idx("1")], [0, 10]);
        assert_eq!(waits[idx("2")], [10, 20]);
    }

    #[test]
    fn trace_count_override() {
        let mut bps = linear_bps(false);
        bps.inter_arrival = Distribution::exact(Pdf::Exponential { mean: 60.0 });
        let cfg = SimConfig {
            trace_count: Some(608),
            ..SimConfig::new(3)
        };
        assert_eq!(simulate(&bps, &cfg).unwrap().log.len(), 608);
    }

    fn csv_bytes(log: &EventLog) -> Vec<u8> {
        let mut buf = Vec::new();
        write_csv(log, &mut buf).unwrap();
        buf
    }

    #[test]
    fn same_seed_same_bytes_different_seed_differs() {
        let bps = xor_bps();
        let a = simulate(&bps, &SimConfig::new(42)).unwrap();
        let b = simulate(&bps, &SimConfig::new(42)).unwrap();
        let c = simulate(&bps, &SimConfig::new(43)).unwrap();
        assert_eq!(csv_bytes(&a.log), csv_bytes(&b.log));
        assert_ne!(csv_bytes(&a.log), csv_bytes(&c.log));
        let batch = run_batch(&bps, &SimConfig::new(0), &[42, 43]).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(csv_bytes(&batch[0].log), csv_bytes(&a.log));
    }

    #[test]
    fn earlier_cases_do_not_depend_on_trace_count() {
        let bps = xor_bps();
        let short = simulate(
            &bps,
            &SimConfig {
                trace_count: Some(1),
                ..SimConfig::new(5)
            },
        )
        .unwrap();
        let long = simulate(
            &bps,
            &SimConfig {
                trace_count: Some(20),
                ..SimConfig::new(5)
            },
        )
        .unwrap();
        let first = |l: &SimulatedLog| {
            l.log
                .trace("1")
                .unwrap()
                .labels()
                .map(str::to_string)
                .collect::<Vec<_>>()
        };
        assert_eq!(first(&short), first(&long));
    }

    #[test]
    fn branching_frequencies_and_no_overlap() {
        let bps = xor_bps();
        let out = simulate(
            &bps,
            &SimConfig {
                trace_count: Some(2000),
                ..SimConfig::new(9)
            },
        )
        .unwrap();
        let with_b = out.log.traces().iter().filter(|t| t.labels().any(|l| l == "b")).count();
        let share = with_b as f64 / 2000.0;
        assert!((share - 0.7).abs() < 0.04, "{share}");
        for (res, iv) in resource_intervals(&out.log) {
            for w in iv.windows(2) {
                assert!(w[0].1 <= w[1].0, "{res} overlaps: {w:?}");
            }
        }
        for (t, en) in out.log.traces().iter().zip(&out.enablement) {
            for (e, en) in t.events().iter().zip(en) {
                assert!(*en <= e.start);
                assert_eq!(e.processing_time(), bps.durations[&e.activity].mean() as i64);
            }
        }
    }

    #[test]
    fn auto_activities_take_no_time_or_resource() {
        let mut bps = linear_bps(false);
        bps.pools.push(pool(AUTO_RESOURCE, &[AUTO_RESOURCE]));
        bps.activity_pool.insert("a".into(), AUTO_RESOURCE.into());
        bps.trace_count = 3;
        let out = simulate(&bps, &SimConfig::new(1)).unwrap();
        for t in out.log.traces() {
            let a = &t.events()[0];
            assert!(a.is_auto());
            assert_eq!(a.start, a.end);
        }
    }

    #[test]
    fn working_time_pauses_outside_timetable() {
        let mut bps = linear_bps(false);
        // Monday 2020-01-06 16:59:55, office hours 9-17 on weekdays
        let start = DEFAULT_START + 16 * 3600 + 59 * 60 + 55;
        bps.start_timestamp = Some(start);
        for p in &mut bps.pools {
            p.timetable = Timetable::weekly(&[0, 1, 2, 3, 4], 9, 17);
        }
        let out = simulate(&bps, &SimConfig::new(1)).unwrap();
        let next_morning = DEFAULT_START + 86_400 + 9 * 3600;
        // 5 s before closing, 5 s the next morning
        assert_eq!(
            spans(&out.log, "1"),
            [
                ("a".into(), start, next_morning + 5),
                ("b".into(), next_morning + 5, next_morning + 25)
            ]
        );
        let rtc = simulate(
            &bps,
            &SimConfig {
                duration_mode: DurationMode::RunToCompletion,
                ..SimConfig::new(1)
            },
        )
        .unwrap();
        assert_eq!(spans(&rtc.log, "1")[0], ("a".into(), start, start + 10));
        // b becomes enabled after hours and must wait for the next window
        assert_eq!(spans(&rtc.log, "1")[1].1, next_morning);
    }

    #[test]
    fn runaway_loops_are_capped() {
        use crate::process_model::{ModelBuilder, NodeKind};
        let mut bld = ModelBuilder::new();
        let s = bld.node(NodeKind::Start, None);
        let j = bld.node(NodeKind::XorJoin, None);
        let a = bld.activity("a");
        let sp = bld.node(NodeKind::XorSplit, None);
        let e = bld.node(NodeKind::End, None);
        bld.flow(s, j);
        bld.flow(j, a);
        bld.flow(a, sp);
        let redo = bld.flow(sp, j);
        let exit = bld.flow(sp, e);
        let model = bld.build().unwrap();
        let bps = BpsModel {
            model,
            inter_arrival: Distribution::fixed(1.0),
            durations: [("a".to_string(), Distribution::fixed(1.0))].into(),
            branching: [(redo, 1.0), (exit, 0.0)].into(),
            pools: vec![pool("p", &["r"])],
            activity_pool: [("a".to_string(), "p".to_string())].into(),
            trace_count: 1,
            start_timestamp: None,
        };
        let cfg = SimConfig {
            max_activities_per_case: 50,
            ..SimConfig::new(0)
        };
        assert!(matches!(
            simulate(&bps, &cfg),
            Err(SimulationError::Runaway { cap: 50, .. })
        ));
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
