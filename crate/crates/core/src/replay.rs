//! Token replay of conformant traces to recover processing, enablement and
//! waiting times plus XOR branch traversal counts.
//!
//! Gateways without a choice fire eagerly before each event. XOR splits
//! pick the branch that keeps the rest of the trace replayable; that is
//! decided against a precomputed set of live (position, marking) states.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::event_log::{EventLog, Timestamp, Trace};
use crate::process_model::{FlowId, Marking, NodeId, NodeKind, ProcessModel};

const STATE_CAP: usize = 200_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("case {case_id:?}: trace does not fit the model")]
    NonConformant { case_id: String },
    #[error("case {case_id:?}: activity {activity:?} at position {index} is not enabled")]
    NotEnabled {
        case_id: String,
        index: usize,
        activity: String,
    },
    #[error("case {case_id:?}: gateway firing did not settle within {cap} steps")]
    Livelock { case_id: String, cap: usize },
    #[error("case {case_id:?}: replay search exceeded {cap} states")]
    StateCap { case_id: String, cap: usize },
}

/// Timing of one replayed event. Times are epoch seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventTiming {
    pub case_id: String,
    /// Position of the event in its trace.
    pub index: usize,
    pub activity: String,
    pub resource: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub processing_time: i64,
    pub enablement_time: Timestamp,
    pub waiting_time: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayResult {
    pub events: Vec<EventTiming>,
    /// Count per XOR split out-flow; every such flow of the model is present.
    pub traversal_frequency: BTreeMap<FlowId, u64>,
    /// Number of times each XOR split fired.
    pub gateway_firings: BTreeMap<NodeId, u64>,
    /// Events whose start preceded the computed enablement.
    pub clamped_waits: usize,
}

impl ReplayResult {
    fn for_model(model: &ProcessModel) -> Self {
        Self {
            traversal_frequency: model.conditional_flows().map(|f| (f, 0)).collect(),
            gateway_firings: model.nodes_of_kind(NodeKind::XorSplit).map(|g| (g, 0)).collect(),
            ..Self::default()
        }
    }

    fn absorb(&mut self, other: ReplayResult) {
        self.events.extend(other.events);
        for (f, c) in other.traversal_frequency {
            *self.traversal_frequency.entry(f).or_default() += c;
        }
        for (g, c) in other.gateway_firings {
            *self.gateway_firings.entry(g).or_default() += c;
        }
        self.clamped_waits += other.clamped_waits;
    }

    /// Writes one CSV row per event.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.events {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// States (position, marking) from which the remaining trace can be
/// replayed to a final marking using only synchronous and silent moves.
fn live_states(
    model: &ProcessModel,
    labels: &[NodeId],
    case_id: &str,
) -> Result<HashSet<(usize, Marking)>, ReplayError> {
    let n = labels.len();
    let mut ids: HashMap<(usize, Marking), usize> = HashMap::new();
    let mut states: Vec<(usize, Marking)> = Vec::new();
    let mut preds: Vec<Vec<usize>> = Vec::new();
    let root = (0, model.initial_marking());
    ids.insert(root.clone(), 0);
    states.push(root);
    preds.push(Vec::new());
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        if states.len() > STATE_CAP {
            return Err(ReplayError::StateCap {
                case_id: case_id.to_string(),
                cap: STATE_CAP,
            });
        }
        let (pos, marking) = states[id].clone();
        for node in model.candidate_nodes(&marking) {
            let kind = model.kind(node);
            let nexts: Vec<(usize, Marking)> = if kind.is_silent() {
                crate::conformance::silent_successors(model, &marking, node)
                    .into_iter()
                    .map(|(_, m)| (pos, m))
                    .collect()
            } else if pos < n && labels[pos] == node {
                model
                    .fire(&marking, node, None)
                    .ok()
                    .map(|m| (pos + 1, m))
                    .into_iter()
                    .collect()
            } else {
                Vec::new()
            };
            for next in nexts {
                let sid = match ids.get(&next) {
                    Some(&sid) => sid,
                    None => {
                        let sid = states.len();
                        ids.insert(next.clone(), sid);
                        states.push(next);
                        preds.push(Vec::new());
                        queue.push_back(sid);
                        sid
                    }
                };
                preds[sid].push(id);
            }
        }
    }
    let mut alive = vec![false; states.len()];
    let mut queue: VecDeque<usize> = (0..states.len())
        .filter(|&i| states[i].0 == n && states[i].1.is_final())
        .collect();
    for &i in &queue {
        alive[i] = true;
    }
    while let Some(id) = queue.pop_front() {
        for &p in &preds[id] {
            if !std::mem::replace(&mut alive[p], true) {
                queue.push_back(p);
            }
        }
    }
    Ok(states
        .into_iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(s, _)| s)
        .collect())
}

/// Fires choice-free silent nodes until only XOR splits (or nothing) remain enabled.
fn settle(model: &ProcessModel, mut marking: Marking, budget: &mut usize) -> Option<Marking> {
    loop {
        let next = model
            .candidate_nodes(&marking)
            .into_iter()
            .find(|&n| model.kind(n).is_silent() && model.kind(n) != NodeKind::XorSplit);
        let Some(node) = next else { return Some(marking) };
        *budget = budget.checked_sub(1)?;
        marking = model.fire(&marking, node, None).ok()?;
    }
}

type Choices = Vec<(NodeId, FlowId)>;

/// Searches XOR decisions from `marking` for a settled marking that enables
/// `target` with a live successor. Quiescent markings are preferred.
fn choose(
    model: &ProcessModel,
    marking: Marking,
    target: NodeId,
    pos: usize,
    live: &HashSet<(usize, Marking)>,
    budget: &mut usize,
) -> Result<Option<(Marking, Choices)>, ()> {
    let accepts = |m: &Marking| {
        model.is_enabled(m, target)
            && model
                .fire(m, target, None)
                .is_ok_and(|after| live.contains(&(pos + 1, after)))
    };
    let start = settle(model, marking, budget).ok_or(())?;
    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, Vec::new())]);
    let mut fallback = None;
    while let Some((m, choices)) = queue.pop_front() {
        let splits: Vec<NodeId> = model
            .candidate_nodes(&m)
            .into_iter()
            .filter(|&n| model.kind(n) == NodeKind::XorSplit)
            .collect();
        if accepts(&m) {
            if splits.is_empty() {
                return Ok(Some((m, choices)));
            }
            fallback.get_or_insert((m.clone(), choices.clone()));
        }
        for g in splits {
            for &f in model.outputs(g) {
                *budget = budget.checked_sub(1).ok_or(())?;
                let Ok(fired) = model.fire(&m, g, Some(f)) else {
                    continue;
                };
                let settled = settle(model, fired, budget).ok_or(())?;
                if seen.insert(settled.clone()) {
                    let mut c = choices.clone();
                    c.push((g, f));
                    queue.push_back((settled, c));
                }
            }
        }
    }
    Ok(fallback)
}

pub fn replay_trace(model: &ProcessModel, trace: &Trace) -> Result<ReplayResult, ReplayError> {
    let case_id = trace.case_id();
    let events = trace.events();
    let mut labels = Vec::with_capacity(events.len());
    for (index, e) in events.iter().enumerate() {
        labels.push(model.activity(&e.activity).ok_or_else(|| ReplayError::NotEnabled {
            case_id: case_id.to_string(),
            index,
            activity: e.activity.clone(),
        })?);
    }
    let live = live_states(model, &labels, case_id)?;
    let mut marking = model.initial_marking();
    if !live.contains(&(0, marking.clone())) {
        return Err(ReplayError::NonConformant {
            case_id: case_id.to_string(),
        });
    }

    let mut result = ReplayResult::for_model(model);
    let cap = model.nodes().len().pow(2).max(16);
    let mut current_time = trace.start();
    let mut pending: HashMap<NodeId, Timestamp> = HashMap::new();
    for (index, e) in events.iter().enumerate() {
        let target = labels[index];
        let mut budget = cap;
        let (settled, choices) = choose(model, marking, target, index, &live, &mut budget)
            .map_err(|_| ReplayError::Livelock {
                case_id: case_id.to_string(),
                cap,
            })?
            .ok_or_else(|| ReplayError::NotEnabled {
                case_id: case_id.to_string(),
                index,
                activity: e.activity.clone(),
            })?;
        for (g, f) in choices {
            *result.gateway_firings.entry(g).or_default() += 1;
            *result.traversal_frequency.entry(f).or_default() += 1;
        }
        for node in model.candidate_nodes(&settled) {
            if model.kind(node) == NodeKind::Activity {
                pending.entry(node).or_insert(current_time);
            }
        }
        let mut enablement = pending.remove(&target).unwrap_or(current_time);
        if enablement > e.start {
            warn!(
                "case {case_id:?}: {} starts {} s before its enablement; waiting clamped to 0",
                e.activity,
                enablement - e.start
            );
            enablement = e.start;
            result.clamped_waits += 1;
        }
        result.events.push(EventTiming {
            case_id: case_id.to_string(),
            index,
            activity: e.activity.clone(),
            resource: e.resource.clone(),
            start: e.start,
            end: e.end,
            processing_time: e.processing_time(),
            enablement_time: enablement,
            waiting_time: e.start - enablement,
        });
        marking = model
            .fire(&settled, target, None)
            .expect("chosen marking enables the target");
        current_time = e.end;
    }
    Ok(result)
}

/// Replays every trace and folds the results in log order.
pub fn replay_log(model: &ProcessModel, log: &EventLog) -> Result<ReplayResult, ReplayError> {
    let parts: Vec<ReplayResult> = log
        .traces()
        .par_iter()
        .map(|t| replay_trace(model, t))
        .collect::<Result<_, _>>()?;
    let mut total = ReplayResult::for_model(model);
    for part in parts {
        total.absorb(part);
    }
    Ok(total)
}
