//! Trace alignment against a process model and log repair.
//!
//! Alignments are cost-minimal paths through the product of trace
//! positions and model markings: synchronous moves and silent model steps
//! cost 0, model-only and log-only moves cost 1. Fitness is
//! `1 - cost / (|trace| + shortest complete model run)`.

use std::collections::{HashMap, VecDeque};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{Event, EventLog, LogError, Trace, AUTO_RESOURCE};
use crate::process_model::{FlowId, Marking, NodeId, NodeKind, ProcessModel};

pub const DEFAULT_STATE_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum ConformanceError {
    #[error("model has no complete run")]
    NoCompleteRun,
    #[error("alignment of case {case_id:?} exceeded {cap} search states")]
    StateCap { case_id: String, cap: usize },
    #[error("repair by {0:?} left no traces")]
    NothingLeft(RepairMethod),
    #[error("replacement needs at least one conformant trace")]
    NoConformantTrace,
    #[error("{0} alignments for {1} traces")]
    Mismatch(usize, usize),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    /// Synchronous move: log and model agree.
    Sync,
    /// Move on model only.
    Model,
    /// Move on log only.
    Log,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub kind: MoveKind,
    /// Position of the event in the trace (sync and log moves).
    pub log_event: Option<usize>,
    /// Activity executed by the model (sync and model moves).
    pub model_activity: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub moves: Vec<Move>,
    pub cost: usize,
    pub fitness: f64,
}

impl Alignment {
    pub fn is_perfect(&self) -> bool {
        self.cost == 0
    }

    pub fn count(&self, kind: MoveKind) -> usize {
        self.moves.iter().filter(|m| m.kind == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMethod {
    Removal,
    Replacement,
    Alignment,
}

impl std::str::FromStr for RepairMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "removal" => Ok(Self::Removal),
            "replacement" | "replace" => Ok(Self::Replacement),
            "alignment" | "repair" => Ok(Self::Alignment),
            other => Err(format!("unknown repair method {other:?}")),
        }
    }
}

impl std::fmt::Display for RepairMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Removal => "removal",
            Self::Replacement => "replacement",
            Self::Alignment => "alignment",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Step {
    Silent(NodeId, Option<FlowId>),
    Sync(NodeId),
    Model(NodeId),
    Log,
}

/// Successor markings of one silent node, one per XOR branch.
pub(crate) fn silent_successors(
    model: &ProcessModel,
    marking: &Marking,
    node: NodeId,
) -> Vec<(Option<FlowId>, Marking)> {
    let branches: Vec<Option<FlowId>> = if model.kind(node) == NodeKind::XorSplit {
        model.outputs(node).iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    branches
        .into_iter()
        .filter_map(|b| model.fire(marking, node, b).ok().map(|m| (b, m)))
        .collect()
}

#[derive(Default)]
struct Arena {
    ids: HashMap<(usize, Marking), usize>,
    states: Vec<(usize, Marking)>,
    dist: Vec<usize>,
    pred: Vec<Option<(usize, Step)>>,
    done: Vec<bool>,
}

impl Arena {
    fn intern(&mut self, state: (usize, Marking)) -> usize {
        if let Some(&id) = self.ids.get(&state) {
            return id;
        }
        let id = self.states.len();
        self.ids.insert(state.clone(), id);
        self.states.push(state);
        self.dist.push(usize::MAX);
        self.pred.push(None);
        self.done.push(false);
        id
    }
}

/// Aligns traces against one model.
#[derive(Debug, Clone)]
pub struct Aligner<'m> {
    model: &'m ProcessModel,
    shortest_run: usize,
    state_cap: usize,
}

impl<'m> Aligner<'m> {
    pub fn new(model: &'m ProcessModel, state_cap: usize) -> Result<Self, ConformanceError> {
        let shortest_run = shortest_run_length(model, state_cap)?;
        Ok(Self {
            model,
            shortest_run,
            state_cap,
        })
    }

    pub fn with_state_cap(mut self, state_cap: usize) -> Self {
        self.state_cap = state_cap;
        self
    }

    pub fn shortest_run(&self) -> usize {
        self.shortest_run
    }

    pub fn align(&self, trace: &Trace) -> Result<Alignment, ConformanceError> {
        let model = self.model;
        let labels: Vec<Option<NodeId>> = trace.labels().map(|l| model.activity(l)).collect();
        let n = labels.len();

        let mut arena = Arena::default();
        let root = arena.intern((0, model.initial_marking()));
        arena.dist[root] = 0;
        let mut deque = VecDeque::from([root]);
        let mut goal = None;
        while let Some(id) = deque.pop_front() {
            if arena.done[id] {
                continue;
            }
            arena.done[id] = true;
            let (pos, marking) = arena.states[id].clone();
            if pos == n && marking.is_final() {
                goal = Some(id);
                break;
            }
            if arena.states.len() > self.state_cap {
                return Err(ConformanceError::StateCap {
                    case_id: trace.case_id().to_string(),
                    cap: self.state_cap,
                });
            }
            let d = arena.dist[id];
            let mut successors: Vec<((usize, Marking), Step, usize)> = Vec::new();
            for node in model.candidate_nodes(&marking) {
                if model.kind(node).is_silent() {
                    for (branch, next) in silent_successors(model, &marking, node) {
                        successors.push(((pos, next), Step::Silent(node, branch), 0));
                    }
                } else if model.kind(node) == NodeKind::Activity {
                    let Ok(next) = model.fire(&marking, node, None) else {
                        continue;
                    };
                    if pos < n && labels[pos] == Some(node) {
                        successors.push(((pos + 1, next.clone()), Step::Sync(node), 0));
                    }
                    successors.push(((pos, next), Step::Model(node), 1));
                }
            }
            if pos < n {
                successors.push(((pos + 1, marking.clone()), Step::Log, 1));
            }
            for (state, step, cost) in successors {
                let sid = arena.intern(state);
                let nd = d + cost;
                if nd < arena.dist[sid] {
                    arena.dist[sid] = nd;
                    arena.pred[sid] = Some((id, step));
                    if cost == 0 {
                        deque.push_front(sid);
                    } else {
                        deque.push_back(sid);
                    }
                }
            }
        }
        let goal = goal.ok_or(ConformanceError::NoCompleteRun)?;

        let mut steps = Vec::new();
        let mut cursor = goal;
        while let Some((prev, step)) = arena.pred[cursor] {
            steps.push((arena.states[prev].0, step));
            cursor = prev;
        }
        steps.reverse();
        let moves: Vec<Move> = steps
            .into_iter()
            .filter_map(|(pos, step)| {
                let label = |node: NodeId| model.label(node).map(str::to_string);
                match step {
                    Step::Silent(..) => None,
                    Step::Sync(node) => Some(Move {
                        kind: MoveKind::Sync,
                        log_event: Some(pos),
                        model_activity: label(node),
                    }),
                    Step::Model(node) => Some(Move {
                        kind: MoveKind::Model,
                        log_event: None,
                        model_activity: label(node),
                    }),
                    Step::Log => Some(Move {
                        kind: MoveKind::Log,
                        log_event: Some(pos),
                        model_activity: None,
                    }),
                }
            })
            .collect();
        let cost = arena.dist[goal];
        let worst = n + self.shortest_run;
        let fitness = if worst == 0 {
            1.0
        } else {
            1.0 - cost as f64 / worst as f64
        };
        Ok(Alignment { moves, cost, fitness })
    }

    /// Aligns every trace; results follow the log's trace order.
    pub fn align_log(&self, log: &EventLog) -> Result<Vec<Alignment>, ConformanceError> {
        log.traces().par_iter().map(|t| self.align(t)).collect()
    }
}

/// Number of activities on the shortest path from the initial to the final marking.
pub fn shortest_run_length(model: &ProcessModel, state_cap: usize) -> Result<usize, ConformanceError> {
    let mut dist: HashMap<Marking, usize> = HashMap::new();
    let start = model.initial_marking();
    dist.insert(start.clone(), 0);
    let mut deque = VecDeque::from([(start, 0usize)]);
    while let Some((marking, d)) = deque.pop_front() {
        if dist.get(&marking).is_some_and(|&best| best < d) {
            continue;
        }
        if marking.is_final() {
            return Ok(d);
        }
        if dist.len() > state_cap {
            break;
        }
        for node in model.candidate_nodes(&marking) {
            let (cost, nexts) = if model.kind(node).is_silent() {
                (
                    0,
                    silent_successors(model, &marking, node)
                        .into_iter()
                        .map(|(_, m)| m)
                        .collect(),
                )
            } else {
                (1, model.fire(&marking, node, None).ok().into_iter().collect::<Vec<_>>())
            };
            for next in nexts {
                let nd = d + cost;
                if dist.get(&next).is_none_or(|&best| nd < best) {
                    dist.insert(next.clone(), nd);
                    if cost == 0 {
                        deque.push_front((next, nd));
                    } else {
                        deque.push_back((next, nd));
                    }
                }
            }
        }
    }
    Err(ConformanceError::NoCompleteRun)
}

/// Outcome of a log repair.
#[derive(Debug, Clone)]
pub struct Repair {
    pub log: EventLog,
    /// Traces that did not fit and were dropped, replaced or edited.
    pub non_conformant: usize,
}

/// Repairs `log` using the precomputed `alignments` (one per trace, in log order).
pub fn repair_log(log: &EventLog, alignments: &[Alignment], method: RepairMethod) -> Result<Repair, ConformanceError> {
    if alignments.len() != log.len() {
        return Err(ConformanceError::Mismatch(alignments.len(), log.len()));
    }
    let pairs: Vec<(&Trace, &Alignment)> = log.traces().iter().zip(alignments).collect();
    let non_conformant = pairs.iter().filter(|(_, a)| !a.is_perfect()).count();
    if non_conformant == 0 {
        return Ok(Repair {
            log: log.clone(),
            non_conformant,
        });
    }
    let traces = match method {
        RepairMethod::Removal => pairs
            .iter()
            .filter(|(_, a)| a.is_perfect())
            .map(|(t, _)| (*t).clone())
            .collect::<Vec<_>>(),
        RepairMethod::Replacement => replace_traces(&pairs)?,
        RepairMethod::Alignment => {
            let mut out = Vec::with_capacity(pairs.len());
            for (trace, alignment) in &pairs {
                if alignment.is_perfect() {
                    out.push((*trace).clone());
                } else if let Some(repaired) = apply_alignment(trace, alignment)? {
                    out.push(repaired);
                } else {
                    warn!("alignment repair removed every event of case {:?}", trace.case_id());
                }
            }
            out
        }
    };
    if traces.is_empty() {
        return Err(ConformanceError::NothingLeft(method));
    }
    Ok(Repair {
        log: EventLog::new(traces)?,
        non_conformant,
    })
}

fn replace_traces(pairs: &[(&Trace, &Alignment)]) -> Result<Vec<Trace>, ConformanceError> {
    let mut symbols: HashMap<String, u32> = HashMap::new();
    let mut encode = |t: &Trace| -> Vec<u32> {
        t.events()
            .iter()
            .map(|e| {
                let next = symbols.len() as u32;
                *symbols.entry(e.activity.clone()).or_insert(next)
            })
            .collect()
    };
    let mut conformant: Vec<(&Trace, Vec<u32>)> = pairs
        .iter()
        .filter(|(_, a)| a.is_perfect())
        .map(|(t, _)| (*t, encode(t)))
        .collect();
    if conformant.is_empty() {
        return Err(ConformanceError::NoConformantTrace);
    }
    conformant.sort_by(|a, b| a.0.case_id().cmp(b.0.case_id()));
    let mut out = Vec::with_capacity(pairs.len());
    for (trace, alignment) in pairs {
        if alignment.is_perfect() {
            out.push((*trace).clone());
            continue;
        }
        let word = encode(trace);
        let mut best: Option<(&Trace, f64)> = None;
        for (candidate, cword) in &conformant {
            let dist = strsim::generic_damerau_levenshtein(&word, cword);
            let sim = 1.0 - dist as f64 / word.len().max(cword.len()) as f64;
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((candidate, sim));
            }
        }
        let (source, _) = best.expect("at least one conformant trace");
        out.push(source.renamed(trace.case_id()));
    }
    Ok(out)
}

/// Log moves drop their event; model moves insert a zero-duration `AUTO`
/// event at the end of the preceding kept event (trace start when first),
/// never later than the next kept event's start.
fn apply_alignment(trace: &Trace, alignment: &Alignment) -> Result<Option<Trace>, ConformanceError> {
    let events = trace.events();
    let mut out: Vec<Event> = Vec::new();
    let mut anchor = trace.start();
    for (i, mv) in alignment.moves.iter().enumerate() {
        match mv.kind {
            MoveKind::Sync => {
                let e = &events[mv.log_event.expect("sync move has an event")];
                anchor = e.end;
                out.push(e.clone());
            }
            MoveKind::Log => {}
            MoveKind::Model => {
                let next_start = alignment.moves[i + 1..]
                    .iter()
                    .find(|m| m.kind == MoveKind::Sync)
                    .and_then(|m| m.log_event)
                    .map(|p| events[p].start);
                let at = next_start.map_or(anchor, |s| anchor.min(s));
                out.push(Event {
                    case_id: trace.case_id().to_string(),
                    activity: mv.model_activity.clone().expect("model move has an activity"),
                    resource: AUTO_RESOURCE.to_string(),
                    start: at,
                    end: at,
                });
                anchor = at;
            }
        }
    }
    if out.is_empty() {
        return Ok(None);
    }
    Ok(Some(Trace::from_ordered(trace.case_id(), out)?))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::{discover_model, DiscoveryParams};
    use crate::process_model::fixtures::{and_block, linear, xor_block};

    fn trace(labels: &[&str]) -> Trace {
        let events = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Event::new("t", *l, "r", i as i64 * 10, i as i64 * 10 + 5).unwrap())
            .collect();
        Trace::from_ordered("t", events).unwrap()
    }

    fn cased(case: &str, labels: &[&str]) -> Trace {
        trace(labels).renamed(case)
    }

    #[test]
    fn perfect_trace_is_all_sync() {
        let m = and_block();
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap();
        for t in [["a", "b", "c", "d"], ["a", "c", "b", "d"]] {
            let a = al.align(&trace(&t)).unwrap();
            assert_eq!(a.cost, 0);
            assert_eq!(a.fitness, 1.0);
            assert!(a.moves.iter().all(|m| m.kind == MoveKind::Sync));
        }
    }

    #[test]
    fn premature_end_costs_model_moves() {
        let labels = ["a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8"];
        let m = linear(&labels);
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap();
        let t = trace(&labels[..3]);
        let a = al.align(&t).unwrap();
        assert_eq!(a.cost, 5);
        assert_eq!(a.count(MoveKind::Model), 5);
        assert!((a.fitness - (1.0 - 5.0 / 11.0)).abs() < 1e-12);
        let names: Vec<String> = t.labels().map(str::to_string).collect();
        assert_eq!(oracle::min_cost(&m, &names), 5);
    }

    #[test]
    fn missing_suffix_single_model_move() {
        let m = linear(&["a", "b"]);
        let a = Aligner::new(&m, DEFAULT_STATE_CAP)
            .unwrap()
            .align(&trace(&["a"]))
            .unwrap();
        assert_eq!(a.cost, 1);
        assert!((a.fitness - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn log_moves_for_foreign_events() {
        let m = xor_block();
        let a = Aligner::new(&m, DEFAULT_STATE_CAP)
            .unwrap()
            .align(&trace(&["a", "x", "b", "d"]))
            .unwrap();
        assert_eq!(a.cost, 1);
        assert_eq!(a.count(MoveKind::Log), 1);
        assert_eq!(a.moves[1].log_event, Some(1));
    }

    #[test]
    fn state_cap_is_enforced() {
        let m = and_block();
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap().with_state_cap(3);
        assert!(matches!(
            al.align(&trace(&["d", "c", "b", "a"])),
            Err(ConformanceError::StateCap { .. })
        ));
    }

    fn noisy_log() -> (EventLog, ProcessModel) {
        let m = xor_block();
        let mut traces = Vec::new();
        for i in 0..10 {
            let labels: &[&str] = match i {
                0..=3 => &["a", "b", "d"],
                4..=6 => &["a", "c", "d"],
                7 => &["a", "d"],
                8 => &["a", "b", "c", "d"],
                _ => &["b", "d"],
            };
            traces.push(cased(&format!("{i:02}"), labels));
        }
        (EventLog::new(traces).unwrap(), m)
    }

    #[test]
    fn removal_keeps_only_conformant() {
        let (log, m) = noisy_log();
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap().align_log(&log).unwrap();
        let repair = repair_log(&log, &al, RepairMethod::Removal).unwrap();
        assert_eq!(repair.non_conformant, 3);
        assert_eq!(repair.log.len(), 7);
        for t in repair.log.traces() {
            assert!(log.traces().contains(t));
        }
    }

    #[test]
    fn replacement_copies_most_similar_with_lowest_case_tie_break() {
        let (log, m) = noisy_log();
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap().align_log(&log).unwrap();
        let repair = repair_log(&log, &al, RepairMethod::Replacement).unwrap();
        assert_eq!(repair.log.len(), log.len());
        // "a d" is equally close to "a b d" and "a c d"; case 00 wins
        let replaced = repair.log.trace("07").unwrap();
        assert_eq!(replaced.labels().collect::<Vec<_>>(), ["a", "b", "d"]);
        assert_eq!(replaced.events()[0].start, log.trace("00").unwrap().events()[0].start);
        assert!(replaced.events().iter().all(|e| e.case_id == "07"));
    }

    #[test]
    fn alignment_repair_inserts_auto_events() {
        let (log, m) = noisy_log();
        let aligner = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap();
        let al = aligner.align_log(&log).unwrap();
        let repair = repair_log(&log, &al, RepairMethod::Alignment).unwrap();
        assert_eq!(repair.log.len(), log.len());
        let fixed = repair.log.trace("07").unwrap();
        let auto: Vec<_> = fixed.events().iter().filter(|e| e.is_auto()).collect();
        assert_eq!(auto.len(), 1);
        assert_eq!(auto[0].processing_time(), 0);
        // anchored at the end of the preceding "a"
        assert_eq!(auto[0].start, fixed.events()[0].end);
        for t in repair.log.traces() {
            assert!(aligner.align(t).unwrap().is_perfect(), "{:?}", t.case_id());
        }
    }

    #[test]
    fn conformant_log_is_a_fixed_point() {
        let m = xor_block();
        let log = EventLog::new(vec![cased("1", &["a", "b", "d"]), cased("2", &["a", "c", "d"])]).unwrap();
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap().align_log(&log).unwrap();
        for method in [
            RepairMethod::Removal,
            RepairMethod::Replacement,
            RepairMethod::Alignment,
        ] {
            assert_eq!(repair_log(&log, &al, method).unwrap().log, log);
        }
    }

    #[test]
    fn repair_errors() {
        let m = linear(&["a", "b"]);
        let log = EventLog::new(vec![cased("1", &["b"]), cased("2", &["a"])]).unwrap();
        let al = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap().align_log(&log).unwrap();
        assert!(matches!(
            repair_log(&log, &al, RepairMethod::Removal),
            Err(ConformanceError::NothingLeft(RepairMethod::Removal))
        ));
        assert!(matches!(
            repair_log(&log, &al, RepairMethod::Replacement),
            Err(ConformanceError::NoConformantTrace)
        ));
    }

    #[test]
    fn matches_exhaustive_oracle_on_small_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let alphabet = ["a", "b", "c", "d", "e", "f"];
        for round in 0..40 {
            let variants: Vec<String> = (0..4)
                .map(|_| {
                    let len = rng.random_range(1..=5);
                    (0..len)
                        .map(|_| alphabet[rng.random_range(0..4 + round % 3)])
                        .collect::<Vec<_>>()
                        .join("")
                })
                .collect();
            let traces: Vec<Trace> = variants
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let labels: Vec<String> = v.chars().map(|c| c.to_string()).collect();
                    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                    cased(&i.to_string(), &refs)
                })
                .collect();
            let log = EventLog::new(traces).unwrap();
            let params = DiscoveryParams::new(rng.random(), rng.random()).unwrap();
            let m = discover_model(&log, &params).unwrap();
            if m.activity_labels().count() > 6 {
                continue;
            }
            let aligner = Aligner::new(&m, DEFAULT_STATE_CAP).unwrap();
            let probe_len = rng.random_range(1..=6);
            let probe: Vec<String> = (0..probe_len)
                .map(|_| alphabet[rng.random_range(0..6)].to_string())
                .collect();
            let refs: Vec<&str> = probe.iter().map(String::as_str).collect();
            let got = aligner.align(&trace(&refs)).unwrap();
            assert_eq!(got.cost, oracle::min_cost(&m, &probe), "model {m:?} trace {probe:?}");
            let logged: Vec<usize> = got.moves.iter().filter_map(|mv| mv.log_event).collect();
            assert_eq!(logged, (0..probe.len()).collect::<Vec<_>>());
            assert_eq!(got.cost, got.moves.len() - got.count(MoveKind::Sync));
        }
    }
}
