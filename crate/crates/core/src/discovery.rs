//! Model discovery from a directly-follows graph.
//!
//! Two knobs steer the result:
//! - `epsilon` (parallelism threshold): a mutual pair `a -> b`, `b -> a` is
//!   concurrent when `min(df) / max(df) >= epsilon`. Lower values admit more
//!   concurrency.
//! - `eta` (frequency percentile): for every source node, outgoing edges
//!   whose count is below the nearest-rank `eta`-quantile of that node's
//!   outgoing counts are pruned.
//!
//! The filtered graph is turned into a block-structured model by recursive
//! cuts (concurrent, exclusive, sequence, loop, with a flower fallback), so
//! every discovered model is safe and sound by construction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::event_log::EventLog;
use crate::process_model::{ModelBuilder, ModelError, NodeId, NodeKind, ProcessModel};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("parameter {name} = {value} is outside [0, 1]")]
    Parameter { name: &'static str, value: f64 },
    #[error("cannot discover a model from an empty log")]
    EmptyLog,
    #[error("discovered model is invalid: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryParams {
    pub epsilon: f64,
    pub eta: f64,
}

impl DiscoveryParams {
    pub fn new(epsilon: f64, eta: f64) -> Result<Self, DiscoveryError> {
        for (name, value) in [("epsilon", epsilon), ("eta", eta)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DiscoveryError::Parameter { name, value });
            }
        }
        Ok(Self { epsilon, eta })
    }
}

/// Endpoint of a directly-follows edge. `Start` and `End` are the virtual
/// markers before the first and after the last event of every trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DfgNode {
    Start,
    Activity(usize),
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectlyFollowsGraph {
    activities: Vec<String>,
    edges: BTreeMap<(DfgNode, DfgNode), usize>,
}

impl DirectlyFollowsGraph {
    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.activities.binary_search_by(|a| a.as_str().cmp(label)).ok()
    }

    pub fn edges(&self) -> &BTreeMap<(DfgNode, DfgNode), usize> {
        &self.edges
    }

    /// How often `b` directly follows `a`; zero if never or unknown labels.
    pub fn count(&self, a: &str, b: &str) -> usize {
        match (self.index(a), self.index(b)) {
            (Some(x), Some(y)) => self.edge(DfgNode::Activity(x), DfgNode::Activity(y)),
            _ => 0,
        }
    }

    pub fn start_count(&self, a: &str) -> usize {
        self.index(a)
            .map_or(0, |x| self.edge(DfgNode::Start, DfgNode::Activity(x)))
    }

    pub fn end_count(&self, a: &str) -> usize {
        self.index(a)
            .map_or(0, |x| self.edge(DfgNode::Activity(x), DfgNode::End))
    }

    fn edge(&self, a: DfgNode, b: DfgNode) -> usize {
        self.edges.get(&(a, b)).copied().unwrap_or(0)
    }
}

pub fn build_dfg(log: &EventLog) -> DirectlyFollowsGraph {
    let activities: Vec<String> = log.activities().into_iter().map(str::to_string).collect();
    let index = |label: &str| activities.binary_search_by(|a| a.as_str().cmp(label)).unwrap();
    let mut edges = BTreeMap::new();
    for trace in log.traces() {
        let mut prev = DfgNode::Start;
        for label in trace.labels() {
            let node = DfgNode::Activity(index(label));
            *edges.entry((prev, node)).or_insert(0) += 1;
            prev = node;
        }
        *edges.entry((prev, DfgNode::End)).or_insert(0) += 1;
    }
    DirectlyFollowsGraph { activities, edges }
}

/// Mutual pairs `(a, b)`, `a < b`, whose balance `min/max` reaches `epsilon`.
pub fn concurrent_pairs(dfg: &DirectlyFollowsGraph, epsilon: f64) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for (&(x, y), &forward) in &dfg.edges {
        if let (DfgNode::Activity(a), DfgNode::Activity(b)) = (x, y) {
            if a < b {
                let backward = dfg.edge(y, x);
                if backward > 0 {
                    let ratio = forward.min(backward) as f64 / forward.max(backward) as f64;
                    if ratio >= epsilon {
                        pairs.insert((a, b));
                    }
                }
            }
        }
    }
    pairs
}

/// Nearest-rank quantile of a non-empty sample.
pub fn nearest_rank(values: &[usize], q: f64) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

type EdgeMap = BTreeMap<(DfgNode, DfgNode), usize>;

/// Frequency filtering of `edges`, keeping every retained activity on a
/// path from start to end. Activities no longer reachable from the start
/// marker are dropped with their edges.
fn filter_edges(edges: &EdgeMap, eta: f64) -> EdgeMap {
    let mut by_source: BTreeMap<DfgNode, Vec<usize>> = BTreeMap::new();
    for (&(src, _), &count) in edges {
        by_source.entry(src).or_default().push(count);
    }
    let thresholds: BTreeMap<DfgNode, usize> = by_source
        .into_iter()
        .map(|(src, counts)| (src, nearest_rank(&counts, eta)))
        .collect();
    let mut kept: EdgeMap = edges
        .iter()
        .filter(|(&(src, _), &count)| count >= thresholds[&src])
        .map(|(&k, &v)| (k, v))
        .collect();

    loop {
        let reachable = reach_from(&kept, DfgNode::Start, false);
        let coreachable = reach_from(&kept, DfgNode::End, true);
        let dead: Vec<DfgNode> = reachable
            .iter()
            .copied()
            .filter(|n| matches!(n, DfgNode::Activity(_)) && !coreachable.contains(n))
            .collect();
        let Some(&node) = dead.first() else {
            kept.retain(|(a, b), _| reachable.contains(a) && reachable.contains(b));
            return kept;
        };
        let best = edges
            .iter()
            .filter(|(&(src, dst), _)| src == node && !kept.contains_key(&(src, dst)))
            .max_by(|(ka, ca), (kb, cb)| ca.cmp(cb).then(kb.cmp(ka)));
        match best {
            Some((&key, &count)) => {
                kept.insert(key, count);
            }
            None => {
                kept.insert((node, DfgNode::End), 0);
            }
        }
    }
}

fn reach_from(edges: &EdgeMap, root: DfgNode, backward: bool) -> BTreeSet<DfgNode> {
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        for &(a, b) in edges.keys() {
            let (from, to) = if backward { (b, a) } else { (a, b) };
            if from == node && seen.insert(to) {
                queue.push_back(to);
            }
        }
    }
    seen
}

/// Block-structured intermediate form.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Block {
    Activity(usize),
    Tau,
    Seq(Vec<Block>),
    Xor(Vec<Block>),
    And(Vec<Block>),
    Loop(Box<Block>, Box<Block>),
}

impl Block {
    fn optional(self) -> Block {
        match self {
            Block::Xor(mut children) => {
                if !children.contains(&Block::Tau) {
                    children.push(Block::Tau);
                }
                Block::Xor(children)
            }
            Block::Tau => Block::Tau,
            other => Block::Xor(vec![other, Block::Tau]),
        }
    }
}

/// A sub-graph over a subset of activities, with entry and exit counts.
#[derive(Debug, Clone)]
struct Projection {
    acts: BTreeSet<usize>,
    edges: BTreeMap<(usize, usize), usize>,
    starts: BTreeMap<usize, usize>,
    ends: BTreeMap<usize, usize>,
}

impl Projection {
    fn root(edges: &EdgeMap) -> Self {
        let mut p = Projection {
            acts: BTreeSet::new(),
            edges: BTreeMap::new(),
            starts: BTreeMap::new(),
            ends: BTreeMap::new(),
        };
        for (&(a, b), &count) in edges {
            match (a, b) {
                (DfgNode::Start, DfgNode::Activity(x)) => {
                    p.acts.insert(x);
                    *p.starts.entry(x).or_insert(0) += count.max(1);
                }
                (DfgNode::Activity(x), DfgNode::End) => {
                    p.acts.insert(x);
                    *p.ends.entry(x).or_insert(0) += count.max(1);
                }
                (DfgNode::Activity(x), DfgNode::Activity(y)) => {
                    p.acts.insert(x);
                    p.acts.insert(y);
                    p.edges.insert((x, y), count.max(1));
                }
                _ => {}
            }
        }
        p
    }

    /// Restriction to `subset`; edges crossing the boundary become entries
    /// and exits.
    fn project(&self, subset: &BTreeSet<usize>) -> Self {
        let mut p = Projection {
            acts: subset.clone(),
            edges: BTreeMap::new(),
            starts: BTreeMap::new(),
            ends: BTreeMap::new(),
        };
        for (&a, &c) in &self.starts {
            if subset.contains(&a) {
                *p.starts.entry(a).or_insert(0) += c;
            }
        }
        for (&a, &c) in &self.ends {
            if subset.contains(&a) {
                *p.ends.entry(a).or_insert(0) += c;
            }
        }
        for (&(a, b), &c) in &self.edges {
            match (subset.contains(&a), subset.contains(&b)) {
                (true, true) => {
                    p.edges.insert((a, b), c);
                }
                (false, true) => *p.starts.entry(b).or_insert(0) += c,
                (true, false) => *p.ends.entry(a).or_insert(0) += c,
                (false, false) => {}
            }
        }
        p.fill_missing_boundaries();
        p
    }

    fn fill_missing_boundaries(&mut self) {
        if self.starts.is_empty() {
            self.starts = self.acts.iter().map(|&a| (a, 1)).collect();
        }
        if self.ends.is_empty() {
            self.ends = self.acts.iter().map(|&a| (a, 1)).collect();
        }
    }
}

fn components(nodes: &BTreeSet<usize>, linked: impl Fn(usize, usize) -> bool) -> Vec<BTreeSet<usize>> {
    let mut out: Vec<BTreeSet<usize>> = Vec::new();
    let mut assigned = BTreeSet::new();
    for &root in nodes {
        if assigned.contains(&root) {
            continue;
        }
        let mut comp = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        assigned.insert(root);
        while let Some(n) = queue.pop_front() {
            for &m in nodes {
                if !assigned.contains(&m) && (linked(n, m) || linked(m, n)) {
                    assigned.insert(m);
                    comp.insert(m);
                    queue.push_back(m);
                }
            }
        }
        out.push(comp);
    }
    out
}

struct Miner<'a> {
    parallel: &'a BTreeSet<(usize, usize)>,
}

impl Miner<'_> {
    fn is_parallel(&self, a: usize, b: usize) -> bool {
        self.parallel.contains(&(a.min(b), a.max(b)))
    }

    fn mine(&self, p: &Projection) -> Block {
        if p.acts.len() == 1 {
            let a = *p.acts.first().unwrap();
            return if p.edges.contains_key(&(a, a)) {
                Block::Loop(Box::new(Block::Activity(a)), Box::new(Block::Tau))
            } else {
                Block::Activity(a)
            };
        }
        if let Some(block) = self.parallel_cut(p) {
            return block;
        }
        if let Some(block) = self.xor_cut(p) {
            return block;
        }
        if let Some(block) = self.sequence_cut(p) {
            return block;
        }
        if let Some(block) = self.loop_cut(p) {
            return block;
        }
        let children = p.acts.iter().map(|&a| Block::Activity(a)).collect();
        Block::Loop(Box::new(Block::Xor(children)), Box::new(Block::Tau))
    }

    fn parallel_cut(&self, p: &Projection) -> Option<Block> {
        let comps = components(&p.acts, |a, b| a != b && !self.is_parallel(a, b));
        if comps.len() < 2 {
            return None;
        }
        let (mut good, bad): (Vec<_>, Vec<_>) = comps
            .into_iter()
            .partition(|c| c.iter().any(|a| p.starts.contains_key(a)) && c.iter().any(|a| p.ends.contains_key(a)));
        if good.is_empty() {
            return None;
        }
        for c in bad {
            good[0].extend(c);
        }
        if good.len() < 2 {
            return None;
        }
        Some(Block::And(good.iter().map(|c| self.mine(&p.project(c))).collect()))
    }

    fn xor_cut(&self, p: &Projection) -> Option<Block> {
        let comps = components(&p.acts, |a, b| p.edges.contains_key(&(a, b)));
        if comps.len() < 2 {
            return None;
        }
        Some(Block::Xor(comps.iter().map(|c| self.mine(&p.project(c))).collect()))
    }

    fn sequence_cut(&self, p: &Projection) -> Option<Block> {
        let acts: Vec<usize> = p.acts.iter().copied().collect();
        let pos: BTreeMap<usize, usize> = acts.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let n = acts.len();
        let mut reach = vec![vec![false; n]; n];
        for &(a, b) in p.edges.keys() {
            reach[pos[&a]][pos[&b]] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        // merge pairs that are mutually reachable or mutually unreachable
        let mut group: Vec<usize> = (0..n).collect();
        fn find(g: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while g[r] != r {
                r = g[r];
            }
            g[x] = r;
            r
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if reach[i][j] == reach[j][i] {
                    let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                    group[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let mut parts: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut group, i);
            parts.entry(root).or_default().insert(i);
        }
        if parts.len() < 2 {
            return None;
        }
        let mut parts: Vec<BTreeSet<usize>> = parts.into_values().collect();
        let reaches =
            |from: &BTreeSet<usize>, to: &BTreeSet<usize>| from.iter().all(|&i| to.iter().all(|&j| reach[i][j]));
        parts.sort_by_key(|part| std::cmp::Reverse(parts_reached(part, &reach)));
        for i in 0..parts.len() {
            for j in (i + 1)..parts.len() {
                if !reaches(&parts[i], &parts[j]) {
                    return None;
                }
            }
        }
        let parts: Vec<BTreeSet<usize>> = parts
            .into_iter()
            .map(|part| part.into_iter().map(|i| acts[i]).collect())
            .collect();
        let index_of = |a: usize| parts.iter().position(|part| part.contains(&a)).unwrap();

        let k = parts.len();
        let mut skippable = vec![false; k];
        for &a in p.starts.keys() {
            (0..index_of(a)).for_each(|i| skippable[i] = true);
        }
        for &a in p.ends.keys() {
            ((index_of(a) + 1)..k).for_each(|i| skippable[i] = true);
        }
        for &(a, b) in p.edges.keys() {
            let (i, j) = (index_of(a), index_of(b));
            ((i + 1)..j.max(i + 1)).for_each(|m| skippable[m] = true);
        }
        let children = parts
            .iter()
            .zip(skippable)
            .map(|(part, skip)| {
                let block = self.mine(&p.project(part));
                if skip {
                    block.optional()
                } else {
                    block
                }
            })
            .collect();
        Some(Block::Seq(children))
    }

    fn loop_cut(&self, p: &Projection) -> Option<Block> {
        let starts: BTreeSet<usize> = p.starts.keys().copied().collect();
        let ends: BTreeSet<usize> = p.ends.keys().copied().collect();
        let mut body: BTreeSet<usize> = starts.union(&ends).copied().collect();
        let rest: BTreeSet<usize> = p.acts.difference(&body).copied().collect();
        let mut redo: BTreeSet<usize> = BTreeSet::new();
        for comp in components(&rest, |a, b| p.edges.contains_key(&(a, b))) {
            let mut entered = false;
            let mut exited = false;
            let mut valid = true;
            for &(a, b) in p.edges.keys() {
                if body.contains(&a) && comp.contains(&b) {
                    entered = true;
                    valid &= ends.contains(&a);
                }
                if comp.contains(&a) && body.contains(&b) {
                    exited = true;
                    valid &= starts.contains(&b);
                }
            }
            if valid && entered && exited {
                redo.extend(comp);
            } else {
                body.extend(comp);
            }
        }
        let back_edge = |a: usize, b: usize| ends.contains(&a) && starts.contains(&b);
        let direct_repeat = p
            .edges
            .keys()
            .any(|&(a, b)| back_edge(a, b) && body.contains(&a) && body.contains(&b));
        if redo.is_empty() && !direct_repeat {
            return None;
        }

        let mut do_part = p.project(&body);
        do_part.edges.retain(|&(a, b), _| !back_edge(a, b));
        do_part.starts = p.starts.clone();
        do_part.ends = p.ends.clone();
        let do_block = self.mine(&do_part);

        let redo_block = if redo.is_empty() {
            Block::Tau
        } else {
            let block = self.mine(&p.project(&redo));
            if direct_repeat {
                block.optional()
            } else {
                block
            }
        };
        Some(Block::Loop(Box::new(do_block), Box::new(redo_block)))
    }
}

fn parts_reached(part: &BTreeSet<usize>, reach: &[Vec<bool>]) -> usize {
    part.iter().map(|&i| reach[i].iter().filter(|r| **r).count()).sum()
}

struct Emitter<'a> {
    builder: ModelBuilder,
    labels: &'a [String],
}

impl Emitter<'_> {
    /// Emits a non-silent block; returns its entry and exit nodes.
    fn emit(&mut self, block: &Block) -> (NodeId, NodeId) {
        match block {
            Block::Activity(a) => {
                let n = self.builder.activity(&self.labels[*a]);
                (n, n)
            }
            Block::Tau => unreachable!("silent blocks are emitted as plain flows"),
            Block::Seq(children) => {
                let mut iter = children.iter().filter(|c| **c != Block::Tau);
                let first = iter.next().expect("sequence has a visible child");
                let (entry, mut exit) = self.emit(first);
                for child in iter {
                    let (e, x) = self.emit(child);
                    self.builder.flow(exit, e);
                    exit = x;
                }
                (entry, exit)
            }
            Block::Xor(children) | Block::And(children) => {
                let (split_kind, join_kind) = if matches!(block, Block::Xor(_)) {
                    (NodeKind::XorSplit, NodeKind::XorJoin)
                } else {
                    (NodeKind::AndSplit, NodeKind::AndJoin)
                };
                let visible: Vec<&Block> = children.iter().filter(|c| **c != Block::Tau).collect();
                let has_tau = visible.len() < children.len();
                if visible.len() == 1 && !has_tau {
                    return self.emit(visible[0]);
                }
                let split = self.builder.node(split_kind, None);
                let join = self.builder.node(join_kind, None);
                for child in visible {
                    let (e, x) = self.emit(child);
                    self.builder.flow(split, e);
                    self.builder.flow(x, join);
                }
                if has_tau {
                    self.builder.flow(split, join);
                }
                (split, join)
            }
            Block::Loop(body, redo) => {
                let join = self.builder.node(NodeKind::XorJoin, None);
                let (e, x) = self.emit(body);
                let split = self.builder.node(NodeKind::XorSplit, None);
                self.builder.flow(join, e);
                self.builder.flow(x, split);
                if **redo == Block::Tau {
                    self.builder.flow(split, join);
                } else {
                    let (re, rx) = self.emit(redo);
                    self.builder.flow(split, re);
                    self.builder.flow(rx, join);
                }
                (join, split)
            }
        }
    }
}

pub fn discover_model(log: &EventLog, params: &DiscoveryParams) -> Result<ProcessModel, DiscoveryError> {
    if log.is_empty() {
        return Err(DiscoveryError::EmptyLog);
    }
    let dfg = build_dfg(log);
    let parallel = concurrent_pairs(&dfg, params.epsilon);
    let working: EdgeMap = dfg
        .edges
        .iter()
        .filter(|(&(a, b), _)| match (a, b) {
            (DfgNode::Activity(x), DfgNode::Activity(y)) => x == y || !parallel.contains(&(x.min(y), x.max(y))),
            _ => true,
        })
        .map(|(&k, &v)| (k, v))
        .collect();
    let filtered = filter_edges(&working, params.eta);
    let root = Projection::root(&filtered);
    let block = Miner { parallel: &parallel }.mine(&root);

    let mut emitter = Emitter {
        builder: ModelBuilder::new(),
        labels: &dfg.activities,
    };
    let start = emitter.builder.node(NodeKind::Start, None);
    let (entry, exit) = emitter.emit(&block);
    let end = emitter.builder.node(NodeKind::End, None);
    emitter.builder.flow(start, entry);
    emitter.builder.flow(exit, end);
    Ok(emitter.builder.build()?)
}
