//! Gateway-structured process models with boolean token markings.
//!
//! A model is a graph of start/end events, activities and XOR/AND
//! split/join gateways connected by sequence flows. A [`Marking`] maps
//! every flow to a boolean; models are expected to be safe, so producing
//! a token on a flow that already carries one is reported as a soundness
//! violation.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    End,
    Activity,
    XorSplit,
    XorJoin,
    AndSplit,
    AndJoin,
}

impl NodeKind {
    pub fn is_gateway(self) -> bool {
        matches!(self, Self::XorSplit | Self::XorJoin | Self::AndSplit | Self::AndJoin)
    }

    /// Nodes that fire without producing an event: gateways and end events.
    pub fn is_silent(self) -> bool {
        self.is_gateway() || self == Self::End
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: String,
    pub source: NodeId,
    pub target: NodeId,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("model must have exactly one start event, found {0}")]
    StartCount(usize),
    #[error("model has no end event")]
    NoEnd,
    #[error("node {node} ({kind:?}) has {ins} incoming and {outs} outgoing flows")]
    Degree {
        node: String,
        kind: NodeKind,
        ins: usize,
        outs: usize,
    },
    #[error("activity node {0} has no label")]
    MissingLabel(String),
    #[error("activity label {0:?} is used by more than one node")]
    DuplicateLabel(String),
    #[error("node {0} is not reachable from the start event")]
    Unreachable(String),
    #[error("node {0} cannot reach an end event")]
    DeadEnd(String),
    #[error("duplicate identifier {0:?}")]
    DuplicateId(String),
    #[error("flow {flow} references unknown node {node:?}")]
    UnknownNode { flow: String, node: String },
    #[error("node {0} is not enabled")]
    NotEnabled(String),
    #[error("XOR split {0} fired without a chosen branch")]
    MissingBranch(String),
    #[error("flow {flow} is not an outgoing flow of {node}")]
    InvalidBranch { node: String, flow: String },
    #[error("second token on flow {0}: model is not safe")]
    Unsafe(String),
}

/// Immutable, validated process model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct ProcessModel {
    nodes: Vec<Node>,
    flows: Vec<Flow>,
    inputs: Vec<Vec<FlowId>>,
    outputs: Vec<Vec<FlowId>>,
    start: NodeId,
    by_label: BTreeMap<String, NodeId>,
}

/// Token assignment over the flows of one model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(Vec<bool>);

impl Marking {
    pub fn empty(flows: usize) -> Self {
        Self(vec![false; flows])
    }

    pub fn has_token(&self, flow: FlowId) -> bool {
        self.0[flow.0]
    }

    /// No tokens left: the case has completed.
    pub fn is_final(&self) -> bool {
        self.0.iter().all(|t| !t)
    }

    pub fn marked_flows(&self) -> impl Iterator<Item = FlowId> + '_ {
        self.0.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| FlowId(i))
    }

    pub fn token_count(&self) -> usize {
        self.0.iter().filter(|t| **t).count()
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let marked: Vec<String> = self.marked_flows().map(|fl| fl.0.to_string()).collect();
        write!(f, "{{{}}}", marked.join(","))
    }
}

/// Incremental construction with generated identifiers.
#[derive(Debug, Default)]
pub struct ModelBuilder {
    nodes: Vec<Node>,
    flows: Vec<(NodeId, NodeId)>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, kind: NodeKind, label: Option<&str>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            id: format!("n{}", id.0),
            kind,
            label: label.map(str::to_string),
        });
        id
    }

    pub fn activity(&mut self, label: &str) -> NodeId {
        self.node(NodeKind::Activity, Some(label))
    }

    pub fn flow(&mut self, source: NodeId, target: NodeId) -> FlowId {
        self.flows.push((source, target));
        FlowId(self.flows.len() - 1)
    }

    pub fn build(self) -> Result<ProcessModel, ModelError> {
        let flows = self
            .flows
            .into_iter()
            .enumerate()
            .map(|(i, (source, target))| Flow {
                id: format!("f{i}"),
                source,
                target,
            })
            .collect();
        ProcessModel::new(self.nodes, flows)
    }
}

impl ProcessModel {
    pub fn new(nodes: Vec<Node>, flows: Vec<Flow>) -> Result<Self, ModelError> {
        let mut seen = std::collections::HashSet::new();
        for id in nodes.iter().map(|n| &n.id).chain(flows.iter().map(|f| &f.id)) {
            if !seen.insert(id.as_str()) {
                return Err(ModelError::DuplicateId(id.clone()));
            }
        }
        let mut inputs = vec![Vec::new(); nodes.len()];
        let mut outputs = vec![Vec::new(); nodes.len()];
        for (i, flow) in flows.iter().enumerate() {
            for end in [flow.source, flow.target] {
                if end.0 >= nodes.len() {
                    return Err(ModelError::UnknownNode {
                        flow: flow.id.clone(),
                        node: end.0.to_string(),
                    });
                }
            }
            outputs[flow.source.0].push(FlowId(i));
            inputs[flow.target.0].push(FlowId(i));
        }

        let starts: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].kind == NodeKind::Start).collect();
        if starts.len() != 1 {
            return Err(ModelError::StartCount(starts.len()));
        }
        if !nodes.iter().any(|n| n.kind == NodeKind::End) {
            return Err(ModelError::NoEnd);
        }

        let mut by_label = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            let (ins, outs) = (inputs[i].len(), outputs[i].len());
            let ok = match node.kind {
                NodeKind::Start => ins == 0 && outs == 1,
                NodeKind::End => ins >= 1 && outs == 0,
                NodeKind::Activity => ins == 1 && outs == 1,
                NodeKind::XorSplit | NodeKind::AndSplit => ins == 1 && outs >= 2,
                NodeKind::XorJoin | NodeKind::AndJoin => ins >= 2 && outs == 1,
            };
            if !ok {
                return Err(ModelError::Degree {
                    node: node.id.clone(),
                    kind: node.kind,
                    ins,
                    outs,
                });
            }
            if node.kind == NodeKind::Activity {
                let label = node
                    .label
                    .clone()
                    .filter(|l| !l.is_empty())
                    .ok_or_else(|| ModelError::MissingLabel(node.id.clone()))?;
                if by_label.insert(label.clone(), NodeId(i)).is_some() {
                    return Err(ModelError::DuplicateLabel(label));
                }
            }
        }

        let model = Self {
            nodes,
            flows,
            inputs,
            outputs,
            start: NodeId(starts[0]),
            by_label,
        };
        model.check_connectivity()?;
        Ok(model)
    }

    fn check_connectivity(&self) -> Result<(), ModelError> {
        let n = self.nodes.len();
        let forward = self.sweep(&[self.start], |node| {
            self.outputs[node.0].iter().map(|f| self.flows[f.0].target).collect()
        });
        if let Some(i) = (0..n).find(|&i| !forward[i]) {
            return Err(ModelError::Unreachable(self.nodes[i].id.clone()));
        }
        let ends: Vec<NodeId> = (0..n)
            .filter(|&i| self.nodes[i].kind == NodeKind::End)
            .map(NodeId)
            .collect();
        let backward = self.sweep(&ends, |node| {
            self.inputs[node.0].iter().map(|f| self.flows[f.0].source).collect()
        });
        if let Some(i) = (0..n).find(|&i| !backward[i]) {
            return Err(ModelError::DeadEnd(self.nodes[i].id.clone()));
        }
        Ok(())
    }

    fn sweep(&self, roots: &[NodeId], next: impl Fn(NodeId) -> Vec<NodeId>) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<NodeId> = roots.iter().copied().collect();
        for r in roots {
            seen[r.0] = true;
        }
        while let Some(node) = queue.pop_front() {
            for succ in next(node) {
                if !seen[succ.0] {
                    seen[succ.0] = true;
                    queue.push_back(succ);
                }
            }
        }
        seen
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn flow(&self, id: FlowId) -> &Flow {
        &self.flows[id.0]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0].kind
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn flow_ids(&self) -> impl Iterator<Item = FlowId> {
        (0..self.flows.len()).map(FlowId)
    }

    pub fn inputs(&self, id: NodeId) -> &[FlowId] {
        &self.inputs[id.0]
    }

    pub fn outputs(&self, id: NodeId) -> &[FlowId] {
        &self.outputs[id.0]
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn flow_by_id(&self, id: &str) -> Option<FlowId> {
        self.flows.iter().position(|f| f.id == id).map(FlowId)
    }

    pub fn activity(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes[id.0].label.as_deref()
    }

    /// Activity labels in lexicographic order.
    pub fn activity_labels(&self) -> impl Iterator<Item = &str> {
        self.by_label.keys().map(String::as_str)
    }

    pub fn activity_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.by_label.values().copied()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(move |&n| self.kind(n) == kind)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes_of_kind(kind).count()
    }

    /// Outgoing flows of every XOR split, i.e. the conditional branches.
    pub fn conditional_flows(&self) -> impl Iterator<Item = FlowId> + '_ {
        self.nodes_of_kind(NodeKind::XorSplit)
            .flat_map(move |g| self.outputs[g.0].iter().copied())
    }

    /// Marking with a single token on the start event's outgoing flow.
    pub fn initial_marking(&self) -> Marking {
        let mut marking = Marking::empty(self.flows.len());
        marking.0[self.outputs[self.start.0][0].0] = true;
        marking
    }

    pub fn is_enabled(&self, marking: &Marking, node: NodeId) -> bool {
        let ins = &self.inputs[node.0];
        match self.kind(node) {
            NodeKind::Start => false,
            NodeKind::AndJoin => ins.iter().all(|f| marking.has_token(*f)),
            _ => ins.iter().any(|f| marking.has_token(*f)),
        }
    }

    /// Fires `node`, consuming and producing tokens per its gateway
    /// semantics. XOR splits need `branch` to name one outgoing flow.
    pub fn fire(&self, marking: &Marking, node: NodeId, branch: Option<FlowId>) -> Result<Marking, ModelError> {
        if !self.is_enabled(marking, node) {
            return Err(ModelError::NotEnabled(self.nodes[node.0].id.clone()));
        }
        let mut next = marking.clone();
        let ins = &self.inputs[node.0];
        match self.kind(node) {
            NodeKind::AndJoin => ins.iter().for_each(|f| next.0[f.0] = false),
            _ => {
                let f = ins
                    .iter()
                    .find(|f| marking.has_token(**f))
                    .expect("enabled node has a token");
                next.0[f.0] = false;
            }
        }
        let outs = &self.outputs[node.0];
        let produced: Vec<FlowId> = match self.kind(node) {
            NodeKind::AndSplit => outs.clone(),
            NodeKind::XorSplit => {
                let chosen = branch.ok_or_else(|| ModelError::MissingBranch(self.nodes[node.0].id.clone()))?;
                if !outs.contains(&chosen) {
                    return Err(ModelError::InvalidBranch {
                        node: self.nodes[node.0].id.clone(),
                        flow: chosen.0.to_string(),
                    });
                }
                vec![chosen]
            }
            NodeKind::End => Vec::new(),
            _ => outs.clone(),
        };
        for f in produced {
            if next.0[f.0] {
                return Err(ModelError::Unsafe(self.flows[f.0].id.clone()));
            }
            next.0[f.0] = true;
        }
        Ok(next)
    }

    /// Nodes whose input flows carry a token, in id order. Only these can be enabled.
    pub fn candidate_nodes(&self, marking: &Marking) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = marking.marked_flows().map(|f| self.flows[f.0].target).collect();
        nodes.sort();
        nodes.dedup();
        nodes.retain(|&n| self.is_enabled(marking, n));
        nodes
    }

    /// Activity nodes reachable from `flow` through silent nodes only.
    pub fn activities_reachable_silently(&self, flow: FlowId) -> Vec<NodeId> {
        let mut seen_nodes = vec![false; self.nodes.len()];
        let mut found = Vec::new();
        let mut queue = VecDeque::from([self.flows[flow.0].target]);
        while let Some(node) = queue.pop_front() {
            if std::mem::replace(&mut seen_nodes[node.0], true) {
                continue;
            }
            match self.kind(node) {
                NodeKind::Activity => found.push(node),
                k if k.is_silent() => {
                    for f in &self.outputs[node.0] {
                        queue.push_back(self.flows[f.0].target);
                    }
                }
                _ => {}
            }
        }
        found.sort();
        found
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct FlowJson {
    id: String,
    source: String,
    target: String,
}

/// Interchange form: `nodes` (id, kind, label) and `flows` (id, source, target).
#[derive(Serialize, Deserialize)]
pub struct ModelJson {
    nodes: Vec<Node>,
    flows: Vec<FlowJson>,
}

impl TryFrom<ModelJson> for ProcessModel {
    type Error = ModelError;

    fn try_from(json: ModelJson) -> Result<Self, Self::Error> {
        let index: HashMap<&str, usize> = json.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let lookup = |flow: &FlowJson, id: &str| {
            index
                .get(id)
                .copied()
                .map(NodeId)
                .ok_or_else(|| ModelError::UnknownNode {
                    flow: flow.id.clone(),
                    node: id.to_string(),
                })
        };
        let flows = json
            .flows
            .iter()
            .map(|f| {
                Ok(Flow {
                    id: f.id.clone(),
                    source: lookup(f, &f.source)?,
                    target: lookup(f, &f.target)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        ProcessModel::new(json.nodes, flows)
    }
}

impl From<ProcessModel> for ModelJson {
    fn from(model: ProcessModel) -> Self {
        let flows = model
            .flows
            .iter()
            .map(|f| FlowJson {
                id: f.id.clone(),
                source: model.nodes[f.source.0].id.clone(),
                target: model.nodes[f.target.0].id.clone(),
            })
            .collect();
        ModelJson {
            nodes: model.nodes,
            flows,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// start -> a -> b -> ... -> end
    pub fn linear(labels: &[&str]) -> ProcessModel {
        let mut b = ModelBuilder::new();
        let mut prev = b.node(NodeKind::Start, None);
        for l in labels {
            let n = b.activity(l);
            b.flow(prev, n);
            prev = n;
        }
        let end = b.node(NodeKind::End, None);
        b.flow(prev, end);
        b.build().unwrap()
    }

    /// start -> a -> AND(b, c) -> d -> end
    pub fn and_block() -> ProcessModel {
        let mut b = ModelBuilder::new();
        let s = b.node(NodeKind::Start, None);
        let a = b.activity("a");
        let split = b.node(NodeKind::AndSplit, None);
        let bn = b.activity("b");
        let cn = b.activity("c");
        let join = b.node(NodeKind::AndJoin, None);
        let d = b.activity("d");
        let e = b.node(NodeKind::End, None);
        b.flow(s, a);
        b.flow(a, split);
        b.flow(split, bn);
        b.flow(split, cn);
        b.flow(bn, join);
        b.flow(cn, join);
        b.flow(join, d);
        b.flow(d, e);
        b.build().unwrap()
    }

    /// start -> a -> XOR(b, c) -> d -> end
    pub fn xor_block() -> ProcessModel {
        let mut b = ModelBuilder::new();
        let s = b.node(NodeKind::Start, None);
        let a = b.activity("a");
        let split = b.node(NodeKind::XorSplit, None);
        let bn = b.activity("b");
        let cn = b.activity("c");
        let join = b.node(NodeKind::XorJoin, None);
        let d = b.activity("d");
        let e = b.node(NodeKind::End, None);
        b.flow(s, a);
        b.flow(a, split);
        b.flow(split, bn);
        b.flow(split, cn);
        b.flow(bn, join);
        b.flow(cn, join);
        b.flow(join, d);
        b.flow(d, e);
        b.build().unwrap()
    }
}
