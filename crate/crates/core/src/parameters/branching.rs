use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParameterError;
use crate::process_model::{FlowId, NodeKind, ProcessModel};
use crate::replay::ReplayResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchingMode {
    Discovered,
    Equiprobable,
    Random,
}

impl std::str::FromStr for BranchingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "discovered" => Ok(Self::Discovered),
            "equiprobable" => Ok(Self::Equiprobable),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown branching mode {other:?}")),
        }
    }
}

impl std::fmt::Display for BranchingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Discovered => "discovered",
            Self::Equiprobable => "equiprobable",
            Self::Random => "random",
        })
    }
}

/// Probability of each XOR split out-flow.
pub type Branching = BTreeMap<FlowId, f64>;

fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

pub fn branching_probabilities<R: Rng + ?Sized>(
    model: &ProcessModel,
    replay: Option<&ReplayResult>,
    mode: BranchingMode,
    rng: &mut R,
) -> Result<Branching, ParameterError> {
    if mode == BranchingMode::Discovered && replay.is_none() {
        return Err(ParameterError::ReplayRequired);
    }
    let mut out = Branching::new();
    for g in model.nodes_of_kind(NodeKind::XorSplit) {
        let outs = model.outputs(g);
        let uniform = vec![1.0; outs.len()];
        let weights: Vec<f64> = match mode {
            BranchingMode::Equiprobable => uniform,
            BranchingMode::Random => outs.iter().map(|_| rng.random_range(f64::EPSILON..1.0)).collect(),
            BranchingMode::Discovered => {
                let counts = &replay.expect("checked above").traversal_frequency;
                let w: Vec<f64> = outs
                    .iter()
                    .map(|f| counts.get(f).copied().unwrap_or(0) as f64)
                    .collect();
                if w.iter().sum::<f64>() == 0.0 {
                    warn!(
                        "gateway {} never fired during replay; using equiprobable branches",
                        model.node(g).id
                    );
                    uniform
                } else {
                    w
                }
            }
        };
        for (f, p) in outs.iter().zip(normalize(&weights)) {
            out.insert(*f, p);
        }
    }
    Ok(out)
}
