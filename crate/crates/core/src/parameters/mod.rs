//! Simulation parameters mined from a log and the assembled BPS model.

mod arrival;
mod branching;
pub mod distribution;
mod pools;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::Timestamp;
use crate::process_model::{NodeKind, ProcessModel};

pub use arrival::inter_arrival_series;
pub use branching::{branching_probabilities, Branching, BranchingMode};
pub use distribution::{fit_distribution, fit_exponential, Distribution, Pdf};
pub use pools::{discover_resource_pools, pearson, PoolDiscovery, ResourcePool, Timetable, TimetableMode};

#[derive(Debug, Error)]
pub enum ParameterError {
    #[error("cannot fit a distribution to an empty series")]
    NoSamples,
    #[error("sample series contains a non-finite value")]
    NonFiniteSample,
    #[error("invalid distribution parameters {0:?}")]
    InvalidDistribution(Pdf),
    #[error("inter-arrival times need at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error("discovered branching needs a replay result")]
    ReplayRequired,
    #[error("similarity threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("log has no resources")]
    NoResources,
    #[error("invalid timetable window ({0}, {1}, {2})")]
    InvalidWindow(u8, u8, u8),
    #[error("activity {0:?} has no duration distribution")]
    MissingDuration(String),
    #[error("activity {0:?} has no resource pool")]
    MissingPool(String),
    #[error("activity {activity:?} maps to unknown pool {pool:?}")]
    UnknownPool { activity: String, pool: String },
    #[error("pool {0:?} has no members")]
    EmptyPool(String),
    #[error("conditional flow {0} has no probability")]
    MissingBranch(String),
    #[error("branch probabilities of gateway {gateway} sum to {sum}")]
    BranchSum { gateway: String, sum: f64 },
    #[error("unknown flow {0:?} in branching")]
    UnknownFlow(String),
    #[error("trace count must be at least 1")]
    TraceCount,
    #[error("model: {0}")]
    Model(#[from] crate::process_model::ModelError),
}

/// A process model plus everything needed to simulate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BpsJson", into = "BpsJson")]
pub struct BpsModel {
    pub model: ProcessModel,
    pub inter_arrival: Distribution,
    /// Activity label to processing-time distribution (seconds).
    pub durations: BTreeMap<String, Distribution>,
    pub branching: Branching,
    pub pools: Vec<ResourcePool>,
    /// Activity label to pool id.
    pub activity_pool: BTreeMap<String, String>,
    pub trace_count: usize,
    /// Arrival time of the first simulated case.
    pub start_timestamp: Option<Timestamp>,
}

impl BpsModel {
    pub fn pool(&self, id: &str) -> Option<&ResourcePool> {
        self.pools.iter().find(|p| p.id == id)
    }

    pub fn validate(&self) -> Result<(), ParameterError> {
        if self.trace_count == 0 {
            return Err(ParameterError::TraceCount);
        }
        self.inter_arrival.pdf.validate()?;
        for p in &self.pools {
            if p.members.is_empty() {
                return Err(ParameterError::EmptyPool(p.id.clone()));
            }
        }
        for label in self.model.activity_labels() {
            self.durations
                .get(label)
                .ok_or_else(|| ParameterError::MissingDuration(label.to_string()))?
                .pdf
                .validate()?;
            let pool = self
                .activity_pool
                .get(label)
                .ok_or_else(|| ParameterError::MissingPool(label.to_string()))?;
            if self.pool(pool).is_none() {
                return Err(ParameterError::UnknownPool {
                    activity: label.to_string(),
                    pool: pool.clone(),
                });
            }
        }
        for g in self.model.nodes_of_kind(NodeKind::XorSplit) {
            let mut sum = 0.0;
            for f in self.model.outputs(g) {
                let p = self
                    .branching
                    .get(f)
                    .ok_or_else(|| ParameterError::MissingBranch(self.model.flow(*f).id.clone()))?;
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ParameterError::BranchSum {
                    gateway: self.model.node(g).id.clone(),
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("BPS model serializes")
    }
}

/// Bundles mined parameters with the model and validates coverage.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    model: ProcessModel,
    inter_arrival: Distribution,
    durations: BTreeMap<String, Distribution>,
    branching: Branching,
    pools: Vec<ResourcePool>,
    activity_pool: BTreeMap<String, String>,
    trace_count: usize,
) -> Result<BpsModel, ParameterError> {
    let bps = BpsModel {
        model,
        inter_arrival,
        durations,
        branching,
        pools,
        activity_pool,
        trace_count,
        start_timestamp: None,
    };
    bps.validate()?;
    Ok(bps)
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BpsJson {
    #[serde(flatten)]
    model: ProcessModel,
    inter_arrival: Distribution,
    durations: BTreeMap<String, Distribution>,
    branching: BTreeMap<String, f64>,
    pools: Vec<ResourcePool>,
    activity_pool: BTreeMap<String, String>,
    trace_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_timestamp: Option<Timestamp>,
}

impl From<BpsModel> for BpsJson {
    fn from(b: BpsModel) -> Self {
        let branching = b
            .branching
            .iter()
            .map(|(f, p)| (b.model.flow(*f).id.clone(), *p))
            .collect();
        Self {
            model: b.model,
            inter_arrival: b.inter_arrival,
            durations: b.durations,
            branching,
            pools: b.pools,
            activity_pool: b.activity_pool,
            trace_count: b.trace_count,
            start_timestamp: b.start_timestamp,
        }
    }
}

impl TryFrom<BpsJson> for BpsModel {
    type Error = ParameterError;

    fn try_from(j: BpsJson) -> Result<Self, Self::Error> {
        let mut branching = Branching::new();
        for (id, p) in j.branching {
            let f = j.model.flow_by_id(&id).ok_or(ParameterError::UnknownFlow(id))?;
            branching.insert(f, p);
        }
        let bps = BpsModel {
            model: j.model,
            inter_arrival: j.inter_arrival,
            durations: j.durations,
            branching,
            pools: j.pools,
            activity_pool: j.activity_pool,
            trace_count: j.trace_count,
            start_timestamp: j.start_timestamp,
        };
        bps.validate()?;
        Ok(bps)
    }
}
