//! Similarity between a ground-truth log and a simulated log.

mod bptd;
mod hungarian;

use std::collections::HashMap;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::event_log::{EventLog, Timestamp, Trace};

pub use bptd::{bptd, BetaMode, BptdConfig, ConcurrencyRelation, TimedEvent};
pub use hungarian::hungarian;

/// `{a, b}` is parallel iff a directly follows b in some trace and b directly follows a in some trace.
pub fn alpha_oracle(log: &EventLog) -> ConcurrencyRelation {
    let mut follows = std::collections::HashSet::new();
    for t in log.traces() {
        for w in t.events().windows(2) {
            follows.insert((w[0].activity.as_str(), w[1].activity.as_str()));
        }
    }
    let mut rel = ConcurrencyRelation::new();
    for &(a, b) in &follows {
        if follows.contains(&(b, a)) {
            rel.insert(a, b);
        }
    }
    rel
}

/// Waiting time of every event without a model: an event is enabled when
/// the latest earlier event of a non-parallel activity ended (trace start
/// if none), never later than its own start.
pub fn estimate_waiting(log: &EventLog, rel: &ConcurrencyRelation) -> Vec<Vec<i64>> {
    log.traces().iter().map(|t| trace_waiting(t, rel)).collect()
}

fn trace_waiting(t: &Trace, rel: &ConcurrencyRelation) -> Vec<i64> {
    let events = t.events();
    events
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let enabled: Timestamp = events[..k]
                .iter()
                .filter(|p| p.end <= e.start && !rel.is_parallel(&p.activity, &e.activity))
                .map(|p| p.end)
                .max()
                .unwrap_or_else(|| t.start());
            e.start - enabled.min(e.start)
        })
        .collect()
}

/// A log with the waiting time of each event, indexed like its traces.
#[derive(Debug, Clone, Copy)]
pub struct TimedLog<'a> {
    pub log: &'a EventLog,
    pub waiting: &'a [Vec<i64>],
}

#[derive(Default, Clone, Copy)]
struct Range {
    min: f64,
    max: f64,
}

impl Range {
    fn add(&mut self, x: f64, first: bool) {
        if first {
            *self = Range { min: x, max: x };
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
    }

    fn scale(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// Min-max normalizes processing and waiting time per activity over both logs together.
pub fn normalize_times(ground: TimedLog<'_>, simulated: TimedLog<'_>) -> (Vec<Vec<TimedEvent>>, Vec<Vec<TimedEvent>>) {
    let mut ranges: HashMap<&str, (Range, Range)> = HashMap::new();
    for tl in [&ground, &simulated] {
        for (t, ws) in tl.log.traces().iter().zip(tl.waiting) {
            for (e, w) in t.events().iter().zip(ws) {
                let first = !ranges.contains_key(e.activity.as_str());
                let r = ranges.entry(e.activity.as_str()).or_default();
                r.0.add(e.processing_time() as f64, first);
                r.1.add(*w as f64, first);
            }
        }
    }
    let convert = |tl: &TimedLog<'_>| -> Vec<Vec<TimedEvent>> {
        tl.log
            .traces()
            .iter()
            .zip(tl.waiting)
            .map(|(t, ws)| {
                t.events()
                    .iter()
                    .zip(ws)
                    .map(|(e, w)| {
                        let (rp, rw) = ranges[e.activity.as_str()];
                        TimedEvent::new(
                            e.activity.clone(),
                            rp.scale(e.processing_time() as f64),
                            rw.scale(*w as f64),
                        )
                    })
                    .collect()
            })
            .collect()
    };
    (convert(&ground), convert(&simulated))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pair {
    pub ground: usize,
    pub simulated: usize,
    /// BPTD divided by the longer trace length.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Els {
    pub similarity: f64,
    /// Optimal pairing of real traces; padding pairs are omitted.
    pub pairs: Vec<Pair>,
}

/// Event-log similarity: 1 minus the mean normalized distance over the
/// cheapest one-to-one pairing of traces. Unmatched traces (unequal log
/// sizes) are paired with padding at distance 1.
pub fn els(
    ground: &[Vec<TimedEvent>],
    simulated: &[Vec<TimedEvent>],
    rel: &ConcurrencyRelation,
    cfg: &BptdConfig,
) -> Els {
    let n = ground.len().max(simulated.len());
    if n == 0 {
        return Els {
            similarity: 1.0,
            pairs: Vec::new(),
        };
    }
    if ground.len() != simulated.len() {
        warn!(
            "logs have {} and {} traces; padding the pairing at distance 1",
            ground.len(),
            simulated.len()
        );
    }
    let matrix: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| match (ground.get(i), simulated.get(j)) {
                    (Some(g), Some(s)) => {
                        let len = g.len().max(s.len());
                        if len == 0 {
                            0.0
                        } else {
                            bptd(g, s, rel, cfg) / len as f64
                        }
                    }
                    _ => 1.0,
                })
                .collect()
        })
        .collect();
    let (assignment, total) = hungarian(&matrix);
    let pairs = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < ground.len() && j < simulated.len())
        .map(|(i, &j)| Pair {
            ground: i,
            simulated: j,
            distance: matrix[i][j],
        })
        .collect();
    Els {
        similarity: (1.0 - total / n as f64).clamp(0.0, 1.0),
        pairs,
    }
}

/// Mean absolute cycle-time difference (seconds) over paired traces.
pub fn cycle_time_mae(ground: &EventLog, simulated: &EventLog, pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: i64 = pairs
        .iter()
        .map(|p| (ground.traces()[p.ground].cycle_time() - simulated.traces()[p.simulated].cycle_time()).abs())
        .sum();
    sum as f64 / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assessment {
    pub els: f64,
    pub cycle_time_mae: f64,
    pub pairs: Vec<Pair>,
}

/// ELS and cycle-time MAE of `simulated` against `ground`, with the
/// concurrency relation taken from the ground truth.
pub fn assess(ground: TimedLog<'_>, simulated: TimedLog<'_>, cfg: &BptdConfig) -> Assessment {
    let rel = alpha_oracle(ground.log);
    let (g, s) = normalize_times(ground, simulated);
    let e = els(&g, &s, &rel, cfg);
    Assessment {
        cycle_time_mae: cycle_time_mae(ground.log, simulated.log, &e.pairs),
        els: e.similarity,
        pairs: e.pairs,
    }
}
