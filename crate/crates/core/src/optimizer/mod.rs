//! Hyper-parameter search over the discovery pipeline.

mod tpe;

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::accuracy::{alpha_oracle, assess, estimate_waiting, BptdConfig, TimedLog};
use crate::conformance::{repair_log, Aligner, ConformanceError, RepairMethod, DEFAULT_STATE_CAP};
use crate::discovery::{discover_model, DiscoveryError, DiscoveryParams};
use crate::event_log::{EventLog, AUTO_RESOURCE};
use crate::parameters::{
    assemble, branching_probabilities, discover_resource_pools, fit_distribution, fit_exponential,
    inter_arrival_series, BpsModel, BranchingMode, Distribution, ParameterError, ResourcePool, Timetable,
    TimetableMode,
};
use crate::replay::{replay_log, ReplayError};
use crate::simulator::{derive_seed, run_batch, SimConfig, SimulationError};

pub use tpe::{tpe_suggest, Observation, TpeSettings, TrialConfig, BRANCHING_MODES, REPAIR_METHODS};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("discovery: {0}")]
    Discovery(#[from] DiscoveryError),
    #[error("conformance: {0}")]
    Conformance(#[from] ConformanceError),
    #[error("replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("parameters: {0}")]
    Parameters(#[from] ParameterError),
    #[error("simulation: {0}")]
    Simulation(#[from] SimulationError),
    #[error("repaired log is empty")]
    EmptyRepair,
    #[error("trials and runs must be at least 1")]
    Budget,
    #[error("all {0} trials failed")]
    NoSuccessfulTrial(usize),
}

/// Baseline configuration: fixed discovery parameters and exponential PDFs.
pub const BASELINE: TrialConfig = TrialConfig {
    epsilon: 0.1,
    eta: 0.4,
    repair: RepairMethod::Removal,
    branching: BranchingMode::Equiprobable,
    pool_threshold: 0.5,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// Best-fitting family per series.
    #[default]
    Best,
    /// Exponential with the sample mean for every series.
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub fit: FitMode,
    pub timetables: TimetableMode,
    pub state_cap: usize,
    pub bptd: BptdConfig,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            fit: FitMode::Best,
            timetables: TimetableMode::Always,
            state_cap: DEFAULT_STATE_CAP,
            bptd: BptdConfig::default(),
        }
    }
}

/// A BPS model plus what happened to the log on the way.
#[derive(Debug, Clone)]
pub struct DiscoveredModel {
    pub bps: BpsModel,
    /// Mean alignment fitness of the input log before repair.
    pub fitness: f64,
    pub non_conformant: usize,
    /// Trace count after repair.
    pub repaired_traces: usize,
}

fn fit(samples: &[f64], mode: FitMode) -> Result<Distribution, ParameterError> {
    match mode {
        FitMode::Best => fit_distribution(samples),
        FitMode::Exponential => fit_exponential(samples),
    }
}

/// Runs discovery, alignment, repair, replay and parameter mining once.
/// Branching mode `random` draws from `seed`.
pub fn build_model(
    log: &EventLog,
    config: &TrialConfig,
    opts: &PipelineOptions,
    seed: u64,
) -> Result<DiscoveredModel, OptimizerError> {
    let model = discover_model(log, &DiscoveryParams::new(config.epsilon, config.eta)?)?;
    let alignments = Aligner::new(&model, opts.state_cap)?.align_log(log)?;
    let fitness = alignments.iter().map(|a| a.fitness).sum::<f64>() / alignments.len().max(1) as f64;
    let repair = repair_log(log, &alignments, config.repair)?;
    if repair.log.is_empty() {
        return Err(OptimizerError::EmptyRepair);
    }
    let replay = replay_log(&model, &repair.log)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX - 1));
    let branching = branching_probabilities(&model, Some(&replay), config.branching, &mut rng)?;
    let mut pools = discover_resource_pools(&repair.log, config.pool_threshold, opts.timetables)?;

    let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in replay.events.iter().filter(|e| e.resource != AUTO_RESOURCE) {
        samples
            .entry(e.activity.as_str())
            .or_default()
            .push(e.processing_time as f64);
    }
    let mut durations = BTreeMap::new();
    for label in model.activity_labels() {
        let pool = pools.activity_pool.get(label).map(String::as_str);
        match samples.get(label) {
            Some(s) if pool.is_some_and(|p| p != AUTO_RESOURCE) => {
                durations.insert(label.to_string(), fit(s, opts.fit)?);
            }
            _ => {
                debug!("activity {label:?} runs on the AUTO pool");
                pools.activity_pool.insert(label.to_string(), AUTO_RESOURCE.to_string());
                durations.insert(label.to_string(), Distribution::fixed(0.0));
            }
        }
    }
    if !pools.pools.iter().any(ResourcePool::is_auto) && pools.activity_pool.values().any(|p| p == AUTO_RESOURCE) {
        pools.pools.push(ResourcePool {
            id: AUTO_RESOURCE.to_string(),
            members: BTreeSet::from([AUTO_RESOURCE.to_string()]),
            timetable: Timetable::always(),
        });
    }

    let inter_arrival = fit(&inter_arrival_series(log)?, opts.fit)?;
    let mut bps = assemble(
        model,
        inter_arrival,
        durations,
        branching,
        pools.pools,
        pools.activity_pool,
        log.len(),
    )?;
    bps.start_timestamp = log.traces().first().map(|t| t.start());
    Ok(DiscoveredModel {
        bps,
        fitness,
        non_conformant: repair.non_conformant,
        repaired_traces: repair.log.len(),
    })
}

/// ELS of `runs` simulations of `bps` against `ground`, one per derived seed.
pub fn evaluate_model(
    ground: &EventLog,
    bps: &BpsModel,
    runs: usize,
    seed: u64,
    cfg: &BptdConfig,
) -> Result<Vec<f64>, OptimizerError> {
    let seeds: Vec<u64> = (0..runs as u64).map(|r| derive_seed(seed, r)).collect();
    let sims = run_batch(bps, &SimConfig::new(seed), &seeds)?;
    let rel = alpha_oracle(ground);
    let gw = estimate_waiting(ground, &rel);
    Ok(sims
        .iter()
        .map(|s| {
            let sw = estimate_waiting(&s.log, &rel);
            assess(
                TimedLog {
                    log: ground,
                    waiting: &gw,
                },
                TimedLog {
                    log: &s.log,
                    waiting: &sw,
                },
                cfg,
            )
            .els
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub config: TrialConfig,
    /// 1 minus the mean ELS over the runs; `None` when the trial failed.
    pub loss: Option<f64>,
    /// ELS of every simulation run.
    pub els: Vec<f64>,
    pub status: TrialStatus,
    pub message: Option<String>,
}

impl TrialResult {
    pub fn mean_els(&self) -> Option<f64> {
        self.loss.map(|l| 1.0 - l)
    }
}

/// A trial with the model it produced (when it got that far).
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub model: Option<DiscoveredModel>,
}

/// One discover-simulate-score job.
pub fn run_trial(
    log: &EventLog,
    index: usize,
    config: &TrialConfig,
    runs: usize,
    seed: u64,
    opts: &PipelineOptions,
) -> TrialOutcome {
    let attempt = || -> Result<(DiscoveredModel, Vec<f64>), OptimizerError> {
        let dm = build_model(log, config, opts, seed)?;
        let els = evaluate_model(log, &dm.bps, runs, seed, &opts.bptd)?;
        Ok((dm, els))
    };
    match attempt() {
        Ok((dm, els)) => {
            let mean = els.iter().sum::<f64>() / els.len() as f64;
            TrialOutcome {
                result: TrialResult {
                    index,
                    config: *config,
                    loss: Some((1.0 - mean).clamp(0.0, 1.0)),
                    els,
                    status: TrialStatus::Ok,
                    message: None,
                },
                model: Some(dm),
            }
        }
        Err(e) => {
            debug!("trial {index} failed: {e}");
            TrialOutcome {
                result: TrialResult {
                    index,
                    config: *config,
                    loss: None,
                    els: Vec::new(),
                    status: TrialStatus::Failed,
                    message: Some(e.to_string()),
                },
                model: None,
            }
        }
    }
}

/// The baseline trial: [`BASELINE`] with exponential PDFs everywhere.
pub fn run_baseline(log: &EventLog, runs: usize, seed: u64, opts: &PipelineOptions) -> TrialOutcome {
    let opts = PipelineOptions {
        fit: FitMode::Exponential,
        ..opts.clone()
    };
    run_trial(log, 0, &BASELINE, runs, derive_seed(seed, 0), &opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub trials: usize,
    pub runs: usize,
    pub seed: u64,
    /// Trials suggested and run concurrently per round.
    pub batch: usize,
    pub tpe: TpeSettings,
    pub pipeline: PipelineOptions,
}

impl OptimizeOptions {
    pub fn new(trials: usize, runs: usize, seed: u64) -> Self {
        Self {
            trials,
            runs,
            seed,
            batch: 1,
            tpe: TpeSettings::default(),
            pipeline: PipelineOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimization {
    pub history: Vec<TrialResult>,
    /// Index into `history` of the lowest loss (first on ties).
    pub best: usize,
    pub best_model: DiscoveredModel,
}

impl Optimization {
    pub fn best_trial(&self) -> &TrialResult {
        &self.history[self.best]
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

/// Searches the configuration space for the model with the highest mean ELS.
pub fn optimize(log: &EventLog, opts: &OptimizeOptions) -> Result<Optimization, OptimizerError> {
    if opts.trials == 0 || opts.runs == 0 {
        return Err(OptimizerError::Budget);
    }
    let batch = opts.batch.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, u64::MAX));
    let mut history: Vec<TrialResult> = Vec::with_capacity(opts.trials);
    let mut best: Option<(usize, f64, DiscoveredModel)> = None;

    while history.len() < opts.trials {
        let mut observed: Vec<Observation> = history
            .iter()
            .map(|r| Observation {
                config: r.config,
                loss: r.loss,
            })
            .collect();
        let lie = median(history.iter().filter_map(|r| r.loss).collect());
        let size = batch.min(opts.trials - history.len());
        let mut configs = Vec::with_capacity(size);
        for _ in 0..size {
            let c = tpe_suggest(&observed, &opts.tpe, &mut rng);
            if lie.is_some() {
                observed.push(Observation { config: c, loss: lie });
            }
            configs.push(c);
        }
        let first = history.len();
        let outcomes: Vec<TrialOutcome> = configs
            .par_iter()
            .enumerate()
            .map(|(k, c)| {
                let index = first + k;
                run_trial(
                    log,
                    index,
                    c,
                    opts.runs,
                    derive_seed(opts.seed, index as u64),
                    &opts.pipeline,
                )
            })
            .collect();
        for o in outcomes {
            let r = &o.result;
            info!(
                "trial {} eps={:.3} eta={:.3} {} {} thr={:.3}: {}",
                r.index,
                r.config.epsilon,
                r.config.eta,
                r.config.repair,
                r.config.branching,
                r.config.pool_threshold,
                r.mean_els()
                    .map_or_else(|| "failed".to_string(), |e| format!("ELS {e:.4}"))
            );
            if let (Some(loss), Some(model)) = (r.loss, o.model) {
                if best.as_ref().is_none_or(|(_, b, _)| loss < *b) {
                    best = Some((r.index, loss, model));
                }
            }
            history.push(o.result);
        }
    }
    let (best, _, best_model) = best.ok_or(OptimizerError::NoSuccessfulTrial(history.len()))?;
    Ok(Optimization {
        history,
        best,
        best_model,
    })
}

#[derive(Serialize)]
struct HistoryRow<'a> {
    trial: usize,
    epsilon: f64,
    eta: f64,
    repair: String,
    branching: String,
    pool_threshold: f64,
    status: TrialStatus,
    loss: Option<f64>,
    mean_els: Option<f64>,
    message: Option<&'a str>,
}

/// One CSV row per trial.
pub fn write_history<W: std::io::Write>(history: &[TrialResult], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in history {
        w.serialize(HistoryRow {
            trial: r.index,
            epsilon: r.config.epsilon,
            eta: r.config.eta,
            repair: r.config.repair.to_string(),
            branching: r.config.branching.to_string(),
            pool_threshold: r.config.pool_threshold,
            status: r.status,
            loss: r.loss,
            mean_els: r.mean_els(),
            message: r.message.as_deref(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parameters::fixtures::xor_bps;
    use crate::parameters::Pdf;
    use crate::simulator::simulate;

    fn ground(seed: u64, traces: usize) -> EventLog {
        let mut bps = xor_bps();
        bps.trace_count = traces;
        simulate(&bps, &SimConfig::new(seed)).unwrap().log
    }

    fn good_config() -> TrialConfig {
        TrialConfig {
            epsilon: 0.3,
            eta: 0.0,
            repair: RepairMethod::Alignment,
            branching: BranchingMode::Discovered,
            pool_threshold: 0.5,
        }
    }

    #[test]
    fn pipeline_recovers_a_simple_model() {
        let log = ground(1, 120);
        let dm = build_model(&log, &good_config(), &PipelineOptions::default(), 7).unwrap();
        assert_eq!(dm.fitness, 1.0);
        assert_eq!(dm.non_conformant, 0);
        let bps = &dm.bps;
        assert_eq!(bps.trace_count, 120);
        assert_eq!(bps.start_timestamp, Some(log.traces()[0].start()));
        let mut probs: Vec<f64> = bps.branching.values().copied().collect();
        probs.sort_by(f64::total_cmp);
        assert!((probs[1] - 0.7).abs() < 0.1, "{probs:?}");
        assert_eq!(bps.durations["b"].pdf, Pdf::Fixed { value: 1200.0 });
        let els = evaluate_model(&log, bps, 2, 3, &BptdConfig::default()).unwrap();
        assert!(els.iter().all(|&e| e >= 0.9), "{els:?}");
    }

    #[test]
    fn baseline_forces_exponential() {
        let log = ground(2, 60);
        let out = run_baseline(&log, 1, 5, &PipelineOptions::default());
        assert_eq!(out.result.status, TrialStatus::Ok, "{:?}", out.result.message);
        let bps = out.model.unwrap().bps;
        assert!(bps
            .durations
            .values()
            .all(|d| d.pdf.family() == "Exponential" || d.pdf == Pdf::Fixed { value: 0.0 }));
        assert_eq!(bps.inter_arrival.pdf.family(), "Exponential");
        assert_eq!(out.result.config, BASELINE);
    }

    #[test]
    fn failed_trial_is_recorded_not_raised() {
        let log = ground(3, 1);
        let out = run_trial(&log, 4, &good_config(), 1, 1, &PipelineOptions::default());
        assert_eq!(out.result.status, TrialStatus::Failed);
        assert!(out.result.loss.is_none() && out.model.is_none());
        assert!(matches!(
            optimize(&log, &OptimizeOptions::new(2, 1, 0)),
            Err(OptimizerError::NoSuccessfulTrial(2))
        ));
    }

    #[test]
    fn optimize_is_reproducible_and_picks_the_minimum() {
        let log = ground(4, 40);
        let opts = OptimizeOptions::new(4, 1, 11);
        let a = optimize(&log, &opts).unwrap();
        let b = optimize(&log, &opts).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 4);
        let min = a.history.iter().filter_map(|r| r.loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_trial().loss, Some(min));
        assert!(a.history.iter().all(|r| r.config.is_in_space()));
    }

    #[test]
    fn batched_runs_are_reproducible() {
        let log = ground(5, 30);
        let mut opts = OptimizeOptions::new(5, 1, 2);
        opts.batch = 2;
        let a = optimize(&log, &opts).unwrap();
        assert_eq!(a.history, optimize(&log, &opts).unwrap().history);
        assert_eq!(a.history.iter().map(|r| r.index).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(matches!(
            optimize(&ground(1, 5), &OptimizeOptions::new(0, 1, 0)),
            Err(OptimizerError::Budget)
        ));
    }

    #[test]
    fn history_csv_has_one_row_per_trial() {
        let r = TrialResult {
            index: 0,
            config: BASELINE,
            loss: Some(0.25),
            els: vec![0.75],
            status: TrialStatus::Ok,
            message: None,
        };
        let mut buf = Vec::new();
        write_history(
            &[
                r.clone(),
                TrialResult {
                    index: 1,
                    loss: None,
                    status: TrialStatus::Failed,
                    ..r
                },
            ],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("trial,epsilon,eta,repair,branching,pool_threshold,status,loss,mean_els"));
        assert!(lines[1].contains("removal,equiprobable") && lines[1].contains(",ok,0.25,0.75,"));
        assert!(lines[2].contains(",failed,,,"));
    }

    #[test]
    fn median_of_lies() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
