//! Text, CSV and JSON renderings of command results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use bps_forge::accuracy::Assessment;
use bps_forge::event_log::{log_statistics, EventLog};
use bps_forge::optimizer::{DiscoveredModel, Optimization, TrialConfig, TrialResult};
use bps_forge::parameters::{BpsModel, Distribution, Pdf};
use bps_forge::process_model::NodeKind;
use serde::Serialize;

use crate::Format;

/// Families in report column order.
pub const FAMILIES: [&str; 7] = [
    "Uniform",
    "Normal",
    "Exponential",
    "Gamma",
    "LogNormal",
    "FixedValue",
    "Triangular",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub family: &'static str,
    pub activities: usize,
    /// Mean and sample standard deviation of the activity means.
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
}

/// Processing-time PDFs grouped by family.
pub fn family_summary(durations: &BTreeMap<String, Distribution>) -> Vec<FamilySummary> {
    FAMILIES
        .iter()
        .map(|&family| {
            let means: Vec<f64> = durations
                .values()
                .filter(|d| d.pdf.family() == family)
                .map(|d| d.mean())
                .collect();
            let n = means.len();
            let mean = (n > 0).then(|| means.iter().sum::<f64>() / n as f64);
            let std_dev = mean.map(|m| {
                if n < 2 {
                    0.0
                } else {
                    (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            });
            FamilySummary {
                family,
                activities: n,
                mean,
                std_dev,
            }
        })
        .collect()
}

fn params(pdf: &Pdf) -> String {
    let v = serde_json::to_value(pdf).expect("pdf serializes");
    v.as_object()
        .expect("tagged enum is an object")
        .iter()
        .filter(|(k, _)| *k != "family")
        .map(|(k, v)| {
            format!(
                "{k}={}",
                v.as_f64().map_or_else(|| v.to_string(), |x| format!("{x:.2}"))
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Serialize)]
struct ActivityRow<'a> {
    activity: &'a str,
    family: &'static str,
    mean: f64,
    parameters: String,
    fit_error: f64,
    pool: &'a str,
}

fn activity_rows(bps: &BpsModel) -> Vec<ActivityRow<'_>> {
    bps.durations
        .iter()
        .map(|(a, d)| ActivityRow {
            activity: a,
            family: d.pdf.family(),
            mean: d.mean(),
            parameters: params(&d.pdf),
            fit_error: d.fit_error,
            pool: bps.activity_pool.get(a).map_or("", String::as_str),
        })
        .collect()
}

fn opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "--".to_string(), |v| format!("{v:.prec$}"))
}

/// Warnings about models that are unlikely to simulate the log well.
pub fn discovery_warnings(log: &EventLog, dm: &DiscoveredModel) -> Vec<String> {
    let mut out = Vec::new();
    if dm.fitness < 0.9 {
        out.push(format!("model fits the log poorly (mean fitness {:.4})", dm.fitness));
    }
    if dm.non_conformant * 2 > log.len() {
        out.push(format!(
            "{} of {} traces do not fit the model",
            dm.non_conformant,
            log.len()
        ));
    }
    let variants: BTreeSet<Vec<&str>> = log.traces().iter().map(|t| t.labels().collect()).collect();
    let model = &dm.bps.model;
    let gateways = model.count_kind(NodeKind::XorSplit) + model.count_kind(NodeKind::AndSplit);
    if variants.len() > 1 && gateways == 0 {
        out.push(format!(
            "log has {} variants but the model is a single sequence",
            variants.len()
        ));
    }
    out
}

#[derive(Serialize)]
struct DiscoveryJson<'a> {
    config: &'a TrialConfig,
    fitness: f64,
    non_conformant: usize,
    repaired_traces: usize,
    warnings: &'a [String],
    families: Vec<FamilySummary>,
    activities: Vec<ActivityRow<'a>>,
    inter_arrival: &'a Pdf,
}

pub fn discovery(log: &EventLog, config: &TrialConfig, dm: &DiscoveredModel, format: Format) -> String {
    let bps = &dm.bps;
    let warnings = discovery_warnings(log, dm);
    match format {
        Format::Json => serde_json::to_string_pretty(&DiscoveryJson {
            config,
            fitness: dm.fitness,
            non_conformant: dm.non_conformant,
            repaired_traces: dm.repaired_traces,
            warnings: &warnings,
            families: family_summary(&bps.durations),
            activities: activity_rows(bps),
            inter_arrival: &bps.inter_arrival.pdf,
        })
        .expect("report serializes"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in activity_rows(bps) {
                w.serialize(r).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        }
        Format::Text => {
            let stats = log_statistics(log);
            let model = &bps.model;
            let mut s = String::new();
            let _ = writeln!(
                s,
                "Log: {} traces, {} events, {} activities",
                stats.traces, stats.events, stats.activities
            );
            let _ = writeln!(
                s,
                "Config: epsilon={} eta={} repair={} branching={} pool-threshold={}",
                config.epsilon, config.eta, config.repair, config.branching, config.pool_threshold
            );
            let _ = writeln!(
                s,
                "Model: {} nodes, {} flows, {} XOR splits, {} AND splits",
                model.nodes().len(),
                model.flows().len(),
                model.count_kind(NodeKind::XorSplit),
                model.count_kind(NodeKind::AndSplit)
            );
            let _ = writeln!(s, "Fitness before repair: {:.4}", dm.fitness);
            let _ = writeln!(
                s,
                "Non-conformant traces: {} ({} traces after repair)",
                dm.non_conformant, dm.repaired_traces
            );
            for w in &warnings {
                let _ = writeln!(s, "warning: {w}");
            }

            let _ = writeln!(s, "\nProcessing-time PDFs");
            let fams = family_summary(&bps.durations);
            let _ = write!(s, "{:<16}", "");
            for f in &fams {
                let _ = write!(s, "{:>12}", f.family);
            }
            let _ = write!(s, "\n{:<16}", "# of Activities");
            for f in &fams {
                let _ = write!(
                    s,
                    "{:>12}",
                    if f.activities == 0 {
                        "--".to_string()
                    } else {
                        f.activities.to_string()
                    }
                );
            }
            let _ = write!(s, "\n{:<16}", "Mean");
            for f in &fams {
                let _ = write!(s, "{:>12}", opt(f.mean, 2));
            }
            let _ = write!(s, "\n{:<16}", "StdDev");
            for f in &fams {
                let _ = write!(s, "{:>12}", opt(f.std_dev, 2));
            }
            let _ = writeln!(s, "\n");

            let rows = activity_rows(bps);
            let width = rows.iter().map(|r| r.activity.len()).max().unwrap_or(8).max(8);
            let _ = writeln!(
                s,
                "{:<width$}  {:<11}  {:>12}  {:<10}  parameters",
                "activity", "pdf", "mean (s)", "pool"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:<width$}  {:<11}  {:>12.2}  {:<10}  {}",
                    r.activity, r.family, r.mean, r.pool, r.parameters
                );
            }
            let ia = &bps.inter_arrival.pdf;
            let _ = writeln!(s, "\nInter-arrival: {} ({})", ia.family(), params(ia));

            if !bps.branching.is_empty() {
                let _ = writeln!(s, "\nBranching probabilities");
                for (f, p) in &bps.branching {
                    let flow = model.flow(*f);
                    let target = model.node(flow.target);
                    let _ = writeln!(
                        s,
                        "  {} -> {}: {:.4}",
                        flow.id,
                        target.label.as_deref().unwrap_or(&target.id),
                        p
                    );
                }
            }
            let _ = writeln!(s, "\nResource pools");
            for p in &bps.pools {
                let tt = if p.timetable.is_always() {
                    "24/7".to_string()
                } else {
                    format!("{} weekly windows", p.timetable.windows().len())
                };
                let members: Vec<&str> = p.members.iter().map(String::as_str).collect();
                let _ = writeln!(s, "  {} ({}, {}): {}", p.id, p.size(), tt, members.join(", "));
            }
            s
        }
    }
}

#[derive(Serialize)]
pub struct PairRow<'a> {
    pub ground_case: &'a str,
    pub simulated_case: &'a str,
    pub distance: f64,
}

pub fn pair_rows<'a>(ground: &'a EventLog, simulated: &'a EventLog, a: &Assessment) -> Vec<PairRow<'a>> {
    a.pairs
        .iter()
        .map(|p| PairRow {
            ground_case: ground.traces()[p.ground].case_id(),
            simulated_case: simulated.traces()[p.simulated].case_id(),
            distance: p.distance,
        })
        .collect()
}

pub fn pairs_csv(rows: &[PairRow<'_>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn evaluation(ground: &EventLog, simulated: &EventLog, a: &Assessment, format: Format) -> String {
    let rows = pair_rows(ground, simulated, a);
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct J<'a> {
                els: f64,
                cycle_time_mae: f64,
                ground_traces: usize,
                simulated_traces: usize,
                pairs: &'a [PairRow<'a>],
            }
            serde_json::to_string_pretty(&J {
                els: a.els,
                cycle_time_mae: a.cycle_time_mae,
                ground_traces: ground.len(),
                simulated_traces: simulated.len(),
                pairs: &rows,
            })
            .expect("report serializes")
        }
        Format::Csv => format!("metric,value\nels,{}\ncycle_time_mae,{}\n", a.els, a.cycle_time_mae),
        Format::Text => format!(
            "ELS: {:.4}\nCycle-time MAE: {:.1} s\nTraces: {} ground, {} simulated\n\n{}",
            a.els,
            a.cycle_time_mae,
            ground.len(),
            simulated.len(),
            pairs_csv(&rows)
        ),
    }
}

#[derive(Serialize)]
struct OptimizeJson<'a> {
    log: &'a str,
    baseline_els: Option<f64>,
    optimizer_els: Option<f64>,
    best_trial: usize,
    best_config: &'a TrialConfig,
    trials: usize,
    failed_trials: usize,
}

pub fn optimization(
    log_name: &str,
    opt_result: &Optimization,
    baseline: Option<&TrialResult>,
    format: Format,
) -> String {
    let best = opt_result.best_trial();
    let failed = opt_result.history.iter().filter(|r| r.loss.is_none()).count();
    let base_els = baseline.and_then(TrialResult::mean_els);
    match format {
        Format::Json => serde_json::to_string_pretty(&OptimizeJson {
            log: log_name,
            baseline_els: base_els,
            optimizer_els: best.mean_els(),
            best_trial: best.index,
            best_config: &best.config,
            trials: opt_result.history.len(),
            failed_trials: failed,
        })
        .expect("report serializes"),
        Format::Csv => format!(
            "log,baseline_els,optimizer_els\n{},{},{}\n",
            log_name,
            base_els.map_or_else(String::new, |x| x.to_string()),
            best.mean_els().map_or_else(String::new, |x| x.to_string())
        ),
        Format::Text => {
            let c = &best.config;
            let mut s = String::new();
            let _ = writeln!(s, "{:<24}{:<18}{:<18}", "log", "Baseline (ELS)", "Optimizer (ELS)");
            let _ = writeln!(
                s,
                "{:<24}{:<18}{:<18}",
                log_name,
                opt(base_els, 6),
                opt(best.mean_els(), 6)
            );
            if let Some(b) = baseline.filter(|b| b.loss.is_none()) {
                let _ = writeln!(
                    s,
                    "baseline failed: {}",
                    b.message.as_deref().unwrap_or("unknown error")
                );
            }
            let _ = writeln!(
                s,
                "\nBest trial {} of {} ({} failed): epsilon={:.4} eta={:.4} repair={} branching={} pool-threshold={:.4}",
                best.index,
                opt_result.history.len(),
                failed,
                c.epsilon,
                c.eta,
                c.repair,
                c.branching,
                c.pool_threshold
            );
            s
        }
    }
}
