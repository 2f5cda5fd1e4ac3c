//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bps_forge::accuracy::{bptd, els, hungarian, BetaMode, BptdConfig, ConcurrencyRelation, TimedEvent};
use bps_forge::conformance::{repair_log, Aligner, RepairMethod, DEFAULT_STATE_CAP};
use bps_forge::event_log::{write_csv, Event, EventLog, Trace};
use bps_forge::optimizer::{
    build_model, evaluate_model, optimize, run_baseline, OptimizeOptions, PipelineOptions, TrialConfig,
};
use bps_forge::parameters::{
    branching_probabilities, fit_distribution, BpsModel, Branching, BranchingMode, Distribution, Pdf, ResourcePool,
    Timetable,
};
use bps_forge::process_model::{ModelBuilder, NodeKind, ProcessModel};
use bps_forge::replay::{replay_log, ReplayResult};
use bps_forge::simulator::{resource_intervals, simulate, SimConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// a, XOR(b 0.7 | c 0.3), d, e with fixed durations and two pools.
fn reference_model(traces: usize) -> BpsModel {
    let mut b = ModelBuilder::new();
    let s = b.node(NodeKind::Start, None);
    let a = b.activity("a");
    let split = b.node(NodeKind::XorSplit, None);
    let bn = b.activity("b");
    let cn = b.activity("c");
    let join = b.node(NodeKind::XorJoin, None);
    let d = b.activity("d");
    let e = b.activity("e");
    let end = b.node(NodeKind::End, None);
    b.flow(s, a);
    b.flow(a, split);
    let to_b = b.flow(split, bn);
    let to_c = b.flow(split, cn);
    b.flow(bn, join);
    b.flow(cn, join);
    b.flow(join, d);
    b.flow(d, e);
    b.flow(e, end);
    let pool = |id: &str, members: &[&str]| ResourcePool {
        id: id.into(),
        members: members.iter().map(|m| m.to_string()).collect::<BTreeSet<_>>(),
        timetable: Timetable::always(),
    };
    BpsModel {
        model: b.build().expect("valid model"),
        inter_arrival: Distribution::exact(Pdf::Exponential { mean: 1800.0 }),
        durations: [("a", 600.0), ("b", 1200.0), ("c", 900.0), ("d", 300.0), ("e", 450.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), Distribution::fixed(*v)))
            .collect(),
        branching: Branching::from([(to_b, 0.7), (to_c, 0.3)]),
        pools: vec![pool("p1", &["r1", "r2"]), pool("p2", &["r3"])],
        activity_pool: [("a", "p1"), ("b", "p1"), ("d", "p1"), ("c", "p2"), ("e", "p2")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        trace_count: traces,
        start_timestamp: None,
    }
}

fn reference_log(traces: usize, seed: u64) -> EventLog {
    simulate(&reference_model(traces), &SimConfig::new(seed))
        .expect("simulation")
        .log
}

/// Probability of the XOR branch that leads to `label`.
fn branch_to(model: &ProcessModel, branching: &Branching, label: &str) -> Option<f64> {
    branching
        .iter()
        .find(|(f, _)| model.node(model.flow(**f).target).label.as_deref() == Some(label))
        .map(|(_, p)| *p)
}

fn seq(items: &[(&str, f64, f64)]) -> Vec<TimedEvent> {
    items.iter().map(|(l, p, w)| TimedEvent::new(*l, *p, *w)).collect()
}

fn dynamic() -> BptdConfig {
    BptdConfig {
        beta: BetaMode::Dynamic,
    }
}

fn bptd_worked_example() -> Outcome {
    let s = seq(&[("a", 0.3, 0.4), ("b", 0.5, 0.1), ("c", 0.4, 0.1)]);
    let t = seq(&[("a", 0.2, 0.4), ("c", 0.5, 0.2), ("b", 0.5, 0.1), ("d", 0.1, 0.1)]);
    let mut bc = ConcurrencyRelation::new();
    bc.insert("b", "c");
    let start = Instant::now();
    let with = bptd(&s, &t, &bc, &dynamic());
    let without = bptd(&s, &t, &ConcurrencyRelation::new(), &dynamic());
    let took = start.elapsed();
    let pass = (with - 1.142).abs() < 1e-9 && (without - 2.042).abs() < 1e-9 && took < Duration::from_millis(1);
    outcome(pass, format!("b||c {with:.6}, sequential {without:.6}, {took:?}"))
}

fn dl_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet = ['a', 'b', 'c', 'd'];
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut word = || -> String {
            let n = rng.random_range(0..=10);
            (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        };
        let (x, y) = (word(), word());
        let timed =
            |w: &str| -> Vec<TimedEvent> { w.chars().map(|c| TimedEvent::new(c.to_string(), 0.5, 0.5)).collect() };
        let d = bptd(&timed(&x), &timed(&y), &ConcurrencyRelation::new(), &dynamic());
        if d != strsim::osa_distance(&x, &y) as f64 {
            mismatches += 1;
        }
    }
    let took = start.elapsed();
    outcome(
        mismatches == 0 && took < Duration::from_secs(5),
        format!("{mismatches} mismatches in 1000 pairs, {took:?}"),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_min(cost: &[Vec<f64>]) -> f64 {
    permutations(cost.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn hungarian_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let labels = ["a", "b", "c"];
    let mut bc = ConcurrencyRelation::new();
    bc.insert("b", "c");
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = 1 + case % 6;
        if case % 2 == 0 {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(0..100) as f64).collect())
                .collect();
            worst = worst.max((hungarian(&cost).1 - brute_min(&cost)).abs());
        } else {
            // full ELS path: random timed traces, pairing cost against the exhaustive optimum
            let mut log = || -> Vec<Vec<TimedEvent>> {
                (0..n)
                    .map(|_| {
                        (0..rng.random_range(1..=5))
                            .map(|_| TimedEvent::new(labels[rng.random_range(0..3)], rng.random(), rng.random()))
                            .collect()
                    })
                    .collect()
            };
            let (g, s) = (log(), log());
            let cost: Vec<Vec<f64>> = g
                .iter()
                .map(|x| {
                    s.iter()
                        .map(|y| bptd(x, y, &bc, &dynamic()) / x.len().max(y.len()) as f64)
                        .collect()
                })
                .collect();
            let paired: f64 = els(&g, &s, &bc, &dynamic()).pairs.iter().map(|p| p.distance).sum();
            worst = worst.max((paired - brute_min(&cost)).abs());
        }
    }
    let took = start.elapsed();
    outcome(
        worst < 1e-9 && took < Duration::from_secs(5),
        format!("max gap {worst:.2e} over 200 matrices, {took:?}"),
    )
}

fn replay_conservation() -> Outcome {
    let bps = reference_model(100);
    let log = reference_log(100, 21);
    let start = Instant::now();
    let replay = match replay_log(&bps.model, &log) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("replay failed: {e}")),
    };
    let took = start.elapsed();
    let mut processing: BTreeMap<&str, i64> = BTreeMap::new();
    for e in &replay.events {
        *processing.entry(e.case_id.as_str()).or_default() += e.processing_time;
    }
    let conserved = log.traces().iter().all(|t| {
        let direct: i64 = t.events().iter().map(|e| e.end - e.start).sum();
        processing.get(t.case_id()).copied().unwrap_or(0) == direct
    });
    let replayed = replay.events.len() == log.event_count();
    let waits = replay.events.iter().all(|e| e.waiting_time >= 0);
    let firings = replay.gateway_firings.iter().all(|(g, fired)| {
        let traversed: u64 = bps
            .model
            .outputs(*g)
            .iter()
            .map(|f| replay.traversal_frequency[f])
            .sum();
        traversed == *fired
    });
    outcome(
        conserved && replayed && waits && firings && took < Duration::from_secs(1),
        format!("processing conserved {conserved}, waits >= 0 {waits}, firings balanced {firings}, {took:?}"),
    )
}

fn branching_normalization() -> Outcome {
    let model = reference_model(1).model;
    let flows: Vec<_> = model.conditional_flows().collect();
    let replay = ReplayResult {
        traversal_frequency: BTreeMap::from([(flows[0], 563), (flows[1], 608)]),
        ..ReplayResult::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probs = match branching_probabilities(&model, Some(&replay), BranchingMode::Discovered, &mut rng) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (p, q) = (probs[&flows[0]], probs[&flows[1]]);
    let rendered = format!("{p:.2}/{q:.2}");
    let pass = (p - 0.4808).abs() <= 1e-4 && (q - 0.5192).abs() <= 1e-4 && rendered == "0.48/0.52";
    outcome(pass, format!("{p:.4}/{q:.4}, rendered {rendered}"))
}

fn distribution_fitting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let exp: Vec<f64> = (0..10_000)
        .map(|_| Exp::new(1.0 / 100.0).unwrap().sample(&mut rng))
        .collect();
    let normal: Vec<f64> = (0..10_000)
        .map(|_| Normal::new(1285.0, 137.0).unwrap().sample(&mut rng))
        .collect();
    let start = Instant::now();
    let (fe, fn_) = match (fit_distribution(&exp), fit_distribution(&normal)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let took = start.elapsed();
    let exp_ok = fe.pdf.family() == "Exponential" && (fe.mean() - 100.0).abs() <= 5.0;
    let normal_ok = (fn_.mean() - 1285.0).abs() <= 0.02 * 1285.0;
    outcome(
        exp_ok && normal_ok && took < Duration::from_secs(2),
        format!(
            "{} mean {:.1}; {} mean {:.1}; {took:?}",
            fe.pdf.family(),
            fe.mean(),
            fn_.pdf.family(),
            fn_.mean()
        ),
    )
}

fn round_trip_config() -> TrialConfig {
    TrialConfig {
        epsilon: 0.3,
        eta: 0.0,
        repair: RepairMethod::Alignment,
        branching: BranchingMode::Discovered,
        pool_threshold: 0.5,
    }
}

fn self_consistency() -> Outcome {
    let start = Instant::now();
    let ground = reference_log(200, 41);
    let dm = match build_model(&ground, &round_trip_config(), &PipelineOptions::default(), 41) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let scores = match evaluate_model(&ground, &dm.bps, 5, 41, &BptdConfig::default()) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("simulation failed: {e}")),
    };
    let took = start.elapsed();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let pb = branch_to(&dm.bps.model, &dm.bps.branching, "b").unwrap_or(f64::NAN);
    let pc = branch_to(&dm.bps.model, &dm.bps.branching, "c").unwrap_or(f64::NAN);
    let pass = mean >= 0.9 && (pb - 0.7).abs() <= 0.05 && (pc - 0.3).abs() <= 0.05 && took < Duration::from_secs(60);
    outcome(
        pass,
        format!("ELS {mean:.4} over 5 runs, branching {pb:.3}/{pc:.3}, {took:?}"),
    )
}

/// Scales every duration by a uniform factor in [0.8, 1.2].
fn jitter(log: &EventLog, seed: u64) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traces = log
        .traces()
        .iter()
        .map(|t| {
            let events = t
                .events()
                .iter()
                .map(|e| {
                    let d = (e.end - e.start) as f64 * rng.random_range(0.8..=1.2);
                    Event::new(
                        &e.case_id,
                        &e.activity,
                        &e.resource,
                        e.start,
                        e.start + d.round() as i64,
                    )
                    .expect("valid event")
                })
                .collect();
            Trace::new(t.case_id(), events).expect("non-empty trace")
        })
        .collect();
    EventLog::new(traces).expect("valid log")
}

fn optimizer_improvement() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for rep in 0..10u64 {
        let log = jitter(&reference_log(200, 41), 100 + rep);
        let opts = OptimizeOptions::new(20, 3, rep);
        let best = match optimize(&log, &opts) {
            Ok(o) => o.best_trial().mean_els().unwrap_or(0.0),
            Err(e) => return outcome(false, format!("repetition {rep}: {e}")),
        };
        let baseline = run_baseline(&log, 3, rep, &opts.pipeline)
            .result
            .mean_els()
            .unwrap_or(0.0);
        wins += usize::from(best >= baseline);
        rows.push(format!("{best:.3}/{baseline:.3}"));
    }
    let took = start.elapsed();
    outcome(
        wins >= 8 && took < Duration::from_secs(600),
        format!(
            "{wins}/10 repetitions at or above baseline (best/baseline {}), {took:?}",
            rows.join(" ")
        ),
    )
}

fn simulator_determinism() -> Outcome {
    let bps = reference_model(1000);
    let start = Instant::now();
    let csv = |seed: u64| -> Result<(Vec<u8>, EventLog), String> {
        let log = simulate(&bps, &SimConfig::new(seed)).map_err(|e| e.to_string())?.log;
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).map_err(|e| e.to_string())?;
        Ok((buf, log))
    };
    let ((a, log), (b, _)) = match (csv(7), csv(7)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let took = start.elapsed();
    let identical = a == b;
    let overlaps: usize = resource_intervals(&log)
        .values()
        .map(|iv| iv.windows(2).filter(|w| w[1].0 < w[0].1).count())
        .sum();
    outcome(
        identical && overlaps == 0 && log.len() == 1000 && took < Duration::from_secs(30),
        format!(
            "byte-identical {identical}, {} cases, {overlaps} overlapping intervals, {took:?}",
            log.len()
        ),
    )
}

fn repair_postconditions() -> Outcome {
    let bps = reference_model(100);
    let clean = reference_log(100, 51);
    let mut order: Vec<usize> = (0..clean.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(51));
    let broken: BTreeSet<usize> = order[..30].iter().copied().collect();
    // a deviant trace skips d
    let traces: Vec<Trace> = clean
        .traces()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if broken.contains(&i) {
                let events = t.events().iter().filter(|e| e.activity != "d").cloned().collect();
                Trace::new(t.case_id(), events).expect("non-empty trace")
            } else {
                t.clone()
            }
        })
        .collect();
    let log = EventLog::new(traces).expect("valid log");
    let aligner = match Aligner::new(&bps.model, DEFAULT_STATE_CAP) {
        Ok(a) => a,
        Err(e) => return outcome(false, e.to_string()),
    };
    let alignments = match aligner.align_log(&log) {
        Ok(a) => a,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut details = Vec::new();
    let mut pass = true;
    for (method, expected) in [
        (RepairMethod::Removal, 70),
        (RepairMethod::Replacement, 100),
        (RepairMethod::Alignment, 100),
    ] {
        let repaired = match repair_log(&log, &alignments, method) {
            Ok(r) => r.log,
            Err(e) => return outcome(false, format!("{method}: {e}")),
        };
        let fits = match aligner.align_log(&repaired) {
            Ok(a) => a.iter().all(|a| a.fitness == 1.0),
            Err(e) => return outcome(false, format!("{method}: {e}")),
        };
        pass &= fits && repaired.len() == expected;
        details.push(format!("{method} {} traces fit {fits}", repaired.len()));
    }
    outcome(pass, details.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("BPTD worked example", bptd_worked_example),
        ("DL reduction", dl_reduction),
        ("Hungarian exactness", hungarian_exactness),
        ("Replay conservation", replay_conservation),
        ("Branching normalization", branching_normalization),
        ("Distribution fitting", distribution_fitting),
        ("Self-consistency round trip", self_consistency),
        ("Optimizer improvement", optimizer_improvement),
        ("Simulator determinism and resource safety", simulator_determinism),
        ("Repair post-condition", repair_postconditions),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
