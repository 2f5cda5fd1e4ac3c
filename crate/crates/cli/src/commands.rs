use std::fs;
use std::path::Path;

use bps_forge::accuracy::{alpha_oracle, assess, estimate_waiting, BptdConfig, TimedLog};
use bps_forge::event_log::{parse_csv, parse_xes, write_csv, ColumnMap, CsvOptions, EventLog, LogError};
use bps_forge::optimizer::{
    build_model, optimize as run_optimizer, run_baseline, write_history, OptimizeOptions, OptimizerError,
    PipelineOptions, TrialConfig,
};
use bps_forge::parameters::BpsModel;
use bps_forge::simulator::{derive_seed, run_batch, SimConfig};
use log::warn;

use crate::{report, CliError, DiscoverArgs, EvaluateArgs, LogArgs, OptimizeArgs, SimulateArgs};

fn columns(args: &LogArgs) -> ColumnMap {
    ColumnMap {
        case_id: args.case_column.clone(),
        activity: args.activity_column.clone(),
        resource: (!args.resource_column.is_empty()).then(|| args.resource_column.clone()),
        start: args.start_column.clone(),
        end: args.end_column.clone(),
    }
}

fn read_log(path: &Path, columns: ColumnMap) -> Result<EventLog, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("log file {} does not exist", path.display())));
    }
    let is_xes = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xes"));
    let parsed: Result<EventLog, LogError> = if is_xes {
        parse_xes(path).map(|p| {
            if p.repaired_events > 0 {
                warn!(
                    "{} events had no matching start/complete pair and got zero duration",
                    p.repaired_events
                );
            }
            p.log
        })
    } else {
        parse_csv(
            path,
            &CsvOptions {
                columns,
                ..CsvOptions::default()
            },
        )
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn in_unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{name} must lie in [0, 1], got {v}")))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn pipeline_error(e: OptimizerError) -> CliError {
    let stage = match &e {
        OptimizerError::Discovery(_) => "discovery",
        OptimizerError::Conformance(_) | OptimizerError::EmptyRepair => "conformance",
        OptimizerError::Replay(_) => "replay",
        OptimizerError::Parameters(_) => "parameters",
        OptimizerError::Simulation(_) => "simulation",
        OptimizerError::Budget | OptimizerError::NoSuccessfulTrial(_) => "optimization",
    };
    let message = match e {
        OptimizerError::Discovery(e) => e.to_string(),
        OptimizerError::Conformance(e) => e.to_string(),
        OptimizerError::Replay(e) => e.to_string(),
        OptimizerError::Parameters(e) => e.to_string(),
        OptimizerError::Simulation(e) => e.to_string(),
        other => other.to_string(),
    };
    CliError::Stage { stage, message }
}

pub fn discover(args: &DiscoverArgs) -> Result<(), CliError> {
    in_unit("epsilon", args.epsilon)?;
    in_unit("eta", args.eta)?;
    in_unit("pool-threshold", args.pool_threshold)?;
    let log = read_log(&args.input.log, columns(&args.input))?;
    let config = TrialConfig {
        epsilon: args.epsilon,
        eta: args.eta,
        repair: args.repair,
        branching: args.branching,
        pool_threshold: args.pool_threshold,
    };
    let dm = build_model(&log, &config, &PipelineOptions::default(), args.seed).map_err(pipeline_error)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("model.json"), dm.bps.to_json().as_bytes())?;
    let text = report::discovery(&log, &config, &dm, args.format);
    for w in report::discovery_warnings(&log, &dm) {
        warn!("{w}");
    }
    print!("{text}");
    Ok(())
}

fn read_model(path: &Path) -> Result<BpsModel, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid model {}: {e}", path.display())))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    if args.traces == Some(0) {
        return Err(CliError::Config("--traces must be at least 1".into()));
    }
    let bps = read_model(&args.model)?;
    let seeds: Vec<u64> = (0..args.runs as u64).map(|r| derive_seed(args.seed, r)).collect();
    let cfg = SimConfig {
        trace_count: args.traces,
        ..SimConfig::new(args.seed)
    };
    let logs = run_batch(&bps, &cfg, &seeds).map_err(|e| CliError::stage("simulation", e))?;
    create_dir(&args.out)?;
    for (r, sim) in logs.iter().enumerate() {
        let path = args.out.join(format!("sim_{}.csv", r + 1));
        let mut buf = Vec::new();
        write_csv(&sim.log, &mut buf).map_err(|e| CliError::stage("simulation", e))?;
        write_file(&path, &buf)?;
        println!(
            "{} ({} traces, {} events)",
            path.display(),
            sim.log.len(),
            sim.log.event_count()
        );
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let ground = read_log(&args.ground, ColumnMap::default())?;
    let simulated = read_log(&args.simulated, ColumnMap::default())?;
    if ground.len() != simulated.len() {
        warn!(
            "ground truth has {} traces and the simulated log {}; unmatched traces count as distance 1",
            ground.len(),
            simulated.len()
        );
    }
    let rel = alpha_oracle(&ground);
    let gw = estimate_waiting(&ground, &rel);
    let sw = estimate_waiting(&simulated, &rel);
    let a = assess(
        TimedLog {
            log: &ground,
            waiting: &gw,
        },
        TimedLog {
            log: &simulated,
            waiting: &sw,
        },
        &BptdConfig::default(),
    );
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let rows = report::pair_rows(&ground, &simulated, &a);
        write_file(&dir.join("pairing.csv"), report::pairs_csv(&rows).as_bytes())?;
    }
    print!("{}", report::evaluation(&ground, &simulated, &a, args.format));
    Ok(())
}

pub fn optimize(args: &OptimizeArgs) -> Result<(), CliError> {
    if args.trials == 0 || args.runs == 0 {
        return Err(CliError::Config("--trials and --runs must be at least 1".into()));
    }
    let log = read_log(&args.input.log, columns(&args.input))?;
    let mut opts = OptimizeOptions::new(args.trials, args.runs, args.seed);
    opts.batch = args.batch.max(1);
    let result = run_optimizer(&log, &opts).map_err(pipeline_error)?;
    let baseline = (!args.no_baseline).then(|| run_baseline(&log, args.runs, args.seed, &opts.pipeline).result);

    create_dir(&args.out)?;
    let mut history = Vec::new();
    write_history(&result.history, &mut history).map_err(|e| CliError::stage("optimization", e))?;
    write_file(&args.out.join("history.csv"), &history)?;
    write_file(
        &args.out.join("best_model.json"),
        result.best_model.bps.to_json().as_bytes(),
    )?;

    let name = args
        .input
        .log
        .file_stem()
        .map_or_else(|| "log".to_string(), |s| s.to_string_lossy().into_owned());
    print!(
        "{}",
        report::optimization(&name, &result, baseline.as_ref(), args.format)
    );
    Ok(())
}
