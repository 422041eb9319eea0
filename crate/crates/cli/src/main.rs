//! Command-line runner: simulates or replays a scenario, runs the filter
//! and writes per-run traces plus aggregate error statistics.

mod output;
mod report;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use mpslam::engine::MapFeature;
use mpslam::metrics::{mode_belief_trace, rmse_orientation, rmse_position, MATCH_RADIUS};
use mpslam::rng::{derive_seed, stream, tag};
use mpslam::synth::{generate_measurements, Scenario};
use mpslam::{Measurement, Point2, SlamConfig, SlamState};

use output::{
    group_measurements, map_rows, measurement_rows, mode_rows, read_csv, write_atomic, write_csv,
    MeasurementRow, ModeTraceRow, RmseRow, TraceRow,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("scenario file not found: {}", .0.display())]
    MissingScenario(PathBuf),
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("malformed input {}: {detail}", path.display())]
    Malformed { path: PathBuf, detail: String },
    #[error("bad override: {0}")]
    BadOverride(String),
    #[error("run {run}: {source}")]
    Divergence { run: usize, source: mpslam::Error },
    #[error("run {run}: {source}")]
    Model { run: usize, source: mpslam::Error },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingScenario(_) | CliError::MissingInput(_) => 2,
            CliError::Malformed { .. } | CliError::BadOverride(_) => 3,
            CliError::Divergence { .. } => 4,
            CliError::Model { .. } | CliError::Io { .. } => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mpslam",
    version,
    about = "Multipath SLAM with virtual-anchor and point-scatterer features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the filter on a scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replay measurements from a CSV file instead of simulating them.
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override a scenario value, e.g. `--set filter.n_particles=5000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Summarize the outputs of a previous run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// Per-step estimates of one run, steps `1..trajectory.len()`.
struct RunTrace {
    pos: Vec<Point2>,
    orient: Vec<f64>,
    maps: Vec<Vec<MapFeature>>,
}

fn run_one(
    run: usize,
    seed: u64,
    sc: &Scenario,
    cfg: &SlamConfig,
    replay: Option<&[Vec<Measurement>]>,
    out: &Path,
) -> Result<RunTrace, CliError> {
    let run_seed = derive_seed(seed, tag::RUN, run as u64, 0);
    let cfg = SlamConfig {
        seed: run_seed,
        ..cfg.clone()
    };
    let mut state = SlamState::new(&cfg).map_err(|source| CliError::Model { run, source })?;
    let mut trace = Vec::new();
    let mut map = Vec::new();
    let mut modes = Vec::new();
    let mut meas = Vec::new();
    let mut result = RunTrace {
        pos: Vec::new(),
        orient: Vec::new(),
        maps: Vec::new(),
    };
    let mut failure = None;
    for n in 1..sc.trajectory.len() {
        let z = match replay {
            Some(r) => r[n].clone(),
            None => generate_measurements(sc, n, &mut stream(run_seed, tag::SYNTH, n as u64, 0))
                .map_err(|source| CliError::Model { run, source })?,
        };
        meas.extend(measurement_rows(n, &z));
        if let Err(source) = state.step(&z, &cfg) {
            failure = Some(match source {
                mpslam::Error::FilterDivergence { .. } => CliError::Divergence { run, source },
                _ => CliError::Model { run, source },
            });
            break;
        }
        let est = state.estimate(&cfg);
        trace.push(TraceRow::new(n, run, &est, &sc.trajectory[n]));
        map.extend(map_rows(n, run, &est));
        modes.extend(mode_rows(n, run, &est));
        result.pos.push(est.agent.pos);
        result.orient.push(est.orientation);
        result.maps.push(est.map);
    }
    write_csv(&out.join(format!("trace_run{run}.csv")), trace)?;
    write_csv(&out.join(format!("map_run{run}.csv")), map)?;
    write_csv(&out.join(format!("map_modes_run{run}.csv")), modes)?;
    write_csv(&out.join(format!("measurements_run{run}.csv")), meas)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

fn write_aggregates(sc: &Scenario, traces: &[RunTrace], out: &Path) -> Result<(), CliError> {
    let model = |source| CliError::Model { run: 0, source };
    let truth = &sc.trajectory[1..];
    let true_pos: Vec<Point2> = truth.iter().map(|x| x.pos).collect();
    let true_orient: Vec<f64> = truth
        .iter()
        .map(|x| x.orientation().unwrap_or(f64::NAN))
        .collect();
    let pos: Vec<Vec<Point2>> = traces.iter().map(|t| t.pos.clone()).collect();
    let orient: Vec<Vec<f64>> = traces.iter().map(|t| t.orient.clone()).collect();
    let pos_rmse = rmse_position(&pos, &true_pos).map_err(model)?;
    let orient_rmse = rmse_orientation(&orient, &true_orient).map_err(model)?;
    let rows = (0..truth.len()).map(|i| RmseRow {
        step: i + 1,
        pos_rmse_m: pos_rmse[i],
        orient_rmse_deg: orient_rmse[i],
    });
    write_csv(&out.join("rmse.csv"), rows)?;

    let true_map = sc.true_map().map_err(model)?;
    let maps: Vec<Vec<Vec<MapFeature>>> = traces.iter().map(|t| t.maps.clone()).collect();
    let beliefs = mode_belief_trace(&maps, &true_map, MATCH_RADIUS).map_err(model)?;
    let mut rows = Vec::new();
    for i in 0..truth.len() {
        for (t, (p, ty)) in true_map.iter().enumerate() {
            let b = beliefs[t].get(i).copied().flatten();
            rows.push(ModeTraceRow {
                step: i + 1,
                true_feature: t,
                true_type: format!("{ty:?}").to_lowercase(),
                true_x: p.x,
                true_y: p.y,
                p_va: b.map(|b| b[0]),
                p_ps: b.map(|b| b[1]),
            });
        }
    }
    write_csv(&out.join("mode_trace.csv"), rows)
}

fn cmd_run(
    scenario_path: &Path,
    measurements: Option<&Path>,
    runs: usize,
    seed: u64,
    out: &Path,
    overrides: &[String],
) -> Result<(), CliError> {
    let file = scenario::load(scenario_path, overrides)?;
    let (sc, cfg) = file.resolve().map_err(|e| CliError::Malformed {
        path: scenario_path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if runs == 0 {
        return Err(CliError::BadOverride("--runs must be at least 1".into()));
    }
    let replay = match measurements {
        Some(p) => Some(group_measurements(
            &read_csv::<MeasurementRow>(p)?,
            sc.trajectory.len(),
            p,
        )?),
        None => None,
    };
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let json = serde_json::to_vec_pretty(&file).expect("scenario serializes");
    write_atomic(&out.join("scenario.json"), &json)?;

    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(runs);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunTrace, CliError>>>> =
        Mutex::new((0..runs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= runs {
                    break;
                }
                let res = run_one(r, seed, &sc, &cfg, replay.as_deref(), out);
                match &res {
                    Ok(_) => eprintln!("run {r} done"),
                    Err(e) => eprintln!("run {r} failed: {e}"),
                }
                results.lock().expect("no worker panicked")[r] = Some(res);
            });
        }
    });
    let mut traces = Vec::with_capacity(runs);
    for res in results.into_inner().expect("no worker panicked") {
        traces.push(res.expect("every run index was taken")?);
    }
    write_aggregates(&sc, &traces, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run {
            scenario,
            measurements,
            runs,
            seed,
            out,
            overrides,
        } => cmd_run(
            scenario,
            measurements.as_deref(),
            *runs,
            *seed,
            out,
            overrides,
        ),
        Command::Report { input } => report::report(input),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
