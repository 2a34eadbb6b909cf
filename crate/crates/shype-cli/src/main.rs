//! Command-line front end: validate, simulate, batch, sweep, casestudy,
//! render.
//!
//! Exit codes partition outcomes: 0 success, 1 model error, 2 I/O error,
//! 3 runtime (simulation) error. All invocations are deterministic given
//! their flags; the default seed is the documented constant 24301 and can
//! be overridden with `--seed` or the `SHYPE_SEED` environment variable.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use shype::flat::{flatten, FlatSystem};
use shype::model::validate;
use shype::opportunet::{
    buffer_sweep, generate_source, mtc_sweep, parse_scenario_file,
    run_scenario_batch, CaseStudyPlan, ExperimentKind,
};
use shype::parse::{load, render};
use shype::sim::{simulate_run, SimConfig};
use shype::stats::{
    export_gnuplot, export_table, run_batch, sweep, BatchOptions, EnsembleSummary, Observable,
    SweepSpec, SweepTable,
};

/// Default master seed, fixed for reproducible invocations.
const DEFAULT_SEED: u64 = 24301;

#[derive(Parser)]
#[command(
    name = "shype",
    version,
    about = "Stochastic HYPE: hybrid stochastic simulation of process-algebra models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SimArgs {
    /// Master seed for the run's random stream.
    #[arg(long, env = "SHYPE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Simulation horizon in model time units.
    #[arg(long, default_value_t = 100.0)]
    t_end: f64,
    /// Integrator relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    /// Integrator absolute tolerance.
    #[arg(long, default_value_t = 1e-9)]
    atol: f64,
    /// Output-grid sample count.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Output format (only csv is supported).
    #[arg(long, default_value = "csv", value_parser = ["csv"])]
    format: String,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        let mut cfg = SimConfig::new(self.t_end);
        cfg.rtol = self.rtol;
        cfg.atol = self.atol;
        cfg.output_points = self.points;
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse, elaborate and validate a model file.
    Validate {
        /// Model file (.hype).
        model: PathBuf,
    },
    /// Simulate one run and write trajectory and event-log CSVs.
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run N independent replications and summarise every variable.
    Batch {
        model: PathBuf,
        /// Number of runs.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Sweep one model parameter over a list of values.
    Sweep {
        model: PathBuf,
        /// Parameter to sweep.
        #[arg(long)]
        param: String,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run the opportunistic-network experiment described by a scenario
    /// file, exporting per-figure CSVs.
    Casestudy {
        /// Scenario definition file (key = value lines).
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override the scenario file's seed.
        #[arg(long, env = "SHYPE_SEED")]
        seed: Option<u64>,
    },
    /// Render a model (or a scenario file's generated model) to canonical
    /// source on standard output.
    Render {
        input: PathBuf,
        /// Treat the input as a scenario file and emit the generated model.
        #[arg(long)]
        scenario: bool,
    },
}

enum CliError {
    Model(String),
    Io(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(_) => 1,
            CliError::Io(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Model(m) | CliError::Io(m) | CliError::Runtime(m) => m,
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {}", parent.display(), e)))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))
}

fn load_flat(path: &Path) -> Result<FlatSystem, CliError> {
    let text = read_input(path)?;
    let model = load(&text).map_err(|e| CliError::Model(e.to_string()))?;
    let flat = flatten(&model).map_err(|e| CliError::Model(e.to_string()))?;
    for warning in &flat.warnings {
        eprintln!("warning: {}", warning);
    }
    Ok(flat)
}

fn jobs_options(jobs: usize) -> BatchOptions {
    BatchOptions {
        jobs: if jobs == 0 { None } else { Some(jobs) },
    }
}

fn summaries_csv(summaries: &[EnsembleSummary]) -> String {
    let mut csv = String::from("observable,n,mean,sd,ci_lo,ci_hi\n");
    for s in summaries {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.observable,
            s.n,
            s.mean,
            s.sd,
            s.ci_lo(),
            s.ci_hi()
        ));
    }
    csv
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Validate { model } => {
            let text = read_input(&model)?;
            let parsed = load(&text).map_err(|e| CliError::Model(e.to_string()))?;
            let report = validate(&parsed);
            if !report.is_valid() {
                return Err(CliError::Model(report.to_string()));
            }
            println!(
                "{}: well-defined ({} variables, {} events, {} subcomponents)",
                model.display(),
                parsed.variables.len(),
                parsed.events.len(),
                parsed.subcomponents.len()
            );
            Ok(())
        }

        Command::Simulate { model, sim } => {
            let flat = load_flat(&model)?;
            let cfg = sim.config();
            let t0 = Instant::now();
            let traj = simulate_run(&flat, &cfg, sim.seed, 0)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let wall = t0.elapsed();
            write_output(&sim.out.join("trajectory.csv"), &traj.to_csv())?;
            write_output(&sim.out.join("events.csv"), &traj.events_csv())?;
            println!(
                "{} events fired, {} samples, wall time {:?}; wrote {}",
                traj.events.len(),
                traj.rows.len(),
                wall,
                sim.out.display()
            );
            Ok(())
        }

        Command::Batch {
            model,
            runs,
            jobs,
            sim,
        } => {
            let flat = load_flat(&model)?;
            let cfg = sim.config();
            let observables: Vec<Observable> = flat
                .continuous
                .iter()
                .map(|c| Observable::final_value(c.name.clone(), c.name.clone()))
                .collect();
            let t0 = Instant::now();
            let out = run_batch(&flat, runs, sim.seed, &observables, &cfg, &jobs_options(jobs))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let wall = t0.elapsed();
            write_output(&sim.out.join("summary.csv"), &summaries_csv(&out.summaries))?;
            let mut raw = String::from("run");
            for o in &observables {
                raw.push(',');
                raw.push_str(&o.name);
            }
            raw.push('\n');
            for (i, row) in out.raw.iter().enumerate() {
                raw.push_str(&i.to_string());
                for v in row {
                    raw.push_str(&format!(",{}", v));
                }
                raw.push('\n');
            }
            write_output(&sim.out.join("raw.csv"), &raw)?;
            println!(
                "{} runs in {:?} ({:?}/run); wrote {}",
                runs,
                wall,
                wall / runs.max(1) as u32,
                sim.out.display()
            );
            Ok(())
        }

        Command::Sweep {
            model,
            param,
            values,
            runs,
            jobs,
            sim,
        } => {
            let text = read_input(&model)?;
            let base = load(&text).map_err(|e| CliError::Model(e.to_string()))?;
            if base.param(&param).is_none() {
                return Err(CliError::Model(format!("unknown parameter `{}`", param)));
            }
            let observables: Vec<Observable> = base
                .variables
                .iter()
                .map(|v| Observable::final_value(v.name.clone(), v.name.clone()))
                .collect();
            let cfg = sim.config();
            let spec = SweepSpec {
                parameter: param.clone(),
                values,
                runs,
                master_seed: sim.seed,
                observables: observables.clone(),
            };
            let instantiate = |value: f64| -> Result<FlatSystem, String> {
                let mut m = base.clone();
                m.set_param(&param, value)?;
                let report = validate(&m);
                if !report.is_valid() {
                    return Err(report.to_string());
                }
                flatten(&m).map_err(|e| e.to_string())
            };
            let series = sweep(&base.name, &instantiate, &spec, &cfg, &jobs_options(jobs))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let table = SweepTable {
                parameter: param,
                observables,
                series: vec![series],
            };
            fs::create_dir_all(&sim.out)
                .map_err(|e| CliError::Io(format!("{}: {}", sim.out.display(), e)))?;
            let written = export_table(&table, &sim.out, "sweep_")
                .map_err(|e| CliError::Io(e.to_string()))?;
            export_gnuplot(&table, &sim.out, "sweep_").map_err(|e| CliError::Io(e.to_string()))?;
            println!("wrote {} files to {}", written.len() + 1, sim.out.display());
            Ok(())
        }

        Command::Casestudy {
            scenario,
            out,
            jobs,
            seed,
        } => {
            let text = read_input(&scenario)?;
            let mut plan: CaseStudyPlan =
                parse_scenario_file(&text).map_err(|e| CliError::Model(e.to_string()))?;
            if let Some(seed) = seed {
                plan.seed = seed;
            }
            fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {}", out.display(), e)))?;
            let opts = jobs_options(jobs);

            let t0 = Instant::now();
            let mut total_runs = 0usize;

            if matches!(plan.experiment, ExperimentKind::Mtc | ExperimentKind::Both) {
                let table = mtc_sweep(
                    &plan.base,
                    &plan.scenarios,
                    &plan.mtc_values,
                    plan.runs,
                    plan.seed,
                    &opts,
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
                export_table(&table, &out, "mtc_").map_err(|e| CliError::Io(e.to_string()))?;
                export_gnuplot(&table, &out, "mtc_").map_err(|e| CliError::Io(e.to_string()))?;
                total_runs += plan.scenarios.len() * plan.mtc_values.len() * plan.runs;
            }
            if matches!(plan.experiment, ExperimentKind::Buffer | ExperimentKind::Both) {
                let table = buffer_sweep(
                    &plan.base,
                    &plan.scenarios,
                    &plan.buffer_values,
                    plan.runs_buffer,
                    plan.seed,
                    &opts,
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
                export_table(&table, &out, "buffer_").map_err(|e| CliError::Io(e.to_string()))?;
                export_gnuplot(&table, &out, "buffer_").map_err(|e| CliError::Io(e.to_string()))?;
                total_runs += plan.scenarios.len() * plan.buffer_values.len() * plan.runs_buffer;
            }
            if plan.experiment == ExperimentKind::Single {
                let mut summaries_all = String::new();
                for scenario in &plan.scenarios {
                    let spec = plan.base.with_scenario(*scenario);
                    let batch = run_scenario_batch(&spec, plan.runs, plan.seed, &opts)
                        .map_err(CliError::Runtime)?;
                    summaries_all.push_str(&format!("# scenario {}\n", scenario.name()));
                    summaries_all.push_str(&summaries_csv(&batch.summaries));
                    total_runs += plan.runs;
                }
                write_output(&out.join("single_summary.csv"), &summaries_all)?;
            }

            let wall = t0.elapsed();
            println!(
                "{} runs in {:?} ({:?}/run); wrote {}",
                total_runs,
                wall,
                wall / total_runs.max(1) as u32,
                out.display()
            );
            Ok(())
        }

        Command::Render { input, scenario } => {
            let text = read_input(&input)?;
            if scenario {
                let plan = parse_scenario_file(&text).map_err(|e| CliError::Model(e.to_string()))?;
                print!("{}", generate_source(&plan.base));
            } else {
                let model = load(&text).map_err(|e| CliError::Model(e.to_string()))?;
                print!("{}", render(&model));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
