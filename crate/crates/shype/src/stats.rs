//! Batch execution, ensemble statistics, parameter sweeps, and export.
//!
//! Runs within a batch are independent replications on per-index derived
//! random streams, so they may execute concurrently; results are collected
//! and reduced in index order, making summaries identical for any worker
//! count. Summaries report the sample mean, sample standard deviation and a
//! 95% confidence halfwidth 1.96 * sd / sqrt(N).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::flat::FlatSystem;
use crate::sim::{simulate_run, SimConfig, SimError, Trajectory};

/// Normal 95% critical value; with run counts in the hundreds the
/// Student-t correction is negligible.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    /// Value of one variable in the final row.
    FinalValue(String),
    /// Sum of a variable family in the final row.
    FinalSum(Vec<String>),
    /// Value of one variable at the last sample at or before `t`.
    ValueAt(String, f64),
}

/// A named scalar extractor over a completed trajectory; pure and total.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub kind: ObservableKind,
}

impl Observable {
    pub fn final_value(name: impl Into<String>, var: impl Into<String>) -> Self {
        Observable {
            name: name.into(),
            kind: ObservableKind::FinalValue(var.into()),
        }
    }

    pub fn final_sum(name: impl Into<String>, vars: Vec<String>) -> Self {
        Observable {
            name: name.into(),
            kind: ObservableKind::FinalSum(vars),
        }
    }

    pub fn value_at(name: impl Into<String>, var: impl Into<String>, t: f64) -> Self {
        Observable {
            name: name.into(),
            kind: ObservableKind::ValueAt(var.into(), t),
        }
    }

    pub fn extract(&self, flat: &FlatSystem, traj: &Trajectory) -> Result<f64, SimError> {
        let index = |var: &str| -> Result<usize, SimError> {
            flat.continuous_index(var)
                .ok_or_else(|| SimError::UnknownVariable(var.to_string()))
        };
        match &self.kind {
            ObservableKind::FinalValue(var) => Ok(traj.final_row().continuous[index(var)?]),
            ObservableKind::FinalSum(vars) => {
                let mut total = 0.0;
                for var in vars {
                    total += traj.final_row().continuous[index(var)?];
                }
                Ok(total)
            }
            ObservableKind::ValueAt(var, t) => Ok(traj.value_at(index(var)?, *t)),
        }
    }
}

/// Per-observable summary over N runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub observable: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for N < 2).
    pub sd: f64,
    /// 95% confidence halfwidth 1.96 * sd / sqrt(N).
    pub ci_halfwidth: f64,
}

impl EnsembleSummary {
    pub fn from_values(observable: &str, values: &[f64]) -> Self {
        let n = values.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let sd = if n >= 2 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        let ci_halfwidth = if n >= 1 { Z95 * sd / (n as f64).sqrt() } else { 0.0 };
        EnsembleSummary {
            observable: observable.to_string(),
            n,
            mean,
            sd,
            ci_halfwidth,
        }
    }

    pub fn ci_lo(&self) -> f64 {
        self.mean - self.ci_halfwidth
    }

    pub fn ci_hi(&self) -> f64 {
        self.mean + self.ci_halfwidth
    }

    /// True when the two 95% intervals share no point.
    pub fn ci_disjoint(&self, other: &EnsembleSummary) -> bool {
        self.ci_hi() < other.ci_lo() || other.ci_hi() < self.ci_lo()
    }
}

#[derive(Debug, Clone, Error)]
pub enum BatchError {
    #[error("run {run_index} failed: {source}")]
    RunFailed { run_index: usize, source: SimError },
    #[error("observable error: {0}")]
    Observable(SimError),
}

/// Worker-count knob: `None` uses the default pool, `Some(1)` forces the
/// sequential path, `Some(k)` uses a k-thread pool.
#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub jobs: Option<usize>,
}

/// Raw per-run values (row per run, column per observable) plus summaries.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub summaries: Vec<EnsembleSummary>,
    pub raw: Vec<Vec<f64>>,
}

fn one_run(
    flat: &FlatSystem,
    cfg: &SimConfig,
    observables: &[Observable],
    master_seed: u64,
    run_index: usize,
) -> Result<Vec<f64>, BatchError> {
    let traj = simulate_run(flat, cfg, master_seed, run_index as u64).map_err(|source| {
        BatchError::RunFailed { run_index, source }
    })?;
    observables
        .iter()
        .map(|o| o.extract(flat, &traj).map_err(BatchError::Observable))
        .collect()
}

/// Runs N independent replications on streams `derive_rng(master_seed, i)`
/// for i in 0..N and summarises each observable. Any failing run fails the
/// batch with its index and diagnostic.
pub fn run_batch(
    flat: &FlatSystem,
    n: usize,
    master_seed: u64,
    observables: &[Observable],
    cfg: &SimConfig,
    opts: &BatchOptions,
) -> Result<BatchResult, BatchError> {
    let raw = collect_runs(flat, n, master_seed, observables, cfg, opts)?;
    let summaries = summarise(observables, &raw);
    Ok(BatchResult { summaries, raw })
}

pub fn summarise(observables: &[Observable], raw: &[Vec<f64>]) -> Vec<EnsembleSummary> {
    observables
        .iter()
        .enumerate()
        .map(|(j, obs)| {
            let column: Vec<f64> = raw.iter().map(|row| row[j]).collect();
            EnsembleSummary::from_values(&obs.name, &column)
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn collect_runs(
    flat: &FlatSystem,
    n: usize,
    master_seed: u64,
    observables: &[Observable],
    cfg: &SimConfig,
    opts: &BatchOptions,
) -> Result<Vec<Vec<f64>>, BatchError> {
    use rayon::prelude::*;

    if opts.jobs == Some(1) {
        return collect_runs_sequential(flat, n, master_seed, observables, cfg);
    }
    let task = || {
        (0..n)
            .into_par_iter()
            .map(|i| one_run(flat, cfg, observables, master_seed, i))
            .collect::<Result<Vec<_>, _>>()
    };
    match opts.jobs {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool construction")
            .install(task),
        None => task(),
    }
}

#[cfg(not(feature = "parallel"))]
fn collect_runs(
    flat: &FlatSystem,
    n: usize,
    master_seed: u64,
    observables: &[Observable],
    cfg: &SimConfig,
    _opts: &BatchOptions,
) -> Result<Vec<Vec<f64>>, BatchError> {
    collect_runs_sequential(flat, n, master_seed, observables, cfg)
}

fn collect_runs_sequential(
    flat: &FlatSystem,
    n: usize,
    master_seed: u64,
    observables: &[Observable],
    cfg: &SimConfig,
) -> Result<Vec<Vec<f64>>, BatchError> {
    (0..n)
        .map(|i| one_run(flat, cfg, observables, master_seed, i))
        .collect()
}

/// A parameter sweep: one batch per value, rows ordered by value.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    pub runs: usize,
    pub master_seed: u64,
    pub observables: Vec<Observable>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub x: f64,
    pub batch: BatchResult,
}

#[derive(Debug, Clone)]
pub struct SweepSeries {
    pub label: String,
    pub points: Vec<SweepPoint>,
}

/// A table of sweep results: one series per model/scenario variant, one
/// point per parameter value.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub parameter: String,
    pub observables: Vec<Observable>,
    pub series: Vec<SweepSeries>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("at {parameter} = {value}: {source}")]
    Batch {
        parameter: String,
        value: f64,
        source: BatchError,
    },
    #[error("at {parameter} = {value}: {message}")]
    Instantiate {
        parameter: String,
        value: f64,
        message: String,
    },
}

/// Sweeps one parameter: `instantiate` re-elaborates and re-flattens the
/// model at each value (parameters are compile-time constants).
pub fn sweep(
    label: &str,
    instantiate: &dyn Fn(f64) -> Result<FlatSystem, String>,
    spec: &SweepSpec,
    cfg: &SimConfig,
    opts: &BatchOptions,
) -> Result<SweepSeries, SweepError> {
    let mut points = Vec::new();
    for &value in &spec.values {
        let flat = instantiate(value).map_err(|message| SweepError::Instantiate {
            parameter: spec.parameter.clone(),
            value,
            message,
        })?;
        let batch = run_batch(
            &flat,
            spec.runs,
            spec.master_seed,
            &spec.observables,
            cfg,
            opts,
        )
        .map_err(|source| SweepError::Batch {
            parameter: spec.parameter.clone(),
            value,
            source,
        })?;
        points.push(SweepPoint { x: value, batch });
    }
    Ok(SweepSeries {
        label: label.to_string(),
        points,
    })
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn write_file(path: &Path, content: &str) -> Result<(), ExportError> {
    fs::write(path, content).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one CSV per observable (`series,x,mean,ci_lo,ci_hi,n`) plus a raw
/// per-run CSV (`series,x,run,<observables...>`). File content is
/// deterministic for fixed inputs.
pub fn export_table(
    table: &SweepTable,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<PathBuf>, ExportError> {
    let mut written = Vec::new();

    for (j, obs) in table.observables.iter().enumerate() {
        let mut csv = String::from("series,x,mean,ci_lo,ci_hi,n\n");
        for series in &table.series {
            for point in &series.points {
                let s = &point.batch.summaries[j];
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    series.label,
                    point.x,
                    s.mean,
                    s.ci_lo(),
                    s.ci_hi(),
                    s.n
                ));
            }
        }
        let path = dir.join(format!("{}{}.csv", prefix, obs.name));
        write_file(&path, &csv)?;
        written.push(path);
    }

    let mut raw = String::from("series,x,run");
    for obs in &table.observables {
        raw.push(',');
        raw.push_str(&obs.name);
    }
    raw.push('\n');
    if !table.observables.is_empty() {
        for series in &table.series {
            for point in &series.points {
                for (run, row) in point.batch.raw.iter().enumerate() {
                    raw.push_str(&format!("{},{},{}", series.label, point.x, run));
                    for v in row {
                        raw.push_str(&format!(",{}", v));
                    }
                    raw.push('\n');
                }
            }
        }
    }
    let path = dir.join(format!("{}raw.csv", prefix));
    write_file(&path, &raw)?;
    written.push(path);

    Ok(written)
}

/// Emits a gnuplot script plotting mean with confidence bars from the
/// per-observable CSVs written by [`export_table`].
pub fn export_gnuplot(
    table: &SweepTable,
    dir: &Path,
    prefix: &str,
) -> Result<PathBuf, ExportError> {
    let mut script = String::from("set datafile separator ','\nset key outside\n");
    for obs in &table.observables {
        script.push_str(&format!("set title '{}'\nplot ", obs.name));
        let mut first = true;
        for series in &table.series {
            if !first {
                script.push_str(", ");
            }
            first = false;
            script.push_str(&format!(
                "'{prefix}{obs}.csv' using 2:3:4:5 every ::1 with yerrorlines title '{label}'",
                prefix = prefix,
                obs = obs.name,
                label = series.label
            ));
        }
        script.push_str("\npause -1\n");
    }
    let path = dir.join(format!("{}plot.gp", prefix));
    write_file(&path, &script)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat::flatten;
    use crate::testmodels;

    #[test]
    fn summary_matches_direct_formulas() {
        let s = EnsembleSummary::from_values("x", &[1.0, 2.0, 3.0]);
        assert_eq!(s.n, 3);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 1.0).abs() < 1e-12);
        assert!((s.ci_halfwidth - 1.96 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_run_has_zero_halfwidth() {
        let s = EnsembleSummary::from_values("x", &[5.0]);
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.ci_halfwidth, 0.0);
    }

    #[test]
    fn deterministic_model_has_zero_variance() {
        let model = testmodels::fill_only_model();
        let flat = flatten(&model).unwrap();
        let cfg = SimConfig::new(50.0);
        let obs = vec![Observable::final_value("B_end", "B")];
        let out = run_batch(&flat, 8, 1, &obs, &cfg, &BatchOptions::default()).unwrap();
        assert!((out.summaries[0].mean - 50.0).abs() < 1e-9);
        assert_eq!(out.summaries[0].sd, 0.0);
        assert_eq!(out.summaries[0].ci_halfwidth, 0.0);
    }

    #[test]
    fn batch_summary_carries_run_count() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let cfg = SimConfig::new(10.0);
        let obs = vec![Observable::final_value("B_end", "B")];
        let out = run_batch(&flat, 16, 3, &obs, &cfg, &BatchOptions::default()).unwrap();
        assert_eq!(out.summaries[0].n, 16);
        assert_eq!(out.raw.len(), 16);
    }

    #[test]
    fn summaries_are_permutation_invariant() {
        let values = vec![3.0, -1.0, 7.5, 0.25, 9.0];
        let mut shuffled = values.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let a = EnsembleSummary::from_values("x", &values);
        let b = EnsembleSummary::from_values("x", &shuffled);
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.sd - b.sd).abs() < 1e-12);
    }

    #[test]
    fn jobs_do_not_change_results() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let cfg = SimConfig::new(25.0);
        let obs = vec![
            Observable::final_value("B_end", "B"),
            Observable::value_at("B_mid", "B", 12.5),
        ];
        let seq = run_batch(&flat, 12, 9, &obs, &cfg, &BatchOptions { jobs: Some(1) }).unwrap();
        let par = run_batch(&flat, 12, 9, &obs, &cfg, &BatchOptions { jobs: Some(4) }).unwrap();
        assert_eq!(seq.raw, par.raw);
        assert_eq!(seq.summaries, par.summaries);
    }

    #[test]
    fn singleton_sweep_equals_one_batch() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let cfg = SimConfig::new(20.0);
        let obs = vec![Observable::final_value("B_end", "B")];
        let spec = SweepSpec {
            parameter: "maxB".to_string(),
            values: vec![100.0],
            runs: 10,
            master_seed: 4,
            observables: obs.clone(),
        };
        let instantiate = |_v: f64| -> Result<crate::flat::FlatSystem, String> {
            Ok(flatten(&testmodels::buffer_model()).unwrap())
        };
        let series = sweep("m", &instantiate, &spec, &cfg, &BatchOptions::default()).unwrap();
        let direct = run_batch(&flat, 10, 4, &obs, &cfg, &BatchOptions::default()).unwrap();
        assert_eq!(series.points.len(), 1);
        assert_eq!(series.points[0].batch.raw, direct.raw);
        assert_eq!(series.points[0].batch.summaries, direct.summaries);
    }

    #[test]
    fn export_writes_headers_only_for_no_observables() {
        let table = SweepTable {
            parameter: "p".to_string(),
            observables: vec![],
            series: vec![],
        };
        let dir = std::env::temp_dir().join("shype_stats_test_empty");
        std::fs::create_dir_all(&dir).unwrap();
        let written = export_table(&table, &dir, "t_").unwrap();
        assert_eq!(written.len(), 1);
        let raw = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(raw, "series,x,run\n");
    }
}
