//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Criteria 5, 6 and 8 share one MTC sweep (four scenarios, six contact
//! intervals, 200 runs per point on a four-worker pool), computed once.
//! Trend experiments use the desk-scale configuration
//! [`ScenarioSpec::trend_scale`]: under the nominal generation profile
//! sensors produce a few megabytes per window against 250 MB disks, so
//! dropped data is identically zero and no trend is measurable.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use shype::flat::flatten;
use shype::opportunet::{
    buffer_sweep, case_observables, mtc_sweep, run_scenario_batch, Scenario, ScenarioSpec,
};
use shype::parse::{load, render};
use shype::rng::ForcedUniforms;
use shype::sim::{simulate, simulate_run, SimConfig};
use shype::stats::{run_batch, BatchOptions, Observable, SweepTable};
use shype::testmodels;

const MTC_VALUES: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 30.0, 60.0];
const BUFFER_VALUES: [f64; 5] = [100.0, 250.0, 500.0, 1000.0, 2000.0];
const TREND_SEED: u64 = 41;
const BUFFER_SEED: u64 = 42;

fn exemplar_text() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/network_node.hype");
    std::fs::read_to_string(path).unwrap()
}

fn mtc_table() -> &'static (SweepTable, Duration) {
    static TABLE: OnceLock<(SweepTable, Duration)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let base = ScenarioSpec::trend_scale();
        let t0 = Instant::now();
        let table = mtc_sweep(
            &base,
            &Scenario::ALL,
            &MTC_VALUES,
            200,
            TREND_SEED,
            &BatchOptions { jobs: Some(4) },
        )
        .unwrap();
        (table, t0.elapsed())
    })
}

struct Cell {
    mean: f64,
    lo: f64,
    hi: f64,
}

fn cell(table: &SweepTable, series: &str, x: f64, observable: &str) -> Cell {
    let oi = table
        .observables
        .iter()
        .position(|o| o.name == observable)
        .unwrap();
    let s = table
        .series
        .iter()
        .find(|s| s.label == series)
        .unwrap()
        .points
        .iter()
        .find(|p| p.x == x)
        .unwrap();
    let summary = &s.batch.summaries[oi];
    Cell {
        mean: summary.mean,
        lo: summary.ci_lo(),
        hi: summary.ci_hi(),
    }
}

fn overlap(a: &Cell, b: &Cell) -> bool {
    a.lo <= b.hi && b.lo <= a.hi
}

/// Adjacent-point decreases are allowed only where the 95% intervals
/// overlap.
fn assert_monotone(
    table: &SweepTable,
    series: &str,
    observable: &str,
    xs: &[f64],
    increasing: bool,
) {
    for pair in xs.windows(2) {
        let a = cell(table, series, pair[0], observable);
        let b = cell(table, series, pair[1], observable);
        let ordered = if increasing {
            b.mean >= a.mean
        } else {
            b.mean <= a.mean
        };
        assert!(
            ordered || overlap(&a, &b),
            "{} {}: {} -> {} violates monotonicity at x = {} -> {} with disjoint intervals",
            series,
            observable,
            a.mean,
            b.mean,
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn criterion_1_analytic_firing_oracle() {
    let t0 = Instant::now();
    let rate = 0.5;
    let model = testmodels::single_event_model(rate);
    let flat = flatten(&model).unwrap();

    // Forced U = e^-1 makes the threshold exactly 1, so the firing time is
    // -ln(U)/lambda = 2.
    let mut cfg = SimConfig::new(3.0);
    cfg.output_points = 3;
    let mut forced = ForcedUniforms::new(vec![(-1.0f64).exp()]);
    let traj = simulate(&flat, &cfg, &mut forced).unwrap();
    let first = traj.events.iter().find(|e| e.name == "tick").unwrap();
    assert!(
        (first.t - 2.0).abs() <= 1e-6,
        "forced-U firing at {}",
        first.t
    );

    // Sampled inter-event times over 10^4 firings against Exp(0.5).
    let mut cfg = SimConfig::new(21_000.0);
    cfg.output_points = 4;
    let traj = simulate_run(&flat, &cfg, 2024, 0).unwrap();
    let times: Vec<f64> = traj
        .events
        .iter()
        .filter(|e| e.name == "tick")
        .map(|e| e.t)
        .collect();
    assert!(times.len() > 10_000, "only {} firings", times.len());
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.truncate(10_000);
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in gaps.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        d = d.max((i + 1) as f64 / n - f);
        d = d.max(f - i as f64 / n);
    }
    let crit = (-(0.01f64 / 2.0).ln() / 2.0).sqrt() / n.sqrt();
    assert!(d < crit, "KS statistic {} over critical {}", d, crit);

    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {:?}", elapsed);
    println!(
        "criterion 1 (analytic firing oracle, KS vs Exp(0.5)): PASS in {:?}",
        elapsed
    );
}

#[test]
fn criterion_2_urgency_oracle() {
    let model = testmodels::fill_only_model();
    let flat = flatten(&model).unwrap();
    let cfg = SimConfig::new(150.0);
    let mut forced = ForcedUniforms::new(vec![0.5]);
    let traj = simulate(&flat, &cfg, &mut forced).unwrap();

    let full = traj.events.iter().find(|e| e.name == "full").unwrap();
    assert!((full.t - 100.0).abs() <= 1e-6, "full fired at {}", full.t);

    let sel = flat
        .discrete
        .iter()
        .position(|d| d.name == "I_filler")
        .unwrap();
    let zero_branch = flat.discrete[sel]
        .domain
        .iter()
        .position(|e| e == "full")
        .unwrap();
    assert_eq!(traj.final_row().discrete[sel], zero_branch);
    let mut field = vec![0.0];
    flat.vector_field(full.t, &[100.0], &traj.final_row().discrete, &mut field);
    assert_eq!(field[0], 0.0);
    println!("criterion 2 (urgent guard at t = 100, selector parked on zero branch): PASS");
}

#[test]
fn criterion_3_buffer_invariant() {
    let t0 = Instant::now();
    let model = load(&exemplar_text()).unwrap();
    let flat = flatten(&model).unwrap();
    let cfg = SimConfig::new(1000.0);
    let b = flat.continuous_index("B").unwrap();
    for run in 0..200 {
        let traj = simulate_run(&flat, &cfg, 77, run).unwrap();
        for row in &traj.rows {
            let v = row.continuous[b];
            assert!(
                (-1e-6..=100.0 + 1e-6).contains(&v),
                "run {}: B = {} at t = {}",
                run,
                v,
                row.t
            );
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {:?}", elapsed);
    println!(
        "criterion 3 (200 runs, B within [-1e-6, 100+1e-6]): PASS in {:?}",
        elapsed
    );
}

#[test]
fn criterion_4_mass_conservation() {
    for scenario in Scenario::ALL {
        let spec = ScenarioSpec::default().with_scenario(scenario);
        let out = run_scenario_batch(&spec, 50, 7, &BatchOptions::default()).unwrap();
        let col = |name: &str| {
            case_observables(&spec)
                .iter()
                .position(|o| o.name == name)
                .unwrap()
        };
        let (gen, dropped, level, ferry, delivered) = (
            col("total_generated"),
            col("total_dropped"),
            col("sensor_level"),
            col("ferry_level"),
            col("total_delivered"),
        );
        for (run, row) in out.raw.iter().enumerate() {
            let balance = row[gen] - (row[level] + row[dropped] + row[ferry] + row[delivered]);
            assert!(
                balance.abs() <= 1e-3,
                "{} run {}: imbalance {} MB",
                scenario.name(),
                run,
                balance
            );
        }
    }
    println!("criterion 4 (mass conservation, 50 runs x 4 scenarios, 1e-3 MB): PASS");
}

#[test]
fn criterion_5_dropped_trend() {
    let (table, _) = mtc_table();

    for scenario in Scenario::ALL {
        assert_monotone(table, scenario.name(), "total_dropped", &MTC_VALUES, true);
    }

    // At the largest contact interval the fixed routes drop no more than
    // their random counterparts.
    for (fixed, random) in [(Scenario::Raef, Scenario::Raer), (Scenario::Rtbf, Scenario::Rtbr)] {
        let f = cell(table, fixed.name(), 60.0, "total_dropped");
        let r = cell(table, random.name(), 60.0, "total_dropped");
        assert!(
            f.mean <= r.mean,
            "{} dropped {} vs {} {}",
            fixed.name(),
            f.mean,
            random.name(),
            r.mean
        );
    }

    // Somewhere in the sweep the separation is outside both intervals.
    let separated = MTC_VALUES.iter().any(|&x| {
        [(Scenario::Raef, Scenario::Raer), (Scenario::Rtbf, Scenario::Rtbr)]
            .iter()
            .any(|(fixed, random)| {
                let f = cell(table, fixed.name(), x, "total_dropped");
                let r = cell(table, random.name(), x, "total_dropped");
                f.hi < r.lo
            })
    });
    assert!(separated, "no sweep point separates fixed from random drops");
    println!("criterion 5 (dropped nondecreasing in MTC; fixed <= random): PASS");
}

#[test]
fn criterion_6_collected_trend() {
    let (table, _) = mtc_table();

    for scenario in Scenario::ALL {
        assert_monotone(table, scenario.name(), "total_collected", &MTC_VALUES, false);
    }

    let separated = MTC_VALUES.iter().any(|&x| {
        [(Scenario::Raef, Scenario::Raer), (Scenario::Rtbf, Scenario::Rtbr)]
            .iter()
            .any(|(fixed, random)| {
                let f = cell(table, fixed.name(), x, "total_collected");
                let r = cell(table, random.name(), x, "total_collected");
                f.lo > r.hi
            })
    });
    assert!(
        separated,
        "no sweep point separates fixed from random collection"
    );
    println!("criterion 6 (collected nonincreasing in MTC; fixed >= random somewhere): PASS");
}

#[test]
fn criterion_7_buffer_trend() {
    let base = ScenarioSpec::trend_scale();
    let table = buffer_sweep(
        &base,
        &[Scenario::Raer, Scenario::Raef],
        &BUFFER_VALUES,
        100,
        BUFFER_SEED,
        &BatchOptions { jobs: Some(4) },
    )
    .unwrap();

    for scenario in [Scenario::Raer, Scenario::Raef] {
        let small = cell(&table, scenario.name(), 100.0, "total_collected");
        let large = cell(&table, scenario.name(), 2000.0, "total_collected");
        assert!(
            small.mean < large.mean && small.hi < large.lo,
            "{}: collected {} [{},{}] at 100 MB vs {} [{},{}] at 2000 MB",
            scenario.name(),
            small.mean,
            small.lo,
            small.hi,
            large.mean,
            large.lo,
            large.hi
        );
    }
    println!("criterion 7 (collected at 100 MB strictly below 2000 MB for rae*): PASS");
}

#[test]
fn criterion_8_performance() {
    // One default case-study run.
    let spec = ScenarioSpec::default();
    let flat = flatten(&shype::opportunet::build_ferry_network(&spec).unwrap()).unwrap();
    let cfg = spec.sim_config();
    let t0 = Instant::now();
    simulate_run(&flat, &cfg, 1, 0).unwrap();
    let single = t0.elapsed();
    assert!(single < Duration::from_secs(10), "single run took {:?}", single);

    // The full six-point, four-scenario, 200-run sweep on four workers.
    let (_, sweep_elapsed) = mtc_table();
    assert!(
        *sweep_elapsed < Duration::from_secs(2 * 3600),
        "sweep took {:?}",
        sweep_elapsed
    );
    println!(
        "criterion 8 (single run {:?}; full MTC sweep {:?} on 4 workers): PASS",
        single, sweep_elapsed
    );
}

#[test]
fn criterion_9_roundtrip_and_golden() {
    let model = load(&exemplar_text()).unwrap();
    assert!(shype::model::validate(&model).is_valid());

    let rendered = render(&model);
    let again = load(&rendered).unwrap();
    let flat_a = flatten(&model).unwrap();
    let flat_b = flatten(&again).unwrap();
    assert_eq!(flat_a.dump(), flat_b.dump(), "round trip is not isomorphic");

    let golden_path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/golden/network_node_flat.txt"
    );
    let golden = std::fs::read_to_string(golden_path).unwrap();
    assert_eq!(flat_a.dump(), golden, "flat dump drifted from reviewed golden");
    println!("criterion 9 (round trip isomorphism and reviewed golden dump): PASS");
}

#[test]
fn criterion_10_reproducibility() {
    let model = load(&exemplar_text()).unwrap();
    let flat = flatten(&model).unwrap();
    let cfg = SimConfig::new(100.0);
    let a = simulate_run(&flat, &cfg, 24301, 0).unwrap();
    let b = simulate_run(&flat, &cfg, 24301, 0).unwrap();
    assert_eq!(a.to_csv(), b.to_csv(), "trajectory CSVs differ across invocations");
    assert_eq!(a.events_csv(), b.events_csv());

    let obs = vec![Observable::final_value("B_end", "B")];
    let one = run_batch(&flat, 32, 5, &obs, &cfg, &BatchOptions { jobs: Some(1) }).unwrap();
    let four = run_batch(&flat, 32, 5, &obs, &cfg, &BatchOptions { jobs: Some(4) }).unwrap();
    assert_eq!(one.summaries, four.summaries);
    assert_eq!(one.raw, four.raw);
    println!("criterion 10 (byte-identical CSVs; summaries invariant in --jobs): PASS");
}
