//! Case-study behaviour: conservation, limits, route discipline, and
//! bookkeeping identities of the generated ferry-network models.

use shype::opportunet::{
    build_flat, case_observables, GenerationSpec, Scenario, ScenarioSpec,
};
use shype::sim::{simulate_run, Trajectory};
use shype::stats::Observable;

fn busy_spec(scenario: Scenario) -> ScenarioSpec {
    ScenarioSpec {
        scenario,
        generation: GenerationSpec::high_load(),
        ..ScenarioSpec::default()
    }
}

fn observe(spec: &ScenarioSpec, traj: &Trajectory) -> std::collections::HashMap<String, f64> {
    let flat = build_flat(spec).unwrap();
    case_observables(spec)
        .iter()
        .map(|o| (o.name.clone(), o.extract(&flat, traj).unwrap()))
        .collect()
}

#[test]
fn mass_is_conserved_in_every_scenario() {
    for scenario in Scenario::ALL {
        let spec = busy_spec(scenario);
        let flat = build_flat(&spec).unwrap();
        let cfg = spec.sim_config();
        for run in 0..3 {
            let traj = simulate_run(&flat, &cfg, 42, run).unwrap();
            let v = observe(&spec, &traj);
            let balance = v["total_generated"]
                - (v["sensor_level"] + v["total_dropped"] + v["ferry_level"] + v["total_delivered"]);
            assert!(
                balance.abs() < 1e-3,
                "{} run {}: imbalance {} MB",
                scenario.name(),
                run,
                balance
            );
        }
    }
}

#[test]
fn mass_is_conserved_at_every_sample_time() {
    let spec = busy_spec(Scenario::Rtbf);
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    let traj = simulate_run(&flat, &cfg, 7, 0).unwrap();

    let idx = |name: &str| flat.continuous_index(name).unwrap();
    let gen_idx: Vec<usize> = (1..=spec.sensors)
        .map(|i| idx(&format!("totalig_s{}", i)))
        .collect();
    let lvl_idx: Vec<usize> = (1..=spec.sensors)
        .map(|i| idx(&format!("level_s{}", i)))
        .collect();
    let drop_idx: Vec<usize> = (1..=spec.sensors)
        .map(|i| idx(&format!("totald_s{}", i)))
        .collect();
    let ferry = idx("level_ferry");
    let delivered = idx("totalig_base");

    for row in &traj.rows {
        let generated: f64 = gen_idx.iter().map(|&i| row.continuous[i]).sum();
        let held: f64 = lvl_idx.iter().map(|&i| row.continuous[i]).sum();
        let dropped: f64 = drop_idx.iter().map(|&i| row.continuous[i]).sum();
        let balance =
            generated - (held + dropped + row.continuous[ferry] + row.continuous[delivered]);
        assert!(
            balance.abs() < 1e-3,
            "imbalance {} at t = {}",
            balance,
            row.t
        );
    }
}

#[test]
fn no_contact_limit_collects_nothing_and_drops_the_excess() {
    let spec = ScenarioSpec {
        mtc_min: f64::INFINITY,
        generation: GenerationSpec::high_load(),
        ..ScenarioSpec::default()
    };
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    let traj = simulate_run(&flat, &cfg, 5, 0).unwrap();
    let v = observe(&spec, &traj);
    assert_eq!(v["total_collected"], 0.0);
    assert_eq!(v["total_delivered"], 0.0);

    // Without contacts each sensor keeps its first 250 MB and drops the rest.
    for i in 1..=spec.sensors {
        let level = traj.final_row().continuous[flat
            .continuous_index(&format!("level_s{}", i))
            .unwrap()];
        let gen = traj.final_row().continuous[flat
            .continuous_index(&format!("totalig_s{}", i))
            .unwrap()];
        let dropped = traj.final_row().continuous[flat
            .continuous_index(&format!("totald_s{}", i))
            .unwrap()];
        assert!((dropped - (gen - level)).abs() < 1e-3);
        assert!(level <= spec.sensor_mb + 1e-6);
    }
}

#[test]
fn infinite_disk_limit_drops_nothing() {
    let spec = ScenarioSpec {
        sensor_mb: f64::INFINITY,
        generation: GenerationSpec::high_load(),
        ..ScenarioSpec::default()
    };
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    for run in 0..3 {
        let traj = simulate_run(&flat, &cfg, 9, run).unwrap();
        let v = observe(&spec, &traj);
        assert_eq!(v["total_dropped"], 0.0, "run {}", run);
    }
}

#[test]
fn fixed_route_contacts_rotate_cyclically() {
    let spec = busy_spec(Scenario::Raef);
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    let traj = simulate_run(&flat, &cfg, 12, 1).unwrap();

    let targets: Vec<usize> = traj
        .events
        .iter()
        .filter_map(|e| e.name.strip_prefix("prox_s").map(|i| i.parse::<usize>().unwrap()))
        .collect();
    assert!(targets.len() >= 10, "too few contacts: {}", targets.len());
    for (k, &target) in targets.iter().enumerate() {
        assert_eq!(target, (k % spec.sensors) + 1, "contact {} off route", k);
    }
}

#[test]
fn random_route_touches_multiple_sensors() {
    let spec = busy_spec(Scenario::Raer);
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    let traj = simulate_run(&flat, &cfg, 12, 1).unwrap();
    let distinct: std::collections::BTreeSet<&str> = traj
        .events
        .iter()
        .filter(|e| e.name.starts_with("prox_s"))
        .map(|e| e.name.as_str())
        .collect();
    assert!(distinct.len() > 3, "only {:?}", distinct);
}

#[test]
fn trackers_never_decrease_and_levels_stay_bounded() {
    for scenario in [Scenario::Raer, Scenario::Rtbf] {
        let spec = busy_spec(scenario);
        let flat = build_flat(&spec).unwrap();
        let cfg = spec.sim_config();
        let traj = simulate_run(&flat, &cfg, 21, 0).unwrap();

        let trackers: Vec<usize> = flat
            .continuous
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name.starts_with("totalig") || c.name.starts_with("totald"))
            .map(|(i, _)| i)
            .collect();
        for pair in traj.rows.windows(2) {
            for &i in &trackers {
                assert!(
                    pair[1].continuous[i] >= pair[0].continuous[i] - 1e-9,
                    "{} decreased at t = {}",
                    flat.continuous[i].name,
                    pair[1].t
                );
            }
        }

        for row in &traj.rows {
            for i in 1..=spec.sensors {
                let level =
                    row.continuous[flat.continuous_index(&format!("level_s{}", i)).unwrap()];
                assert!(level >= -1e-6 && level <= spec.sensor_mb + 1e-6);
            }
            let ferry = row.continuous[flat.continuous_index("level_ferry").unwrap()];
            assert!(ferry >= -1e-6 && ferry <= spec.ferry_mb + 1e-6);
        }
    }
}

#[test]
fn tiny_ferry_buffer_bookkeeping_identity() {
    let spec = ScenarioSpec {
        ferry_mb: 10.0,
        generation: GenerationSpec::high_load(),
        ..busy_spec(Scenario::Rtbf)
    };
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    let traj = simulate_run(&flat, &cfg, 33, 0).unwrap();
    let v = observe(&spec, &traj);
    assert!(v["total_collected"] > 0.0);
    let residual = v["total_collected"] - v["ferry_level"];
    assert!(
        (v["total_delivered"] - residual).abs() < 1e-3,
        "delivered {} vs collected-minus-held {}",
        v["total_delivered"],
        residual
    );
}

#[test]
fn collected_at_horizon_never_exceeds_final_intake() {
    let spec = busy_spec(Scenario::Raer);
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    let observables = case_observables(&spec);
    let at_horizon: &Observable = observables
        .iter()
        .find(|o| o.name == "collected_at_horizon")
        .unwrap();
    let total: &Observable = observables
        .iter()
        .find(|o| o.name == "total_collected")
        .unwrap();
    for run in 0..4 {
        let traj = simulate_run(&flat, &cfg, 77, run).unwrap();
        let a = at_horizon.extract(&flat, &traj).unwrap();
        let b = total.extract(&flat, &traj).unwrap();
        assert!(a <= b + 1e-9);
    }
}

#[test]
fn window_end_stops_generation() {
    let spec = busy_spec(Scenario::Raer);
    let flat = build_flat(&spec).unwrap();
    let mut cfg = spec.sim_config();
    cfg.t_end = spec.horizon_h + 1.0;
    let traj = simulate_run(&flat, &cfg, 3, 0).unwrap();

    let hend = traj.events.iter().find(|e| e.name == "hend").unwrap();
    assert!((hend.t - spec.horizon_h).abs() < 1e-6);

    let gen_idx: Vec<usize> = (1..=spec.sensors)
        .map(|i| flat.continuous_index(&format!("totalig_s{}", i)).unwrap())
        .collect();
    let after: Vec<&shype::sim::SampleRow> = traj
        .rows
        .iter()
        .filter(|r| r.t >= spec.horizon_h)
        .collect();
    assert!(after.len() >= 2);
    let first: f64 = gen_idx.iter().map(|&i| after[0].continuous[i]).sum();
    let last: f64 = gen_idx.iter().map(|&i| after[after.len() - 1].continuous[i]).sum();
    assert!((first - last).abs() < 1e-9, "generation continued past the window");
}

#[test]
fn nominal_defaults_generate_too_little_to_drop() {
    // Documented limitation of the nominal parameters: each sensor expects
    // about one 3-minute burst at 1.25 MB/min inside the 8 h window, so
    // disks never get anywhere near 250 MB.
    let spec = ScenarioSpec::default();
    let flat = build_flat(&spec).unwrap();
    let cfg = spec.sim_config();
    for run in 0..10 {
        let traj = simulate_run(&flat, &cfg, 100, run).unwrap();
        let v = observe(&spec, &traj);
        assert_eq!(v["total_dropped"], 0.0, "run {}", run);
        assert!(v["total_generated"] < 100.0);
    }
}
