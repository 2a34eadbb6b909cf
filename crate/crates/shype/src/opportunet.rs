//! Opportunistic-network model generation: stationary sensors, a mobile
//! data ferry, and a base station.
//!
//! Nodes are built from capability-driven templates (input, output,
//! generation, drop, removal, plus bookkeeping trackers), connected by
//! per-link controllers and abstract proximity processes: contacts arrive
//! at exponential gaps with mean MTC and either a uniformly random target
//! sensor or a cyclically repeated fixed route. The ferry either returns to
//! base only at the end of the horizon (`rae*`) or whenever its buffer
//! fills (`rtb*`), paying a travel delay proportional to MTC.
//!
//! Generators emit tool-language source, so every generated model passes
//! the full parse/elaborate/validate pipeline and can be dumped for
//! inspection.
//!
//! Units are megabytes and hours throughout. The nominal defaults read
//! "10 Mb per minute" of recorded video as megabits (1.25 MB/min) and
//! "three recordings a day" as a Poisson burst rate of 3/24 per hour;
//! both are configurable.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::flat::{flatten, FlatSystem};
use crate::model::Model;
use crate::parse::{load, LoadError};
use crate::sim::SimConfig;
use crate::stats::{
    run_batch, sweep, BatchOptions, BatchResult, Observable, SweepError, SweepSpec,
    SweepTable,
};

/// Hysteresis gap (MB) between a full-disk guard and its release guard,
/// keeping the pair from chattering at the boundary.
const FULL_HYSTERESIS_MB: f64 = 1e-6;

/// Extra horizon (hours) simulated past the collection window so final
/// unloads complete.
const UNLOAD_TAIL_H: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Return at end, random route.
    Raer,
    /// Return at end, fixed cyclic route.
    Raef,
    /// Return to base when full, random route.
    Rtbr,
    /// Return to base when full, fixed cyclic route.
    Rtbf,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Raer, Scenario::Raef, Scenario::Rtbr, Scenario::Rtbf];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Raer => "raer",
            Scenario::Raef => "raef",
            Scenario::Rtbr => "rtbr",
            Scenario::Rtbf => "rtbf",
        }
    }

    pub fn fixed_route(&self) -> bool {
        matches!(self, Scenario::Raef | Scenario::Rtbf)
    }

    pub fn return_when_full(&self) -> bool {
        matches!(self, Scenario::Rtbr | Scenario::Rtbf)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raer" => Ok(Scenario::Raer),
            "raef" => Ok(Scenario::Raef),
            "rtbr" => Ok(Scenario::Rtbr),
            "rtbf" => Ok(Scenario::Rtbf),
            other => Err(format!("invalid scenario token `{}`", other)),
        }
    }
}

/// Per-stream data generation: bursts start at a Poisson rate, last an
/// exponential duration, and pour fluid at a constant rate while active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSpec {
    pub bursts_per_hour: f64,
    pub burst_mean_min: f64,
    pub fluid_mb_per_min: f64,
}

impl GenerationSpec {
    /// Nominal field parameters: three recordings per day, three minutes
    /// each, ten megabits per minute.
    pub fn nominal() -> Self {
        GenerationSpec {
            bursts_per_hour: 3.0 / 24.0,
            burst_mean_min: 3.0,
            fluid_mb_per_min: 1.25,
        }
    }

    /// A high-duty generation profile under which disks actually fill
    /// within one collection window; the nominal profile generates too
    /// little data for drops or buffer pressure to ever occur.
    pub fn high_load() -> Self {
        GenerationSpec {
            bursts_per_hour: 1.0,
            burst_mean_min: 6.0,
            fluid_mb_per_min: 10.0,
        }
    }

    pub fn fluid_mb_per_hour(&self) -> f64 {
        self.fluid_mb_per_min * 60.0
    }

    pub fn burst_end_rate_per_hour(&self) -> f64 {
        60.0 / self.burst_mean_min
    }
}

/// Case-study configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub sensors: usize,
    /// Mean time to contact, minutes.
    pub mtc_min: f64,
    /// Ferry buffer, MB.
    pub ferry_mb: f64,
    /// Collection window, hours.
    pub horizon_h: f64,
    /// Return-to-base travel delay factor: mean delay = penalty * MTC.
    pub penalty: f64,
    /// Sensor disk, MB.
    pub sensor_mb: f64,
    pub upload_mb_s: f64,
    pub unload_mb_s: f64,
    pub generation: GenerationSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            scenario: Scenario::Raer,
            sensors: 10,
            mtc_min: 15.0,
            ferry_mb: 1000.0,
            horizon_h: 8.0,
            penalty: 2.0,
            sensor_mb: 250.0,
            upload_mb_s: 1.0,
            unload_mb_s: 30.0,
            generation: GenerationSpec::nominal(),
        }
    }
}

impl ScenarioSpec {
    pub fn with_scenario(&self, scenario: Scenario) -> Self {
        ScenarioSpec { scenario, ..self.clone() }
    }

    /// Desk-scale trend configuration for the MTC and buffer sweeps:
    /// moderate generation against small sensor disks, so dropped and
    /// collected data respond to visit frequency across the whole swept
    /// range rather than saturating the ferry buffer. Under the nominal
    /// defaults sensors generate ~4 MB per window against 250 MB disks,
    /// so nothing ever drops and no trend is measurable.
    pub fn trend_scale() -> Self {
        ScenarioSpec {
            sensor_mb: 60.0,
            generation: GenerationSpec {
                bursts_per_hour: 1.0,
                burst_mean_min: 6.0,
                fluid_mb_per_min: 1.8,
            },
            ..ScenarioSpec::default()
        }
    }

    /// Simulation horizon: the collection window plus a tail long enough
    /// for any final unload episode to complete.
    pub fn sim_t_end(&self) -> f64 {
        self.horizon_h + UNLOAD_TAIL_H
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.sim_t_end())
    }

    fn mtc_hours(&self) -> f64 {
        self.mtc_min / 60.0
    }
}

/// Node capabilities per the opportunistic-network framework.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub input: bool,
    pub output: bool,
    pub generate: bool,
    pub drop: bool,
    pub remove: bool,
}

impl Capabilities {
    pub fn sensor() -> Self {
        Capabilities {
            generate: true,
            drop: true,
            output: true,
            ..Default::default()
        }
    }

    pub fn ferry() -> Self {
        Capabilities {
            input: true,
            output: true,
            ..Default::default()
        }
    }

    pub fn base() -> Self {
        Capabilities {
            input: true,
            ..Default::default()
        }
    }
}

/// Specification of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub streams: usize,
    pub caps: Capabilities,
    pub capacity_mb: f64,
    pub generation: Option<GenerationSpec>,
}

/// A unidirectional link with its transfer rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub rate_mb_s: f64,
}

#[derive(Debug, Clone, Error)]
pub enum BuildError {
    #[error("node `{0}` declares no capabilities")]
    NoCapabilities(String),
    #[error("{0}")]
    Invalid(String),
}

/// One subcomponent under construction: an influence on a target variable
/// switched between strengths by events.
#[derive(Debug, Clone)]
pub struct SubcomponentPlan {
    pub name: String,
    pub influence: String,
    pub target: String,
    /// `(event, strength expression)` pairs; `init` is added automatically.
    pub switches: Vec<(String, String)>,
}

impl SubcomponentPlan {
    fn new(name: &str, influence: &str, target: &str) -> Self {
        SubcomponentPlan {
            name: name.to_string(),
            influence: influence.to_string(),
            target: target.to_string(),
            switches: Vec::new(),
        }
    }

    pub fn switch(&mut self, event: &str, strength: impl Into<String>) -> &mut Self {
        self.switches.push((event.to_string(), strength.into()));
        self
    }
}

/// The parts one node contributes: variables, events, subcomponents and
/// node-local controllers. Link wiring is added by the network builder.
#[derive(Debug, Clone, Default)]
pub struct NodeParts {
    pub variables: Vec<(String, f64)>,
    pub parameters: Vec<(String, f64)>,
    /// `(name, guard text, reset text, rate text)`; empty strings omitted.
    pub events: Vec<(String, String, String, String)>,
    pub subcomponents: Vec<SubcomponentPlan>,
    /// `(state name, body text)`.
    pub controllers: Vec<(String, String)>,
    /// Start states of the node's sequential controllers.
    pub controller_starts: Vec<String>,
}

impl NodeParts {
    pub fn subcomponent_names(&self) -> Vec<&str> {
        self.subcomponents.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn variable_names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.0.as_str()).collect()
    }

    fn sub_mut(&mut self, name: &str) -> &mut SubcomponentPlan {
        self.subcomponents
            .iter_mut()
            .find(|s| s.name == name)
            .expect("subcomponent exists")
    }
}

fn suffix(id: &str, stream: usize, streams: usize) -> String {
    if streams > 1 {
        format!("{}_v{}", id, stream)
    } else {
        id.to_string()
    }
}

/// Builds the capability subcomponents, bookkeeping trackers and local
/// controllers for one node and stream.
///
/// Capability map: input contributes `input_*` plus the `keepi_*` tracker,
/// generate contributes `generate_*` plus `keepg_*`, output and drop and
/// remove contribute their single subcomponent each. Buffer-full and
/// buffer-empty guards are generated as `level >= capacity` and
/// `level <= 0` crossings by the users of the node (generation wiring here,
/// link wiring in the network builder).
pub fn build_node(spec: &NodeSpec, stream: usize) -> Result<NodeParts, BuildError> {
    let caps = spec.caps;
    if !(caps.input || caps.output || caps.generate || caps.drop || caps.remove) {
        return Err(BuildError::NoCapabilities(spec.id.clone()));
    }
    let sx = suffix(&spec.id, stream, spec.streams);
    let mut parts = NodeParts::default();

    let level = format!("level_{}", sx);
    parts.variables.push((level.clone(), 0.0));
    if caps.input || caps.generate {
        parts.variables.push((format!("totalig_{}", sx), 0.0));
    }
    if caps.drop {
        parts.variables.push((format!("totald_{}", sx), 0.0));
    }

    if caps.input {
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("input_{}", sx),
            &format!("in_{}", sx),
            &level,
        ));
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("keepi_{}", sx),
            &format!("ki_{}", sx),
            &format!("totalig_{}", sx),
        ));
    }
    if caps.output {
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("output_{}", sx),
            &format!("out_{}", sx),
            &level,
        ));
    }
    if caps.generate {
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("generate_{}", sx),
            &format!("gf_{}", sx),
            &level,
        ));
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("keepg_{}", sx),
            &format!("kg_{}", sx),
            &format!("totalig_{}", sx),
        ));
    }
    if caps.drop {
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("drop_{}", sx),
            &format!("df_{}", sx),
            &format!("totald_{}", sx),
        ));
    }
    if caps.remove {
        parts.subcomponents.push(SubcomponentPlan::new(
            &format!("remove_{}", sx),
            &format!("rm_{}", sx),
            &level,
        ));
    }

    if caps.generate {
        wire_generation(spec, &sx, &mut parts);
    }

    Ok(parts)
}

/// Generation machinery: a burst process switching the generation flow,
/// and, with drop capability, a four-state controller routing fluid to the
/// drop tracker while the disk is full.
fn wire_generation(spec: &NodeSpec, sx: &str, parts: &mut NodeParts) {
    let gen = spec
        .generation
        .unwrap_or_else(GenerationSpec::nominal);
    let g = format!("g_rate_{}", sx);
    let kb = format!("k_burst_{}", sx);
    let ke = format!("k_bend_{}", sx);
    let cap = format!("cap_{}", sx);
    parts.parameters.push((g.clone(), gen.fluid_mb_per_hour()));
    parts.parameters.push((kb.clone(), gen.bursts_per_hour));
    parts
        .parameters
        .push((ke.clone(), gen.burst_end_rate_per_hour()));
    parts.parameters.push((cap.clone(), spec.capacity_mb));

    let level = format!("level_{}", sx);
    let ev = |name: &str| format!("{}_{}", name, sx);

    parts
        .events
        .push((ev("gon"), String::new(), String::new(), kb.clone()));
    parts
        .events
        .push((ev("goff"), String::new(), String::new(), ke.clone()));
    parts.sub_mut(&format!("generate_{}", sx)).switch(&ev("gon"), &g);
    parts.sub_mut(&format!("generate_{}", sx)).switch(&ev("goff"), "0");
    parts.sub_mut(&format!("keepg_{}", sx)).switch(&ev("gon"), &g);
    parts.sub_mut(&format!("keepg_{}", sx)).switch(&ev("goff"), "0");

    let con = |state: &str| format!("cong_{}_{}", sx, state);
    if spec.caps.drop {
        parts
            .events
            .push((ev("gonf"), String::new(), String::new(), kb.clone()));
        parts
            .events
            .push((ev("gofff"), String::new(), String::new(), ke.clone()));
        parts.events.push((
            ev("dfull"),
            format!("above({}, {})", level, cap),
            String::new(),
            String::new(),
        ));
        parts.events.push((
            ev("dfree"),
            format!("below({}, {} - eps)", level, cap),
            String::new(),
            String::new(),
        ));
        parts.events.push((
            ev("dfreei"),
            format!("below({}, {} - eps)", level, cap),
            String::new(),
            String::new(),
        ));

        parts.sub_mut(&format!("generate_{}", sx)).switch(&ev("dfull"), "0");
        parts.sub_mut(&format!("generate_{}", sx)).switch(&ev("dfree"), &g);
        parts.sub_mut(&format!("keepg_{}", sx)).switch(&ev("gonf"), &g);
        parts.sub_mut(&format!("keepg_{}", sx)).switch(&ev("gofff"), "0");
        let drop_name = format!("drop_{}", sx);
        parts.sub_mut(&drop_name).switch(&ev("gonf"), &g);
        parts.sub_mut(&drop_name).switch(&ev("gofff"), "0");
        parts.sub_mut(&drop_name).switch(&ev("dfull"), &g);
        parts.sub_mut(&drop_name).switch(&ev("dfree"), "0");

        parts.controllers.push((
            con("idle"),
            format!("{}.{} + hend.{}", ev("gon"), con("burst"), con("done")),
        ));
        parts.controllers.push((
            con("burst"),
            format!(
                "{}.{} + {}.{} + hend.{}",
                ev("goff"),
                con("idle"),
                ev("dfull"),
                con("bfull"),
                con("done")
            ),
        ));
        parts.controllers.push((
            con("bfull"),
            format!(
                "{}.{} + {}.{} + hend.{}",
                ev("gofff"),
                con("ifull"),
                ev("dfree"),
                con("burst"),
                con("done")
            ),
        ));
        parts.controllers.push((
            con("ifull"),
            format!(
                "{}.{} + {}.{} + hend.{}",
                ev("gonf"),
                con("bfull"),
                ev("dfreei"),
                con("idle"),
                con("done")
            ),
        ));
    } else {
        parts.controllers.push((
            con("idle"),
            format!("{}.{} + hend.{}", ev("gon"), con("burst"), con("done")),
        ));
        parts.controllers.push((
            con("burst"),
            format!("{}.{} + hend.{}", ev("goff"), con("idle"), con("done")),
        ));
    }
    parts.controllers.push((con("done"), "0".to_string()));
    parts.controller_starts.push(con("idle"));

    // The window-end event zeroes all generation flows.
    parts.sub_mut(&format!("generate_{}", sx)).switch("hend", "0");
    parts.sub_mut(&format!("keepg_{}", sx)).switch("hend", "0");
    if spec.caps.drop {
        parts.sub_mut(&format!("drop_{}", sx)).switch("hend", "0");
    }
}

fn fmt_param(v: f64) -> String {
    if v.is_finite() {
        format!("{}", v)
    } else {
        // Large sentinel: behaviourally unreachable within any horizon.
        "1e30".to_string()
    }
}

/// Emits the complete case-study model as tool-language source.
pub fn generate_source(spec: &ScenarioSpec) -> String {
    let s = spec.sensors;
    let mtc_h = spec.mtc_hours();
    let prox_rate = if spec.scenario.fixed_route() {
        1.0 / mtc_h
    } else {
        1.0 / (mtc_h * s as f64)
    };
    let upload_h = spec.upload_mb_s * 3600.0;
    let unload_h = spec.unload_mb_s * 3600.0;

    // Per-node parts.
    let mut nodes: Vec<NodeParts> = Vec::new();
    for i in 1..=s {
        let node = NodeSpec {
            id: format!("s{}", i),
            streams: 1,
            caps: Capabilities::sensor(),
            capacity_mb: spec.sensor_mb,
            generation: Some(spec.generation),
        };
        nodes.push(build_node(&node, 1).expect("sensor node"));
    }
    let mut ferry = build_node(
        &NodeSpec {
            id: "ferry".to_string(),
            streams: 1,
            caps: Capabilities::ferry(),
            capacity_mb: spec.ferry_mb,
            generation: None,
        },
        1,
    )
    .expect("ferry node");
    let mut base = build_node(
        &NodeSpec {
            id: "base".to_string(),
            streams: 1,
            caps: Capabilities::base(),
            capacity_mb: f64::INFINITY,
            generation: None,
        },
        1,
    )
    .expect("base node");

    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "hype model ferry_{}", spec.scenario.name()).unwrap();
    writeln!(w).unwrap();

    writeln!(w, "#definitions").unwrap();
    for parts in nodes.iter().chain([&ferry, &base]) {
        for (name, init) in &parts.variables {
            writeln!(w, "var {} = {};", name, fmt_param(*init)).unwrap();
        }
    }
    writeln!(w, "param eps = {};", FULL_HYSTERESIS_MB).unwrap();
    writeln!(w, "param cap_ferry = {};", fmt_param(spec.ferry_mb)).unwrap();
    writeln!(w, "param horizon = {};", fmt_param(spec.horizon_h)).unwrap();
    writeln!(w, "param u_rate = {};", fmt_param(upload_h)).unwrap();
    writeln!(w, "param w_rate = {};", fmt_param(unload_h)).unwrap();
    writeln!(w, "param k_prox = {};", fmt_param(prox_rate)).unwrap();
    if spec.scenario.return_when_full() {
        writeln!(
            w,
            "param k_arrive = {};",
            fmt_param(1.0 / (spec.penalty * mtc_h))
        )
        .unwrap();
    }
    for parts in nodes.iter().chain([&ferry, &base]) {
        for (name, value) in &parts.parameters {
            writeln!(w, "param {} = {};", name, fmt_param(*value)).unwrap();
        }
    }
    writeln!(w, "function const() = 1;").unwrap();
    writeln!(w, "guard above(X, K) = X >= K;").unwrap();
    writeln!(w, "guard below(X, K) = X <= K;").unwrap();
    writeln!(w).unwrap();

    writeln!(w, "#mappings").unwrap();
    for parts in nodes.iter().chain([&ferry, &base]) {
        for sub in &parts.subcomponents {
            writeln!(w, "infl {} :-> {};", sub.influence, sub.target).unwrap();
        }
    }
    for parts in nodes.iter().chain([&ferry, &base]) {
        for (name, guard, resets, rate) in &parts.events {
            write_event(w, name, guard, resets, rate);
        }
    }
    // Link and window events.
    for i in 1..=s {
        write_event(w, &format!("prox_s{}", i), "", "", "k_prox");
        write_event(
            w,
            &format!("sempty_s{}", i),
            &format!("below(level_s{}, 0)", i),
            "",
            "",
        );
    }
    write_event(w, "ffull", "above(level_ferry, cap_ferry)", "", "");
    write_event(w, "hend", "above(time, horizon)", "", "");
    write_event(w, "fdone", "below(level_ferry, 0)", "", "");
    if spec.scenario.return_when_full() {
        write_event(w, "arrive", "", "", "k_arrive");
    }
    writeln!(w).unwrap();

    // Wire the contact flows into node subcomponents.
    for (idx, parts) in nodes.iter_mut().enumerate() {
        let i = idx + 1;
        let out_name = format!("output_s{}", i);
        let sub = parts.sub_mut(&out_name);
        sub.switch(&format!("prox_s{}", i), "-u_rate");
        sub.switch(&format!("sempty_s{}", i), "0");
        sub.switch("ffull", "0");
        sub.switch("hend", "0");
    }
    for i in 1..=s {
        ferry
            .sub_mut("input_ferry")
            .switch(&format!("prox_s{}", i), "u_rate");
        ferry
            .sub_mut("input_ferry")
            .switch(&format!("sempty_s{}", i), "0");
        ferry
            .sub_mut("keepi_ferry")
            .switch(&format!("prox_s{}", i), "u_rate");
        ferry
            .sub_mut("keepi_ferry")
            .switch(&format!("sempty_s{}", i), "0");
    }
    ferry.sub_mut("input_ferry").switch("ffull", "0");
    ferry.sub_mut("input_ferry").switch("hend", "0");
    ferry.sub_mut("keepi_ferry").switch("ffull", "0");
    ferry.sub_mut("keepi_ferry").switch("hend", "0");
    if spec.scenario.return_when_full() {
        ferry.sub_mut("output_ferry").switch("arrive", "-w_rate");
        base.sub_mut("input_base").switch("arrive", "w_rate");
        base.sub_mut("keepi_base").switch("arrive", "w_rate");
    }
    ferry.sub_mut("output_ferry").switch("hend", "-w_rate");
    ferry.sub_mut("output_ferry").switch("fdone", "0");
    base.sub_mut("input_base").switch("hend", "w_rate");
    base.sub_mut("input_base").switch("fdone", "0");
    base.sub_mut("keepi_base").switch("hend", "w_rate");
    base.sub_mut("keepi_base").switch("fdone", "0");

    writeln!(w, "#subcomponents").unwrap();
    for parts in nodes.iter().chain([&ferry, &base]) {
        for sub in &parts.subcomponents {
            let mut branches = vec!["init:[0, const()]".to_string()];
            for (event, strength) in &sub.switches {
                branches.push(format!("{}:[{}, const()]", event, strength));
            }
            writeln!(w, "{}_t() := {};", sub.name, branches.join(" + ")).unwrap();
        }
    }
    writeln!(w).unwrap();

    writeln!(w, "#components").unwrap();
    for parts in nodes.iter().chain([&ferry, &base]) {
        for sub in &parts.subcomponents {
            writeln!(w, "{} := {}_t():{};", sub.name, sub.name, sub.influence).unwrap();
        }
    }
    let mut node_names = Vec::new();
    for (idx, parts) in nodes.iter().enumerate() {
        let name = format!("node_s{}", idx + 1);
        let subs = parts.subcomponent_names().join(" <*> ");
        writeln!(w, "{} := {};", name, subs).unwrap();
        node_names.push(name);
    }
    writeln!(
        w,
        "ferry_node := {};",
        ferry.subcomponent_names().join(" <*> ")
    )
    .unwrap();
    writeln!(w, "base_node := {};", base.subcomponent_names().join(" <*> ")).unwrap();
    writeln!(
        w,
        "sys := {} <*> ferry_node <*> base_node;",
        node_names.join(" <*> ")
    )
    .unwrap();
    writeln!(w).unwrap();

    writeln!(w, "#controller").unwrap();
    let mut starts = Vec::new();
    for parts in nodes.iter().chain([&ferry, &base]) {
        for (name, body) in &parts.controllers {
            writeln!(w, "{} := {};", name, body).unwrap();
        }
        starts.extend(parts.controller_starts.iter().cloned());
    }
    // Per-link controllers: one contact at a time per link.
    for i in 1..=s {
        writeln!(
            w,
            "conl_s{i}_down := prox_s{i}.conl_s{i}_up + ffull.conl_s{i}_down;",
            i = i
        )
        .unwrap();
        writeln!(
            w,
            "conl_s{i}_up := sempty_s{i}.conl_s{i}_down + ffull.conl_s{i}_down;",
            i = i
        )
        .unwrap();
        starts.push(format!("conl_s{}_down", i));
    }
    // Ferry controller: mutual exclusion of contacts plus return policy.
    let prox_sum: Vec<String> = (1..=s)
        .map(|i| format!("prox_s{}.conferry_busy", i))
        .collect();
    let sempty_sum: Vec<String> = (1..=s)
        .map(|i| format!("sempty_s{}.conferry_avail", i))
        .collect();
    writeln!(
        w,
        "conferry_avail := {} + hend.conferry_final;",
        prox_sum.join(" + ")
    )
    .unwrap();
    if spec.scenario.return_when_full() {
        writeln!(
            w,
            "conferry_busy := {} + ffull.conferry_travel + hend.conferry_final;",
            sempty_sum.join(" + ")
        )
        .unwrap();
        writeln!(
            w,
            "conferry_travel := arrive.conferry_unload + hend.conferry_final;"
        )
        .unwrap();
        writeln!(
            w,
            "conferry_unload := fdone.conferry_avail + hend.conferry_final;"
        )
        .unwrap();
    } else {
        writeln!(
            w,
            "conferry_busy := {} + ffull.conferry_full + hend.conferry_final;",
            sempty_sum.join(" + ")
        )
        .unwrap();
        writeln!(w, "conferry_full := hend.conferry_final;").unwrap();
    }
    writeln!(w, "conferry_final := fdone.conferry_end;").unwrap();
    writeln!(w, "conferry_end := 0;").unwrap();
    starts.push("conferry_avail".to_string());
    // Fixed route: a cyclic position controller picks the contact target.
    if spec.scenario.fixed_route() {
        for i in 1..=s {
            let next = if i == s { 1 } else { i + 1 };
            writeln!(w, "conroute_p{} := prox_s{}.conroute_p{};", i, i, next).unwrap();
        }
        starts.push("conroute_p1".to_string());
    }
    writeln!(w, "con := {};", starts.join(" <*> ")).unwrap();
    writeln!(w).unwrap();

    writeln!(w, "#system").unwrap();
    writeln!(w, "sys <*> con;").unwrap();

    out
}

fn write_event(w: &mut String, name: &str, guard: &str, resets: &str, rate: &str) {
    let guard = if guard.is_empty() {
        String::new()
    } else {
        format!("{} ", guard)
    };
    let resets = if resets.is_empty() {
        String::new()
    } else {
        format!("{} ", resets)
    };
    if rate.is_empty() {
        writeln!(w, "event {} = {}:-> {};", name, guard, resets).unwrap();
    } else {
        writeln!(w, "event {} = {}:-> {}@ {};", name, guard, resets, rate).unwrap();
    }
}

/// Generates, parses, elaborates and validates the case-study model.
pub fn build_ferry_network(spec: &ScenarioSpec) -> Result<Model, LoadError> {
    load(&generate_source(spec))
}

pub fn build_flat(spec: &ScenarioSpec) -> Result<FlatSystem, String> {
    let model = build_ferry_network(spec).map_err(|e| e.to_string())?;
    flatten(&model).map_err(|e| e.to_string())
}

/// The case-study observables.
///
/// `total_collected` is the ferry's cumulative intake; data still aboard at
/// the end is visible separately through `ferry_level` and the
/// horizon-instant snapshot `collected_at_horizon`.
pub fn case_observables(spec: &ScenarioSpec) -> Vec<Observable> {
    let sensors = |prefix: &str| -> Vec<String> {
        (1..=spec.sensors).map(|i| format!("{}_s{}", prefix, i)).collect()
    };
    vec![
        Observable::final_sum("total_generated", sensors("totalig")),
        Observable::final_sum("total_dropped", sensors("totald")),
        Observable::final_value("total_collected", "totalig_ferry"),
        Observable::final_value("total_delivered", "totalig_base"),
        Observable::final_sum("sensor_level", sensors("level")),
        Observable::final_value("ferry_level", "level_ferry"),
        Observable::value_at("collected_at_horizon", "totalig_ferry", spec.horizon_h),
    ]
}

/// Runs one batch of a scenario with the standard observables.
pub fn run_scenario_batch(
    spec: &ScenarioSpec,
    runs: usize,
    master_seed: u64,
    opts: &BatchOptions,
) -> Result<BatchResult, String> {
    let flat = build_flat(spec)?;
    let cfg = spec.sim_config();
    run_batch(
        &flat,
        runs,
        master_seed,
        &case_observables(spec),
        &cfg,
        opts,
    )
    .map_err(|e| e.to_string())
}

/// Sweeps mean time to contact for the given scenarios: one series per
/// scenario, mirroring the four-curve drop/collection figures.
pub fn mtc_sweep(
    base: &ScenarioSpec,
    scenarios: &[Scenario],
    values: &[f64],
    runs: usize,
    master_seed: u64,
    opts: &BatchOptions,
) -> Result<SweepTable, SweepError> {
    let observables = case_observables(base);
    let cfg = base.sim_config();
    let mut series = Vec::new();
    for &scenario in scenarios {
        let spec = SweepSpec {
            parameter: "mtc_min".to_string(),
            values: values.to_vec(),
            runs,
            master_seed,
            observables: observables.clone(),
        };
        let proto = base.with_scenario(scenario);
        let instantiate = move |mtc: f64| -> Result<FlatSystem, String> {
            build_flat(&ScenarioSpec {
                mtc_min: mtc,
                ..proto.clone()
            })
        };
        series.push(sweep(scenario.name(), &instantiate, &spec, &cfg, opts)?);
    }
    Ok(SweepTable {
        parameter: "mtc_min".to_string(),
        observables,
        series,
    })
}

/// Sweeps the ferry buffer size at fixed MTC.
pub fn buffer_sweep(
    base: &ScenarioSpec,
    scenarios: &[Scenario],
    values: &[f64],
    runs: usize,
    master_seed: u64,
    opts: &BatchOptions,
) -> Result<SweepTable, SweepError> {
    let observables = case_observables(base);
    let cfg = base.sim_config();
    let mut series = Vec::new();
    for &scenario in scenarios {
        let spec = SweepSpec {
            parameter: "ferry_mb".to_string(),
            values: values.to_vec(),
            runs,
            master_seed,
            observables: observables.clone(),
        };
        let proto = base.with_scenario(scenario);
        let instantiate = move |mb: f64| -> Result<FlatSystem, String> {
            build_flat(&ScenarioSpec {
                ferry_mb: mb,
                ..proto.clone()
            })
        };
        series.push(sweep(scenario.name(), &instantiate, &spec, &cfg, opts)?);
    }
    Ok(SweepTable {
        parameter: "ferry_mb".to_string(),
        observables,
        series,
    })
}

/// Which experiment a scenario file requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// MTC sweep at fixed buffer (the drop/collection-vs-MTC figures).
    Mtc,
    /// Buffer sweep at fixed MTC.
    Buffer,
    /// Both sweeps.
    Both,
    /// One batch at the configured point.
    Single,
}

/// A parsed scenario definition file.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyPlan {
    pub base: ScenarioSpec,
    pub scenarios: Vec<Scenario>,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub runs: usize,
    pub runs_buffer: usize,
    pub mtc_values: Vec<f64>,
    pub buffer_values: Vec<f64>,
}

impl Default for CaseStudyPlan {
    fn default() -> Self {
        CaseStudyPlan {
            base: ScenarioSpec::default(),
            scenarios: vec![Scenario::Raer],
            experiment: ExperimentKind::Mtc,
            seed: 20120,
            runs: 200,
            runs_buffer: 100,
            mtc_values: vec![5.0, 10.0, 15.0, 20.0, 30.0, 60.0],
            buffer_values: vec![100.0, 250.0, 500.0, 1000.0, 2000.0],
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScenarioFileError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {message}")]
    Value { line: usize, message: String },
}

/// Parses the `key = value` scenario definition format. Lines starting with
/// `#` or `//` are comments; trailing `#` comments are allowed.
pub fn parse_scenario_file(text: &str) -> Result<CaseStudyPlan, ScenarioFileError> {
    let mut plan = CaseStudyPlan::default();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = raw.split('#').next().unwrap_or("");
        let stripped = stripped.split("//").next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or(ScenarioFileError::Syntax { line })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| ScenarioFileError::Value { line, message };

        let parse_f64 = |v: &str| -> Result<f64, ScenarioFileError> {
            v.parse::<f64>()
                .map_err(|_| bad(format!("invalid number `{}`", v)))
        };
        let parse_list = |v: &str| -> Result<Vec<f64>, ScenarioFileError> {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("invalid number `{}`", x.trim())))
                })
                .collect()
        };

        match key {
            "scenario" => {
                plan.scenarios = if value == "all" {
                    Scenario::ALL.to_vec()
                } else {
                    vec![value.parse::<Scenario>().map_err(bad)?]
                };
                if let Some(first) = plan.scenarios.first() {
                    plan.base.scenario = *first;
                }
            }
            "experiment" => {
                plan.experiment = match value {
                    "mtc" => ExperimentKind::Mtc,
                    "buffer" => ExperimentKind::Buffer,
                    "both" => ExperimentKind::Both,
                    "single" => ExperimentKind::Single,
                    other => return Err(bad(format!("invalid experiment `{}`", other))),
                };
            }
            "sensors" => {
                plan.base.sensors = parse_f64(value)? as usize;
            }
            "mtc_min" => plan.base.mtc_min = parse_f64(value)?,
            "ferry_mb" => plan.base.ferry_mb = parse_f64(value)?,
            "horizon_h" => plan.base.horizon_h = parse_f64(value)?,
            "penalty" => plan.base.penalty = parse_f64(value)?,
            "sensor_mb" => plan.base.sensor_mb = parse_f64(value)?,
            "upload_mb_s" => plan.base.upload_mb_s = parse_f64(value)?,
            "unload_mb_s" => plan.base.unload_mb_s = parse_f64(value)?,
            "gen_bursts_per_h" => plan.base.generation.bursts_per_hour = parse_f64(value)?,
            "gen_burst_mean_min" => plan.base.generation.burst_mean_min = parse_f64(value)?,
            "gen_mb_per_min" => plan.base.generation.fluid_mb_per_min = parse_f64(value)?,
            "seed" => {
                plan.seed = value
                    .parse::<u64>()
                    .map_err(|_| bad(format!("invalid seed `{}`", value)))?;
            }
            "runs" => plan.runs = parse_f64(value)? as usize,
            "runs_buffer" => plan.runs_buffer = parse_f64(value)? as usize,
            "mtc_values" => plan.mtc_values = parse_list(value)?,
            "buffer_values" => plan.buffer_values = parse_list(value)?,
            other => {
                return Err(ScenarioFileError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn sensor_node_has_capability_subcomponents() {
        let spec = NodeSpec {
            id: "s1".to_string(),
            streams: 1,
            caps: Capabilities::sensor(),
            capacity_mb: 250.0,
            generation: Some(GenerationSpec::nominal()),
        };
        let parts = build_node(&spec, 1).unwrap();
        assert_eq!(
            parts.subcomponent_names(),
            vec!["output_s1", "generate_s1", "keepg_s1", "drop_s1"]
        );
        assert_eq!(
            parts.variable_names(),
            vec!["level_s1", "totalig_s1", "totald_s1"]
        );
    }

    #[test]
    fn base_station_is_input_only() {
        let spec = NodeSpec {
            id: "base".to_string(),
            streams: 1,
            caps: Capabilities::base(),
            capacity_mb: f64::INFINITY,
            generation: None,
        };
        let parts = build_node(&spec, 1).unwrap();
        assert_eq!(parts.subcomponent_names(), vec!["input_base", "keepi_base"]);
        assert!(!parts.variable_names().contains(&"totald_base"));
    }

    #[test]
    fn ferry_is_input_output_with_intake_tracker() {
        let spec = NodeSpec {
            id: "ferry".to_string(),
            streams: 1,
            caps: Capabilities::ferry(),
            capacity_mb: 1000.0,
            generation: None,
        };
        let parts = build_node(&spec, 1).unwrap();
        assert_eq!(
            parts.subcomponent_names(),
            vec!["input_ferry", "keepi_ferry", "output_ferry"]
        );
    }

    #[test]
    fn empty_capability_set_is_rejected() {
        let spec = NodeSpec {
            id: "x".to_string(),
            streams: 1,
            caps: Capabilities::default(),
            capacity_mb: 1.0,
            generation: None,
        };
        assert!(matches!(
            build_node(&spec, 1),
            Err(BuildError::NoCapabilities(_))
        ));
    }

    #[test]
    fn multi_stream_names_carry_the_stream_index() {
        let spec = NodeSpec {
            id: "n1".to_string(),
            streams: 2,
            caps: Capabilities::ferry(),
            capacity_mb: 10.0,
            generation: None,
        };
        let parts = build_node(&spec, 2).unwrap();
        assert!(parts.subcomponent_names().contains(&"input_n1_v2"));
        assert!(parts.variable_names().contains(&"level_n1_v2"));
    }

    #[test]
    fn generated_models_validate_for_all_scenarios() {
        let spec = ScenarioSpec {
            sensors: 3,
            ..ScenarioSpec::default()
        };
        for scenario in Scenario::ALL {
            let model = build_ferry_network(&spec.with_scenario(scenario)).unwrap();
            let report = validate(&model);
            assert!(report.is_valid(), "{}: {}", scenario.name(), report);
        }
    }

    #[test]
    fn default_case_study_has_expected_variable_count() {
        // Template arithmetic: three per sensor, two for the ferry, two for
        // the base station.
        let spec = ScenarioSpec::default();
        let model = build_ferry_network(&spec).unwrap();
        assert_eq!(model.variables.len(), 10 * 3 + 2 + 2);
    }

    #[test]
    fn discrete_count_is_subcomponents_plus_controllers() {
        let spec = ScenarioSpec::default();
        let flat = build_flat(&spec).unwrap();
        let model = build_ferry_network(&spec).unwrap();
        // Sequential controllers: generation per sensor, link per sensor,
        // ferry policy; the fixed-route position appears only in *f runs.
        let controllers = 10 + 10 + 1;
        assert_eq!(model.subcomponents.len(), 10 * 4 + 3 + 2);
        assert_eq!(
            flat.discrete.len(),
            model.subcomponents.len() + controllers
        );

        let fixed = build_flat(&spec.with_scenario(Scenario::Raef)).unwrap();
        assert_eq!(
            fixed.discrete.len(),
            model.subcomponents.len() + controllers + 1
        );
    }

    #[test]
    fn scenario_file_round_trip() {
        let text = "\
# ferry case study
scenario = all
experiment = both
sensors = 4
mtc_min = 20
ferry_mb = 500
horizon_h = 8
penalty = 2.5
seed = 7
runs = 50
runs_buffer = 25
gen_bursts_per_h = 1.0
gen_burst_mean_min = 6
gen_mb_per_min = 10
mtc_values = 5, 10, 20
";
        let plan = parse_scenario_file(text).unwrap();
        assert_eq!(plan.scenarios.len(), 4);
        assert_eq!(plan.experiment, ExperimentKind::Both);
        assert_eq!(plan.base.sensors, 4);
        assert_eq!(plan.base.penalty, 2.5);
        assert_eq!(plan.runs, 50);
        assert_eq!(plan.mtc_values, vec![5.0, 10.0, 20.0]);
        assert_eq!(plan.base.generation, GenerationSpec::high_load());
    }

    #[test]
    fn invalid_scenario_token_is_rejected() {
        let err = parse_scenario_file("scenario = zigzag\n").unwrap_err();
        assert!(matches!(err, ScenarioFileError::Value { .. }));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_scenario_file("warp_factor = 9\n").unwrap_err();
        assert!(matches!(err, ScenarioFileError::UnknownKey { .. }));
    }
}
