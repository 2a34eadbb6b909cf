//! Flattening: encodes a validated model as gated ODE terms over discrete
//! selector variables.
//!
//! One discrete variable is introduced per subcomponent (tracking which
//! branch's activity is live) and one per sequential controller (tracking
//! its current state), so the encoding is linear in model size and no
//! explicit mode graph is ever materialised. Each continuous variable's
//! derivative is the sum of its flow terms `strength * type(args)` gated on
//! the owning subcomponent's selector; an event is enabled exactly when
//! every sequential controller sharing its name currently offers it.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::{CExpr, CompileError, Compiler, Resolution, TIME_NAME};
use crate::model::{ControllerBody, EventKind, Model, INIT_EVENT};

#[derive(Debug, Clone)]
pub struct ContVar {
    pub name: String,
    pub init: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiscreteOrigin {
    /// Influence selector for a subcomponent; domain labels are branch
    /// event names in declaration order.
    Subcomponent(String),
    /// State selector for a sequential controller; domain labels are state
    /// names, start state first.
    Controller(String),
}

#[derive(Debug, Clone)]
pub struct DiscreteVar {
    pub name: String,
    pub origin: DiscreteOrigin,
    pub domain: Vec<String>,
    pub initial: usize,
}

/// A nonzero contribution to one variable's derivative, live while the
/// gating selector holds the branch value.
#[derive(Debug, Clone)]
pub struct FlowTerm {
    pub target: usize,
    pub gate_var: usize,
    pub gate_value: usize,
    pub strength: CExpr,
    pub shape: CExpr,
    pub strength_text: String,
    pub shape_text: String,
}

#[derive(Debug, Clone)]
pub struct FlatEvent {
    pub name: String,
    pub kind: EventKind,
    /// Deterministic: crossing margin of the activation guard
    /// (nonnegative exactly when the guard holds).
    pub crossing: Option<CExpr>,
    /// Stochastic: rate, already multiplied by the 0/1 indicator of any gate.
    pub rate: Option<CExpr>,
    /// Dense index among stochastic events.
    pub sto_index: Option<usize>,
    pub resets: Vec<(usize, CExpr)>,
    /// Subcomponent selectors set to the branch labelled by this event.
    pub selector_sets: Vec<(usize, usize)>,
    /// Per controller: state transitions `(from, to)` for this event.
    pub controller_moves: Vec<(usize, Vec<(usize, usize)>)>,
    /// Per controller sharing this event: states that offer it. The event
    /// is enabled iff every listed controller is in an offering state.
    pub enabling: Vec<(usize, Vec<usize>)>,
    pub guard_text: Option<String>,
    pub rate_text: Option<String>,
}

impl FlatEvent {
    pub fn enabled(&self, discrete: &[usize]) -> bool {
        self.enabling
            .iter()
            .all(|(dv, states)| states.contains(&discrete[*dv]))
    }
}

/// The flattened hybrid system. Immutable; evaluation is pure and safe to
/// share across simulation workers.
#[derive(Debug, Clone)]
pub struct FlatSystem {
    pub name: String,
    pub continuous: Vec<ContVar>,
    pub discrete: Vec<DiscreteVar>,
    pub flows: Vec<FlowTerm>,
    /// All events except `init`, in declaration order.
    pub events: Vec<FlatEvent>,
    /// The initialisation event, fired once at t = 0 before integration.
    pub init_event: FlatEvent,
    pub stochastic_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Error)]
pub enum FlattenError {
    #[error("{0}")]
    Resolution(String),
    #[error("in `{context}`: {source}")]
    Compile {
        context: String,
        source: CompileError,
    },
}

impl FlatSystem {
    pub fn initial_continuous(&self) -> Vec<f64> {
        self.continuous.iter().map(|c| c.init).collect()
    }

    pub fn initial_discrete(&self) -> Vec<usize> {
        self.discrete.iter().map(|d| d.initial).collect()
    }

    pub fn continuous_index(&self, name: &str) -> Option<usize> {
        self.continuous.iter().position(|c| c.name == name)
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e.name == name)
    }

    /// dv_i/dt = sum over flow terms targeting v_i of
    /// strength * type(args) * gate.
    pub fn vector_field(&self, t: f64, continuous: &[f64], discrete: &[usize], out: &mut [f64]) {
        out.fill(0.0);
        for flow in &self.flows {
            if discrete[flow.gate_var] == flow.gate_value {
                out[flow.target] += flow.strength.eval(t, continuous) * flow.shape.eval(t, continuous);
            }
        }
    }

    /// Indices of events whose controller-enabling predicate holds, split
    /// into deterministic and stochastic.
    pub fn enabled_events(&self, discrete: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut det = Vec::new();
        let mut sto = Vec::new();
        for (i, ev) in self.events.iter().enumerate() {
            if ev.enabled(discrete) {
                match ev.kind {
                    EventKind::Deterministic => det.push(i),
                    EventKind::Stochastic => sto.push(i),
                }
            }
        }
        (det, sto)
    }

    /// Human-readable listing of discrete variables, flow terms and event
    /// tables; used by golden tests.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "flat system {}", self.name).unwrap();

        writeln!(s, "continuous:").unwrap();
        for (i, c) in self.continuous.iter().enumerate() {
            writeln!(s, "  [{}] {} = {}", i, c.name, c.init).unwrap();
        }

        writeln!(s, "discrete:").unwrap();
        for (i, d) in self.discrete.iter().enumerate() {
            let origin = match &d.origin {
                DiscreteOrigin::Subcomponent(n) => format!("subcomponent {}", n),
                DiscreteOrigin::Controller(n) => format!("controller {}", n),
            };
            writeln!(
                s,
                "  [{}] {} ({}) domain {{{}}} start {}",
                i,
                d.name,
                origin,
                d.domain.join(", "),
                d.domain[d.initial]
            )
            .unwrap();
        }

        writeln!(s, "flows:").unwrap();
        for f in &self.flows {
            writeln!(
                s,
                "  d{}/dt += {} * {} when {} = {}",
                self.continuous[f.target].name,
                f.strength_text,
                f.shape_text,
                self.discrete[f.gate_var].name,
                self.discrete[f.gate_var].domain[f.gate_value]
            )
            .unwrap();
        }

        writeln!(s, "events:").unwrap();
        for ev in &self.events {
            self.dump_event(&mut s, ev);
        }
        writeln!(s, "init:").unwrap();
        self.dump_event_body(&mut s, &self.init_event);
        if !self.warnings.is_empty() {
            writeln!(s, "warnings:").unwrap();
            for w in &self.warnings {
                writeln!(s, "  {}", w).unwrap();
            }
        }
        s
    }

    fn dump_event(&self, s: &mut String, ev: &FlatEvent) {
        match ev.kind {
            EventKind::Deterministic => {
                let guard = ev.guard_text.as_deref().unwrap_or("true");
                writeln!(s, "  {} deterministic guard {}", ev.name, guard).unwrap();
            }
            EventKind::Stochastic => {
                let rate = ev.rate_text.as_deref().unwrap_or("0");
                writeln!(s, "  {} stochastic rate {}", ev.name, rate).unwrap();
            }
        }
        self.dump_event_body(s, ev);
    }

    fn dump_event_body(&self, s: &mut String, ev: &FlatEvent) {
        if !ev.resets.is_empty() {
            let resets = ev
                .resets
                .iter()
                .map(|(v, _)| self.continuous[*v].name.clone())
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(s, "    resets {}", resets).unwrap();
        }
        for (dv, val) in &ev.selector_sets {
            writeln!(
                s,
                "    sets {} = {}",
                self.discrete[*dv].name, self.discrete[*dv].domain[*val]
            )
            .unwrap();
        }
        for (dv, moves) in &ev.controller_moves {
            let d = &self.discrete[*dv];
            let arrows = moves
                .iter()
                .map(|(from, to)| format!("{} -> {}", d.domain[*from], d.domain[*to]))
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(s, "    moves {}: {}", d.name, arrows).unwrap();
        }
        for (dv, states) in &ev.enabling {
            let d = &self.discrete[*dv];
            let labels = states
                .iter()
                .map(|i| d.domain[*i].clone())
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(s, "    enabled while {} in {{{}}}", d.name, labels).unwrap();
        }
    }
}

/// Flattens a validated model. Precondition: `validate(model)` is empty.
pub fn flatten(model: &Model) -> Result<FlatSystem, FlattenError> {
    let mut warnings = Vec::new();
    let functions = model.function_map();
    let params = model.param_values();

    // Continuous variables in declaration order, initial values folded.
    let var_index: HashMap<&str, usize> = model
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let resolve = |n: &str| -> Option<Resolution> {
        if n == TIME_NAME {
            return Some(Resolution::Time);
        }
        if let Some(i) = var_index.get(n) {
            return Some(Resolution::Slot(*i));
        }
        params.get(n).map(|v| Resolution::Const(*v))
    };
    let compiler = Compiler::new(&resolve, &functions);

    let compile_num = |e: &crate::expr::Expr, context: &str| -> Result<CExpr, FlattenError> {
        compiler.numeric(e).map_err(|source| FlattenError::Compile {
            context: context.to_string(),
            source,
        })
    };
    let compile_crossing = |e: &crate::expr::Expr, context: &str| -> Result<CExpr, FlattenError> {
        compiler.crossing(e).map_err(|source| FlattenError::Compile {
            context: context.to_string(),
            source,
        })
    };

    let mut continuous = Vec::new();
    for v in &model.variables {
        let init = compile_num(&v.init, &format!("initialiser of {}", v.name))?;
        let value = init.as_const().ok_or_else(|| FlattenError::Compile {
            context: format!("initialiser of {}", v.name),
            source: CompileError::Unresolved("non-constant initialiser".to_string()),
        })?;
        continuous.push(ContVar {
            name: v.name.clone(),
            init: value,
        });
    }

    // Discrete variables: subcomponent selectors then controller states.
    let mut discrete = Vec::new();
    let mut selector_of: HashMap<&str, usize> = HashMap::new();
    for sub in &model.subcomponents {
        let init_branch = sub.init_branch().ok_or_else(|| {
            FlattenError::Resolution(format!("subcomponent `{}` has no init branch", sub.name))
        })?;
        selector_of.insert(&sub.name, discrete.len());
        discrete.push(DiscreteVar {
            name: format!("I_{}", sub.name),
            origin: DiscreteOrigin::Subcomponent(sub.name.clone()),
            domain: sub.branches.iter().map(|b| b.event.clone()).collect(),
            initial: init_branch,
        });
    }

    let mut ctrl_leaves = Vec::new();
    model
        .resolve_controller_leaves(&model.system.controller, &mut ctrl_leaves, &mut Vec::new())
        .map_err(FlattenError::Resolution)?;
    let mut families: Vec<(usize, Vec<&str>)> = Vec::new();
    for leaf in &ctrl_leaves {
        let states = model
            .controller_family(leaf)
            .map_err(FlattenError::Resolution)?;
        families.push((discrete.len(), states.clone()));
        discrete.push(DiscreteVar {
            name: format!("C_{}", leaf),
            origin: DiscreteOrigin::Controller(leaf.to_string()),
            domain: states.iter().map(|s| s.to_string()).collect(),
            initial: 0,
        });
    }

    // Check the uncontrolled system only references known subcomponents.
    let mut comp_leaves = Vec::new();
    model
        .resolve_component_leaves(&model.system.component, &mut comp_leaves, &mut Vec::new())
        .map_err(FlattenError::Resolution)?;

    // Flow terms: one per branch with a nonvanishing strength.
    let mut flows = Vec::new();
    for sub in &model.subcomponents {
        let dv = selector_of[sub.name.as_str()];
        let target = *var_index
            .get(
                model
                    .influence_target(&sub.influence)
                    .ok_or_else(|| {
                        FlattenError::Resolution(format!(
                            "influence `{}` has no target",
                            sub.influence
                        ))
                    })?,
            )
            .ok_or_else(|| {
                FlattenError::Resolution(format!(
                    "influence `{}` targets an undeclared variable",
                    sub.influence
                ))
            })?;
        let mut seen_events: Vec<&str> = Vec::new();
        for (bi, b) in sub.branches.iter().enumerate() {
            if seen_events.contains(&b.event.as_str()) {
                warnings.push(format!(
                    "subcomponent `{}` lists event `{}` more than once; declaration order wins",
                    sub.name, b.event
                ));
                continue;
            }
            seen_events.push(&b.event);
            let context = format!("{}.{}", sub.name, b.event);
            let strength = compile_num(&b.strength, &context)?;
            if strength.as_const() == Some(0.0) {
                continue;
            }
            let shape = compile_num(
                &crate::expr::Expr::Call(b.itype.name.clone(), b.itype.args.clone()),
                &context,
            )?;
            flows.push(FlowTerm {
                target,
                gate_var: dv,
                gate_value: bi,
                strength_text: strength
                    .as_const()
                    .map(|c| c.to_string())
                    .unwrap_or_else(|| b.strength.to_string()),
                shape_text: format!(
                    "{}({})",
                    b.itype.name,
                    b.itype
                        .args
                        .iter()
                        .map(|a| a.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                strength,
                shape,
            });
        }
    }

    // Event tables.
    let mut events = Vec::new();
    let mut init_event = None;
    let mut sto_count = 0;
    for decl in &model.events {
        let mut selector_sets = Vec::new();
        for sub in &model.subcomponents {
            if let Some(bi) = sub.branches.iter().position(|b| b.event == decl.name) {
                selector_sets.push((selector_of[sub.name.as_str()], bi));
            }
        }

        let mut controller_moves = Vec::new();
        let mut enabling = Vec::new();
        for (dv, states) in &families {
            let mut offering = Vec::new();
            let mut moves = Vec::new();
            let mut in_alphabet = false;
            for (si, state) in states.iter().enumerate() {
                if let Some(ControllerBody::Sum(prefixes)) = model
                    .controllers
                    .iter()
                    .find(|c| c.name == *state)
                    .map(|c| &c.body)
                {
                    let mut targets =
                        prefixes.iter().filter(|(ev, _)| *ev == decl.name).peekable();
                    if let Some((_, first_target)) = targets.peek().cloned() {
                        in_alphabet = true;
                        offering.push(si);
                        let ti = states
                            .iter()
                            .position(|s| s == first_target)
                            .expect("family closure contains all targets");
                        moves.push((si, ti));
                        if targets.count() > 1 {
                            warnings.push(format!(
                                "controller state `{}` offers `{}` more than once; declaration order wins",
                                state, decl.name
                            ));
                        }
                    }
                }
            }
            if in_alphabet {
                enabling.push((*dv, offering.clone()));
                controller_moves.push((*dv, moves));
            }
        }

        if decl.name != INIT_EVENT
            && decl.kind == EventKind::Deterministic
            && enabling.is_empty()
        {
            warnings.push(format!(
                "deterministic event `{}` is not constrained by any controller and may refire",
                decl.name
            ));
        }
        let appears_in_controllers = model.controllers.iter().any(|c| {
            matches!(&c.body, ControllerBody::Sum(prefixes)
                if prefixes.iter().any(|(ev, _)| *ev == decl.name))
        });
        if appears_in_controllers && enabling.is_empty() && decl.name != INIT_EVENT {
            warnings.push(format!(
                "event `{}` appears in controller definitions outside the system's reachable states (dead event)",
                decl.name
            ));
        }

        let mut resets = Vec::new();
        for (var, rhs) in &decl.resets {
            let vi = *var_index.get(var.as_str()).ok_or_else(|| {
                FlattenError::Resolution(format!("reset targets undeclared variable `{}`", var))
            })?;
            resets.push((vi, compile_num(rhs, &format!("reset of {}", var))?));
        }

        let (crossing, rate, sto_index) = match decl.kind {
            EventKind::Deterministic => {
                let crossing = match &decl.guard {
                    Some(g) => Some(compile_crossing(g, &format!("guard of {}", decl.name))?),
                    None => Some(CExpr::Const(1.0)),
                };
                (crossing, None, None)
            }
            EventKind::Stochastic => {
                let base = compile_num(
                    decl.rate.as_ref().expect("validated stochastic rate"),
                    &format!("rate of {}", decl.name),
                )?;
                let gated = match &decl.guard {
                    Some(g) => {
                        let margin =
                            compile_crossing(g, &format!("gate of {}", decl.name))?;
                        CExpr::Mul(Box::new(base), Box::new(CExpr::Step(Box::new(margin))))
                    }
                    None => base,
                };
                let idx = sto_count;
                sto_count += 1;
                (None, Some(gated), Some(idx))
            }
        };

        let flat = FlatEvent {
            name: decl.name.clone(),
            kind: decl.kind,
            crossing,
            rate,
            sto_index: if decl.name == INIT_EVENT { None } else { sto_index },
            resets,
            selector_sets,
            controller_moves,
            enabling,
            guard_text: decl.guard.as_ref().map(|g| g.to_string()),
            rate_text: decl.rate.as_ref().map(|r| r.to_string()),
        };

        if decl.name == INIT_EVENT {
            init_event = Some(flat);
        } else {
            events.push(flat);
        }
    }

    let init_event = init_event
        .ok_or_else(|| FlattenError::Resolution("model has no init event".to_string()))?;

    Ok(FlatSystem {
        name: model.name.clone(),
        continuous,
        discrete,
        flows,
        events,
        init_event,
        stochastic_count: sto_count,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use crate::testmodels;

    #[test]
    fn buffer_flattens_to_expected_shape() {
        let model = testmodels::buffer_model();
        assert!(validate(&model).is_valid());
        let flat = flatten(&model).unwrap();

        assert_eq!(flat.continuous.len(), 1);
        let selectors: Vec<_> = flat
            .discrete
            .iter()
            .filter(|d| matches!(d.origin, DiscreteOrigin::Subcomponent(_)))
            .collect();
        let states: Vec<_> = flat
            .discrete
            .iter()
            .filter(|d| matches!(d.origin, DiscreteOrigin::Controller(_)))
            .collect();
        assert_eq!(selectors.len(), 2);
        assert_eq!(states.len(), 2);
        assert!(states.iter().all(|d| d.domain.len() == 2));

        // Two distinct effective strengths per selector: zero (dropped) and
        // the live branch.
        assert_eq!(flat.flows.len(), 2);
        let strengths: Vec<f64> = flat
            .flows
            .iter()
            .map(|f| f.strength.as_const().unwrap())
            .collect();
        assert_eq!(strengths, vec![1.0, -2.0]);
    }

    #[test]
    fn vector_field_matches_active_selectors() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let on_in = flat.discrete[0]
            .domain
            .iter()
            .position(|e| e == "on_in")
            .unwrap();
        let on_out = flat.discrete[1]
            .domain
            .iter()
            .position(|e| e == "on_out")
            .unwrap();

        let mut d = flat.initial_discrete();
        d[0] = on_in;
        d[1] = on_out;
        let mut out = vec![0.0];
        flat.vector_field(0.0, &[0.0], &d, &mut out);
        assert_eq!(out[0], -1.0);
    }

    #[test]
    fn zero_strength_branches_yield_zero_field() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let d = flat.initial_discrete(); // init branches carry zero strength
        let mut out = vec![0.0];
        flat.vector_field(0.0, &[50.0], &d, &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn initial_enabled_events_match_controller_start() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let d = flat.initial_discrete();
        let (det, sto) = flat.enabled_events(&d);
        let names: Vec<&str> = sto.iter().map(|i| flat.events[*i].name.as_str()).collect();
        assert!(det.is_empty());
        assert_eq!(names, vec!["on_in", "on_out"]);
    }

    #[test]
    fn after_on_in_full_becomes_enabled() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        let mut d = flat.initial_discrete();

        let on_in = flat.event_index("on_in").unwrap();
        let ev = &flat.events[on_in];
        for (dv, val) in &ev.selector_sets {
            d[*dv] = *val;
        }
        for (dv, moves) in &ev.controller_moves {
            let cur = d[*dv];
            if let Some((_, to)) = moves.iter().find(|(from, _)| *from == cur) {
                d[*dv] = *to;
            }
        }

        let (det, sto) = flat.enabled_events(&d);
        let det_names: Vec<&str> = det.iter().map(|i| flat.events[*i].name.as_str()).collect();
        let sto_names: Vec<&str> = sto.iter().map(|i| flat.events[*i].name.as_str()).collect();
        assert_eq!(det_names, vec!["full"]);
        assert_eq!(sto_names, vec!["off_in", "on_out"]);
    }

    #[test]
    fn nil_controller_offers_nothing() {
        let model = testmodels::fill_only_model();
        let flat = flatten(&model).unwrap();
        let mut d = flat.initial_discrete();
        // Move the controller to its nil state.
        let full = flat.event_index("full").unwrap();
        let ev = &flat.events[full];
        for (dv, moves) in &ev.controller_moves {
            let cur = d[*dv];
            if let Some((_, to)) = moves.iter().find(|(from, _)| *from == cur) {
                d[*dv] = *to;
            }
        }
        let (det, sto) = flat.enabled_events(&d);
        assert!(det.is_empty());
        assert!(sto.is_empty());
    }

    #[test]
    fn discrete_count_is_subcomponents_plus_controllers() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        assert_eq!(flat.discrete.len(), model.subcomponents.len() + 2);
    }

    #[test]
    fn firing_selector_updates_match_branch_indices() {
        let model = testmodels::buffer_model();
        let flat = flatten(&model).unwrap();
        for ev in &flat.events {
            for (dv, val) in &ev.selector_sets {
                let d = &flat.discrete[*dv];
                assert_eq!(d.domain[*val], ev.name);
            }
        }
    }
}
