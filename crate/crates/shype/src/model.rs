//! In-memory representation of a stochastic HYPE model and validation of its
//! structural well-definedness constraints.
//!
//! A model couples an uncontrolled system (a parallel composition of
//! self-looping subcomponents, each owning one influence name) with a
//! controller (event-only sequential processes), synchronised on all shared
//! events and guarded by the distinguished `init` event. Events carry an
//! activation condition (a boolean guard for deterministic events, a
//! nonnegative rate for stochastic ones) and a reset over the continuous
//! variables.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::expr::{self, Expr, FunctionDef, Ty, TIME_NAME};

/// The distinguished initialisation event name.
pub const INIT_EVENT: &str = "init";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Deterministic,
    Stochastic,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Deterministic => write!(f, "deterministic"),
            EventKind::Stochastic => write!(f, "stochastic"),
        }
    }
}

/// A continuous variable with its declared initial value expression.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub init: Expr,
}

/// A named compile-time constant, resolved before flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub value: f64,
}

/// A user-defined function or guard. Guards are boolean-valued and usable in
/// event activation conditions; functions are real-valued and double as
/// influence type definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    pub is_guard: bool,
}

/// Maps an influence name to its target variable.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceDecl {
    pub name: String,
    pub target: String,
}

/// An event with its condition: activation (guard or rate) plus reset.
/// Reset right-hand sides are evaluated simultaneously in the pre-state.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDecl {
    pub name: String,
    pub kind: EventKind,
    /// Deterministic: activation guard (`None` means `true`).
    /// Stochastic: optional gate multiplying the rate by its 0/1 indicator.
    pub guard: Option<Expr>,
    /// Stochastic rate; `None` for deterministic events.
    pub rate: Option<Expr>,
    pub resets: Vec<(String, Expr)>,
}

/// The functional form of a flow, applied to a subset of the variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeUse {
    pub name: String,
    pub args: Vec<Expr>,
}

/// One branch of a self-looping subcomponent: on `event`, the owned influence
/// switches to the given strength and type.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub event: String,
    pub strength: Expr,
    pub itype: TypeUse,
    /// Name of the subcomponent the branch recurses to. Well-defined models
    /// always recurse to the owning subcomponent itself.
    pub continuation: String,
}

/// A sequential subcomponent owning a single influence name.
#[derive(Debug, Clone, PartialEq)]
pub struct Subcomponent {
    pub name: String,
    pub influence: String,
    pub branches: Vec<Branch>,
}

impl Subcomponent {
    pub fn alphabet(&self) -> BTreeSet<&str> {
        self.branches.iter().map(|b| b.event.as_str()).collect()
    }

    pub fn init_branch(&self) -> Option<usize> {
        self.branches.iter().position(|b| b.event == INIT_EVENT)
    }
}

/// Surface operator of a parallel composition node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParOp {
    /// `<*>`: synchronise on all events shared by the two operands.
    SyncShared,
    /// `||`: interleave with an empty synchronisation set.
    Interleave,
}

/// A process composition tree. Leaves reference subcomponents, named
/// components, or controller states depending on context.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcExpr {
    Ref(String),
    Par {
        left: Box<ProcExpr>,
        right: Box<ProcExpr>,
        op: ParOp,
        /// The resolved synchronisation set L.
        sync: BTreeSet<String>,
    },
}

impl ProcExpr {
    pub fn leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ProcExpr::Ref(n) => out.push(n),
            ProcExpr::Par { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
        }
    }
}

/// A named component definition: a composition over subcomponent and
/// component names.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDecl {
    pub name: String,
    pub body: ProcExpr,
}

/// Body of a controller definition.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerBody {
    /// The nil controller `0`: offers no events, permanently.
    Nil,
    /// A sequential state: a sum of event-prefixed continuations.
    Sum(Vec<(String, String)>),
    /// A parallel composition of other controllers.
    Compose(ProcExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDecl {
    pub name: String,
    pub body: ControllerBody,
}

/// The controlled system: uncontrolled composition synchronised with the
/// init-prefixed controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    pub component: ProcExpr,
    pub controller: ProcExpr,
    pub op: ParOp,
    pub sync: BTreeSet<String>,
}

/// A full stochastic HYPE model.
///
/// Immutable after construction apart from [`Model::set_param`]; safe to
/// share across concurrent simulation workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub variables: Vec<VarDecl>,
    pub parameters: Vec<ParamDecl>,
    pub functions: Vec<FunctionDecl>,
    pub influences: Vec<InfluenceDecl>,
    /// All events including `init`, in declaration order.
    pub events: Vec<EventDecl>,
    pub subcomponents: Vec<Subcomponent>,
    pub components: Vec<ComponentDecl>,
    pub controllers: Vec<ControllerDecl>,
    pub system: SystemDef,
}

impl Model {
    pub fn event(&self, name: &str) -> Option<&EventDecl> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn subcomponent(&self, name: &str) -> Option<&Subcomponent> {
        self.subcomponents.iter().find(|s| s.name == name)
    }

    pub fn influence_target(&self, name: &str) -> Option<&str> {
        self.influences
            .iter()
            .find(|i| i.name == name)
            .map(|i| i.target.as_str())
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }

    /// Updates a parameter in place. Flattening re-resolves parameters, so a
    /// changed value takes effect on the next flatten.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), String> {
        match self.parameters.iter_mut().find(|p| p.name == name) {
            Some(p) => {
                p.value = value;
                Ok(())
            }
            None => Err(format!("unknown parameter `{}`", name)),
        }
    }

    pub fn function_map(&self) -> HashMap<String, FunctionDef> {
        self.functions
            .iter()
            .map(|f| {
                (
                    f.name.clone(),
                    FunctionDef {
                        params: f.params.clone(),
                        body: f.body.clone(),
                    },
                )
            })
            .collect()
    }

    pub fn param_values(&self) -> HashMap<String, f64> {
        self.parameters
            .iter()
            .map(|p| (p.name.clone(), p.value))
            .collect()
    }

    /// Influence type names: the functions referenced in activity type
    /// positions.
    pub fn influence_type_names(&self) -> BTreeSet<&str> {
        self.subcomponents
            .iter()
            .flat_map(|s| s.branches.iter().map(|b| b.itype.name.as_str()))
            .collect()
    }

    /// Resolves a component-side composition to its subcomponent leaves,
    /// expanding named component references.
    pub fn resolve_component_leaves<'a>(
        &'a self,
        expr: &'a ProcExpr,
        out: &mut Vec<&'a str>,
        seen: &mut Vec<&'a str>,
    ) -> Result<(), String> {
        match expr {
            ProcExpr::Ref(n) => {
                if self.subcomponent(n).is_some() {
                    out.push(n);
                    return Ok(());
                }
                if let Some(c) = self.components.iter().find(|c| c.name == *n) {
                    if seen.contains(&n.as_str()) {
                        return Err(format!("component `{}` is recursively defined", n));
                    }
                    seen.push(n);
                    let r = self.resolve_component_leaves(&c.body, out, seen);
                    seen.pop();
                    return r;
                }
                Err(format!("undefined name {}", n))
            }
            ProcExpr::Par { left, right, .. } => {
                self.resolve_component_leaves(left, out, seen)?;
                self.resolve_component_leaves(right, out, seen)
            }
        }
    }

    /// Resolves the controller composition to its sequential start states,
    /// expanding compound controller references.
    pub fn resolve_controller_leaves<'a>(
        &'a self,
        expr: &'a ProcExpr,
        out: &mut Vec<&'a str>,
        seen: &mut Vec<&'a str>,
    ) -> Result<(), String> {
        match expr {
            ProcExpr::Ref(n) => match self.controllers.iter().find(|c| c.name == *n) {
                Some(decl) => match &decl.body {
                    ControllerBody::Nil | ControllerBody::Sum(_) => {
                        out.push(n);
                        Ok(())
                    }
                    ControllerBody::Compose(inner) => {
                        if seen.contains(&n.as_str()) {
                            return Err(format!("controller `{}` is recursively composed", n));
                        }
                        seen.push(n);
                        let r = self.resolve_controller_leaves(inner, out, seen);
                        seen.pop();
                        r
                    }
                },
                None => Err(format!("undefined name {}", n)),
            },
            ProcExpr::Par { left, right, .. } => {
                self.resolve_controller_leaves(left, out, seen)?;
                self.resolve_controller_leaves(right, out, seen)
            }
        }
    }

    /// The set of states reachable from a sequential start state through
    /// next-state references, in first-visit order.
    pub fn controller_family<'a>(&'a self, start: &'a str) -> Result<Vec<&'a str>, String> {
        let mut states = vec![start];
        let mut i = 0;
        while i < states.len() {
            let name = states[i];
            let decl = self
                .controllers
                .iter()
                .find(|c| c.name == name)
                .ok_or_else(|| format!("undefined name {}", name))?;
            match &decl.body {
                ControllerBody::Nil => {}
                ControllerBody::Sum(branches) => {
                    for (_, next) in branches {
                        if !states.contains(&next.as_str()) {
                            states.push(next);
                        }
                    }
                }
                ControllerBody::Compose(_) => {
                    return Err(format!(
                        "controller `{}` mixes sequential and compound roles",
                        name
                    ));
                }
            }
            i += 1;
        }
        Ok(states)
    }

    /// Events appearing anywhere in a controller family.
    pub fn family_alphabet<'a>(&'a self, states: &[&'a str]) -> BTreeSet<&'a str> {
        let mut set = BTreeSet::new();
        for st in states {
            if let Some(ControllerDecl {
                body: ControllerBody::Sum(branches),
                ..
            }) = self.controllers.iter().find(|c| c.name == *st)
            {
                for (ev, _) in branches {
                    set.insert(ev.as_str());
                }
            }
        }
        set
    }
}

/// Well-definedness rule identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    MissingInit,
    NotSelfLooping,
    InfluenceNotUnique,
    MixedInfluence,
    InfluenceUnmapped,
    SyncMissingSharedEvent,
    NamesNotDisjoint,
    UndefinedReference,
    BadEventCondition,
    DuplicateResetTarget,
    ControllerShape,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::MissingInit => "missing init",
            Rule::NotSelfLooping => "not self-looping",
            Rule::InfluenceNotUnique => "influence not unique",
            Rule::MixedInfluence => "mixed influence",
            Rule::InfluenceUnmapped => "influence unmapped",
            Rule::SyncMissingSharedEvent => "synchronisation misses shared event",
            Rule::NamesNotDisjoint => "name sets not disjoint",
            Rule::UndefinedReference => "undefined reference",
            Rule::BadEventCondition => "bad event condition",
            Rule::DuplicateResetTarget => "duplicate reset target",
            Rule::ControllerShape => "controller shape",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.rule, self.location, self.message)
    }
}

/// Result of [`validate`]: the list of violated rules, empty for a
/// well-defined model. Violations are data, not failures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: Rule, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            rule,
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "model is well-defined");
        }
        for v in &self.violations {
            writeln!(f, "{}", v)?;
        }
        Ok(())
    }
}

/// Checks every structural well-definedness rule and reports all violations
/// with their location. Pure: the same model always yields the same report.
pub fn validate(model: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();

    check_name_classes(model, &mut report);
    check_subcomponents(model, &mut report);
    check_influence_mapping(model, &mut report);
    check_events(model, &mut report);
    check_controllers(model, &mut report);
    check_compositions(model, &mut report);
    check_expressions(model, &mut report);

    report
}

fn check_name_classes(model: &Model, report: &mut ValidationReport) {
    let events: HashSet<&str> = model.events.iter().map(|e| e.name.as_str()).collect();
    let influences: HashSet<&str> = model.influences.iter().map(|i| i.name.as_str()).collect();
    let itypes: BTreeSet<&str> = model.influence_type_names();

    for n in events.intersection(&influences) {
        report.push(
            Rule::NamesNotDisjoint,
            *n,
            format!("`{}` names both an event and an influence", n),
        );
    }
    for n in &itypes {
        if events.contains(n) {
            report.push(
                Rule::NamesNotDisjoint,
                *n,
                format!("`{}` names both an event and an influence type", n),
            );
        }
        if influences.contains(n) {
            report.push(
                Rule::NamesNotDisjoint,
                *n,
                format!("`{}` names both an influence and an influence type", n),
            );
        }
    }

    let mut seen: HashMap<&str, &'static str> = HashMap::new();
    let classes: Vec<(&str, &'static str)> = model
        .variables
        .iter()
        .map(|v| (v.name.as_str(), "variable"))
        .chain(model.parameters.iter().map(|p| (p.name.as_str(), "parameter")))
        .chain(model.functions.iter().map(|f| (f.name.as_str(), "function")))
        .chain(model.influences.iter().map(|i| (i.name.as_str(), "influence")))
        .chain(model.events.iter().map(|e| (e.name.as_str(), "event")))
        .collect();
    for (name, class) in classes {
        if name == TIME_NAME {
            report.push(
                Rule::NamesNotDisjoint,
                name,
                format!("`{}` is reserved for the simulation clock", TIME_NAME),
            );
        }
        if let Some(prev) = seen.insert(name, class) {
            report.push(
                Rule::NamesNotDisjoint,
                name,
                format!("`{}` declared as both {} and {}", name, prev, class),
            );
        }
    }
}

fn check_subcomponents(model: &Model, report: &mut ValidationReport) {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for sub in &model.subcomponents {
        match owner.get(sub.influence.as_str()) {
            Some(other) => report.push(
                Rule::InfluenceNotUnique,
                &sub.name,
                format!(
                    "influence `{}` already owned by subcomponent `{}`",
                    sub.influence, other
                ),
            ),
            None => {
                owner.insert(&sub.influence, &sub.name);
            }
        }

        let init_count = sub
            .branches
            .iter()
            .filter(|b| b.event == INIT_EVENT)
            .count();
        if init_count == 0 {
            report.push(
                Rule::MissingInit,
                &sub.name,
                "subcomponent has no init branch",
            );
        } else if init_count > 1 {
            report.push(
                Rule::MissingInit,
                &sub.name,
                format!("subcomponent has {} init branches, expected one", init_count),
            );
        }

        for b in &sub.branches {
            if b.continuation != sub.name {
                report.push(
                    Rule::NotSelfLooping,
                    format!("{}.{}", sub.name, b.event),
                    format!(
                        "branch continues to `{}` instead of recursing to `{}`",
                        b.continuation, sub.name
                    ),
                );
            }
            if model.event(&b.event).is_none() {
                report.push(
                    Rule::UndefinedReference,
                    format!("{}.{}", sub.name, b.event),
                    format!("undefined name {}", b.event),
                );
            }
            if !model.functions.iter().any(|f| f.name == b.itype.name) {
                report.push(
                    Rule::UndefinedReference,
                    format!("{}.{}", sub.name, b.event),
                    format!("undefined influence type `{}`", b.itype.name),
                );
            }
        }
    }
}

fn check_influence_mapping(model: &Model, report: &mut ValidationReport) {
    for sub in &model.subcomponents {
        match model.influence_target(&sub.influence) {
            None => report.push(
                Rule::InfluenceUnmapped,
                &sub.name,
                format!("influence `{}` has no target variable", sub.influence),
            ),
            Some(target) => {
                if !model.variables.iter().any(|v| v.name == target) {
                    report.push(
                        Rule::UndefinedReference,
                        &sub.name,
                        format!("influence `{}` targets undeclared variable `{}`", sub.influence, target),
                    );
                }
            }
        }
    }
    for infl in &model.influences {
        if !model.variables.iter().any(|v| v.name == infl.target) {
            report.push(
                Rule::UndefinedReference,
                &infl.name,
                format!("undefined name {}", infl.target),
            );
        }
    }
}

fn check_events(model: &Model, report: &mut ValidationReport) {
    let functions = model.function_map();
    let name_ty = type_env(model);

    for ev in &model.events {
        match ev.kind {
            EventKind::Deterministic => {
                if ev.rate.is_some() {
                    report.push(
                        Rule::BadEventCondition,
                        &ev.name,
                        "deterministic event carries a rate",
                    );
                }
                if let Some(g) = &ev.guard {
                    match expr::infer_type(g, &name_ty, &functions) {
                        Ok(Ty::Bool) => {}
                        Ok(Ty::Num) => report.push(
                            Rule::BadEventCondition,
                            &ev.name,
                            "deterministic guard must be boolean",
                        ),
                        Err(e) => report.push(Rule::UndefinedReference, &ev.name, e.to_string()),
                    }
                }
            }
            EventKind::Stochastic => match &ev.rate {
                None => report.push(
                    Rule::BadEventCondition,
                    &ev.name,
                    "stochastic event has no rate",
                ),
                Some(r) => {
                    match expr::infer_type(r, &name_ty, &functions) {
                        Ok(Ty::Num) => {}
                        Ok(Ty::Bool) => report.push(
                            Rule::BadEventCondition,
                            &ev.name,
                            "stochastic rate must be numeric",
                        ),
                        Err(e) => report.push(Rule::UndefinedReference, &ev.name, e.to_string()),
                    }
                    if let Some(v) = static_value(model, r) {
                        if v < 0.0 {
                            report.push(
                                Rule::BadEventCondition,
                                &ev.name,
                                format!("negative rate {}", v),
                            );
                        }
                    }
                    if let Some(g) = &ev.guard {
                        match expr::infer_type(g, &name_ty, &functions) {
                            Ok(Ty::Bool) => {}
                            Ok(Ty::Num) => report.push(
                                Rule::BadEventCondition,
                                &ev.name,
                                "stochastic gate must be boolean",
                            ),
                            Err(e) => {
                                report.push(Rule::UndefinedReference, &ev.name, e.to_string())
                            }
                        }
                    }
                }
            },
        }

        let mut targets = HashSet::new();
        for (var, rhs) in &ev.resets {
            if !model.variables.iter().any(|v| v.name == *var) {
                report.push(
                    Rule::UndefinedReference,
                    &ev.name,
                    format!("reset targets undeclared variable `{}`", var),
                );
            }
            if !targets.insert(var.as_str()) {
                report.push(
                    Rule::DuplicateResetTarget,
                    &ev.name,
                    format!("variable `{}` reset twice", var),
                );
            }
            match expr::infer_type(rhs, &name_ty, &functions) {
                Ok(Ty::Num) => {}
                Ok(Ty::Bool) => report.push(
                    Rule::BadEventCondition,
                    &ev.name,
                    format!("reset of `{}` must be numeric", var),
                ),
                Err(e) => report.push(Rule::UndefinedReference, &ev.name, e.to_string()),
            }
        }
    }
}

fn check_controllers(model: &Model, report: &mut ValidationReport) {
    for decl in &model.controllers {
        match &decl.body {
            ControllerBody::Nil => {}
            ControllerBody::Sum(branches) => {
                for (ev, next) in branches {
                    if model.event(ev).is_none() {
                        report.push(
                            Rule::UndefinedReference,
                            &decl.name,
                            format!("undefined name {}", ev),
                        );
                    }
                    if !model.controllers.iter().any(|c| c.name == *next) {
                        report.push(
                            Rule::UndefinedReference,
                            &decl.name,
                            format!("undefined name {}", next),
                        );
                    }
                }
            }
            ControllerBody::Compose(inner) => {
                let mut leaves = Vec::new();
                inner.leaves(&mut leaves);
                for leaf in leaves {
                    if !model.controllers.iter().any(|c| c.name == leaf) {
                        report.push(
                            Rule::UndefinedReference,
                            &decl.name,
                            format!("undefined name {}", leaf),
                        );
                    }
                }
            }
        }
    }

    // Sequential families reachable from the system's controller leaves must
    // not overlap: a state belongs to exactly one sequential controller.
    let mut leaves = Vec::new();
    if model
        .resolve_controller_leaves(&model.system.controller, &mut leaves, &mut Vec::new())
        .is_ok()
    {
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for leaf in &leaves {
            if let Ok(family) = model.controller_family(leaf) {
                for state in family {
                    if let Some(prev) = owner.insert(state, leaf) {
                        if prev != *leaf {
                            report.push(
                                Rule::ControllerShape,
                                state,
                                format!(
                                    "state shared by sequential controllers `{}` and `{}`",
                                    prev, leaf
                                ),
                            );
                        }
                    }
                }
            }
        }
    }
}

fn check_compositions(model: &Model, report: &mut ValidationReport) {
    for comp in &model.components {
        check_sync_sets(model, &comp.body, &comp.name, Side::Component, report);
    }
    check_sync_sets(
        model,
        &model.system.component,
        "#system",
        Side::Component,
        report,
    );
    check_sync_sets(
        model,
        &model.system.controller,
        "#system",
        Side::Controller,
        report,
    );

    // The top-level synchronisation must cover everything shared between the
    // uncontrolled system and the init-prefixed controller.
    let comp_alpha = alphabet_of(model, &model.system.component, Side::Component);
    let mut ctrl_alpha = alphabet_of(model, &model.system.controller, Side::Controller);
    ctrl_alpha.insert(INIT_EVENT.to_string());
    let shared: BTreeSet<&String> = comp_alpha.intersection(&ctrl_alpha).collect();
    for ev in shared {
        if !model.system.sync.contains(ev) {
            report.push(
                Rule::SyncMissingSharedEvent,
                "#system",
                format!("shared event `{}` missing from synchronisation set", ev),
            );
        }
    }
}

enum Side {
    Component,
    Controller,
}

fn alphabet_of(model: &Model, expr: &ProcExpr, side: Side) -> BTreeSet<String> {
    let mut leaves = Vec::new();
    let resolved = match side {
        Side::Component => {
            model.resolve_component_leaves(expr, &mut leaves, &mut Vec::new())
        }
        Side::Controller => {
            model.resolve_controller_leaves(expr, &mut leaves, &mut Vec::new())
        }
    };
    let mut set = BTreeSet::new();
    if resolved.is_err() {
        return set;
    }
    match side {
        Side::Component => {
            for leaf in leaves {
                if let Some(sub) = model.subcomponent(leaf) {
                    for b in &sub.branches {
                        set.insert(b.event.clone());
                    }
                }
            }
        }
        Side::Controller => {
            for leaf in leaves {
                if let Ok(family) = model.controller_family(leaf) {
                    for ev in model.family_alphabet(&family) {
                        set.insert(ev.to_string());
                    }
                }
            }
        }
    }
    set
}

fn check_sync_sets(
    model: &Model,
    expr: &ProcExpr,
    location: &str,
    side: Side,
    report: &mut ValidationReport,
) {
    if let ProcExpr::Par {
        left, right, sync, ..
    } = expr
    {
        let la = alphabet_of(
            model,
            left,
            match side {
                Side::Component => Side::Component,
                Side::Controller => Side::Controller,
            },
        );
        let ra = alphabet_of(
            model,
            right,
            match side {
                Side::Component => Side::Component,
                Side::Controller => Side::Controller,
            },
        );
        for ev in la.intersection(&ra) {
            if !sync.contains(ev) {
                report.push(
                    Rule::SyncMissingSharedEvent,
                    location,
                    format!("shared event `{}` missing from synchronisation set", ev),
                );
            }
        }
        check_sync_sets(
            model,
            left,
            location,
            match side {
                Side::Component => Side::Component,
                Side::Controller => Side::Controller,
            },
            report,
        );
        check_sync_sets(
            model,
            right,
            location,
            match side {
                Side::Component => Side::Component,
                Side::Controller => Side::Controller,
            },
            report,
        );
    }
}

fn check_expressions(model: &Model, report: &mut ValidationReport) {
    let functions = model.function_map();
    let name_ty = type_env(model);

    for v in &model.variables {
        match expr::infer_type(&v.init, &name_ty, &functions) {
            Ok(Ty::Num) => {}
            Ok(Ty::Bool) => report.push(
                Rule::BadEventCondition,
                &v.name,
                "variable initialiser must be numeric",
            ),
            Err(e) => report.push(Rule::UndefinedReference, &v.name, e.to_string()),
        }
    }

    for sub in &model.subcomponents {
        for b in &sub.branches {
            // Activity strengths are constants of the model: literals and
            // parameters only.
            let mut names = Vec::new();
            b.strength.names(&mut names);
            for n in names {
                let is_param = model.parameters.iter().any(|p| p.name == n);
                let is_fn = model.functions.iter().any(|f| f.name == n);
                if !is_param && !is_fn {
                    report.push(
                        Rule::BadEventCondition,
                        format!("{}.{}", sub.name, b.event),
                        format!("strength must be constant; `{}` is not a parameter", n),
                    );
                }
            }
            for arg in &b.itype.args {
                if let Err(e) = expr::infer_type(arg, &name_ty, &functions) {
                    report.push(
                        Rule::UndefinedReference,
                        format!("{}.{}", sub.name, b.event),
                        e.to_string(),
                    );
                }
            }
        }
    }
}

fn type_env(model: &Model) -> impl Fn(&str) -> Option<Ty> + '_ {
    move |n: &str| {
        if n == TIME_NAME {
            return Some(Ty::Num);
        }
        if model.variables.iter().any(|v| v.name == n) {
            return Some(Ty::Num);
        }
        if model.parameters.iter().any(|p| p.name == n) {
            return Some(Ty::Num);
        }
        None
    }
}

/// Evaluates an expression that must be a compile-time constant over the
/// model's parameters. Returns `None` if it depends on runtime state.
pub fn static_value(model: &Model, e: &Expr) -> Option<f64> {
    let values: HashMap<String, expr::Value> = model
        .parameters
        .iter()
        .map(|p| (p.name.clone(), expr::Value::Num(p.value)))
        .collect();
    let functions = model.function_map();
    expr::eval(e, expr::Env::new(&values, &functions))
        .ok()
        .and_then(|v| v.as_num())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmodels;

    #[test]
    fn buffer_model_is_well_defined() {
        let model = testmodels::buffer_model();
        let report = validate(&model);
        assert!(report.is_valid(), "unexpected violations: {}", report);
    }

    #[test]
    fn validate_is_idempotent() {
        let model = testmodels::buffer_model();
        assert_eq!(validate(&model), validate(&model));
    }

    #[test]
    fn missing_init_branch_is_reported() {
        let mut model = testmodels::buffer_model();
        let sub = model
            .subcomponents
            .iter_mut()
            .find(|s| s.name == "input")
            .unwrap();
        sub.branches.retain(|b| b.event != INIT_EVENT);
        let report = validate(&model);
        assert_eq!(
            report
                .violations
                .iter()
                .filter(|v| v.rule == Rule::MissingInit)
                .count(),
            1
        );
    }

    #[test]
    fn shared_influence_is_reported() {
        let mut model = testmodels::buffer_model();
        let sub = model
            .subcomponents
            .iter_mut()
            .find(|s| s.name == "output")
            .unwrap();
        sub.influence = "in".to_string();
        for b in &mut sub.branches {
            // keep branches self-consistent; the influence clash is the point
            let _ = b;
        }
        let report = validate(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == Rule::InfluenceNotUnique));
    }

    #[test]
    fn non_self_looping_branch_is_reported() {
        let mut model = testmodels::buffer_model();
        model.subcomponents[0].branches[0].continuation = "elsewhere".to_string();
        let report = validate(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == Rule::NotSelfLooping));
    }

    #[test]
    fn interleaving_sharing_events_is_reported() {
        let mut model = testmodels::buffer_model();
        // Force the system-level sync set to drop a genuinely shared event.
        model.system.sync.remove("full");
        let report = validate(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == Rule::SyncMissingSharedEvent));
    }

    #[test]
    fn each_influence_owned_once_in_valid_model() {
        let model = testmodels::buffer_model();
        let mut owners: HashMap<&str, usize> = HashMap::new();
        for sub in &model.subcomponents {
            *owners.entry(sub.influence.as_str()).or_default() += 1;
        }
        assert!(owners.values().all(|&c| c == 1));
    }
}
