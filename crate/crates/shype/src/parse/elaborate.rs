//! Elaboration: resolves a parsed [`SourceModel`] into a validated [`Model`].
//!
//! Templates are instantiated, the `init` event is synthesised when absent,
//! names and types are resolved, statically constant rates are sign-checked,
//! synchronisation sets are computed from operand alphabets, and every
//! well-definedness violation is promoted to an error.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::expr::{self, Expr, Ty, TIME_NAME};
use crate::model::{
    validate, Branch, ComponentDecl, ControllerBody, ControllerDecl, EventDecl, EventKind,
    FunctionDecl, InfluenceDecl, Model, ParOp, ParamDecl, ProcExpr, Subcomponent, SystemDef,
    TypeUse, VarDecl, INIT_EVENT,
};

use super::ast::*;
use super::lex::Span;
use super::ElaborateError;

pub fn elaborate(src: &SourceModel) -> Result<Model, ElaborateError> {
    check_global_names(src)?;

    let functions = elaborate_functions(src)?;
    let function_map: HashMap<String, expr::FunctionDef> = functions
        .iter()
        .map(|f| {
            (
                f.name.clone(),
                expr::FunctionDef {
                    params: f.params.clone(),
                    body: f.body.clone(),
                },
            )
        })
        .collect();

    let parameters = elaborate_params(src, &function_map)?;
    let variables = elaborate_vars(src, &parameters, &function_map)?;
    let influences = elaborate_influences(src, &variables)?;
    let events = elaborate_events(src, &variables, &parameters, &functions, &function_map)?;
    let subcomponents = elaborate_subcomponents(src, &events, &influences, &functions)?;
    let components = elaborate_components(src, &subcomponents)?;
    let controllers = elaborate_controllers(src, &events)?;
    let system = elaborate_system(src, &subcomponents, &components, &controllers)?;

    let mut model = Model {
        name: src.name.clone(),
        variables,
        parameters,
        functions,
        influences,
        events,
        subcomponents,
        components,
        controllers,
        system,
    };

    resolve_sync_sets(&mut model)?;

    let report = validate(&model);
    if !report.is_valid() {
        return Err(ElaborateError::Invalid(report));
    }
    Ok(model)
}

fn check_global_names(src: &SourceModel) -> Result<(), ElaborateError> {
    let mut seen: HashMap<String, &'static str> = HashMap::new();
    let mut check = |name: &str, class: &'static str, span: Span| -> Result<(), ElaborateError> {
        if name == TIME_NAME || name == "true" || name == "false" {
            return Err(ElaborateError::Reserved {
                name: name.to_string(),
                span,
            });
        }
        // `init` may only be declared as an event.
        if name == INIT_EVENT && class != "event" {
            return Err(ElaborateError::Reserved {
                name: name.to_string(),
                span,
            });
        }
        if let Some(prev) = seen.get(name) {
            return Err(ElaborateError::Duplicate {
                name: name.to_string(),
                first: prev,
                second: class,
                span,
            });
        }
        seen.insert(name.to_string(), class);
        Ok(())
    };

    for v in &src.vars {
        check(&v.name, "variable", v.span)?;
    }
    for p in &src.params {
        check(&p.name, "parameter", p.span)?;
    }
    for f in &src.functions {
        check(&f.name, "function", f.span)?;
    }
    for i in &src.influences {
        check(&i.name, "influence", i.span)?;
    }
    for e in &src.events {
        check(&e.name, "event", e.span)?;
    }
    for t in &src.templates {
        check(&t.name, "template", t.span)?;
    }
    for c in &src.components {
        check(&c.name, "component", c.span)?;
    }
    for c in &src.controllers {
        check(&c.name, "controller", c.span)?;
    }
    Ok(())
}

fn elaborate_functions(src: &SourceModel) -> Result<Vec<FunctionDecl>, ElaborateError> {
    // Reject recursion before type inference, which inlines call bodies.
    let by_name: HashMap<&str, &SrcFunction> =
        src.functions.iter().map(|f| (f.name.as_str(), f)).collect();
    for f in &src.functions {
        let mut stack = vec![f.name.as_str()];
        check_cycle(f, &by_name, &mut stack).map_err(|name| ElaborateError::Recursive {
            name,
            span: f.span,
        })?;
    }

    let function_map: HashMap<String, expr::FunctionDef> = src
        .functions
        .iter()
        .map(|f| {
            (
                f.name.clone(),
                expr::FunctionDef {
                    params: f.params.clone(),
                    body: f.body.clone(),
                },
            )
        })
        .collect();

    let mut out = Vec::new();
    for f in &src.functions {
        let formals = f.params.clone();
        let name_ty = |n: &str| {
            if formals.iter().any(|p| p == n) || n == TIME_NAME {
                return Some(Ty::Num);
            }
            if src.vars.iter().any(|v| v.name == n) || src.params.iter().any(|p| p.name == n) {
                return Some(Ty::Num);
            }
            None
        };
        let ty = expr::infer_type(&f.body, &name_ty, &function_map).map_err(|e| {
            ElaborateError::Expr {
                message: e.to_string(),
                span: f.span,
            }
        })?;
        let want = if f.is_guard { Ty::Bool } else { Ty::Num };
        if ty != want {
            return Err(ElaborateError::Expr {
                message: format!(
                    "{} `{}` must be {}-valued",
                    if f.is_guard { "guard" } else { "function" },
                    f.name,
                    want
                ),
                span: f.span,
            });
        }
        out.push(FunctionDecl {
            name: f.name.clone(),
            params: f.params.clone(),
            body: f.body.clone(),
            is_guard: f.is_guard,
        });
    }
    Ok(out)
}

fn check_cycle<'a>(
    f: &'a SrcFunction,
    by_name: &HashMap<&'a str, &'a SrcFunction>,
    stack: &mut Vec<&'a str>,
) -> Result<(), String> {
    let mut called = Vec::new();
    collect_calls(&f.body, &mut called);
    for callee in called {
        if let Some(next) = by_name.get(callee.as_str()) {
            if stack.contains(&next.name.as_str()) {
                return Err(next.name.clone());
            }
            stack.push(&next.name);
            check_cycle(next, by_name, stack)?;
            stack.pop();
        }
    }
    Ok(())
}

fn collect_calls(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Call(name, args) => {
            out.push(name.clone());
            for a in args {
                collect_calls(a, out);
            }
        }
        Expr::Neg(x) | Expr::Not(x) | Expr::Indicator(x) => collect_calls(x, out),
        Expr::Bin(_, l, r) => {
            collect_calls(l, out);
            collect_calls(r, out);
        }
        Expr::Num(_) | Expr::Bool(_) | Expr::Name(_) => {}
    }
}

fn elaborate_params(
    src: &SourceModel,
    functions: &HashMap<String, expr::FunctionDef>,
) -> Result<Vec<ParamDecl>, ElaborateError> {
    let mut out: Vec<ParamDecl> = Vec::new();
    for p in &src.params {
        let values: HashMap<String, expr::Value> = out
            .iter()
            .map(|q| (q.name.clone(), expr::Value::Num(q.value)))
            .collect();
        let v = expr::eval(&p.value, expr::Env::new(&values, functions)).map_err(|e| {
            ElaborateError::Expr {
                message: format!("parameter `{}`: {}", p.name, e),
                span: p.span,
            }
        })?;
        match v.as_num() {
            Some(x) => out.push(ParamDecl {
                name: p.name.clone(),
                value: x,
            }),
            None => {
                return Err(ElaborateError::Expr {
                    message: format!("parameter `{}` must be numeric", p.name),
                    span: p.span,
                })
            }
        }
    }
    Ok(out)
}

fn elaborate_vars(
    src: &SourceModel,
    params: &[ParamDecl],
    functions: &HashMap<String, expr::FunctionDef>,
) -> Result<Vec<VarDecl>, ElaborateError> {
    let values: HashMap<String, expr::Value> = params
        .iter()
        .map(|p| (p.name.clone(), expr::Value::Num(p.value)))
        .collect();
    let mut out = Vec::new();
    for v in &src.vars {
        // Initialisers must be static: they are sugar for init resets.
        expr::eval(&v.init, expr::Env::new(&values, functions)).map_err(|e| {
            ElaborateError::Expr {
                message: format!("initialiser of `{}` must be constant: {}", v.name, e),
                span: v.span,
            }
        })?;
        out.push(VarDecl {
            name: v.name.clone(),
            init: v.init.clone(),
        });
    }
    Ok(out)
}

fn elaborate_influences(
    src: &SourceModel,
    variables: &[VarDecl],
) -> Result<Vec<InfluenceDecl>, ElaborateError> {
    let mut out = Vec::new();
    for i in &src.influences {
        if !variables.iter().any(|v| v.name == i.target) {
            return Err(ElaborateError::Undefined {
                name: i.target.clone(),
                span: i.span,
            });
        }
        out.push(InfluenceDecl {
            name: i.name.clone(),
            target: i.target.clone(),
        });
    }
    Ok(out)
}

fn elaborate_events(
    src: &SourceModel,
    variables: &[VarDecl],
    params: &[ParamDecl],
    _functions: &[FunctionDecl],
    function_map: &HashMap<String, expr::FunctionDef>,
) -> Result<Vec<EventDecl>, ElaborateError> {
    let name_ty = |n: &str| {
        if n == TIME_NAME
            || variables.iter().any(|v| v.name == n)
            || params.iter().any(|p| p.name == n)
        {
            Some(Ty::Num)
        } else {
            None
        }
    };

    let mut out = Vec::new();
    for e in &src.events {
        let kind = if e.rate.is_some() {
            EventKind::Stochastic
        } else {
            EventKind::Deterministic
        };
        if let Some(g) = &e.guard {
            let ty = expr::infer_type(g, &name_ty, function_map).map_err(|err| {
                ElaborateError::Expr {
                    message: format!("event `{}`: {}", e.name, err),
                    span: e.span,
                }
            })?;
            if ty != Ty::Bool {
                return Err(ElaborateError::Expr {
                    message: format!("guard of event `{}` must be boolean", e.name),
                    span: e.span,
                });
            }
        }
        if let Some(r) = &e.rate {
            let ty = expr::infer_type(r, &name_ty, function_map).map_err(|err| {
                ElaborateError::Expr {
                    message: format!("event `{}`: {}", e.name, err),
                    span: e.span,
                }
            })?;
            if ty != Ty::Num {
                return Err(ElaborateError::Expr {
                    message: format!("rate of event `{}` must be numeric", e.name),
                    span: e.span,
                });
            }
            // Reject statically negative rates here; state-dependent rates
            // are checked at runtime.
            let values: HashMap<String, expr::Value> = params
                .iter()
                .map(|p| (p.name.clone(), expr::Value::Num(p.value)))
                .collect();
            if let Ok(v) = expr::eval(r, expr::Env::new(&values, function_map)) {
                if let Some(x) = v.as_num() {
                    if x < 0.0 {
                        return Err(ElaborateError::NegativeRate {
                            event: e.name.clone(),
                            value: x,
                            span: e.span,
                        });
                    }
                }
            }
        }
        let mut targets = HashSet::new();
        for (var, rhs) in &e.resets {
            if !variables.iter().any(|v| v.name == *var) {
                return Err(ElaborateError::Undefined {
                    name: var.clone(),
                    span: e.span,
                });
            }
            if !targets.insert(var.clone()) {
                return Err(ElaborateError::Expr {
                    message: format!("event `{}` resets `{}` twice", e.name, var),
                    span: e.span,
                });
            }
            let ty = expr::infer_type(rhs, &name_ty, function_map).map_err(|err| {
                ElaborateError::Expr {
                    message: format!("event `{}`: {}", e.name, err),
                    span: e.span,
                }
            })?;
            if ty != Ty::Num {
                return Err(ElaborateError::Expr {
                    message: format!("reset of `{}` in event `{}` must be numeric", var, e.name),
                    span: e.span,
                });
            }
        }
        out.push(EventDecl {
            name: e.name.clone(),
            kind,
            guard: e.guard.clone(),
            rate: e.rate.clone(),
            resets: e.resets.clone(),
        });
    }

    // The init event is the unique initially enabled event; synthesise it
    // when not declared and keep it first for a canonical firing order.
    let init_pos = out.iter().position(|e| e.name == INIT_EVENT);
    match init_pos {
        Some(i) => {
            if out[i].kind != EventKind::Deterministic {
                return Err(ElaborateError::Expr {
                    message: "init must be a deterministic event".to_string(),
                    span: src.events[i].span,
                });
            }
            let init = out.remove(i);
            out.insert(0, init);
        }
        None => out.insert(
            0,
            EventDecl {
                name: INIT_EVENT.to_string(),
                kind: EventKind::Deterministic,
                guard: None,
                rate: None,
                resets: vec![],
            },
        ),
    }
    Ok(out)
}

fn subst(e: &Expr, map: &HashMap<String, Expr>) -> Expr {
    match e {
        Expr::Name(n) => map.get(n).cloned().unwrap_or_else(|| e.clone()),
        Expr::Num(_) | Expr::Bool(_) => e.clone(),
        Expr::Call(f, args) => Expr::Call(f.clone(), args.iter().map(|a| subst(a, map)).collect()),
        Expr::Neg(x) => Expr::Neg(Box::new(subst(x, map))),
        Expr::Not(x) => Expr::Not(Box::new(subst(x, map))),
        Expr::Indicator(x) => Expr::Indicator(Box::new(subst(x, map))),
        Expr::Bin(op, l, r) => Expr::bin(*op, subst(l, map), subst(r, map)),
    }
}

fn elaborate_subcomponents(
    src: &SourceModel,
    events: &[EventDecl],
    influences: &[InfluenceDecl],
    functions: &[FunctionDecl],
) -> Result<Vec<Subcomponent>, ElaborateError> {
    let templates: HashMap<&str, &SrcTemplate> =
        src.templates.iter().map(|t| (t.name.as_str(), t)).collect();

    let mut out = Vec::new();
    for comp in &src.components {
        collect_instantiations(
            &comp.body,
            &comp.name,
            true,
            &templates,
            events,
            influences,
            functions,
            &mut out,
        )?;
    }
    Ok(out)
}

/// Walks a component body; a top-level instantiation names the subcomponent
/// after the component, nested ones are rejected as unsupported.
#[allow(clippy::too_many_arguments)]
fn collect_instantiations(
    body: &SrcComp,
    comp_name: &str,
    top: bool,
    templates: &HashMap<&str, &SrcTemplate>,
    events: &[EventDecl],
    influences: &[InfluenceDecl],
    functions: &[FunctionDecl],
    out: &mut Vec<Subcomponent>,
) -> Result<(), ElaborateError> {
    match body {
        SrcComp::Instantiate {
            template,
            args,
            influence,
            span,
        } => {
            if !top {
                return Err(ElaborateError::Unsupported {
                    what: "template instantiation nested inside a composition".to_string(),
                    span: *span,
                });
            }
            let tpl = templates.get(template.as_str()).ok_or_else(|| {
                ElaborateError::Undefined {
                    name: template.clone(),
                    span: *span,
                }
            })?;
            if tpl.formals.len() != args.len() {
                return Err(ElaborateError::Arity {
                    name: template.clone(),
                    expected: tpl.formals.len(),
                    got: args.len(),
                    span: *span,
                });
            }
            if !influences.iter().any(|i| i.name == *influence) {
                return Err(ElaborateError::Undefined {
                    name: influence.clone(),
                    span: *span,
                });
            }
            let map: HashMap<String, Expr> = tpl
                .formals
                .iter()
                .cloned()
                .zip(args.iter().cloned())
                .collect();

            let mut branches = Vec::new();
            for group in &tpl.groups {
                if !functions.iter().any(|f| f.name == group.type_name) {
                    return Err(ElaborateError::Undefined {
                        name: group.type_name.clone(),
                        span: group.span,
                    });
                }
                for ev in &group.events {
                    let actual = match map.get(ev) {
                        Some(Expr::Name(n)) => n.clone(),
                        Some(other) => {
                            return Err(ElaborateError::Expr {
                                message: format!(
                                    "argument `{}` for event position `{}` must be an event name",
                                    other, ev
                                ),
                                span: group.span,
                            })
                        }
                        None => ev.clone(),
                    };
                    if !events.iter().any(|e| e.name == actual) {
                        return Err(ElaborateError::Undefined {
                            name: actual,
                            span: group.span,
                        });
                    }
                    branches.push(Branch {
                        event: actual,
                        strength: subst(&group.strength, &map),
                        itype: TypeUse {
                            name: group.type_name.clone(),
                            args: group.type_args.iter().map(|a| subst(a, &map)).collect(),
                        },
                        continuation: comp_name.to_string(),
                    });
                }
            }
            out.push(Subcomponent {
                name: comp_name.to_string(),
                influence: influence.clone(),
                branches,
            });
            Ok(())
        }
        SrcComp::Ref(..) => Ok(()),
        SrcComp::Par { left, right, .. } => {
            collect_instantiations(
                left, comp_name, false, templates, events, influences, functions, out,
            )?;
            collect_instantiations(
                right, comp_name, false, templates, events, influences, functions, out,
            )
        }
    }
}

fn elaborate_components(
    src: &SourceModel,
    subcomponents: &[Subcomponent],
) -> Result<Vec<ComponentDecl>, ElaborateError> {
    let mut out = Vec::new();
    for comp in &src.components {
        if matches!(comp.body, SrcComp::Instantiate { .. }) {
            continue; // became a subcomponent
        }
        let body = comp_to_proc(&comp.body, src, subcomponents)?;
        out.push(ComponentDecl {
            name: comp.name.clone(),
            body,
        });
    }
    Ok(out)
}

fn comp_to_proc(
    body: &SrcComp,
    src: &SourceModel,
    subcomponents: &[Subcomponent],
) -> Result<ProcExpr, ElaborateError> {
    match body {
        SrcComp::Ref(name, span) => {
            let known = subcomponents.iter().any(|s| s.name == *name)
                || src.components.iter().any(|c| c.name == *name);
            if !known {
                return Err(ElaborateError::Undefined {
                    name: name.clone(),
                    span: *span,
                });
            }
            Ok(ProcExpr::Ref(name.clone()))
        }
        SrcComp::Par { left, right, op } => Ok(ProcExpr::Par {
            left: Box::new(comp_to_proc(left, src, subcomponents)?),
            right: Box::new(comp_to_proc(right, src, subcomponents)?),
            op: *op,
            sync: BTreeSet::new(),
        }),
        SrcComp::Instantiate { span, .. } => Err(ElaborateError::Unsupported {
            what: "template instantiation nested inside a composition".to_string(),
            span: *span,
        }),
    }
}

fn elaborate_controllers(
    src: &SourceModel,
    events: &[EventDecl],
) -> Result<Vec<ControllerDecl>, ElaborateError> {
    let mut out = Vec::new();
    for c in &src.controllers {
        let body = match &c.body {
            SrcCtrlBody::Nil => ControllerBody::Nil,
            SrcCtrlBody::Sum(prefixes) => {
                for (ev, next) in prefixes {
                    if !events.iter().any(|e| e.name == *ev) {
                        return Err(ElaborateError::Undefined {
                            name: ev.clone(),
                            span: c.span,
                        });
                    }
                    if !src.controllers.iter().any(|d| d.name == *next) {
                        return Err(ElaborateError::Undefined {
                            name: next.clone(),
                            span: c.span,
                        });
                    }
                }
                ControllerBody::Sum(prefixes.clone())
            }
            SrcCtrlBody::Par(expr) => ControllerBody::Compose(ctrl_to_proc(expr, src)?),
        };
        out.push(ControllerDecl {
            name: c.name.clone(),
            body,
        });
    }
    Ok(out)
}

fn ctrl_to_proc(expr: &SrcCtrlExpr, src: &SourceModel) -> Result<ProcExpr, ElaborateError> {
    match expr {
        SrcCtrlExpr::Ref(name, span) => {
            if !src.controllers.iter().any(|c| c.name == *name) {
                return Err(ElaborateError::Undefined {
                    name: name.clone(),
                    span: *span,
                });
            }
            Ok(ProcExpr::Ref(name.clone()))
        }
        SrcCtrlExpr::Par { left, right, op } => Ok(ProcExpr::Par {
            left: Box::new(ctrl_to_proc(left, src)?),
            right: Box::new(ctrl_to_proc(right, src)?),
            op: *op,
            sync: BTreeSet::new(),
        }),
    }
}

fn elaborate_system(
    src: &SourceModel,
    subcomponents: &[Subcomponent],
    _components: &[ComponentDecl],
    controllers: &[ControllerDecl],
) -> Result<SystemDef, ElaborateError> {
    let component = comp_to_proc(&src.system.component, src, subcomponents)?;
    if !controllers.iter().any(|c| c.name == src.system.controller) {
        return Err(ElaborateError::Undefined {
            name: src.system.controller.clone(),
            span: src.system.span,
        });
    }
    Ok(SystemDef {
        component,
        controller: ProcExpr::Ref(src.system.controller.clone()),
        op: src.system.op,
        sync: BTreeSet::new(),
    })
}

/// Fills in synchronisation sets: `<*>` nodes synchronise on the full
/// intersection of their operand alphabets, `||` nodes on nothing.
fn resolve_sync_sets(model: &mut Model) -> Result<(), ElaborateError> {
    fn comp_alphabet(model: &Model, e: &ProcExpr) -> Result<BTreeSet<String>, ElaborateError> {
        let mut leaves = Vec::new();
        model
            .resolve_component_leaves(e, &mut leaves, &mut Vec::new())
            .map_err(ElaborateError::Resolution)?;
        let mut set = BTreeSet::new();
        for leaf in leaves {
            if let Some(sub) = model.subcomponent(leaf) {
                for b in &sub.branches {
                    set.insert(b.event.clone());
                }
            }
        }
        Ok(set)
    }

    fn ctrl_alphabet(model: &Model, e: &ProcExpr) -> Result<BTreeSet<String>, ElaborateError> {
        let mut leaves = Vec::new();
        model
            .resolve_controller_leaves(e, &mut leaves, &mut Vec::new())
            .map_err(ElaborateError::Resolution)?;
        let mut set = BTreeSet::new();
        for leaf in leaves {
            let family = model
                .controller_family(leaf)
                .map_err(ElaborateError::Resolution)?;
            for ev in model.family_alphabet(&family) {
                set.insert(ev.to_string());
            }
        }
        Ok(set)
    }

    fn fix_comp(model: &Model, e: &mut ProcExpr) -> Result<(), ElaborateError> {
        if let ProcExpr::Par {
            left,
            right,
            op,
            sync,
        } = e
        {
            fix_comp(model, left)?;
            fix_comp(model, right)?;
            if *op == ParOp::SyncShared {
                let la = comp_alphabet(model, left)?;
                let ra = comp_alphabet(model, right)?;
                *sync = la.intersection(&ra).cloned().collect();
            }
        }
        Ok(())
    }

    fn fix_ctrl(model: &Model, e: &mut ProcExpr) -> Result<(), ElaborateError> {
        if let ProcExpr::Par {
            left,
            right,
            op,
            sync,
        } = e
        {
            fix_ctrl(model, left)?;
            fix_ctrl(model, right)?;
            if *op == ParOp::SyncShared {
                let la = ctrl_alphabet(model, left)?;
                let ra = ctrl_alphabet(model, right)?;
                *sync = la.intersection(&ra).cloned().collect();
            }
        }
        Ok(())
    }

    let snapshot = model.clone();

    let mut comps = std::mem::take(&mut model.components);
    for comp in &mut comps {
        fix_comp(&snapshot, &mut comp.body)?;
    }
    model.components = comps;

    let mut ctrls = std::mem::take(&mut model.controllers);
    for ctrl in &mut ctrls {
        if let ControllerBody::Compose(e) = &mut ctrl.body {
            fix_ctrl(&snapshot, e)?;
        }
    }
    model.controllers = ctrls;

    let mut system = model.system.clone();
    fix_comp(&snapshot, &mut system.component)?;
    fix_ctrl(&snapshot, &mut system.controller)?;
    if system.op == ParOp::SyncShared {
        let comp_alpha = comp_alphabet(&snapshot, &system.component)?;
        let mut ctrl_alpha = ctrl_alphabet(&snapshot, &system.controller)?;
        ctrl_alpha.insert(INIT_EVENT.to_string());
        system.sync = comp_alpha.intersection(&ctrl_alpha).cloned().collect();
    }
    model.system = system;
    Ok(())
}
