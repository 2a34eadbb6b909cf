//! Renders a [`Model`] back to the textual language.
//!
//! Round-trip contract: parsing and elaborating the rendered text yields a
//! model isomorphic to the original up to generated template names. Each
//! subcomponent is emitted as a parameterless template plus a component
//! instantiating it with the owned influence.

use std::fmt::Write;

use crate::model::{ControllerBody, Model, ParOp, ProcExpr, INIT_EVENT};

pub fn render(model: &Model) -> String {
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, "hype model {}", model.name).unwrap();
    writeln!(w).unwrap();

    writeln!(w, "#definitions").unwrap();
    for v in &model.variables {
        writeln!(w, "var {} = {};", v.name, v.init).unwrap();
    }
    for p in &model.parameters {
        writeln!(w, "param {} = {};", p.name, p.value).unwrap();
    }
    for f in &model.functions {
        let kw = if f.is_guard { "guard" } else { "function" };
        writeln!(w, "{} {}({}) = {};", kw, f.name, f.params.join(", "), f.body).unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "#mappings").unwrap();
    for i in &model.influences {
        writeln!(w, "infl {} :-> {};", i.name, i.target).unwrap();
    }
    for e in &model.events {
        if e.name == INIT_EVENT && e.guard.is_none() && e.rate.is_none() && e.resets.is_empty() {
            continue; // synthesised again on re-parse
        }
        let guard = e
            .guard
            .as_ref()
            .map(|g| format!("{} ", g))
            .unwrap_or_default();
        let resets = e
            .resets
            .iter()
            .map(|(v, rhs)| format!("{} = {}", v, rhs))
            .collect::<Vec<_>>()
            .join(", ");
        let resets = if resets.is_empty() {
            String::new()
        } else {
            format!("{} ", resets)
        };
        match &e.rate {
            Some(r) => writeln!(w, "event {} = {}:-> {}@ {};", e.name, guard, resets, r).unwrap(),
            None => writeln!(w, "event {} = {}:-> {};", e.name, guard, resets).unwrap(),
        }
    }
    writeln!(w).unwrap();

    let template_name = |sub: &str| format!("{}_t", sub);

    writeln!(w, "#subcomponents").unwrap();
    for sub in &model.subcomponents {
        let branches = sub
            .branches
            .iter()
            .map(|b| {
                let args = b
                    .itype
                    .args
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("{}:[{}, {}({})]", b.event, b.strength, b.itype.name, args)
            })
            .collect::<Vec<_>>()
            .join(" + ");
        writeln!(w, "{}() := {};", template_name(&sub.name), branches).unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "#components").unwrap();
    for sub in &model.subcomponents {
        writeln!(
            w,
            "{} := {}():{};",
            sub.name,
            template_name(&sub.name),
            sub.influence
        )
        .unwrap();
    }
    for comp in &model.components {
        writeln!(w, "{} := {};", comp.name, proc_text(&comp.body)).unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "#controller").unwrap();
    for ctrl in &model.controllers {
        match &ctrl.body {
            ControllerBody::Nil => writeln!(w, "{} := 0;", ctrl.name).unwrap(),
            ControllerBody::Sum(prefixes) => {
                let body = prefixes
                    .iter()
                    .map(|(ev, next)| format!("{}.{}", ev, next))
                    .collect::<Vec<_>>()
                    .join(" + ");
                writeln!(w, "{} := {};", ctrl.name, body).unwrap();
            }
            ControllerBody::Compose(e) => {
                writeln!(w, "{} := {};", ctrl.name, proc_text(e)).unwrap()
            }
        }
    }
    writeln!(w).unwrap();

    writeln!(w, "#system").unwrap();
    let op = op_text(model.system.op);
    writeln!(
        w,
        "{} {} {};",
        proc_text(&model.system.component),
        op,
        proc_text(&model.system.controller)
    )
    .unwrap();

    out
}

fn op_text(op: ParOp) -> &'static str {
    match op {
        ParOp::SyncShared => "<*>",
        ParOp::Interleave => "||",
    }
}

fn proc_text(e: &ProcExpr) -> String {
    match e {
        ProcExpr::Ref(n) => n.clone(),
        ProcExpr::Par {
            left, right, op, ..
        } => {
            let l = match left.as_ref() {
                ProcExpr::Ref(n) => n.clone(),
                par => format!("({})", proc_text(par)),
            };
            let r = match right.as_ref() {
                ProcExpr::Ref(n) => n.clone(),
                par => format!("({})", proc_text(par)),
            };
            format!("{} {} {}", l, op_text(*op), r)
        }
    }
}
