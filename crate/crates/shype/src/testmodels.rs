//! Programmatic fixture models used by unit and integration tests.
//!
//! These mirror the tool-language fixtures under `tests/data/` but are built
//! directly against the model API, so lower layers can be tested without the
//! parser.

use std::collections::BTreeSet;

use crate::expr::{BinOp, Expr};
use crate::model::{
    Branch, ComponentDecl, ControllerBody, ControllerDecl, EventDecl, EventKind, FunctionDecl,
    InfluenceDecl, Model, ParOp, ParamDecl, ProcExpr, Subcomponent, SystemDef, TypeUse, VarDecl,
};

fn const_use() -> TypeUse {
    TypeUse {
        name: "const".to_string(),
        args: vec![],
    }
}

fn branch(event: &str, strength: Expr, continuation: &str) -> Branch {
    Branch {
        event: event.to_string(),
        strength,
        itype: const_use(),
        continuation: continuation.to_string(),
    }
}

fn call2(name: &str, a: &str, b: &str) -> Expr {
    Expr::Call(name.to_string(), vec![Expr::name(a), Expr::name(b)])
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// The network-node buffer model: one continuous buffer level fed by a
/// switchable input flow and drained by a switchable output flow, with
/// urgent full/empty cutoffs.
pub fn buffer_model() -> Model {
    Model {
        name: "network_node".to_string(),
        variables: vec![VarDecl {
            name: "B".to_string(),
            init: Expr::Num(0.0),
        }],
        parameters: vec![
            ParamDecl { name: "maxB".into(), value: 100.0 },
            ParamDecl { name: "r_in".into(), value: 1.0 },
            ParamDecl { name: "r_out".into(), value: -2.0 },
            ParamDecl { name: "kon_in".into(), value: 0.5 },
            ParamDecl { name: "koff_in".into(), value: 0.05 },
            ParamDecl { name: "kon_out".into(), value: 0.02 },
            ParamDecl { name: "koff_out".into(), value: 0.01 },
        ],
        functions: vec![
            FunctionDecl {
                name: "const".to_string(),
                params: vec![],
                body: Expr::Num(1.0),
                is_guard: false,
            },
            FunctionDecl {
                name: "above".to_string(),
                params: vec!["X".to_string(), "K".to_string()],
                body: Expr::bin(BinOp::Ge, Expr::name("X"), Expr::name("K")),
                is_guard: true,
            },
            FunctionDecl {
                name: "below".to_string(),
                params: vec!["X".to_string(), "K".to_string()],
                body: Expr::bin(BinOp::Le, Expr::name("X"), Expr::name("K")),
                is_guard: true,
            },
        ],
        influences: vec![
            InfluenceDecl { name: "in".into(), target: "B".into() },
            InfluenceDecl { name: "out".into(), target: "B".into() },
        ],
        events: vec![
            EventDecl {
                name: "init".to_string(),
                kind: EventKind::Deterministic,
                guard: None,
                rate: None,
                resets: vec![],
            },
            EventDecl {
                name: "on_in".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("kon_in")),
                resets: vec![],
            },
            EventDecl {
                name: "off_in".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("koff_in")),
                resets: vec![],
            },
            EventDecl {
                name: "on_out".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("kon_out")),
                resets: vec![],
            },
            EventDecl {
                name: "off_out".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("koff_out")),
                resets: vec![],
            },
            EventDecl {
                name: "full".to_string(),
                kind: EventKind::Deterministic,
                guard: Some(call2("above", "B", "maxB")),
                rate: None,
                resets: vec![],
            },
            EventDecl {
                name: "empty".to_string(),
                kind: EventKind::Deterministic,
                guard: Some(Expr::Call(
                    "below".to_string(),
                    vec![Expr::name("B"), Expr::Num(0.0)],
                )),
                rate: None,
                resets: vec![],
            },
        ],
        subcomponents: vec![
            Subcomponent {
                name: "input".to_string(),
                influence: "in".to_string(),
                branches: vec![
                    branch("off_in", Expr::Num(0.0), "input"),
                    branch("full", Expr::Num(0.0), "input"),
                    branch("init", Expr::Num(0.0), "input"),
                    branch("on_in", Expr::name("r_in"), "input"),
                ],
            },
            Subcomponent {
                name: "output".to_string(),
                influence: "out".to_string(),
                branches: vec![
                    branch("off_out", Expr::Num(0.0), "output"),
                    branch("empty", Expr::Num(0.0), "output"),
                    branch("init", Expr::Num(0.0), "output"),
                    branch("on_out", Expr::name("r_out"), "output"),
                ],
            },
        ],
        components: vec![ComponentDecl {
            name: "sys".to_string(),
            body: ProcExpr::Par {
                left: Box::new(ProcExpr::Ref("input".to_string())),
                right: Box::new(ProcExpr::Ref("output".to_string())),
                op: ParOp::SyncShared,
                sync: set(&["init"]),
            },
        }],
        controllers: vec![
            ControllerDecl {
                name: "con_in".to_string(),
                body: ControllerBody::Sum(vec![("on_in".to_string(), "con_in_1".to_string())]),
            },
            ControllerDecl {
                name: "con_in_1".to_string(),
                body: ControllerBody::Sum(vec![
                    ("off_in".to_string(), "con_in".to_string()),
                    ("full".to_string(), "con_in".to_string()),
                ]),
            },
            ControllerDecl {
                name: "con_out".to_string(),
                body: ControllerBody::Sum(vec![("on_out".to_string(), "con_out_1".to_string())]),
            },
            ControllerDecl {
                name: "con_out_1".to_string(),
                body: ControllerBody::Sum(vec![
                    ("off_out".to_string(), "con_out".to_string()),
                    ("empty".to_string(), "con_out".to_string()),
                ]),
            },
            ControllerDecl {
                name: "con".to_string(),
                body: ControllerBody::Compose(ProcExpr::Par {
                    left: Box::new(ProcExpr::Ref("con_in".to_string())),
                    right: Box::new(ProcExpr::Ref("con_out".to_string())),
                    op: ParOp::Interleave,
                    sync: BTreeSet::new(),
                }),
            },
        ],
        system: SystemDef {
            component: ProcExpr::Ref("sys".to_string()),
            controller: ProcExpr::Ref("con".to_string()),
            op: ParOp::SyncShared,
            sync: set(&[
                "init", "on_in", "off_in", "on_out", "off_out", "full", "empty",
            ]),
        },
    }
}

/// A one-flow model whose input is active from initialisation: dB/dt = 1
/// until the urgent `full` guard at B >= 100 switches the flow off.
pub fn fill_only_model() -> Model {
    Model {
        name: "fill_only".to_string(),
        variables: vec![VarDecl {
            name: "B".to_string(),
            init: Expr::Num(0.0),
        }],
        parameters: vec![
            ParamDecl { name: "rin".into(), value: 1.0 },
            ParamDecl { name: "maxB".into(), value: 100.0 },
        ],
        functions: vec![
            FunctionDecl {
                name: "const".to_string(),
                params: vec![],
                body: Expr::Num(1.0),
                is_guard: false,
            },
            FunctionDecl {
                name: "above".to_string(),
                params: vec!["X".to_string(), "K".to_string()],
                body: Expr::bin(BinOp::Ge, Expr::name("X"), Expr::name("K")),
                is_guard: true,
            },
        ],
        influences: vec![InfluenceDecl { name: "in".into(), target: "B".into() }],
        events: vec![
            EventDecl {
                name: "init".to_string(),
                kind: EventKind::Deterministic,
                guard: None,
                rate: None,
                resets: vec![],
            },
            EventDecl {
                name: "full".to_string(),
                kind: EventKind::Deterministic,
                guard: Some(call2("above", "B", "maxB")),
                rate: None,
                resets: vec![],
            },
        ],
        subcomponents: vec![Subcomponent {
            name: "filler".to_string(),
            influence: "in".to_string(),
            branches: vec![
                branch("full", Expr::Num(0.0), "filler"),
                branch("init", Expr::name("rin"), "filler"),
            ],
        }],
        components: vec![],
        controllers: vec![
            ControllerDecl {
                name: "con".to_string(),
                body: ControllerBody::Sum(vec![("full".to_string(), "stop".to_string())]),
            },
            ControllerDecl {
                name: "stop".to_string(),
                body: ControllerBody::Nil,
            },
        ],
        system: SystemDef {
            component: ProcExpr::Ref("filler".to_string()),
            controller: ProcExpr::Ref("con".to_string()),
            op: ParOp::SyncShared,
            sync: set(&["init", "full"]),
        },
    }
}

/// Two variables coupled by identically gated +r/-r flows switched by one
/// stochastic toggle: X + Y is conserved between events.
pub fn transfer_model() -> Model {
    Model {
        name: "transfer".to_string(),
        variables: vec![
            VarDecl { name: "X".into(), init: Expr::Num(0.0) },
            VarDecl { name: "Y".into(), init: Expr::Num(10.0) },
        ],
        parameters: vec![
            ParamDecl { name: "r".into(), value: 2.0 },
            ParamDecl { name: "k".into(), value: 0.8 },
        ],
        functions: vec![FunctionDecl {
            name: "const".to_string(),
            params: vec![],
            body: Expr::Num(1.0),
            is_guard: false,
        }],
        influences: vec![
            InfluenceDecl { name: "into_x".into(), target: "X".into() },
            InfluenceDecl { name: "from_y".into(), target: "Y".into() },
        ],
        events: vec![
            EventDecl {
                name: "init".to_string(),
                kind: EventKind::Deterministic,
                guard: None,
                rate: None,
                resets: vec![],
            },
            EventDecl {
                name: "go".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("k")),
                resets: vec![],
            },
            EventDecl {
                name: "halt".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("k")),
                resets: vec![],
            },
        ],
        subcomponents: vec![
            Subcomponent {
                name: "fill_x".to_string(),
                influence: "into_x".to_string(),
                branches: vec![
                    branch("init", Expr::Num(0.0), "fill_x"),
                    branch("go", Expr::name("r"), "fill_x"),
                    branch("halt", Expr::Num(0.0), "fill_x"),
                ],
            },
            Subcomponent {
                name: "drain_y".to_string(),
                influence: "from_y".to_string(),
                branches: vec![
                    branch("init", Expr::Num(0.0), "drain_y"),
                    branch("go", Expr::Neg(Box::new(Expr::name("r"))), "drain_y"),
                    branch("halt", Expr::Num(0.0), "drain_y"),
                ],
            },
        ],
        components: vec![ComponentDecl {
            name: "pump".to_string(),
            body: ProcExpr::Par {
                left: Box::new(ProcExpr::Ref("fill_x".to_string())),
                right: Box::new(ProcExpr::Ref("drain_y".to_string())),
                op: ParOp::SyncShared,
                sync: set(&["init", "go", "halt"]),
            },
        }],
        controllers: vec![
            ControllerDecl {
                name: "idle".to_string(),
                body: ControllerBody::Sum(vec![("go".to_string(), "moving".to_string())]),
            },
            ControllerDecl {
                name: "moving".to_string(),
                body: ControllerBody::Sum(vec![("halt".to_string(), "idle".to_string())]),
            },
        ],
        system: SystemDef {
            component: ProcExpr::Ref("pump".to_string()),
            controller: ProcExpr::Ref("idle".to_string()),
            op: ParOp::SyncShared,
            sync: set(&["init", "go", "halt"]),
        },
    }
}

/// A single self-looping stochastic event at a constant rate; the minimal
/// model for firing-time oracles.
pub fn single_event_model(rate: f64) -> Model {
    Model {
        name: "ticker".to_string(),
        variables: vec![VarDecl { name: "N".into(), init: Expr::Num(0.0) }],
        parameters: vec![ParamDecl { name: "lambda".into(), value: rate }],
        functions: vec![FunctionDecl {
            name: "const".to_string(),
            params: vec![],
            body: Expr::Num(1.0),
            is_guard: false,
        }],
        influences: vec![InfluenceDecl { name: "tick_i".into(), target: "N".into() }],
        events: vec![
            EventDecl {
                name: "init".to_string(),
                kind: EventKind::Deterministic,
                guard: None,
                rate: None,
                resets: vec![],
            },
            EventDecl {
                name: "tick".to_string(),
                kind: EventKind::Stochastic,
                guard: None,
                rate: Some(Expr::name("lambda")),
                resets: vec![(
                    "N".to_string(),
                    Expr::bin(BinOp::Add, Expr::name("N"), Expr::Num(1.0)),
                )],
            },
        ],
        subcomponents: vec![Subcomponent {
            name: "counter".to_string(),
            influence: "tick_i".to_string(),
            branches: vec![
                branch("init", Expr::Num(0.0), "counter"),
                branch("tick", Expr::Num(0.0), "counter"),
            ],
        }],
        components: vec![],
        controllers: vec![ControllerDecl {
            name: "loop_c".to_string(),
            body: ControllerBody::Sum(vec![("tick".to_string(), "loop_c".to_string())]),
        }],
        system: SystemDef {
            component: ProcExpr::Ref("counter".to_string()),
            controller: ProcExpr::Ref("loop_c".to_string()),
            op: ParOp::SyncShared,
            sync: set(&["init", "tick"]),
        },
    }
}
