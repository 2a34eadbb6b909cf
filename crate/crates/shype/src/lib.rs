//! Stochastic HYPE: a process algebra for stochastic hybrid systems.
//!
//! This crate implements the full pipeline from the textual modeling
//! language to batch experiments:
//!
//! * [`parse`] — the six-section tool language, template expansion, and
//!   rendering back to text;
//! * [`model`] — the in-memory model and well-definedness validation;
//! * [`flat`] — flattening into gated ODE terms over discrete selector
//!   variables, one per subcomponent and per sequential controller;
//! * [`sim`] — hybrid stochastic simulation: adaptive Runge-Kutta
//!   integration with dense output, urgent-guard location by root finding,
//!   and stochastic firing by cumulative-hazard inversion;
//! * [`stats`] — seed-deterministic batch runs, ensemble summaries with
//!   confidence intervals, parameter sweeps, and CSV export;
//! * [`opportunet`] — generation of opportunistic-network models
//!   (sensors, data ferry, base station) in four mobility/return scenarios.
//!
//! Single runs are strictly sequential; batches fan runs out across threads
//! (rayon, behind the default `parallel` feature) with per-run derived
//! random streams so results are independent of scheduling.

pub mod expr;
pub mod flat;
pub mod model;
pub mod ode;
pub mod opportunet;
pub mod parse;
pub mod rng;
pub mod sim;
pub mod stats;

#[doc(hidden)]
pub mod testmodels;

pub use expr::{CExpr, Expr, Value};
pub use flat::{flatten, FlatSystem};
pub use model::{validate, Model, ValidationReport};
pub use parse::{load, render};
pub use rng::{derive_rng, UniformSource};
pub use sim::{simulate, SimConfig, Trajectory};
pub use stats::{run_batch, sweep, EnsembleSummary, Observable, SweepSpec};
