//! The textual modeling language: parsing, elaboration, rendering.
//!
//! A model file has six sections, each introduced by a header and required
//! exactly once, in any order:
//!
//! ```text
//! hype model <name>
//! #definitions    var/param declarations, functions and guards
//! #mappings       influence targets and event conditions
//! #subcomponents  parameterised subcomponent templates
//! #components     template instantiations and parallel compositions
//! #controller     sequential controller states and compound controllers
//! #system         one component expression combined with one controller
//! ```
//!
//! `<*>` synchronises on all events shared by its operands; `||` interleaves
//! with an empty synchronisation set. Event lines read
//! `event e = guard :-> resets @ rate;`, where each part is optional: the
//! `@ rate` clause marks the event stochastic, an omitted guard means `true`
//! and resets are comma-separated `var = expr` assignments evaluated
//! simultaneously in the pre-state. Equality comparisons in guard position
//! are treated as the corresponding crossing inequality (`x == k` behaves
//! as `x >= k`). The name `time` is reserved and evaluates to the current
//! simulation time.

mod ast;
mod elaborate;
mod grammar;
mod lex;
mod render;

use std::fmt;

use thiserror::Error;

use crate::model::{Model, ValidationReport};

pub use ast::{SourceModel, SrcEvent};
pub use lex::Span;
pub use render::render;

/// A syntax error with its source position and an expected-token message.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{}: {message}", span_text(.span))]
pub struct ParseError {
    pub span: Option<Span>,
    pub message: String,
}

fn span_text(span: &Option<Span>) -> String {
    match span {
        Some(s) => s.to_string(),
        None => "<eof>".to_string(),
    }
}

impl ParseError {
    pub(crate) fn new(span: Span, message: String) -> Self {
        ParseError {
            span: Some(span),
            message,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ElaborateError {
    #[error("{span}: undefined name {name}")]
    Undefined { name: String, span: Span },
    #[error("{span}: `{name}` already declared as {first}, redeclared as {second}")]
    Duplicate {
        name: String,
        first: &'static str,
        second: &'static str,
        span: Span,
    },
    #[error("{span}: `{name}` is a reserved name")]
    Reserved { name: String, span: Span },
    #[error("{span}: recursive function `{name}`")]
    Recursive { name: String, span: Span },
    #[error("{span}: template `{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        span: Span,
    },
    #[error("{span}: event `{event}` has negative rate {value}")]
    NegativeRate { event: String, value: f64, span: Span },
    #[error("{span}: {message}")]
    Expr { message: String, span: Span },
    #[error("{span}: unsupported: {what}")]
    Unsupported { what: String, span: Span },
    #[error("{0}")]
    Resolution(String),
    #[error("model is not well-defined:\n{0}")]
    Invalid(ValidationReport),
}

/// Errors from the full text-to-model pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Elaborate(#[from] ElaborateError),
}

/// Parses model text into its section-level AST. Comments (`//` to end of
/// line) are stripped; all six section headers must be present, each at most
/// once, in any order.
pub fn parse(text: &str) -> Result<SourceModel, ParseError> {
    let tokens = lex::tokenize(text)?;
    grammar::Parser::new(tokens).source_model()
}

/// Elaborates a parsed model: instantiates templates, synthesises `init`
/// when absent, resolves and type-checks every name, computes
/// synchronisation sets, and rejects models violating well-definedness.
pub fn elaborate(src: &SourceModel) -> Result<Model, ElaborateError> {
    elaborate::elaborate(src)
}

/// Parses and elaborates in one step.
pub fn load(text: &str) -> Result<Model, LoadError> {
    let src = parse(text)?;
    Ok(elaborate(&src)?)
}

impl fmt::Display for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "model {}: {} vars, {} params, {} influences, {} events, {} templates, {} components, {} controllers",
            self.name,
            self.vars.len(),
            self.params.len(),
            self.influences.len(),
            self.declared_event_count(),
            self.templates.len(),
            self.component_count(),
            self.controller_state_count(),
        )
    }
}
