//! Section-level AST produced by the parser, before elaboration.

use crate::expr::Expr;
use crate::model::ParOp;

use super::lex::Span;

#[derive(Debug, Clone, PartialEq)]
pub struct SrcVar {
    pub name: String,
    pub init: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcParam {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcFunction {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    pub is_guard: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcInfluence {
    pub name: String,
    pub target: String,
    pub span: Span,
}

/// `event name = [guard] :-> [resets] [@ rate];`
/// A rate clause marks the event stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcEvent {
    pub name: String,
    pub guard: Option<Expr>,
    pub resets: Vec<(String, Expr)>,
    pub rate: Option<Expr>,
    pub span: Span,
}

/// One `events:[strength, type(...)]` group; the event list is sugar for one
/// branch per listed event.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcBranchGroup {
    pub events: Vec<String>,
    pub strength: Expr,
    pub type_name: String,
    pub type_args: Vec<Expr>,
    pub span: Span,
}

/// A (possibly parameterless) subcomponent template.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcTemplate {
    pub name: String,
    pub formals: Vec<String>,
    pub groups: Vec<SrcBranchGroup>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SrcComp {
    /// `template(args):influence`
    Instantiate {
        template: String,
        args: Vec<Expr>,
        influence: String,
        span: Span,
    },
    Ref(String, Span),
    Par {
        left: Box<SrcComp>,
        right: Box<SrcComp>,
        op: ParOp,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcComponent {
    pub name: String,
    pub body: SrcComp,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SrcCtrlBody {
    /// The nil controller `0`.
    Nil,
    /// `event.Next + event.Next + ...`
    Sum(Vec<(String, String)>),
    /// A parallel composition of controller names.
    Par(SrcCtrlExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SrcCtrlExpr {
    Ref(String, Span),
    Par {
        left: Box<SrcCtrlExpr>,
        right: Box<SrcCtrlExpr>,
        op: ParOp,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcController {
    pub name: String,
    pub body: SrcCtrlBody,
    pub span: Span,
}

/// `#system` line: one component expression combined with one controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcSystem {
    pub component: SrcComp,
    pub op: ParOp,
    pub controller: String,
    pub span: Span,
}

/// A parsed model: the six sections of the tool language.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub name: String,
    pub vars: Vec<SrcVar>,
    pub params: Vec<SrcParam>,
    pub functions: Vec<SrcFunction>,
    pub influences: Vec<SrcInfluence>,
    pub events: Vec<SrcEvent>,
    pub templates: Vec<SrcTemplate>,
    pub components: Vec<SrcComponent>,
    pub controllers: Vec<SrcController>,
    pub system: SrcSystem,
}

impl SourceModel {
    /// Named component definitions plus the controlled system assembled in
    /// `#system`.
    pub fn component_count(&self) -> usize {
        self.components.len() + 1
    }

    /// Definitions in the `#controller` section (sequential states and
    /// compound controllers).
    pub fn controller_state_count(&self) -> usize {
        self.controllers.len()
    }

    /// Events declared in `#mappings`; elaboration adds `init` when absent.
    pub fn declared_event_count(&self) -> usize {
        self.events.len()
    }
}
