//! Expression trees shared by guards, rates, resets, flow strengths and
//! influence type definitions.
//!
//! Expressions are well-typed: numeric and boolean subtrees never mix except
//! through the explicit 0/1 indicator conversion. Two evaluation paths exist:
//! a name-binding interpreter ([`eval`]) used for validation and unit oracles,
//! and a compiled form ([`CExpr`]) used by the simulator, where names are
//! resolved to state-vector slots and parameters are folded to constants.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Reserved name bound to the current simulation time during a run.
pub const TIME_NAME: &str = "time";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

/// An arithmetic/boolean expression over variable names, parameter names,
/// literals and user-defined function calls.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Name(String),
    Call(String, Vec<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Boolean-to-numeric conversion: true maps to 1, false to 0.
    Indicator(Box<Expr>),
}

impl Expr {
    pub fn name(s: impl Into<String>) -> Expr {
        Expr::Name(s.into())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Collects free names (variables, parameters and functions).
    pub fn names(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) | Expr::Bool(_) => {}
            Expr::Name(n) => out.push(n.clone()),
            Expr::Call(f, args) => {
                out.push(f.clone());
                for a in args {
                    a.names(out);
                }
            }
            Expr::Neg(e) | Expr::Not(e) | Expr::Indicator(e) => e.names(out),
            Expr::Bin(_, l, r) => {
                l.names(out);
                r.names(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{}", x),
            Expr::Bool(b) => write!(f, "{}", b),
            Expr::Name(n) => write!(f, "{}", n),
            Expr::Call(name, args) => {
                write!(f, "{}(", name)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                write!(f, ")")
            }
            Expr::Neg(e) => write!(f, "-({})", e),
            Expr::Not(e) => write!(f, "!({})", e),
            Expr::Bin(op, l, r) => write!(f, "({} {} {})", l, op.symbol(), r),
            Expr::Indicator(e) => write!(f, "ind({})", e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Num(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Num,
    Bool,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Num => write!(f, "numeric"),
            Ty::Bool => write!(f, "boolean"),
        }
    }
}

/// A user-defined function or guard definition.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub params: Vec<String>,
    pub body: Expr,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("type mismatch: expected {expected} operand in `{context}`")]
    TypeMismatch { expected: Ty, context: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// Evaluation environment: a name-to-value binding plus function definitions.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub values: &'a HashMap<String, Value>,
    pub functions: &'a HashMap<String, FunctionDef>,
}

impl<'a> Env<'a> {
    pub fn new(
        values: &'a HashMap<String, Value>,
        functions: &'a HashMap<String, FunctionDef>,
    ) -> Self {
        Env { values, functions }
    }
}

/// Standard arithmetic/boolean evaluation with user functions applied by
/// definition. Formal arguments shadow the outer binding inside a body.
pub fn eval(expr: &Expr, env: Env<'_>) -> Result<Value, EvalError> {
    eval_with(expr, env, &HashMap::new())
}

fn eval_with(
    expr: &Expr,
    env: Env<'_>,
    locals: &HashMap<String, Value>,
) -> Result<Value, EvalError> {
    match expr {
        Expr::Num(x) => Ok(Value::Num(*x)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Name(n) => locals
            .get(n)
            .or_else(|| env.values.get(n))
            .copied()
            .ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Call(name, args) => {
            let def = env
                .functions
                .get(name)
                .ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
            if def.params.len() != args.len() {
                return Err(EvalError::Arity {
                    name: name.clone(),
                    expected: def.params.len(),
                    got: args.len(),
                });
            }
            let mut inner = HashMap::with_capacity(args.len());
            for (p, a) in def.params.iter().zip(args) {
                inner.insert(p.clone(), eval_with(a, env, locals)?);
            }
            eval_with(&def.body, env, &inner)
        }
        Expr::Neg(e) => {
            let v = num(eval_with(e, env, locals)?, expr)?;
            Ok(Value::Num(-v))
        }
        Expr::Not(e) => {
            let v = boolean(eval_with(e, env, locals)?, expr)?;
            Ok(Value::Bool(!v))
        }
        Expr::Indicator(e) => {
            let v = boolean(eval_with(e, env, locals)?, expr)?;
            Ok(Value::Num(if v { 1.0 } else { 0.0 }))
        }
        Expr::Bin(op, l, r) => {
            let lv = eval_with(l, env, locals)?;
            let rv = eval_with(r, env, locals)?;
            match op {
                BinOp::Add => Ok(Value::Num(num(lv, expr)? + num(rv, expr)?)),
                BinOp::Sub => Ok(Value::Num(num(lv, expr)? - num(rv, expr)?)),
                BinOp::Mul => Ok(Value::Num(num(lv, expr)? * num(rv, expr)?)),
                BinOp::Div => {
                    let d = num(rv, expr)?;
                    if d == 0.0 {
                        return Err(EvalError::DivisionByZero(expr.to_string()));
                    }
                    Ok(Value::Num(num(lv, expr)? / d))
                }
                BinOp::And => Ok(Value::Bool(boolean(lv, expr)? && boolean(rv, expr)?)),
                BinOp::Or => Ok(Value::Bool(boolean(lv, expr)? || boolean(rv, expr)?)),
                BinOp::Lt => Ok(Value::Bool(num(lv, expr)? < num(rv, expr)?)),
                BinOp::Le => Ok(Value::Bool(num(lv, expr)? <= num(rv, expr)?)),
                BinOp::Gt => Ok(Value::Bool(num(lv, expr)? > num(rv, expr)?)),
                BinOp::Ge => Ok(Value::Bool(num(lv, expr)? >= num(rv, expr)?)),
                BinOp::Eq => Ok(Value::Bool(num(lv, expr)? == num(rv, expr)?)),
                BinOp::Ne => Ok(Value::Bool(num(lv, expr)? != num(rv, expr)?)),
            }
        }
    }
}

fn num(v: Value, context: &Expr) -> Result<f64, EvalError> {
    v.as_num().ok_or_else(|| EvalError::TypeMismatch {
        expected: Ty::Num,
        context: context.to_string(),
    })
}

fn boolean(v: Value, context: &Expr) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| EvalError::TypeMismatch {
        expected: Ty::Bool,
        context: context.to_string(),
    })
}

/// Infers the type of an expression given the types of free names.
/// Function bodies are checked with their formals bound to numerics.
pub fn infer_type(
    expr: &Expr,
    name_ty: &dyn Fn(&str) -> Option<Ty>,
    functions: &HashMap<String, FunctionDef>,
) -> Result<Ty, EvalError> {
    match expr {
        Expr::Num(_) => Ok(Ty::Num),
        Expr::Bool(_) => Ok(Ty::Bool),
        Expr::Name(n) => name_ty(n).ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Call(name, args) => {
            let def = functions
                .get(name)
                .ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
            if def.params.len() != args.len() {
                return Err(EvalError::Arity {
                    name: name.clone(),
                    expected: def.params.len(),
                    got: args.len(),
                });
            }
            for a in args {
                let t = infer_type(a, name_ty, functions)?;
                if t != Ty::Num {
                    return Err(EvalError::TypeMismatch {
                        expected: Ty::Num,
                        context: a.to_string(),
                    });
                }
            }
            let formals: Vec<String> = def.params.clone();
            let inner = move |n: &str| {
                if formals.iter().any(|p| p == n) {
                    Some(Ty::Num)
                } else {
                    name_ty(n)
                }
            };
            infer_type(&def.body, &inner, functions)
        }
        Expr::Neg(e) => {
            expect_ty(e, Ty::Num, name_ty, functions)?;
            Ok(Ty::Num)
        }
        Expr::Not(e) => {
            expect_ty(e, Ty::Bool, name_ty, functions)?;
            Ok(Ty::Bool)
        }
        Expr::Indicator(e) => {
            expect_ty(e, Ty::Bool, name_ty, functions)?;
            Ok(Ty::Num)
        }
        Expr::Bin(op, l, r) => {
            if op.is_logical() {
                expect_ty(l, Ty::Bool, name_ty, functions)?;
                expect_ty(r, Ty::Bool, name_ty, functions)?;
                Ok(Ty::Bool)
            } else if op.is_comparison() {
                expect_ty(l, Ty::Num, name_ty, functions)?;
                expect_ty(r, Ty::Num, name_ty, functions)?;
                Ok(Ty::Bool)
            } else {
                expect_ty(l, Ty::Num, name_ty, functions)?;
                expect_ty(r, Ty::Num, name_ty, functions)?;
                Ok(Ty::Num)
            }
        }
    }
}

fn expect_ty(
    e: &Expr,
    want: Ty,
    name_ty: &dyn Fn(&str) -> Option<Ty>,
    functions: &HashMap<String, FunctionDef>,
) -> Result<(), EvalError> {
    let got = infer_type(e, name_ty, functions)?;
    if got != want {
        return Err(EvalError::TypeMismatch {
            expected: want,
            context: e.to_string(),
        });
    }
    Ok(())
}

/// How a free name resolves when compiling an expression for the simulator.
#[derive(Debug, Clone, Copy)]
pub enum Resolution {
    /// A continuous state-vector slot.
    Slot(usize),
    /// A parameter folded to its value.
    Const(f64),
    /// The reserved simulation-time binding.
    Time,
}

/// A compiled numeric expression over the continuous state vector and time.
///
/// Booleans are compiled away: a comparison becomes a signed crossing margin
/// (nonnegative exactly when the comparison holds) and `Step` maps that
/// margin to the 0/1 indicator.
#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Const(f64),
    Slot(usize),
    Time,
    Neg(Box<CExpr>),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
    Div(Box<CExpr>, Box<CExpr>),
    Min(Box<CExpr>, Box<CExpr>),
    Max(Box<CExpr>, Box<CExpr>),
    Step(Box<CExpr>),
}

impl CExpr {
    pub fn eval(&self, t: f64, y: &[f64]) -> f64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Slot(i) => y[*i],
            CExpr::Time => t,
            CExpr::Neg(e) => -e.eval(t, y),
            CExpr::Add(a, b) => a.eval(t, y) + b.eval(t, y),
            CExpr::Sub(a, b) => a.eval(t, y) - b.eval(t, y),
            CExpr::Mul(a, b) => a.eval(t, y) * b.eval(t, y),
            CExpr::Div(a, b) => a.eval(t, y) / b.eval(t, y),
            CExpr::Min(a, b) => a.eval(t, y).min(b.eval(t, y)),
            CExpr::Max(a, b) => a.eval(t, y).max(b.eval(t, y)),
            CExpr::Step(e) => {
                if e.eval(t, y) >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The folded constant value, if the expression is state-independent.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            CExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn fold2(
        op: fn(f64, f64) -> f64,
        a: CExpr,
        b: CExpr,
        mk: fn(Box<CExpr>, Box<CExpr>) -> CExpr,
    ) -> CExpr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => CExpr::Const(op(x, y)),
            _ => mk(Box::new(a), Box::new(b)),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompileError {
    #[error("unresolved name `{0}`")]
    Unresolved(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("recursive function `{0}` cannot be inlined")]
    Recursive(String),
    #[error("boolean expression `{0}` used in numeric position")]
    BoolInNumeric(String),
    #[error("numeric expression `{0}` used in boolean position")]
    NumInBoolean(String),
}

/// Compiler from [`Expr`] to [`CExpr`]. Function calls are inlined by
/// substitution, so compiled expressions are call-free.
pub struct Compiler<'a> {
    pub resolve: &'a dyn Fn(&str) -> Option<Resolution>,
    pub functions: &'a HashMap<String, FunctionDef>,
}

impl<'a> Compiler<'a> {
    pub fn new(
        resolve: &'a dyn Fn(&str) -> Option<Resolution>,
        functions: &'a HashMap<String, FunctionDef>,
    ) -> Self {
        Compiler { resolve, functions }
    }

    /// Compiles a numeric-typed expression.
    pub fn numeric(&self, expr: &Expr) -> Result<CExpr, CompileError> {
        self.numeric_in(expr, &HashMap::new(), &mut Vec::new())
    }

    /// Compiles a boolean-typed expression into its crossing margin: the
    /// result is `>= 0` exactly when the boolean holds, and for guards over
    /// continuous trajectories it crosses zero where the guard flips.
    pub fn crossing(&self, expr: &Expr) -> Result<CExpr, CompileError> {
        self.crossing_in(expr, &HashMap::new(), &mut Vec::new())
    }

    fn numeric_in(
        &self,
        expr: &Expr,
        locals: &HashMap<String, CExpr>,
        stack: &mut Vec<String>,
    ) -> Result<CExpr, CompileError> {
        match expr {
            Expr::Num(x) => Ok(CExpr::Const(*x)),
            Expr::Bool(_) => Err(CompileError::BoolInNumeric(expr.to_string())),
            Expr::Name(n) => {
                if let Some(c) = locals.get(n) {
                    return Ok(c.clone());
                }
                match (self.resolve)(n) {
                    Some(Resolution::Slot(i)) => Ok(CExpr::Slot(i)),
                    Some(Resolution::Const(v)) => Ok(CExpr::Const(v)),
                    Some(Resolution::Time) => Ok(CExpr::Time),
                    None => Err(CompileError::Unresolved(n.clone())),
                }
            }
            Expr::Call(name, args) => {
                let (def, inner) = self.inline_args(name, args, locals, stack)?;
                stack.push(name.clone());
                let body = self.numeric_in(&def.body, &inner, stack);
                stack.pop();
                body
            }
            Expr::Neg(e) => {
                let c = self.numeric_in(e, locals, stack)?;
                Ok(match c.as_const() {
                    Some(x) => CExpr::Const(-x),
                    None => CExpr::Neg(Box::new(c)),
                })
            }
            Expr::Not(_) => Err(CompileError::BoolInNumeric(expr.to_string())),
            Expr::Indicator(e) => {
                let c = self.crossing_in(e, locals, stack)?;
                Ok(match c.as_const() {
                    Some(x) => CExpr::Const(if x >= 0.0 { 1.0 } else { 0.0 }),
                    None => CExpr::Step(Box::new(c)),
                })
            }
            Expr::Bin(op, l, r) => {
                if op.is_comparison() || op.is_logical() {
                    return Err(CompileError::BoolInNumeric(expr.to_string()));
                }
                let a = self.numeric_in(l, locals, stack)?;
                let b = self.numeric_in(r, locals, stack)?;
                Ok(match op {
                    BinOp::Add => CExpr::fold2(|x, y| x + y, a, b, CExpr::Add),
                    BinOp::Sub => CExpr::fold2(|x, y| x - y, a, b, CExpr::Sub),
                    BinOp::Mul => CExpr::fold2(|x, y| x * y, a, b, CExpr::Mul),
                    BinOp::Div => CExpr::fold2(|x, y| x / y, a, b, CExpr::Div),
                    _ => unreachable!(),
                })
            }
        }
    }

    fn crossing_in(
        &self,
        expr: &Expr,
        locals: &HashMap<String, CExpr>,
        stack: &mut Vec<String>,
    ) -> Result<CExpr, CompileError> {
        match expr {
            Expr::Bool(true) => Ok(CExpr::Const(1.0)),
            Expr::Bool(false) => Ok(CExpr::Const(-1.0)),
            Expr::Not(e) => {
                let c = self.crossing_in(e, locals, stack)?;
                Ok(match c.as_const() {
                    Some(x) => CExpr::Const(-x),
                    None => CExpr::Neg(Box::new(c)),
                })
            }
            Expr::Bin(op, l, r) if op.is_logical() => {
                let a = self.crossing_in(l, locals, stack)?;
                let b = self.crossing_in(r, locals, stack)?;
                Ok(match op {
                    BinOp::And => CExpr::fold2(f64::min, a, b, CExpr::Min),
                    BinOp::Or => CExpr::fold2(f64::max, a, b, CExpr::Max),
                    _ => unreachable!(),
                })
            }
            Expr::Bin(op, l, r) if op.is_comparison() => {
                let a = self.numeric_in(l, locals, stack)?;
                let b = self.numeric_in(r, locals, stack)?;
                // x >= k and x == k share the margin x - k; x <= k flips it.
                // Strictness is not representable in a crossing margin and is
                // measure-zero under numerical integration.
                Ok(match op {
                    BinOp::Ge | BinOp::Gt | BinOp::Eq | BinOp::Ne => {
                        CExpr::fold2(|x, y| x - y, a, b, CExpr::Sub)
                    }
                    BinOp::Le | BinOp::Lt => CExpr::fold2(|x, y| x - y, b, a, CExpr::Sub),
                    _ => unreachable!(),
                })
            }
            Expr::Call(name, args) => {
                let (def, inner) = self.inline_args(name, args, locals, stack)?;
                stack.push(name.clone());
                let body = self.crossing_in(&def.body, &inner, stack);
                stack.pop();
                body
            }
            Expr::Num(_) | Expr::Name(_) | Expr::Neg(_) | Expr::Indicator(_) | Expr::Bin(..) => {
                Err(CompileError::NumInBoolean(expr.to_string()))
            }
        }
    }

    fn inline_args(
        &self,
        name: &str,
        args: &[Expr],
        locals: &HashMap<String, CExpr>,
        stack: &mut Vec<String>,
    ) -> Result<(&'a FunctionDef, HashMap<String, CExpr>), CompileError> {
        let def = self
            .functions
            .get(name)
            .ok_or_else(|| CompileError::UnknownFunction(name.to_string()))?;
        if def.params.len() != args.len() {
            return Err(CompileError::Arity {
                name: name.to_string(),
                expected: def.params.len(),
                got: args.len(),
            });
        }
        if stack.iter().any(|s| s == name) {
            return Err(CompileError::Recursive(name.to_string()));
        }
        let mut inner = HashMap::with_capacity(args.len());
        for (p, a) in def.params.iter().zip(args) {
            inner.insert(p.clone(), self.numeric_in(a, locals, stack)?);
        }
        Ok((def, inner))
    }
}
