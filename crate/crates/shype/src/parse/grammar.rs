//! Recursive-descent parser for the six-section modeling language.

use crate::expr::{BinOp, Expr};
use crate::model::ParOp;

use super::ast::*;
use super::lex::{Span, Tok, Token};
use super::ParseError;

pub struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(tokens: Vec<Token>) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn accept(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        if self.peek() == &tok {
            Ok(self.bump())
        } else {
            Err(ParseError::new(
                self.span(),
                format!("expected {}, found {}", tok, self.peek()),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, span))
            }
            other => Err(ParseError::new(
                span,
                format!("expected identifier, found {}", other),
            )),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<Span, ParseError> {
        let span = self.span();
        match self.peek() {
            Tok::Ident(name) if name == word => {
                self.bump();
                Ok(span)
            }
            other => Err(ParseError::new(
                span,
                format!("expected `{}`, found {}", word, other),
            )),
        }
    }

    pub fn source_model(&mut self) -> Result<SourceModel, ParseError> {
        self.keyword("hype")?;
        self.keyword("model")?;
        let (name, _) = self.ident()?;

        let mut vars = Vec::new();
        let mut params = Vec::new();
        let mut functions = Vec::new();
        let mut influences = Vec::new();
        let mut events = Vec::new();
        let mut templates = Vec::new();
        let mut components = Vec::new();
        let mut controllers = Vec::new();
        let mut system: Option<SrcSystem> = None;
        let mut seen: Vec<String> = Vec::new();

        while self.peek() != &Tok::Eof {
            let span = self.span();
            let section = match self.peek().clone() {
                Tok::Section(s) => {
                    self.bump();
                    s
                }
                other => {
                    return Err(ParseError::new(
                        span,
                        format!("expected a section header, found {}", other),
                    ))
                }
            };
            if seen.contains(&section) {
                return Err(ParseError::new(
                    span,
                    format!("section `#{}` appears more than once", section),
                ));
            }
            seen.push(section.clone());
            match section.as_str() {
                "definitions" => {
                    self.definitions(&mut vars, &mut params, &mut functions)?;
                }
                "mappings" => {
                    self.mappings(&mut influences, &mut events)?;
                }
                "subcomponents" => {
                    self.subcomponents(&mut templates)?;
                }
                "components" => {
                    self.components(&mut components)?;
                }
                "controller" => {
                    self.controllers(&mut controllers)?;
                }
                "system" => {
                    system = Some(self.system()?);
                }
                other => {
                    return Err(ParseError::new(span, format!("unknown section `#{}`", other)));
                }
            }
        }

        for required in [
            "definitions",
            "mappings",
            "subcomponents",
            "components",
            "controller",
            "system",
        ] {
            if !seen.iter().any(|s| s == required) {
                return Err(ParseError::new(
                    self.span(),
                    format!("missing section `#{}`", required),
                ));
            }
        }

        let model = SourceModel {
            name,
            vars,
            params,
            functions,
            influences,
            events,
            templates,
            components,
            controllers,
            system: system.expect("system section checked above"),
        };
        check_duplicates(&model)?;
        Ok(model)
    }

    fn at_section_or_eof(&self) -> bool {
        matches!(self.peek(), Tok::Section(_) | Tok::Eof)
    }

    fn definitions(
        &mut self,
        vars: &mut Vec<SrcVar>,
        params: &mut Vec<SrcParam>,
        functions: &mut Vec<SrcFunction>,
    ) -> Result<(), ParseError> {
        while !self.at_section_or_eof() {
            let span = self.span();
            let (kw, _) = self.ident()?;
            match kw.as_str() {
                "var" => {
                    let (name, _) = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let init = self.expr()?;
                    self.expect(Tok::Semi)?;
                    vars.push(SrcVar { name, init, span });
                }
                "param" => {
                    let (name, _) = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let value = self.expr()?;
                    self.expect(Tok::Semi)?;
                    params.push(SrcParam { name, value, span });
                }
                "function" | "guard" => {
                    let is_guard = kw == "guard";
                    let (name, _) = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let mut formals = Vec::new();
                    if self.peek() != &Tok::RParen {
                        loop {
                            let (p, _) = self.ident()?;
                            formals.push(p);
                            if !self.accept(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Assign)?;
                    let body = self.expr()?;
                    self.expect(Tok::Semi)?;
                    functions.push(SrcFunction {
                        name,
                        params: formals,
                        body,
                        is_guard,
                        span,
                    });
                }
                other => {
                    return Err(ParseError::new(
                        span,
                        format!(
                            "expected `var`, `param`, `function` or `guard`, found `{}`",
                            other
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    fn mappings(
        &mut self,
        influences: &mut Vec<SrcInfluence>,
        events: &mut Vec<SrcEvent>,
    ) -> Result<(), ParseError> {
        while !self.at_section_or_eof() {
            let span = self.span();
            let (kw, _) = self.ident()?;
            match kw.as_str() {
                "infl" => {
                    let (name, _) = self.ident()?;
                    self.expect(Tok::MapsTo)?;
                    let (target, _) = self.ident()?;
                    self.expect(Tok::Semi)?;
                    influences.push(SrcInfluence { name, target, span });
                }
                "event" => {
                    let (name, _) = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let guard = if self.peek() == &Tok::MapsTo {
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    self.expect(Tok::MapsTo)?;
                    let mut resets = Vec::new();
                    if !matches!(self.peek(), Tok::At | Tok::Semi) {
                        loop {
                            let (var, _) = self.ident()?;
                            self.expect(Tok::Assign)?;
                            let rhs = self.expr()?;
                            resets.push((var, rhs));
                            if !self.accept(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    let rate = if self.accept(&Tok::At) {
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    self.expect(Tok::Semi)?;
                    events.push(SrcEvent {
                        name,
                        guard,
                        resets,
                        rate,
                        span,
                    });
                }
                other => {
                    return Err(ParseError::new(
                        span,
                        format!("expected `infl` or `event`, found `{}`", other),
                    ));
                }
            }
        }
        Ok(())
    }

    fn subcomponents(&mut self, templates: &mut Vec<SrcTemplate>) -> Result<(), ParseError> {
        while !self.at_section_or_eof() {
            let span = self.span();
            let (name, _) = self.ident()?;
            self.expect(Tok::LParen)?;
            let mut formals = Vec::new();
            if self.peek() != &Tok::RParen {
                loop {
                    let (p, _) = self.ident()?;
                    formals.push(p);
                    if !self.accept(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            self.expect(Tok::Define)?;
            let mut groups = Vec::new();
            loop {
                groups.push(self.branch_group()?);
                if !self.accept(&Tok::Plus) {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
            templates.push(SrcTemplate {
                name,
                formals,
                groups,
                span,
            });
        }
        Ok(())
    }

    fn branch_group(&mut self) -> Result<SrcBranchGroup, ParseError> {
        let span = self.span();
        let mut events = Vec::new();
        loop {
            let (ev, _) = self.ident()?;
            events.push(ev);
            if !self.accept(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Colon)?;
        self.expect(Tok::LBracket)?;
        let strength = self.expr()?;
        self.expect(Tok::Comma)?;
        let (type_name, _) = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut type_args = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                type_args.push(self.expr()?);
                if !self.accept(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::RBracket)?;
        Ok(SrcBranchGroup {
            events,
            strength,
            type_name,
            type_args,
            span,
        })
    }

    fn components(&mut self, components: &mut Vec<SrcComponent>) -> Result<(), ParseError> {
        while !self.at_section_or_eof() {
            let span = self.span();
            let (name, _) = self.ident()?;
            self.expect(Tok::Define)?;
            let body = self.comp_expr()?;
            self.expect(Tok::Semi)?;
            components.push(SrcComponent { name, body, span });
        }
        Ok(())
    }

    fn comp_expr(&mut self) -> Result<SrcComp, ParseError> {
        let mut left = self.comp_term()?;
        loop {
            let op = match self.peek() {
                Tok::SyncAll => ParOp::SyncShared,
                Tok::ParOr => ParOp::Interleave,
                _ => break,
            };
            self.bump();
            let right = self.comp_term()?;
            left = SrcComp::Par {
                left: Box::new(left),
                right: Box::new(right),
                op,
            };
        }
        Ok(left)
    }

    fn comp_term(&mut self) -> Result<SrcComp, ParseError> {
        if self.accept(&Tok::LParen) {
            let inner = self.comp_expr()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let (name, span) = self.ident()?;
        if self.peek() == &Tok::LParen {
            self.bump();
            let mut args = Vec::new();
            if self.peek() != &Tok::RParen {
                loop {
                    args.push(self.expr()?);
                    if !self.accept(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            self.expect(Tok::Colon)?;
            let (influence, _) = self.ident()?;
            return Ok(SrcComp::Instantiate {
                template: name,
                args,
                influence,
                span,
            });
        }
        Ok(SrcComp::Ref(name, span))
    }

    fn controllers(&mut self, controllers: &mut Vec<SrcController>) -> Result<(), ParseError> {
        while !self.at_section_or_eof() {
            let span = self.span();
            let (name, _) = self.ident()?;
            self.expect(Tok::Define)?;
            let body = self.controller_body()?;
            self.expect(Tok::Semi)?;
            controllers.push(SrcController { name, body, span });
        }
        Ok(())
    }

    fn controller_body(&mut self) -> Result<SrcCtrlBody, ParseError> {
        if matches!(self.peek(), Tok::Num(x) if *x == 0.0) {
            self.bump();
            return Ok(SrcCtrlBody::Nil);
        }
        // A `.` after the first identifier distinguishes a sum of prefixes
        // from a parallel composition of controller names.
        if matches!(self.peek(), Tok::Ident(_)) && self.peek2() == &Tok::Dot {
            let mut prefixes = Vec::new();
            loop {
                let (event, _) = self.ident()?;
                self.expect(Tok::Dot)?;
                let (next, _) = self.ident()?;
                prefixes.push((event, next));
                if !self.accept(&Tok::Plus) {
                    break;
                }
            }
            return Ok(SrcCtrlBody::Sum(prefixes));
        }
        let expr = self.ctrl_expr()?;
        if let SrcCtrlExpr::Ref(name, span) = &expr {
            return Err(ParseError::new(
                *span,
                format!("unsupported controller alias `{}`", name),
            ));
        }
        Ok(SrcCtrlBody::Par(expr))
    }

    fn ctrl_expr(&mut self) -> Result<SrcCtrlExpr, ParseError> {
        let mut left = self.ctrl_term()?;
        loop {
            let op = match self.peek() {
                Tok::SyncAll => ParOp::SyncShared,
                Tok::ParOr => ParOp::Interleave,
                _ => break,
            };
            self.bump();
            let right = self.ctrl_term()?;
            left = SrcCtrlExpr::Par {
                left: Box::new(left),
                right: Box::new(right),
                op,
            };
        }
        Ok(left)
    }

    fn ctrl_term(&mut self) -> Result<SrcCtrlExpr, ParseError> {
        if self.accept(&Tok::LParen) {
            let inner = self.ctrl_expr()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let (name, span) = self.ident()?;
        Ok(SrcCtrlExpr::Ref(name, span))
    }

    fn system(&mut self) -> Result<SrcSystem, ParseError> {
        let span = self.span();
        let expr = self.comp_expr()?;
        self.expect(Tok::Semi)?;
        // The right operand of the outermost composition is the controller.
        match expr {
            SrcComp::Par { left, right, op } => match *right {
                SrcComp::Ref(controller, _) => Ok(SrcSystem {
                    component: *left,
                    op,
                    controller,
                    span,
                }),
                _ => Err(ParseError::new(
                    span,
                    "the controller side of #system must be a controller name".to_string(),
                )),
            },
            _ => Err(ParseError::new(
                span,
                "#system must combine a component expression and a controller".to_string(),
            )),
        }
    }

    // Expression grammar, lowest to highest precedence:
    // or -> and -> comparison -> additive -> multiplicative -> unary -> atom.
    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.and_expr()?;
        while self.accept(&Tok::ParOr) {
            let right = self.and_expr()?;
            left = Expr::bin(BinOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.cmp_expr()?;
        while self.accept(&Tok::AndAnd) {
            let right = self.cmp_expr()?;
            left = Expr::bin(BinOp::And, left, right);
        }
        Ok(left)
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let left = self.add_expr()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            _ => return Ok(left),
        };
        self.bump();
        let right = self.add_expr()?;
        Ok(Expr::bin(op, left, right))
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let right = self.mul_expr()?;
            left = Expr::bin(op, left, right);
        }
        Ok(left)
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let right = self.unary_expr()?;
            left = Expr::bin(op, left, right);
        }
        Ok(left)
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if self.accept(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary_expr()?)));
        }
        if self.accept(&Tok::Bang) {
            return Ok(Expr::Not(Box::new(self.unary_expr()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "true" => return Ok(Expr::Bool(true)),
                    "false" => return Ok(Expr::Bool(false)),
                    _ => {}
                }
                if self.peek() == &Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek() != &Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if !self.accept(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Call(name, args));
                }
                Ok(Expr::Name(name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(ParseError::new(
                span,
                format!("expected an expression, found {}", other),
            )),
        }
    }
}

fn check_duplicates(model: &SourceModel) -> Result<(), ParseError> {
    fn scan<'a, I: Iterator<Item = (&'a str, Span)>>(
        items: I,
        what: &str,
    ) -> Result<(), ParseError> {
        let mut seen: Vec<&str> = Vec::new();
        for (name, span) in items {
            if seen.contains(&name) {
                return Err(ParseError::new(
                    span,
                    format!("duplicate {} declaration `{}`", what, name),
                ));
            }
            seen.push(name);
        }
        Ok(())
    }

    scan(
        model.vars.iter().map(|v| (v.name.as_str(), v.span)),
        "variable",
    )?;
    scan(
        model.params.iter().map(|p| (p.name.as_str(), p.span)),
        "parameter",
    )?;
    scan(
        model.functions.iter().map(|f| (f.name.as_str(), f.span)),
        "function",
    )?;
    scan(
        model.influences.iter().map(|i| (i.name.as_str(), i.span)),
        "influence",
    )?;
    scan(
        model.events.iter().map(|e| (e.name.as_str(), e.span)),
        "event",
    )?;
    scan(
        model.templates.iter().map(|t| (t.name.as_str(), t.span)),
        "template",
    )?;
    scan(
        model.components.iter().map(|c| (c.name.as_str(), c.span)),
        "component",
    )?;
    scan(
        model.controllers.iter().map(|c| (c.name.as_str(), c.span)),
        "controller",
    )?;
    Ok(())
}
