use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::lexer::{lex, Tok};
use super::{ParseError, ParseErrorKind};
use crate::seqcore::{BinaryOp, Predicate};

/// Parses a RASP source file. The last function defined is the entry point.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut functions = Vec::new();
    while !p.at(&Tok::Eof) {
        functions.push(p.function()?);
    }
    if functions.is_empty() {
        return Err(ParseError::syntax(p.span(), "expected at least one `def`"));
    }
    check_program(&functions)?;
    let free_params = free_identifiers(&functions);
    Ok(Program {
        entry: functions.len() - 1,
        functions,
        free_params,
    })
}

enum Arg {
    Expr(Expr),
    Pred(Predicate, Span),
}

struct Parser {
    tokens: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].0
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].1
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek() == tok
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, ParseError> {
        if self.at(&tok) {
            Ok(self.bump().1)
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        ParseError::syntax(
            self.span(),
            format!("expected {what}, found {}", self.peek().describe()),
        )
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().1;
                Ok((name, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        let span = self.expect(Tok::Def, "`def`")?;
        let (name, _) = self.ident("function name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                params.push(self.ident("parameter name")?.0);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut body = Vec::new();
        while !self.at(&Tok::RBrace) {
            if self.at(&Tok::Eof) {
                return Err(self.unexpected("`}`"));
            }
            body.push(self.statement()?);
        }
        self.bump();
        if !matches!(body.last(), Some(Stmt::Return { .. })) {
            return Err(ParseError::syntax(
                span,
                format!("function `{name}` must end with a return statement"),
            ));
        }
        Ok(Function {
            name,
            params,
            body,
            span,
        })
    }

    fn statement(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        if self.eat(&Tok::Return) {
            let value = self.expr()?;
            self.expect(Tok::Semi, "`;`")?;
            return Ok(Stmt::Return { value, span });
        }
        let mut targets = vec![self.ident("assignment target")?.0];
        while self.eat(&Tok::Comma) {
            targets.push(self.ident("assignment target")?.0);
        }
        self.expect(Tok::Assign, "`=`")?;
        let mut values = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            values.push(self.expr()?);
        }
        self.expect(Tok::Semi, "`;`")?;
        if targets.len() != values.len() {
            return Err(ParseError::new(
                ParseErrorKind::Arity,
                span,
                format!(
                    "tuple assignment binds {} names to {} values",
                    targets.len(),
                    values.len()
                ),
            ));
        }
        Ok(Stmt::Assign {
            targets,
            values,
            span,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let then = self.or_expr()?;
        if self.at(&Tok::If) {
            let span = then.span;
            self.bump();
            let cond = self.or_expr()?;
            self.expect(Tok::Else, "`else`")?;
            let otherwise = self.expr()?;
            return Ok(Expr {
                kind: ExprKind::Cond {
                    then: Box::new(then),
                    cond: Box::new(cond),
                    otherwise: Box::new(otherwise),
                },
                span,
            });
        }
        Ok(then)
    }

    fn binary_level(
        &mut self,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
        ops: &[(Tok, BinaryOp)],
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (tok, op) in ops {
                if self.at(tok) {
                    self.bump();
                    let rhs = next(self)?;
                    let span = lhs.span;
                    lhs = Expr {
                        kind: ExprKind::Binary {
                            op: *op,
                            lhs: Box::new(lhs),
                            rhs: Box::new(rhs),
                        },
                        span,
                    };
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(Self::and_expr, &[(Tok::Or, BinaryOp::Or)])
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(Self::not_expr, &[(Tok::And, BinaryOp::And)])
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.at(&Tok::Not) {
            let span = self.bump().1;
            let operand = self.not_expr()?;
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op: UnaryOp::Not,
                    operand: Box::new(operand),
                },
                span,
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            Self::additive,
            &[
                (Tok::EqEq, BinaryOp::Eq),
                (Tok::NotEq, BinaryOp::Ne),
                (Tok::Le, BinaryOp::Le),
                (Tok::Ge, BinaryOp::Ge),
                (Tok::Lt, BinaryOp::Lt),
                (Tok::Gt, BinaryOp::Gt),
            ],
        )
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            Self::multiplicative,
            &[(Tok::Plus, BinaryOp::Add), (Tok::Minus, BinaryOp::Sub)],
        )
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            Self::unary,
            &[
                (Tok::Star, BinaryOp::Mul),
                (Tok::SlashSlash, BinaryOp::FloorDiv),
                (Tok::Slash, BinaryOp::Div),
                (Tok::Percent, BinaryOp::Mod),
            ],
        )
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.at(&Tok::Minus) {
            let span = self.bump().1;
            let operand = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op: UnaryOp::Neg,
                    operand: Box::new(operand),
                },
                span,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            let exponent = self.unary()?;
            let span = base.span;
            return Ok(Expr {
                kind: ExprKind::Binary {
                    op: BinaryOp::Pow,
                    lhs: Box::new(base),
                    rhs: Box::new(exponent),
                },
                span,
            });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(value, text) => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Number { value, text },
                    span,
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr {
                    kind: ExprKind::Paren(Box::new(inner)),
                    span,
                })
            }
            Tok::Ident(name) => {
                self.bump();
                if self.at(&Tok::LParen) {
                    self.call(name, span)
                } else {
                    Ok(Expr {
                        kind: ExprKind::Ident(name),
                        span,
                    })
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn predicate_ahead(&self) -> Option<Predicate> {
        let pred = match self.peek() {
            Tok::EqEq => Predicate::Eq,
            Tok::NotEq => Predicate::Ne,
            Tok::Lt => Predicate::Lt,
            Tok::Le => Predicate::Le,
            Tok::Gt => Predicate::Gt,
            Tok::Ge => Predicate::Ge,
            _ => return None,
        };
        matches!(self.peek_at(1), Tok::Comma | Tok::RParen).then_some(pred)
    }

    fn call(&mut self, name: String, span: Span) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                if let Some(pred) = self.predicate_ahead() {
                    let s = self.bump().1;
                    args.push(Arg::Pred(pred, s));
                } else {
                    args.push(Arg::Expr(self.expr()?));
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;

        let arity = |expected: usize| {
            ParseError::new(
                ParseErrorKind::Arity,
                span,
                format!("`{name}` takes {expected} arguments, found {}", args.len()),
            )
        };
        let kind = match name.as_str() {
            "select" => {
                if args.len() != 3 {
                    return Err(arity(3));
                }
                let mut it = args.into_iter();
                let keys = expr_arg(it.next().unwrap(), "select keys")?;
                let queries = expr_arg(it.next().unwrap(), "select queries")?;
                let predicate = match it.next().unwrap() {
                    Arg::Pred(p, _) => p,
                    Arg::Expr(e) => {
                        return Err(ParseError::syntax(
                            e.span,
                            "select expects a comparison operator as its third argument",
                        ))
                    }
                };
                ExprKind::Select {
                    keys: Box::new(keys),
                    queries: Box::new(queries),
                    predicate,
                }
            }
            "aggregate" => {
                if args.len() != 2 {
                    return Err(arity(2));
                }
                let mut it = args.into_iter();
                let selector = expr_arg(it.next().unwrap(), "aggregate selector")?;
                let values = expr_arg(it.next().unwrap(), "aggregate values")?;
                ExprKind::Aggregate {
                    selector: Box::new(selector),
                    values: Box::new(values),
                }
            }
            _ => ExprKind::Call {
                name,
                args: args
                    .into_iter()
                    .map(|a| expr_arg(a, "call argument"))
                    .collect::<Result<_, _>>()?,
            },
        };
        Ok(Expr { kind, span })
    }
}

fn expr_arg(arg: Arg, what: &str) -> Result<Expr, ParseError> {
    match arg {
        Arg::Expr(e) => Ok(e),
        Arg::Pred(p, span) => Err(ParseError::syntax(
            span,
            format!("unexpected predicate `{p}` as {what}"),
        )),
    }
}

/// Resolves calls, checks arity and rejects recursion.
fn check_program(functions: &[Function]) -> Result<(), ParseError> {
    let mut table: HashMap<&str, &Function> = HashMap::new();
    for f in functions {
        if table.insert(&f.name, f).is_some() {
            return Err(ParseError::syntax(
                f.span,
                format!("function `{}` defined twice", f.name),
            ));
        }
    }
    let mut edges: HashMap<&str, Vec<&str>> = HashMap::new();
    for f in functions {
        let mut err = None;
        for_each_expr(f, |e| {
            if let ExprKind::Call { name, args } = &e.kind {
                if err.is_some() {
                    return;
                }
                match table.get(name.as_str()) {
                    None => {
                        err = Some(ParseError::new(
                            ParseErrorKind::UnknownIdentifier,
                            e.span,
                            format!("unknown function `{name}`"),
                        ))
                    }
                    Some(callee) if callee.params.len() != args.len() => {
                        err = Some(ParseError::new(
                            ParseErrorKind::Arity,
                            e.span,
                            format!(
                                "`{name}` takes {} arguments, found {}",
                                callee.params.len(),
                                args.len()
                            ),
                        ))
                    }
                    Some(_) => edges.entry(&f.name).or_default().push(name),
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    // Depth-first search for a cycle in the call graph.
    fn visit<'a>(
        node: &'a str,
        edges: &HashMap<&'a str, Vec<&'a str>>,
        active: &mut HashSet<&'a str>,
        done: &mut HashSet<&'a str>,
    ) -> Option<&'a str> {
        if done.contains(node) {
            return None;
        }
        if !active.insert(node) {
            return Some(node);
        }
        for &next in edges.get(node).map(Vec::as_slice).unwrap_or(&[]) {
            if let Some(c) = visit(next, edges, active, done) {
                return Some(c);
            }
        }
        active.remove(node);
        done.insert(node);
        None
    }
    let (mut active, mut done) = (HashSet::new(), HashSet::new());
    for f in functions {
        if let Some(name) = visit(&f.name, &edges, &mut active, &mut done) {
            let span = table[name].span;
            return Err(ParseError::new(
                ParseErrorKind::Recursion,
                span,
                format!("function `{name}` is recursive"),
            ));
        }
    }
    Ok(())
}

fn for_each_expr<'a>(f: &'a Function, mut visit: impl FnMut(&'a Expr)) {
    for stmt in &f.body {
        match stmt {
            Stmt::Assign { values, .. } => values.iter().for_each(|e| e.visit(&mut visit)),
            Stmt::Return { value, .. } => value.visit(&mut visit),
        }
    }
}

/// Identifiers read before any definition in their function.
fn free_identifiers(functions: &[Function]) -> BTreeSet<String> {
    let mut free = BTreeSet::new();
    for f in functions {
        let mut defined: HashSet<&str> = f.params.iter().map(String::as_str).collect();
        for stmt in &f.body {
            let exprs: Vec<&Expr> = match stmt {
                Stmt::Assign { values, .. } => values.iter().collect(),
                Stmt::Return { value, .. } => vec![value],
            };
            for e in exprs {
                e.visit(&mut |e| {
                    if let ExprKind::Ident(name) = &e.kind {
                        if !defined.contains(name.as_str()) && !is_builtin(name) {
                            free.insert(name.clone());
                        }
                    }
                });
            }
            if let Stmt::Assign { targets, .. } = stmt {
                defined.extend(targets.iter().map(String::as_str));
            }
        }
    }
    free
}
