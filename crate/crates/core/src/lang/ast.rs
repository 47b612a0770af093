use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::seqcore::{BinaryOp, Predicate};

/// Source position (1-based). Spans never take part in equality, so two
/// trees parsed from differently formatted text compare equal.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// `text` keeps the literal as written so printing is faithful.
    Number {
        value: f64,
        text: String,
    },
    Ident(String),
    Paren(Box<Expr>),
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `then if cond else otherwise`
    Cond {
        then: Box<Expr>,
        cond: Box<Expr>,
        otherwise: Box<Expr>,
    },
    Select {
        keys: Box<Expr>,
        queries: Box<Expr>,
        predicate: Predicate,
    },
    Aggregate {
        selector: Box<Expr>,
        values: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// Positional tuple assignment; `targets.len() == values.len()`.
    Assign {
        targets: Vec<String>,
        values: Vec<Expr>,
        span: Span,
    },
    Return {
        value: Expr,
        span: Span,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

/// Identifiers every program can read without defining them.
pub const BUILTINS: &[&str] = &[
    "tokens",
    "tokens_int",
    "tokens_float",
    "indices",
    "length",
    "full_s",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

/// A parsed RASP source: function definitions plus the designated entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub(crate) functions: Vec<Function>,
    pub(crate) entry: usize,
    pub(crate) free_params: BTreeSet<String>,
}

impl Program {
    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn entry(&self) -> &Function {
        &self.functions[self.entry]
    }

    /// Identifiers read but never defined; they must be bound at evaluation.
    pub fn free_params(&self) -> &BTreeSet<String> {
        &self.free_params
    }

    /// Re-targets evaluation at another function of the same program.
    pub fn with_entry(mut self, name: &str) -> Option<Self> {
        self.entry = self.functions.iter().position(|f| f.name == name)?;
        Some(self)
    }
}

impl Expr {
    pub(crate) fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Number { .. } | ExprKind::Ident(_) => {}
            ExprKind::Paren(e) | ExprKind::Unary { operand: e, .. } => e.visit(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            ExprKind::Cond {
                then,
                cond,
                otherwise,
            } => {
                then.visit(f);
                cond.visit(f);
                otherwise.visit(f);
            }
            ExprKind::Select { keys, queries, .. } => {
                keys.visit(f);
                queries.visit(f);
            }
            ExprKind::Aggregate { selector, values } => {
                selector.visit(f);
                values.visit(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.visit(f)),
        }
    }
}
