//! Lexer, parser, evaluator and structural analysis for the RASP dialect
//! used by the constructions in this crate.
//!
//! ```
//! use rasp_attn::lang::{evaluate, metrics, parse, Bindings};
//! use rasp_attn::seqcore::Sequence;
//!
//! let program = parse("def ReLU(){ return (0 if tokens<0 else tokens); }").unwrap();
//! let out = evaluate(&program, &Sequence::from_ints(&[-1, 0, 2]), &Bindings::new()).unwrap();
//! assert_eq!(out.values(), vec![0.0, 0.0, 2.0]);
//! assert_eq!(metrics(&program).depth, 0);
//! ```

mod ast;
mod dump;
mod eval;
mod lexer;
mod metrics;
mod parser;
mod print;

use thiserror::Error;

pub use ast::{is_builtin, Expr, ExprKind, Function, Program, Span, Stmt, UnaryOp, BUILTINS};
pub use dump::ast_json;
pub use eval::{evaluate, Bindings};
pub use metrics::{metrics, ProgramMetrics};
pub use parser::parse;
pub use print::{print, print_expr, print_function, strip_whitespace};

use crate::seqcore::SeqError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    Arity,
    Recursion,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(kind: ParseErrorKind, span: Span, message: impl Into<String>) -> Self {
        Self {
            kind,
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    pub(crate) fn syntax(span: Span, message: impl Into<String>) -> Self {
        Self::new(ParseErrorKind::Syntax, span, message)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("{span}: {source}")]
    Seq { source: SeqError, span: Span },
    #[error("{span}: unbound parameter `{name}`")]
    Unbound { name: String, span: Span },
    #[error("{span}: {message}")]
    Type { message: String, span: Span },
}

impl EvalError {
    pub fn span(&self) -> Span {
        match self {
            EvalError::Seq { span, .. }
            | EvalError::Unbound { span, .. }
            | EvalError::Type { span, .. } => *span,
        }
    }
}
