use serde_json::{json, Value};

use super::ast::*;

/// Deterministic JSON tree of a program: every node carries `type`, `span`
/// and `children`, plus node-specific attributes.
pub fn ast_json(program: &Program) -> Value {
    json!({
        "type": "Program",
        "entry": program.entry().name,
        "free_params": program.free_params(),
        "children": program.functions.iter().map(function).collect::<Vec<_>>(),
    })
}

fn span(s: Span) -> Value {
    json!({ "line": s.line, "col": s.col })
}

fn function(f: &Function) -> Value {
    json!({
        "type": "Function",
        "name": f.name,
        "params": f.params,
        "span": span(f.span),
        "children": f.body.iter().map(stmt).collect::<Vec<_>>(),
    })
}

fn stmt(s: &Stmt) -> Value {
    match s {
        Stmt::Assign {
            targets,
            values,
            span: sp,
        } => json!({
            "type": "Assign",
            "targets": targets,
            "span": span(*sp),
            "children": values.iter().map(expr).collect::<Vec<_>>(),
        }),
        Stmt::Return { value, span: sp } => json!({
            "type": "Return",
            "span": span(*sp),
            "children": [expr(value)],
        }),
    }
}

fn expr(e: &Expr) -> Value {
    let sp = span(e.span);
    match &e.kind {
        ExprKind::Number { value, text } => {
            json!({ "type": "Number", "value": value, "text": text, "span": sp, "children": [] })
        }
        ExprKind::Ident(name) => {
            json!({ "type": "Ident", "name": name, "span": sp, "children": [] })
        }
        ExprKind::Paren(inner) => {
            json!({ "type": "Paren", "span": sp, "children": [expr(inner)] })
        }
        ExprKind::Unary { op, operand } => json!({
            "type": "Unary",
            "op": match op { UnaryOp::Neg => "-", UnaryOp::Not => "not" },
            "span": sp,
            "children": [expr(operand)],
        }),
        ExprKind::Binary { op, lhs, rhs } => json!({
            "type": "Binary",
            "op": op.symbol(),
            "span": sp,
            "children": [expr(lhs), expr(rhs)],
        }),
        ExprKind::Cond {
            then,
            cond,
            otherwise,
        } => json!({
            "type": "Cond",
            "span": sp,
            "children": [expr(then), expr(cond), expr(otherwise)],
        }),
        ExprKind::Select {
            keys,
            queries,
            predicate,
        } => json!({
            "type": "Select",
            "predicate": predicate.symbol(),
            "span": sp,
            "children": [expr(keys), expr(queries)],
        }),
        ExprKind::Aggregate { selector, values } => json!({
            "type": "Aggregate",
            "span": sp,
            "children": [expr(selector), expr(values)],
        }),
        ExprKind::Call { name, args } => json!({
            "type": "Call",
            "name": name,
            "span": sp,
            "children": args.iter().map(expr).collect::<Vec<_>>(),
        }),
    }
}
