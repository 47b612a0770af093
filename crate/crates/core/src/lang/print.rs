use std::fmt::Write;

use super::ast::*;

/// Renders a program back into the listing grammar.
pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out
}

pub fn print_function(out: &mut String, f: &Function) {
    let _ = writeln!(out, "def {}({}){{", f.name, f.params.join(", "));
    for stmt in &f.body {
        out.push_str("  ");
        match stmt {
            Stmt::Assign {
                targets, values, ..
            } => {
                out.push_str(&targets.join(", "));
                out.push_str(" = ");
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    print_expr(out, v);
                }
            }
            Stmt::Return { value, .. } => {
                out.push_str("return ");
                print_expr(out, value);
            }
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
}

pub fn print_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Number { text, .. } => out.push_str(text),
        ExprKind::Ident(name) => out.push_str(name),
        ExprKind::Paren(inner) => {
            out.push('(');
            print_expr(out, inner);
            out.push(')');
        }
        ExprKind::Unary { op, operand } => {
            out.push_str(match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "not ",
            });
            print_expr(out, operand);
        }
        ExprKind::Binary { op, lhs, rhs } => {
            print_expr(out, lhs);
            let _ = write!(out, " {} ", op.symbol());
            print_expr(out, rhs);
        }
        ExprKind::Cond {
            then,
            cond,
            otherwise,
        } => {
            print_expr(out, then);
            out.push_str(" if ");
            print_expr(out, cond);
            out.push_str(" else ");
            print_expr(out, otherwise);
        }
        ExprKind::Select {
            keys,
            queries,
            predicate,
        } => {
            out.push_str("select(");
            print_expr(out, keys);
            out.push_str(", ");
            print_expr(out, queries);
            let _ = write!(out, ", {predicate})");
        }
        ExprKind::Aggregate { selector, values } => {
            out.push_str("aggregate(");
            print_expr(out, selector);
            out.push_str(", ");
            print_expr(out, values);
            out.push(')');
        }
        ExprKind::Call { name, args } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr(out, a);
            }
            out.push(')');
        }
    }
}

/// Removes all whitespace, for comparing sources that differ only in layout.
pub fn strip_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}
