use std::collections::{BTreeMap, HashMap};

use super::ast::*;
use super::EvalError;
use crate::seqcore::{
    self, aggregate_operand, binary, binary_scalar, conditional, select_operands, BinaryOp,
    Operand, Selector, Sequence, TokenValue,
};

/// Values for a program's free parameters.
pub type Bindings = BTreeMap<String, f64>;

#[derive(Debug, Clone)]
enum Value {
    Scalar(TokenValue),
    Seq(Sequence),
    Sel(Selector),
}

impl Value {
    fn operand(&self, span: Span, what: &str) -> Result<Operand<'_>, EvalError> {
        match self {
            Value::Scalar(t) => Ok(Operand::Scalar(*t)),
            Value::Seq(s) => Ok(Operand::Seq(s)),
            Value::Sel(_) => Err(EvalError::Type {
                span,
                message: format!("{what} must be a sequence or scalar, found a selector"),
            }),
        }
    }
}

struct Context<'p> {
    program: &'p Program,
    input: &'p Sequence,
    bindings: &'p Bindings,
}

/// Runs the program's entry function on `input`. Parameters of the entry
/// function and free identifiers are looked up in `bindings`.
pub fn evaluate(
    program: &Program,
    input: &Sequence,
    bindings: &Bindings,
) -> Result<Sequence, EvalError> {
    let ctx = Context {
        program,
        input,
        bindings,
    };
    let entry = program.entry();
    let mut args = Vec::with_capacity(entry.params.len());
    for p in &entry.params {
        let v = ctx.binding(p, entry.span)?;
        args.push(v);
    }
    match ctx.call(entry, args)? {
        Value::Seq(s) => Ok(s),
        Value::Scalar(t) => {
            Ok(
                Sequence::repeat(t, input.len()).map_err(|source| EvalError::Seq {
                    source,
                    span: entry.span,
                })?,
            )
        }
        Value::Sel(_) => Err(EvalError::Type {
            span: entry.span,
            message: "program returned a selector".into(),
        }),
    }
}

impl<'p> Context<'p> {
    fn n(&self) -> usize {
        self.input.len()
    }

    fn binding(&self, name: &str, span: Span) -> Result<Value, EvalError> {
        self.bindings
            .get(name)
            .map(|&v| Value::Scalar(TokenValue::infer(v)))
            .ok_or_else(|| EvalError::Unbound {
                name: name.to_string(),
                span,
            })
    }

    fn call(&self, f: &Function, args: Vec<Value>) -> Result<Value, EvalError> {
        let mut env: HashMap<&str, Value> = f.params.iter().map(String::as_str).zip(args).collect();
        for stmt in &f.body {
            match stmt {
                Stmt::Assign {
                    targets, values, ..
                } => {
                    // Right-hand sides see the environment before the assignment.
                    let evaluated = values
                        .iter()
                        .map(|e| self.eval(e, &env))
                        .collect::<Result<Vec<_>, _>>()?;
                    for (t, v) in targets.iter().zip(evaluated) {
                        env.insert(t, v);
                    }
                }
                Stmt::Return { value, .. } => return self.eval(value, &env),
            }
        }
        unreachable!("parser guarantees a trailing return")
    }

    fn lift(&self, r: seqcore::Result<Sequence>, span: Span) -> Result<Value, EvalError> {
        r.map(Value::Seq)
            .map_err(|source| EvalError::Seq { source, span })
    }

    fn eval(&self, e: &Expr, env: &HashMap<&str, Value>) -> Result<Value, EvalError> {
        let span = e.span;
        match &e.kind {
            ExprKind::Number { value, .. } => Ok(Value::Scalar(TokenValue::infer(*value))),
            ExprKind::Ident(name) => self.lookup(name, env, span),
            ExprKind::Paren(inner) => self.eval(inner, env),
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand, env)?;
                match (op, v) {
                    (UnaryOp::Neg, Value::Scalar(t)) => Ok(Value::Scalar(match t.kind() {
                        seqcore::Kind::Real => TokenValue::real(-t.value()),
                        _ => TokenValue::infer(-t.value()),
                    })),
                    (UnaryOp::Neg, Value::Seq(s)) => {
                        Ok(Value::Seq(seqcore::negate(Operand::Seq(&s), s.len())))
                    }
                    (UnaryOp::Not, Value::Scalar(t)) => {
                        Ok(Value::Scalar(TokenValue::boolean(!t.is_truthy())))
                    }
                    (UnaryOp::Not, Value::Seq(s)) => {
                        Ok(Value::Seq(s.map(|t| TokenValue::boolean(!t.is_truthy()))))
                    }
                    (_, Value::Sel(_)) => Err(EvalError::Type {
                        span,
                        message: "unary operator applied to a selector".into(),
                    }),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs, env)?;
                let r = self.eval(rhs, env)?;
                self.binary(*op, l, r, span)
            }
            ExprKind::Cond {
                then,
                cond,
                otherwise,
            } => {
                let c = self.eval(cond, env)?;
                let t = self.eval(then, env)?;
                let o = self.eval(otherwise, env)?;
                if let (Value::Scalar(c), Value::Scalar(t), Value::Scalar(o)) = (&c, &t, &o) {
                    return Ok(Value::Scalar(if c.is_truthy() { *t } else { *o }));
                }
                let n = self.n();
                let c = self.broadcast(c, span, "condition")?;
                let t = self.broadcast(t, span, "conditional branch")?;
                let o = self.broadcast(o, span, "conditional branch")?;
                debug_assert_eq!(c.len(), n);
                self.lift(conditional((&c).into(), (&t).into(), (&o).into()), span)
            }
            ExprKind::Select {
                keys,
                queries,
                predicate,
            } => {
                let k = self.broadcast(self.eval(keys, env)?, keys.span, "select keys")?;
                let q = self.broadcast(self.eval(queries, env)?, queries.span, "select queries")?;
                select_operands((&k).into(), (&q).into(), *predicate)
                    .map(Value::Sel)
                    .map_err(|source| EvalError::Seq { source, span })
            }
            ExprKind::Aggregate { selector, values } => {
                let sel = match self.eval(selector, env)? {
                    Value::Sel(s) => s,
                    _ => {
                        return Err(EvalError::Type {
                            span: selector.span,
                            message: "aggregate expects a selector as its first argument".into(),
                        })
                    }
                };
                let values = self.eval(values, env)?;
                let operand = values.operand(span, "aggregated values")?;
                self.lift(aggregate_operand(&sel, operand), span)
            }
            ExprKind::Call { name, args } => {
                let f = self
                    .program
                    .function(name)
                    .expect("calls are resolved at parse time");
                let args = args
                    .iter()
                    .map(|a| self.eval(a, env))
                    .collect::<Result<Vec<_>, _>>()?;
                self.call(f, args)
            }
        }
    }

    fn lookup(
        &self,
        name: &str,
        env: &HashMap<&str, Value>,
        span: Span,
    ) -> Result<Value, EvalError> {
        if let Some(v) = env.get(name) {
            return Ok(v.clone());
        }
        let n = self.n();
        Ok(match name {
            "tokens" => Value::Seq(self.input.clone()),
            "tokens_int" => Value::Seq(self.input.map(TokenValue::to_int)),
            "tokens_float" => Value::Seq(self.input.map(TokenValue::to_real)),
            "indices" => Value::Seq(Sequence::indices(n)),
            "length" => {
                Value::Seq(seqcore::length(n).map_err(|source| EvalError::Seq { source, span })?)
            }
            "full_s" => Value::Sel(Selector::full(n)),
            _ => return self.binding(name, span),
        })
    }

    fn broadcast(&self, v: Value, span: Span, what: &str) -> Result<Sequence, EvalError> {
        match v {
            Value::Seq(s) => Ok(s),
            Value::Scalar(t) => {
                Sequence::repeat(t, self.n()).map_err(|source| EvalError::Seq { source, span })
            }
            Value::Sel(_) => Err(EvalError::Type {
                span,
                message: format!("{what} must be a sequence or scalar, found a selector"),
            }),
        }
    }

    fn binary(&self, op: BinaryOp, l: Value, r: Value, span: Span) -> Result<Value, EvalError> {
        let seq_err = |source| EvalError::Seq { source, span };
        match (&l, &r) {
            (Value::Sel(a), Value::Sel(b)) => {
                let out = match op {
                    BinaryOp::And => a.and(b),
                    BinaryOp::Or => a.or(b),
                    _ => {
                        return Err(EvalError::Type {
                            span,
                            message: format!("`{}` is not defined on selectors", op.symbol()),
                        })
                    }
                };
                out.map(Value::Sel).map_err(seq_err)
            }
            (Value::Sel(_), _) | (_, Value::Sel(_)) => Err(EvalError::Type {
                span,
                message: format!("`{}` mixes a selector with a sequence", op.symbol()),
            }),
            (Value::Scalar(a), Value::Scalar(b)) => binary_scalar(op, *a, *b)
                .map(Value::Scalar)
                .map_err(seq_err),
            _ => {
                let a = l.operand(span, "operand")?;
                let b = r.operand(span, "operand")?;
                binary(op, a, b).map(Value::Seq).map_err(seq_err)
            }
        }
    }
}
