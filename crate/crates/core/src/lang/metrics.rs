//! Depth/width analysis of a program's select–aggregate structure.
//!
//! The entry function is inlined into a hash-consed expression graph, so an
//! aggregate written several times (or computed in several functions) counts
//! once. An aggregate's stratum is one more than the deepest aggregate it
//! reads through its selector or its values.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::ast::*;
use crate::seqcore::{BinaryOp, Predicate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgramMetrics {
    /// Number of sequential select–aggregate strata (layers).
    pub depth: usize,
    /// Largest number of distinct aggregates in one stratum (heads).
    pub width: usize,
    /// Distinct selectors consumed by aggregates.
    pub selector_count: usize,
    /// Width of each stratum, first layer first.
    pub stratum_widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Leaf(String),
    Const(u64),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
    Cond(usize, usize, usize),
    Select(usize, usize, Predicate),
    Aggregate(usize, usize),
}

#[derive(Default)]
struct Graph {
    ids: HashMap<Node, usize>,
    nodes: Vec<(Node, usize)>,
}

impl Graph {
    fn intern(&mut self, node: Node) -> usize {
        if let Some(&id) = self.ids.get(&node) {
            return id;
        }
        let stratum = match &node {
            Node::Leaf(_) | Node::Const(_) => 0,
            Node::Unary(_, a) => self.stratum(*a),
            Node::Binary(_, a, b) | Node::Select(a, b, _) => self.stratum(*a).max(self.stratum(*b)),
            Node::Cond(a, b, c) => self.stratum(*a).max(self.stratum(*b)).max(self.stratum(*c)),
            Node::Aggregate(s, v) => 1 + self.stratum(*s).max(self.stratum(*v)),
        };
        let id = self.nodes.len();
        self.nodes.push((node.clone(), stratum));
        self.ids.insert(node, id);
        id
    }

    fn stratum(&self, id: usize) -> usize {
        self.nodes[id].1
    }
}

pub fn metrics(program: &Program) -> ProgramMetrics {
    let mut g = Graph::default();
    let entry = program.entry();
    let args: Vec<usize> = entry
        .params
        .iter()
        .map(|p| g.intern(Node::Leaf(format!("param:{p}"))))
        .collect();
    let root = inline(program, entry, &args, &mut g);

    // Only aggregates reachable from the returned value count.
    let mut reachable = HashSet::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if !reachable.insert(id) {
            continue;
        }
        match &g.nodes[id].0 {
            Node::Leaf(_) | Node::Const(_) => {}
            Node::Unary(_, a) => stack.push(*a),
            Node::Binary(_, a, b) | Node::Select(a, b, _) | Node::Aggregate(a, b) => {
                stack.push(*a);
                stack.push(*b);
            }
            Node::Cond(a, b, c) => stack.extend([*a, *b, *c]),
        }
    }

    let mut per_stratum: BTreeMap<usize, usize> = BTreeMap::new();
    let mut selectors = HashSet::new();
    for &id in &reachable {
        if let (Node::Aggregate(sel, _), stratum) = &g.nodes[id] {
            *per_stratum.entry(*stratum).or_default() += 1;
            selectors.insert(*sel);
        }
    }
    let depth = per_stratum.keys().next_back().copied().unwrap_or(0);
    let stratum_widths: Vec<usize> = (1..=depth)
        .map(|s| per_stratum.get(&s).copied().unwrap_or(0))
        .collect();
    ProgramMetrics {
        depth,
        width: stratum_widths.iter().copied().max().unwrap_or(0),
        selector_count: selectors.len(),
        stratum_widths,
    }
}

fn inline(program: &Program, f: &Function, args: &[usize], g: &mut Graph) -> usize {
    let mut env: HashMap<&str, usize> = f
        .params
        .iter()
        .map(String::as_str)
        .zip(args.iter().copied())
        .collect();
    for stmt in &f.body {
        match stmt {
            Stmt::Assign {
                targets, values, ..
            } => {
                let ids: Vec<usize> = values.iter().map(|e| node(program, e, &env, g)).collect();
                for (t, id) in targets.iter().zip(ids) {
                    env.insert(t, id);
                }
            }
            Stmt::Return { value, .. } => return node(program, value, &env, g),
        }
    }
    unreachable!("parser guarantees a trailing return")
}

fn node(program: &Program, e: &Expr, env: &HashMap<&str, usize>, g: &mut Graph) -> usize {
    match &e.kind {
        ExprKind::Number { value, .. } => g.intern(Node::Const(value.to_bits())),
        ExprKind::Ident(name) => match env.get(name.as_str()) {
            Some(&id) => id,
            None => g.intern(Node::Leaf(name.clone())),
        },
        ExprKind::Paren(inner) => node(program, inner, env, g),
        ExprKind::Unary { op, operand } => {
            let a = node(program, operand, env, g);
            g.intern(Node::Unary(*op, a))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let a = node(program, lhs, env, g);
            let b = node(program, rhs, env, g);
            g.intern(Node::Binary(*op, a, b))
        }
        ExprKind::Cond {
            then,
            cond,
            otherwise,
        } => {
            let c = node(program, cond, env, g);
            let t = node(program, then, env, g);
            let o = node(program, otherwise, env, g);
            g.intern(Node::Cond(c, t, o))
        }
        ExprKind::Select {
            keys,
            queries,
            predicate,
        } => {
            let k = node(program, keys, env, g);
            let q = node(program, queries, env, g);
            g.intern(Node::Select(k, q, *predicate))
        }
        ExprKind::Aggregate { selector, values } => {
            let s = node(program, selector, env, g);
            let v = node(program, values, env, g);
            g.intern(Node::Aggregate(s, v))
        }
        ExprKind::Call { name, args } => {
            let ids: Vec<usize> = args.iter().map(|a| node(program, a, env, g)).collect();
            let callee = program
                .function(name)
                .expect("calls are resolved at parse time");
            inline(program, callee, &ids, g)
        }
    }
}
