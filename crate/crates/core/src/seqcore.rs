//! The sequence value model and the exact semantics of the RASP primitives
//! under average-hard attention.
//!
//! Every value is carried as an `f64` tagged with a [`Kind`]. Booleans are
//! stored as `0.0`/`1.0` and integers must be integral with magnitude below
//! 2^53 so that integer arithmetic on the carrier stays exact.
//!
//! ```
//! use rasp_attn::seqcore::{aggregate, select, Predicate, Sequence};
//!
//! let indices = Sequence::indices(3);
//! let reversed = Sequence::from_ints(&[2, 1, 0]);
//! let sel = select(&indices, &reversed, Predicate::Eq).unwrap();
//! let out = aggregate(&sel, &Sequence::from_ints(&[5, 7, 9])).unwrap();
//! assert_eq!(out.values(), vec![9.0, 7.0, 5.0]);
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest magnitude (exclusive) an integer carrier may hold.
pub const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeqError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot apply `{op}` to {left} and {right} operands")]
    KindMismatch {
        op: &'static str,
        left: Kind,
        right: Kind,
    },
    #[error("division by zero at position {position}")]
    DivisionByZero { position: usize },
    #[error("modulo by zero at position {position}")]
    ModuloByZero { position: usize },
    #[error("negative base raised to a non-integral power at position {position}")]
    InvalidPower { position: usize },
    #[error("invalid {kind} token {value}")]
    InvalidToken { kind: Kind, value: f64 },
    #[error("sequences must have at least one token")]
    Empty,
    #[error("no sequence operand to take a length from")]
    NoLength,
}

pub type Result<T> = std::result::Result<T, SeqError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Boolean,
    Integer,
    Real,
}

impl Kind {
    /// Booleans and integers both behave as exact integers in arithmetic.
    pub fn is_integral(self) -> bool {
        matches!(self, Kind::Boolean | Kind::Integer)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Boolean => "boolean",
            Kind::Integer => "integer",
            Kind::Real => "real",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenValue {
    kind: Kind,
    value: f64,
}

impl TokenValue {
    pub fn new(kind: Kind, value: f64) -> Result<Self> {
        let ok = match kind {
            Kind::Boolean => value == 0.0 || value == 1.0,
            Kind::Integer => value.fract() == 0.0 && value.abs() < MAX_EXACT_INT,
            Kind::Real => true,
        };
        if ok {
            Ok(Self { kind, value })
        } else {
            Err(SeqError::InvalidToken { kind, value })
        }
    }

    pub fn boolean(b: bool) -> Self {
        Self {
            kind: Kind::Boolean,
            value: if b { 1.0 } else { 0.0 },
        }
    }

    /// Panics if `i` is outside the exact integer range.
    pub fn int(i: i64) -> Self {
        Self::new(Kind::Integer, i as f64).expect("integer outside exact range")
    }

    pub fn real(value: f64) -> Self {
        Self {
            kind: Kind::Real,
            value,
        }
    }

    /// Integer when `value` is integral and in range, real otherwise.
    pub fn infer(value: f64) -> Self {
        if value.fract() == 0.0 && value.abs() < MAX_EXACT_INT {
            Self {
                kind: Kind::Integer,
                value,
            }
        } else {
            Self::real(value)
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_truthy(&self) -> bool {
        self.value != 0.0
    }

    /// Truncate toward zero into an integer token.
    pub fn to_int(self) -> Self {
        let t = self.value.trunc();
        if t.abs() < MAX_EXACT_INT {
            Self {
                kind: Kind::Integer,
                value: t,
            }
        } else {
            Self::real(t)
        }
    }

    pub fn to_real(self) -> Self {
        Self::real(self.value)
    }
}

impl fmt::Display for TokenValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::Boolean => write!(f, "{}", self.value == 1.0),
            _ => write!(f, "{}", self.value),
        }
    }
}

/// Result kind for arithmetic that stays integral when both sides are.
fn arith_kind(a: Kind, b: Kind, value: f64) -> Kind {
    if a.is_integral() && b.is_integral() && value.fract() == 0.0 && value.abs() < MAX_EXACT_INT {
        Kind::Integer
    } else {
        Kind::Real
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

/// Point-wise failure, positioned by the caller.
enum TokenFault {
    Kind(&'static str, Kind, Kind),
    DivZero,
    ModZero,
    Power,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::FloorDiv => "//",
            BinaryOp::Mod => "%",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    pub fn as_predicate(self) -> Option<Predicate> {
        Some(match self {
            BinaryOp::Eq => Predicate::Eq,
            BinaryOp::Ne => Predicate::Ne,
            BinaryOp::Lt => Predicate::Lt,
            BinaryOp::Le => Predicate::Le,
            BinaryOp::Gt => Predicate::Gt,
            BinaryOp::Ge => Predicate::Ge,
            _ => return None,
        })
    }

    fn apply_token(
        self,
        a: TokenValue,
        b: TokenValue,
    ) -> std::result::Result<TokenValue, TokenFault> {
        let (x, y) = (a.value, b.value);
        let arith = |v: f64| TokenValue {
            kind: arith_kind(a.kind, b.kind, v),
            value: v,
        };
        if let Some(pred) = self.as_predicate() {
            return pred
                .test(a, b)
                .map(TokenValue::boolean)
                .map_err(|_| TokenFault::Kind(self.symbol(), a.kind, b.kind));
        }
        Ok(match self {
            BinaryOp::Add => arith(x + y),
            BinaryOp::Sub => arith(x - y),
            BinaryOp::Mul => arith(x * y),
            BinaryOp::Div => {
                if y == 0.0 {
                    return Err(TokenFault::DivZero);
                }
                arith(x / y)
            }
            BinaryOp::FloorDiv => {
                if y == 0.0 {
                    return Err(TokenFault::DivZero);
                }
                arith((x / y).floor())
            }
            BinaryOp::Mod => {
                if y == 0.0 {
                    return Err(TokenFault::ModZero);
                }
                arith(x.rem_euclid(y))
            }
            BinaryOp::Pow => {
                if x < 0.0 && y.fract() != 0.0 {
                    return Err(TokenFault::Power);
                }
                let v = x.powf(y);
                if a.kind.is_integral() && b.kind.is_integral() && y >= 0.0 {
                    arith(v)
                } else {
                    TokenValue::real(v)
                }
            }
            BinaryOp::And => TokenValue::boolean(a.is_truthy() && b.is_truthy()),
            BinaryOp::Or => TokenValue::boolean(a.is_truthy() || b.is_truthy()),
            _ => unreachable!("predicates handled above"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Predicate {
    pub fn symbol(self) -> &'static str {
        match self {
            Predicate::Eq => "==",
            Predicate::Ne => "!=",
            Predicate::Lt => "<",
            Predicate::Le => "<=",
            Predicate::Gt => ">",
            Predicate::Ge => ">=",
        }
    }

    pub fn is_order(self) -> bool {
        !matches!(self, Predicate::Eq | Predicate::Ne)
    }

    /// Exact comparison of carriers. Ordering a boolean against a number is
    /// rejected.
    pub fn test(self, lhs: TokenValue, rhs: TokenValue) -> Result<bool> {
        if self.is_order() && ((lhs.kind == Kind::Boolean) != (rhs.kind == Kind::Boolean)) {
            return Err(SeqError::KindMismatch {
                op: self.symbol(),
                left: lhs.kind,
                right: rhs.kind,
            });
        }
        let (a, b) = (lhs.value, rhs.value);
        Ok(match self {
            Predicate::Eq => a == b,
            Predicate::Ne => a != b,
            Predicate::Lt => a < b,
            Predicate::Le => a <= b,
            Predicate::Gt => a > b,
            Predicate::Ge => a >= b,
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A non-empty token stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    tokens: Vec<TokenValue>,
}

impl Sequence {
    pub fn new(tokens: Vec<TokenValue>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(SeqError::Empty);
        }
        Ok(Self { tokens })
    }

    /// Each value becomes an integer token when integral, a real one otherwise.
    pub fn from_f64s(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| TokenValue::infer(v)).collect())
    }

    pub fn from_reals(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| TokenValue::real(v)).collect())
    }

    /// Panics on an empty slice.
    pub fn from_ints(values: &[i64]) -> Self {
        Self::new(values.iter().map(|&v| TokenValue::int(v)).collect()).expect("empty sequence")
    }

    pub fn repeat(token: TokenValue, n: usize) -> Result<Self> {
        Self::new(vec![token; n])
    }

    /// `[0, 1, .., n-1]`.
    pub fn indices(n: usize) -> Self {
        Self {
            tokens: (0..n.max(1)).map(|i| TokenValue::int(i as i64)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenValue] {
        &self.tokens
    }

    pub fn get(&self, i: usize) -> Option<TokenValue> {
        self.tokens.get(i).copied()
    }

    pub fn values(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.value).collect()
    }

    pub fn map(&self, f: impl Fn(TokenValue) -> TokenValue) -> Self {
        Self {
            tokens: self.tokens.iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn concat(parts: &[&Sequence]) -> Result<Self> {
        Self::new(
            parts
                .iter()
                .flat_map(|s| s.tokens.iter().copied())
                .collect(),
        )
    }
}

impl From<Sequence> for Vec<f64> {
    fn from(s: Sequence) -> Self {
        s.values()
    }
}

/// Square boolean attention pattern; row = query, column = key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    n: usize,
    bits: Vec<bool>,
}

impl Selector {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(n * n);
        for q in 0..n {
            for k in 0..n {
                bits.push(f(q, k));
            }
        }
        Self { n, bits }
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            bits: vec![true; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, query: usize, key: usize) -> bool {
        self.bits[query * self.n + key]
    }

    pub fn row(&self, query: usize) -> &[bool] {
        &self.bits[query * self.n..(query + 1) * self.n]
    }

    pub fn and(&self, other: &Selector) -> Result<Selector> {
        self.combine(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Selector) -> Result<Selector> {
        self.combine(other, |a, b| a || b)
    }

    fn combine(&self, other: &Selector, f: impl Fn(bool, bool) -> bool) -> Result<Selector> {
        if self.n != other.n {
            return Err(SeqError::LengthMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(Selector {
            n: self.n,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// A sequence or a scalar broadcast to the sequence length.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Scalar(TokenValue),
    Seq(&'a Sequence),
}

impl<'a> Operand<'a> {
    fn at(&self, i: usize) -> TokenValue {
        match self {
            Operand::Scalar(t) => *t,
            Operand::Seq(s) => s.tokens[i],
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Operand::Scalar(_) => None,
            Operand::Seq(s) => Some(s.len()),
        }
    }
}

impl<'a> From<&'a Sequence> for Operand<'a> {
    fn from(s: &'a Sequence) -> Self {
        Operand::Seq(s)
    }
}

impl From<TokenValue> for Operand<'_> {
    fn from(t: TokenValue) -> Self {
        Operand::Scalar(t)
    }
}

impl From<i64> for Operand<'_> {
    fn from(i: i64) -> Self {
        Operand::Scalar(TokenValue::int(i))
    }
}

/// The common length of all sequence operands.
fn common_len(operands: &[Operand<'_>]) -> Result<usize> {
    let mut n = None;
    for op in operands {
        if let Some(len) = op.len() {
            match n {
                None => n = Some(len),
                Some(m) if m != len => {
                    return Err(SeqError::LengthMismatch {
                        left: m,
                        right: len,
                    })
                }
                _ => {}
            }
        }
    }
    n.ok_or(SeqError::NoLength)
}

/// `bits[q][k] = predicate(keys[k], queries[q])`.
pub fn select(keys: &Sequence, queries: &Sequence, predicate: Predicate) -> Result<Selector> {
    select_operands(keys.into(), queries.into(), predicate)
}

/// [`select`] with scalar broadcasting; at least one side must be a sequence.
pub fn select_operands(
    keys: Operand<'_>,
    queries: Operand<'_>,
    predicate: Predicate,
) -> Result<Selector> {
    let n = common_len(&[keys, queries])?;
    let mut bits = Vec::with_capacity(n * n);
    for q in 0..n {
        let query = queries.at(q);
        for k in 0..n {
            bits.push(predicate.test(keys.at(k), query)?);
        }
    }
    Ok(Selector { n, bits })
}

/// Average-hard pooling: each query receives the mean of the values at its
/// selected keys, or zero when it selects nothing.
pub fn aggregate(sel: &Selector, values: &Sequence) -> Result<Sequence> {
    aggregate_operand(sel, values.into())
}

pub fn aggregate_operand(sel: &Selector, values: Operand<'_>) -> Result<Sequence> {
    if let Some(len) = values.len() {
        if len != sel.n {
            return Err(SeqError::LengthMismatch {
                left: sel.n,
                right: len,
            });
        }
    }
    let mut tokens = Vec::with_capacity(sel.n);
    for q in 0..sel.n {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut integral = true;
        for (k, _) in sel.row(q).iter().enumerate().filter(|(_, &b)| b) {
            let v = values.at(k);
            integral &= v.kind.is_integral();
            sum += v.value;
            count += 1;
        }
        tokens.push(if count == 0 {
            TokenValue::int(0)
        } else {
            let mean = sum / count as f64;
            if integral {
                TokenValue::infer(mean)
            } else {
                TokenValue::real(mean)
            }
        });
    }
    Sequence::new(tokens)
}

/// Position-wise binary operation with scalar broadcasting.
pub fn binary(op: BinaryOp, lhs: Operand<'_>, rhs: Operand<'_>) -> Result<Sequence> {
    let n = common_len(&[lhs, rhs])?;
    let tokens = (0..n)
        .map(|i| apply_at(op, lhs.at(i), rhs.at(i), i))
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(tokens)
}

/// Binary operation on two scalars; faults are reported at position 0.
pub fn binary_scalar(op: BinaryOp, lhs: TokenValue, rhs: TokenValue) -> Result<TokenValue> {
    apply_at(op, lhs, rhs, 0)
}

fn apply_at(op: BinaryOp, a: TokenValue, b: TokenValue, position: usize) -> Result<TokenValue> {
    op.apply_token(a, b).map_err(|fault| match fault {
        TokenFault::Kind(op, left, right) => SeqError::KindMismatch { op, left, right },
        TokenFault::DivZero => SeqError::DivisionByZero { position },
        TokenFault::ModZero => SeqError::ModuloByZero { position },
        TokenFault::Power => SeqError::InvalidPower { position },
    })
}

pub fn negate(operand: Operand<'_>, n: usize) -> Sequence {
    let tokens = (0..n)
        .map(|i| {
            let t = operand.at(i);
            match t.kind {
                Kind::Real => TokenValue::real(-t.value),
                _ => TokenValue::infer(-t.value),
            }
        })
        .collect();
    Sequence { tokens }
}

/// `then[i] if cond[i] else otherwise[i]`.
pub fn conditional(
    cond: Operand<'_>,
    then: Operand<'_>,
    otherwise: Operand<'_>,
) -> Result<Sequence> {
    let n = common_len(&[cond, then, otherwise])?;
    Sequence::new(
        (0..n)
            .map(|i| {
                if cond.at(i).is_truthy() {
                    then.at(i)
                } else {
                    otherwise.at(i)
                }
            })
            .collect(),
    )
}

/// `n` copies of `n`.
pub fn length(n: usize) -> Result<Sequence> {
    Sequence::repeat(TokenValue::int(n as i64), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Sequence {
        Sequence::from_ints(v)
    }

    #[test]
    fn identity_selector() {
        let idx = Sequence::indices(3);
        let sel = select(&idx, &idx, Predicate::Eq).unwrap();
        for q in 0..3 {
            for k in 0..3 {
                assert_eq!(sel.get(q, k), q == k);
            }
        }
    }

    #[test]
    fn anti_diagonal_selector() {
        let idx = Sequence::indices(3);
        let rho = ints(&[2, 1, 0]);
        let sel = select(&idx, &rho, Predicate::Eq).unwrap();
        // Hand enumeration of all nine key/query comparisons.
        let expected = [
            [false, false, true],
            [false, true, false],
            [true, false, false],
        ];
        for q in 0..3 {
            for k in 0..3 {
                assert_eq!(sel.get(q, k), expected[q][k], "q={q} k={k}");
            }
        }
    }

    #[test]
    fn scalar_query_broadcast() {
        let idx = Sequence::indices(3);
        let sel = select_operands((&idx).into(), 1.into(), Predicate::Ge).unwrap();
        for q in 0..3 {
            assert_eq!(sel.row(q), &[false, true, true]);
        }
    }

    #[test]
    fn select_rejects_mismatched_lengths() {
        let err = select(&Sequence::indices(3), &Sequence::indices(4), Predicate::Eq).unwrap_err();
        assert_eq!(err, SeqError::LengthMismatch { left: 3, right: 4 });
    }

    #[test]
    fn select_rejects_boolean_ordering() {
        let bools = Sequence::new(vec![TokenValue::boolean(true); 2]).unwrap();
        let reals = Sequence::from_reals(&[0.5, 1.5]).unwrap();
        assert!(matches!(
            select(&bools, &reals, Predicate::Lt),
            Err(SeqError::KindMismatch { .. })
        ));
        // Equality across kinds compares carriers.
        assert!(select(&bools, &reals, Predicate::Eq).is_ok());
    }

    #[test]
    fn aggregate_identity_and_mean() {
        let idx = Sequence::indices(3);
        let sel = select(&idx, &idx, Predicate::Eq).unwrap();
        assert_eq!(
            aggregate(&sel, &ints(&[5, 7, 9])).unwrap(),
            ints(&[5, 7, 9])
        );

        let sel = Selector::from_fn(3, |q, k| q == 1 && (k == 0 || k == 2));
        let out = aggregate(&sel, &ints(&[1, 100, 3])).unwrap();
        assert_eq!(out.values(), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn aggregate_empty_row_is_zero() {
        let sel = Selector::from_fn(2, |_, _| false);
        let out = aggregate(&sel, &Sequence::from_reals(&[3.5, -1.0]).unwrap()).unwrap();
        assert_eq!(out.values(), vec![0.0, 0.0]);
    }

    #[test]
    fn aggregate_dimension_mismatch() {
        let sel = Selector::full(2);
        assert!(aggregate(&sel, &ints(&[1, 2, 3])).is_err());
    }

    #[test]
    fn elementwise_examples() {
        let sum = binary(
            BinaryOp::Add,
            (&ints(&[1, 2, 3])).into(),
            (&ints(&[10, 20, 30])).into(),
        )
        .unwrap();
        assert_eq!(sum, ints(&[11, 22, 33]));

        let idx = Sequence::indices(7);
        let m = binary(BinaryOp::Mod, (&idx).into(), 3.into()).unwrap();
        assert_eq!(m, ints(&[0, 1, 2, 0, 1, 2, 0]));

        let t = ints(&[-2, 3, -1]);
        let neg = binary(BinaryOp::Lt, (&t).into(), 0.into()).unwrap();
        let relu = conditional((&neg).into(), 0.into(), (&t).into()).unwrap();
        assert_eq!(relu.values(), vec![0.0, 3.0, 0.0]);
    }

    #[test]
    fn division_by_zero_reports_position() {
        let err = binary(
            BinaryOp::Div,
            (&ints(&[1, 2, 3])).into(),
            (&ints(&[1, 0, 1])).into(),
        )
        .unwrap_err();
        assert_eq!(err, SeqError::DivisionByZero { position: 1 });
        let err = binary(
            BinaryOp::Mod,
            (&ints(&[1, 2])).into(),
            (&ints(&[2, 0])).into(),
        )
        .unwrap_err();
        assert_eq!(err, SeqError::ModuloByZero { position: 1 });
    }

    #[test]
    fn negative_base_fractional_power() {
        let err = binary(
            BinaryOp::Pow,
            (&ints(&[4, -4])).into(),
            TokenValue::real(0.5).into(),
        )
        .unwrap_err();
        assert_eq!(err, SeqError::InvalidPower { position: 1 });
    }

    #[test]
    fn integer_kinds_are_preserved() {
        let out = binary(BinaryOp::Mul, (&ints(&[2, 3])).into(), 4.into()).unwrap();
        assert!(out.tokens().iter().all(|t| t.kind() == Kind::Integer));
        let out = binary(BinaryOp::Div, (&ints(&[1, 4])).into(), 2.into()).unwrap();
        assert_eq!(out.tokens()[0].kind(), Kind::Real);
        assert_eq!(out.tokens()[1].kind(), Kind::Integer);
    }

    #[test]
    fn length_examples() {
        assert_eq!(length(4).unwrap(), ints(&[4, 4, 4, 4]));
        assert_eq!(length(1).unwrap(), ints(&[1]));
        let n9 = length(9).unwrap();
        let r = binary(BinaryOp::Pow, (&n9).into(), TokenValue::real(0.5).into()).unwrap();
        assert_eq!(r.values(), vec![3.0; 9]);
    }

    #[test]
    fn token_invariants() {
        assert!(TokenValue::new(Kind::Boolean, 2.0).is_err());
        assert!(TokenValue::new(Kind::Integer, 0.5).is_err());
        assert!(TokenValue::new(Kind::Integer, MAX_EXACT_INT).is_err());
        assert_eq!(TokenValue::real(-2.7).to_int().value(), -2.0);
        assert!(Sequence::new(vec![]).is_err());
    }
}
