//! Program generators for the matrix constructions.
//!
//! Each generator writes RASP source for the requested orders and parses it,
//! so [`GeneratedOp::source`] is exactly what gets evaluated. Row and column
//! sums are always recovered as `count * aggregate(..)` with the count taken
//! from `length`, never from token values.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::lang::{
    evaluate, metrics, parse, print, print_function, Bindings, EvalError, Expr, ExprKind, Function,
    ParseError, Program, ProgramMetrics, Span, Stmt,
};
use crate::seqcore::{BinaryOp, Sequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StdlibError {
    #[error("invalid construction: {0}")]
    Construction(String),
    #[error("{op}: input of length {len} violates the contract: {reason}")]
    Contract {
        op: &'static str,
        len: usize,
        reason: String,
    },
    #[error("{op}: output position {position} should be zero but is {value}")]
    NonZeroSuffix {
        op: &'static str,
        position: usize,
        value: f64,
    },
    #[error("generated source failed to parse: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, StdlibError>;

/// How literally the generated source follows the reference listings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum Style {
    /// True `e` as the exponent base and token values read unconverted.
    #[default]
    Exact,
    /// `2.73` as the exponent base and `tokens_int` where the listings use it.
    Listing,
}

impl Style {
    fn exp_base(self) -> &'static str {
        match self {
            Style::Exact => "2.718281828459045",
            Style::Listing => "2.73",
        }
    }

    fn int_tokens(self) -> &'static str {
        match self {
            Style::Exact => "tokens",
            Style::Listing => "tokens_int",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpKind {
    Transpose {
        rows: Option<usize>,
        cols: Option<usize>,
    },
    Softmax {
        rows: usize,
        /// Only the first `keep_cols` columns take part; the rest output 0.
        keep_cols: Option<usize>,
    },
    #[serde(rename = "matmul")]
    MatMul {
        rows: usize,
        cols: usize,
        inner: Option<usize>,
    },
    Relu,
    #[serde(rename = "maxmin")]
    MaxMin,
    Cofactor3,
    Determinant3,
    Inverse3,
    Identify {
        start: usize,
        len: usize,
    },
    Shift {
        offset: i64,
    },
    Scale {
        factor: f64,
    },
    MultiHead {
        base: Box<OpKind>,
        heads: usize,
        operand_lens: Vec<usize>,
    },
}

/// What an output of a given length looks like: every `block_len` block
/// carries `prefix` meaningful tokens followed by exact zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OutputContract {
    pub block_len: usize,
    pub prefix: usize,
    /// Matrix shape of each block's prefix, when it has one.
    pub shape: Option<(usize, usize)>,
}

impl OutputContract {
    fn whole(len: usize, shape: Option<(usize, usize)>) -> Self {
        Self {
            block_len: len,
            prefix: len,
            shape,
        }
    }
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Transpose { .. } => "transpose",
            OpKind::Softmax { .. } => "softmax",
            OpKind::MatMul { .. } => "matmul",
            OpKind::Relu => "relu",
            OpKind::MaxMin => "maxmin",
            OpKind::Cofactor3 => "cofactor3",
            OpKind::Determinant3 => "determinant3",
            OpKind::Inverse3 => "inverse3",
            OpKind::Identify { .. } => "identify",
            OpKind::Shift { .. } => "shift",
            OpKind::Scale { .. } => "scale",
            OpKind::MultiHead { .. } => "multi_head",
        }
    }

    /// Constructions that act the same on every block of a concatenation.
    pub fn input_independent(&self) -> bool {
        matches!(self, OpKind::Relu | OpKind::MaxMin | OpKind::Scale { .. })
    }

    /// Checks an input length against the contract and describes the output.
    pub fn contract(&self, len: usize) -> Result<OutputContract> {
        let op = self.name();
        let fail = |reason: String| StdlibError::Contract { op, len, reason };
        if len == 0 {
            return Err(fail("empty input".into()));
        }
        match self {
            OpKind::Transpose { rows, cols } => {
                let r = match rows {
                    Some(r) => *r,
                    None => exact_sqrt(len)
                        .ok_or_else(|| fail("length is not a perfect square".into()))?,
                };
                if len % r != 0 {
                    return Err(fail(format!("length is not divisible by {r} rows")));
                }
                let c = len / r;
                if let Some(cols) = cols {
                    if *cols != c {
                        return Err(fail(format!("expected a {r}x{cols} matrix")));
                    }
                }
                Ok(OutputContract::whole(len, Some((c, r))))
            }
            OpKind::Softmax { rows, keep_cols } => {
                if len % rows != 0 {
                    return Err(fail(format!("length is not divisible by {rows} rows")));
                }
                let c = len / rows;
                if keep_cols.is_some_and(|k| k == 0 || k > c) {
                    return Err(fail(format!("cannot keep {keep_cols:?} of {c} columns")));
                }
                Ok(OutputContract::whole(len, Some((*rows, c))))
            }
            OpKind::MatMul { rows, cols, inner } => {
                let (r, c) = (*rows, *cols);
                if len % (r + c) != 0 {
                    return Err(fail(format!(
                        "length is not divisible by r + c = {}",
                        r + c
                    )));
                }
                let k = len / (r + c);
                if let Some(inner) = inner {
                    if *inner != k {
                        return Err(fail(format!("expected inner dimension {inner}, found {k}")));
                    }
                }
                if k * (r + c) < r * c {
                    return Err(fail(format!(
                        "inner dimension {k} is below rc/(r+c) = {r}*{c}/{}",
                        r + c
                    )));
                }
                Ok(OutputContract {
                    block_len: len,
                    prefix: r * c,
                    shape: Some((r, c)),
                })
            }
            OpKind::Relu | OpKind::Shift { .. } | OpKind::Scale { .. } => {
                Ok(OutputContract::whole(len, None))
            }
            OpKind::MaxMin => {
                if len % 2 != 0 {
                    return Err(fail("length must be even".into()));
                }
                Ok(OutputContract::whole(len, None))
            }
            OpKind::Cofactor3 | OpKind::Determinant3 | OpKind::Inverse3 => {
                if len != 9 {
                    return Err(fail("expected a 3x3 matrix (length 9)".into()));
                }
                Ok(OutputContract::whole(len, Some((3, 3))))
            }
            OpKind::Identify { start, len: k } => {
                if start + k > len {
                    return Err(fail(format!(
                        "window [{start}, {}) is out of range",
                        start + k
                    )));
                }
                Ok(OutputContract::whole(len, None))
            }
            OpKind::MultiHead {
                base,
                heads,
                operand_lens,
            } => {
                let m: usize = operand_lens.iter().sum();
                if len != heads * m {
                    return Err(fail(format!("expected {heads} heads of {m} tokens")));
                }
                let inner = base.contract(m)?;
                Ok(OutputContract {
                    block_len: m,
                    prefix: inner.prefix,
                    shape: inner.shape,
                })
            }
        }
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// A generated program together with its input/output contract.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedOp {
    kind: OpKind,
    anchor: Option<&'static str>,
    source: String,
    program: Program,
}

impl GeneratedOp {
    fn build(kind: OpKind, anchor: Option<&'static str>, source: String) -> Result<Self> {
        let program = parse(&source)?;
        Ok(Self {
            kind,
            anchor,
            source,
            program,
        })
    }

    pub fn kind(&self) -> &OpKind {
        &self.kind
    }

    /// Name of the reference listing this construction instantiates.
    pub fn anchor(&self) -> Option<&'static str> {
        self.anchor
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// The program pretty-printed in the listing grammar.
    pub fn listing(&self) -> String {
        print(&self.program)
    }

    /// One function of the program pretty-printed on its own.
    pub fn function_listing(&self, name: &str) -> Option<String> {
        let f = self.program.function(name)?;
        let mut out = String::new();
        print_function(&mut out, f);
        Some(out)
    }

    pub fn metrics(&self) -> ProgramMetrics {
        metrics(&self.program)
    }

    pub fn contract(&self, len: usize) -> Result<OutputContract> {
        self.kind.contract(len)
    }

    /// Evaluates on a contract-conforming input and checks that every
    /// position past the meaningful prefix came out exactly zero.
    pub fn apply(&self, input: &Sequence) -> Result<Sequence> {
        let contract = self.contract(input.len())?;
        let out = evaluate(&self.program, input, &Bindings::new())?;
        for (position, t) in out.tokens().iter().enumerate() {
            if position % contract.block_len >= contract.prefix && t.value() != 0.0 {
                return Err(StdlibError::NonZeroSuffix {
                    op: self.kind.name(),
                    position,
                    value: t.value(),
                });
            }
        }
        Ok(out)
    }
}

/// English number word without spaces: `one`, `twelve`, `twentythree`.
pub fn number_word(n: usize) -> String {
    const ONES: [&str; 20] = [
        "zero",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "seven",
        "eight",
        "nine",
        "ten",
        "eleven",
        "twelve",
        "thirteen",
        "fourteen",
        "fifteen",
        "sixteen",
        "seventeen",
        "eighteen",
        "nineteen",
    ];
    const TENS: [&str; 10] = [
        "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    ];
    assert!(n < 100, "number words are only defined below 100");
    match n {
        0..=19 => ONES[n].to_string(),
        _ if n % 10 == 0 => TENS[n / 10].to_string(),
        _ => format!("{}{}", TENS[n / 10], ONES[n % 10]),
    }
}

fn positive(what: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(StdlibError::Construction(format!(
            "{what} must be positive"
        )));
    }
    Ok(())
}

fn transpose_source(r: &str, tokens: &str) -> String {
    format!(
        "def Transpose_r(){{\n  r, c = {r}, length/{r};\n  \
         reflectedIndices = (indices%r)*c+(indices-indices%r)/r;\n  \
         reflect = select(indices, reflectedIndices, ==);\n  \
         return aggregate(reflect, {tokens});\n}}\n"
    )
}

/// Transposes an `r`×`c` matrix by permuting positions. With `cols` set the
/// input length must be exactly `r*c`; otherwise `c = length/r`.
pub fn gen_transpose(rows: usize, cols: Option<usize>, style: Style) -> Result<GeneratedOp> {
    positive("rows", rows)?;
    if let Some(c) = cols {
        positive("cols", c)?;
    }
    GeneratedOp::build(
        OpKind::Transpose {
            rows: Some(rows),
            cols,
        },
        Some("transpose"),
        transpose_source(&rows.to_string(), style.int_tokens()),
    )
}

/// Transpose of a square matrix whose order is read off `length`.
pub fn gen_transpose_square(style: Style) -> Result<GeneratedOp> {
    GeneratedOp::build(
        OpKind::Transpose {
            rows: None,
            cols: None,
        },
        None,
        transpose_source("length^0.5", style.int_tokens()),
    )
}

fn softmax_source(r: usize, keep_cols: Option<usize>, style: Style) -> String {
    let base = style.exp_base();
    let mut s = format!("def softmaxrect_r(){{\n  r, c = {r}, length/{r};\n");
    match keep_cols {
        None => {
            let _ = writeln!(s, "  exp = ({base}^tokens_float);");
        }
        Some(m) => {
            let _ = writeln!(
                s,
                "  exp = (0 if indices%c >= {m} else {base}^tokens_float);"
            );
        }
    }
    let names = |prefix: &str| {
        (1..=r)
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let sels: Vec<String> = (0..r)
        .map(|i| {
            if i == 0 {
                "(select(indices, c*0+c, <) and select(c*0+c, indices, >))".to_string()
            } else {
                let (lo, hi) = (i - 1, i);
                format!(
                    "(select(indices, c*{lo}+c, >=) and select(indices, c*{hi}+c, <) and \
                     select(c*{hi}+c, indices, >) and select(c*{lo}+c, indices, <=))"
                )
            }
        })
        .collect();
    let _ = writeln!(s, "  {} ={};", names("sel"), sels.join(", "));
    let denoms: Vec<String> = (1..=r)
        .map(|i| format!("c*aggregate(sel{i}, exp)"))
        .collect();
    let _ = writeln!(s, "  {} = {};", names("denom"), denoms.join(", "));
    let total: Vec<String> = (1..=r).map(|i| format!("denom{i}")).collect();
    let _ = writeln!(s, "  denom = ({});", total.join("+"));
    s.push_str("  return exp/denom;\n}\n");
    s
}

/// Row-wise softmax of a matrix with `r` rows.
pub fn gen_softmax(rows: usize, style: Style) -> Result<GeneratedOp> {
    positive("rows", rows)?;
    GeneratedOp::build(
        OpKind::Softmax {
            rows,
            keep_cols: None,
        },
        Some("softmax"),
        softmax_source(rows, None, style),
    )
}

/// Row-wise softmax restricted to the first `keep_cols` columns; the
/// remaining columns output exactly 0.
pub fn gen_softmax_masked(rows: usize, keep_cols: usize, style: Style) -> Result<GeneratedOp> {
    positive("rows", rows)?;
    positive("keep_cols", keep_cols)?;
    GeneratedOp::build(
        OpKind::Softmax {
            rows,
            keep_cols: Some(keep_cols),
        },
        None,
        softmax_source(rows, Some(keep_cols), style),
    )
}

fn matmul_source(r: usize, c: usize, style: Style) -> String {
    let w = number_word;
    let tokens = style.int_tokens();
    let mut s = format!("def Matmul_{r}dot{c}(){{\n  k = length/({r}+{c});\n\n");

    let mut idx_names = Vec::new();
    let mut idx_exprs = Vec::new();
    for x in 1..=r.max(c) {
        if x <= r {
            idx_names.push(format!("{}_a", w(x)));
            idx_exprs.push(format!("indices%k+{}*k", x - 1));
        }
        if x <= c {
            idx_names.push(format!("{}_b", w(x)));
            idx_exprs.push(format!("indices%k*{c}+{r}*k+{}", x - 1));
        }
    }
    let _ = writeln!(
        s,
        "  {} = {};\n",
        idx_names.join(", "),
        idx_exprs.join(", ")
    );

    let sel_names: Vec<String> = idx_names
        .iter()
        .map(|n| format!("{}s{}", &n[..n.len() - 1], &n[n.len() - 1..]))
        .collect();
    let sel_exprs: Vec<String> = idx_names
        .iter()
        .map(|n| format!("select(indices, {n}, ==)"))
        .collect();
    let _ = writeln!(
        s,
        "  {} = {};\n",
        sel_names.join(", "),
        sel_exprs.join(", ")
    );

    let mut prod_names = Vec::new();
    let mut prod_exprs = Vec::new();
    for i in 1..=r {
        for j in 1..=c {
            prod_names.push(format!("{}{}_ab", w(i), w(j)));
            prod_exprs.push(format!(
                "aggregate({}_sa, {tokens})*aggregate({}_sb, {tokens})",
                w(i),
                w(j)
            ));
        }
    }
    let _ = writeln!(
        s,
        "  {} = {};\n",
        prod_names.join(", "),
        prod_exprs.join(", ")
    );

    let out_names: Vec<String> = (1..=r * c).map(|p| format!("sel_{}", w(p))).collect();
    let out_exprs: Vec<String> = (0..r * c)
        .map(|p| format!("select(indices, k, <) and select({p}, indices, ==)"))
        .collect();
    let _ = writeln!(
        s,
        "  {} = {};\n",
        out_names.join(", "),
        out_exprs.join(", ")
    );

    let terms: Vec<String> = out_names
        .iter()
        .zip(&prod_names)
        .map(|(sel, prod)| format!("aggregate({sel}, {prod})"))
        .collect();
    let _ = writeln!(s, "  matmul = k*({});", terms.join("+"));
    s.push_str("  return matmul;\n}\n");
    s
}

/// Product of an `r`×`k` matrix and a `k`×`c` matrix given as
/// `flatten(A) ∥ flatten(B)`; `k` is read off the length. The first `rc`
/// output tokens hold the product and the rest are exactly zero.
///
/// Each entry is `k` times a mean of `k` products. On integer inputs that is
/// bit-exact when `k` is 1 to 6, 8, 9, 10, 12 or 16; for other `k` the
/// rounding of the mean can leave an entry one ulp off.
pub fn gen_matmul(rows: usize, cols: usize, style: Style) -> Result<GeneratedOp> {
    positive("rows", rows)?;
    positive("cols", cols)?;
    if rows * cols >= 100 {
        return Err(StdlibError::Construction(
            "at most 99 output positions".into(),
        ));
    }
    GeneratedOp::build(
        OpKind::MatMul {
            rows,
            cols,
            inner: None,
        },
        Some("matmul"),
        matmul_source(rows, cols, style),
    )
}

/// [`gen_matmul`] with the inner dimension fixed up front, so an infeasible
/// `k < rc/(r+c)` is rejected at construction.
pub fn gen_matmul_with_inner(
    rows: usize,
    inner: usize,
    cols: usize,
    style: Style,
) -> Result<GeneratedOp> {
    positive("inner", inner)?;
    if inner * (rows + cols) < rows * cols {
        return Err(StdlibError::Construction(format!(
            "inner dimension {inner} is below rc/(r+c) = {}/{}; the {rows}x{cols} product \
             does not fit in {} tokens",
            rows * cols,
            rows + cols,
            inner * (rows + cols)
        )));
    }
    let mut op = gen_matmul(rows, cols, style)?;
    op.kind = OpKind::MatMul {
        rows,
        cols,
        inner: Some(inner),
    };
    Ok(op)
}

pub fn gen_relu() -> Result<GeneratedOp> {
    GeneratedOp::build(
        OpKind::Relu,
        Some("relu"),
        "def ReLU(){\n  return (0 if tokens<0 else tokens);\n}\n".into(),
    )
}

const MAXMIN: &str = "def MaxMinSort(){
  MaxSel = select(indices, indices, ==);
  MinSel = select(indices, indices+1, ==) and select(1, indices%2, >) or select(indices, indices, ==) and select(1, indices%2, ==);
  MaxminusMin = aggregate(MaxSel, tokens) - aggregate(MinSel, tokens);
  reqFlip = 1 if MaxminusMin<0 else 0;
  reqFlip = reqFlip + aggregate(select(indices+1, indices, ==), reqFlip);
  revby2 = aggregate(select(0, indices%2, ==), 2)-1;
  flip = select(indices, indices+revby2, ==);
  sorted = reqFlip*aggregate(flip, tokens) + (1-reqFlip)*aggregate(select(indices, indices, ==), tokens);
  return sorted;
}
";

/// Sorts each adjacent pair `(2i, 2i+1)` into descending order. Equal pairs
/// are left alone.
pub fn gen_maxmin() -> Result<GeneratedOp> {
    GeneratedOp::build(OpKind::MaxMin, Some("maxmin"), MAXMIN.into())
}

const COFACTOR: &str = "def Cofactor(){
  n = length^0.5;
  i,j = (indices-indices%n)/n, indices%n;

  idx1, idx2, idx3, idx4 = (i+1)%n, (j+1)%n, (i+2)%n, (j+2)%n;
  one, two, three, four = idx3*n+idx4, idx1*n+idx2, idx3*n+idx2, idx1*n+idx4;

  sel_one, sel_two, sel_three, sel_four = select(indices, one, ==), select(indices, two, ==),select(indices, three, ==), select(indices, four, ==);
  P, Q, R, S = aggregate(sel_one, tokens), aggregate(sel_two, tokens), aggregate(sel_three, tokens), aggregate(sel_four, tokens);
  cofactor = P*Q-R*S;
  return cofactor;
}
";

const DET: &str = "def Det(Cofactor){
  n = length^0.5;
  mask = select(indices, n, <) and select(indices, indices, ==);
  det = length*aggregate(full_s, aggregate(mask, (tokens*Cofactor)));
  return det;
}
";

/// Signed cofactor matrix of a 3×3 matrix.
pub fn gen_cofactor3() -> Result<GeneratedOp> {
    GeneratedOp::build(OpKind::Cofactor3, Some("cofactor"), COFACTOR.into())
}

/// Determinant of a 3×3 matrix broadcast to all nine positions, expanded
/// along the first row against the cofactors.
pub fn gen_determinant3() -> Result<GeneratedOp> {
    let source = format!("{COFACTOR}\n{DET}\ndef main(){{\n  return Det(Cofactor());\n}}\n");
    GeneratedOp::build(OpKind::Determinant3, Some("det"), source)
}

/// Inverse of a nonsingular 3×3 matrix: cofactors over the determinant,
/// then transposed. A singular input fails at the division.
pub fn gen_inverse3() -> Result<GeneratedOp> {
    let source = format!(
        "{COFACTOR}\n{DET}\ndef Inverse3(){{\n  cof = Cofactor();\n  adjT = cof/Det(cof);\n  \
         r, c = 3, length/3;\n  reflectedIndices = (indices%r)*c+(indices-indices%r)/r;\n  \
         reflect = select(indices, reflectedIndices, ==);\n  return aggregate(reflect, adjT);\n}}\n"
    );
    GeneratedOp::build(OpKind::Inverse3, None, source)
}

fn clip(start: usize, len: usize) -> String {
    format!(
        "select(indices, indices, ==) and select(indices, {start}, >=) and select(indices, {}, <=)",
        start as i64 + len as i64 - 1
    )
}

/// Keeps positions `[start, start + len)` and zeroes the rest.
pub fn gen_identify(start: usize, len: usize) -> Result<GeneratedOp> {
    let source = format!(
        "def Identify(){{\n  clip = {};\n  return aggregate(clip, tokens);\n}}\n",
        clip(start, len)
    );
    GeneratedOp::build(OpKind::Identify { start, len }, None, source)
}

fn shifted(offset: i64, values: &str) -> String {
    let query = match offset {
        0 => "indices".to_string(),
        t if t > 0 => format!("(indices+{t})%length"),
        t => format!("(indices-{})%length", -t),
    };
    format!("aggregate(select(indices, {query}, ==), {values})")
}

/// Cyclic rotation toward lower positions: `out[j] = in[(j + t) mod n]`.
pub fn gen_shift(offset: i64) -> Result<GeneratedOp> {
    let source = format!(
        "def Shift(){{\n  return {};\n}}\n",
        shifted(offset, "tokens")
    );
    GeneratedOp::build(OpKind::Shift { offset }, None, source)
}

/// Elementwise multiplication by a constant.
pub fn gen_scale(factor: f64) -> Result<GeneratedOp> {
    if !factor.is_finite() {
        return Err(StdlibError::Construction(
            "scale factor must be finite".into(),
        ));
    }
    let source = format!(
        "def Scale(){{\n  return tokens_float*{};\n}}\n",
        literal(factor)
    );
    GeneratedOp::build(OpKind::Scale { factor }, None, source)
}

fn literal(x: f64) -> String {
    if x < 0.0 {
        format!("(0-{})", -x)
    } else {
        format!("{x}")
    }
}

const HEAD_INPUT: &str = "head_in";

/// Runs `base` independently on `heads` stacked instances.
///
/// The input is `∥_i ∥_h X_i⁽ʰ⁾` for operands of lengths `operand_lens`. It is
/// first permuted to `∥_h ∥_i X_i⁽ʰ⁾` by summing identify∘shift terms; then
/// each head's block is cut out, fed to a block-local copy of `base` and the
/// copy's output is masked back to its block before all heads are summed.
/// Constructions that do not depend on the input layout are returned as is.
pub fn gen_multi_head(
    base: &GeneratedOp,
    heads: usize,
    operand_lens: &[usize],
) -> Result<GeneratedOp> {
    positive("heads", heads)?;
    if operand_lens.is_empty() || operand_lens.contains(&0) {
        return Err(StdlibError::Construction(
            "operand lengths must be non-empty and positive".into(),
        ));
    }
    if heads == 1 || base.kind.input_independent() {
        return Ok(base.clone());
    }
    if !base.program.entry().params.is_empty() {
        return Err(StdlibError::Construction(
            "the base entry function must not take parameters".into(),
        ));
    }
    let m: usize = operand_lens.iter().sum();
    let total = heads * m;

    let mut source = String::new();
    let ctx = Localizer::new(m)?;
    for f in base.program.functions() {
        print_function(&mut source, &ctx.function(f));
        source.push('\n');
    }

    let mut terms = Vec::new();
    let mut before = 0;
    for &len in operand_lens {
        for h in 0..heads {
            let src = heads * before + h * len;
            let dst = h * m + before;
            let t = (src as i64 - dst as i64).rem_euclid(total as i64);
            terms.push(format!(
                "aggregate({}, {})",
                clip(dst, len),
                shifted(t, "tokens")
            ));
        }
        before += len;
    }
    let entry = format!("{}_blk", base.program.entry().name);
    let _ = writeln!(source, "def MultiHead(){{\n  perm = {};", terms.join(" + "));
    let head_names: Vec<String> = (1..=heads).map(|h| format!("head_{h}")).collect();
    let head_calls: Vec<String> = (0..heads)
        .map(|h| format!("{entry}(aggregate({}, perm))", clip(h * m, m)))
        .collect();
    let _ = writeln!(
        source,
        "  {} = {};",
        head_names.join(", "),
        head_calls.join(", ")
    );
    let outputs: Vec<String> = head_names
        .iter()
        .enumerate()
        .map(|(h, name)| format!("aggregate({}, {name})", clip(h * m, m)))
        .collect();
    let _ = writeln!(source, "  return {};\n}}", outputs.join(" + "));

    GeneratedOp::build(
        OpKind::MultiHead {
            base: Box::new(base.kind.clone()),
            heads,
            operand_lens: operand_lens.to_vec(),
        },
        None,
        source,
    )
}

/// Rewrites a function so it sees one `m`-token block: positions become
/// block-local, `length` becomes `m`, selectors never cross blocks, and token
/// reads come from an extra leading parameter.
struct Localizer {
    local_indices: Expr,
    same_block: Expr,
    truncated_input: Expr,
    m: usize,
}

fn snippet(expr: &str) -> Result<Expr> {
    let program = parse(&format!("def snippet({HEAD_INPUT}){{ return {expr}; }}"))?;
    match &program.entry().body[0] {
        Stmt::Return { value, .. } => Ok(value.clone()),
        Stmt::Assign { .. } => unreachable!("snippet body is a single return"),
    }
}

fn node(kind: ExprKind) -> Expr {
    Expr {
        kind,
        span: Span::default(),
    }
}

impl Localizer {
    fn new(m: usize) -> Result<Self> {
        Ok(Self {
            local_indices: snippet(&format!("(indices%{m})"))?,
            same_block: snippet(&format!(
                "select(indices-indices%{m}, indices-indices%{m}, ==)"
            ))?,
            truncated_input: snippet(&format!(
                "({HEAD_INPUT}-{HEAD_INPUT}%1 if {HEAD_INPUT} >= 0 else {HEAD_INPUT}+(0-{HEAD_INPUT})%1)"
            ))?,
            m,
        })
    }

    fn function(&self, f: &Function) -> Function {
        let mut params = vec![HEAD_INPUT.to_string()];
        params.extend(f.params.iter().cloned());
        let body = f
            .body
            .iter()
            .map(|s| match s {
                Stmt::Assign {
                    targets,
                    values,
                    span,
                } => Stmt::Assign {
                    targets: targets.clone(),
                    values: values.iter().map(|e| self.expr(e)).collect(),
                    span: *span,
                },
                Stmt::Return { value, span } => Stmt::Return {
                    value: self.expr(value),
                    span: *span,
                },
            })
            .collect();
        Function {
            name: format!("{}_blk", f.name),
            params,
            body,
            span: f.span,
        }
    }

    fn expr(&self, e: &Expr) -> Expr {
        let b = |x: &Expr| Box::new(self.expr(x));
        match &e.kind {
            ExprKind::Ident(name) => match name.as_str() {
                "indices" => self.local_indices.clone(),
                "length" => node(ExprKind::Number {
                    value: self.m as f64,
                    text: self.m.to_string(),
                }),
                "tokens" | "tokens_float" => node(ExprKind::Ident(HEAD_INPUT.into())),
                "tokens_int" => self.truncated_input.clone(),
                "full_s" => self.same_block.clone(),
                _ => e.clone(),
            },
            ExprKind::Number { .. } => e.clone(),
            ExprKind::Paren(inner) => node(ExprKind::Paren(b(inner))),
            ExprKind::Unary { op, operand } => node(ExprKind::Unary {
                op: *op,
                operand: b(operand),
            }),
            ExprKind::Binary { op, lhs, rhs } => node(ExprKind::Binary {
                op: *op,
                lhs: b(lhs),
                rhs: b(rhs),
            }),
            ExprKind::Cond {
                then,
                cond,
                otherwise,
            } => node(ExprKind::Cond {
                then: b(then),
                cond: b(cond),
                otherwise: b(otherwise),
            }),
            ExprKind::Select {
                keys,
                queries,
                predicate,
            } => {
                let sel = node(ExprKind::Select {
                    keys: b(keys),
                    queries: b(queries),
                    predicate: *predicate,
                });
                node(ExprKind::Paren(Box::new(node(ExprKind::Binary {
                    op: BinaryOp::And,
                    lhs: Box::new(sel),
                    rhs: Box::new(self.same_block.clone()),
                }))))
            }
            ExprKind::Aggregate { selector, values } => node(ExprKind::Aggregate {
                selector: b(selector),
                values: b(values),
            }),
            ExprKind::Call { name, args } => {
                let mut new_args = vec![node(ExprKind::Ident(HEAD_INPUT.into()))];
                new_args.extend(args.iter().map(|a| self.expr(a)));
                node(ExprKind::Call {
                    name: format!("{name}_blk"),
                    args: new_args,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(op: &GeneratedOp, xs: &[i64]) -> Vec<f64> {
        op.apply(&Sequence::from_ints(xs)).unwrap().values()
    }

    #[test]
    fn number_words() {
        assert_eq!(number_word(1), "one");
        assert_eq!(number_word(12), "twelve");
        assert_eq!(number_word(20), "twenty");
        assert_eq!(number_word(34), "thirtyfour");
    }

    #[test]
    fn transpose_2x2() {
        let op = gen_transpose(2, None, Style::Exact).unwrap();
        assert_eq!(run(&op, &[1, 2, 3, 4]), vec![1.0, 3.0, 2.0, 4.0]);
        assert!(op.apply(&Sequence::from_ints(&[1, 2, 3])).is_err());
    }

    #[test]
    fn transpose_auto_square() {
        let op = gen_transpose_square(Style::Exact).unwrap();
        assert_eq!(
            run(&op, &[1, 2, 3, 4, 5, 6, 7, 8, 9]),
            vec![1.0, 4.0, 7.0, 2.0, 5.0, 8.0, 3.0, 6.0, 9.0]
        );
        assert!(op.apply(&Sequence::from_ints(&[1, 2, 3])).is_err());
    }

    #[test]
    fn softmax_uniform_row() {
        let op = gen_softmax(1, Style::Exact).unwrap();
        for v in run(&op, &[0, 0, 0]) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_masked_zeroes_dropped_columns() {
        let op = gen_softmax_masked(2, 1, Style::Exact).unwrap();
        assert_eq!(run(&op, &[3, 0, -1, 5]), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn matmul_identity_left() {
        let op = gen_matmul(2, 2, Style::Exact).unwrap();
        // k = 2: A = I, B = [[5,6],[7,8]].
        assert_eq!(
            run(&op, &[1, 0, 0, 1, 5, 6, 7, 8]),
            vec![5.0, 6.0, 7.0, 8.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn matmul_bound() {
        assert!(matches!(
            gen_matmul_with_inner(3, 1, 4, Style::Exact),
            Err(StdlibError::Construction(_))
        ));
        assert!(gen_matmul_with_inner(3, 2, 4, Style::Exact).is_ok());
        let op = gen_matmul(3, 4, Style::Exact).unwrap();
        assert!(matches!(
            op.apply(&Sequence::from_ints(&[0; 7])),
            Err(StdlibError::Contract { .. })
        ));
    }

    #[test]
    fn relu_and_maxmin() {
        assert_eq!(run(&gen_relu().unwrap(), &[-1, 0, 2]), vec![0.0, 0.0, 2.0]);
        let mm = gen_maxmin().unwrap();
        assert_eq!(run(&mm, &[1, 2, 3, 4]), vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(run(&mm, &[5, 5, 2, 2]), vec![5.0, 5.0, 2.0, 2.0]);
        assert_eq!(run(&mm, &[-3, -1, 0, -7]), vec![-1.0, -3.0, 0.0, -7.0]);
        assert!(mm.apply(&Sequence::from_ints(&[1, 2, 3])).is_err());
    }

    #[test]
    fn cofactor_and_determinant_of_diagonal() {
        let a = [2, 0, 0, 0, 3, 0, 0, 0, 4];
        assert_eq!(
            run(&gen_cofactor3().unwrap(), &a),
            vec![12.0, 0.0, 0.0, 0.0, 8.0, 0.0, 0.0, 0.0, 6.0]
        );
        assert_eq!(run(&gen_determinant3().unwrap(), &a), vec![24.0; 9]);
    }

    #[test]
    fn inverse_of_diagonal_and_singular() {
        let inv = gen_inverse3().unwrap();
        let out = run(&inv, &[2, 0, 0, 0, 4, 0, 0, 0, 5]);
        assert_eq!(out, vec![0.5, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 0.2]);
        assert!(matches!(
            inv.apply(&Sequence::from_ints(&[1, 2, 3, 1, 2, 3, 0, 0, 1])),
            Err(StdlibError::Eval(_))
        ));
    }

    #[test]
    fn inverse_metrics() {
        let m = gen_inverse3().unwrap().metrics();
        assert_eq!((m.depth, m.width), (4, 4));
    }

    #[test]
    fn identify_and_shift() {
        assert_eq!(
            run(&gen_identify(1, 2).unwrap(), &[9, 8, 7, 6]),
            vec![0.0, 8.0, 7.0, 0.0]
        );
        assert_eq!(
            run(&gen_identify(0, 4).unwrap(), &[9, 8, 7, 6]),
            vec![9.0, 8.0, 7.0, 6.0]
        );
        assert!(gen_identify(3, 2)
            .unwrap()
            .apply(&Sequence::from_ints(&[1, 2, 3]))
            .is_err());
        assert_eq!(
            run(&gen_shift(1).unwrap(), &[1, 2, 3, 4]),
            vec![2.0, 3.0, 4.0, 1.0]
        );
        assert_eq!(
            run(&gen_shift(-1).unwrap(), &[1, 2, 3, 4]),
            vec![4.0, 1.0, 2.0, 3.0]
        );
        assert_eq!(
            run(&gen_shift(4).unwrap(), &[1, 2, 3, 4]),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn scale() {
        assert_eq!(run(&gen_scale(0.5).unwrap(), &[2, -4]), vec![1.0, -2.0]);
        assert_eq!(run(&gen_scale(-2.0).unwrap(), &[3]), vec![-6.0]);
    }

    #[test]
    fn multi_head_transpose_blocks() {
        let base = gen_transpose(2, Some(2), Style::Exact).unwrap();
        let mh = gen_multi_head(&base, 2, &[4]).unwrap();
        assert_eq!(
            run(&mh, &[1, 2, 3, 4, 5, 6, 7, 8]),
            vec![1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]
        );
    }

    #[test]
    fn multi_head_binary_operands_are_regrouped() {
        let base = gen_matmul(1, 1, Style::Exact).unwrap();
        // Heads: (a=2, b=3) and (a=5, b=7), laid out as a1 a2 b1 b2.
        let mh = gen_multi_head(&base, 2, &[1, 1]).unwrap();
        assert_eq!(run(&mh, &[2, 5, 3, 7]), vec![6.0, 0.0, 35.0, 0.0]);
    }

    #[test]
    fn multi_head_passthrough() {
        let mm = gen_maxmin().unwrap();
        assert_eq!(gen_multi_head(&mm, 3, &[2]).unwrap(), mm);
        let t = gen_transpose(2, None, Style::Exact).unwrap();
        assert_eq!(gen_multi_head(&t, 1, &[4]).unwrap(), t);
    }

    #[test]
    fn metrics_table() {
        let m = gen_matmul(3, 4, Style::Exact).unwrap().metrics();
        assert_eq!(m.stratum_widths, vec![7, 12]);
        assert_eq!(m.selector_count, 3 + 4 + 12);
        assert_eq!(gen_softmax(3, Style::Exact).unwrap().metrics().width, 3);
        assert_eq!(
            gen_transpose(3, None, Style::Exact)
                .unwrap()
                .metrics()
                .width,
            1
        );
        assert_eq!(gen_maxmin().unwrap().metrics().width, 3);
    }
}
