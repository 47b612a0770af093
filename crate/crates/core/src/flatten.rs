//! Row-major flattening of arrays into sequences, the `<T, X>` input
//! encodings, zero-suffix contraction and the padding embedding that places a
//! small attention instance inside a larger one.

use ndarray::{ArrayD, Dimension, IxDyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqcore::{Sequence, TokenValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("axis {axis} has size zero")]
    EmptyAxis { axis: usize },
    #[error("expected {expected} elements, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("incompatible shapes: {0}")]
    Shape(String),
    #[error("contraction would drop nonzero token {value} at position {position}")]
    NonZeroSuffix { position: usize, value: f64 },
    #[error("cannot keep {keep} tokens of a length-{len} sequence")]
    KeepOutOfRange { keep: usize, len: usize },
    #[error("no integral dimension d with n*d + d^2 = {length} for n = {n}")]
    NoIntegralDims { n: usize, length: usize },
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
}

pub type Result<T> = std::result::Result<T, LayoutError>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

// Nested row arrays are accepted on input too.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    Flat {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    Nested(Vec<Vec<f64>>),
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = LayoutError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        match raw {
            RawMatrix::Flat { rows, cols, data } => Matrix::new(rows, cols, data),
            RawMatrix::Nested(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
                    return Err(LayoutError::Shape(format!(
                        "ragged rows: {} and {} entries",
                        cols,
                        bad.len()
                    )));
                }
                Matrix::new(rows.len(), cols, rows.concat())
            }
        }
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(LayoutError::EmptyAxis { axis: 0 });
        }
        if cols == 0 {
            return Err(LayoutError::EmptyAxis { axis: 1 });
        }
        if data.len() != rows * cols {
            return Err(LayoutError::LengthMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged or empty input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(rows.iter().all(|r| r.as_ref().len() == cols), "ragged rows");
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data).expect("empty matrix")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_sequence(&self) -> Sequence {
        Sequence::from_f64s(&self.data).expect("matrices are non-empty")
    }

    pub fn from_sequence(seq: &Sequence, rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, seq.values())
    }

    /// Rows `[row_start, row_start + rows)` and columns `[0, cols)`.
    pub fn block(&self, row_start: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self.get(row_start + i, j))
    }
}

/// Row-major placement of an n-dimensional array in a flat sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatLayout {
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl FlatLayout {
    pub fn row_major(shape: &[usize]) -> Result<Self> {
        if let Some(axis) = shape.iter().position(|&m| m == 0) {
            return Err(LayoutError::EmptyAxis { axis });
        }
        let mut strides = vec![1; shape.len()];
        for l in (0..shape.len().saturating_sub(1)).rev() {
            strides[l] = strides[l + 1] * shape[l + 1];
        }
        Ok(Self {
            shape: shape.to_vec(),
            strides,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Σ stride_l · i_l`.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }
}

/// Lays out `array` row-major as a sequence.
pub fn flatten(array: &ArrayD<f64>) -> Result<(Sequence, FlatLayout)> {
    let layout = FlatLayout::row_major(array.shape())?;
    let mut values = vec![0.0; layout.len()];
    for (index, &v) in array.indexed_iter() {
        values[layout.flat_index(index.slice())] = v;
    }
    let seq = Sequence::from_f64s(&values).expect("non-empty by layout check");
    Ok((seq, layout))
}

pub fn unflatten(seq: &Sequence, layout: &FlatLayout) -> Result<ArrayD<f64>> {
    if seq.len() != layout.len() {
        return Err(LayoutError::LengthMismatch {
            expected: layout.len(),
            found: seq.len(),
        });
    }
    let values = seq.values();
    Ok(ArrayD::from_shape_fn(IxDyn(&layout.shape), |index| {
        values[layout.flat_index(index.slice())]
    }))
}

/// One attention head: scores matrix `A` (d×d) and value matrix `V` (d×d_v).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "V")]
    pub v: Matrix,
}

/// Characterizing matrices of a single-layer transformer under simulation.
///
/// The JSON form is `{"A", "V"}` for one head or `{"heads": [{"A", "V"}, ..]}`,
/// with optional feed-forward weights `W1`, `W2` and the projection matrices
/// `WQ`, `WK`, `E`, `F` used by the linear and Linformer variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct AttentionSpec {
    heads: Vec<HeadSpec>,
    pub w1: Option<Matrix>,
    pub w2: Option<Matrix>,
    pub wq: Option<Matrix>,
    pub wk: Option<Matrix>,
    pub e: Option<Matrix>,
    pub f: Option<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<Matrix>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    v: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heads: Option<Vec<HeadSpec>>,
    #[serde(rename = "W1", default, skip_serializing_if = "Option::is_none")]
    w1: Option<Matrix>,
    #[serde(rename = "W2", default, skip_serializing_if = "Option::is_none")]
    w2: Option<Matrix>,
    #[serde(rename = "WQ", default, skip_serializing_if = "Option::is_none")]
    wq: Option<Matrix>,
    #[serde(rename = "WK", default, skip_serializing_if = "Option::is_none")]
    wk: Option<Matrix>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    e: Option<Matrix>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    f: Option<Matrix>,
}

impl TryFrom<RawSpec> for AttentionSpec {
    type Error = LayoutError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let heads = match (raw.heads, raw.a, raw.v) {
            (Some(heads), None, None) => heads,
            (None, Some(a), Some(v)) => vec![HeadSpec { a, v }],
            _ => {
                return Err(LayoutError::Shape(
                    "spec needs either `A` and `V` or a `heads` list".into(),
                ))
            }
        };
        let mut spec = AttentionSpec::multi_head(heads)?;
        if let Some(w1) = raw.w1 {
            let w2 = raw
                .w2
                .ok_or_else(|| LayoutError::Shape("`W1` given without `W2`".into()))?;
            spec = spec.with_ffn(w1, w2)?;
        } else if raw.w2.is_some() {
            return Err(LayoutError::Shape("`W2` given without `W1`".into()));
        }
        spec.wq = raw.wq;
        spec.wk = raw.wk;
        spec.e = raw.e;
        spec.f = raw.f;
        Ok(spec)
    }
}

impl From<AttentionSpec> for RawSpec {
    fn from(spec: AttentionSpec) -> Self {
        let single = spec.heads.len() == 1;
        let mut heads = spec.heads;
        let (a, v, heads) = if single {
            let h = heads.pop().expect("one head");
            (Some(h.a), Some(h.v), None)
        } else {
            (None, None, Some(heads))
        };
        RawSpec {
            a,
            v,
            heads,
            w1: spec.w1,
            w2: spec.w2,
            wq: spec.wq,
            wk: spec.wk,
            e: spec.e,
            f: spec.f,
        }
    }
}

impl AttentionSpec {
    pub fn new(a: Matrix, v: Matrix) -> Result<Self> {
        Self::multi_head(vec![HeadSpec { a, v }])
    }

    /// All heads must share one shape.
    pub fn multi_head(heads: Vec<HeadSpec>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| LayoutError::Shape("at least one head is required".into()))?;
        let (d, d2) = first.a.shape();
        if d != d2 {
            return Err(LayoutError::Shape(format!(
                "A must be square, got {d}x{d2}"
            )));
        }
        if first.v.rows() != d {
            return Err(LayoutError::Shape(format!(
                "V.rows ({}) must equal A.rows ({d})",
                first.v.rows()
            )));
        }
        for (h, head) in heads.iter().enumerate() {
            if head.a.shape() != first.a.shape() || head.v.shape() != first.v.shape() {
                return Err(LayoutError::Shape(format!(
                    "head {} has a different shape from head 1",
                    h + 1
                )));
            }
        }
        Ok(Self {
            heads,
            w1: None,
            w2: None,
            wq: None,
            wk: None,
            e: None,
            f: None,
        })
    }

    pub fn with_ffn(mut self, w1: Matrix, w2: Matrix) -> Result<Self> {
        if w1.rows() != self.d_v() {
            return Err(LayoutError::Shape(format!(
                "W1.rows ({}) must equal V.cols ({})",
                w1.rows(),
                self.d_v()
            )));
        }
        if w2.rows() != w1.cols() {
            return Err(LayoutError::Shape(format!(
                "W2.rows ({}) must equal W1.cols ({})",
                w2.rows(),
                w1.cols()
            )));
        }
        self.w1 = Some(w1);
        self.w2 = Some(w2);
        Ok(self)
    }

    pub fn heads(&self) -> &[HeadSpec] {
        &self.heads
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    /// First head's score matrix.
    pub fn a(&self) -> &Matrix {
        &self.heads[0].a
    }

    pub fn v(&self) -> &Matrix {
        &self.heads[0].v
    }

    pub fn d(&self) -> usize {
        self.heads[0].a.rows()
    }

    pub fn d_v(&self) -> usize {
        self.heads[0].v.cols()
    }

    /// Optional matrices beyond `A` and `V`, in encoding order.
    pub fn extras(&self) -> Vec<(&'static str, &Matrix)> {
        [
            ("W1", &self.w1),
            ("W2", &self.w2),
            ("WQ", &self.wq),
            ("WK", &self.wk),
            ("E", &self.e),
            ("F", &self.f),
        ]
        .into_iter()
        .filter_map(|(name, m)| m.as_ref().map(|m| (name, m)))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layout(&self) -> FlatLayout {
        FlatLayout::row_major(&[self.rows, self.cols]).expect("segments are non-empty")
    }
}

/// Where each matrix of an encoded input lives.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentMap {
    segments: Vec<Segment>,
}

impl SegmentMap {
    fn push(&mut self, name: String, m: &Matrix) {
        let offset = self.total_len();
        self.segments.push(Segment {
            name,
            offset,
            rows: m.rows(),
            cols: m.cols(),
        });
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    /// Reads a segment back out of an encoded sequence.
    pub fn read(&self, seq: &Sequence, name: &str) -> Result<Matrix> {
        let seg = self
            .get(name)
            .ok_or_else(|| LayoutError::UnknownSegment(name.to_string()))?;
        if seq.len() < seg.offset + seg.len() {
            return Err(LayoutError::LengthMismatch {
                expected: self.total_len(),
                found: seq.len(),
            });
        }
        let values = seq.values();
        Matrix::new(
            seg.rows,
            seg.cols,
            values[seg.offset..seg.offset + seg.len()].to_vec(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub sequence: Sequence,
    pub segments: SegmentMap,
}

/// `flatten(X) ∥ flatten(A) ∥ flatten(V)`. With several heads, `X` is
/// replicated for each of them; see [`encode_heads`].
pub fn encode_pair(spec: &AttentionSpec, x: &Matrix) -> Result<EncodedInput> {
    let xs = vec![x.clone(); spec.head_count()];
    encode_heads(spec, &xs)
}

/// Multi-head stacking `(∥_h X⁽ʰ⁾) ∥ (∥_h A⁽ʰ⁾) ∥ (∥_h V⁽ʰ⁾)`, followed by
/// whichever of `W1`, `W2`, `WQ`, `WK`, `E`, `F` the spec carries.
///
/// Segment names are `X`, `A`, `V` for a single head and `X1`, `A1`, .. for
/// several.
pub fn encode_heads(spec: &AttentionSpec, xs: &[Matrix]) -> Result<EncodedInput> {
    if xs.len() != spec.head_count() {
        return Err(LayoutError::Shape(format!(
            "{} inputs given for {} heads",
            xs.len(),
            spec.head_count()
        )));
    }
    for (h, x) in xs.iter().enumerate() {
        if x.cols() != spec.d() {
            return Err(LayoutError::Shape(format!(
                "X.cols ({}) must equal A.rows ({}) for head {}",
                x.cols(),
                spec.d(),
                h + 1
            )));
        }
        if x.rows() != xs[0].rows() {
            return Err(LayoutError::Shape(
                "all head inputs must have the same rows".into(),
            ));
        }
    }
    let name = |base: &str, h: usize| {
        if xs.len() == 1 {
            base.to_string()
        } else {
            format!("{base}{}", h + 1)
        }
    };
    let mut segments = SegmentMap::default();
    let mut values = Vec::new();
    let mut push = |segments: &mut SegmentMap, label: String, m: &Matrix| {
        segments.push(label, m);
        values.extend_from_slice(m.data());
    };
    for (h, x) in xs.iter().enumerate() {
        push(&mut segments, name("X", h), x);
    }
    for (h, head) in spec.heads.iter().enumerate() {
        push(&mut segments, name("A", h), &head.a);
    }
    for (h, head) in spec.heads.iter().enumerate() {
        push(&mut segments, name("V", h), &head.v);
    }
    for (label, m) in spec.extras() {
        push(&mut segments, label.to_string(), m);
    }
    Ok(EncodedInput {
        sequence: Sequence::from_f64s(&values).expect("non-empty"),
        segments,
    })
}

/// Solves `n·d + d² = length` for the model dimension when `d == d_v`.
pub fn infer_dims(n: usize, length: usize) -> Result<usize> {
    let disc = (n * n + 4 * length) as f64;
    let root = disc.sqrt().round() as usize;
    if root * root != n * n + 4 * length || root < n || (root - n) % 2 != 0 || root == n {
        return Err(LayoutError::NoIntegralDims { n, length });
    }
    Ok((root - n) / 2)
}

/// Keeps the first `keep` tokens; everything dropped must be exactly zero.
///
/// This is the feed-forward projection `W[i][j] = 1` iff `i == j < keep`.
pub fn contract(seq: &Sequence, keep: usize) -> Result<Sequence> {
    if keep == 0 || keep > seq.len() {
        return Err(LayoutError::KeepOutOfRange {
            keep,
            len: seq.len(),
        });
    }
    if let Some((position, t)) = seq
        .tokens()
        .iter()
        .enumerate()
        .skip(keep)
        .find(|(_, t)| t.value() != 0.0)
    {
        return Err(LayoutError::NonZeroSuffix {
            position,
            value: t.value(),
        });
    }
    Ok(Sequence::new(seq.tokens()[..keep].to_vec()).expect("keep >= 1"))
}

/// [`contract`] applied to each of the equal-length blocks of `seq`.
pub fn contract_blocks(seq: &Sequence, block: usize, keep: usize) -> Result<Sequence> {
    if block == 0 || seq.len() % block != 0 {
        return Err(LayoutError::LengthMismatch {
            expected: block,
            found: seq.len(),
        });
    }
    let mut tokens: Vec<TokenValue> = Vec::with_capacity(seq.len() / block * keep);
    for (b, chunk) in seq.tokens().chunks(block).enumerate() {
        let part = Sequence::new(chunk.to_vec()).expect("block >= 1");
        let kept = contract(&part, keep).map_err(|e| match e {
            LayoutError::NonZeroSuffix { position, value } => LayoutError::NonZeroSuffix {
                position: b * block + position,
                value,
            },
            other => other,
        })?;
        tokens.extend_from_slice(kept.tokens());
    }
    Ok(Sequence::new(tokens).expect("non-empty"))
}

/// Pads an order-(m,e,e_v) instance into order (n,d,d_v): `X` and `V` are
/// zero-padded and `A` becomes `blockdiag(A, I)`.
pub fn embed_pad(
    spec: &AttentionSpec,
    x: &Matrix,
    target: (usize, usize, usize),
) -> Result<(AttentionSpec, Matrix)> {
    let (n, d, d_v) = target;
    let (m, e, e_v) = (x.rows(), spec.d(), spec.d_v());
    if x.cols() != e {
        return Err(LayoutError::Shape(format!(
            "X.cols ({}) must equal A.rows ({e})",
            x.cols()
        )));
    }
    if n < m || d < e || d_v < e_v {
        return Err(LayoutError::Shape(format!(
            "target ({n},{d},{d_v}) is smaller than source ({m},{e},{e_v})"
        )));
    }
    let x_pad = Matrix::from_fn(n, d, |i, j| if i < m && j < e { x.get(i, j) } else { 0.0 });
    let mut heads = Vec::with_capacity(spec.head_count());
    for head in spec.heads() {
        let a = Matrix::from_fn(d, d, |i, j| match (i < e, j < e) {
            (true, true) => head.a.get(i, j),
            (false, false) if i == j => 1.0,
            _ => 0.0,
        });
        let v = Matrix::from_fn(d, d_v, |i, j| {
            if i < e && j < e_v {
                head.v.get(i, j)
            } else {
                0.0
            }
        });
        heads.push(HeadSpec { a, v });
    }
    Ok((AttentionSpec::multi_head(heads)?, x_pad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn flatten_2x2() {
        let a = array![[1.0, 2.0], [3.0, 4.0]].into_dyn();
        let (seq, layout) = flatten(&a).unwrap();
        assert_eq!(seq.values(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(layout.strides(), &[2, 1]);
    }

    #[test]
    fn flat_index_of_rectangular_matrix() {
        let layout = FlatLayout::row_major(&[3, 5]).unwrap();
        for i0 in 0..3 {
            for i1 in 0..5 {
                assert_eq!(layout.flat_index(&[i0, i1]), 5 * i0 + i1);
            }
        }
    }

    #[test]
    fn flat_index_3d_enumeration() {
        let layout = FlatLayout::row_major(&[2, 2, 2]).unwrap();
        let mut expected = 0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(layout.flat_index(&[i, j, k]), expected);
                    expected += 1;
                }
            }
        }
        assert_eq!(layout.flat_index(&[1, 0, 1]), 5);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let a = ArrayD::<f64>::zeros(IxDyn(&[2, 0]));
        assert_eq!(flatten(&a).unwrap_err(), LayoutError::EmptyAxis { axis: 1 });
    }

    #[test]
    fn unflatten_length_mismatch() {
        let layout = FlatLayout::row_major(&[2, 2]).unwrap();
        assert!(unflatten(&Sequence::from_ints(&[1, 2, 3]), &layout).is_err());
    }

    #[test]
    fn encode_single_head() {
        let x = Matrix::identity(2);
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let v = Matrix::from_rows(&[[5.0], [6.0]]);
        let spec = AttentionSpec::new(a, v).unwrap();
        let enc = encode_pair(&spec, &x).unwrap();
        assert_eq!(
            enc.sequence.values(),
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
        assert_eq!(enc.segments.get("V").unwrap().offset, 8);
    }

    #[test]
    fn encode_two_heads_stacking_order() {
        let m = |v: f64| Matrix::from_rows(&[[v]]);
        let spec = AttentionSpec::multi_head(vec![
            HeadSpec {
                a: m(3.0),
                v: m(5.0),
            },
            HeadSpec {
                a: m(4.0),
                v: m(6.0),
            },
        ])
        .unwrap();
        let enc = encode_heads(&spec, &[m(1.0), m(2.0)]).unwrap();
        assert_eq!(enc.sequence.values(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(enc.segments.read(&enc.sequence, "A2").unwrap(), m(4.0));
    }

    #[test]
    fn encode_rejects_mismatched_x() {
        let spec = AttentionSpec::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        assert!(matches!(
            encode_pair(&spec, &Matrix::zeros(2, 3)),
            Err(LayoutError::Shape(_))
        ));
    }

    #[test]
    fn spec_shape_validation() {
        assert!(AttentionSpec::new(Matrix::zeros(2, 3), Matrix::zeros(2, 2)).is_err());
        assert!(AttentionSpec::new(Matrix::zeros(2, 2), Matrix::zeros(3, 2)).is_err());
        let spec = AttentionSpec::new(Matrix::zeros(2, 2), Matrix::zeros(2, 3)).unwrap();
        assert!(spec
            .clone()
            .with_ffn(Matrix::zeros(2, 4), Matrix::zeros(4, 1))
            .is_err());
        assert!(spec
            .with_ffn(Matrix::zeros(3, 4), Matrix::zeros(4, 1))
            .is_ok());
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"A": {"rows": 1, "cols": 1, "data": [2.0]},
                       "V": {"rows": 1, "cols": 2, "data": [1.0, 3.0]}}"#;
        let spec: AttentionSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.d_v(), 2);
        let back: AttentionSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"rows": 2, "cols": 2, "data": [1.0]}"#;
        assert!(serde_json::from_str::<Matrix>(bad).is_err());
    }

    #[test]
    fn contract_examples() {
        let s = Sequence::from_ints(&[9, 8, 7, 0, 0]);
        assert_eq!(contract(&s, 3).unwrap(), Sequence::from_ints(&[9, 8, 7]));
        assert_eq!(contract(&s, 5).unwrap(), s);
        let err = contract(&Sequence::from_ints(&[1, 2, 3, 4]), 3).unwrap_err();
        assert_eq!(
            err,
            LayoutError::NonZeroSuffix {
                position: 3,
                value: 4.0
            }
        );
    }

    #[test]
    fn contract_per_block() {
        let s = Sequence::from_ints(&[1, 2, 0, 3, 4, 0]);
        assert_eq!(
            contract_blocks(&s, 3, 2).unwrap(),
            Sequence::from_ints(&[1, 2, 3, 4])
        );
        let err = contract_blocks(&Sequence::from_ints(&[1, 0, 0, 3, 4, 5]), 3, 2).unwrap_err();
        assert_eq!(
            err,
            LayoutError::NonZeroSuffix {
                position: 5,
                value: 5.0
            }
        );
    }

    #[test]
    fn infer_dims_solves_quadratic() {
        // n = 2, d = 3: 6 + 9 = 15.
        assert_eq!(infer_dims(2, 15).unwrap(), 3);
        assert_eq!(infer_dims(4, 32).unwrap(), 4);
        assert!(infer_dims(2, 14).is_err());
    }

    #[test]
    fn embed_pad_examples() {
        let spec =
            AttentionSpec::new(Matrix::from_rows(&[[7.0]]), Matrix::from_rows(&[[2.0]])).unwrap();
        let x = Matrix::from_rows(&[[5.0]]);
        let (same, x_same) = embed_pad(&spec, &x, (1, 1, 1)).unwrap();
        assert_eq!((same, x_same), (spec.clone(), x.clone()));

        let (big, x_big) = embed_pad(&spec, &x, (2, 2, 2)).unwrap();
        assert_eq!(big.a(), &Matrix::from_rows(&[[7.0, 0.0], [0.0, 1.0]]));
        assert_eq!(x_big, Matrix::from_rows(&[[5.0, 0.0], [0.0, 0.0]]));
        assert_eq!(big.v(), &Matrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]));

        assert!(embed_pad(&spec, &x, (0, 1, 1)).is_err());
    }
}
